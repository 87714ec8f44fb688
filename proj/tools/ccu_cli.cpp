// ccu: train, certify, attack and evaluate calibrated classifiers.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ccu/attack.hpp"
#include "ccu/certify.hpp"
#include "ccu/data.hpp"
#include "ccu/errors.hpp"
#include "ccu/eval.hpp"
#include "ccu/model_io.hpp"
#include "ccu/training.hpp"

namespace fs = std::filesystem;
using namespace ccu;

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Dataset load_data(const std::string& path, bool labeled, const std::string& labels_path = {}) {
  if (fs::path(path).extension() == ".csv") return load_csv(path, labeled);
  if (labeled && labels_path.empty()) throw InvalidArgument(path + ": IDX input needs --in-labels");
  return labels_path.empty() ? load_idx(path) : load_idx(path, fs::path(labels_path));
}

// Unlabeled use of a file that may carry a trailing label column.
Dataset load_points(const std::string& path, std::size_t dim) {
  Dataset d = load_data(path, false);
  if (d.dim() == dim + 1 && fs::path(path).extension() == ".csv") d = load_csv(path, true);
  if (d.dim() != dim) throw InvalidArgument(path + ": dimension " + std::to_string(d.dim()) + ", model expects " + std::to_string(dim));
  return d;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  return out;
}

std::string join(const std::vector<std::string>& parts, char sep = ' ') {
  std::string s;
  for (const auto& p : parts) s += (s.empty() ? "" : std::string(1, sep)) + p;
  return s;
}

std::vector<std::size_t> parse_widths(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    out.push_back(std::stoul(tok));
  }
  return out;
}

// ---------------------------------------------------------------- certificates

struct CertRecord {
  std::string id;
  std::string status;  // "ok" or "none"
  double radius = 0.0;
  double bound = 0.0;
  double log_b = 0.0;
  double nu = 0.0;
  std::string model_fp;
  Vector x0;
};

void write_cert_header(std::ostream& out, std::size_t d) {
  out << "id,status,radius,bound,log_b,nu,model";
  for (std::size_t j = 0; j < d; ++j) out << ",x" << j;
  out << '\n';
}

void write_cert(std::ostream& out, const CertRecord& c) {
  out << c.id << ',' << c.status << ',' << fmt(c.radius) << ',' << fmt(c.bound) << ',' << fmt(c.log_b)
      << ',' << fmt(c.nu) << ',' << c.model_fp;
  for (Eigen::Index j = 0; j < c.x0.size(); ++j) out << ',' << fmt(c.x0[j]);
  out << '\n';
}

std::vector<CertRecord> read_certs(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  std::vector<CertRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#' || line.starts_with("id,")) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) f.push_back(tok);
    if (f.size() < 8) throw ParseError(path + ":" + std::to_string(line_no) + ": too few fields");
    CertRecord c;
    try {
      c.id = f[0];
      c.status = f[1];
      c.radius = std::stod(f[2]);
      c.bound = std::stod(f[3]);
      c.log_b = std::stod(f[4]);
      c.nu = std::stod(f[5]);
      c.model_fp = f[6];
      c.x0.resize(static_cast<Eigen::Index>(f.size() - 7));
      for (std::size_t j = 7; j < f.size(); ++j) c.x0[static_cast<Eigen::Index>(j - 7)] = std::stod(f[j]);
    } catch (const std::logic_error&) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": bad number");
    }
    out.push_back(std::move(c));
  }
  return out;
}

// ---------------------------------------------------------------- commands

struct TrainArgs {
  std::string in, in_labels, out, model, log, hidden = "128,128";
  std::size_t k = 20, k_out = 0;
  double lambda = 1.0, lr = 0.1, lr_gmm = -1.0;
  int epochs = 100, checkpoint_every = 0;
  std::size_t batch = 128;
  std::uint64_t seed = 0;
  bool freeze_out = false;
};

int cmd_train(const TrainArgs& a, const std::string& echo) {
  const Dataset in = load_data(a.in, true, a.in_labels);
  const Dataset out = load_data(a.out, false);
  PipelineConfig cfg;
  cfg.hidden = parse_widths(a.hidden);
  cfg.k_in = a.k;
  cfg.k_out = a.k_out ? a.k_out : a.k;
  cfg.lambda = a.lambda;
  cfg.train.epochs = a.epochs;
  cfg.train.batch_size = a.batch;
  cfg.train.lr_classifier = a.lr;
  cfg.train.lr_gmm = a.lr_gmm;
  cfg.train.seed = a.seed;
  cfg.train.freeze_out_centroids = a.freeze_out;
  cfg.train.validate();

  const ModelMeta meta{{"seed", std::to_string(a.seed)},
                       {"domain", in.domain == Domain::unit_box ? "unit_box" : "unbounded"},
                       {"config", echo}};
  std::optional<std::ofstream> log;
  if (!a.log.empty()) {
    log = open_out(a.log);
    *log << "epoch,objective,train_acc,mean_out_conf\n";
  }
  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochRecord& r, const CcuModel& m) {
    const std::string row = std::to_string(r.epoch) + ',' + fmt(r.objective) + ',' + fmt(r.train_accuracy) +
                            ',' + fmt(r.mean_out_confidence);
    if (log) *log << row << '\n' << std::flush;
    std::cerr << "epoch " << row << '\n';
    if (a.checkpoint_every > 0 && (r.epoch + 1) % a.checkpoint_every == 0) {
      save_model(a.model + ".epoch" + std::to_string(r.epoch + 1), m, meta);
    }
  };
  try {
    const TrainResult res = fit_ccu(in, out, cfg, nullptr, hooks);
    save_model(a.model, res.model, meta);
    std::cout << "model " << a.model << " fingerprint " << fingerprint_hex(model_fingerprint(res.model)) << '\n';
  } catch (const TrainingDiverged& e) {
    const std::string path = a.model + ".last_good";
    save_model(path, e.last_good(), meta);
    std::cerr << "training diverged at epoch " << e.epoch() << "; last good model written to " << path << '\n';
    throw;
  }
  return 0;
}

struct CertifyArgs {
  std::string model, seeds, output;
  std::vector<std::string> audit;
  std::size_t uniform_noise = 0;
  double noise_low = 0.0, noise_high = 1.0, nu = 1.1;
  std::uint64_t seed = 0;
};

int cmd_certify(const CertifyArgs& a) {
  const LoadedModel lm = load_model(a.model);
  const CcuModel& model = lm.model;
  const double m = static_cast<double>(model.num_classes());
  if (!(a.nu > 1.0 && a.nu < m)) {
    throw InvalidArgument("--nu must lie in (1, " + std::to_string(model.num_classes()) + ")");
  }
  Dataset seeds;
  if (!a.seeds.empty()) {
    seeds = load_points(a.seeds, model.dim());
  } else if (a.uniform_noise > 0) {
    seeds = uniform_noise(a.uniform_noise, model.dim(), a.seed);
    seeds.points = (seeds.points.array() * (a.noise_high - a.noise_low) + a.noise_low).matrix();
  } else {
    throw InvalidArgument("certify: give --seeds or --uniform-noise");
  }
  if (seeds.dim() != model.dim()) throw InvalidArgument("certify: seed dimension does not match the model");
  std::vector<Dataset> audit;
  for (const auto& p : a.audit) audit.push_back(load_points(p, model.dim()));

  std::ofstream out = open_out(a.output);
  write_cert_header(out, model.dim());
  const std::string fp = fingerprint_hex(lm.fingerprint);
  std::size_t ok = 0, none = 0, contained = 0;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    CertRecord rec;
    rec.id = std::to_string(i);
    rec.nu = a.nu;
    rec.model_fp = fp;
    rec.x0 = seeds.point(i);
    try {
      const Certificate c = certified_radius(model, rec.x0, a.nu, lm.fingerprint);
      rec.status = "ok";
      rec.radius = c.radius;
      rec.bound = c.bound;
      rec.log_b = c.log_b;
      ++ok;
      for (std::size_t k = 0; k < audit.size(); ++k) {
        const std::size_t n = ball_contains_points(model.metric(), rec.x0, c.radius, audit[k].points);
        if (n > 0) std::cerr << "audit: seed " << i << " ball contains " << n << " point(s) of " << a.audit[k] << '\n';
        contained += n;
      }
    } catch (const NoCertificate& e) {
      rec.status = "none";
      rec.log_b = e.log_b0();
      rec.bound = bound_from_log_b(e.log_b0(), model.lambda(), model.num_classes());
      ++none;
    }
    write_cert(out, rec);
  }
  std::cout << "certified " << ok << " no_certificate " << none;
  if (!audit.empty()) std::cout << " audit_contained " << contained;
  std::cout << '\n';
  return 0;
}

struct AttackArgs {
  std::string model, certificates, output, in, dump;
  int steps = 100, restarts = 5;
  std::uint64_t seed = 0;
  std::string box = "auto";
};

int cmd_attack(const AttackArgs& a) {
  const LoadedModel lm = load_model(a.model);
  const CcuModel& model = lm.model;
  const auto certs = read_certs(a.certificates);
  bool box = false;
  if (a.box == "auto") box = lm.meta_value("domain") == "unit_box";
  else if (a.box == "on") box = true;
  else if (a.box != "off") throw InvalidArgument("--box must be auto, on or off");

  AttackConfig cfg;
  cfg.steps = a.steps;
  cfg.restarts = a.restarts;
  cfg.seed = a.seed;
  cfg.validate();

  std::ofstream out = open_out(a.output);
  std::optional<std::ofstream> dump;
  if (!a.dump.empty()) dump = open_out(a.dump);
  out << "id,radius,bound,confidence,residual,violation\n";
  const std::string fp = fingerprint_hex(lm.fingerprint);
  std::vector<double> attacked;
  std::size_t violations = 0;
  std::uint64_t index = 0;
  for (const auto& c : certs) {
    ++index;
    if (c.status != "ok" || !(c.radius > 0.0)) continue;
    if (c.model_fp != fp) throw InvalidArgument("certificate " + c.id + " was issued for another model");
    if (static_cast<std::size_t>(c.x0.size()) != model.dim()) throw InvalidArgument("certificate " + c.id + ": wrong dimension");
    AttackConfig rc = cfg;
    rc.seed = cfg.seed + 0x9e3779b97f4a7c15ULL * index;
    const AttackResult r = pgd_max_confidence(model, c.x0, c.radius, box, rc);
    const bool violated = r.best_confidence > c.bound + 1e-9;
    violations += violated ? 1 : 0;
    attacked.push_back(r.best_confidence);
    out << c.id << ',' << fmt(c.radius) << ',' << fmt(c.bound) << ',' << fmt(r.best_confidence) << ','
        << fmt(r.feasibility_residual) << ',' << (violated ? 1 : 0) << '\n';
    if (dump) {
      *dump << c.id;
      for (Eigen::Index j = 0; j < r.best_point.size(); ++j) *dump << ',' << fmt(r.best_point[j]);
      *dump << '\n';
    }
  }
  out << "# violations " << violations << '\n';
  std::cout << "attacked " << attacked.size() << " violations " << violations;
  if (!a.in.empty() && !attacked.empty()) {
    const Dataset in = load_points(a.in, model.dim());
    std::vector<double> in_conf(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) in_conf[i] = model.confidence(in.point(i));
    const double sr = success_rate(attacked, in_conf);
    const double a_uc = auc(in_conf, attacked);
    out << "# success_rate " << fmt(sr) << "\n# auc " << fmt(a_uc) << '\n';
    std::cout << " sr " << sr << " auc " << a_uc;
  }
  std::cout << '\n';
  return violations == 0 ? 0 : 3;
}

struct EvalArgs {
  std::string model, in, in_labels, output;
  std::vector<std::string> ood;
};

int cmd_eval(const EvalArgs& a) {
  const LoadedModel lm = load_model(a.model);
  const CcuModel& model = lm.model;
  const Dataset in = load_data(a.in, true, a.in_labels);
  const double te = test_error(model, in);
  std::vector<double> in_conf(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) in_conf[i] = model.confidence(in.point(i));

  std::optional<std::ofstream> out;
  if (!a.output.empty()) {
    out = open_out(a.output);
    *out << "dataset,n_in,n_out,test_error,auc,aupr\n";
  }
  std::printf("test error  %.4f  (%zu in-distribution samples)\n", te, in.size());
  std::printf("%-24s %8s %8s %8s\n", "ood set", "n", "AUC", "AUPR");
  for (const auto& path : a.ood) {
    const Dataset ood = load_points(path, model.dim());
    std::vector<double> ood_conf(ood.size());
    for (std::size_t i = 0; i < ood.size(); ++i) ood_conf[i] = model.confidence(ood.point(i));
    EvalReport r;
    r.test_error = te;
    r.auc = auc(in_conf, ood_conf);
    r.aupr = aupr(in_conf, ood_conf);
    r.n_in = in.size();
    r.n_out = ood.size();
    std::printf("%-24s %8zu %8.2f %8.2f\n", fs::path(path).filename().string().c_str(), r.n_out, 100.0 * r.auc,
                100.0 * r.aupr);
    if (out) {
      *out << path << ',' << r.n_in << ',' << r.n_out << ',' << fmt(r.test_error) << ',' << fmt(r.auc) << ','
           << fmt(r.aupr) << '\n';
    }
  }
  return 0;
}

struct GridArgs {
  std::string model, output;
  std::vector<double> bounds{-40.0, 40.0, -40.0, 40.0};
  std::size_t resolution = 200;
};

int cmd_plot_grid(const GridArgs& a) {
  const LoadedModel lm = load_model(a.model);
  const CcuModel& model = lm.model;
  if (model.dim() != 2) throw InvalidArgument("plot-grid: model dimension must be 2");
  if (a.bounds.size() != 4 || !(a.bounds[1] > a.bounds[0]) || !(a.bounds[3] > a.bounds[2])) {
    throw InvalidArgument("plot-grid: --bounds needs xmin,xmax,ymin,ymax with min < max");
  }
  if (a.resolution < 2) throw InvalidArgument("plot-grid: --resolution must be >= 2");
  const std::size_t n = a.resolution;
  const double inv_m = 1.0 / static_cast<double>(model.num_classes());
  std::ofstream csv = open_out(a.output + ".csv");
  csv << "x,y,confidence\n";
  std::string pixels(n * n, '\0');
  Vector x(2);
  for (std::size_t r = 0; r < n; ++r) {
    // Row 0 is the top of the image (largest y).
    x[1] = a.bounds[3] - (a.bounds[3] - a.bounds[2]) * static_cast<double>(r) / static_cast<double>(n - 1);
    for (std::size_t c = 0; c < n; ++c) {
      x[0] = a.bounds[0] + (a.bounds[1] - a.bounds[0]) * static_cast<double>(c) / static_cast<double>(n - 1);
      const double conf = model.confidence(x);
      csv << fmt(x[0]) << ',' << fmt(x[1]) << ',' << fmt(conf) << '\n';
      const double g = std::clamp((conf - inv_m) / (1.0 - inv_m), 0.0, 1.0);
      pixels[r * n + c] = static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * g)));
    }
  }
  std::ofstream pgm(a.output + ".pgm", std::ios::binary);
  if (!pgm) throw Error("cannot write " + a.output + ".pgm");
  pgm << "P5\n" << n << ' ' << n << "\n255\n";
  pgm.write(pixels.data(), static_cast<std::streamsize>(pixels.size()));
  std::cout << "wrote " << a.output << ".csv and " << a.output << ".pgm\n";
  return 0;
}

struct GenerateArgs {
  std::string kind, output, images;
  std::size_t n = 1000, d = 2;
  double noise = 0.1, low = 0.0, high = 1.0;
  std::uint64_t seed = 0;
};

int cmd_generate(const GenerateArgs& a) {
  Dataset d;
  if (a.kind == "two-moons") {
    d = two_moons(a.n, a.noise, a.seed);
  } else if (a.kind == "uniform") {
    d = uniform_noise(a.n, a.d, a.seed);
    if (a.low != 0.0 || a.high != 1.0) {
      if (!(a.high > a.low)) throw InvalidArgument("generate: --high must exceed --low");
      d.points = (d.points.array() * (a.high - a.low) + a.low).matrix();
      d.domain = Domain::unbounded;
    }
  } else if (a.kind == "permuted-noise") {
    if (a.images.empty()) throw InvalidArgument("generate: permuted-noise needs --images (IDX)");
    d = permuted_smoothed_noise(load_idx(a.images), a.seed);
  } else {
    throw InvalidArgument("generate: unknown kind '" + a.kind + "'");
  }
  save_csv(a.output, d);
  std::cout << "wrote " << d.size() << " samples to " << a.output << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Certifiably calibrated classifiers: train, certify, attack, evaluate"};
  app.require_subcommand(1);

  std::vector<std::string> argv_echo(argv + 1, argv + argc);

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Fit metric and mixtures, train, write a model file");
  train->add_option("--in", ta.in, "Labeled in-distribution data (CSV, label last; or IDX images)")->required();
  train->add_option("--in-labels", ta.in_labels, "IDX label file for --in");
  train->add_option("--out", ta.out, "Out-distribution data (CSV or IDX)")->required();
  train->add_option("--model", ta.model, "Output model file")->required();
  train->add_option("--k", ta.k, "Components per mixture")->capture_default_str();
  train->add_option("--k-out", ta.k_out, "Out-mixture components (default: --k)");
  train->add_option("--hidden", ta.hidden, "Hidden layer widths, comma separated")->capture_default_str();
  train->add_option("--lambda", ta.lambda, "Prior odds of the out-distribution")->capture_default_str();
  train->add_option("--epochs", ta.epochs)->capture_default_str();
  train->add_option("--batch", ta.batch)->capture_default_str();
  train->add_option("--lr", ta.lr, "Classifier learning rate")->capture_default_str();
  train->add_option("--lr-gmm", ta.lr_gmm, "Mixture learning rate (default 1e-5 * lr / 0.1)");
  train->add_option("--seed", ta.seed)->capture_default_str();
  train->add_flag("--freeze-out-centroids", ta.freeze_out);
  train->add_option("--log", ta.log, "Epoch log CSV");
  train->add_option("--checkpoint-every", ta.checkpoint_every, "Write <model>.epochN every N epochs");

  CertifyArgs ca;
  auto* certify = app.add_subcommand("certify", "Certified radius per seed point");
  certify->add_option("--model", ca.model)->required();
  certify->add_option("--seeds", ca.seeds, "Seed points (CSV)");
  certify->add_option("--uniform-noise", ca.uniform_noise, "Draw this many uniform seeds instead");
  certify->add_option("--noise-low", ca.noise_low)->capture_default_str();
  certify->add_option("--noise-high", ca.noise_high)->capture_default_str();
  certify->add_option("--nu", ca.nu, "Bound target nu/M")->capture_default_str();
  certify->add_option("--seed", ca.seed)->capture_default_str();
  certify->add_option("--audit", ca.audit, "Datasets that must not fall inside certified balls");
  certify->add_option("-o,--output", ca.output, "Certificate file")->required();

  AttackArgs aa;
  auto* attack = app.add_subcommand("attack", "PGD inside every certified ball");
  attack->add_option("--model", aa.model)->required();
  attack->add_option("--certificates", aa.certificates)->required();
  attack->add_option("--steps", aa.steps)->capture_default_str();
  attack->add_option("--restarts", aa.restarts)->capture_default_str();
  attack->add_option("--seed", aa.seed)->capture_default_str();
  attack->add_option("--box", aa.box, "Clip to [0,1]^d: auto (from model), on, off")->capture_default_str();
  attack->add_option("--in", aa.in, "In-distribution data for success rate and AUC");
  attack->add_option("--dump", aa.dump, "Write attacked points (CSV)");
  attack->add_option("-o,--output", aa.output, "Report CSV")->required();

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Test error, AUC and AUPR");
  eval->add_option("--model", ea.model)->required();
  eval->add_option("--in", ea.in, "Labeled in-distribution test data")->required();
  eval->add_option("--in-labels", ea.in_labels);
  eval->add_option("--ood", ea.ood, "Out-distribution datasets")->required();
  eval->add_option("-o,--output", ea.output, "Report CSV");

  GridArgs ga;
  auto* grid = app.add_subcommand("plot-grid", "Confidence on a 2-d grid (CSV + PGM)");
  grid->add_option("--model", ga.model)->required();
  grid->add_option("--bounds", ga.bounds, "xmin xmax ymin ymax")->expected(4)->delimiter(',');
  grid->add_option("--resolution", ga.resolution)->capture_default_str();
  grid->add_option("-o,--output", ga.output, "Output prefix")->required();

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "Synthetic datasets");
  generate->add_option("--kind", gen.kind, "two-moons, uniform or permuted-noise")->required();
  generate->add_option("--n", gen.n)->capture_default_str();
  generate->add_option("--d", gen.d)->capture_default_str();
  generate->add_option("--noise", gen.noise, "Two-moons jitter")->capture_default_str();
  generate->add_option("--low", gen.low)->capture_default_str();
  generate->add_option("--high", gen.high)->capture_default_str();
  generate->add_option("--images", gen.images, "IDX images for permuted-noise");
  generate->add_option("--seed", gen.seed)->capture_default_str();
  generate->add_option("-o,--output", gen.output)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return cmd_train(ta, join(argv_echo));
    if (*certify) return cmd_certify(ca);
    if (*attack) return cmd_attack(aa);
    if (*eval) return cmd_eval(ea);
    if (*grid) return cmd_plot_grid(ga);
    if (*generate) return cmd_generate(gen);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
