#include "ccu/model_io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>

#include "ccu/errors.hpp"
#include "hash.hpp"

namespace ccu {
namespace {

void put(std::string& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.16e", v);
  out += buf;
}

void put_row(std::string& out, const double* v, Eigen::Index n) {
  for (Eigen::Index i = 0; i < n; ++i) {
    if (i) out += ' ';
    put(out, v[i]);
  }
  out += '\n';
}

void put_matrix(std::string& out, const RowMatrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) put_row(out, m.row(r).data(), m.cols());
}

void put_gmm(std::string& out, const char* tag, const GaussianMixture& g) {
  out += tag;
  out += ' ' + std::to_string(g.size()) + ' ' + fingerprint_hex(g.metric().fingerprint()) + '\n';
  put_matrix(out, g.centroids());
  put_row(out, g.scales().data(), g.scales().size());
}

std::string parameter_text(const CcuModel& model) {
  std::string out;
  const auto d = static_cast<Eigen::Index>(model.dim());
  out += "num_classes " + std::to_string(model.num_classes()) + '\n';
  out += "dim " + std::to_string(d) + '\n';
  out += "lambda ";
  put(out, model.lambda());
  out += '\n';
  const MetricTransform& metric = model.metric();
  out += "metric " + fingerprint_hex(metric.fingerprint()) + '\n';
  put_row(out, metric.eigenvalues().data(), d);
  const RowMatrix u = metric.eigenvectors();
  put_matrix(out, u);
  put_gmm(out, "in_gmm", model.in_gmm());
  put_gmm(out, "out_gmm", model.out_gmm());
  const auto& layers = model.classifier().layers();
  out += "classifier " + std::to_string(layers.size()) + '\n';
  for (const auto& layer : layers) {
    out += "layer " + std::to_string(layer.weight.rows()) + ' ' + std::to_string(layer.weight.cols()) + '\n';
    put_matrix(out, layer.weight);
    put_row(out, layer.bias.data(), layer.bias.size());
  }
  return out;
}

class Reader {
 public:
  explicit Reader(std::string_view text) : text_(text) {}

  bool done() const { return pos_ >= text_.size(); }
  std::size_t line_no() const { return line_; }

  std::string_view peek_line() const {
    const std::size_t end = text_.find('\n', pos_);
    return text_.substr(pos_, end == std::string_view::npos ? std::string_view::npos : end - pos_);
  }

  std::string_view next_line() {
    if (done()) fail("unexpected end of file");
    const std::string_view line = peek_line();
    pos_ += line.size() + 1;
    ++line_;
    return line;
  }

  // Splits a line into whitespace-separated tokens.
  static std::vector<std::string_view> tokens(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && line[i] == ' ') ++i;
      std::size_t j = i;
      while (j < line.size() && line[j] != ' ') ++j;
      if (j > i) out.push_back(line.substr(i, j - i));
      i = j;
    }
    return out;
  }

  std::vector<std::string_view> expect(std::string_view tag, std::size_t n_args) {
    auto t = tokens(next_line());
    if (t.empty() || t[0] != tag || t.size() != n_args + 1) {
      fail("expected '" + std::string(tag) + "' with " + std::to_string(n_args) + " argument(s)");
    }
    return t;
  }

  std::vector<double> doubles(std::size_t n) {
    const auto t = tokens(next_line());
    if (t.size() != n) fail("expected " + std::to_string(n) + " values, found " + std::to_string(t.size()));
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = to_double(t[i]);
    return v;
  }

  RowMatrix matrix(std::size_t rows, std::size_t cols) {
    RowMatrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < rows; ++r) {
      const auto v = doubles(cols);
      for (std::size_t c = 0; c < cols; ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v[c];
    }
    return m;
  }

  Vector vector(std::size_t n) {
    const auto v = doubles(n);
    return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(n));
  }

  double to_double(std::string_view s) const {
    double v = 0.0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) fail("bad number '" + std::string(s) + "'");
    return v;
  }

  std::uint64_t to_u64(std::string_view s, int base = 10) const {
    std::uint64_t v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v, base);
    if (ec != std::errc() || p != s.data() + s.size() || s.empty()) {
      fail("bad integer '" + std::string(s) + "'");
    }
    return v;
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError("model file line " + std::to_string(line_) + ": " + msg);
  }

  std::size_t pos() const { return pos_; }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_ = 0;
};

GaussianMixture read_gmm(Reader& rd, std::string_view tag, std::size_t d,
                         const std::shared_ptr<const MetricTransform>& metric) {
  const auto t = rd.expect(tag, 2);
  const std::size_t k = rd.to_u64(t[1]);
  if (k == 0) rd.fail("mixture with zero components");
  if (rd.to_u64(t[2], 16) != metric->fingerprint()) rd.fail(std::string(tag) + " metric fingerprint mismatch");
  RowMatrix c = rd.matrix(k, d);
  Vector s = rd.vector(k);
  try {
    return GaussianMixture(metric, std::move(c), std::move(s));
  } catch (const InvalidArgument& e) {
    rd.fail(e.what());
  }
}

}  // namespace

std::string LoadedModel::meta_value(std::string_view key, std::string fallback) const {
  for (const auto& [k, v] : meta) {
    if (k == key) return v;
  }
  return fallback;
}

std::string fingerprint_hex(std::uint64_t fp) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fp));
  return buf;
}

std::uint64_t model_fingerprint(const CcuModel& model) {
  detail::Fnv1a h;
  h.add(parameter_text(model));
  return h.value();
}

std::string serialize_model(const CcuModel& model, const ModelMeta& meta) {
  std::string out = "ccu-model " + std::to_string(kModelFormatVersion) + '\n';
  for (const auto& [k, v] : meta) {
    if (k.empty() || k.find_first_of(" \n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw InvalidArgument("model meta: keys must be single tokens and values single lines");
    }
    out += "meta " + k + (v.empty() ? "" : " " + v) + '\n';
  }
  const std::string params = parameter_text(model);
  detail::Fnv1a h;
  h.add(params);
  out += params;
  out += "fingerprint " + fingerprint_hex(h.value()) + '\n';
  return out;
}

LoadedModel parse_model(std::string_view text) {
  Reader rd(text);
  {
    const auto t = rd.expect("ccu-model", 1);
    if (rd.to_u64(t[1]) != static_cast<std::uint64_t>(kModelFormatVersion)) {
      rd.fail("unsupported format version " + std::string(t[1]));
    }
  }
  ModelMeta meta;
  while (!rd.done() && rd.peek_line().starts_with("meta ")) {
    std::string_view line = rd.next_line().substr(5);
    const std::size_t sp = line.find(' ');
    if (sp == std::string_view::npos) {
      meta.emplace_back(std::string(line), std::string());
    } else {
      meta.emplace_back(std::string(line.substr(0, sp)), std::string(line.substr(sp + 1)));
    }
  }
  const std::size_t param_begin = rd.pos();

  const std::size_t m = rd.to_u64(rd.expect("num_classes", 1)[1]);
  const std::size_t d = rd.to_u64(rd.expect("dim", 1)[1]);
  if (d == 0 || m < 2) rd.fail("bad dimension or class count");
  const double lambda = rd.to_double(rd.expect("lambda", 1)[1]);
  const std::uint64_t metric_fp = rd.to_u64(rd.expect("metric", 1)[1], 16);
  const Vector eigenvalues = rd.vector(d);
  const RowMatrix eigenvectors = rd.matrix(d, d);
  std::shared_ptr<const MetricTransform> metric;
  try {
    metric = std::make_shared<const MetricTransform>(Matrix(eigenvectors), eigenvalues);
  } catch (const InvalidArgument& e) {
    rd.fail(e.what());
  }
  if (metric->fingerprint() != metric_fp) rd.fail("metric fingerprint mismatch");
  GaussianMixture in = read_gmm(rd, "in_gmm", d, metric);
  GaussianMixture out = read_gmm(rd, "out_gmm", d, metric);

  const std::size_t n_layers = rd.to_u64(rd.expect("classifier", 1)[1]);
  if (n_layers == 0) rd.fail("classifier without layers");
  std::vector<DenseLayer> layers;
  for (std::size_t l = 0; l < n_layers; ++l) {
    const auto t = rd.expect("layer", 2);
    const std::size_t rows = rd.to_u64(t[1]), cols = rd.to_u64(t[2]);
    DenseLayer layer;
    layer.weight = rd.matrix(rows, cols);
    layer.bias = rd.vector(rows);
    layers.push_back(std::move(layer));
  }
  const std::string_view params = text.substr(param_begin, rd.pos() - param_begin);
  const std::uint64_t stored = rd.to_u64(rd.expect("fingerprint", 1)[1], 16);
  if (!rd.done()) rd.fail("trailing content after fingerprint");

  detail::Fnv1a h;
  h.add(params);
  if (h.value() != stored) rd.fail("fingerprint mismatch: file is corrupted or edited");

  try {
    CcuModel model(ReluClassifier(std::move(layers)), std::move(in), std::move(out), lambda);
    if (model.num_classes() != m || model.dim() != d) rd.fail("classifier shape disagrees with header");
    // The canonical text must reproduce the stored parameters exactly.
    const std::uint64_t fp = model_fingerprint(model);
    if (fp != stored) rd.fail("parameters are not in canonical form");
    return LoadedModel{std::move(model), std::move(meta), fp};
  } catch (const InvalidArgument& e) {
    rd.fail(e.what());
  }
}

void save_model(const std::filesystem::path& path, const CcuModel& model, const ModelMeta& meta) {
  const std::string text = serialize_model(model, meta);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed: " + path.string());
}

LoadedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_model(ss.str());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace ccu
