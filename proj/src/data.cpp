#include "ccu/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <numbers>
#include <numeric>
#include <sstream>
#include <string>

#include "ccu/errors.hpp"

namespace ccu {
namespace {

std::size_t pixels(ImageLayout l) { return l.height * l.width; }

const ImageLayout& require_layout(const Dataset& d, const char* what) {
  if (!d.layout) throw InvalidArgument(std::string(what) + ": dataset has no image layout");
  if (pixels(*d.layout) != d.dim()) {
    throw InvalidArgument(std::string(what) + ": layout does not match dimension");
  }
  return *d.layout;
}

// Half-sample symmetric index (edge repeated), valid for any offset.
std::size_t mirror_index(long i, long n) {
  const long period = 2 * n;
  long m = i % period;
  if (m < 0) m += period;
  return static_cast<std::size_t>(m < n ? m : period - 1 - m);
}

std::uint32_t read_be32(std::span<const unsigned char> b, std::size_t at) {
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) |
         (std::uint32_t{b[at + 2]} << 8) | std::uint32_t{b[at + 3]};
}

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

void Dataset::validate(std::size_t num_classes) const {
  if (!points.allFinite()) throw InvalidArgument("dataset " + name + ": non-finite coordinates");
  if (!labels.empty()) {
    if (labels.size() != size()) throw InvalidArgument("dataset " + name + ": label count mismatch");
    for (int y : labels) {
      if (y < 0 || (num_classes > 0 && static_cast<std::size_t>(y) >= num_classes)) {
        throw InvalidArgument("dataset " + name + ": label " + std::to_string(y) + " out of range");
      }
    }
  }
  if (layout && pixels(*layout) != dim()) {
    throw InvalidArgument("dataset " + name + ": layout does not match dimension");
  }
  if (domain == Domain::unit_box && size() > 0 && (points.minCoeff() < 0.0 || points.maxCoeff() > 1.0)) {
    throw InvalidArgument("dataset " + name + ": coordinates outside [0,1]");
  }
}

Dataset two_moons(std::size_t n, double noise_sd, std::uint64_t seed) {
  if (n < 2) throw InvalidArgument("two_moons: need n >= 2");
  if (!(noise_sd >= 0.0)) throw InvalidArgument("two_moons: noise_sd must be >= 0");
  const std::size_t n_outer = n / 2;
  const std::size_t n_inner = n - n_outer;
  Dataset d;
  d.name = "two_moons";
  d.points.resize(static_cast<Eigen::Index>(n), 2);
  d.labels.resize(n);
  auto angle = [](std::size_t i, std::size_t count) {
    return count < 2 ? 0.0 : std::numbers::pi * static_cast<double>(i) / static_cast<double>(count - 1);
  };
  for (std::size_t i = 0; i < n_outer; ++i) {
    const double t = angle(i, n_outer);
    d.points.row(static_cast<Eigen::Index>(i)) << std::cos(t), std::sin(t);
    d.labels[i] = 0;
  }
  for (std::size_t i = 0; i < n_inner; ++i) {
    const double t = angle(i, n_inner);
    d.points.row(static_cast<Eigen::Index>(n_outer + i)) << 1.0 - std::cos(t), 0.5 - std::sin(t);
    d.labels[n_outer + i] = 1;
  }
  if (noise_sd > 0.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> jitter(0.0, noise_sd);
    for (Eigen::Index i = 0; i < d.points.rows(); ++i) {
      d.points(i, 0) += jitter(rng);
      d.points(i, 1) += jitter(rng);
    }
  }
  return d;
}

Dataset uniform_noise(std::size_t n, std::size_t dim, std::uint64_t seed) {
  if (n == 0 || dim == 0) throw InvalidArgument("uniform_noise: n and d must be >= 1");
  Dataset d;
  d.name = "uniform";
  d.domain = Domain::unit_box;
  d.points.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (Eigen::Index i = 0; i < d.points.rows(); ++i) {
    for (Eigen::Index j = 0; j < d.points.cols(); ++j) d.points(i, j) = u(rng);
  }
  return d;
}

std::vector<double> gaussian_blur(std::span<const double> image, ImageLayout layout, double sigma) {
  if (image.size() != pixels(layout)) throw InvalidArgument("gaussian_blur: size mismatch");
  if (!(sigma >= 0.0)) throw InvalidArgument("gaussian_blur: sigma must be >= 0");
  std::vector<double> out(image.begin(), image.end());
  if (sigma == 0.0 || image.empty()) return out;
  const long radius = static_cast<long>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  for (long k = -radius; k <= radius; ++k) {
    kernel[static_cast<std::size_t>(k + radius)] = std::exp(-0.5 * static_cast<double>(k * k) / (sigma * sigma));
  }
  const double total = std::accumulate(kernel.begin(), kernel.end(), 0.0);
  for (double& w : kernel) w /= total;

  const long h = static_cast<long>(layout.height), w = static_cast<long>(layout.width);
  std::vector<double> tmp(out.size());
  for (long r = 0; r < h; ++r) {
    for (long c = 0; c < w; ++c) {
      double acc = 0.0;
      for (long k = -radius; k <= radius; ++k) {
        acc += kernel[static_cast<std::size_t>(k + radius)] *
               image[static_cast<std::size_t>(r * w) + mirror_index(c + k, w)];
      }
      tmp[static_cast<std::size_t>(r * w + c)] = acc;
    }
  }
  for (long r = 0; r < h; ++r) {
    for (long c = 0; c < w; ++c) {
      double acc = 0.0;
      for (long k = -radius; k <= radius; ++k) {
        acc += kernel[static_cast<std::size_t>(k + radius)] *
               tmp[mirror_index(r + k, h) * static_cast<std::size_t>(w) + static_cast<std::size_t>(c)];
      }
      out[static_cast<std::size_t>(r * w + c)] = acc;
    }
  }
  return out;
}

bool rescale_to_unit(std::span<double> image) {
  if (image.empty()) return false;
  const auto [lo, hi] = std::minmax_element(image.begin(), image.end());
  const double a = *lo, b = *hi;
  if (!(b > a)) {
    std::fill(image.begin(), image.end(), 0.5);
    return false;
  }
  for (double& v : image) v = std::clamp((v - a) / (b - a), 0.0, 1.0);
  return true;
}

Dataset permuted_smoothed_noise(const Dataset& images, std::uint64_t seed,
                                const SmoothedNoiseOptions& options) {
  const ImageLayout layout = require_layout(images, "permuted_smoothed_noise");
  if (!(options.min_width >= 0.0) || !(options.max_width >= options.min_width)) {
    throw InvalidArgument("permuted_smoothed_noise: bad width range");
  }
  Dataset out;
  out.name = images.name + "_permuted_smoothed";
  out.domain = Domain::unit_box;
  out.layout = layout;
  out.points.resize(images.points.rows(), images.points.cols());
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> width(options.min_width, options.max_width);
  std::size_t constant = 0;
  std::vector<double> img(images.dim());
  for (Eigen::Index i = 0; i < images.points.rows(); ++i) {
    for (std::size_t j = 0; j < img.size(); ++j) img[j] = images.points(i, static_cast<Eigen::Index>(j));
    std::shuffle(img.begin(), img.end(), rng);
    std::vector<double> blurred = gaussian_blur(img, layout, width(rng));
    if (!rescale_to_unit(blurred)) ++constant;
    for (std::size_t j = 0; j < img.size(); ++j) out.points(i, static_cast<Eigen::Index>(j)) = blurred[j];
  }
  if (constant > 0) {
    std::fprintf(stderr, "permuted_smoothed_noise: %zu constant image(s) set to 0.5\n", constant);
  }
  return out;
}

std::vector<double> pad_image(std::span<const double> image, ImageLayout layout, std::size_t pad,
                              PadMode mode) {
  if (image.size() != pixels(layout)) throw InvalidArgument("pad_image: size mismatch");
  if (pad > layout.height || pad > layout.width) throw InvalidArgument("pad_image: pad larger than image");
  if (mode == PadMode::reflect && pad > 0 && (pad >= layout.height || pad >= layout.width)) {
    throw InvalidArgument("pad_image: reflect padding needs pad < image side");
  }
  const long h = static_cast<long>(layout.height), w = static_cast<long>(layout.width);
  const long p = static_cast<long>(pad);
  const long ph = h + 2 * p, pw = w + 2 * p;
  // Reflection about the edge pixel (edge not repeated); boundary mode
  // repeats the edge value.
  auto src = [&](long i, long n) -> long {
    if (mode == PadMode::boundary) return std::clamp(i, 0L, n - 1);
    if (i < 0) return -i;
    if (i >= n) return 2 * (n - 1) - i;
    return i;
  };
  std::vector<double> out(static_cast<std::size_t>(ph * pw));
  for (long r = 0; r < ph; ++r) {
    for (long c = 0; c < pw; ++c) {
      out[static_cast<std::size_t>(r * pw + c)] =
          image[static_cast<std::size_t>(src(r - p, h) * w + src(c - p, w))];
    }
  }
  return out;
}

CropChoice draw_crop(std::size_t pad, bool flip, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> offset(0, 2 * pad);
  CropChoice c;
  c.row_offset = offset(rng);
  c.col_offset = offset(rng);
  if (flip) c.flipped = std::bernoulli_distribution(0.5)(rng);
  return c;
}

std::vector<double> crop_image(std::span<const double> padded, ImageLayout layout, std::size_t pad,
                               const CropChoice& choice) {
  const std::size_t pw = layout.width + 2 * pad;
  if (padded.size() != (layout.height + 2 * pad) * pw) throw InvalidArgument("crop_image: size mismatch");
  if (choice.row_offset > 2 * pad || choice.col_offset > 2 * pad) {
    throw InvalidArgument("crop_image: offset outside the padded image");
  }
  std::vector<double> out(pixels(layout));
  for (std::size_t r = 0; r < layout.height; ++r) {
    for (std::size_t c = 0; c < layout.width; ++c) {
      const std::size_t sc = choice.flipped ? layout.width - 1 - c : c;
      out[r * layout.width + c] = padded[(r + choice.row_offset) * pw + sc + choice.col_offset];
    }
  }
  return out;
}

Dataset augment(const Dataset& images, std::size_t pad, PadMode mode, bool flip, std::uint64_t seed) {
  const ImageLayout layout = require_layout(images, "augment");
  Dataset out = images;
  std::mt19937_64 rng(seed);
  std::vector<double> img(images.dim());
  for (Eigen::Index i = 0; i < images.points.rows(); ++i) {
    for (std::size_t j = 0; j < img.size(); ++j) img[j] = images.points(i, static_cast<Eigen::Index>(j));
    const std::vector<double> padded = pad_image(img, layout, pad, mode);
    const std::vector<double> crop = crop_image(padded, layout, pad, draw_crop(pad, flip, rng));
    for (std::size_t j = 0; j < crop.size(); ++j) out.points(i, static_cast<Eigen::Index>(j)) = crop[j];
  }
  return out;
}

Dataset parse_idx(std::span<const unsigned char> images,
                  std::optional<std::span<const unsigned char>> labels) {
  if (images.size() < 16) throw ParseError("idx: truncated image header");
  if (read_be32(images, 0) != 0x00000803) throw ParseError("idx: bad image magic");
  const std::size_t n = read_be32(images, 4);
  const std::size_t h = read_be32(images, 8);
  const std::size_t w = read_be32(images, 12);
  if (images.size() != 16 + n * h * w) {
    throw ParseError("idx: image payload has " + std::to_string(images.size() - 16) + " bytes, expected " +
                     std::to_string(n * h * w));
  }
  Dataset d;
  d.name = "idx";
  d.domain = Domain::unit_box;
  d.layout = ImageLayout{h, w};
  d.points.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(h * w));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < h * w; ++j) {
      d.points(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = images[16 + i * h * w + j] / 255.0;
    }
  }
  if (labels) {
    const auto& lb = *labels;
    if (lb.size() < 8) throw ParseError("idx: truncated label header");
    if (read_be32(lb, 0) != 0x00000801) throw ParseError("idx: bad label magic");
    const std::size_t nl = read_be32(lb, 4);
    if (nl != n) throw ParseError("idx: image/label count mismatch");
    if (lb.size() != 8 + nl) throw ParseError("idx: label payload size mismatch");
    d.labels.assign(lb.begin() + 8, lb.end());
  }
  return d;
}

Dataset load_idx(const std::filesystem::path& images, const std::optional<std::filesystem::path>& labels) {
  const auto img = read_file(images);
  Dataset d;
  if (labels) {
    const auto lb = read_file(*labels);
    d = parse_idx(img, std::span<const unsigned char>(lb));
  } else {
    d = parse_idx(img);
  }
  d.name = images.stem().string();
  return d;
}

Dataset load_csv(const std::filesystem::path& path, bool labeled) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  std::string line;
  std::size_t line_no = 0, width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> row;
    std::size_t start = 0;
    for (;;) {
      const std::size_t end = line.find(',', start);
      std::string_view field(line.data() + start, (end == std::string::npos ? line.size() : end) - start);
      while (!field.empty() && field.front() == ' ') field.remove_prefix(1);
      while (!field.empty() && field.back() == ' ') field.remove_suffix(1);
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
      if (ec != std::errc() || ptr != field.data() + field.size() || field.empty()) {
        throw ParseError(path.string() + ":" + std::to_string(line_no) + ": bad number '" +
                         std::string(field) + "'");
      }
      row.push_back(v);
      if (end == std::string::npos) break;
      start = end + 1;
    }
    if (width == 0) width = row.size();
    if (row.size() != width) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": inconsistent column count");
    }
    if (labeled) {
      const double y = row.back();
      if (y != std::floor(y)) throw ParseError(path.string() + ":" + std::to_string(line_no) + ": non-integer label");
      labels.push_back(static_cast<int>(y));
      row.pop_back();
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty() || rows[0].empty()) throw ParseError(path.string() + ": no samples");
  Dataset d;
  d.name = path.stem().string();
  d.labels = std::move(labels);
  d.points.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      d.points(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
  }
  if (d.size() > 0 && d.points.minCoeff() >= 0.0 && d.points.maxCoeff() <= 1.0) d.domain = Domain::unit_box;
  d.validate();
  return d;
}

void save_csv(const std::filesystem::path& path, const Dataset& data) {
  data.validate();
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  char buf[32];
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t j = 0; j < data.dim(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", data.points(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
      out << (j ? "," : "") << buf;
    }
    if (data.labeled()) out << ',' << data.labels[i];
    out << '\n';
  }
  if (!out) throw Error("write failed: " + path.string());
}

}  // namespace ccu
