#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ccu/types.hpp"

namespace ccu {

enum class Domain { unbounded, unit_box };

struct ImageLayout {
  std::size_t height = 0;
  std::size_t width = 0;
};

/// n x d points with optional 0-based labels and optional image layout
/// (row-major height x width per sample).
struct Dataset {
  RowMatrix points;
  std::vector<int> labels;
  Domain domain = Domain::unbounded;
  std::optional<ImageLayout> layout;
  std::string name;

  std::size_t size() const { return static_cast<std::size_t>(points.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(points.cols()); }
  bool labeled() const { return !labels.empty(); }
  Vector point(std::size_t i) const { return points.row(static_cast<Eigen::Index>(i)).transpose(); }

  /// Throws InvalidArgument if labels, layout or domain are inconsistent.
  void validate(std::size_t num_classes = 0) const;
};

/// Two interleaved half circles, n/2 points on the upper unit circle (label 0)
/// and n - n/2 on the lower one shifted to (1, 0.5) (label 1), plus Gaussian
/// jitter of standard deviation noise_sd.
Dataset two_moons(std::size_t n, double noise_sd, std::uint64_t seed);

/// i.i.d. uniform points in [0,1]^d.
Dataset uniform_noise(std::size_t n, std::size_t d, std::uint64_t seed);

struct SmoothedNoiseOptions {
  double min_width = 1.0;  // Gaussian filter standard deviation, pixels
  double max_width = 5.0;
};

/// Per image: random pixel permutation, Gaussian blur of random width
/// (kernel radius ceil(3 sigma), reflect boundary), affine rescale to [0,1].
Dataset permuted_smoothed_noise(const Dataset& images, std::uint64_t seed,
                                const SmoothedNoiseOptions& options = {});

enum class PadMode { boundary, reflect };

/// Random crop from a padded copy plus optional horizontal flip (p = 1/2).
Dataset augment(const Dataset& images, std::size_t pad, PadMode mode, bool flip,
                std::uint64_t seed);

// Building blocks of the image operations, exposed for reuse and testing.
std::vector<double> gaussian_blur(std::span<const double> image, ImageLayout layout, double sigma);
// Returns false (and fills with 0.5) when the image is constant.
bool rescale_to_unit(std::span<double> image);
std::vector<double> pad_image(std::span<const double> image, ImageLayout layout, std::size_t pad,
                              PadMode mode);
struct CropChoice {
  std::size_t row_offset = 0;
  std::size_t col_offset = 0;
  bool flipped = false;
};
CropChoice draw_crop(std::size_t pad, bool flip, std::mt19937_64& rng);
std::vector<double> crop_image(std::span<const double> padded, ImageLayout layout, std::size_t pad,
                               const CropChoice& choice);

/// MNIST-style IDX: images (magic 0x00000803) and optional labels (0x00000801).
/// Pixels are scaled to [0,1].
Dataset load_idx(const std::filesystem::path& images,
                 const std::optional<std::filesystem::path>& labels = std::nullopt);
Dataset parse_idx(std::span<const unsigned char> images,
                  std::optional<std::span<const unsigned char>> labels = std::nullopt);

/// CSV, one sample per row; with `labeled` the last column is an integer label.
Dataset load_csv(const std::filesystem::path& path, bool labeled);
void save_csv(const std::filesystem::path& path, const Dataset& data);

}  // namespace ccu
