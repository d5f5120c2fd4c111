#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "chnode/model.hpp"

namespace chnode {

struct Dataset {
  std::vector<Vector> features;
  std::vector<Index> labels;
  Index num_classes = 0;
  std::string name;
  /// features are pixels in [0, 1] (clamping and impulse noise apply)
  bool unit_bounded = false;

  Index size() const { return static_cast<Index>(labels.size()); }
  Index feature_dim() const { return features.empty() ? 0 : features.front().size(); }
  void validate() const;
  Dataset head(Index count) const;
};

/// Big-endian IDX: images magic 0x00000803 (count, rows, cols, bytes),
/// labels magic 0x00000801 (count, bytes). Pixels are scaled by 1/255.
Dataset load_mnist_idx(const std::filesystem::path& images_path,
                       const std::filesystem::path& labels_path);
/// Inverse of load_mnist_idx for [0,1] features: bytes are round(255 v).
void write_mnist_idx(const Dataset& ds, Index rows, Index cols,
                     const std::filesystem::path& images_path,
                     const std::filesystem::path& labels_path);

/// Three points per class in the plane; fixed coordinates.
Dataset make_blobs_2d();

/// Two concentric rings, radius 0.5 (class 0) and 1.0 (class 1), radial jitter
/// uniform in +-0.1, labels alternating by sample index.
std::pair<Dataset, Dataset> make_double_circles(Index n_train, Index n_test, std::uint64_t seed);

/// Exact test for two-class data in the plane.
bool linearly_separable_2d(const Dataset& ds);

struct CorruptionSpec {
  enum class Kind { gaussian, salt_pepper };
  Kind kind = Kind::gaussian;
  /// variance for gaussian, corrupted-pixel fraction for salt_pepper
  double sigma = 0;
  std::uint64_t seed = 0;

  std::string label() const;  // e.g. "gaussian_0.05"
};

CorruptionSpec parse_corruption(const std::string& text);  // "gaussian:0.05"

/// Labels and size are preserved. Each sample draws from its own stream
/// seeded by (seed, sample index).
Dataset corrupt(const Dataset& ds, const CorruptionSpec& spec);

struct RobustnessOptions {
  Index n_directions = 64;
  double r_max = 2.0;
  double tol = 1e-3;
  std::uint64_t seed = 0;
  /// ray scan resolution before bisection
  Index scan_steps = 256;
};

/// Unit directions uniform on the sphere in R^dim.
std::vector<Vector> sample_directions(Index dim, Index count, std::uint64_t seed);

/// Largest r such that every sample perturbed along every sampled direction
/// by any radius up to r keeps its label; 0 when a clean sample is already
/// misclassified.
double robustness_radius(const ModelSpec& spec, const Dataset& ds, const RobustnessOptions& opts);

/// Pointwise check at radius r with the same direction set.
bool robust_at(const ModelSpec& spec, const Dataset& ds, const std::vector<Vector>& directions,
               double r);

}  // namespace chnode
