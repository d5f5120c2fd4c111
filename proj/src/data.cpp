#include "chnode/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "chnode/error.hpp"

namespace chnode {

void Dataset::validate() const {
  if (features.size() != labels.size())
    throw Error(ErrorCode::dimension_mismatch, name + ": features and labels differ in count");
  for (std::size_t s = 0; s < labels.size(); ++s) {
    if (labels[s] < 0 || labels[s] >= num_classes)
      throw Error(ErrorCode::invalid_argument, name + ": label out of range at sample " + std::to_string(s));
    if (features[s].size() != feature_dim())
      throw Error(ErrorCode::dimension_mismatch, name + ": ragged features at sample " + std::to_string(s));
  }
}

Dataset Dataset::head(Index count) const {
  Dataset out = *this;
  const auto keep = static_cast<std::size_t>(std::clamp<Index>(count, 0, size()));
  out.features.resize(keep);
  out.labels.resize(keep);
  return out;
}

namespace {

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t offset,
                        const std::filesystem::path& path) {
  if (bytes.size() < offset + 4) {
    throw Error(ErrorCode::format, path.string() + ": truncated header at offset " +
                                       std::to_string(offset));
  }
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void expect_magic(std::uint32_t magic, std::uint32_t expected, const std::filesystem::path& path) {
  if (magic != expected) {
    std::ostringstream msg;
    msg << path.string() << ": unexpected magic 0x" << std::hex << magic << " at offset 0 (expected 0x"
        << expected << ")";
    throw Error(ErrorCode::format, msg.str());
  }
}

void write_be32(std::ofstream& out, std::uint32_t v) {
  const char bytes[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                         static_cast<char>(v >> 8), static_cast<char>(v)};
  out.write(bytes, 4);
}

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

}  // namespace

Dataset load_mnist_idx(const std::filesystem::path& images_path,
                       const std::filesystem::path& labels_path) {
  const auto images = read_file(images_path);
  const auto labels = read_file(labels_path);
  expect_magic(read_be32(images, 0, images_path), kImageMagic, images_path);
  expect_magic(read_be32(labels, 0, labels_path), kLabelMagic, labels_path);

  const std::size_t count = read_be32(images, 4, images_path);
  const std::size_t rows = read_be32(images, 8, images_path);
  const std::size_t cols = read_be32(images, 12, images_path);
  const std::size_t label_count = read_be32(labels, 4, labels_path);
  if (count != label_count) {
    throw Error(ErrorCode::format, "count mismatch: " + images_path.string() + " holds " +
                                       std::to_string(count) + " images but " +
                                       labels_path.string() + " holds " +
                                       std::to_string(label_count) + " labels (offset 4)");
  }
  const std::size_t pixels = rows * cols;
  if (pixels == 0) throw Error(ErrorCode::format, images_path.string() + ": zero-sized images");
  if (images.size() < 16 + count * pixels) {
    throw Error(ErrorCode::format, images_path.string() + ": truncated payload at offset " +
                                       std::to_string(images.size()) + " (expected " +
                                       std::to_string(16 + count * pixels) + " bytes)");
  }
  if (labels.size() < 8 + count) {
    throw Error(ErrorCode::format, labels_path.string() + ": truncated payload at offset " +
                                       std::to_string(labels.size()) + " (expected " +
                                       std::to_string(8 + count) + " bytes)");
  }

  Dataset ds;
  ds.name = images_path.filename().string();
  ds.unit_bounded = true;
  ds.features.reserve(count);
  ds.labels.reserve(count);
  Index top = 0;
  for (std::size_t s = 0; s < count; ++s) {
    Vector x(static_cast<Index>(pixels));
    const unsigned char* px = images.data() + 16 + s * pixels;
    for (std::size_t k = 0; k < pixels; ++k) x[static_cast<Index>(k)] = px[k] / 255.0;
    ds.features.push_back(std::move(x));
    const Index label = labels[8 + s];
    top = std::max(top, label);
    ds.labels.push_back(label);
  }
  ds.num_classes = top + 1;
  return ds;
}

void write_mnist_idx(const Dataset& ds, Index rows, Index cols,
                     const std::filesystem::path& images_path,
                     const std::filesystem::path& labels_path) {
  if (ds.feature_dim() != rows * cols)
    throw Error(ErrorCode::dimension_mismatch, "image shape does not match the feature length");
  std::ofstream img(images_path, std::ios::binary);
  std::ofstream lab(labels_path, std::ios::binary);
  if (!img || !lab) throw Error(ErrorCode::io, "cannot write IDX files " + images_path.string());
  write_be32(img, kImageMagic);
  write_be32(img, static_cast<std::uint32_t>(ds.size()));
  write_be32(img, static_cast<std::uint32_t>(rows));
  write_be32(img, static_cast<std::uint32_t>(cols));
  write_be32(lab, kLabelMagic);
  write_be32(lab, static_cast<std::uint32_t>(ds.size()));
  for (Index s = 0; s < ds.size(); ++s) {
    const Vector& x = ds.features[static_cast<std::size_t>(s)];
    for (Index k = 0; k < x.size(); ++k) {
      const double v = std::clamp(x[k], 0.0, 1.0);
      img.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
    }
    lab.put(static_cast<char>(static_cast<unsigned char>(ds.labels[static_cast<std::size_t>(s)])));
  }
  if (!img || !lab) throw Error(ErrorCode::io, "write failed for " + images_path.string());
}

Dataset make_blobs_2d() {
  // red at the left and right edges, blue stacked down the middle column;
  // no straight line separates them
  static const double coords[6][2] = {{-1.5, 0.6}, {-1.5, -0.6}, {1.5, 0.0},
                                      {0.0, 1.0},  {0.0, -1.0},  {0.0, 0.0}};
  Dataset ds;
  ds.name = "blobs2d";
  ds.num_classes = 2;
  for (int s = 0; s < 6; ++s) {
    Vector x(2);
    x << coords[s][0], coords[s][1];
    ds.features.push_back(x);
    ds.labels.push_back(s < 3 ? 0 : 1);
  }
  return ds;
}

std::pair<Dataset, Dataset> make_double_circles(Index n_train, Index n_test, std::uint64_t seed) {
  if (n_train < 2 || n_test < 2)
    throw Error(ErrorCode::invalid_argument, "double circles needs at least two samples per split");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> jitter(-0.1, 0.1);
  auto build = [&](Index count, const std::string& name) {
    Dataset ds;
    ds.name = name;
    ds.num_classes = 2;
    for (Index s = 0; s < count; ++s) {
      const Index label = s % 2;
      const double radius = (label == 0 ? 0.5 : 1.0) + jitter(rng);
      const double theta = angle(rng);
      Vector x(2);
      x << radius * std::cos(theta), radius * std::sin(theta);
      ds.features.push_back(x);
      ds.labels.push_back(label);
    }
    return ds;
  };
  Dataset train = build(n_train, "double_circles_train");
  Dataset test = build(n_test, "double_circles_test");
  return {std::move(train), std::move(test)};
}

bool linearly_separable_2d(const Dataset& ds) {
  if (ds.feature_dim() != 2 || ds.num_classes != 2)
    throw Error(ErrorCode::invalid_argument, "linear separability test needs 2D two-class data");
  // Separability only changes where two projections swap order, i.e. at
  // directions orthogonal to a pairwise difference. Checking one direction
  // inside every arc between consecutive critical angles is exhaustive.
  std::vector<double> critical;
  for (std::size_t i = 0; i < ds.features.size(); ++i) {
    for (std::size_t j = i + 1; j < ds.features.size(); ++j) {
      const Vector d = ds.features[j] - ds.features[i];
      if (d.norm() == 0.0) continue;
      const double base = std::atan2(d[1], d[0]) + std::numbers::pi / 2.0;
      for (double a : {base, base + std::numbers::pi})
        critical.push_back(std::fmod(a + 4.0 * std::numbers::pi, 2.0 * std::numbers::pi));
    }
  }
  std::sort(critical.begin(), critical.end());
  std::vector<double> probes;
  if (critical.empty()) probes.push_back(0.0);
  for (std::size_t k = 0; k < critical.size(); ++k) {
    const double next = k + 1 < critical.size() ? critical[k + 1] : critical.front() + 2.0 * std::numbers::pi;
    probes.push_back(0.5 * (critical[k] + next));
  }
  for (double theta : probes) {
    const double wx = std::cos(theta), wy = std::sin(theta);
    double max0 = -INFINITY, min1 = INFINITY;
    for (std::size_t s = 0; s < ds.features.size(); ++s) {
      const double p = wx * ds.features[s][0] + wy * ds.features[s][1];
      if (ds.labels[s] == 0)
        max0 = std::max(max0, p);
      else
        min1 = std::min(min1, p);
    }
    if (max0 < min1) return true;
  }
  return false;
}

std::string CorruptionSpec::label() const {
  std::ostringstream out;
  out << (kind == Kind::gaussian ? "gaussian_" : "salt_pepper_") << sigma;
  return out.str();
}

CorruptionSpec parse_corruption(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos)
    throw Error(ErrorCode::invalid_argument, "corruption '" + text + "' must look like kind:sigma");
  const std::string kind = text.substr(0, colon);
  CorruptionSpec spec;
  if (kind == "gaussian")
    spec.kind = CorruptionSpec::Kind::gaussian;
  else if (kind == "salt_pepper" || kind == "sp")
    spec.kind = CorruptionSpec::Kind::salt_pepper;
  else
    throw Error(ErrorCode::invalid_argument, "unknown corruption kind '" + kind + "'");
  try {
    spec.sigma = std::stod(text.substr(colon + 1));
  } catch (const std::exception&) {
    throw Error(ErrorCode::invalid_argument, "bad corruption level in '" + text + "'");
  }
  return spec;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

Dataset corrupt(const Dataset& ds, const CorruptionSpec& spec) {
  if (!(spec.sigma >= 0.0)) throw Error(ErrorCode::invalid_argument, "corruption sigma must be >= 0");
  if (spec.kind == CorruptionSpec::Kind::salt_pepper) {
    if (!ds.unit_bounded)
      throw Error(ErrorCode::invalid_argument, "salt-and-pepper noise needs [0,1]-bounded features");
    if (spec.sigma > 1.0) throw Error(ErrorCode::invalid_argument, "salt-and-pepper fraction must be <= 1");
  }
  Dataset out = ds;
  if (spec.sigma == 0.0) return out;
  out.name = ds.name + "+" + spec.label();
  for (std::size_t s = 0; s < out.features.size(); ++s) {
    std::mt19937_64 rng(splitmix64(spec.seed ^ splitmix64(static_cast<std::uint64_t>(s))));
    Vector& x = out.features[s];
    if (spec.kind == CorruptionSpec::Kind::gaussian) {
      std::normal_distribution<double> noise(0.0, std::sqrt(spec.sigma));
      for (Index k = 0; k < x.size(); ++k) x[k] += noise(rng);
      if (ds.unit_bounded) x = x.cwiseMax(0.0).cwiseMin(1.0);
    } else {
      const auto m = static_cast<std::size_t>(x.size());
      const auto hits = static_cast<std::size_t>(std::floor(spec.sigma * static_cast<double>(m)));
      std::vector<Index> idx(m);
      std::iota(idx.begin(), idx.end(), Index{0});
      for (std::size_t k = 0; k < hits; ++k) {
        std::uniform_int_distribution<std::size_t> pick(k, m - 1);
        std::swap(idx[k], idx[pick(rng)]);
        x[idx[k]] = (rng() & 1U) ? 1.0 : 0.0;
      }
    }
  }
  return out;
}

std::vector<Vector> sample_directions(Index dim, Index count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Vector> dirs;
  while (static_cast<Index>(dirs.size()) < count) {
    Vector u(dim);
    for (Index k = 0; k < dim; ++k) u[k] = normal(rng);
    const double len = u.norm();
    if (len > 1e-12) dirs.push_back(u / len);
  }
  return dirs;
}

bool robust_at(const ModelSpec& spec, const Dataset& ds, const std::vector<Vector>& directions,
               double r) {
  for (Index s = 0; s < ds.size(); ++s) {
    const Vector& x = ds.features[static_cast<std::size_t>(s)];
    const Index label = ds.labels[static_cast<std::size_t>(s)];
    for (const auto& u : directions)
      if (predict(spec, x + r * u) != label) return false;
  }
  return true;
}

double robustness_radius(const ModelSpec& spec, const Dataset& ds, const RobustnessOptions& opts) {
  if (!(opts.r_max > 0.0) || !(opts.tol > 0.0) || opts.scan_steps < 1)
    throw Error(ErrorCode::invalid_argument, "robustness probe needs r_max > 0, tol > 0, scan_steps >= 1");
  for (Index s = 0; s < ds.size(); ++s)
    if (predict(spec, ds.features[static_cast<std::size_t>(s)]) != ds.labels[static_cast<std::size_t>(s)])
      return 0.0;

  const auto dirs = sample_directions(ds.feature_dim(), opts.n_directions, opts.seed);
  const double step = opts.r_max / static_cast<double>(opts.scan_steps);
  double radius = opts.r_max;
  for (Index s = 0; s < ds.size(); ++s) {
    const Vector& x = ds.features[static_cast<std::size_t>(s)];
    const Index label = ds.labels[static_cast<std::size_t>(s)];
    for (const auto& u : dirs) {
      // first failing scan point along the ray, then bisect the bracket
      for (Index k = 1; k <= opts.scan_steps; ++k) {
        double lo = step * static_cast<double>(k - 1);
        if (lo >= radius) break;
        double hi = std::min(lo + step, radius);
        if (predict(spec, x + hi * u) == label) continue;
        while (hi - lo > opts.tol) {
          const double mid = 0.5 * (lo + hi);
          if (predict(spec, x + mid * u) == label)
            lo = mid;
          else
            hi = mid;
        }
        radius = std::min(radius, lo);
        break;
      }
    }
  }
  return radius;
}

}  // namespace chnode
