#pragma once

#include <algorithm>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>

#include "chnode/linalg.hpp"
#include "chnode/model.hpp"
#include "chnode/training.hpp"

namespace chnode::test {

inline Matrix gaussian(std::mt19937_64& rng, Index rows, Index cols, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

/// Random model with O(1) weights; L nonzero when with_L.
inline ModelSpec random_spec(std::mt19937_64& rng, Arch arch, Index n, Index N, Index m,
                             Index classes, bool with_L = false) {
  ModelSpec s;
  s.arch = arch;
  s.n = n;
  s.h = 0.2;
  s.kappa = arch == Arch::chnode ? 0.3 : 0.0;
  s.gamma = arch == Arch::chnode ? 0.7 : 0.0;
  s.J = n % 2 == 0 ? canonical_skew(n) : Matrix::Zero(n, n);
  for (Index i = 0; i < N; ++i) {
    LayerParams p;
    p.K = gaussian(rng, n, n, 0.8);
    p.b = gaussian(rng, n, 1, 0.5);
    p.L = with_L ? gaussian(rng, n, n, 0.5) : Matrix::Zero(n, n);
    s.layers.push_back(p);
  }
  s.train_L = with_L;
  s.input_layer.weight = gaussian(rng, n, m, 0.7);
  s.input_layer.bias = gaussian(rng, n, 1, 0.3);
  s.output_layer.weight = gaussian(rng, classes, n, 0.7);
  s.output_layer.bias = gaussian(rng, classes, 1, 0.3);
  s.validate();
  return s;
}

/// K = 0, identity lift: the flow is linear with rate gamma kappa.
inline ModelSpec linear_chnode(Index n, Index N, double h, double kappa, double gamma) {
  ModelSpec s;
  s.arch = Arch::chnode;
  s.n = n;
  s.h = h;
  s.kappa = kappa;
  s.gamma = gamma;
  s.J = canonical_skew(n);
  s.layers.assign(static_cast<std::size_t>(N),
                  LayerParams{Matrix::Zero(n, n), Vector::Zero(n), Matrix::Zero(n, n)});
  s.input_layer = {Matrix::Identity(n, n), Vector::Zero(n), false};
  s.output_layer = {Matrix::Identity(2, n), Vector::Zero(2), true};
  s.validate();
  return s;
}

inline double batch_loss(const ModelSpec& spec, const std::vector<Vector>& xs, const std::vector<Index>& ys) {
  double loss = 0;
  for (std::size_t s = 0; s < xs.size(); ++s) loss += cross_entropy(forward(spec, xs[s]).probabilities, ys[s]);
  return loss / static_cast<double>(xs.size());
}

// worst mismatch over all coordinates: relative, with the denominator floored
// at `scale` so coordinates near zero are judged on absolute error
inline double gradient_mismatch(const ModelSpec& spec, const std::vector<Vector>& xs,
                                const std::vector<Index>& ys, double scale = 1e-3) {
  const Vector g = flatten_gradients(backprop(spec, xs, ys).grads);
  const Vector p = flatten_parameters(spec);
  if (g.size() != p.size()) throw std::logic_error("gradient and parameter layouts differ");
  ModelSpec probe = spec;
  double worst = 0;
  const double step = 1e-6;
  for (Index k = 0; k < p.size(); ++k) {
    Vector q = p;
    q(k) += step;
    assign_parameters(probe, q);
    const double up = batch_loss(probe, xs, ys);
    q(k) -= 2 * step;
    assign_parameters(probe, q);
    const double down = batch_loss(probe, xs, ys);
    const double fd = (up - down) / (2 * step);
    const double err = std::abs(fd - g(k));
    worst = std::max(worst, err / std::max({std::abs(fd), std::abs(g(k)), scale}));
  }
  return worst;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("chnode_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace chnode::test
