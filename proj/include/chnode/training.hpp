#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "chnode/contraction.hpp"
#include "chnode/model.hpp"

namespace chnode {

struct Dataset;

struct LayerGradient {
  Matrix dK;
  Vector db;
  Matrix dL;
};

/// Gradients shaped exactly like the trainable tensors of a ModelSpec.
/// Frozen tensors (identity lift, disabled L) still receive their exact
/// gradient; the optimizer simply skips them.
struct GradientSet {
  std::vector<LayerGradient> layers;
  Matrix d_input_weight;
  Vector d_input_bias;
  Matrix d_output_weight;
  Vector d_output_bias;

  static GradientSet zeros_like(const ModelSpec& spec);
  GradientSet& operator+=(const GradientSet& other);
  GradientSet& operator*=(double s);
  bool all_finite() const;
};

/// Flat view of one tensor. parameter_views and gradient_views list the
/// tensors in the same fixed order: input weight, input bias, then K, b, L per
/// layer, then output weight and bias.
struct TensorView {
  double* data;
  Index size;
  bool trainable;

  Eigen::Map<Vector> map() const { return {data, size}; }
};

std::vector<TensorView> parameter_views(ModelSpec& spec);
std::vector<TensorView> gradient_views(GradientSet& grads, const ModelSpec& spec);
Vector flatten_parameters(const ModelSpec& spec);
void assign_parameters(ModelSpec& spec, const Vector& flat);
Vector flatten_gradients(const GradientSet& grads);

double cross_entropy(const Vector& probabilities, Index label);

struct BatchResult {
  double loss = 0;
  GradientSet grads;
};

/// Mean cross entropy over the batch and its exact gradient. gamma, kappa and J
/// are constants here.
BatchResult backprop(const ModelSpec& spec, const std::vector<Vector>& inputs,
                     const std::vector<Index>& labels);

struct TrainConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  Index epochs = 10;
  Index batch_size = 50;
  std::uint64_t seed = 0;
  double epsilon_user = 1e-9;
  double gamma_margin = 1.001;
  /// per-epoch growth cap on gamma relative to its value at epoch start
  double gamma_growth_cap = 10.0;
  /// samples used for the per-epoch BSM extrema
  Index bsm_probe = 64;
  bool check_lmi_each_epoch = false;
  /// stop after the first epoch whose train accuracy reaches this; 0 = off
  double target_accuracy = 0.0;
};

/// Classical momentum: v <- m v + g; p <- p - lr v. Buffers start as zeros.
void sgd_step(ModelSpec& spec, const GradientSet& grads, GradientSet& velocity,
              const TrainConfig& cfg);

struct LogRow {
  Index epoch = 0;
  Index batch = 0;  // global mini-batch counter at the end of the epoch
  double loss = 0;
  double train_acc = 0;
  bool has_certificate = false;
  Certificate cert;
  double bsm_max = 0;
  double bsm_min = 0;
  bool gamma_capped = false;
};

struct TrainingLog {
  std::vector<LogRow> rows;

  void write_csv(const std::filesystem::path& path) const;
  std::string to_csv() const;
};

/// Per mini-batch: forward + loss with the current gamma, backprop, SGD step,
/// and (chnode) a fresh certificate that resets gamma.
TrainingLog fit(ModelSpec& spec, const Dataset& train, const TrainConfig& cfg,
                const Activation& act = {});

double accuracy(const ModelSpec& spec, const Dataset& ds);

/// Phi(N, i) = d xi_N / d xi_i along the trajectory of x.
Matrix bsm(const ModelSpec& spec, const Vector& x, Index i);

struct BsmProfile {
  std::vector<double> norms;      // ||Phi(N, i)|| for i = N, N-1, ..., 0
  std::vector<double> rho_bound;  // exp(-rho (N - i) h / 2)
  std::vector<Index> violations;  // layer indices i with norm > bound + slack
  double slack = 0;
};

/// Spectral norms of every Phi(N, i) next to the exp(-rho t / 2) bound,
/// allowing an additive slack of 10 h for the Euler discretization.
BsmProfile bsm_profile(const ModelSpec& spec, const Vector& x, const Certificate& cert);

/// Norms only, usable for any architecture.
std::vector<double> bsm_norms(const ModelSpec& spec, const Vector& x);

}  // namespace chnode
