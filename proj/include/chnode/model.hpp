#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "chnode/types.hpp"

namespace chnode {

enum class Arch { resnet, hdnn, chnode };

std::string to_string(Arch arch);
Arch parse_arch(const std::string& name);

/// Scalar activation with derivative, antiderivative and slope bound S
/// (0 <= sigma'(x) <= S). Only tanh is provided.
struct Activation {
  enum class Kind { tanh };
  Kind kind = Kind::tanh;

  double value(double x) const;
  double derivative(double x) const;
  /// log cosh(x) for tanh, evaluated without overflow.
  double antiderivative(double x) const;
  double slope_bound() const { return 1.0; }

  Vector value(const Vector& x) const;
  Vector derivative(const Vector& x) const;
};

struct LayerParams {
  Matrix K;
  Vector b;
  Matrix L;  // zero unless the L-term is enabled
};

struct AffineMap {
  Matrix weight;
  Vector bias;
  bool trainable = true;

  Vector operator()(const Vector& x) const { return weight * x + bias; }
};

struct ModelSpec {
  Arch arch = Arch::chnode;
  Index n = 2;
  double h = 0.1;
  double kappa = 0.0;
  double gamma = 0.0;
  /// target contraction rate used when damping is recomputed
  double epsilon_user = 1e-9;
  Matrix J;
  std::vector<LayerParams> layers;
  AffineMap input_layer;
  AffineMap output_layer;
  bool train_L = false;
  std::uint64_t seed = 0;
  Activation activation;

  Index depth() const { return static_cast<Index>(layers.size()); }
  Index input_dim() const { return input_layer.weight.cols(); }
  Index num_classes() const { return output_layer.weight.rows(); }
  double horizon() const { return h * static_cast<double>(depth()); }
  Matrix damped_interconnection() const;  // F = J - gamma I

  /// Throws on any broken invariant (shapes, skewness of J, kappa > 0 for
  /// chnode, finiteness).
  void validate() const;
};

enum class Lift { dense, identity };

struct ModelOptions {
  Arch arch = Arch::chnode;
  Index input_dim = 2;
  Index n = 2;
  Index layers = 4;
  Index classes = 2;
  double h = 0.1;
  double kappa = 0.0;
  double epsilon_user = 1e-9;
  Lift lift = Lift::identity;
  bool use_L = false;
  std::uint64_t seed = 0;
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases. An identity
/// lift zero-pads the input into the first input_dim state coordinates and is
/// frozen. gamma starts at zero; training sets it from the certificate.
ModelSpec make_model(const ModelOptions& opts);

struct Trajectory {
  std::vector<Vector> states;  // xi_0 ... xi_N
  Vector logits;
  Vector probabilities;
};

Vector softmax(const Vector& logits);

Vector forward_layer(const ModelSpec& spec, Index i, const Vector& xi);
Trajectory forward(const ModelSpec& spec, const Vector& x);
/// Hidden flow only: states xi_0 ... xi_N starting from a given xi_0.
std::vector<Vector> propagate(const ModelSpec& spec, const Vector& xi0, Index from = 0);
Index predict(const ModelSpec& spec, const Vector& x);

double hamiltonian_value(const LayerParams& params, double kappa, const Vector& xi,
                         const Activation& act = {});
Vector hamiltonian_gradient(const LayerParams& params, double kappa, const Vector& xi,
                            const Activation& act = {});
Matrix hamiltonian_hessian(const LayerParams& params, double kappa, const Vector& xi,
                           const Activation& act = {});

/// d forward_layer / d xi at xi.
Matrix layer_jacobian(const ModelSpec& spec, Index i, const Vector& xi);

}  // namespace chnode
