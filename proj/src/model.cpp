#include "chnode/model.hpp"

#include <cmath>
#include <random>

#include "chnode/error.hpp"
#include "chnode/linalg.hpp"

namespace chnode {

std::string to_string(Arch arch) {
  switch (arch) {
    case Arch::resnet: return "resnet";
    case Arch::hdnn: return "hdnn";
    case Arch::chnode: return "chnode";
  }
  return "unknown";
}

Arch parse_arch(const std::string& name) {
  if (name == "resnet") return Arch::resnet;
  if (name == "hdnn") return Arch::hdnn;
  if (name == "chnode") return Arch::chnode;
  throw Error(ErrorCode::invalid_argument,
              "unknown architecture '" + name + "' (expected resnet, hdnn or chnode)");
}

double Activation::value(double x) const { return std::tanh(x); }

double Activation::derivative(double x) const {
  const double t = std::tanh(x);
  return 1.0 - t * t;
}

double Activation::antiderivative(double x) const {
  const double ax = std::abs(x);
  return ax + std::log1p(std::exp(-2.0 * ax)) - std::log(2.0);
}

Vector Activation::value(const Vector& x) const { return x.array().tanh(); }

Vector Activation::derivative(const Vector& x) const {
  return 1.0 - x.array().tanh().square();
}

Matrix ModelSpec::damped_interconnection() const {
  return J - gamma * Matrix::Identity(n, n);
}

namespace {

void expect_shape(const Matrix& m, Index rows, Index cols, const std::string& what) {
  if (m.rows() != rows || m.cols() != cols) {
    throw Error(ErrorCode::dimension_mismatch,
                what + " is " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                    ", expected " + std::to_string(rows) + "x" + std::to_string(cols));
  }
}

void expect_length(const Vector& v, Index len, const std::string& what) {
  if (v.size() != len) {
    throw Error(ErrorCode::dimension_mismatch, what + " has length " +
                                                   std::to_string(v.size()) + ", expected " +
                                                   std::to_string(len));
  }
}

void check_layer(const LayerParams& p, Index n, const std::string& what) {
  expect_shape(p.K, n, n, what + ".K");
  expect_length(p.b, n, what + ".b");
  expect_shape(p.L, n, n, what + ".L");
  require_finite(p.K, "layer K");
  require_finite(p.b, "layer b");
  require_finite(p.L, "layer L");
}

}  // namespace

void ModelSpec::validate() const {
  if (n < 1) throw Error(ErrorCode::invalid_argument, "state dimension must be >= 1");
  if (layers.empty()) throw Error(ErrorCode::invalid_argument, "model needs at least one layer");
  if (!(h > 0.0) || !std::isfinite(h)) throw Error(ErrorCode::invalid_argument, "step h must be > 0");
  if (arch == Arch::chnode && !(kappa > 0.0))
    throw Error(ErrorCode::invalid_argument, "chnode requires kappa > 0");
  if (!(gamma >= 0.0) || !std::isfinite(gamma))
    throw Error(ErrorCode::invalid_argument, "gamma must be finite and >= 0");
  expect_shape(J, n, n, "J");
  require_finite(J, "J");
  if ((J + J.transpose()).cwiseAbs().maxCoeff() != 0.0)
    throw Error(ErrorCode::invalid_argument, "J must be exactly skew-symmetric");
  for (std::size_t i = 0; i < layers.size(); ++i) check_layer(layers[i], n, "layer " + std::to_string(i));
  if (input_layer.weight.rows() != n || input_layer.weight.cols() < 1)
    throw Error(ErrorCode::dimension_mismatch, "input layer must map into the state dimension");
  expect_length(input_layer.bias, n, "input bias");
  if (output_layer.weight.cols() != n || output_layer.weight.rows() < 1)
    throw Error(ErrorCode::dimension_mismatch, "output layer must read the state dimension");
  expect_length(output_layer.bias, output_layer.weight.rows(), "output bias");
  require_finite(input_layer.weight, "input weight");
  require_finite(output_layer.weight, "output weight");
}

ModelSpec make_model(const ModelOptions& opts) {
  if (opts.layers < 1) throw Error(ErrorCode::invalid_argument, "layers must be >= 1");
  if (opts.classes < 2) throw Error(ErrorCode::invalid_argument, "need at least two classes");
  if (opts.arch != Arch::resnet && opts.n % 2 != 0)
    throw Error(ErrorCode::invalid_argument, "hdnn/chnode need an even state dimension");
  if (opts.lift == Lift::identity && opts.input_dim > opts.n)
    throw Error(ErrorCode::invalid_argument, "identity lift needs n >= input dimension");

  std::mt19937_64 rng(opts.seed);
  auto uniform = [&rng](Index rows, Index cols, double scale) {
    std::uniform_real_distribution<double> dist(-scale, scale);
    Matrix m(rows, cols);
    for (Index c = 0; c < cols; ++c)
      for (Index r = 0; r < rows; ++r) m(r, c) = dist(rng);
    return m;
  };

  ModelSpec spec;
  spec.arch = opts.arch;
  spec.n = opts.n;
  spec.h = opts.h;
  spec.kappa = opts.kappa;
  spec.epsilon_user = opts.epsilon_user;
  spec.train_L = opts.use_L;
  spec.seed = opts.seed;
  spec.J = opts.n % 2 == 0 ? canonical_skew(opts.n) : Matrix::Zero(opts.n, opts.n);

  const double state_scale = 1.0 / std::sqrt(static_cast<double>(opts.n));
  if (opts.lift == Lift::dense) {
    spec.input_layer.weight =
        uniform(opts.n, opts.input_dim, 1.0 / std::sqrt(static_cast<double>(opts.input_dim)));
    spec.input_layer.trainable = true;
  } else {
    spec.input_layer.weight = Matrix::Identity(opts.n, opts.input_dim);
    spec.input_layer.trainable = false;
  }
  spec.input_layer.bias = Vector::Zero(opts.n);

  spec.layers.resize(static_cast<std::size_t>(opts.layers));
  for (auto& layer : spec.layers) {
    layer.K = uniform(opts.n, opts.n, state_scale);
    layer.b = Vector::Zero(opts.n);
    layer.L = opts.use_L ? uniform(opts.n, opts.n, state_scale) : Matrix::Zero(opts.n, opts.n);
  }
  spec.output_layer.weight = uniform(opts.classes, opts.n, state_scale);
  spec.output_layer.bias = Vector::Zero(opts.classes);
  spec.output_layer.trainable = true;
  spec.validate();
  return spec;
}

Vector softmax(const Vector& logits) {
  const double top = logits.maxCoeff();
  Vector e = (logits.array() - top).exp();
  return e / e.sum();
}

namespace {

void check_index(const ModelSpec& spec, Index i) {
  if (i < 0 || i >= spec.depth())
    throw Error(ErrorCode::invalid_argument, "layer index " + std::to_string(i) +
                                                 " out of range [0, " +
                                                 std::to_string(spec.depth()) + ")");
}

}  // namespace

Vector forward_layer(const ModelSpec& spec, Index i, const Vector& xi) {
  check_index(spec, i);
  expect_length(xi, spec.n, "state");
  const LayerParams& p = spec.layers[static_cast<std::size_t>(i)];
  const Vector act = spec.activation.value(p.K * xi + p.b);
  Vector next;
  switch (spec.arch) {
    case Arch::resnet:
      next = xi + act;
      break;
    case Arch::hdnn:
      next = xi + spec.h * (spec.J * (p.K.transpose() * act));
      break;
    case Arch::chnode: {
      // (I + kappa h F) xi + h F (K^T sigma + L^T L xi) == xi + h F grad H
      const Vector grad = p.K.transpose() * act + p.L.transpose() * (p.L * xi) + spec.kappa * xi;
      next = xi + spec.h * (spec.J * grad - spec.gamma * grad);
      break;
    }
  }
  if (!next.allFinite())
    throw Error(ErrorCode::non_finite, "layer " + std::to_string(i) + " produced a non-finite state");
  return next;
}

std::vector<Vector> propagate(const ModelSpec& spec, const Vector& xi0, Index from) {
  std::vector<Vector> states;
  states.reserve(static_cast<std::size_t>(spec.depth() - from + 1));
  states.push_back(xi0);
  for (Index i = from; i < spec.depth(); ++i) states.push_back(forward_layer(spec, i, states.back()));
  return states;
}

Trajectory forward(const ModelSpec& spec, const Vector& x) {
  expect_length(x, spec.input_dim(), "input");
  Trajectory traj;
  traj.states = propagate(spec, spec.input_layer(x));
  traj.logits = spec.output_layer(traj.states.back());
  traj.probabilities = softmax(traj.logits);
  return traj;
}

Index predict(const ModelSpec& spec, const Vector& x) {
  Vector xi = spec.input_layer(x);
  for (Index i = 0; i < spec.depth(); ++i) xi = forward_layer(spec, i, xi);
  Index best = 0;
  spec.output_layer(xi).maxCoeff(&best);
  return best;
}

double hamiltonian_value(const LayerParams& params, double kappa, const Vector& xi,
                         const Activation& act) {
  expect_length(xi, params.K.cols(), "state");
  const Vector z = params.K * xi + params.b;
  double energy = 0.0;
  for (Index k = 0; k < z.size(); ++k) energy += act.antiderivative(z[k]);
  energy += 0.5 * ((params.L * xi).squaredNorm() + kappa * xi.squaredNorm());
  if (!std::isfinite(energy)) throw Error(ErrorCode::non_finite, "Hamiltonian is not finite");
  return energy;
}

Vector hamiltonian_gradient(const LayerParams& params, double kappa, const Vector& xi,
                            const Activation& act) {
  expect_length(xi, params.K.cols(), "state");
  return params.K.transpose() * act.value(params.K * xi + params.b) +
         params.L.transpose() * (params.L * xi) + kappa * xi;
}

Matrix hamiltonian_hessian(const LayerParams& params, double kappa, const Vector& xi,
                           const Activation& act) {
  expect_length(xi, params.K.cols(), "state");
  const Vector d = act.derivative(params.K * xi + params.b);
  const Index n = xi.size();
  Matrix hess = params.K.transpose() * d.asDiagonal() * params.K +
                params.L.transpose() * params.L + kappa * Matrix::Identity(n, n);
  // exact symmetry; the triple product differs from its transpose by rounding
  return (hess + hess.transpose()) / 2.0;
}

Matrix layer_jacobian(const ModelSpec& spec, Index i, const Vector& xi) {
  check_index(spec, i);
  expect_length(xi, spec.n, "state");
  const LayerParams& p = spec.layers[static_cast<std::size_t>(i)];
  const Index n = spec.n;
  const Vector d = spec.activation.derivative(p.K * xi + p.b);
  Matrix jac = Matrix::Identity(n, n);
  switch (spec.arch) {
    case Arch::resnet:
      jac += d.asDiagonal() * p.K;
      break;
    case Arch::hdnn:
      jac += spec.h * spec.J * (p.K.transpose() * d.asDiagonal() * p.K);
      break;
    case Arch::chnode:
      jac += spec.h * spec.damped_interconnection() *
             hamiltonian_hessian(p, spec.kappa, xi, spec.activation);
      break;
  }
  return jac;
}

}  // namespace chnode
