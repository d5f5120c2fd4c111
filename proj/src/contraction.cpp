#include "chnode/contraction.hpp"

#include <algorithm>
#include <cmath>

#include "chnode/error.hpp"
#include "chnode/linalg.hpp"

namespace chnode {

HessianBounds compute_bounds(const ModelSpec& spec, const Activation& act) {
  if (spec.layers.empty()) throw Error(ErrorCode::invalid_argument, "no layers to bound");
  if (!(spec.kappa > 0.0)) throw Error(ErrorCode::invalid_argument, "kappa must be > 0");
  double c1 = std::numeric_limits<double>::infinity();
  double c2 = -std::numeric_limits<double>::infinity();
  for (const auto& layer : spec.layers) {
    const auto ll = sym_eig_bounds(Matrix(layer.L.transpose() * layer.L));
    const double kk = sym_eig_bounds(Matrix(layer.K.transpose() * layer.K)).lambda_max;
    c1 = std::min(c1, std::max(ll.lambda_min, 0.0));
    c2 = std::max(c2, ll.lambda_max + act.slope_bound() * std::max(kk, 0.0));
  }
  return {c1 + spec.kappa, c2 + spec.kappa};
}

double gamma_min(double alpha, double epsilon, double lambda_J) {
  if (!(epsilon > 0.0) || !(lambda_J >= 0.0))
    throw Error(ErrorCode::invalid_argument, "gamma_min needs epsilon > 0 and lambda_J >= 0");
  const double slack = 1.0 - alpha * alpha - epsilon;
  if (!(slack > 0.0)) {
    throw Error(ErrorCode::epsilon_too_large,
                "need 1 - alpha^2 - epsilon > 0 (alpha = " + std::to_string(alpha) +
                    ", epsilon = " + std::to_string(epsilon) + ")");
  }
  return std::sqrt((alpha * alpha + epsilon) * lambda_J / slack);
}

Certificate make_certificate(HessianBounds bounds, double lambda_J, double epsilon, double gamma) {
  if (!(bounds.c1 > 0.0) || bounds.c2 < bounds.c1)
    throw Error(ErrorCode::invalid_argument, "Hessian bounds must satisfy 0 < c1 <= c2");
  Certificate cert;
  cert.c1 = bounds.c1;
  cert.c2 = bounds.c2;
  cert.alpha = (bounds.c2 - bounds.c1) / (bounds.c2 + bounds.c1);
  cert.epsilon = epsilon;
  cert.lambda_J = lambda_J;
  const double max_eps = 1.0 - cert.alpha * cert.alpha;
  if (!(epsilon < max_eps)) {
    throw Error(ErrorCode::epsilon_too_large,
                "epsilon " + std::to_string(epsilon) + " must be below 1 - alpha^2 = " +
                    std::to_string(max_eps));
  }
  cert.gamma_min = gamma_min(cert.alpha, epsilon, lambda_J);
  cert.gamma = gamma;
  cert.beta = 0.5 * (bounds.c1 + bounds.c2);
  cert.mu = 0.5 * (bounds.c2 - bounds.c1);
  const double denom = gamma * gamma + lambda_J;
  cert.nu = denom > 0.0 ? gamma / denom : 0.0;
  cert.rho = gamma > 0.0 ? epsilon * cert.beta * denom / gamma : 0.0;
  return cert;
}

namespace {

double lambda_JJt(const Matrix& J) {
  return sym_eig_bounds(Matrix(J * J.transpose())).lambda_max;
}

}  // namespace

Certificate build_certificate(const ModelSpec& spec, const Activation& act, double epsilon) {
  const HessianBounds bounds = compute_bounds(spec, act);
  const double lj = lambda_JJt(spec.J);
  Certificate cert = make_certificate(bounds, lj, epsilon, spec.gamma);
  return make_certificate(bounds, lj, epsilon, std::max(spec.gamma, cert.gamma_min));
}

double EpsilonPolicy::select(double alpha) const {
  return std::min(epsilon_user, 0.5 * (1.0 - alpha * alpha));
}

Certificate assess_certificate(const ModelSpec& spec, const Activation& act) {
  if (spec.arch != Arch::chnode)
    throw Error(ErrorCode::invalid_argument,
                "contraction certificates exist only for chnode models, not " + to_string(spec.arch));
  const HessianBounds bounds = compute_bounds(spec, act);
  const double alpha = (bounds.c2 - bounds.c1) / (bounds.c2 + bounds.c1);
  const double eps = EpsilonPolicy{spec.epsilon_user}.select(alpha);
  return make_certificate(bounds, lambda_JJt(spec.J), eps, spec.gamma);
}

Matrix lmi_matrix(const Certificate& cert, const Matrix& J) {
  if (J.rows() != J.cols()) throw Error(ErrorCode::dimension_mismatch, "J must be square");
  const Index n = J.rows();
  const Matrix I = Matrix::Identity(n, n);
  const Matrix F = J - cert.gamma * I;
  const Matrix PF = cert.nu * F;
  Matrix block(2 * n, 2 * n);
  block.topLeftCorner(n, n) =
      PF + PF.transpose() + (cert.alpha * cert.alpha + cert.epsilon) * I;
  block.topRightCorner(n, n) = PF;
  block.bottomLeftCorner(n, n) = PF.transpose();
  block.bottomRightCorner(n, n) = -I;
  return block;
}

bool verify_lmi(const Certificate& cert, const Matrix& J, double tol) {
  return is_negative_semidefinite(lmi_matrix(cert, J), tol);
}

Certificate update_certificate(ModelSpec& spec, const Activation& act, const EpsilonPolicy& policy) {
  if (spec.arch != Arch::chnode)
    throw Error(ErrorCode::invalid_argument, "update_certificate requires a chnode model");
  const HessianBounds bounds = compute_bounds(spec, act);
  const double alpha = (bounds.c2 - bounds.c1) / (bounds.c2 + bounds.c1);
  // c1 > 0 keeps alpha strictly below one, so the policy always leaves slack
  if (!(alpha < 1.0)) throw Error(ErrorCode::numerical, "alpha reached 1");
  const double eps = policy.select(alpha);
  const double lj = lambda_JJt(spec.J);
  spec.gamma = policy.margin * gamma_min(alpha, eps, lj);
  return make_certificate(bounds, lj, eps, spec.gamma);
}

DecayReport empirical_contraction(const ModelSpec& spec, const Vector& x_a, const Vector& x_b) {
  if (x_a.size() != x_b.size()) throw Error(ErrorCode::dimension_mismatch, "inputs differ in length");
  const auto traj_a = propagate(spec, spec.input_layer(x_a));
  const auto traj_b = propagate(spec, spec.input_layer(x_b));
  DecayReport report;
  for (std::size_t i = 0; i < traj_a.size(); ++i) {
    report.times.push_back(spec.h * static_cast<double>(i));
    report.distances.push_back((traj_a[i] - traj_b[i]).norm());
  }
  if (!(report.distances.front() > 0.0))
    throw Error(ErrorCode::invalid_argument, "inputs map to the same initial state");

  const auto count = static_cast<double>(report.times.size());
  double mt = 0, ml = 0;
  for (std::size_t i = 0; i < report.times.size(); ++i) {
    mt += report.times[i];
    ml += std::log(std::max(report.distances[i], std::numeric_limits<double>::min()));
  }
  mt /= count;
  ml /= count;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < report.times.size(); ++i) {
    const double dt = report.times[i] - mt;
    sxy += dt * (std::log(std::max(report.distances[i], std::numeric_limits<double>::min())) - ml);
    sxx += dt * dt;
  }
  report.slope = sxy / sxx;
  report.ratio = report.distances.back() / report.distances.front();
  report.contracting = report.distances.back() < report.distances.front() && report.slope < 0.0;
  return report;
}

nlohmann::json certificate_to_json(const Certificate& cert) {
  return {{"c1", cert.c1},         {"c2", cert.c2},       {"alpha", cert.alpha},
          {"epsilon", cert.epsilon}, {"gamma", cert.gamma}, {"gamma_min", cert.gamma_min},
          {"lambda_J", cert.lambda_J}, {"nu", cert.nu},     {"beta", cert.beta},
          {"mu", cert.mu},         {"rho", cert.rho}};
}

}  // namespace chnode
