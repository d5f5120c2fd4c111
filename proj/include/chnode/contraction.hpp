#pragma once

#include <vector>

#include <json.hpp>

#include "chnode/model.hpp"

namespace chnode {

/// Uniform Hessian bounds c1 I <= d^2 H / d xi^2 <= c2 I over all layers.
struct HessianBounds {
  double c1;
  double c2;
};

/// Contraction ledger for a CH-NODE with F = J - gamma I.
struct Certificate {
  double c1 = 0;
  double c2 = 0;
  double alpha = 0;  // (c2 - c1) / (c2 + c1)
  double epsilon = 0;
  double gamma = 0;
  double gamma_min = 0;
  double lambda_J = 0;  // largest eigenvalue of J J^T
  double nu = 0;        // gamma / (gamma^2 + lambda_J)
  double beta = 0;      // (c1 + c2) / 2
  double mu = 0;        // (c2 - c1) / 2
  double rho = 0;       // epsilon beta (gamma^2 + lambda_J) / gamma
};

HessianBounds compute_bounds(const ModelSpec& spec, const Activation& act = {});

/// Smallest damping satisfying the contraction condition,
/// sqrt((alpha^2 + eps) lambda_J / (1 - alpha^2 - eps)).
double gamma_min(double alpha, double epsilon, double lambda_J);

/// Fills every derived field for the given bounds, rate and damping.
Certificate make_certificate(HessianBounds bounds, double lambda_J, double epsilon, double gamma);

/// Certificate at gamma = max(spec.gamma, gamma_min); the spec is untouched.
Certificate build_certificate(const ModelSpec& spec, const Activation& act, double epsilon);

/// Certificate evaluated at the damping the spec actually carries, with the
/// rate chosen by the epsilon policy. This is what `certify` checks.
Certificate assess_certificate(const ModelSpec& spec, const Activation& act = {});

/// The 2n x 2n block matrix [[PF + F^T P + (alpha^2 + eps) I, PF], [F^T P, -I]]
/// with P = nu I, F = J - gamma I.
Matrix lmi_matrix(const Certificate& cert, const Matrix& J);
bool verify_lmi(const Certificate& cert, const Matrix& J, double tol = 1e-8);

struct EpsilonPolicy {
  double epsilon_user = 1e-9;
  double margin = 1.001;

  /// min(epsilon_user, (1 - alpha^2) / 2)
  double select(double alpha) const;
};

/// Recomputes (c1, c2, alpha), picks epsilon by policy and sets
/// spec.gamma = margin * gamma_min. Requires exclusive access to the spec.
Certificate update_certificate(ModelSpec& spec, const Activation& act, const EpsilonPolicy& policy);

struct DecayReport {
  std::vector<double> times;
  std::vector<double> distances;
  double slope = 0;  // least-squares slope of log distance against time
  double ratio = 0;  // final / initial distance
  bool contracting = false;
};

/// Distance between the hidden trajectories of two inputs at every step.
DecayReport empirical_contraction(const ModelSpec& spec, const Vector& x_a, const Vector& x_b);

nlohmann::json certificate_to_json(const Certificate& cert);

}  // namespace chnode
