#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "chnode/contraction.hpp"
#include "support.hpp"

using namespace chnode;
using chnode::test::linear_chnode;
using chnode::test::random_spec;

namespace {

// Schur-reduced scalar form of the LMI for J J^T = I:
// -gamma^2 / (gamma^2 + 1) + alpha^2 + eps <= 0
bool scalar_condition(double alpha, double eps, double gamma) {
  return -gamma * gamma / (gamma * gamma + 1.0) + alpha * alpha + eps <= 0.0;
}

}  // namespace

TEST_CASE("compute_bounds examples") {
  ModelSpec s = linear_chnode(2, 1, 0.1, 0.04, 0);
  s.layers[0].K = Matrix::Identity(2, 2);
  auto b = compute_bounds(s);
  CHECK(b.c1 == doctest::Approx(0.04));
  CHECK(b.c2 == doctest::Approx(1.04));

  ModelSpec z = linear_chnode(2, 3, 0.1, 0.5, 0);
  b = compute_bounds(z);
  CHECK(b.c1 == doctest::Approx(0.5));
  CHECK(b.c2 == doctest::Approx(0.5));

  ModelSpec two = linear_chnode(2, 2, 0.1, 0.1, 0);
  two.layers[0].K = Matrix::Identity(2, 2);
  two.layers[1].K = Matrix::Zero(2, 2);
  two.layers[1].K(0, 0) = 2;
  b = compute_bounds(two);
  CHECK(b.c1 == doctest::Approx(0.1));
  CHECK(b.c2 == doctest::Approx(4.1));
}

TEST_CASE("compute_bounds properties") {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 40; ++t) {
    ModelSpec s = random_spec(rng, Arch::chnode, 2 * (1 + t % 3), 4, 2, 2, t % 2 == 1);
    const auto b = compute_bounds(s);
    CHECK(b.c1 > 0);
    CHECK(b.c1 <= b.c2);
    if (t % 2 == 0) CHECK(b.c1 == s.kappa);
    ModelSpec p = s;
    std::reverse(p.layers.begin(), p.layers.end());
    std::swap(p.layers[0], p.layers[2]);
    const auto bp = compute_bounds(p);
    CHECK(bp.c1 == b.c1);
    CHECK(bp.c2 == b.c2);
  }
}

TEST_CASE("gamma_min") {
  // high-precision evaluation: 0.37121456442938850848
  CHECK(gamma_min(1.0 / 3, 0.01, 1.0) == doctest::Approx(0.3712145644293885).epsilon(1e-13));
  CHECK(gamma_min(1.0 / 3, 0.01, 1.0) == doctest::Approx(0.371213).epsilon(1e-5));
  for (double eps : {1e-9, 1e-3, 0.2, 0.7}) {
    CHECK(gamma_min(0.0, eps, 1.0) == doctest::Approx(std::sqrt(eps / (1 - eps))));
    CHECK(gamma_min(0.5, eps / 2, 0.0) == 0.0);
  }
  try {
    gamma_min(0.9, 0.2, 1.0);
    FAIL("expected epsilon_too_large");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::epsilon_too_large);
  }
}

TEST_CASE("build_certificate examples") {
  ModelSpec s = linear_chnode(2, 1, 0.1, 1.0, 0);
  Certificate c = build_certificate(s, {}, 0.5);
  CHECK(c.c1 == doctest::Approx(1));
  CHECK(c.c2 == doctest::Approx(1));
  CHECK(c.alpha == 0.0);
  CHECK(c.gamma_min == doctest::Approx(1));
  CHECK(c.gamma == doctest::Approx(1));
  CHECK(c.beta == doctest::Approx(1));
  CHECK(c.mu == 0.0);
  CHECK(s.gamma == 0.0);

  ModelSpec k = linear_chnode(2, 1, 0.1, 0.04, 0);
  k.layers[0].K = Matrix::Identity(2, 2);
  c = build_certificate(k, {}, 1e-4);
  CHECK(c.alpha == doctest::Approx(1.0 / 1.08).epsilon(1e-9));
  // high-precision evaluation: 0.1425611796982167, 2.4524543424841493
  CHECK(1 - c.alpha * c.alpha - c.epsilon == doctest::Approx(0.1425611796982167).epsilon(1e-12));
  CHECK(c.gamma_min == doctest::Approx(2.4524543424841493).epsilon(1e-12));
  CHECK(c.rho * c.gamma / (c.gamma * c.gamma + c.lambda_J) ==
        doctest::Approx(c.epsilon * c.beta).epsilon(1e-14));
  CHECK(c.alpha == doctest::Approx(c.mu / c.beta).epsilon(1e-14));

  // spec damping above the minimum is kept
  k.gamma = 10;
  CHECK(build_certificate(k, {}, 1e-4).gamma == 10);

  try {
    build_certificate(k, {}, 0.2);
    FAIL("expected epsilon_too_large");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::epsilon_too_large);
    CHECK(std::string(e.what()).find("0.14") != std::string::npos);
  }
}

TEST_CASE("verify_lmi at and below gamma_min") {
  const Matrix J = canonical_skew(4);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> ua(0.0, 0.95), uf(0.01, 0.99);
  for (int t = 0; t < 200; ++t) {
    const double alpha = ua(rng);
    const double eps = uf(rng) * (1 - alpha * alpha);
    const double c1 = 1.0, c2 = (1 + alpha) / (1 - alpha);
    const double g = gamma_min(alpha, eps, 1.0);
    const Certificate at = make_certificate({c1, c2}, 1.0, eps, g);
    CHECK(at.alpha == doctest::Approx(alpha).epsilon(1e-12));
    CHECK(verify_lmi(at, J, 1e-8));
    CHECK_FALSE(verify_lmi(make_certificate({c1, c2}, 1.0, eps, 0.9 * g), J, 1e-8));
    // equivalence with the scalar condition away from the boundary
    for (double f : {0.5, 0.95, 1.05, 2.0}) {
      const Certificate c = make_certificate({c1, c2}, 1.0, eps, f * g);
      CHECK(verify_lmi(c, J, 1e-8) == scalar_condition(alpha, eps, f * g));
    }
  }
  CHECK(verify_lmi(make_certificate({1, 1}, 1.0, 1e-12, 1.0), J));
}

TEST_CASE("lmi_matrix structure") {
  const Certificate c = make_certificate({0.5, 2.0}, 1.0, 0.01, 1.5);
  const Matrix m = lmi_matrix(c, canonical_skew(2));
  CHECK(m.rows() == 4);
  CHECK((m - m.transpose()).cwiseAbs().maxCoeff() == 0.0);
  CHECK(m.bottomRightCorner(2, 2) == -Matrix::Identity(2, 2));
  CHECK_THROWS_AS(lmi_matrix(c, Matrix::Zero(2, 3)), Error);
}

TEST_CASE("update_certificate") {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 30; ++t) {
    ModelSpec s = random_spec(rng, Arch::chnode, 2 * (1 + t % 3), 3, 2, 2, t % 3 == 0);
    s.epsilon_user = t % 2 ? 1e-9 : 0.3;
    const EpsilonPolicy policy{s.epsilon_user};
    const Certificate a = update_certificate(s, {}, policy);
    CHECK(s.gamma == doctest::Approx(1.001 * a.gamma_min).epsilon(1e-14));
    CHECK(verify_lmi(a, s.J, 1e-8));
    CHECK(a.epsilon <= 0.5 * (1 - a.alpha * a.alpha));
    const Certificate b = update_certificate(s, {}, policy);
    CHECK(b.gamma == a.gamma);
    CHECK(b.c2 == a.c2);

    ModelSpec d = s;
    for (auto& l : d.layers) l.L.setZero();
    const Certificate base = update_certificate(d, {}, policy);
    for (auto& l : d.layers) l.K *= 2;
    const Certificate twice = update_certificate(d, {}, policy);
    CHECK(twice.c2 - d.kappa == doctest::Approx(4 * (base.c2 - d.kappa)).epsilon(1e-9));
    CHECK(twice.alpha > base.alpha);
    CHECK(twice.gamma > base.gamma);
  }

  // large kappa: alpha -> 0, gamma_min -> sqrt(eps / (1 - eps))
  ModelSpec big = random_spec(rng, Arch::chnode, 2, 2, 2, 2);
  big.kappa = 1e9;
  const Certificate c = update_certificate(big, {}, EpsilonPolicy{0.01});
  CHECK(c.alpha < 1e-8);
  CHECK(c.gamma_min == doctest::Approx(std::sqrt(0.01 / 0.99)).epsilon(1e-6));

  ModelSpec r = random_spec(rng, Arch::resnet, 2, 2, 2, 2);
  CHECK_THROWS_AS(update_certificate(r, {}, EpsilonPolicy{}), Error);
}

TEST_CASE("assess_certificate uses the stored damping") {
  std::mt19937_64 rng(4);
  ModelSpec s = random_spec(rng, Arch::chnode, 4, 2, 2, 2);
  update_certificate(s, {}, EpsilonPolicy{s.epsilon_user});
  CHECK(verify_lmi(assess_certificate(s), s.J));
  s.gamma *= 0.5;
  CHECK_FALSE(verify_lmi(assess_certificate(s), s.J));
}

TEST_CASE("empirical contraction, linear flow") {
  const ModelSpec s = linear_chnode(2, 1000, 1e-3, 1.0, 0.5);
  Vector a(2), b(2);
  a << 1.0, -0.5;
  b << -0.3, 0.8;
  const DecayReport r = empirical_contraction(s, a, b);
  CHECK(r.times.size() == 1001);
  CHECK(r.times.back() == doctest::Approx(1.0));
  CHECK(std::abs(r.ratio / std::exp(-0.5) - 1) < 0.01);
  CHECK(r.contracting);
  CHECK(std::abs(r.slope + 0.5) <= 5 * 0.25 * 1e-3 + 1e-9);

  for (double h : {1e-2, 5e-3, 1e-3}) {
    for (double gamma : {0.1, 0.5, 1.0, 2.0}) {
      const ModelSpec m = linear_chnode(4, static_cast<Index>(std::lround(1.0 / h)), h, 1.0, gamma);
      const DecayReport d = empirical_contraction(m, Vector::Ones(4), Vector::Zero(4));
      // each Euler step scales distances by |1 - h gamma + i h| exactly
      const double per_step = 0.5 * std::log((1 - h * gamma) * (1 - h * gamma) + h * h) / h;
      CHECK(d.slope == doctest::Approx(per_step).epsilon(1e-9));
      // the rotation adds h (1 - gamma^2) / 2 to the slope, under 5 gamma^2 h once gamma >= 0.3
      if (gamma >= 0.3) CHECK(std::abs(d.slope + gamma) <= 5 * gamma * gamma * h);
    }
  }
  CHECK_THROWS_AS(empirical_contraction(s, a, a), Error);
}

TEST_CASE("certificate json") {
  const Certificate c = make_certificate({0.5, 2.0}, 1.0, 0.01, 1.5);
  const auto j = certificate_to_json(c);
  for (const char* key : {"c1", "c2", "alpha", "epsilon", "gamma", "gamma_min", "lambda_J", "nu",
                          "beta", "mu", "rho"})
    CHECK(j.contains(key));
  CHECK(j["rho"].get<double>() == c.rho);
}
