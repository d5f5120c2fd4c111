#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "chnode/error.hpp"
#include "chnode/types.hpp"

namespace chnode {

inline constexpr double kDefaultTol = 1e-9;

template <typename Scalar>
struct SymEigBounds {
  Scalar lambda_min;
  Scalar lambda_max;
};

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& m, const char* what) {
  if (!m.allFinite()) {
    throw Error(ErrorCode::non_finite, std::string(what) + " contains NaN or Inf");
  }
}

template <typename Derived>
void require_symmetric(const Eigen::MatrixBase<Derived>& m, typename Derived::Scalar tol,
                       const char* what) {
  if (m.rows() != m.cols()) {
    throw Error(ErrorCode::dimension_mismatch,
                std::string(what) + " is " + std::to_string(m.rows()) + "x" +
                    std::to_string(m.cols()) + ", expected square");
  }
  if (m.size() == 0) throw Error(ErrorCode::dimension_mismatch, std::string(what) + " is empty");
  require_finite(m, what);
  const auto asym = (m - m.transpose()).cwiseAbs().maxCoeff();
  if (asym > tol) {
    throw Error(ErrorCode::not_symmetric,
                std::string(what) + " deviates from symmetry by " + std::to_string(asym));
  }
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi sweeps.
///
/// Each sweep annihilates every off-diagonal pair (p, q) once with a plane
/// rotation; iteration stops when the off-diagonal mass is negligible
/// relative to the Frobenius norm. The input is symmetrized first, so only
/// the average of the two triangles is seen. Eigenvalues are returned
/// unsorted.
template <typename Derived>
VectorX<typename Derived::Scalar> jacobi_eigenvalues(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  const Index n = m.rows();
  MatrixX<Scalar> a = (m + m.transpose()) / Scalar(2);
  const Scalar scale = a.norm();
  if (scale == Scalar(0)) return VectorX<Scalar>::Zero(n);
  const Scalar stop = std::numeric_limits<Scalar>::epsilon() * scale;

  for (int sweep = 0; sweep < 100; ++sweep) {
    Scalar off = 0;
    for (Index p = 0; p < n; ++p)
      for (Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (std::sqrt(off) <= stop) break;

    for (Index p = 0; p < n - 1; ++p) {
      for (Index q = p + 1; q < n; ++q) {
        const Scalar apq = a(p, q);
        if (std::abs(apq) <= std::numeric_limits<Scalar>::min()) continue;
        // tan of the rotation angle, smaller root for stability
        const Scalar theta = (a(q, q) - a(p, p)) / (Scalar(2) * apq);
        const Scalar t = (theta >= 0 ? Scalar(1) : Scalar(-1)) /
                         (std::abs(theta) + std::sqrt(theta * theta + Scalar(1)));
        const Scalar c = Scalar(1) / std::sqrt(t * t + Scalar(1));
        const Scalar s = t * c;
        for (Index k = 0; k < n; ++k) {
          const Scalar akp = a(k, p);
          const Scalar akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Index k = 0; k < n; ++k) {
          const Scalar apk = a(p, k);
          const Scalar aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = Scalar(0);
        a(q, p) = Scalar(0);
      }
    }
  }
  return a.diagonal();
}

template <typename Derived>
SymEigBounds<typename Derived::Scalar> sym_eig_bounds(
    const Eigen::MatrixBase<Derived>& m, typename Derived::Scalar tol = kDefaultTol) {
  require_symmetric(m, tol, "sym_eig_bounds input");
  const auto eig = jacobi_eigenvalues(m);
  return {eig.minCoeff(), eig.maxCoeff()};
}

/// Largest singular value, read off the smaller of the two Gram matrices.
template <typename Derived>
typename Derived::Scalar spectral_norm(const Eigen::MatrixBase<Derived>& a,
                                       typename Derived::Scalar tol = kDefaultTol) {
  using Scalar = typename Derived::Scalar;
  if (a.size() == 0) throw Error(ErrorCode::dimension_mismatch, "spectral_norm of empty matrix");
  require_finite(a, "spectral_norm input");
  MatrixX<Scalar> gram;
  if (a.rows() <= a.cols())
    gram = a * a.transpose();
  else
    gram = a.transpose() * a;
  const Scalar top = sym_eig_bounds(gram, std::max(tol, Scalar(1e-12) * gram.norm())).lambda_max;
  return std::sqrt(std::max(top, Scalar(0)));
}

template <typename Derived>
bool is_negative_semidefinite(const Eigen::MatrixBase<Derived>& m,
                              typename Derived::Scalar tol = kDefaultTol) {
  return sym_eig_bounds(m, tol).lambda_max <= tol;
}

/// J = [[0, I], [-I, 0]] for even n.
template <typename Scalar = double>
MatrixX<Scalar> canonical_skew(Index n) {
  if (n < 2 || n % 2 != 0) {
    throw Error(ErrorCode::invalid_argument,
                "canonical_skew needs an even dimension >= 2, got " + std::to_string(n));
  }
  const Index half = n / 2;
  MatrixX<Scalar> j = MatrixX<Scalar>::Zero(n, n);
  j.topRightCorner(half, half).setIdentity();
  j.bottomLeftCorner(half, half) = -MatrixX<Scalar>::Identity(half, half);
  return j;
}

}  // namespace chnode
