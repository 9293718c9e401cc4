// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tsr/errors.hpp"

namespace tsr {

using Index = Eigen::Index;

/// Row-major dense matrix; the one tensor type used for gradients, bases,
/// cores and moments.
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using DenseMatrix = Matrix<double>;
using DenseVector = Vector<double>;

namespace detail {

// Column-major scratch type for the factorizations, which sweep columns.
template <typename Scalar>
using ColMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor>;

inline std::string shape_str(Index r, Index c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

template <typename A, typename B>
void require_same_shape(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b,
                        const char* op) {
  require(a.rows() == b.rows() && a.cols() == b.cols(),
          std::string(op) + ": shape mismatch " + shape_str(a.rows(), a.cols()) + " vs " +
              shape_str(b.rows(), b.cols()));
}

// Appends orthonormal columns to q (whose first `valid` columns are already
// orthonormal) until it has `target` columns. Each new column is the
// standard basis vector with the largest component outside the current span,
// orthogonalized twice; ties go to the lowest index.
template <typename Scalar>
ColMatrix<Scalar> complete_basis(const ColMatrix<Scalar>& q, Index target) {
  const Index m = q.rows();
  require(target <= m, "complete_basis: cannot build " + std::to_string(target) +
                           " orthonormal columns in dimension " + std::to_string(m));
  ColMatrix<Scalar> out(m, target);
  out.leftCols(q.cols()) = q;
  for (Index c = q.cols(); c < target; ++c) {
    const auto basis = out.leftCols(c);
    Index best = 0;
    Scalar best_residual = Scalar(-1);
    for (Index i = 0; i < m; ++i) {
      const Scalar residual = Scalar(1) - basis.row(i).squaredNorm();
      if (residual > best_residual) {
        best_residual = residual;
        best = i;
      }
    }
    Vector<Scalar> v = Vector<Scalar>::Zero(m);
    v(best) = Scalar(1);
    for (int pass = 0; pass < 2; ++pass) {
      v -= basis * (basis.transpose() * v);
    }
    out.col(c) = v / v.norm();
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Products and elementwise kernels. Shapes are checked in every build type;
// a mismatch raises ContractViolation rather than tripping an Eigen assert.
// ---------------------------------------------------------------------------

template <typename A, typename B>
Matrix<typename A::Scalar> matmul(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  require(a.cols() == b.rows(), "matmul: inner dimensions " + detail::shape_str(a.rows(), a.cols()) +
                                    " * " + detail::shape_str(b.rows(), b.cols()));
  return a * b;
}

/// AᵀB
template <typename A, typename B>
Matrix<typename A::Scalar> matmul_tn(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  require(a.rows() == b.rows(), "matmul_tn: row counts differ " +
                                    detail::shape_str(a.rows(), a.cols()) + " vs " +
                                    detail::shape_str(b.rows(), b.cols()));
  return a.transpose() * b;
}

/// ABᵀ
template <typename A, typename B>
Matrix<typename A::Scalar> matmul_nt(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  require(a.cols() == b.cols(), "matmul_nt: column counts differ " +
                                    detail::shape_str(a.rows(), a.cols()) + " vs " +
                                    detail::shape_str(b.rows(), b.cols()));
  return a * b.transpose();
}

template <typename A>
typename A::Scalar frob_norm(const Eigen::MatrixBase<A>& a) {
  return a.norm();
}

template <typename A, typename B>
Matrix<typename A::Scalar> hadamard(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  detail::require_same_shape(a, b, "hadamard");
  return a.cwiseProduct(b);
}

/// alpha*A + beta*B
template <typename A, typename B>
Matrix<typename A::Scalar> scale_add(const Eigen::MatrixBase<A>& a, typename A::Scalar alpha,
                                     const Eigen::MatrixBase<B>& b, typename A::Scalar beta) {
  detail::require_same_shape(a, b, "scale_add");
  return alpha * a + beta * b;
}

template <typename A>
bool all_finite(const Eigen::MatrixBase<A>& a) {
  return a.allFinite();
}

/// First `cols` columns of the rows x rows identity.
template <typename Scalar = double>
Matrix<Scalar> identity_columns(Index rows, Index cols) {
  require(cols <= rows, "identity_columns: more columns than rows");
  return Matrix<Scalar>::Identity(rows, cols);
}

/// ‖QᵀQ − I‖_F
template <typename A>
typename A::Scalar orthonormality_defect(const Eigen::MatrixBase<A>& q) {
  using Scalar = typename A::Scalar;
  const Matrix<Scalar> gram = q.transpose() * q;
  return (gram - Matrix<Scalar>::Identity(q.cols(), q.cols())).norm();
}

// ---------------------------------------------------------------------------
// Orthonormalization
// ---------------------------------------------------------------------------

/// Orthonormal basis of the column space of M via Householder thin QR.
///
/// Columns whose residual (after the reflections of the previously accepted
/// columns) falls below a tolerance relative to ‖M‖_F are dropped, so the
/// result has the numerical column rank of M. Each returned column is
/// oriented so the corresponding diagonal entry of R is positive; a single
/// column therefore comes back as M/‖M‖.
///
/// An all-zero M yields the first min(m, k) columns of the identity.
template <typename Derived>
Matrix<typename Derived::Scalar> orth(const Eigen::MatrixBase<Derived>& input) {
  using Scalar = typename Derived::Scalar;
  const Index m = input.rows();
  const Index k = input.cols();
  require(m >= 1 && k >= 1, "orth: empty input " + detail::shape_str(m, k));

  detail::ColMatrix<Scalar> a = input;
  const Scalar scale = a.norm();
  if (!(scale > Scalar(0))) {
    return identity_columns<Scalar>(m, std::min(m, k));
  }
  const Scalar tol = Scalar(10) * std::numeric_limits<Scalar>::epsilon() *
                     static_cast<Scalar>(std::max(m, k)) * scale;

  std::vector<Vector<Scalar>> reflectors;
  std::vector<Scalar> diag_sign;
  Index p = 0;
  for (Index j = 0; j < k && p < m; ++j) {
    auto x = a.col(j).tail(m - p);
    const Scalar norm = x.norm();
    if (norm <= tol) {
      continue;
    }
    const Scalar alpha = x(0) >= Scalar(0) ? -norm : norm;
    Vector<Scalar> v = x;
    v(0) -= alpha;
    const Scalar vv = v.squaredNorm();
    for (Index c = j + 1; c < k; ++c) {
      auto col = a.col(c).tail(m - p);
      col -= (Scalar(2) * v.dot(col) / vv) * v;
    }
    reflectors.push_back(std::move(v));
    diag_sign.push_back(alpha > Scalar(0) ? Scalar(1) : Scalar(-1));
    ++p;
  }

  // Q = H_0 H_1 ... H_{p-1} [I_p; 0]
  detail::ColMatrix<Scalar> q = detail::ColMatrix<Scalar>::Identity(m, p);
  for (Index h = p - 1; h >= 0; --h) {
    const auto& v = reflectors[static_cast<std::size_t>(h)];
    auto block = q.bottomRows(m - h);
    const Vector<Scalar> w = block.transpose() * v;
    block -= (Scalar(2) / v.squaredNorm()) * v * w.transpose();
  }
  for (Index c = 0; c < p; ++c) {
    q.col(c) *= diag_sign[static_cast<std::size_t>(c)];
  }
  return q;
}

/// orth(M) completed with standard-basis directions to exactly `target`
/// orthonormal columns. Rank-deficient sketches keep a fixed width this way,
/// which the collective requires (every worker contributes the same shape).
template <typename Derived>
Matrix<typename Derived::Scalar> orth_complete(const Eigen::MatrixBase<Derived>& input,
                                               Index target) {
  using Scalar = typename Derived::Scalar;
  require(target >= 1 && target <= input.rows(),
          "orth_complete: target width " + std::to_string(target) + " invalid for " +
              std::to_string(input.rows()) + " rows");
  detail::ColMatrix<Scalar> q = orth(input);
  if (q.cols() > target) {
    q = q.leftCols(target).eval();
  }
  if (q.cols() == target) {
    return q;
  }
  return detail::complete_basis<Scalar>(q, target);
}

// ---------------------------------------------------------------------------
// SVD
// ---------------------------------------------------------------------------

template <typename Scalar>
struct SvdResult {
  Matrix<Scalar> u;      ///< rows x p, orthonormal columns
  Vector<Scalar> sigma;  ///< p values, non-negative, descending
  Matrix<Scalar> v;      ///< cols x p, orthonormal columns
};

/// Thin SVD A = U diag(sigma) Vᵀ with p = min(rows, cols), computed by
/// one-sided (Hestenes) Jacobi on whichever of A, Aᵀ is tall.
///
/// Sign convention: in every left singular vector the entry of largest
/// magnitude is non-negative (ties resolved towards the lowest row), with the
/// right vector flipped in tandem. Singular directions belonging to
/// (numerically) zero singular values are completed to an orthonormal set.
template <typename Derived>
SvdResult<typename Derived::Scalar> svd(const Eigen::MatrixBase<Derived>& input) {
  using Scalar = typename Derived::Scalar;
  using ColM = detail::ColMatrix<Scalar>;
  const Index rows = input.rows();
  const Index cols = input.cols();
  require(rows >= 1 && cols >= 1, "svd: empty input");

  const bool transposed = rows < cols;
  ColM x = transposed ? ColM(input.transpose()) : ColM(input);
  const Index len = x.rows();  // >= p
  const Index p = x.cols();
  ColM rot = ColM::Identity(p, p);

  const Scalar eps = std::numeric_limits<Scalar>::epsilon();
  constexpr int kMaxSweeps = 80;
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    bool rotated = false;
    for (Index i = 0; i < p - 1; ++i) {
      for (Index j = i + 1; j < p; ++j) {
        const Scalar alpha = x.col(i).squaredNorm();
        const Scalar beta = x.col(j).squaredNorm();
        const Scalar gamma = x.col(i).dot(x.col(j));
        if (gamma == Scalar(0) || std::abs(gamma) <= eps * std::sqrt(alpha * beta)) {
          continue;
        }
        rotated = true;
        const Scalar zeta = (beta - alpha) / (Scalar(2) * gamma);
        const Scalar t = (zeta >= Scalar(0) ? Scalar(1) : Scalar(-1)) /
                         (std::abs(zeta) + std::sqrt(Scalar(1) + zeta * zeta));
        const Scalar c = Scalar(1) / std::sqrt(Scalar(1) + t * t);
        const Scalar s = c * t;
        for (Index r = 0; r < len; ++r) {
          const Scalar xi = x(r, i);
          const Scalar xj = x(r, j);
          x(r, i) = c * xi - s * xj;
          x(r, j) = s * xi + c * xj;
        }
        for (Index r = 0; r < p; ++r) {
          const Scalar ri = rot(r, i);
          const Scalar rj = rot(r, j);
          rot(r, i) = c * ri - s * rj;
          rot(r, j) = s * ri + c * rj;
        }
      }
    }
    if (!rotated) {
      break;
    }
  }

  Vector<Scalar> norms(p);
  for (Index c = 0; c < p; ++c) {
    norms(c) = x.col(c).norm();
  }
  std::vector<Index> order(static_cast<std::size_t>(p));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return norms(a) > norms(b); });

  const Scalar sigma_max = p > 0 ? norms(order.front()) : Scalar(0);
  const Scalar tiny = sigma_max * eps * static_cast<Scalar>(len);

  Vector<Scalar> sigma(p);
  ColM tall_vecs(len, p);  // normalized columns of x
  ColM short_vecs(p, p);   // matching columns of rot
  Index n_valid = 0;
  for (Index c = 0; c < p; ++c) {
    const Index src = order[static_cast<std::size_t>(c)];
    sigma(c) = norms(src);
    short_vecs.col(c) = rot.col(src);
    if (norms(src) > tiny && norms(src) > Scalar(0)) {
      tall_vecs.col(c) = x.col(src) / norms(src);
      ++n_valid;
    }
  }
  // Sorted descending, so the valid columns form a prefix.
  if (n_valid < p) {
    tall_vecs = detail::complete_basis<Scalar>(ColM(tall_vecs.leftCols(n_valid)), p);
  }

  SvdResult<Scalar> out;
  out.sigma = sigma;
  out.u = transposed ? Matrix<Scalar>(short_vecs) : Matrix<Scalar>(tall_vecs);
  out.v = transposed ? Matrix<Scalar>(tall_vecs) : Matrix<Scalar>(short_vecs);

  for (Index c = 0; c < p; ++c) {
    Index arg = 0;
    for (Index r = 1; r < out.u.rows(); ++r) {
      if (std::abs(out.u(r, c)) > std::abs(out.u(arg, c))) {
        arg = r;
      }
    }
    if (out.u(arg, c) < Scalar(0)) {
      out.u.col(c) *= Scalar(-1);
      out.v.col(c) *= Scalar(-1);
    }
  }
  return out;
}

/// SVD of the small k x n reduced matrix of a refresh. Returns U~ (k x k),
/// sigma (k) and V~ (n x k); wide input is expected but tall input is
/// handled by transposing internally.
template <typename Derived>
SvdResult<typename Derived::Scalar> svd_small(const Eigen::MatrixBase<Derived>& b) {
  return svd(b);
}

}  // namespace tsr
