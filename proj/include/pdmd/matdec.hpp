#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <optional>
#include <vector>

#include "pdmd/error.hpp"

namespace pdmd {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using Index = Eigen::Index;
using Complex = std::complex<double>;

/// Relative singular-value cutoff used when no other tolerance is given.
inline constexpr double kDefaultRankTolerance = 1e-12;

struct CompactSvd {
  Matrix left_vectors;    ///< n x d, orthonormal columns
  Vector singular_values; ///< d, descending, strictly positive
  Matrix right_vectors;   ///< m x d, orthonormal columns
  Index numerical_rank = 0;
};

struct EigenPairs {
  CVector eigenvalues;
  CMatrix right_vectors;                ///< unit-norm columns
  std::optional<CMatrix> left_vectors;  ///< normalized so that xi_k^* w_k = 1
};

namespace detail {

template <class Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
  return m.allFinite();
}

/// Descending modulus; entries whose moduli agree to a relative 1e-12 are
/// ordered by descending imaginary part.
inline std::vector<Index> eigen_order(const CVector& values) {
  std::vector<Index> order(static_cast<std::size_t>(values.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return std::abs(values(a)) > std::abs(values(b));
  });
  std::size_t start = 0;
  while (start < order.size()) {
    const double lead = std::abs(values(order[start]));
    std::size_t stop = start + 1;
    while (stop < order.size() &&
           lead - std::abs(values(order[stop])) <= 1e-12 * std::max(lead, 1e-300)) {
      ++stop;
    }
    std::stable_sort(order.begin() + static_cast<std::ptrdiff_t>(start),
                     order.begin() + static_cast<std::ptrdiff_t>(stop),
                     [&](Index a, Index b) { return values(a).imag() > values(b).imag(); });
    start = stop;
  }
  return order;
}

/// Left eigenvectors from the transpose's eigendecomposition, paired to
/// `values` by greedy nearest eigenvalue (ties go to the lower index).
inline CMatrix left_vectors_by_pairing(const Matrix& a, const CVector& values,
                                       const CMatrix& right) {
  Eigen::EigenSolver<Matrix> solver(a.transpose(), true);
  if (solver.info() != Eigen::Success) {
    throw NumericalError("eigensolver did not converge on the transposed matrix");
  }
  const CVector mu = solver.eigenvalues();
  const CMatrix y = solver.eigenvectors();
  const Index r = values.size();
  std::vector<bool> used(static_cast<std::size_t>(r), false);
  CMatrix left(r, r);
  for (Index k = 0; k < r; ++k) {
    Index best = -1;
    double best_dist = 0.0;
    for (Index j = 0; j < r; ++j) {
      if (used[static_cast<std::size_t>(j)]) continue;
      const double dist = std::abs(mu(j) - values(k));
      if (best < 0 || dist < best_dist) {
        best = j;
        best_dist = dist;
      }
    }
    used[static_cast<std::size_t>(best)] = true;
    // A is real, so A^T conj(xi) = lambda conj(xi).
    CVector xi = y.col(best).conjugate();
    const Complex overlap = xi.dot(right.col(k));  // xi^* w
    if (std::abs(overlap) < 1e-300) {
      throw NumericalError("left and right eigenvectors are orthogonal (defective matrix)");
    }
    left.col(k) = xi / std::conj(overlap);
  }
  return left;
}

}  // namespace detail

/// Thin SVD truncated to the numerical rank (sigma_i > rank_tolerance * sigma_1).
inline CompactSvd compact_svd(const Matrix& m, double rank_tolerance = kDefaultRankTolerance) {
  detail::require(detail::all_finite(m), "compact_svd: input contains non-finite entries");
  detail::require(rank_tolerance >= 0.0, "compact_svd: rank_tolerance must be non-negative");
  CompactSvd out;
  if (m.size() == 0) return out;
  Eigen::BDCSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  Index d = 0;
  if (s.size() > 0 && s(0) > 0.0) {
    const double cutoff = rank_tolerance * s(0);
    while (d < s.size() && s(d) > cutoff) ++d;
  }
  out.numerical_rank = d;
  out.singular_values = s.head(d);
  out.left_vectors = svd.matrixU().leftCols(d);
  out.right_vectors = svd.matrixV().leftCols(d);
  return out;
}

/// All eigenpairs of a real square matrix, sorted by descending modulus.
/// Left eigenvectors come from the inverse of the right eigenvector matrix
/// when it is well conditioned, otherwise from the transpose by pairing.
inline EigenPairs eig_general(const Matrix& a, bool want_left) {
  detail::require(a.rows() == a.cols(), "eig_general: matrix must be square");
  detail::require(detail::all_finite(a), "eig_general: input contains non-finite entries");
  EigenPairs out;
  const Index r = a.rows();
  if (r == 0) {
    out.eigenvalues.resize(0);
    out.right_vectors.resize(0, 0);
    if (want_left) out.left_vectors = CMatrix(0, 0);
    return out;
  }
  Eigen::EigenSolver<Matrix> solver(a, true);
  if (solver.info() != Eigen::Success) {
    throw NumericalError("eig_general: eigensolver did not converge");
  }
  const CVector raw_values = solver.eigenvalues();
  const CMatrix raw_vectors = solver.eigenvectors();
  const auto order = detail::eigen_order(raw_values);

  out.eigenvalues.resize(r);
  out.right_vectors.resize(r, r);
  for (Index k = 0; k < r; ++k) {
    const Index src = order[static_cast<std::size_t>(k)];
    out.eigenvalues(k) = raw_values(src);
    CVector w = raw_vectors.col(src);
    const double norm = w.norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) {
      throw NumericalError("eig_general: degenerate eigenvector");
    }
    out.right_vectors.col(k) = w / norm;
  }
  if (!detail::all_finite(out.right_vectors) || !detail::all_finite(out.eigenvalues)) {
    throw NumericalError("eig_general: non-finite eigenpairs");
  }

  if (want_left) {
    Eigen::PartialPivLU<CMatrix> lu(out.right_vectors);
    const double rcond = lu.rcond();
    if (rcond > 1e-12) {
      out.left_vectors = lu.inverse().adjoint();
    } else {
      out.left_vectors = detail::left_vectors_by_pairing(a, out.eigenvalues, out.right_vectors);
    }
  }
  return out;
}

struct SymmetricEigen {
  Vector values;   ///< all eigenvalues, descending
  Matrix vectors;  ///< eigenvectors for the leading values only
};

/// Eigen-decomposition of a symmetric matrix where only the leading
/// `select(values)` eigenvectors are formed. `select` receives every
/// eigenvalue in descending order and returns how many vectors to keep.
template <class Select>
SymmetricEigen symmetric_eigen_leading(const Matrix& a, Select&& select) {
  detail::require(a.rows() == a.cols(), "symmetric_eigen_leading: matrix must be square");
  detail::require(a.allFinite(), "symmetric_eigen_leading: non-finite input");
  const Index n = a.rows();
  SymmetricEigen out;
  if (n == 0) return out;
#if defined(PDMD_USE_LAPACKE)
  using lint = lapack_int;
  const lint ln = static_cast<lint>(n);
  Matrix work = a;
  Vector diag(n), offd(std::max<Index>(n, 1)), tau(std::max<Index>(n - 1, 1));
  if (LAPACKE_dsytrd(LAPACK_COL_MAJOR, 'L', ln, work.data(), ln, diag.data(), offd.data(), tau.data()) != 0) {
    throw NumericalError("symmetric_eigen_leading: tridiagonal reduction failed");
  }
  Vector values = diag;
  Vector e = offd;
  if (LAPACKE_dsterf(ln, values.data(), e.data()) != 0) {
    throw NumericalError("symmetric_eigen_leading: eigenvalue iteration failed");
  }
  out.values = values.reverse();
  const Index k = std::clamp<Index>(select(static_cast<const Vector&>(out.values)), 0, n);
  out.vectors.resize(n, k);
  if (k == 0) return out;
  Vector w(n);
  Matrix z(n, k);
  std::vector<lint> support(static_cast<std::size_t>(2 * k));
  lint found = 0;
  lapack_logical tryrac = 1;
  e = offd;
  e(n - 1) = 0.0;
  Vector d = diag;
  const lint il = static_cast<lint>(n - k + 1);
  if (LAPACKE_dstemr(LAPACK_COL_MAJOR, 'V', 'I', ln, d.data(), e.data(), 0.0, 0.0, il, ln, &found, w.data(),
                     z.data(), ln, static_cast<lint>(k), support.data(), &tryrac) != 0 ||
      found != static_cast<lint>(k)) {
    throw NumericalError("symmetric_eigen_leading: eigenvector computation failed");
  }
  if (n > 1 && LAPACKE_dormtr(LAPACK_COL_MAJOR, 'L', 'L', 'N', ln, static_cast<lint>(k), work.data(), ln,
                              tau.data(), z.data(), ln) != 0) {
    throw NumericalError("symmetric_eigen_leading: back-transformation failed");
  }
  for (Index j = 0; j < k; ++j) {
    out.vectors.col(j) = z.col(k - 1 - j);
    out.values(j) = w(k - 1 - j);
  }
#else
  Eigen::SelfAdjointEigenSolver<Matrix> sym(a);
  if (sym.info() != Eigen::Success) throw NumericalError("symmetric_eigen_leading: eigensolver failed");
  out.values = sym.eigenvalues().reverse();
  const Index k = std::clamp<Index>(select(static_cast<const Vector&>(out.values)), 0, n);
  out.vectors = sym.eigenvectors().rowwise().reverse().leftCols(k);
#endif
  return out;
}

/// Minimum-norm least-squares solution X = A^+ B.
template <class DerivedA, class DerivedB>
auto least_squares_solve(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
  using ScalarA = typename DerivedA::Scalar;
  using ScalarB = typename DerivedB::Scalar;
  using Result = Eigen::Matrix<ScalarB, Eigen::Dynamic, Eigen::Dynamic>;
  detail::require(a.rows() == b.rows(), "least_squares_solve: row count mismatch");
  detail::require(a.allFinite() && b.allFinite(), "least_squares_solve: non-finite input");
  const Eigen::Matrix<ScalarA, Eigen::Dynamic, Eigen::Dynamic> a_eval = a;
  Eigen::CompleteOrthogonalDecomposition<Eigen::Matrix<ScalarA, Eigen::Dynamic, Eigen::Dynamic>> cod(a_eval);
  if constexpr (std::is_same_v<ScalarA, double> && !std::is_same_v<ScalarB, double>) {
    const Matrix re = b.real();
    const Matrix im = b.imag();
    Result x(a.cols(), b.cols());
    x.real() = cod.solve(re);
    x.imag() = cod.solve(im);
    return x;
  } else {
    Result x = cod.solve(b.template cast<typename Result::Scalar>());
    return x;
  }
}

struct SpdSolveResult {
  Matrix x;
  bool used_fallback = false;  ///< Cholesky failed; solved by least squares instead
};

/// Solves (G + ridge I) X = B by Cholesky, falling back to least squares.
inline SpdSolveResult spd_solve(const Matrix& g, const Matrix& b, double ridge = 0.0) {
  detail::require(g.rows() == g.cols(), "spd_solve: Gram matrix must be square");
  detail::require(g.rows() == b.rows(), "spd_solve: row count mismatch");
  detail::require(ridge >= 0.0, "spd_solve: ridge must be non-negative");
  detail::require(g.allFinite() && b.allFinite(), "spd_solve: non-finite input");
  detail::require((g - g.transpose()).cwiseAbs().maxCoeff() <= 1e-12,
                  "spd_solve: matrix is not symmetric");
  Matrix shifted = g;
  shifted.diagonal().array() += ridge;
  SpdSolveResult out;
  Eigen::LLT<Matrix> llt(shifted);
  if (llt.info() == Eigen::Success) {
    out.x = llt.solve(b);
    if (out.x.allFinite()) return out;
  }
  out.used_fallback = true;
  out.x = least_squares_solve(shifted, b);
  return out;
}

}  // namespace pdmd
