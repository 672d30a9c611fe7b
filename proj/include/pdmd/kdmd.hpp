#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include "pdmd/dmd.hpp"

namespace pdmd {

enum class KernelKind { polynomial, gaussian };

/// Kernel f(x, y) for kernel DMD: (1 + y^T x)^alpha or exp(-|x - y|^2 / sigma^2).
/// A gaussian sigma of 0 means "choose at fit time": sigma_scale times the
/// median pairwise distance between the X0 snapshots.
struct KernelSpec {
  KernelKind kind = KernelKind::gaussian;
  int alpha = 1;
  double sigma = 0.0;
  double sigma_scale = 1.0;

  static KernelSpec polynomial(int alpha) {
    KernelSpec k;
    k.kind = KernelKind::polynomial;
    k.alpha = alpha;
    return k;
  }
  static KernelSpec gaussian(double sigma) {
    KernelSpec k;
    k.kind = KernelKind::gaussian;
    k.sigma = sigma;
    return k;
  }
  static KernelSpec gaussian_median(double scale = 1.0) {
    KernelSpec k;
    k.kind = KernelKind::gaussian;
    k.sigma_scale = scale;
    return k;
  }

  bool needs_sigma() const { return kind == KernelKind::gaussian && sigma <= 0.0; }

  void validate() const {
    if (kind == KernelKind::polynomial) {
      detail::require(alpha >= 1, "polynomial kernel degree must be >= 1");
    } else {
      detail::require(std::isfinite(sigma) && sigma >= 0.0, "gaussian sigma must be finite and >= 0");
      detail::require(std::isfinite(sigma_scale) && sigma_scale > 0.0, "gaussian sigma_scale must be > 0");
    }
  }
};

/// How kdmd_predict advances the state.
enum class KdmdPropagation {
  powers,    ///< u_i = Re sum lambda^i v phi(u_0)
  iterated,  ///< u_{i+1} = Re sum lambda v phi(u_i)
};

struct KdmdOptions {
  double eta = 0.0;
  std::optional<Index> max_rank = std::nullopt;
  bool spectral = true;  ///< false skips the eigendecomposition of K_hat (iterated prediction only)
};

struct KdmdModel {
  KernelSpec kernel;             ///< sigma resolved
  Index rank = 0;
  Matrix gram_vectors;           ///< Q_r, m x r
  Vector gram_values;            ///< Sigma_r, descending positive
  Matrix k_hat;                  ///< r x r
  bool spectral = true;
  CVector eigenvalues;
  CMatrix right_vectors;         ///< columns w_k of K_hat
  CMatrix left_vectors;          ///< columns xi_k with xi_k^* w_k = 1
  CMatrix koopman_modes;         ///< n x r
  Matrix reference_snapshots;    ///< X0
  CMatrix eigenfunction_map;     ///< Q_r Sigma_r^-1 W, m x r
  double dt = 1.0;
  double t0 = 0.0;
};

struct KdmdPrediction {
  Matrix states;
  double max_imag = 0.0;  ///< largest discarded imaginary part; the iterated map is real
};

namespace detail {

/// Squared distances between the columns of a and b, clamped at 0.
inline Matrix squared_distances(const Matrix& a, const Matrix& b) {
  const Vector na = a.colwise().squaredNorm().transpose();
  const Vector nb = b.colwise().squaredNorm().transpose();
  Matrix d = -2.0 * (a.transpose() * b);
  d.colwise() += na;
  d.rowwise() += nb.transpose();
  return d.cwiseMax(0.0);
}

/// Kernel block K(i, j) = f(a_i, b_j).
inline Matrix kernel_block(const KernelSpec& k, const Matrix& a, const Matrix& b) {
  if (k.kind == KernelKind::polynomial) {
    Matrix g = (a.transpose() * b).array() + 1.0;
    return g.array().pow(static_cast<double>(k.alpha)).matrix();
  }
  const Matrix d2 = squared_distances(a, b);
  return (-d2.array() / (k.sigma * k.sigma)).exp().matrix();
}

inline double median_of_upper(const Matrix& d2) {
  const Index m = d2.cols();
  if (m < 2) return 1.0;
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(m * (m - 1) / 2));
  for (Index j = 1; j < m; ++j) {
    for (Index i = 0; i < j; ++i) values.push_back(std::sqrt(d2(i, j)));
  }
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  double med = values[mid];
  if (values.size() % 2 == 0) {
    const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
    med = 0.5 * (med + lower);
  }
  return med;
}

inline double median_pairwise_distance(const Matrix& x) { return median_of_upper(squared_distances(x, x)); }

/// Inner products <x1_i, x0_j> and <x0_i, x0_j>. When x1 is x0 shifted by one
/// column both blocks are slices of a single symmetric product.
struct PairInnerProducts {
  Matrix p00;
  Matrix p10;
  Vector n0;  ///< squared norms of x0 columns
  Vector n1;  ///< squared norms of x1 columns
};

inline PairInnerProducts pair_inner_products(const SnapshotPair& pair) {
  const Index m = pair.count();
  PairInnerProducts out;
  const bool shifted = m == 1 || pair.x1.leftCols(m - 1) == pair.x0.rightCols(m - 1);
  if (shifted) {
    Matrix x(pair.state_dim(), m + 1);
    x << pair.x0, pair.x1.col(m - 1);
    Matrix p = Matrix::Zero(m + 1, m + 1);
    p.selfadjointView<Eigen::Lower>().rankUpdate(x.transpose());
    p.triangularView<Eigen::StrictlyUpper>() = p.transpose();
    out.p00 = p.topLeftCorner(m, m);
    out.p10 = p.bottomLeftCorner(m, m);
    const Vector d = p.diagonal();
    out.n0 = d.head(m);
    out.n1 = d.tail(m);
  } else {
    out.p00 = Matrix::Zero(m, m);
    out.p00.selfadjointView<Eigen::Lower>().rankUpdate(pair.x0.transpose());
    out.p00.triangularView<Eigen::StrictlyUpper>() = out.p00.transpose();
    out.p10 = pair.x1.transpose() * pair.x0;
    out.n0 = out.p00.diagonal();
    out.n1 = pair.x1.colwise().squaredNorm().transpose();
  }
  return out;
}

inline Matrix distances_from_products(const Matrix& p, const Vector& rows, const Vector& cols) {
  Matrix d = -2.0 * p;
  d.colwise() += rows;
  d.rowwise() += cols.transpose();
  return d.cwiseMax(0.0);
}

inline CMatrix real_times_complex(const Matrix& a, const CMatrix& z) {
  CMatrix out(a.rows(), z.cols());
  out.real() = a * z.real();
  out.imag() = a * z.imag();
  return out;
}

/// Resolves the kernel and assembles both Gram matrices from one set of
/// inner products.
inline std::pair<Matrix, Matrix> assemble_grams(const SnapshotPair& pair, const KernelSpec& kernel,
                                                KernelSpec& resolved) {
  kernel.validate();
  resolved = kernel;
  const PairInnerProducts ip = pair_inner_products(pair);
  Matrix g00;
  Matrix g10;
  if (kernel.kind == KernelKind::polynomial) {
    const double a = static_cast<double>(kernel.alpha);
    g00 = (ip.p00.array() + 1.0).pow(a).matrix();
    g10 = (ip.p10.array() + 1.0).pow(a).matrix();
  } else {
    Matrix d00 = distances_from_products(ip.p00, ip.n0, ip.n0);
    d00.diagonal().setZero();
    if (resolved.needs_sigma()) {
      const double med = median_of_upper(d00);
      require(med > 0.0, "kernel DMD: snapshots coincide, cannot choose a gaussian width");
      resolved.sigma = med * kernel.sigma_scale;
    }
    const double s2 = resolved.sigma * resolved.sigma;
    g00 = (-d00.array() / s2).exp().matrix();
    g10 = (-distances_from_products(ip.p10, ip.n1, ip.n0).array() / s2).exp().matrix();
  }
  const Index m = g00.rows();
  for (Index j = 0; j < m; ++j) {
    for (Index i = 0; i < j; ++i) g00(j, i) = g00(i, j);
  }
  require(g00.allFinite() && g10.allFinite(), "gram_matrices: non-finite kernel value");
  return {std::move(g00), std::move(g10)};
}

}  // namespace detail

/// G00(i, j) = f(u_i, u_j), G10(i, j) = f(u_{i+1}, u_j).
inline std::pair<Matrix, Matrix> gram_matrices(const SnapshotPair& pair, const KernelSpec& kernel) {
  pair.validate();
  KernelSpec resolved;
  return detail::assemble_grams(pair, kernel, resolved);
}

inline KdmdModel fit_kernel_dmd(const SnapshotPair& pair, const KernelSpec& kernel,
                                const KdmdOptions& options = {}) {
  pair.validate();
  detail::require(options.eta >= 0.0 && options.eta < 1.0, "fit_kernel_dmd: eta must lie in [0, 1)");
  if (options.max_rank) detail::require(*options.max_rank >= 1, "fit_kernel_dmd: max_rank must be >= 1");

  KdmdModel model;
  const auto [g00, g10] = detail::assemble_grams(pair, kernel, model.kernel);

  Index r = 0;
  const SymmetricEigen sym = symmetric_eigen_leading(g00, [&](const Vector& evals) -> Index {
    const double top = evals(0);
    if (!(top > 0.0)) throw ValidationError("fit_kernel_dmd: Gram matrix has no positive eigenvalue");
    Index d = 0;
    while (d < evals.size() && evals(d) > 1e-12 * top) ++d;
    r = select_rank(evals.head(d).cwiseSqrt(), options.eta);
    if (options.max_rank) r = std::min(r, *options.max_rank);
    return r;
  });
  const Vector sigma = sym.values.head(r).cwiseMax(0.0).cwiseSqrt();
  detail::require((sigma.array() > 0.0).all(), "fit_kernel_dmd: Gram eigenvalues collapsed");

  model.rank = r;
  model.gram_values = sigma;
  model.gram_vectors = sym.vectors;
  const Matrix q_sinv = model.gram_vectors * model.gram_values.cwiseInverse().asDiagonal();  // m x r
  model.k_hat = q_sinv.transpose() * g10 * q_sinv;
  model.reference_snapshots = pair.x0;
  model.dt = pair.dt;
  model.t0 = pair.t0;
  model.spectral = options.spectral;
  if (!options.spectral) return model;

  EigenPairs eig = eig_general(model.k_hat, true);
  model.eigenvalues = eig.eigenvalues;
  model.right_vectors = eig.right_vectors;
  model.left_vectors = *eig.left_vectors;
  model.eigenfunction_map = detail::real_times_complex(q_sinv, model.right_vectors);
  // v_k = X0 Q_r Sigma_r^-1 conj(xi_k)
  model.koopman_modes = detail::real_times_complex(pair.x0 * q_sinv, model.left_vectors.conjugate());
  if (!model.koopman_modes.allFinite() || !model.eigenfunction_map.allFinite()) {
    throw NumericalError("fit_kernel_dmd: non-finite Koopman modes");
  }
  return model;
}

namespace detail {

/// Repeated evaluation of phi(u) with the per-model work hoisted out.
class EigenfunctionEvaluator {
 public:
  explicit EigenfunctionEvaluator(const KdmdModel& model)
      : model_(model),
        ref_norms_(model.reference_snapshots.colwise().squaredNorm()),
        map_re_(model.eigenfunction_map.real()),
        map_im_(model.eigenfunction_map.imag()) {}

  /// f(u, X0) as a row.
  Eigen::RowVectorXd kernel_row(const Vector& u) const {
    require(u.size() == model_.reference_snapshots.rows(), "eigenfunction_values: dimension mismatch");
    require(u.allFinite(), "eigenfunction_values: non-finite state");
    Eigen::RowVectorXd row = u.transpose() * model_.reference_snapshots;
    if (model_.kernel.kind == KernelKind::polynomial) {
      return (row.array() + 1.0).pow(static_cast<double>(model_.kernel.alpha)).matrix();
    }
    const double s2 = model_.kernel.sigma * model_.kernel.sigma;
    return (-((ref_norms_.array() - 2.0 * row.array() + u.squaredNorm()).cwiseMax(0.0)) / s2).exp().matrix();
  }

  CVector operator()(const Vector& u) const {
    require(model_.spectral, "eigenfunction_values: model was fitted without its spectrum");
    const Eigen::RowVectorXd row = kernel_row(u);
    CVector out(map_re_.cols());
    out.real() = (row * map_re_).transpose();
    out.imag() = (row * map_im_).transpose();
    return out;
  }

 private:
  const KdmdModel& model_;
  Eigen::RowVectorXd ref_norms_;
  Matrix map_re_;
  Matrix map_im_;
};

}  // namespace detail

/// phi_k(u) = f(u, X0) Q_r Sigma_r^-1 w_k.
inline CVector eigenfunction_values(const KdmdModel& model, const Vector& u) {
  return detail::EigenfunctionEvaluator(model)(u);
}

inline KdmdPrediction kdmd_predict(const KdmdModel& model, const Vector& u0, const std::vector<Index>& steps,
                                   KdmdPropagation propagation = KdmdPropagation::powers) {
  for (Index s : steps) detail::require(s >= 0, "kdmd_predict: negative step index");
  KdmdPrediction out;
  out.states.resize(u0.size(), static_cast<Index>(steps.size()));
  const detail::EigenfunctionEvaluator phi_of(model);
  if (propagation == KdmdPropagation::powers) {
    detail::require(model.spectral, "kdmd_predict: powers propagation needs a model fitted with its spectrum");
    const CVector phi0 = phi_of(u0);
    for (std::size_t j = 0; j < steps.size(); ++j) {
      CVector coeff(model.rank);
      for (Index k = 0; k < model.rank; ++k) {
        coeff(k) = phi0(k) * detail::ipow(model.eigenvalues(k), steps[j]);
      }
      const CVector u = model.koopman_modes * coeff;
      out.states.col(static_cast<Index>(j)) = u.real();
      out.max_imag = std::max(out.max_imag, u.imag().cwiseAbs().maxCoeff());
    }
    return out;
  }
  // iterated: u <- Re(V Lambda phi(u)). Since conj(Xi) Lambda W^T = K_hat^T this
  // is the real map X0 Q Sigma^-1 K_hat^T Sigma^-1 Q^T f(X0, u)^T.
  const Matrix q_sinv = model.gram_vectors * model.gram_values.cwiseInverse().asDiagonal();
  const Matrix lift = model.k_hat.transpose() * q_sinv.transpose();  // r x m
  const Matrix modes = model.reference_snapshots * q_sinv;            // n x r
  const Index last = steps.empty() ? 0 : *std::max_element(steps.begin(), steps.end());
  Matrix path(u0.size(), last + 1);
  path.col(0) = u0;
  Vector z(model.rank);
  for (Index i = 1; i <= last; ++i) {
    z.noalias() = lift * phi_of.kernel_row(path.col(i - 1)).transpose();
    path.col(i).noalias() = modes * z;
    if (!path.col(i).allFinite()) throw NumericalError("kdmd_predict: iterated state diverged");
  }
  for (std::size_t j = 0; j < steps.size(); ++j) out.states.col(static_cast<Index>(j)) = path.col(steps[j]);
  return out;
}

}  // namespace pdmd
