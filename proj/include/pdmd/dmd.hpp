#pragma once

#include <cmath>
#include <complex>
#include <optional>
#include <vector>

#include "pdmd/matdec.hpp"

namespace pdmd {

/// Shifted snapshot matrices X0 = [u_0 .. u_{m-1}], X1 = [u_1 .. u_m].
struct SnapshotPair {
  Matrix x0;
  Matrix x1;
  double dt = 1.0;
  double t0 = 0.0;

  static SnapshotPair from_trajectory(const Matrix& x, double dt = 1.0, double t0 = 0.0) {
    detail::require(x.cols() >= 2, "snapshot trajectory needs at least 2 columns");
    SnapshotPair p;
    p.x0 = x.leftCols(x.cols() - 1);
    p.x1 = x.rightCols(x.cols() - 1);
    p.dt = dt;
    p.t0 = t0;
    p.validate();
    return p;
  }

  Index state_dim() const { return x0.rows(); }
  Index count() const { return x0.cols(); }

  void validate() const {
    detail::require(x0.rows() == x1.rows() && x0.cols() == x1.cols(),
                    "snapshot pair: x0 and x1 must have identical shape");
    detail::require(x0.cols() >= 1 && x0.rows() >= 1, "snapshot pair is empty");
    detail::require(x0.allFinite() && x1.allFinite(), "snapshot pair contains non-finite entries");
    detail::require(std::isfinite(dt) && dt > 0.0, "snapshot pair: dt must be positive");
    detail::require(std::isfinite(t0), "snapshot pair: t0 must be finite");
  }
};

enum class ModeKind { exact, projected };

/// Which snapshots the amplitudes b are fitted against.
enum class AmplitudeFit {
  first,  ///< b = Phi^+ u_0
  last,   ///< b = Phi^+ u_m, powers counted from step m
  all,    ///< least squares over every snapshot
};

struct DmdOptions {
  double eta = 0.0;
  std::optional<Index> max_rank = std::nullopt;
  ModeKind mode_kind = ModeKind::exact;
  AmplitudeFit amplitude_fit = AmplitudeFit::first;
  double rank_tolerance = kDefaultRankTolerance;
};

struct DmdModel {
  Index rank = 0;
  CVector eigenvalues;
  CMatrix modes;
  CVector amplitudes;
  ModeKind mode_kind = ModeKind::exact;
  std::vector<bool> projected_fallback;  ///< per mode: exact formula replaced by the projected one
  Vector singular_values;
  double dt = 1.0;
  double t0 = 0.0;
  Index anchor_step = 0;  ///< amplitudes describe the state at this step

  /// Continuous-time rates ln(lambda)/dt (diagnostic only).
  CVector frequencies() const {
    CVector w(eigenvalues.size());
    for (Index k = 0; k < eigenvalues.size(); ++k) w(k) = std::log(eigenvalues(k)) / dt;
    return w;
  }
};

struct Reconstruction {
  Vector state;
  double max_imag = 0.0;
};

/// Smallest r whose discarded tail carries at most a fraction eta of the
/// singular value sum.
inline Index select_rank(const Vector& singular_values, double eta) {
  detail::require(singular_values.size() > 0, "select_rank: empty singular value vector");
  detail::require(eta >= 0.0 && eta < 1.0, "select_rank: eta must lie in [0, 1)");
  for (Index i = 0; i < singular_values.size(); ++i) {
    detail::require(singular_values(i) > 0.0 && std::isfinite(singular_values(i)),
                    "select_rank: singular values must be positive and finite");
    if (i > 0) {
      detail::require(singular_values(i) <= singular_values(i - 1),
                      "select_rank: singular values must be descending");
    }
  }
  const Index d = singular_values.size();
  std::vector<double> suffix(static_cast<std::size_t>(d) + 1, 0.0);
  for (Index i = d - 1; i >= 0; --i) {
    suffix[static_cast<std::size_t>(i)] = suffix[static_cast<std::size_t>(i) + 1] + singular_values(i);
  }
  const double total = suffix[0];
  for (Index r = 1; r <= d; ++r) {
    if (suffix[static_cast<std::size_t>(r)] / total <= eta) return r;
  }
  return d;
}

namespace detail {

inline Complex ipow(Complex lambda, Index i) {
  if (i == 0) return Complex(1.0, 0.0);
  return std::pow(lambda, static_cast<double>(i));
}

/// Amplitudes minimising sum_j ||x_j - Phi diag(lambda^j) b||^2.
inline CVector fit_amplitudes_all(const CMatrix& phi, const CVector& lambda, const Matrix& snapshots) {
  const Index r = phi.cols();
  const Index cols = snapshots.cols();
  CMatrix vand(r, cols);
  for (Index k = 0; k < r; ++k) {
    Complex p(1.0, 0.0);
    for (Index j = 0; j < cols; ++j) {
      vand(k, j) = p;
      p *= lambda(k);
    }
  }
  const CMatrix gram = phi.adjoint() * phi;
  const CMatrix vv = vand * vand.adjoint();
  const CMatrix p = gram.cwiseProduct(vv.conjugate());
  const CMatrix xhphi = snapshots.transpose().cast<Complex>() * phi;  // cols x r
  const CMatrix prod = vand * xhphi;
  CVector q(r);
  for (Index k = 0; k < r; ++k) q(k) = std::conj(prod(k, k));
  return least_squares_solve(p, q);
}

}  // namespace detail

inline DmdModel fit_exact_dmd(const SnapshotPair& pair, const DmdOptions& options = {}) {
  pair.validate();
  detail::require(options.eta >= 0.0 && options.eta < 1.0, "fit_exact_dmd: eta must lie in [0, 1)");
  if (options.max_rank) detail::require(*options.max_rank >= 1, "fit_exact_dmd: max_rank must be >= 1");

  const CompactSvd svd = compact_svd(pair.x0, options.rank_tolerance);
  if (svd.numerical_rank == 0) throw ValidationError("fit_exact_dmd: zero snapshot matrix");

  Index r = select_rank(svd.singular_values, options.eta);
  if (options.max_rank) r = std::min(r, *options.max_rank);

  const Matrix ur = svd.left_vectors.leftCols(r);
  const Matrix vr = svd.right_vectors.leftCols(r);
  const Vector inv_s = svd.singular_values.head(r).cwiseInverse();
  const Matrix x1_v_sinv = pair.x1 * vr * inv_s.asDiagonal();  // n x r
  const Matrix a_tilde = ur.transpose() * x1_v_sinv;

  const EigenPairs eig = eig_general(a_tilde, false);

  DmdModel model;
  model.rank = r;
  model.eigenvalues = eig.eigenvalues;
  model.mode_kind = options.mode_kind;
  model.singular_values = svd.singular_values;
  model.dt = pair.dt;
  model.t0 = pair.t0;
  model.projected_fallback.assign(static_cast<std::size_t>(r), false);

  const CMatrix projected = ur.cast<Complex>() * eig.right_vectors;
  if (options.mode_kind == ModeKind::projected) {
    model.modes = projected;
  } else {
    model.modes = x1_v_sinv.cast<Complex>() * eig.right_vectors;
    const double lam_max = eig.eigenvalues.cwiseAbs().maxCoeff();
    for (Index k = 0; k < r; ++k) {
      const Complex lam = eig.eigenvalues(k);
      if (std::abs(lam) < 1e-12 * lam_max || std::abs(lam) == 0.0) {
        model.modes.col(k) = projected.col(k);
        model.projected_fallback[static_cast<std::size_t>(k)] = true;
      } else {
        model.modes.col(k) /= lam;
      }
    }
  }
  for (Index k = 0; k < r; ++k) {
    const double norm = model.modes.col(k).norm();
    if (norm > 0.0) model.modes.col(k) /= norm;
  }

  switch (options.amplitude_fit) {
    case AmplitudeFit::first:
      model.amplitudes = least_squares_solve(model.modes, pair.x0.col(0).cast<Complex>());
      model.anchor_step = 0;
      break;
    case AmplitudeFit::last:
      model.amplitudes =
          least_squares_solve(model.modes, pair.x1.col(pair.x1.cols() - 1).cast<Complex>());
      model.anchor_step = pair.count();
      break;
    case AmplitudeFit::all: {
      Matrix all(pair.state_dim(), pair.count() + 1);
      all << pair.x0, pair.x1.rightCols(1);
      model.amplitudes = detail::fit_amplitudes_all(model.modes, model.eigenvalues, all);
      model.anchor_step = 0;
      break;
    }
  }
  if (!model.amplitudes.allFinite() || !model.modes.allFinite()) {
    throw NumericalError("fit_exact_dmd: non-finite modes or amplitudes");
  }
  return model;
}

/// u_i = Re sum_k phi_k b_k lambda_k^(i - anchor).
inline Reconstruction reconstruct(const DmdModel& model, Index step) {
  detail::require(step >= 0, "reconstruct: step index must be non-negative");
  CVector coeff(model.rank);
  const Index power = step - model.anchor_step;
  for (Index k = 0; k < model.rank; ++k) {
    coeff(k) = model.amplitudes(k) * detail::ipow(model.eigenvalues(k), power);
  }
  const CVector u = model.modes * coeff;
  Reconstruction out;
  out.state = u.real();
  out.max_imag = u.size() ? u.imag().cwiseAbs().maxCoeff() : 0.0;
  return out;
}

inline Matrix predict_series(const DmdModel& model, const std::vector<Index>& steps,
                             double* max_imag = nullptr) {
  Matrix out(model.modes.rows(), static_cast<Index>(steps.size()));
  double worst = 0.0;
  for (std::size_t j = 0; j < steps.size(); ++j) {
    const Reconstruction r = reconstruct(model, steps[j]);
    out.col(static_cast<Index>(j)) = r.state;
    worst = std::max(worst, r.max_imag);
  }
  if (max_imag) *max_imag = worst;
  return out;
}

}  // namespace pdmd
