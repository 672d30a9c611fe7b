#pragma once

#include <chrono>
#include <numeric>
#include <optional>
#include <vector>

#include "pdmd/dmd.hpp"
#include "pdmd/kdmd.hpp"
#include "pdmd/rbf.hpp"

namespace pdmd {

/// Snapshot matrices X(mu_k), each n x (m+1), sampled on a shared time grid.
struct TrainingSet {
  Matrix params;                 ///< n_p x p
  std::vector<Matrix> snapshots;
  double dt = 1.0;
  double t0 = 0.0;

  double t_snap_end() const {
    return snapshots.empty() ? t0 : t0 + dt * static_cast<double>(snapshots.front().cols() - 1);
  }

  void validate() const {
    detail::require(params.rows() >= 1 && params.cols() >= 1, "training set needs at least one parameter sample");
    detail::require(static_cast<Index>(snapshots.size()) == params.rows(),
                    "training set: one snapshot matrix per parameter sample is required");
    detail::require(dt > 0.0 && std::isfinite(dt), "training set: dt must be positive");
    const Index n = snapshots.front().rows();
    const Index cols = snapshots.front().cols();
    detail::require(n >= 1 && cols >= 1, "training set: empty snapshot matrix");
    for (std::size_t k = 0; k < snapshots.size(); ++k) {
      detail::require(snapshots[k].rows() == n && snapshots[k].cols() == cols,
                      "training set: snapshot matrix " + std::to_string(k) + " has a different shape");
      detail::require(snapshots[k].allFinite(), "training set: snapshot matrix " + std::to_string(k) + " is not finite");
    }
  }
};

enum class DmdVariant { exact, kernel };

/// Where the online DMD extrapolation starts from.
enum class DmdAnchor {
  initial,   ///< powers of lambda from the first predicted snapshot
  last,      ///< powers of lambda from the last predicted snapshot
  iterated,  ///< kernel DMD stepped one snapshot at a time from the last one
};

struct DmdConfig {
  DmdVariant variant = DmdVariant::kernel;
  double eta = 0.005;
  std::optional<Index> max_rank = std::nullopt;
  ModeKind mode_kind = ModeKind::exact;
  KernelSpec kernel = KernelSpec::gaussian_median(1.0);
  DmdAnchor anchor = DmdAnchor::initial;
};

struct ParametricRom {
  RbfInterpolant interpolant;
  DmdConfig dmd;
  Index n_state = 0;
  Index n_cols = 0;  ///< m + 1
  double dt = 1.0;
  double t0 = 0.0;
  Vector param_min;
  Vector param_max;
};

struct SnapshotPrediction {
  Matrix x_hat;
  bool extrapolated = false;
};

struct RomPrediction {
  Matrix states;            ///< n x (m + 1 + horizon)
  bool extrapolated = false;
  Index dmd_rank = 0;
  double max_imag = 0.0;
  double rbf_seconds = 0.0;
  double dmd_seconds = 0.0;
};

struct ErrorReport {
  Matrix per_output_per_time;  ///< n_o x n_T
  Vector time_average;         ///< n_o
  Vector denominators;         ///< n_o
  Index n_t = 0;

  Vector max_error() const { return per_output_per_time.rowwise().maxCoeff(); }
};

/// Column-major flattening of every snapshot matrix into one row each.
inline ParametricRom train(const TrainingSet& ts, const RbfOptions& rbf, const DmdConfig& dmd) {
  ts.validate();
  const Index n = ts.snapshots.front().rows();
  const Index cols = ts.snapshots.front().cols();
  Matrix targets(ts.params.rows(), n * cols);
  for (Index k = 0; k < ts.params.rows(); ++k) {
    targets.row(k) = Eigen::Map<const Eigen::RowVectorXd>(ts.snapshots[static_cast<std::size_t>(k)].data(), n * cols);
  }
  ParametricRom rom;
  rom.interpolant = RbfInterpolant::fit(ts.params, targets, rbf);
  rom.dmd = dmd;
  rom.n_state = n;
  rom.n_cols = cols;
  rom.dt = ts.dt;
  rom.t0 = ts.t0;
  rom.param_min = ts.params.colwise().minCoeff().transpose();
  rom.param_max = ts.params.colwise().maxCoeff().transpose();
  return rom;
}

inline bool is_extrapolation(const ParametricRom& rom, const Vector& mu) {
  return (mu.array() < rom.param_min.array()).any() || (mu.array() > rom.param_max.array()).any();
}

inline SnapshotPrediction predict_snapshots(const ParametricRom& rom, const Vector& mu) {
  detail::require(mu.size() == rom.param_min.size(), "predict_snapshots: parameter dimension mismatch");
  SnapshotPrediction out;
  const Vector flat = rom.interpolant.evaluate(mu);
  out.x_hat = Eigen::Map<const Matrix>(flat.data(), rom.n_state, rom.n_cols);
  out.extrapolated = is_extrapolation(rom, mu);
  return out;
}

inline SnapshotPair split(const Matrix& x_hat, double dt = 1.0, double t0 = 0.0) {
  detail::require(x_hat.cols() >= 2, "split: at least 2 snapshot columns are required");
  return SnapshotPair::from_trajectory(x_hat, dt, t0);
}

/// RBF prediction over the training window followed by DMD extrapolation for
/// `horizon` further steps.
inline RomPrediction predict(const ParametricRom& rom, const Vector& mu, Index horizon) {
  detail::require(horizon >= 0, "predict: horizon must be non-negative");
  using clock = std::chrono::steady_clock;
  RomPrediction out;
  const auto t_start = clock::now();
  SnapshotPrediction snap = predict_snapshots(rom, mu);
  const auto t_rbf = clock::now();
  out.extrapolated = snap.extrapolated;
  out.states.resize(rom.n_state, rom.n_cols + horizon);
  out.states.leftCols(rom.n_cols) = snap.x_hat;
  out.rbf_seconds = std::chrono::duration<double>(t_rbf - t_start).count();
  if (horizon == 0) return out;

  const Index m = rom.n_cols - 1;
  const SnapshotPair pair = split(snap.x_hat, rom.dt, rom.t0);
  std::vector<Index> steps(static_cast<std::size_t>(horizon));
  if (rom.dmd.variant == DmdVariant::exact) {
    DmdOptions opt;
    opt.eta = rom.dmd.eta;
    opt.max_rank = rom.dmd.max_rank;
    opt.mode_kind = rom.dmd.mode_kind;
    opt.amplitude_fit = rom.dmd.anchor == DmdAnchor::initial ? AmplitudeFit::first : AmplitudeFit::last;
    const DmdModel model = fit_exact_dmd(pair, opt);
    std::iota(steps.begin(), steps.end(), m + 1);
    out.states.rightCols(horizon) = predict_series(model, steps, &out.max_imag);
    out.dmd_rank = model.rank;
  } else {
    const bool spectral = rom.dmd.anchor != DmdAnchor::iterated;
    const KdmdModel model = fit_kernel_dmd(pair, rom.dmd.kernel, {rom.dmd.eta, rom.dmd.max_rank, spectral});
    KdmdPrediction pred;
    switch (rom.dmd.anchor) {
      case DmdAnchor::initial:
        std::iota(steps.begin(), steps.end(), m + 1);
        pred = kdmd_predict(model, snap.x_hat.col(0), steps);
        break;
      case DmdAnchor::last:
        std::iota(steps.begin(), steps.end(), 1);
        pred = kdmd_predict(model, snap.x_hat.col(m), steps);
        break;
      case DmdAnchor::iterated:
        std::iota(steps.begin(), steps.end(), 1);
        pred = kdmd_predict(model, snap.x_hat.col(m), steps, KdmdPropagation::iterated);
        break;
    }
    out.states.rightCols(horizon) = pred.states;
    out.max_imag = pred.max_imag;
    out.dmd_rank = model.rank;
  }
  out.dmd_seconds = std::chrono::duration<double>(clock::now() - t_rbf).count();
  return out;
}

/// eps_i(t_j) = |y_i - yhat_i| / max_j |y_i(t_j)| and its time average.
inline ErrorReport error_report(const Matrix& reference, const Matrix& predicted) {
  detail::require(reference.rows() == predicted.rows() && reference.cols() == predicted.cols(),
                  "error_report: shape mismatch");
  detail::require(reference.cols() >= 1, "error_report: no evaluation times");
  detail::require(reference.allFinite() && predicted.allFinite(), "error_report: non-finite input");
  ErrorReport rep;
  rep.n_t = reference.cols();
  rep.denominators = reference.cwiseAbs().rowwise().maxCoeff();
  for (Index i = 0; i < reference.rows(); ++i) {
    detail::require(rep.denominators(i) > 0.0,
                    "error_report: reference output " + std::to_string(i) + " is identically zero");
  }
  rep.per_output_per_time = (reference - predicted).cwiseAbs();
  rep.per_output_per_time.array().colwise() /= rep.denominators.array();
  rep.time_average = rep.per_output_per_time.rowwise().mean();
  return rep;
}

}  // namespace pdmd
