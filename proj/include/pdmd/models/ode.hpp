#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>

#include "pdmd/matdec.hpp"

namespace pdmd {

using SparseMatrix = Eigen::SparseMatrix<double>;

/// du/dt = rhs(t, u), y = output(t, u).
struct OdeSystem {
  Index dimension = 0;
  Index output_dimension = 0;
  Vector initial_state;
  std::function<void(double, const Vector&, Vector&)> rhs;
  std::function<Vector(double, const Vector&)> output_map;
  std::function<void(double, const Vector&, SparseMatrix&)> jacobian;  ///< optional
  bool stiff = true;

  Vector derivative(double t, const Vector& u) const {
    Vector du(dimension);
    rhs(t, u, du);
    return du;
  }

  /// Output trajectory for states sampled at times t0, t0 + dt, ...
  Matrix outputs(const Matrix& states, double dt, double t0 = 0.0) const {
    Matrix y(output_dimension, states.cols());
    for (Index j = 0; j < states.cols(); ++j) y.col(j) = output_map(t0 + dt * static_cast<double>(j), states.col(j));
    return y;
  }

  void validate() const {
    detail::require(dimension >= 1, "ODE system dimension must be positive");
    detail::require(initial_state.size() == dimension, "ODE initial state has the wrong dimension");
    detail::require(static_cast<bool>(rhs), "ODE system has no right-hand side");
    detail::require(static_cast<bool>(output_map), "ODE system has no output map");
  }
};

struct IntegratorOptions {
  double rel_tol = 1e-6;
  double abs_tol = 1e-8;
  double initial_step = 0.0;  ///< 0 picks one from the initial derivative
  double min_step = 1e-14;
  double max_step = 0.0;      ///< 0 means dt_out
  int max_newton_iterations = 8;
  long max_steps = 5'000'000;
};

struct IntegratorStats {
  long accepted_steps = 0;
  long rejected_steps = 0;
  long newton_failures = 0;
  long rhs_evaluations = 0;
  long factorizations = 0;
};

namespace detail {

inline void finite_difference_jacobian(const OdeSystem& sys, double t, const Vector& u, const Vector& f0,
                                       SparseMatrix& jac, long& rhs_count) {
  const Index n = sys.dimension;
  std::vector<Eigen::Triplet<double>> trip;
  Vector up = u;
  Vector fp(n);
  for (Index j = 0; j < n; ++j) {
    const double h = std::sqrt(std::numeric_limits<double>::epsilon()) * std::max(1.0, std::abs(u(j)));
    up(j) = u(j) + h;
    sys.rhs(t, up, fp);
    ++rhs_count;
    up(j) = u(j);
    for (Index i = 0; i < n; ++i) {
      const double v = (fp(i) - f0(i)) / h;
      if (v != 0.0) trip.emplace_back(i, j, v);
    }
  }
  jac.resize(n, n);
  jac.setFromTriplets(trip.begin(), trip.end());
}

inline double wrms(const Vector& e, const Vector& scale) {
  return std::sqrt((e.array() / scale.array()).square().mean());
}

inline std::string time_stamp(double t) {
  std::ostringstream os;
  os.precision(10);
  os << t;
  return os.str();
}

}  // namespace detail

/// TR-BDF2 (an L-stable singly diagonally implicit scheme with a trapezoidal
/// stage and a BDF2 stage) with an embedded third-order error estimate and
/// simplified Newton iterations. The per-step tolerance is rel_tol^(3/2)
/// (abs_tol scaled alike) so that the accumulated error of this second-order
/// scheme tracks rel_tol itself. Returns the states at 0, dt_out, ..., t_end.
inline Matrix integrate(const OdeSystem& sys, double t_end, double dt_out, const IntegratorOptions& opt = {},
                        IntegratorStats* stats_out = nullptr) {
  sys.validate();
  detail::require(std::isfinite(t_end) && t_end > 0.0, "integrate: t_end must be positive");
  detail::require(std::isfinite(dt_out) && dt_out > 0.0, "integrate: dt_out must be positive");
  detail::require(opt.rel_tol > 0.0 && opt.abs_tol > 0.0, "integrate: tolerances must be positive");
  const double ratio = t_end / dt_out;
  const long n_out = std::lround(ratio);
  detail::require(n_out >= 1 && std::abs(ratio - static_cast<double>(n_out)) <= 1e-9 * ratio,
                  "integrate: dt_out must divide t_end");

  const double d = 1.0 - std::sqrt(2.0) / 2.0;
  const double w = std::sqrt(2.0) / 4.0;
  const double gamma = 2.0 * d;
  const double e1 = (1.0 - w) / 3.0;
  const double e2 = (3.0 * w + 1.0) / 3.0;
  const double e3 = d / 3.0;

  const Index n = sys.dimension;
  IntegratorStats stats;
  Matrix out(n, n_out + 1);
  Vector y = sys.initial_state;
  out.col(0) = y;
  double t = 0.0;
  const double h_max = opt.max_step > 0.0 ? opt.max_step : dt_out;

  Vector f1 = sys.derivative(t, y);
  ++stats.rhs_evaluations;
  const double local_rtol = opt.rel_tol * std::sqrt(opt.rel_tol);
  const double local_atol = opt.abs_tol * std::sqrt(opt.rel_tol);
  auto scale_of = [&](const Vector& v) -> Vector {
    return (local_atol + local_rtol * v.array().abs()).matrix();
  };

  double h = opt.initial_step;
  if (h <= 0.0) {
    const double fn = detail::wrms(f1, scale_of(y));
    h = fn > 0.0 ? 0.5 / fn : dt_out;
    h = std::min({h, 0.01 * dt_out, h_max});
    h = std::max(h, 1e3 * opt.min_step);
  }

  SparseMatrix jac(n, n);
  SparseMatrix iter_matrix(n, n);
  SparseMatrix identity(n, n);
  identity.setIdentity();
  Eigen::SparseLU<SparseMatrix> lu;

  Vector f2(n), f3(n), y2(n), y3(n), delta(n), res(n), fz(n);

  // Solves z = base + d h F(t_stage, z) by simplified Newton from guess z.
  auto newton = [&](double t_stage, const Vector& base, Vector& z, Vector& fz_out, const Vector& scale) -> bool {
    double prev = 0.0;
    constexpr double newton_tol = 1e-3;
    constexpr double kEps = std::numeric_limits<double>::epsilon();
    for (int it = 0; it < opt.max_newton_iterations; ++it) {
      sys.rhs(t_stage, z, fz_out);
      ++stats.rhs_evaluations;
      res = z - base - d * h * fz_out;
      delta = lu.solve(-res);
      if (!delta.allFinite()) return false;
      z += delta;
      const double dn = detail::wrms(delta, scale);
      const bool at_roundoff = delta.cwiseAbs().maxCoeff() <= 64.0 * kEps * z.cwiseAbs().maxCoeff();
      if (dn <= newton_tol || at_roundoff) {
        sys.rhs(t_stage, z, fz_out);
        ++stats.rhs_evaluations;
        return z.allFinite();
      }
      if (it > 0 && dn > 0.9 * prev) return false;
      prev = dn;
    }
    return false;
  };

  for (long k = 1; k <= n_out; ++k) {
    const double t_target = dt_out * static_cast<double>(k);
    while (t < t_target) {
      if (stats.accepted_steps + stats.rejected_steps > opt.max_steps) {
        throw NumericalError("integrate: step limit exceeded at t = " + detail::time_stamp(t));
      }
      double h_step = std::min(h, h_max);
      bool lands = false;
      if (t + h_step >= t_target - 1e-12 * std::max(1.0, t_target)) {
        h_step = t_target - t;
        lands = true;
      } else if (t + 2.0 * h_step > t_target) {
        h_step = 0.5 * (t_target - t);
      }
      const double h_saved = h;
      h = h_step;

      if (sys.jacobian) {
        sys.jacobian(t, y, jac);
      } else {
        detail::finite_difference_jacobian(sys, t, y, f1, jac, stats.rhs_evaluations);
      }
      iter_matrix = identity - (d * h) * jac;
      iter_matrix.makeCompressed();
      lu.analyzePattern(iter_matrix);
      lu.factorize(iter_matrix);
      ++stats.factorizations;
      bool ok = lu.info() == Eigen::Success;

      const Vector scale = scale_of(y);
      if (ok) {
        // trapezoidal stage at t + gamma h
        const Vector base2 = y + d * h * f1;
        y2 = y + gamma * h * f1;
        ok = newton(t + gamma * h, base2, y2, f2, scale);
      }
      if (ok) {
        // BDF2 stage at t + h
        const Vector base3 = y + w * h * (f1 + f2);
        y3 = y + h * (w * f1 + (1.0 - w) * f2);
        ok = newton(t + h, base3, y3, f3, scale);
      }
      if (!ok) {
        ++stats.newton_failures;
        ++stats.rejected_steps;
        h = 0.5 * h;
        if (h < opt.min_step) {
          throw NumericalError("integrate: Newton iteration failed to converge at t = " + detail::time_stamp(t));
        }
        continue;
      }

      const Vector y_hat = y + h * (e1 * f1 + e2 * f2 + e3 * f3);
      const Vector err_scale = (local_atol + local_rtol * y.array().abs().max(y3.array().abs())).matrix();
      const Vector est = lu.solve(y3 - y_hat);  // damps stiff components of the raw estimate
      const double err = detail::wrms(est, err_scale);
      const double factor = std::clamp(0.9 * std::pow(std::max(err, 1e-10), -1.0 / 3.0), 0.2, 5.0);
      if (err <= 1.0) {
        t = lands ? t_target : t + h;
        y = y3;
        f1 = f3;
        ++stats.accepted_steps;
        // a step shortened to hit an output time should not shrink the next one
        h = (lands ? std::max(h, h_saved) : h) * factor;
      } else {
        ++stats.rejected_steps;
        h = h * std::min(factor, 0.9);
        if (h < opt.min_step) {
          throw NumericalError("integrate: step size underflow at t = " + detail::time_stamp(t));
        }
      }
    }
    out.col(k) = y;
  }
  if (stats_out) *stats_out = stats;
  return out;
}

}  // namespace pdmd
