#pragma once

#include <cmath>
#include <vector>

#include "pdmd/models/ode.hpp"

namespace pdmd {

/// FitzHugh-Nagumo cable
///   eps v_t = eps^2 v_xx + f(v) - w + c,  w_t = b v - gamma w + c,
/// on [0, L] with v_x(0) = -i0(t), v_x(L) = 0 and f(v) = v (v - 0.1)(1 - v).
struct FhnConfig {
  double length = 20.0;
  double b = 0.5;
  double c = 0.05;
  double gamma = 2.0;
  double epsilon = 0.025;
  Index nx = 256;
  double i0_amp = 50000.0;
  double i0_rate = 15.0;

  double dx() const { return length / static_cast<double>(nx - 1); }
  double i0(double t) const { return i0_amp * t * t * t * std::exp(-i0_rate * t); }

  void validate() const {
    detail::require(nx >= 3, "FHN grid needs at least 3 points");
    detail::require(epsilon > 0.0 && std::isfinite(epsilon), "FHN epsilon must be positive");
    detail::require(length > 0.0 && gamma > 0.0, "FHN length and gamma must be positive");
    detail::require(i0_amp >= 0.0 && i0_rate >= 0.0, "FHN input parameters must be non-negative");
  }
};

inline double fhn_cubic(double v) { return v * (v - 0.1) * (1.0 - v); }
inline double fhn_cubic_derivative(double v) { return -3.0 * v * v + 2.2 * v - 0.1; }

/// State [v_0..v_{nx-1}, w_0..w_{nx-1}], output (v(0), w(0)).
inline OdeSystem fhn_build(const FhnConfig& cfg) {
  cfg.validate();
  const Index nx = cfg.nx;
  const double dx = cfg.dx();
  const double eps = cfg.epsilon;
  const double diff = eps / (dx * dx);

  OdeSystem sys;
  sys.dimension = 2 * nx;
  sys.output_dimension = 2;
  sys.initial_state = Vector::Zero(2 * nx);
  sys.stiff = true;

  sys.rhs = [cfg, nx, dx, eps, diff](double t, const Vector& u, Vector& du) {
    const auto v = u.head(nx);
    const auto w = u.tail(nx);
    // ghost nodes: v_{-1} = v_1 + 2 dx i0(t), v_{nx} = v_{nx-2}
    du(0) = diff * (2.0 * v(1) - 2.0 * v(0) + 2.0 * dx * cfg.i0(t));
    for (Index i = 1; i < nx - 1; ++i) du(i) = diff * (v(i + 1) - 2.0 * v(i) + v(i - 1));
    du(nx - 1) = diff * (2.0 * v(nx - 2) - 2.0 * v(nx - 1));
    for (Index i = 0; i < nx; ++i) {
      du(i) += (fhn_cubic(v(i)) - w(i) + cfg.c) / eps;
      du(nx + i) = cfg.b * v(i) - cfg.gamma * w(i) + cfg.c;
    }
  };

  sys.jacobian = [cfg, nx, eps, diff](double, const Vector& u, SparseMatrix& jac) {
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(7 * nx));
    for (Index i = 0; i < nx; ++i) {
      trip.emplace_back(i, i, -2.0 * diff + fhn_cubic_derivative(u(i)) / eps);
      if (i == 0) {
        trip.emplace_back(0, 1, 2.0 * diff);
      } else if (i == nx - 1) {
        trip.emplace_back(i, i - 1, 2.0 * diff);
      } else {
        trip.emplace_back(i, i - 1, diff);
        trip.emplace_back(i, i + 1, diff);
      }
      trip.emplace_back(i, nx + i, -1.0 / eps);
      trip.emplace_back(nx + i, i, cfg.b);
      trip.emplace_back(nx + i, nx + i, -cfg.gamma);
    }
    jac.resize(2 * nx, 2 * nx);
    jac.setFromTriplets(trip.begin(), trip.end());
  };

  sys.output_map = [nx](double, const Vector& u) {
    Vector y(2);
    y << u(0), u(nx);
    return y;
  };
  return sys;
}

}  // namespace pdmd
