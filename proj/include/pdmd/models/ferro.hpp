#pragma once

#include <cmath>
#include <vector>

#include "pdmd/models/ode.hpp"

namespace pdmd {

inline constexpr double kFaraday = 96485.0;
inline constexpr double kGasConstant = 8.314;

/// Ferro/ferricyanide redox couple at a rotating disk electrode: diffusion
/// of both species across their Levich layers, Butler-Volmer kinetics at the
/// surface and a double-layer charge balance driven through an ohmic drop.
struct FerroConfig {
  double w_d = 1000.0;        ///< rotation rate, rpm
  double c_dl = 0.2;          ///< F/m^2
  double beta = 0.5;
  double k = 1e-4;            ///< m/s
  double r_ohm = 1e-2;        ///< Ohm m^2
  double d_red = 6.5e-10;     ///< m^2/s
  double d_ox = 7.6e-10;      ///< m^2/s
  double c_red_inf = 10.0;    ///< mol/m^3
  double c_ox_inf = 10.0;     ///< mol/m^3
  double e_r = 0.25;          ///< V
  double nu = 1e-6;           ///< m^2/s
  double temperature = 298.0; ///< K
  double e_dc = 0.25;         ///< V
  double e_ac = 0.05;         ///< V
  double frequency = 1.0;     ///< Hz
  Index nz = 201;

  double f() const { return kFaraday / (kGasConstant * temperature); }
  double e_total(double t) const { return e_dc + e_ac * std::sin(2.0 * M_PI * frequency * t); }

  void validate() const {
    detail::require(nz >= 3, "ferro grid needs at least 3 nodes per species");
    detail::require(w_d > 0.0 && c_dl > 0.0 && r_ohm > 0.0 && d_red > 0.0 && d_ox > 0.0 && c_red_inf > 0.0 &&
                        c_ox_inf > 0.0 && nu > 0.0 && temperature > 0.0 && frequency >= 0.0,
                    "ferro physical constants must be positive");
    detail::require(k >= 0.0, "ferro rate constant must be non-negative");
    detail::require(beta > 0.0 && beta < 1.0, "ferro transfer coefficient must lie in (0, 1)");
  }
};

/// Net oxidation rate (mol m^-2 s^-1) from Butler-Volmer kinetics.
inline double butler_volmer_rate(double e, double c_red0, double c_ox0, const FerroConfig& cfg) {
  detail::require(c_red0 >= 0.0 && c_ox0 >= 0.0, "butler_volmer_rate: concentrations must be non-negative");
  const double eta = e - cfg.e_r;
  const double f = cfg.f();
  return cfg.k * (c_red0 / cfg.c_red_inf * std::exp(cfg.beta * f * eta) -
                  c_ox0 / cfg.c_ox_inf * std::exp(-(1.0 - cfg.beta) * f * eta));
}

/// Levich layer thickness 1.61 D^(1/3) nu^(1/6) omega^(-1/2), omega from rpm.
inline double diffusion_layer_thickness(double d, double nu, double w_d_rpm) {
  detail::require(d > 0.0 && nu > 0.0 && w_d_rpm > 0.0, "diffusion_layer_thickness: inputs must be positive");
  const double omega = w_d_rpm * 2.0 * M_PI / 60.0;
  return 1.61 * std::cbrt(d) * std::pow(nu, 1.0 / 6.0) / std::sqrt(omega);
}

/// Area-specific cell closure J = (E_total - E) / R_ohm.
inline double ferro_current_density(const FerroConfig& cfg, double t, double e) {
  return (cfg.e_total(t) - e) / cfg.r_ohm;
}

/// State [c_red(0..nz-1), c_ox(0..nz-1), E]; node 0 is the electrode surface
/// and node nz-1 is held at the bulk value. Output is J.
inline OdeSystem ferro_build(const FerroConfig& cfg) {
  cfg.validate();
  const Index nz = cfg.nz;
  const double h_red = diffusion_layer_thickness(cfg.d_red, cfg.nu, cfg.w_d) / static_cast<double>(nz - 1);
  const double h_ox = diffusion_layer_thickness(cfg.d_ox, cfg.nu, cfg.w_d) / static_cast<double>(nz - 1);
  const double a_red = cfg.d_red / (h_red * h_red);
  const double a_ox = cfg.d_ox / (h_ox * h_ox);

  OdeSystem sys;
  sys.dimension = 2 * nz + 1;
  sys.output_dimension = 1;
  sys.initial_state.resize(2 * nz + 1);
  sys.initial_state.head(nz).setConstant(cfg.c_red_inf);
  sys.initial_state.segment(nz, nz).setConstant(cfg.c_ox_inf);
  sys.initial_state(2 * nz) = cfg.e_r;
  sys.stiff = true;

  sys.rhs = [cfg, nz, h_red, h_ox, a_red, a_ox](double t, const Vector& u, Vector& du) {
    const double e = u(2 * nz);
    // clamp tiny negative surface values produced by Newton iterates
    const double r = butler_volmer_rate(e, std::max(u(0), 0.0), std::max(u(nz), 0.0), cfg);
    du(0) = 2.0 * a_red * (u(1) - u(0)) - 2.0 * r / h_red;
    du(nz) = 2.0 * a_ox * (u(nz + 1) - u(nz)) + 2.0 * r / h_ox;
    for (Index i = 1; i < nz - 1; ++i) {
      du(i) = a_red * (u(i + 1) - 2.0 * u(i) + u(i - 1));
      du(nz + i) = a_ox * (u(nz + i + 1) - 2.0 * u(nz + i) + u(nz + i - 1));
    }
    du(nz - 1) = 0.0;
    du(2 * nz - 1) = 0.0;
    du(2 * nz) = (ferro_current_density(cfg, t, e) - kFaraday * r) / cfg.c_dl;
  };

  sys.jacobian = [cfg, nz, h_red, h_ox, a_red, a_ox](double, const Vector& u, SparseMatrix& jac) {
    const double e = u(2 * nz);
    const double f = cfg.f();
    const double eta = e - cfg.e_r;
    const double ep = std::exp(cfg.beta * f * eta);
    const double em = std::exp(-(1.0 - cfg.beta) * f * eta);
    const double cr = std::max(u(0), 0.0);
    const double co = std::max(u(nz), 0.0);
    const double dr_dcr = u(0) >= 0.0 ? cfg.k * ep / cfg.c_red_inf : 0.0;
    const double dr_dco = u(nz) >= 0.0 ? -cfg.k * em / cfg.c_ox_inf : 0.0;
    const double dr_de = cfg.k * (cr / cfg.c_red_inf * cfg.beta * f * ep +
                                  co / cfg.c_ox_inf * (1.0 - cfg.beta) * f * em);
    const Index ie = 2 * nz;
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(6 * nz + 8));
    trip.emplace_back(0, 0, -2.0 * a_red - 2.0 * dr_dcr / h_red);
    trip.emplace_back(0, 1, 2.0 * a_red);
    trip.emplace_back(0, nz, -2.0 * dr_dco / h_red);
    trip.emplace_back(0, ie, -2.0 * dr_de / h_red);
    trip.emplace_back(nz, nz, -2.0 * a_ox + 2.0 * dr_dco / h_ox);
    trip.emplace_back(nz, nz + 1, 2.0 * a_ox);
    trip.emplace_back(nz, 0, 2.0 * dr_dcr / h_ox);
    trip.emplace_back(nz, ie, 2.0 * dr_de / h_ox);
    for (Index i = 1; i < nz - 1; ++i) {
      trip.emplace_back(i, i - 1, a_red);
      trip.emplace_back(i, i, -2.0 * a_red);
      trip.emplace_back(i, i + 1, a_red);
      trip.emplace_back(nz + i, nz + i - 1, a_ox);
      trip.emplace_back(nz + i, nz + i, -2.0 * a_ox);
      trip.emplace_back(nz + i, nz + i + 1, a_ox);
    }
    trip.emplace_back(ie, 0, -kFaraday * dr_dcr / cfg.c_dl);
    trip.emplace_back(ie, nz, -kFaraday * dr_dco / cfg.c_dl);
    trip.emplace_back(ie, ie, (-1.0 / cfg.r_ohm - kFaraday * dr_de) / cfg.c_dl);
    jac.resize(2 * nz + 1, 2 * nz + 1);
    jac.setFromTriplets(trip.begin(), trip.end());
  };

  sys.output_map = [cfg, nz](double t, const Vector& u) {
    Vector y(1);
    y(0) = ferro_current_density(cfg, t, u(2 * nz));
    return y;
  };
  return sys;
}

}  // namespace pdmd
