#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "pdmd/models/ferro.hpp"
#include "pdmd/models/fhn.hpp"

using namespace pdmd;

namespace {

OdeSystem diagonal_linear(const Vector& rates, bool with_jacobian = true) {
  OdeSystem s;
  s.dimension = rates.size();
  s.output_dimension = rates.size();
  s.initial_state = Vector::Ones(rates.size());
  s.rhs = [rates](double, const Vector& u, Vector& du) { du = rates.cwiseProduct(u); };
  if (with_jacobian) {
    s.jacobian = [rates](double, const Vector&, SparseMatrix& j) {
      j.resize(rates.size(), rates.size());
      std::vector<Eigen::Triplet<double>> t;
      for (Index i = 0; i < rates.size(); ++i) t.emplace_back(i, i, rates(i));
      j.setFromTriplets(t.begin(), t.end());
    };
  }
  s.output_map = [](double, const Vector& u) { return u; };
  return s;
}

Matrix dense_fd_jacobian(const OdeSystem& s, double t, const Vector& u) {
  const Index n = s.dimension;
  Matrix j(n, n);
  for (Index k = 0; k < n; ++k) {
    const double h = 1e-6 * std::max(1.0, std::abs(u(k)));
    Vector up = u, um = u;
    up(k) += h;
    um(k) -= h;
    j.col(k) = (s.derivative(t, up) - s.derivative(t, um)) / (2.0 * h);
  }
  return j;
}

IntegratorOptions tol(double rtol) {
  IntegratorOptions o;
  o.rel_tol = rtol;
  o.abs_tol = rtol * 1e-2;
  return o;
}

}  // namespace

TEST(Integrate, ExponentialDecay) {
  const Vector rates = Vector::Constant(1, -1.0);
  for (double rtol : {1e-4, 1e-6, 1e-8}) {
    const Matrix x = integrate(diagonal_linear(rates), 1.0, 0.1, tol(rtol));
    ASSERT_EQ(x.cols(), 11);
    EXPECT_EQ(x(0, 0), 1.0);
    EXPECT_LE(std::abs(x(0, 10) - std::exp(-1.0)) / std::exp(-1.0), rtol);
  }
}

TEST(Integrate, ZeroRightHandSideIsBitStable) {
  OdeSystem s = diagonal_linear(Vector::Zero(3));
  s.initial_state << 0.3, -1.7, 2.5e-9;
  const Matrix x = integrate(s, 2.0, 0.25);
  for (Index j = 0; j < x.cols(); ++j) EXPECT_EQ(x.col(j), s.initial_state);
}

TEST(Integrate, StiffLinearMatchesClosedForm) {
  Vector rates(2);
  rates << -1.0, -1e4;
  for (double rtol : {1e-4, 1e-6}) {
    IntegratorStats stats;
    const Matrix x = integrate(diagonal_linear(rates), 1.0, 0.05, tol(rtol), &stats);
    for (Index j = 1; j < x.cols(); ++j) {
      const double t = 0.05 * static_cast<double>(j);
      EXPECT_LE(std::abs(x(0, j) - std::exp(-t)), 10.0 * rtol * std::exp(-t));
      EXPECT_LE(std::abs(x(1, j) - std::exp(-1e4 * t)), 10.0 * rtol);
    }
    // an explicit method would need ~1e4 steps just for stability
    EXPECT_LT(stats.accepted_steps, 5000);
  }
}

TEST(Integrate, HalvingTolerancesChangesLittle) {
  Vector rates(2);
  rates << -1.0, -1e4;
  for (double rtol : {1e-4, 1e-6}) {
    const Matrix a = integrate(diagonal_linear(rates), 1.0, 0.1, tol(rtol));
    const Matrix b = integrate(diagonal_linear(rates), 1.0, 0.1, tol(0.5 * rtol));
    EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 10.0 * rtol);
  }
}

TEST(Integrate, ErrorFollowsTolerance) {
  Vector rates(2);
  rates << -1.0, -1e4;
  std::vector<double> errors;
  for (double rtol : {1e-4, 1e-5, 1e-6, 1e-7}) {
    const Matrix x = integrate(diagonal_linear(rates), 1.0, 0.5, tol(rtol));
    errors.push_back(std::abs(x(0, 2) - std::exp(-1.0)));
  }
  for (std::size_t i = 1; i < errors.size(); ++i) {
    const double ratio = errors[i - 1] / errors[i];
    EXPECT_GT(ratio, 5.0);
    EXPECT_LT(ratio, 20.0);
  }
}

TEST(Integrate, FiniteDifferenceJacobianPath) {
  Vector rates(3);
  rates << -0.5, -20.0, -3000.0;
  const Matrix a = integrate(diagonal_linear(rates, true), 0.5, 0.1, tol(1e-6));
  const Matrix b = integrate(diagonal_linear(rates, false), 0.5, 0.1, tol(1e-6));
  EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-6);
  for (Index j = 0; j < a.cols(); ++j) {
    EXPECT_NEAR(b(0, j), std::exp(-0.05 * static_cast<double>(j)), 1e-6);
  }
}

TEST(Integrate, NonlinearLogistic) {
  OdeSystem s;
  s.dimension = 1;
  s.output_dimension = 1;
  s.initial_state = Vector::Constant(1, 0.1);
  s.rhs = [](double, const Vector& u, Vector& du) { du(0) = u(0) * (1.0 - u(0)); };
  s.output_map = [](double, const Vector& u) { return u; };
  const Matrix x = integrate(s, 4.0, 1.0, tol(1e-7));
  for (Index j = 0; j < x.cols(); ++j) {
    const double t = static_cast<double>(j);
    const double exact = 1.0 / (1.0 + 9.0 * std::exp(-t));
    EXPECT_NEAR(x(0, j), exact, 1e-7);
  }
}

TEST(Integrate, BlowUpReportsTime) {
  OdeSystem s;
  s.dimension = 1;
  s.output_dimension = 1;
  s.initial_state = Vector::Ones(1);
  s.rhs = [](double, const Vector& u, Vector& du) { du(0) = u(0) * u(0); };
  s.output_map = [](double, const Vector& u) { return u; };
  IntegratorOptions o = tol(1e-6);
  o.max_steps = 20000;
  try {
    integrate(s, 2.0, 0.5, o);
    FAIL() << "expected a numerical error";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("at t = "), std::string::npos);
  }
}

TEST(Integrate, RejectsBadArguments) {
  const OdeSystem s = diagonal_linear(Vector::Constant(1, -1.0));
  EXPECT_THROW(integrate(s, 0.0, 0.1), ValidationError);
  EXPECT_THROW(integrate(s, 1.0, 0.3), ValidationError);
  EXPECT_THROW(integrate(s, 1.0, -0.1), ValidationError);
  EXPECT_THROW(integrate(s, 1.0, 0.1, tol(0.0)), ValidationError);
  OdeSystem bad = s;
  bad.initial_state = Vector::Zero(2);
  EXPECT_THROW(integrate(bad, 1.0, 0.1), ValidationError);
}

TEST(Fhn, DimensionsAndOutputMap) {
  FhnConfig cfg;
  EXPECT_EQ(fhn_build(cfg).dimension, 512);
  cfg.nx = 8192;
  const OdeSystem big = fhn_build(cfg);
  EXPECT_EQ(big.dimension, 16384);
  EXPECT_EQ(big.output_dimension, 2);
  Vector u = Vector::LinSpaced(16384, 1.0, 16384.0);
  const Vector y = big.output_map(0.0, u);
  EXPECT_EQ(y(0), u(0));
  EXPECT_EQ(y(1), u(8192));
  EXPECT_TRUE(big.initial_state.isZero());
}

TEST(Fhn, DefaultsAndInput) {
  const FhnConfig cfg;
  EXPECT_EQ(cfg.length, 20.0);
  EXPECT_EQ(cfg.b, 0.5);
  EXPECT_EQ(cfg.c, 0.05);
  EXPECT_EQ(cfg.gamma, 2.0);
  EXPECT_NEAR(cfg.i0(0.2), 50000.0 * 0.008 * std::exp(-3.0), 1e-12);
  EXPECT_EQ(cfg.i0(0.0), 0.0);
  FhnConfig bad;
  bad.nx = 2;
  EXPECT_THROW(fhn_build(bad), ValidationError);
  bad = {};
  bad.epsilon = 0.0;
  EXPECT_THROW(fhn_build(bad), ValidationError);
}

TEST(Fhn, JacobianMatchesFiniteDifferences) {
  FhnConfig cfg;
  cfg.nx = 9;
  const OdeSystem s = fhn_build(cfg);
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u(-0.5, 1.0);
  Vector x(s.dimension);
  for (Index i = 0; i < x.size(); ++i) x(i) = u(rng);
  SparseMatrix jac;
  s.jacobian(0.1, x, jac);
  const Matrix fd = dense_fd_jacobian(s, 0.1, x);
  EXPECT_LT((Matrix(jac) - fd).cwiseAbs().maxCoeff(), 1e-5 * fd.cwiseAbs().maxCoeff());
}

TEST(Fhn, GhostNodeBoundaryFlux) {
  FhnConfig cfg;
  cfg.nx = 11;
  const OdeSystem s = fhn_build(cfg);
  // uniform equilibrium: only the boundary input drives node 0
  Vector x = Vector::Zero(s.dimension);
  x.head(cfg.nx).setConstant(0.1);
  x.tail(cfg.nx).setConstant(0.05);
  const double t = 0.2;
  const Vector du = s.derivative(t, x);
  const double expected = cfg.epsilon / (cfg.dx() * cfg.dx()) * 2.0 * cfg.dx() * cfg.i0(t);
  EXPECT_NEAR(du(0), expected, 1e-9 * std::abs(expected));
  for (Index i = 1; i < cfg.nx; ++i) EXPECT_NEAR(du(i), 0.0, 1e-12);
}

TEST(Fhn, ZeroInputConvergesToUniformEquilibrium) {
  FhnConfig cfg;
  cfg.i0_amp = 0.0;
  cfg.epsilon = 0.1;
  cfg.nx = 33;
  // oracle: 0 = f(v) - w + c, 0 = b v - gamma w + c, bisection on the v equation
  auto g = [&](double v) { return fhn_cubic(v) - (cfg.b * v + cfg.c) / cfg.gamma + cfg.c; };
  double lo = -1.0, hi = 0.3;
  ASSERT_LT(g(lo) * g(hi), 0.0);
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (g(lo) * g(mid) <= 0.0 ? hi : lo) = mid;
  }
  const double v_star = 0.5 * (lo + hi);
  const double w_star = (cfg.b * v_star + cfg.c) / cfg.gamma;
  const OdeSystem s = fhn_build(cfg);
  const Matrix x = integrate(s, 200.0, 20.0, tol(1e-8));
  const Vector u = x.col(x.cols() - 1);
  EXPECT_LT((u.head(cfg.nx).array() - v_star).abs().maxCoeff(), 1e-6);
  EXPECT_LT((u.tail(cfg.nx).array() - w_star).abs().maxCoeff(), 1e-6);
  EXPECT_LT(s.derivative(200.0, u).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Fhn, SecondOrderGridConvergence) {
  // short domain and mild input so the boundary layer is resolved
  Matrix y[3];
  int k = 0;
  for (Index nx : {65, 129, 257}) {
    FhnConfig cfg;
    cfg.length = 1.0;
    cfg.i0_amp = 50.0;
    cfg.nx = nx;
    const OdeSystem s = fhn_build(cfg);
    y[k++] = s.outputs(integrate(s, 0.2, 0.01, tol(1e-8)), 0.01);
  }
  const double e_coarse = (y[0] - y[1]).cwiseAbs().maxCoeff();
  const double e_fine = (y[1] - y[2]).cwiseAbs().maxCoeff();
  const double ratio = e_coarse / e_fine;
  EXPECT_GE(ratio, 3.5);
  EXPECT_LE(ratio, 4.5);
}

TEST(Ferro, ButlerVolmerEquilibriumAndAntisymmetry) {
  const FerroConfig cfg;
  EXPECT_EQ(butler_volmer_rate(cfg.e_r, cfg.c_red_inf, cfg.c_ox_inf, cfg), 0.0);
  for (double eta : {0.001, 0.01, 0.05, 0.1}) {
    const double up = butler_volmer_rate(cfg.e_r + eta, cfg.c_red_inf, cfg.c_ox_inf, cfg);
    const double down = butler_volmer_rate(cfg.e_r - eta, cfg.c_red_inf, cfg.c_ox_inf, cfg);
    EXPECT_NEAR(up, -down, 1e-15 * std::abs(up));
    EXPECT_GT(up, 0.0);
  }
  EXPECT_THROW(butler_volmer_rate(0.3, -1.0, 1.0, cfg), ValidationError);
}

TEST(Ferro, ButlerVolmerExample) {
  FerroConfig cfg;
  cfg.k = 1e-4;
  cfg.beta = 0.5;
  const double f = 96485.0 / (8.314 * 298.0);
  EXPECT_NEAR(f, 38.94, 5e-3);
  EXPECT_NEAR(cfg.f(), f, 1e-12);
  const double oracle = 1e-4 * 2.0 * std::sinh(0.5 * f * 0.01);
  const double r = butler_volmer_rate(cfg.e_r + 0.01, cfg.c_red_inf, cfg.c_ox_inf, cfg);
  EXPECT_NEAR(r, oracle, 1e-15);
  EXPECT_NEAR(r, 3.92e-5, 5e-8);
}

TEST(Ferro, DiffusionLayerThickness) {
  const double oracle = 1.61 * std::cbrt(4e-10) * std::pow(1e-6, 1.0 / 6.0) / std::sqrt(1000.0 * 2.0 * M_PI / 60.0);
  EXPECT_NEAR(diffusion_layer_thickness(4e-10, 1e-6, 1000.0), oracle, 1e-18);
  EXPECT_NEAR(oracle, 1.16e-5, 0.01e-5);
  EXPECT_NEAR(diffusion_layer_thickness(4e-10, 1e-6, 2000.0) / diffusion_layer_thickness(4e-10, 1e-6, 1000.0),
              1.0 / std::sqrt(2.0), 1e-14);
  EXPECT_NEAR(diffusion_layer_thickness(3.2e-9, 1e-6, 1000.0) / diffusion_layer_thickness(4e-10, 1e-6, 1000.0), 2.0,
              1e-14);
  EXPECT_THROW(diffusion_layer_thickness(0.0, 1e-6, 1000.0), ValidationError);
  EXPECT_THROW(diffusion_layer_thickness(1e-9, 1e-6, -5.0), ValidationError);
}

TEST(Ferro, Dimensions) {
  FerroConfig cfg;
  EXPECT_EQ(ferro_build(cfg).dimension, 403);
  cfg.nz = 2001;
  const OdeSystem s = ferro_build(cfg);
  EXPECT_EQ(s.dimension, 4003);
  EXPECT_EQ(s.output_dimension, 1);
}

TEST(Ferro, OutputIsOhmicCurrent) {
  const FerroConfig cfg;
  const OdeSystem s = ferro_build(cfg);
  Vector u = s.initial_state;
  for (double e : {0.1, 0.25, 0.4}) {
    u(s.dimension - 1) = e;
    for (double t : {0.0, 0.3, 0.77}) {
      EXPECT_NEAR(s.output_map(t, u)(0), (cfg.e_total(t) - e) / cfg.r_ohm, 1e-12);
    }
  }
}

TEST(Ferro, SteadyStatePersistsAtRestPotential) {
  FerroConfig cfg;
  cfg.nz = 41;
  cfg.e_dc = cfg.e_r;
  cfg.e_ac = 0.0;
  const OdeSystem s = ferro_build(cfg);
  EXPECT_EQ(butler_volmer_rate(s.initial_state(s.dimension - 1), cfg.c_red_inf, cfg.c_ox_inf, cfg), 0.0);
  const Matrix x = integrate(s, 1.0, 0.1, tol(1e-6));
  for (Index j = 0; j < x.cols(); ++j) {
    EXPECT_LT(s.derivative(0.1 * static_cast<double>(j), x.col(j)).norm(), 1e-10);
  }
}

TEST(Ferro, NoReactionKeepsConcentrationsStationary) {
  FerroConfig cfg;
  cfg.nz = 41;
  cfg.k = 0.0;
  const OdeSystem s = ferro_build(cfg);
  const Matrix x = integrate(s, 1.0, 0.1, tol(1e-6));
  const Index nc = 2 * cfg.nz;
  for (Index j = 0; j < x.cols(); ++j) {
    EXPECT_LT((x.col(j).head(nc) - s.initial_state.head(nc)).cwiseAbs().maxCoeff(), 1e-10);
  }
  // the potential still follows the driving waveform
  EXPECT_GT((x.row(nc).array() - cfg.e_r).abs().maxCoeff(), 1e-3);
}

TEST(Ferro, JacobianMatchesFiniteDifferences) {
  FerroConfig cfg;
  cfg.nz = 7;
  const OdeSystem s = ferro_build(cfg);
  Vector x = s.initial_state;
  std::mt19937 rng(9);
  std::uniform_real_distribution<double> u(0.5, 1.5);
  for (Index i = 0; i < 2 * cfg.nz; ++i) x(i) *= u(rng);
  x(2 * cfg.nz) = 0.27;
  SparseMatrix jac;
  s.jacobian(0.3, x, jac);
  const Matrix fd = dense_fd_jacobian(s, 0.3, x);
  const Matrix dense(jac);
  for (Index i = 0; i < fd.rows(); ++i) {
    for (Index j = 0; j < fd.cols(); ++j) {
      EXPECT_NEAR(dense(i, j), fd(i, j), 1e-6 * std::max(1.0, std::abs(fd(i, j)))) << i << "," << j;
    }
  }
}

TEST(Ferro, DrivenResponseIsPeriodicAfterTransient) {
  FerroConfig cfg;
  cfg.nz = 51;
  const OdeSystem s = ferro_build(cfg);
  const Matrix x = integrate(s, 4.0, 0.05, tol(1e-6));
  const Matrix y = s.outputs(x, 0.05);
  ASSERT_TRUE(y.allFinite());
  // one-second period: the last two periods nearly coincide
  const double diff = (y.rightCols(20) - y.middleCols(y.cols() - 40, 20)).cwiseAbs().maxCoeff();
  EXPECT_LT(diff, 0.05 * y.cwiseAbs().maxCoeff());
  EXPECT_GT(y.cwiseAbs().maxCoeff(), 0.0);
}
