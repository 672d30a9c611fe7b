#pragma once

#include <boost/multiprecision/cpp_bin_float.hpp>

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "pdmd/matdec.hpp"

namespace pdmd {

enum class RbfKind { linear_spline, cubic_spline, thin_plate, multiquadric, inverse_multiquadric, gaussian };

struct RbfKernel {
  RbfKind kind = RbfKind::inverse_multiquadric;
  double eps = 1.0 / 30.0;  ///< shape factor (MQ, IMQ, gaussian)
  int order = 2;            ///< thin-plate exponent k (even)

  static RbfKernel linear_spline() { return {RbfKind::linear_spline, 1.0, 2}; }
  static RbfKernel cubic_spline() { return {RbfKind::cubic_spline, 1.0, 2}; }
  static RbfKernel thin_plate(int k = 2) { return {RbfKind::thin_plate, 1.0, k}; }
  static RbfKernel multiquadric(double eps) { return {RbfKind::multiquadric, eps, 2}; }
  static RbfKernel inverse_multiquadric(double eps = 1.0 / 30.0) { return {RbfKind::inverse_multiquadric, eps, 2}; }
  static RbfKernel gaussian(double eps) { return {RbfKind::gaussian, eps, 2}; }

  bool uses_eps() const {
    return kind == RbfKind::multiquadric || kind == RbfKind::inverse_multiquadric || kind == RbfKind::gaussian;
  }

  void validate() const {
    if (uses_eps()) detail::require(std::isfinite(eps) && eps > 0.0, "RBF shape factor must be positive");
    if (kind == RbfKind::thin_plate) {
      detail::require(order >= 2 && order % 2 == 0, "thin-plate order must be an even integer >= 2");
    }
  }
};

inline std::string to_string(RbfKind k) {
  switch (k) {
    case RbfKind::linear_spline: return "linear_spline";
    case RbfKind::cubic_spline: return "cubic_spline";
    case RbfKind::thin_plate: return "thin_plate";
    case RbfKind::multiquadric: return "multiquadric";
    case RbfKind::inverse_multiquadric: return "inverse_multiquadric";
    case RbfKind::gaussian: return "gaussian";
  }
  return "unknown";
}

inline RbfKind rbf_kind_from_string(const std::string& s) {
  for (RbfKind k : {RbfKind::linear_spline, RbfKind::cubic_spline, RbfKind::thin_plate, RbfKind::multiquadric,
                    RbfKind::inverse_multiquadric, RbfKind::gaussian}) {
    if (to_string(k) == s) return k;
  }
  if (s == "imq") return RbfKind::inverse_multiquadric;
  if (s == "mq") return RbfKind::multiquadric;
  throw ValidationError("unknown RBF kernel '" + s + "'");
}

/// Table of radial functions, generic over the floating type.
template <class Real>
Real kernel_value_t(const RbfKernel& k, const Real& r) {
  using std::exp;
  using std::log;
  using std::pow;
  using std::sqrt;
  const Real e(k.eps);
  switch (k.kind) {
    case RbfKind::linear_spline: return r;
    case RbfKind::cubic_spline: return r * r * r;
    case RbfKind::thin_plate: {
      if (r == 0) return Real(0);
      Real p(1);
      for (int i = 0; i < k.order; ++i) p *= r;
      return p * log(r);
    }
    case RbfKind::multiquadric: return sqrt(Real(1) + e * e * r * r);
    case RbfKind::inverse_multiquadric: return Real(1) / sqrt(Real(1) + e * e * r * r);
    case RbfKind::gaussian: return exp(-(e * e * r * r));
  }
  return Real(0);
}

inline double kernel_value(const RbfKernel& k, double r) {
  k.validate();
  detail::require(std::isfinite(r) && r >= 0.0, "kernel_value: radius must be finite and non-negative");
  return kernel_value_t<double>(k, r);
}

enum class TransformKind { identity, log10, affine };

/// Map applied to parameters before distances are measured: identity,
/// componentwise log10, or scale * x + shift.
struct ParamTransform {
  TransformKind kind = TransformKind::identity;
  Vector scale;
  Vector shift;

  static ParamTransform identity() { return {}; }
  static ParamTransform log10() { return {TransformKind::log10, {}, {}}; }
  static ParamTransform affine(Vector scale, Vector shift) {
    return {TransformKind::affine, std::move(scale), std::move(shift)};
  }

  Vector apply(const Vector& x) const {
    detail::require(x.allFinite(), "parameter vector contains non-finite entries");
    switch (kind) {
      case TransformKind::identity: return x;
      case TransformKind::log10: {
        detail::require((x.array() > 0.0).all(), "log10 transform requires strictly positive parameters");
        return x.array().log10().matrix();
      }
      case TransformKind::affine: {
        detail::require(scale.size() == x.size() && shift.size() == x.size(),
                        "affine transform dimension does not match the parameter dimension");
        return (scale.array() * x.array() + shift.array()).matrix();
      }
    }
    return x;
  }

  Matrix apply_rows(const Matrix& rows) const {
    Matrix out(rows.rows(), rows.cols());
    for (Index i = 0; i < rows.rows(); ++i) out.row(i) = apply(rows.row(i).transpose()).transpose();
    return out;
  }
};

inline std::string to_string(TransformKind k) {
  switch (k) {
    case TransformKind::identity: return "identity";
    case TransformKind::log10: return "log10";
    case TransformKind::affine: return "affine";
  }
  return "unknown";
}

inline TransformKind transform_kind_from_string(const std::string& s) {
  if (s == "identity") return TransformKind::identity;
  if (s == "log10") return TransformKind::log10;
  if (s == "affine") return TransformKind::affine;
  throw ValidationError("unknown parameter transform '" + s + "'");
}

/// How the interpolant is stored and evaluated.
enum class RbfBasis {
  weights,   ///< f(x) = W^T k(x), W from a double-precision Gram solve
  cardinal,  ///< f(x) = Y^T c(x), c = G^-1 k(x) solved in extended precision
};

enum class RbfSolveMode { automatic, double_precision, extended_precision };

struct RbfOptions {
  RbfKernel kernel;
  ParamTransform transform;
  double ridge = 0.0;
  RbfSolveMode solve_mode = RbfSolveMode::automatic;
  double cond_threshold = 1e8;  ///< automatic mode switches to extended precision above this
};

namespace detail {

class CardinalSolver {
 public:
  virtual ~CardinalSolver() = default;
  /// c solving (G + ridge I) c = k(x) for a transformed point x.
  virtual Vector cardinal(const Vector& tx) const = 0;
  /// (G + ridge I)^-1 rounded to double.
  virtual Matrix inverse() const = 0;
  virtual int digits() const = 0;
};

template <unsigned Digits>
class MpCardinalSolver final : public CardinalSolver {
 public:
  using Real = boost::multiprecision::number<boost::multiprecision::cpp_bin_float<Digits>,
                                             boost::multiprecision::et_off>;

  MpCardinalSolver(const Matrix& tcenters, const RbfKernel& kernel, double ridge)
      : centers_(tcenters), kernel_(kernel), n_(tcenters.rows()) {
    lu_.resize(static_cast<std::size_t>(n_ * n_));
    for (Index i = 0; i < n_; ++i) {
      for (Index j = 0; j < n_; ++j) {
        at(i, j) = kernel_value_t<Real>(kernel_, distance(centers_.row(i).transpose(), j));
      }
      at(i, i) += Real(ridge);
    }
    piv_.resize(static_cast<std::size_t>(n_));
    for (Index k = 0; k < n_; ++k) {
      Index p = k;
      Real best = abs(at(k, k));
      for (Index i = k + 1; i < n_; ++i) {
        Real v = abs(at(i, k));
        if (v > best) {
          best = v;
          p = i;
        }
      }
      if (best == 0) throw NumericalError("RBF Gram matrix is exactly singular");
      piv_[static_cast<std::size_t>(k)] = p;
      if (p != k) {
        for (Index j = 0; j < n_; ++j) std::swap(at(k, j), at(p, j));
      }
      for (Index i = k + 1; i < n_; ++i) {
        at(i, k) /= at(k, k);
        const Real l = at(i, k);
        if (l == 0) continue;
        for (Index j = k + 1; j < n_; ++j) at(i, j) -= l * at(k, j);
      }
    }
  }

  Vector cardinal(const Vector& tx) const override {
    std::vector<Real> b(static_cast<std::size_t>(n_));
    for (Index i = 0; i < n_; ++i) b[static_cast<std::size_t>(i)] = kernel_value_t<Real>(kernel_, distance(tx, i));
    solve_in_place(b);
    Vector c(n_);
    for (Index i = 0; i < n_; ++i) c(i) = static_cast<double>(b[static_cast<std::size_t>(i)]);
    return c;
  }

  Matrix inverse() const override {
    Matrix inv(n_, n_);
    for (Index j = 0; j < n_; ++j) {
      std::vector<Real> b(static_cast<std::size_t>(n_), Real(0));
      b[static_cast<std::size_t>(j)] = Real(1);
      solve_in_place(b);
      for (Index i = 0; i < n_; ++i) inv(i, j) = static_cast<double>(b[static_cast<std::size_t>(i)]);
    }
    return inv;
  }

  int digits() const override { return static_cast<int>(Digits); }

 private:
  Real& at(Index i, Index j) { return lu_[static_cast<std::size_t>(i * n_ + j)]; }
  const Real& at(Index i, Index j) const { return lu_[static_cast<std::size_t>(i * n_ + j)]; }

  Real distance(const Vector& x, Index center) const {
    Real s(0);
    for (Index d = 0; d < centers_.cols(); ++d) {
      const Real diff = Real(x(d)) - Real(centers_(center, d));
      s += diff * diff;
    }
    return sqrt(s);
  }

  void solve_in_place(std::vector<Real>& b) const {
    for (Index k = 0; k < n_; ++k) {
      const Index p = piv_[static_cast<std::size_t>(k)];
      if (p != k) std::swap(b[static_cast<std::size_t>(k)], b[static_cast<std::size_t>(p)]);
    }
    for (Index i = 0; i < n_; ++i) {
      Real s = b[static_cast<std::size_t>(i)];
      for (Index j = 0; j < i; ++j) s -= at(i, j) * b[static_cast<std::size_t>(j)];
      b[static_cast<std::size_t>(i)] = s;
    }
    for (Index i = n_ - 1; i >= 0; --i) {
      Real s = b[static_cast<std::size_t>(i)];
      for (Index j = i + 1; j < n_; ++j) s -= at(i, j) * b[static_cast<std::size_t>(j)];
      b[static_cast<std::size_t>(i)] = s / at(i, i);
    }
  }

  Matrix centers_;
  RbfKernel kernel_;
  Index n_;
  std::vector<Real> lu_;
  std::vector<Index> piv_;
};

inline std::shared_ptr<const CardinalSolver> make_cardinal_solver(int tier, const Matrix& tc, const RbfKernel& k,
                                                                  double ridge) {
  switch (tier) {
    case 0: return std::make_shared<MpCardinalSolver<40>>(tc, k, ridge);
    case 1: return std::make_shared<MpCardinalSolver<80>>(tc, k, ridge);
    case 2: return std::make_shared<MpCardinalSolver<160>>(tc, k, ridge);
    case 3: return std::make_shared<MpCardinalSolver<320>>(tc, k, ridge);
    default: return std::make_shared<MpCardinalSolver<640>>(tc, k, ridge);
  }
}
inline constexpr int kCardinalTiers = 5;

/// Probe points: midpoints between each center and its nearest neighbour.
inline std::vector<Vector> cardinal_probes(const Matrix& tc) {
  std::vector<Vector> probes;
  const Index n = tc.rows();
  for (Index i = 0; i < n; ++i) {
    Index best = -1;
    double best_d = 0.0;
    for (Index j = 0; j < n; ++j) {
      if (j == i) continue;
      const double d = (tc.row(i) - tc.row(j)).norm();
      if (best < 0 || d < best_d) {
        best = j;
        best_d = d;
      }
    }
    if (best >= 0) probes.push_back(0.5 * (tc.row(i) + tc.row(best)).transpose());
  }
  return probes;
}

}  // namespace detail

/// RBF network f(x) = sum_i w_i kappa(|T(x) - T(x_i)|) over many target
/// columns sharing one Gram matrix.
class RbfInterpolant {
 public:
  RbfInterpolant() = default;

  /// Rebuilds an interpolant from stored coefficients (weights or targets).
  static RbfInterpolant from_coefficients(const Matrix& centers, const Matrix& coefficients, const RbfOptions& options,
                                          RbfBasis basis) {
    RbfInterpolant out;
    out.setup(centers, options);
    detail::require(coefficients.rows() == centers.rows(), "RBF coefficients row count must equal the center count");
    out.basis_ = basis;
    out.coefficients_ = coefficients;
    if (basis == RbfBasis::cardinal) out.build_cardinal();
    return out;
  }

  static RbfInterpolant fit(const Matrix& centers, const Matrix& targets, const RbfOptions& options = {}) {
    RbfInterpolant out;
    out.setup(centers, options);
    detail::require(targets.rows() == centers.rows(), "RBF targets row count must equal the center count");
    detail::require(targets.allFinite(), "RBF targets contain non-finite entries");

    bool extended = options.solve_mode == RbfSolveMode::extended_precision;
    if (options.solve_mode == RbfSolveMode::automatic) {
      Eigen::JacobiSVD<Matrix> svd(out.shifted_gram());
      const Vector& s = svd.singularValues();
      const double cond = s(s.size() - 1) > 0.0 ? s(0) / s(s.size() - 1) : INFINITY;
      out.gram_condition_ = cond;
      extended = !(cond < options.cond_threshold);
    }
    if (extended) {
      out.basis_ = RbfBasis::cardinal;
      out.coefficients_ = targets;
      try {
        out.build_cardinal();
        return out;
      } catch (const NumericalError&) {
        out.cardinal_.reset();
      }
    }
    out.basis_ = RbfBasis::weights;
    const SpdSolveResult sol = spd_solve(out.shifted_gram(), targets, 0.0);
    out.coefficients_ = sol.x;
    out.used_fallback_ = sol.used_fallback;
    return out;
  }

  /// Coefficients c with f(x) = c^T Y (training targets Y).
  Vector cardinal(const Vector& x) const {
    const Vector tx = transformed(x);
    if (basis_ == RbfBasis::cardinal) return cardinal_->cardinal(tx);
    throw ValidationError("cardinal(): interpolant is stored in the weights basis");
  }

  Vector evaluate(const Vector& x) const {
    const Vector tx = transformed(x);
    if (basis_ == RbfBasis::cardinal) {
      const Vector c = cardinal_->cardinal(tx);
      return coefficients_.transpose() * c;
    }
    return coefficients_.transpose() * kernel_row(tx);
  }

  /// Weight matrix W with (G + ridge I) W = Y. In the cardinal basis this is
  /// formed from a rounded inverse and is for inspection only.
  Matrix weights() const {
    if (basis_ == RbfBasis::weights) return coefficients_;
    return cardinal_->inverse() * coefficients_;
  }

  /// Gram matrix G(i, j) = kappa(|T(x_i) - T(x_j)|) in double precision.
  Matrix gram() const {
    const Index n = tcenters_.rows();
    Matrix g(n, n);
    for (Index j = 0; j < n; ++j) {
      for (Index i = 0; i <= j; ++i) {
        g(i, j) = kernel_value_t<double>(options_.kernel, (tcenters_.row(i) - tcenters_.row(j)).norm());
        g(j, i) = g(i, j);
      }
    }
    return g;
  }

  const Matrix& centers() const { return centers_; }
  const Matrix& transformed_centers() const { return tcenters_; }
  const Matrix& coefficients() const { return coefficients_; }
  const RbfOptions& options() const { return options_; }
  RbfBasis basis() const { return basis_; }
  bool used_fallback() const { return used_fallback_; }
  double gram_condition() const { return gram_condition_; }
  int precision_digits() const { return cardinal_ ? cardinal_->digits() : 16; }
  bool precision_verified() const { return precision_verified_; }
  Index center_count() const { return centers_.rows(); }
  Index target_count() const { return coefficients_.cols(); }

 private:
  void setup(const Matrix& centers, const RbfOptions& options) {
    options.kernel.validate();
    detail::require(centers.rows() >= 1 && centers.cols() >= 1, "RBF needs at least one center");
    detail::require(options.ridge >= 0.0 && std::isfinite(options.ridge), "RBF ridge must be non-negative");
    centers_ = centers;
    options_ = options;
    tcenters_ = options.transform.apply_rows(centers);
    for (Index i = 0; i < tcenters_.rows(); ++i) {
      for (Index j = 0; j < i; ++j) {
        detail::require((tcenters_.row(i) - tcenters_.row(j)).norm() > 0.0,
                        "RBF centers " + std::to_string(j) + " and " + std::to_string(i) + " coincide");
      }
    }
  }

  Vector transformed(const Vector& x) const {
    detail::require(x.size() == centers_.cols(), "RBF evaluation point has the wrong dimension");
    return options_.transform.apply(x);
  }

  Vector kernel_row(const Vector& tx) const {
    Vector k(tcenters_.rows());
    for (Index i = 0; i < tcenters_.rows(); ++i) {
      k(i) = kernel_value_t<double>(options_.kernel, (tcenters_.row(i).transpose() - tx).norm());
    }
    return k;
  }

  Matrix shifted_gram() const {
    Matrix g = gram();
    g.diagonal().array() += options_.ridge;
    return g;
  }

  /// Picks the lowest precision tier whose cardinal functions agree with the
  /// next tier at the probe points.
  void build_cardinal() {
    const auto probes = detail::cardinal_probes(tcenters_);
    auto current = detail::make_cardinal_solver(0, tcenters_, options_.kernel, options_.ridge);
    precision_verified_ = probes.empty();
    if (probes.empty()) {
      cardinal_ = current;
      return;
    }
    for (int tier = 1; tier < detail::kCardinalTiers; ++tier) {
      auto next = detail::make_cardinal_solver(tier, tcenters_, options_.kernel, options_.ridge);
      double diff = 0.0;
      for (const Vector& p : probes) {
        diff = std::max(diff, (current->cardinal(p) - next->cardinal(p)).cwiseAbs().maxCoeff());
      }
      current = next;
      if (diff <= 1e-13) {
        precision_verified_ = true;
        break;
      }
    }
    cardinal_ = current;
  }

  Matrix centers_;
  Matrix tcenters_;
  RbfOptions options_;
  RbfBasis basis_ = RbfBasis::weights;
  Matrix coefficients_;
  std::shared_ptr<const detail::CardinalSolver> cardinal_;
  bool used_fallback_ = false;
  bool precision_verified_ = true;
  double gram_condition_ = 0.0;
};

}  // namespace pdmd
