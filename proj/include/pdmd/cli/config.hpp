#pragma once

#include <nlohmann/json.hpp>
#include <toml.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "pdmd/io/rom_archive.hpp"
#include "pdmd/models/ferro.hpp"
#include "pdmd/models/fhn.hpp"

namespace pdmd::cli {

using Json = nlohmann::ordered_json;

enum class ModelKind { fhn, ferro, external };

inline std::string to_string(ModelKind m) {
  switch (m) {
    case ModelKind::fhn: return "fhn";
    case ModelKind::ferro: return "ferro";
    case ModelKind::external: return "external-snapshots";
  }
  return "unknown";
}

struct SamplingConfig {
  std::string spacing = "equidistant";  ///< equidistant | log10 | random | explicit
  Index count = 1;
  double lo = 0.0;
  double hi = 0.0;
  std::vector<double> values;  ///< explicit list
};

struct TimeConfig {
  double t_end = 1.0;
  double snapshot_end = 1.0;
  double dt_out = 0.1;

  Index snapshot_columns() const { return std::lround(snapshot_end / dt_out) + 1; }
  Index total_columns() const { return std::lround(t_end / dt_out) + 1; }
  Index horizon() const { return total_columns() - snapshot_columns(); }
};

struct ExternalConfig {
  std::string snapshot_dir;
  std::string reference_dir;
  std::vector<Index> output_rows;  ///< empty means every state row
};

/// Everything a run needs: model, training design, time window, RBF and DMD
/// settings and the held-out parameters used by `evaluate`.
struct RunConfig {
  ModelKind model = ModelKind::fhn;
  FhnConfig fhn;
  FerroConfig ferro;
  ExternalConfig external;
  SamplingConfig sampling;
  TimeConfig time;
  IntegratorOptions integrator;
  RbfOptions rbf;
  DmdConfig dmd;
  std::vector<double> test_params;
  int repeats = 3;  ///< timing repetitions; the fastest run is reported
};

namespace detail {

inline Json toml_to_json(const toml::node& node) {
  if (const auto* t = node.as_table()) {
    Json j = Json::object();
    for (const auto& [k, v] : *t) j[std::string(k.str())] = toml_to_json(v);
    return j;
  }
  if (const auto* a = node.as_array()) {
    Json j = Json::array();
    for (const auto& v : *a) j.push_back(toml_to_json(v));
    return j;
  }
  if (const auto* s = node.as_string()) return s->get();
  if (const auto* i = node.as_integer()) return i->get();
  if (const auto* f = node.as_floating_point()) return f->get();
  if (const auto* b = node.as_boolean()) return b->get();
  throw ConfigError("unsupported TOML value type (dates and times are not accepted)");
}

/// Reads keys from one JSON object and rejects keys nobody asked for.
class Section {
 public:
  Section(const Json& parent, const std::string& name) : name_(name) {
    if (parent.contains(name)) {
      if (!parent.at(name).is_object()) throw ConfigError("[" + name + "] must be a table");
      obj_ = parent.at(name);
    } else {
      obj_ = Json::object();
    }
  }

  bool has(const std::string& key) const { return obj_.contains(key); }

  template <class T>
  T get(const std::string& key, const T& fallback) {
    seen_.insert(key);
    if (!obj_.contains(key)) return fallback;
    try {
      const Json& v = obj_.at(key);
      if constexpr (std::is_same_v<T, double>) {
        if (!v.is_number()) throw ConfigError("");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw ConfigError("");
      }
      return v.get<T>();
    } catch (const std::exception&) {
      throw ConfigError("[" + name_ + "] " + key + " has the wrong type");
    }
  }

  /// A number or an array of numbers.
  std::vector<double> numbers(const std::string& key) {
    seen_.insert(key);
    if (!obj_.contains(key)) return {};
    const Json& v = obj_.at(key);
    if (v.is_number()) return {v.get<double>()};
    return get<std::vector<double>>(key, {});
  }

  void finish() const {
    for (const auto& [k, v] : obj_.items()) {
      if (!seen_.count(k)) throw ConfigError("unknown key '" + k + "' in [" + name_ + "]");
    }
  }

 private:
  std::string name_;
  Json obj_;
  std::set<std::string> seen_;
};

inline bool divides(double whole, double step) {
  const double ratio = whole / step;
  return ratio >= 1.0 - 1e-9 && std::abs(ratio - std::round(ratio)) <= 1e-9 * ratio;
}

inline Vector to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
}

}  // namespace detail

inline void validate(const RunConfig& c) {
  const TimeConfig& t = c.time;
  if (!(t.dt_out > 0.0 && t.snapshot_end > 0.0 && t.t_end > 0.0)) throw ConfigError("[time] values must be positive");
  if (t.snapshot_end > t.t_end * (1.0 + 1e-12)) throw ConfigError("[time] snapshot_end must not exceed t_end");
  if (!detail::divides(t.snapshot_end, t.dt_out) || !detail::divides(t.t_end, t.dt_out)) {
    throw ConfigError("[time] dt_out must divide both snapshot_end and t_end");
  }
  if (t.snapshot_columns() < 2) throw ConfigError("[time] the snapshot window must hold at least 2 columns");
  const SamplingConfig& s = c.sampling;
  if (s.spacing == "explicit") {
    if (s.values.empty()) throw ConfigError("[sampling] explicit spacing needs a non-empty values list");
  } else if (s.spacing == "equidistant" || s.spacing == "log10" || s.spacing == "random") {
    if (s.count < 1) throw ConfigError("[sampling] count must be at least 1");
    if (!(s.lo <= s.hi) || !std::isfinite(s.lo) || !std::isfinite(s.hi)) {
      throw ConfigError("[sampling] range must be [lo, hi] with lo <= hi");
    }
    if (s.count > 1 && s.lo == s.hi) throw ConfigError("[sampling] an empty range cannot hold several samples");
    if (s.spacing == "log10" && s.lo <= 0.0) throw ConfigError("[sampling] log10 spacing needs a positive range");
  } else {
    throw ConfigError("[sampling] unknown spacing '" + s.spacing + "'");
  }
  if (c.repeats < 1) throw ConfigError("[evaluate] repeats must be at least 1");
  if (!(c.integrator.rel_tol > 0.0 && c.integrator.abs_tol > 0.0)) {
    throw ConfigError("[integrator] tolerances must be positive");
  }
  try {
    c.rbf.kernel.validate();
    c.dmd.kernel.validate();
    if (c.model == ModelKind::fhn) c.fhn.validate();
    if (c.model == ModelKind::ferro) c.ferro.validate();
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  }
  if (c.dmd.eta < 0.0 || c.dmd.eta >= 1.0) throw ConfigError("[dmd] eta must lie in [0, 1)");
  if (c.model == ModelKind::external && c.external.snapshot_dir.empty()) {
    throw ConfigError("[external] snapshot_dir is required for external snapshots");
  }
}

inline RunConfig config_from_json(const Json& root) {
  if (!root.is_object()) throw ConfigError("configuration root must be a table");
  for (const auto& [k, v] : root.items()) {
    static const std::set<std::string> known = {"model",      "fhn", "ferro", "external", "sampling", "time",
                                                "integrator", "rbf", "dmd",   "evaluate"};
    if (!known.count(k)) throw ConfigError("unknown section [" + k + "]");
  }
  RunConfig c;

  detail::Section model(root, "model");
  const std::string name = model.get<std::string>("name", "fhn");
  if (name == "fhn") {
    c.model = ModelKind::fhn;
  } else if (name == "ferro") {
    c.model = ModelKind::ferro;
  } else if (name == "external-snapshots") {
    c.model = ModelKind::external;
  } else {
    throw ConfigError("[model] unknown model '" + name + "'");
  }
  model.finish();

  detail::Section fhn(root, "fhn");
  c.fhn.length = fhn.get("length", c.fhn.length);
  c.fhn.b = fhn.get("b", c.fhn.b);
  c.fhn.c = fhn.get("c", c.fhn.c);
  c.fhn.gamma = fhn.get("gamma", c.fhn.gamma);
  c.fhn.epsilon = fhn.get("epsilon", c.fhn.epsilon);
  c.fhn.nx = fhn.get<Index>("nx", c.fhn.nx);
  c.fhn.i0_amp = fhn.get("i0_amp", c.fhn.i0_amp);
  c.fhn.i0_rate = fhn.get("i0_rate", c.fhn.i0_rate);
  fhn.finish();

  detail::Section ferro(root, "ferro");
  FerroConfig& f = c.ferro;
  f.w_d = ferro.get("w_d", f.w_d);
  f.c_dl = ferro.get("c_dl", f.c_dl);
  f.beta = ferro.get("beta", f.beta);
  f.k = ferro.get("k", f.k);
  f.r_ohm = ferro.get("r_ohm", f.r_ohm);
  f.d_red = ferro.get("d_red", f.d_red);
  f.d_ox = ferro.get("d_ox", f.d_ox);
  f.c_red_inf = ferro.get("c_red_inf", f.c_red_inf);
  f.c_ox_inf = ferro.get("c_ox_inf", f.c_ox_inf);
  f.e_r = ferro.get("e_r", f.e_r);
  f.nu = ferro.get("nu", f.nu);
  f.temperature = ferro.get("temperature", f.temperature);
  f.e_dc = ferro.get("e_dc", f.e_dc);
  f.e_ac = ferro.get("e_ac", f.e_ac);
  f.frequency = ferro.get("frequency", f.frequency);
  f.nz = ferro.get<Index>("nz", f.nz);
  ferro.finish();

  detail::Section ext(root, "external");
  c.external.snapshot_dir = ext.get<std::string>("snapshot_dir", "");
  c.external.reference_dir = ext.get<std::string>("reference_dir", "");
  c.external.output_rows = ext.get<std::vector<Index>>("output_rows", {});
  ext.finish();

  detail::Section sampling(root, "sampling");
  c.sampling.spacing = sampling.get<std::string>("spacing", "equidistant");
  c.sampling.count = sampling.get<Index>("count", 1);
  const std::vector<double> range = sampling.numbers("range");
  if (!range.empty()) {
    if (range.size() != 2) throw ConfigError("[sampling] range must have two entries");
    c.sampling.lo = range[0];
    c.sampling.hi = range[1];
  }
  c.sampling.values = sampling.numbers("values");
  if (c.sampling.spacing == "explicit") c.sampling.count = static_cast<Index>(c.sampling.values.size());
  sampling.finish();

  detail::Section time(root, "time");
  c.time.t_end = time.get("t_end", c.time.t_end);
  c.time.snapshot_end = time.get("snapshot_end", c.time.t_end);
  c.time.dt_out = time.get("dt_out", c.time.dt_out);
  time.finish();

  detail::Section integ(root, "integrator");
  c.integrator.rel_tol = integ.get("rel_tol", c.integrator.rel_tol);
  c.integrator.abs_tol = integ.get("abs_tol", c.integrator.abs_tol);
  c.integrator.max_step = integ.get("max_step", c.integrator.max_step);
  c.integrator.max_steps = integ.get<long>("max_steps", c.integrator.max_steps);
  integ.finish();

  detail::Section rbf(root, "rbf");
  try {
    c.rbf.kernel.kind = rbf_kind_from_string(rbf.get<std::string>("kernel", "inverse_multiquadric"));
    c.rbf.kernel.eps = rbf.get("eps", c.rbf.kernel.eps);
    c.rbf.kernel.order = rbf.get("order", c.rbf.kernel.order);
    c.rbf.transform.kind = transform_kind_from_string(rbf.get<std::string>("transform", "identity"));
    c.rbf.transform.scale = detail::to_vector(rbf.numbers("scale"));
    c.rbf.transform.shift = detail::to_vector(rbf.numbers("shift"));
    c.rbf.ridge = rbf.get("ridge", c.rbf.ridge);
    c.rbf.solve_mode = io::rbf_solve_mode_from_string(rbf.get<std::string>("solve_mode", "automatic"));
    c.rbf.cond_threshold = rbf.get("cond_threshold", c.rbf.cond_threshold);
  } catch (const ValidationError& e) {
    throw ConfigError(std::string("[rbf] ") + e.what());
  }
  rbf.finish();
  if (c.rbf.transform.kind == TransformKind::affine &&
      (c.rbf.transform.scale.size() == 0 || c.rbf.transform.scale.size() != c.rbf.transform.shift.size())) {
    throw ConfigError("[rbf] affine transform needs scale and shift of equal length");
  }

  detail::Section dmd(root, "dmd");
  try {
    c.dmd.variant = io::dmd_variant_from_string(dmd.get<std::string>("variant", "kernel"));
    c.dmd.eta = dmd.get("eta", c.dmd.eta);
    const Index max_rank = dmd.get<Index>("max_rank", 0);
    if (max_rank < 0) throw ConfigError("[dmd] max_rank must be non-negative");
    if (max_rank > 0) c.dmd.max_rank = max_rank;
    c.dmd.mode_kind = io::mode_kind_from_string(dmd.get<std::string>("mode_kind", "exact"));
    c.dmd.anchor = io::dmd_anchor_from_string(dmd.get<std::string>("anchor", "initial"));
    c.dmd.kernel.kind = io::kernel_kind_from_string(dmd.get<std::string>("kernel", "gaussian"));
    c.dmd.kernel.alpha = dmd.get("alpha", c.dmd.kernel.alpha);
    c.dmd.kernel.sigma = dmd.get("sigma", c.dmd.kernel.sigma);
    c.dmd.kernel.sigma_scale = dmd.get("sigma_scale", c.dmd.kernel.sigma_scale);
  } catch (const ValidationError& e) {
    throw ConfigError(std::string("[dmd] ") + e.what());
  }
  dmd.finish();

  detail::Section eval(root, "evaluate");
  c.test_params = eval.numbers("test_params");
  c.repeats = eval.get("repeats", c.repeats);
  eval.finish();

  validate(c);
  return c;
}

/// Canonical form with every field spelled out; archived with each ROM.
inline Json config_to_json(const RunConfig& c) {
  Json j;
  j["model"] = {{"name", to_string(c.model)}};
  j["fhn"] = {{"length", c.fhn.length}, {"b", c.fhn.b},           {"c", c.fhn.c},
              {"gamma", c.fhn.gamma},   {"epsilon", c.fhn.epsilon}, {"nx", c.fhn.nx},
              {"i0_amp", c.fhn.i0_amp}, {"i0_rate", c.fhn.i0_rate}};
  const FerroConfig& f = c.ferro;
  j["ferro"] = {{"w_d", f.w_d},     {"c_dl", f.c_dl},           {"beta", f.beta},
                {"k", f.k},         {"r_ohm", f.r_ohm},         {"d_red", f.d_red},
                {"d_ox", f.d_ox},   {"c_red_inf", f.c_red_inf}, {"c_ox_inf", f.c_ox_inf},
                {"e_r", f.e_r},     {"nu", f.nu},               {"temperature", f.temperature},
                {"e_dc", f.e_dc},   {"e_ac", f.e_ac},           {"frequency", f.frequency},
                {"nz", f.nz}};
  j["external"] = {{"snapshot_dir", c.external.snapshot_dir},
                   {"reference_dir", c.external.reference_dir},
                   {"output_rows", c.external.output_rows}};
  Json sampling = {{"spacing", c.sampling.spacing}, {"count", c.sampling.count}};
  if (c.sampling.spacing == "explicit") {
    sampling["values"] = c.sampling.values;
  } else {
    sampling["range"] = {c.sampling.lo, c.sampling.hi};
  }
  j["sampling"] = sampling;
  j["time"] = {{"t_end", c.time.t_end}, {"snapshot_end", c.time.snapshot_end}, {"dt_out", c.time.dt_out}};
  j["integrator"] = {{"rel_tol", c.integrator.rel_tol},
                     {"abs_tol", c.integrator.abs_tol},
                     {"max_step", c.integrator.max_step},
                     {"max_steps", c.integrator.max_steps}};
  const auto vec = [](const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  j["rbf"] = {{"kernel", to_string(c.rbf.kernel.kind)},
              {"eps", c.rbf.kernel.eps},
              {"order", c.rbf.kernel.order},
              {"transform", to_string(c.rbf.transform.kind)},
              {"scale", vec(c.rbf.transform.scale)},
              {"shift", vec(c.rbf.transform.shift)},
              {"ridge", c.rbf.ridge},
              {"solve_mode", io::to_string(c.rbf.solve_mode)},
              {"cond_threshold", c.rbf.cond_threshold}};
  j["dmd"] = {{"variant", io::to_string(c.dmd.variant)},
              {"eta", c.dmd.eta},
              {"max_rank", c.dmd.max_rank.value_or(0)},
              {"mode_kind", io::to_string(c.dmd.mode_kind)},
              {"anchor", io::to_string(c.dmd.anchor)},
              {"kernel", io::to_string(c.dmd.kernel.kind)},
              {"alpha", c.dmd.kernel.alpha},
              {"sigma", c.dmd.kernel.sigma},
              {"sigma_scale", c.dmd.kernel.sigma_scale}};
  j["evaluate"] = {{"test_params", c.test_params}, {"repeats", c.repeats}};
  return j;
}

inline RunConfig parse_config_text(const std::string& text, const std::string& source = "config") {
  try {
    const toml::table table = toml::parse(text, source);
    return config_from_json(detail::toml_to_json(table));
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << source << ":" << e.source().begin.line << ": " << e.description();
    throw ConfigError(os.str());
  }
}

inline RunConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file " + path.string() + " does not exist");
  return parse_config_text(io::read_text_file(path), path.string());
}

inline std::string config_hash(const RunConfig& c) { return io::hex64(io::fnv1a64(config_to_json(c).dump())); }

/// Training parameters in the order they are simulated.
inline std::vector<double> sample_parameters(const SamplingConfig& s, unsigned long seed) {
  if (s.spacing == "explicit") return s.values;
  std::vector<double> out(static_cast<std::size_t>(s.count));
  const double n1 = static_cast<double>(std::max<Index>(s.count - 1, 1));
  if (s.spacing == "random") {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(s.lo, s.hi);
    for (double& v : out) v = u(rng);
    std::sort(out.begin(), out.end());
    return out;
  }
  for (Index k = 0; k < s.count; ++k) {
    const double frac = static_cast<double>(k) / n1;
    if (s.spacing == "log10") {
      const double a = std::log10(s.lo), b = std::log10(s.hi);
      out[static_cast<std::size_t>(k)] = std::pow(10.0, a + (b - a) * frac);
    } else {
      out[static_cast<std::size_t>(k)] = s.lo + (s.hi - s.lo) * frac;
    }
  }
  return out;
}

/// Full-order system at scalar parameter mu (epsilon for FHN, rpm for ferro).
inline OdeSystem build_model(const RunConfig& c, double mu) {
  switch (c.model) {
    case ModelKind::fhn: {
      FhnConfig f = c.fhn;
      f.epsilon = mu;
      return fhn_build(f);
    }
    case ModelKind::ferro: {
      FerroConfig f = c.ferro;
      f.w_d = mu;
      return ferro_build(f);
    }
    case ModelKind::external: break;
  }
  throw ValidationError("external snapshots have no full-order model to simulate");
}

/// Outputs y(t_j) for a state trajectory starting at t = 0.
inline Matrix model_outputs(const RunConfig& c, const Vector& mu, const Matrix& states) {
  if (c.model == ModelKind::external) {
    if (c.external.output_rows.empty()) return states;
    Matrix y(static_cast<Index>(c.external.output_rows.size()), states.cols());
    for (std::size_t i = 0; i < c.external.output_rows.size(); ++i) {
      const Index r = c.external.output_rows[i];
      pdmd::detail::require(r >= 0 && r < states.rows(), "[external] output row " + std::to_string(r) + " is out of range");
      y.row(static_cast<Index>(i)) = states.row(r);
    }
    return y;
  }
  pdmd::detail::require(mu.size() == 1, "built-in models take a single scalar parameter");
  return build_model(c, mu(0)).outputs(states, c.time.dt_out);
}

}  // namespace pdmd::cli
