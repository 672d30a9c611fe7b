#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <limits>
#include <mutex>
#include <optional>
#include <ostream>
#include <thread>
#include <vector>

#include "pdmd/cli/config.hpp"

namespace pdmd::cli {

namespace fs = std::filesystem;

inline const std::vector<std::string>& timing_columns() {
  static const std::vector<std::string> cols = {"snapshot generation", "RBF training", "RBF prediction",
                                                "DMD prediction", "FOM simulation"};
  return cols;
}

inline constexpr const char* kRomFileName = "rom.pdmr";

namespace detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

inline std::string sample_file_name(std::size_t k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "sample_%03zu.pdmd", k);
  return buf;
}

inline std::string format_seconds(double s) {
  if (!std::isfinite(s)) return "n/a";
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << std::fixed << std::setprecision(3) << s;
  return os.str();
}

inline std::string format_param(const Vector& mu) {
  std::string s;
  for (Index i = 0; i < mu.size(); ++i) s += (i ? ";" : "") + io::format_number(mu(i));
  return s;
}

inline std::vector<fs::path> snapshot_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("snapshot directory " + dir.string() + " does not exist");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".pdmd") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

inline void write_json(const fs::path& path, const Json& j) { io::write_text_file(path, j.dump(2) + "\n"); }

inline Json read_json_or_empty(const fs::path& path) {
  if (!fs::exists(path)) return Json::object();
  try {
    return Json::parse(io::read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

inline double json_seconds(const Json& j, const std::string& key) {
  if (j.contains(key) && j.at(key).is_number()) return j.at(key).get<double>();
  return std::numeric_limits<double>::quiet_NaN();
}

}  // namespace detail

struct SimulateResult {
  std::vector<double> params;
  std::vector<fs::path> files;      ///< empty path for failed samples
  std::vector<std::string> failures;
  double seconds = 0.0;
};

/// One snapshot file per training parameter over [0, snapshot_end]. A failed
/// sample is reported and skipped; the rest of the batch still runs.
inline SimulateResult cmd_simulate(const RunConfig& cfg, const fs::path& out_dir, int workers, unsigned long seed,
                                   std::ostream& log) {
  pdmd::detail::require(workers >= 1, "simulate: --workers must be at least 1");
  if (cfg.model == ModelKind::external) throw ValidationError("simulate: external snapshots cannot be simulated");
  fs::create_directories(out_dir);
  for (const fs::path& old : detail::snapshot_files(out_dir)) {
    if (old.filename().string().rfind("sample_", 0) == 0) {
      fs::remove(old);
      fs::remove(io::sidecar_path(old));
    }
  }
  SimulateResult res;
  res.params = sample_parameters(cfg.sampling, seed);
  const std::size_t n = res.params.size();
  res.files.assign(n, {});
  std::vector<std::string> errors(n);
  const std::string hash = config_hash(cfg);

  const auto start = detail::Clock::now();
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t k = next++; k < n; k = next++) {
      const double mu = res.params[k];
      try {
        const OdeSystem sys = build_model(cfg, mu);
        const Matrix x = integrate(sys, cfg.time.snapshot_end, cfg.time.dt_out, cfg.integrator);
        const fs::path file = out_dir / detail::sample_file_name(k);
        io::write_snapshot_file(file, x);
        io::write_sidecar(file, {{mu}, cfg.time.dt_out, 0.0, to_string(cfg.model), hash});
        res.files[k] = file;
      } catch (const std::exception& e) {
        errors[k] = e.what();
      }
    }
  };
  const int n_threads = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(workers), std::max<std::size_t>(n, 1)));
  std::vector<std::thread> pool;
  for (int t = 1; t < n_threads; ++t) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  res.seconds = detail::seconds_since(start);

  Json samples = Json::array();
  for (std::size_t k = 0; k < n; ++k) {
    Json s = {{"index", k}, {"param", res.params[k]}};
    if (errors[k].empty()) {
      s["file"] = res.files[k].filename().string();
    } else {
      s["error"] = errors[k];
      res.failures.push_back("sample " + std::to_string(k) + " (mu = " + io::format_number(res.params[k]) +
                             "): " + errors[k]);
      log << "warning: " << res.failures.back() << "\n";
    }
    samples.push_back(s);
  }
  detail::write_json(out_dir / "simulate_manifest.json", {{"command", "simulate"},
                                                          {"seed", seed},
                                                          {"config_hash", hash},
                                                          {"config", config_to_json(cfg)},
                                                          {"samples", samples}});
  detail::write_json(out_dir / "timing.json", {{"snapshot_generation_seconds", res.seconds}});
  log << "simulated " << (n - res.failures.size()) << " of " << n << " samples in "
      << detail::format_seconds(res.seconds) << " s\n";
  return res;
}

/// Training data assembled from a directory of snapshot files and sidecars.
inline TrainingSet load_training_set(const RunConfig& cfg, const fs::path& dir) {
  const std::vector<fs::path> files = detail::snapshot_files(dir);
  if (files.empty()) throw ValidationError("no snapshot files (*.pdmd) in " + dir.string());
  TrainingSet ts;
  std::vector<std::vector<double>> params;
  const Index want_cols = cfg.time.snapshot_columns();
  for (const fs::path& file : files) {
    const io::SnapshotMeta meta = io::read_sidecar(file);
    Matrix x = io::read_snapshot_file(file);
    if (x.cols() < want_cols) {
      throw ValidationError(file.string() + ": " + std::to_string(x.cols()) + " columns, the snapshot window needs " +
                            std::to_string(want_cols));
    }
    if (x.cols() > want_cols) x = x.leftCols(want_cols).eval();
    if (!ts.snapshots.empty() && x.rows() != ts.snapshots.front().rows()) {
      throw ValidationError(file.string() + ": state dimension " + std::to_string(x.rows()) + " differs from " +
                            std::to_string(ts.snapshots.front().rows()) + " in " + files.front().string());
    }
    if (std::abs(meta.dt - cfg.time.dt_out) > 1e-12 * cfg.time.dt_out) {
      throw ValidationError(file.string() + ": sidecar dt " + io::format_number(meta.dt) +
                            " does not match [time] dt_out " + io::format_number(cfg.time.dt_out));
    }
    if (meta.t0 != 0.0) throw ValidationError(file.string() + ": snapshots must start at t0 = 0");
    if (meta.param.empty() || (!params.empty() && meta.param.size() != params.front().size())) {
      throw ValidationError(file.string() + ": parameter vector has the wrong length");
    }
    params.push_back(meta.param);
    ts.snapshots.push_back(std::move(x));
  }
  ts.params.resize(static_cast<Index>(params.size()), static_cast<Index>(params.front().size()));
  for (std::size_t k = 0; k < params.size(); ++k) {
    for (std::size_t i = 0; i < params[k].size(); ++i) {
      ts.params(static_cast<Index>(k), static_cast<Index>(i)) = params[k][i];
    }
  }
  ts.dt = cfg.time.dt_out;
  ts.t0 = 0.0;
  return ts;
}

struct TrainResult {
  fs::path archive;
  Index samples = 0;
  double seconds = 0.0;
};

inline TrainResult cmd_train(const RunConfig& cfg, const fs::path& snapshot_dir, const fs::path& out_dir,
                             std::ostream& log) {
  const TrainingSet ts = load_training_set(cfg, snapshot_dir);
  fs::create_directories(out_dir);
  const auto start = detail::Clock::now();
  io::RomArchive archive{train(ts, cfg.rbf, cfg.dmd), config_to_json(cfg)};
  TrainResult res;
  res.seconds = detail::seconds_since(start);
  res.samples = ts.params.rows();
  res.archive = out_dir / kRomFileName;
  io::write_rom_archive(res.archive, archive);

  const Json sim_timing = detail::read_json_or_empty(snapshot_dir / "timing.json");
  Json timing = {{"rbf_training_seconds", res.seconds}};
  const double sim = detail::json_seconds(sim_timing, "snapshot_generation_seconds");
  if (std::isfinite(sim)) timing["snapshot_generation_seconds"] = sim;
  detail::write_json(io::sidecar_path(res.archive), timing);
  detail::write_json(out_dir / "train_manifest.json", {{"command", "train"},
                                                       {"config_hash", config_hash(cfg)},
                                                       {"config", config_to_json(cfg)},
                                                       {"samples", res.samples},
                                                       {"rbf_basis", archive.rom.interpolant.basis() ==
                                                                             RbfBasis::cardinal
                                                                         ? "cardinal"
                                                                         : "weights"}});
  log << "trained on " << res.samples << " samples (" << ts.snapshots.front().rows() << " x "
      << ts.snapshots.front().cols() << ") in " << detail::format_seconds(res.seconds) << " s -> "
      << res.archive.string() << "\n";
  return res;
}

inline std::vector<std::string> output_header(Index n_outputs, const std::string& prefix) {
  std::vector<std::string> h = {"time"};
  for (Index i = 0; i < n_outputs; ++i) h.push_back(prefix + std::to_string(i + 1));
  return h;
}

inline void write_series_csv(const fs::path& path, const std::vector<std::string>& header, const Matrix& rows_by_time,
                             double dt) {
  std::vector<std::vector<std::string>> rows;
  rows.reserve(static_cast<std::size_t>(rows_by_time.cols()));
  for (Index j = 0; j < rows_by_time.cols(); ++j) {
    std::vector<std::string> row = {io::format_number(dt * static_cast<double>(j))};
    for (Index i = 0; i < rows_by_time.rows(); ++i) row.push_back(io::format_number(rows_by_time(i, j)));
    rows.push_back(std::move(row));
  }
  io::write_csv(path, header, rows);
}

struct PredictResult {
  std::vector<fs::path> trajectories;
  std::vector<fs::path> output_csvs;
};

inline PredictResult cmd_predict(const fs::path& archive_path, const std::vector<Vector>& mus,
                                 std::optional<Index> horizon, const fs::path& out_dir, std::ostream& log) {
  if (mus.empty()) throw ValidationError("predict: at least one --mu is required");
  const io::RomArchive archive = io::read_rom_archive(archive_path);
  const RunConfig cfg = config_from_json(archive.config);
  const Index steps = horizon.value_or(cfg.time.horizon());
  fs::create_directories(out_dir);
  PredictResult res;
  for (std::size_t k = 0; k < mus.size(); ++k) {
    const RomPrediction p = predict(archive.rom, mus[k], steps);
    if (p.extrapolated) log << "warning: mu = " << detail::format_param(mus[k]) << " lies outside the training range\n";
    const std::string stem = "prediction_" + std::to_string(k);
    const fs::path traj = out_dir / (stem + ".pdmd");
    io::write_snapshot_file(traj, p.states);
    io::write_sidecar(traj, {{mus[k].data(), mus[k].data() + mus[k].size()}, archive.rom.dt, archive.rom.t0,
                             to_string(cfg.model), config_hash(cfg)});
    const Matrix y = model_outputs(cfg, mus[k], p.states);
    const fs::path csv = out_dir / (stem + "_outputs.csv");
    write_series_csv(csv, output_header(y.rows(), "output_"), y, archive.rom.dt);
    res.trajectories.push_back(traj);
    res.output_csvs.push_back(csv);
    log << "mu = " << detail::format_param(mus[k]) << ": " << p.states.cols() << " states, DMD rank " << p.dmd_rank
        << " -> " << csv.string() << "\n";
  }
  return res;
}

struct EvaluationCase {
  Vector mu;
  bool ok = false;
  std::string error;
  ErrorReport report;
  bool extrapolated = false;
  Index dmd_rank = 0;
  double rbf_seconds = 0.0;
  double dmd_seconds = 0.0;
  double fom_seconds = std::numeric_limits<double>::quiet_NaN();
};

/// Averages over the evaluated parameters, in timing_columns() order.
struct TimingTable {
  double snapshot_generation = std::numeric_limits<double>::quiet_NaN();
  double rbf_training = std::numeric_limits<double>::quiet_NaN();
  double rbf_prediction = std::numeric_limits<double>::quiet_NaN();
  double dmd_prediction = std::numeric_limits<double>::quiet_NaN();
  double fom_simulation = std::numeric_limits<double>::quiet_NaN();

  double online() const { return rbf_prediction + dmd_prediction; }
  std::vector<double> values() const {
    return {snapshot_generation, rbf_training, rbf_prediction, dmd_prediction, fom_simulation};
  }
};

struct EvaluateResult {
  std::vector<EvaluationCase> cases;
  TimingTable timing;
  std::vector<std::string> failures;
};

namespace detail {

inline std::optional<Matrix> reference_from_dir(const fs::path& dir, const Vector& mu) {
  if (dir.empty() || !fs::is_directory(dir)) return std::nullopt;
  for (const fs::path& file : snapshot_files(dir)) {
    if (!fs::exists(io::sidecar_path(file))) continue;
    const io::SnapshotMeta meta = io::read_sidecar(file);
    if (static_cast<Index>(meta.param.size()) != mu.size()) continue;
    bool match = true;
    for (Index i = 0; i < mu.size(); ++i) {
      match = match && std::abs(meta.param[static_cast<std::size_t>(i)] - mu(i)) <= 1e-12 * std::max(1.0, std::abs(mu(i)));
    }
    if (match) return io::read_snapshot_file(file);
  }
  return std::nullopt;
}

inline double mean_finite(const std::vector<double>& v) {
  double sum = 0.0;
  int n = 0;
  for (double x : v) {
    if (std::isfinite(x)) {
      sum += x;
      ++n;
    }
  }
  return n ? sum / n : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace detail

/// Prediction errors against full-order references plus the five-column
/// timing table. Each timed quantity is the fastest of `repeats` runs and
/// the online and FOM columns are averaged over the evaluated parameters.
inline EvaluateResult cmd_evaluate(const fs::path& archive_path, std::vector<Vector> mus, const fs::path& reference_dir,
                                   const fs::path& out_dir, std::optional<int> repeats_override, std::ostream& log) {
  const io::RomArchive archive = io::read_rom_archive(archive_path);
  const RunConfig cfg = config_from_json(archive.config);
  if (mus.empty()) {
    for (double m : cfg.test_params) mus.push_back(Vector::Constant(1, m));
  }
  if (mus.empty()) throw ValidationError("evaluate: no test parameters (use --mu or [evaluate] test_params)");
  const int repeats = repeats_override.value_or(cfg.repeats);
  pdmd::detail::require(repeats >= 1, "evaluate: repeats must be at least 1");
  const fs::path ref_dir = !reference_dir.empty() ? reference_dir : fs::path(cfg.external.reference_dir);
  const Index horizon = cfg.time.horizon();
  const Index total_cols = cfg.time.total_columns();
  fs::create_directories(out_dir);

  EvaluateResult res;
  std::vector<std::vector<std::string>> summary;
  for (std::size_t k = 0; k < mus.size(); ++k) {
    EvaluationCase c;
    c.mu = mus[k];
    try {
      std::optional<Matrix> reference = detail::reference_from_dir(ref_dir, c.mu);
      if (!reference) {
        if (cfg.model == ModelKind::external) throw ValidationError("no reference snapshots for this parameter");
        pdmd::detail::require(c.mu.size() == 1, "built-in models take a single scalar parameter");
        const OdeSystem sys = build_model(cfg, c.mu(0));
        for (int r = 0; r < repeats; ++r) {
          const auto start = detail::Clock::now();
          Matrix x = integrate(sys, cfg.time.t_end, cfg.time.dt_out, cfg.integrator);
          const double s = detail::seconds_since(start);
          if (r == 0 || s < c.fom_seconds) c.fom_seconds = s;
          reference = std::move(x);
        }
      }
      if (reference->cols() < total_cols) {
        throw ValidationError("reference has " + std::to_string(reference->cols()) + " columns, " +
                              std::to_string(total_cols) + " are needed");
      }
      RomPrediction best;
      for (int r = 0; r < repeats; ++r) {
        RomPrediction p = predict(archive.rom, c.mu, horizon);
        if (r == 0 || p.rbf_seconds + p.dmd_seconds < best.rbf_seconds + best.dmd_seconds) best = std::move(p);
      }
      c.rbf_seconds = best.rbf_seconds;
      c.dmd_seconds = best.dmd_seconds;
      c.extrapolated = best.extrapolated;
      c.dmd_rank = best.dmd_rank;
      const Matrix y_ref = model_outputs(cfg, c.mu, reference->leftCols(total_cols));
      const Matrix y_hat = model_outputs(cfg, c.mu, best.states);
      c.report = error_report(y_ref, y_hat);
      c.ok = true;

      const std::string stem = "mu_" + std::to_string(k);
      write_series_csv(out_dir / (stem + "_errors.csv"), output_header(y_ref.rows(), "error_output_"),
                       c.report.per_output_per_time, cfg.time.dt_out);
      Matrix both(2 * y_ref.rows(), y_ref.cols());
      both << y_ref, y_hat;
      std::vector<std::string> header = output_header(y_ref.rows(), "reference_output_");
      const std::vector<std::string> pred = output_header(y_ref.rows(), "predicted_output_");
      header.insert(header.end(), pred.begin() + 1, pred.end());
      write_series_csv(out_dir / (stem + "_outputs.csv"), header, both, cfg.time.dt_out);
      for (Index i = 0; i < y_ref.rows(); ++i) {
        summary.push_back({detail::format_param(c.mu), std::to_string(i + 1),
                           io::format_number(c.report.time_average(i)), io::format_number(c.report.max_error()(i)),
                           c.extrapolated ? "true" : "false", std::to_string(c.dmd_rank)});
      }
      log << "mu = " << detail::format_param(c.mu) << ": time-average error";
      for (Index i = 0; i < y_ref.rows(); ++i) log << " " << io::format_number(c.report.time_average(i), 4);
      log << ", max";
      for (Index i = 0; i < y_ref.rows(); ++i) log << " " << io::format_number(c.report.max_error()(i), 4);
      log << " (rank " << c.dmd_rank << (c.extrapolated ? ", extrapolated" : "") << ")\n";
    } catch (const Error& e) {
      c.error = e.what();
      res.failures.push_back("mu = " + detail::format_param(c.mu) + ": " + e.what());
      log << "warning: " << res.failures.back() << "\n";
    }
    res.cases.push_back(std::move(c));
  }
  io::write_csv(out_dir / "summary.csv",
                {"mu", "output", "time_average_error", "max_error", "extrapolated", "dmd_rank"}, summary);

  const Json offline = detail::read_json_or_empty(io::sidecar_path(archive_path));
  res.timing.snapshot_generation = detail::json_seconds(offline, "snapshot_generation_seconds");
  res.timing.rbf_training = detail::json_seconds(offline, "rbf_training_seconds");
  std::vector<double> rbf, dmd, fom;
  for (const EvaluationCase& c : res.cases) {
    if (!c.ok) continue;
    rbf.push_back(c.rbf_seconds);
    dmd.push_back(c.dmd_seconds);
    fom.push_back(c.fom_seconds);
  }
  res.timing.rbf_prediction = detail::mean_finite(rbf);
  res.timing.dmd_prediction = detail::mean_finite(dmd);
  res.timing.fom_simulation = detail::mean_finite(fom);
  std::vector<std::string> row;
  for (double v : res.timing.values()) row.push_back(detail::format_seconds(v));
  io::write_csv(out_dir / "timing.csv", timing_columns(), {row});

  log << "timing (s):";
  const auto values = res.timing.values();
  for (std::size_t i = 0; i < values.size(); ++i) {
    log << (i ? " |" : "") << " " << timing_columns()[i] << " " << detail::format_seconds(values[i]);
  }
  log << "\n";
  return res;
}

}  // namespace pdmd::cli
