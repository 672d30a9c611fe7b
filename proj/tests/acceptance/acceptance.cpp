// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.
// The pipeline criteria run the shipped configurations end to end and take a
// few minutes on one core.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <thread>
#include <unistd.h>

#include "pdmd/cli/commands.hpp"

using namespace pdmd;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

Matrix trajectory(const Matrix& a, const Vector& u0, Index m) {
  Matrix x(u0.size(), m + 1);
  x.col(0) = u0;
  for (Index j = 1; j <= m; ++j) x.col(j) = a * x.col(j - 1);
  return x;
}

double nearest(const CVector& values, Complex z) {
  double best = INFINITY;
  for (Index i = 0; i < values.size(); ++i) best = std::min(best, std::abs(values(i) - z));
  return best;
}

struct LinearCase {
  Matrix a;
  Vector u0;
};

// Random stable systems with spectral radius in [0.9, 0.99].
std::vector<LinearCase> linear_cases(int count, Index n_min, Index n_max, unsigned seed) {
  std::mt19937 gen(seed);
  std::normal_distribution<double> nd;
  std::uniform_int_distribution<Index> dim(n_min, n_max);
  std::uniform_real_distribution<double> radius(0.9, 0.99);
  std::vector<LinearCase> out;
  for (int t = 0; t < count; ++t) {
    const Index n = dim(gen);
    LinearCase c{Matrix(n, n), Vector(n)};
    for (Index i = 0; i < n * n; ++i) c.a.data()[i] = nd(gen);
    c.a *= radius(gen) / eig_general(c.a, false).eigenvalues.cwiseAbs().maxCoeff();
    for (Index i = 0; i < n; ++i) c.u0(i) = nd(gen);
    out.push_back(std::move(c));
  }
  return out;
}

Matrix pinv_operator(const SnapshotPair& p) { return p.x1 * p.x0.completeOrthogonalDecomposition().pseudoInverse(); }

Outcome exact_dmd_oracle(double* residual_worst) {
  const auto start = Clock::now();
  double eig_worst = 0.0, traj_worst = 0.0;
  *residual_worst = 0.0;
  for (const LinearCase& c : linear_cases(20, 2, 8, 11)) {
    const Index m = 40;
    const Matrix x = trajectory(c.a, c.u0, 2 * m);
    const auto pair = SnapshotPair::from_trajectory(x.leftCols(m + 1));
    const DmdModel model = fit_exact_dmd(pair, {.eta = 0.0});
    const Matrix oracle = pinv_operator(pair);
    const CVector truth = Eigen::EigenSolver<Matrix>(oracle).eigenvalues();
    for (Index i = 0; i < truth.size(); ++i) eig_worst = std::max(eig_worst, nearest(model.eigenvalues, truth(i)));
    for (Index k = 0; k < model.rank; ++k) {
      const CVector phi = model.modes.col(k);
      const double r = (oracle.cast<Complex>() * phi - model.eigenvalues(k) * phi).norm() / oracle.norm();
      *residual_worst = std::max(*residual_worst, r);
    }
    std::vector<Index> steps(static_cast<std::size_t>(2 * m + 1));
    for (Index j = 0; j <= 2 * m; ++j) steps[static_cast<std::size_t>(j)] = j;
    const Matrix series = predict_series(model, steps);
    traj_worst = std::max(traj_worst, (series - x).norm() / x.norm());
  }
  const double secs = since(start);
  Outcome o;
  o.pass = eig_worst <= 1e-8 && traj_worst <= 1e-6 && secs < 5.0;
  o.detail = "eigenvalue error " + fmt(eig_worst) + " (<= 1e-8), trajectory error over 2m " + fmt(traj_worst) +
             " (<= 1e-6), " + fmt(secs) + " s (< 5 s)";
  return o;
}

Outcome kernel_dmd_linear() {
  double eig_worst = 0.0, step_worst = 0.0;
  std::mt19937 gen(5);
  std::uniform_int_distribution<Index> len(6, 10);
  for (const LinearCase& c : linear_cases(20, 1, 4, 23)) {
    const Index m = std::max<Index>(len(gen), c.a.rows() + 2);
    const auto pair = SnapshotPair::from_trajectory(trajectory(c.a, c.u0, m));
    const KdmdModel model = fit_kernel_dmd(pair, KernelSpec::polynomial(1), {.eta = 0.0});
    const CVector truth = Eigen::EigenSolver<Matrix>(pinv_operator(pair)).eigenvalues();
    for (Index i = 0; i < truth.size(); ++i) eig_worst = std::max(eig_worst, nearest(model.eigenvalues, truth(i)));
    for (Index i = 0; i < pair.count(); ++i) {
      const CVector phi = eigenfunction_values(model, pair.x0.col(i));
      const Vector next = (model.koopman_modes * model.eigenvalues.cwiseProduct(phi)).real();
      step_worst = std::max(step_worst, (next - pair.x1.col(i)).norm() / pair.x1.col(i).norm());
    }
  }
  Outcome o;
  o.pass = eig_worst <= 1e-8 && step_worst <= 1e-6;
  o.detail = "eigenvalue error " + fmt(eig_worst) + " (<= 1e-8), one-step error " + fmt(step_worst) + " (<= 1e-6)";
  return o;
}

Outcome rbf_accuracy() {
  const auto start = Clock::now();
  std::mt19937 gen(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double center_worst = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    Matrix centers(12, 2), targets(12, 3);
    for (Index i = 0; i < centers.size(); ++i) centers.data()[i] = u(gen);
    for (Index i = 0; i < targets.size(); ++i) targets.data()[i] = u(gen);
    RbfOptions opt;
    opt.kernel = trial % 2 ? RbfKernel::multiquadric(1.0) : RbfKernel::gaussian(2.0);
    const auto f = RbfInterpolant::fit(centers, targets, opt);
    for (Index i = 0; i < centers.rows(); ++i) {
      const Vector got = f.evaluate(centers.row(i).transpose());
      center_worst = std::max(center_worst, (got - targets.row(i).transpose()).norm() / targets.row(i).norm());
    }
  }
  Matrix centers(20, 1), targets(20, 1);
  for (Index i = 0; i < 20; ++i) {
    centers(i, 0) = static_cast<double>(i) / 19.0;
    targets(i, 0) = std::sin(2.0 * M_PI * centers(i, 0));
  }
  RbfOptions imq;
  imq.kernel = RbfKernel::inverse_multiquadric(1.0 / 30.0);
  const auto f = RbfInterpolant::fit(centers, targets, imq);
  double sine_worst = 0.0;
  for (Index i = 0; i < 20; ++i) {
    center_worst = std::max(center_worst, std::abs(f.evaluate(centers.row(i).transpose())(0) - targets(i, 0)));
  }
  for (int k = 0; k < 200; ++k) {
    const double x = static_cast<double>(k) / 199.0;
    sine_worst = std::max(sine_worst, std::abs(f.evaluate(Vector::Constant(1, x))(0) - std::sin(2.0 * M_PI * x)));
  }
  const double secs = since(start);
  Outcome o;
  o.pass = center_worst <= 1e-8 && sine_worst < 1e-3 && secs < 1.0;
  o.detail = "center residual " + fmt(center_worst) + " (<= 1e-8), IMQ sine max error " + fmt(sine_worst) +
             " (< 1e-3), " + fmt(secs) + " s (< 1 s)";
  return o;
}

struct PipelineRun {
  cli::EvaluateResult eval;
  double seconds = 0.0;
  fs::path dir;
};

PipelineRun run_pipeline(const std::string& config_name, const fs::path& root) {
  const auto start = Clock::now();
  PipelineRun run;
  run.dir = root / config_name;
  const cli::RunConfig cfg = cli::load_config(fs::path(PDMD_SOURCE_DIR) / "configs" / (config_name + ".toml"));
  std::ostringstream log;
  const int workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  const auto sim = cli::cmd_simulate(cfg, run.dir, workers, 0, log);
  if (!sim.failures.empty()) throw NumericalError(config_name + ": " + sim.failures.front());
  cli::cmd_train(cfg, run.dir, run.dir, log);
  run.eval = cli::cmd_evaluate(run.dir / cli::kRomFileName, {}, {}, run.dir / "eval", std::nullopt, log);
  run.seconds = since(start);
  return run;
}

Outcome pipeline_accuracy(const PipelineRun& run, double max_pointwise) {
  Outcome o;
  o.pass = run.eval.failures.empty() && run.seconds < 900.0;
  double avg_worst = 0.0, point_worst = 0.0;
  for (const auto& c : run.eval.cases) {
    if (!c.ok) continue;
    avg_worst = std::max(avg_worst, c.report.time_average.maxCoeff());
    point_worst = std::max(point_worst, c.report.max_error().maxCoeff());
  }
  o.pass = o.pass && avg_worst < 0.02 && point_worst < max_pointwise;
  std::ostringstream os;
  os << "worst time-average error " << fmt(avg_worst) << " (< 0.02)";
  if (max_pointwise < 1.0) os << ", worst pointwise " << fmt(point_worst) << " (< " << fmt(max_pointwise) << ")";
  os << " over " << run.eval.cases.size() << " held-out values, " << fmt(run.seconds) << " s";
  o.detail = os.str();
  return o;
}

Outcome timing_report(const PipelineRun& run) {
  const fs::path csv = run.dir / "eval" / "timing.csv";
  const std::string text = fs::exists(csv) ? io::read_text_file(csv) : "";
  const std::string header = text.substr(0, text.find("\r\n"));
  std::string expected;
  for (const auto& c : cli::timing_columns()) expected += (expected.empty() ? "" : ",") + c;
  const cli::TimingTable& t = run.eval.timing;
  bool finite = true;
  for (double v : t.values()) finite = finite && std::isfinite(v);
  Outcome o;
  o.pass = header == expected && finite && t.online() < t.fom_simulation;
  o.detail = "five columns " + std::string(header == expected ? "present" : "missing") + ", online " +
             fmt(t.online()) + " s vs FOM " + fmt(t.fom_simulation) + " s (speedup " +
             fmt(t.fom_simulation / t.online()) + "x)";
  return o;
}

Outcome metric_properties() {
  std::mt19937_64 gen(17);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<Index> rows(1, 4), cols(1, 50);
  std::uniform_real_distribution<double> logscale(-6.0, 6.0);
  double zero_worst = 0.0, scale_worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    Matrix ref(rows(gen), cols(gen)), pred;
    for (Index k = 0; k < ref.size(); ++k) ref.data()[k] = u(gen);
    for (Index r = 0; r < ref.rows(); ++r) ref(r, 0) = 1.5 + u(gen);  // nonzero denominators
    pred = ref;
    for (Index k = 0; k < pred.size(); ++k) pred.data()[k] += 0.1 * u(gen);
    const ErrorReport same = error_report(ref, ref);
    zero_worst = std::max(
        {zero_worst, same.per_output_per_time.cwiseAbs().maxCoeff(), same.time_average.cwiseAbs().maxCoeff()});
    const double c = std::pow(10.0, logscale(gen)) * (i % 2 ? -1.0 : 1.0);
    const ErrorReport a = error_report(ref, pred);
    const ErrorReport b = error_report(c * ref, c * pred);
    scale_worst = std::max(scale_worst, (a.per_output_per_time - b.per_output_per_time).cwiseAbs().maxCoeff() /
                                            std::max(1e-300, a.per_output_per_time.cwiseAbs().maxCoeff()));
  }
  Outcome o;
  o.pass = zero_worst == 0.0 && scale_worst <= 1e-12;
  o.detail = "1000 cases: zero-on-equal max " + fmt(zero_worst) + ", scale-invariance deviation " + fmt(scale_worst) +
             " (<= 1e-12)";
  return o;
}

Outcome format_round_trips(const PipelineRun& fhn, const fs::path& root) {
  std::mt19937_64 gen(29);
  std::normal_distribution<double> nd(0.0, 1e3);
  bool snapshots_ok = true;
  const fs::path dir = root / "formats";
  fs::create_directories(dir);
  for (auto [r, c] : std::vector<std::pair<Index, Index>>{{1, 1}, {17, 3}, {0, 4}, {512, 801}, {2000, 1001}}) {
    Matrix m(r, c);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = nd(gen);
    io::write_snapshot_file(dir / "m.pdmd", m);
    const Matrix back = io::read_snapshot_file(dir / "m.pdmd");
    snapshots_ok = snapshots_ok && back.rows() == r && back.cols() == c &&
                   std::memcmp(back.data(), m.data(), static_cast<std::size_t>(m.size()) * sizeof(double)) == 0;
  }

  const fs::path rom_path = fhn.dir / cli::kRomFileName;
  const std::string bytes = io::read_text_file(rom_path);
  const bool rom_ok = io::serialize_rom(io::read_rom_archive(rom_path)) == bytes;

  const cli::RunConfig cfg = cli::load_config(fs::path(PDMD_SOURCE_DIR) / "configs" / "fhn.toml");
  std::ostringstream log;
  cli::cmd_train(cfg, fhn.dir, dir / "retrain", log);
  const bool rebuild_ok = io::read_text_file(dir / "retrain" / cli::kRomFileName) == bytes;

  Outcome o;
  o.pass = snapshots_ok && rom_ok && rebuild_ok;
  o.detail = std::string("snapshot files ") + (snapshots_ok ? "bit-exact" : "differ") + ", ROM archive " +
             (rom_ok ? "bit-exact" : "differs") + ", retrained archive " + (rebuild_ok ? "byte-identical" : "differs") +
             " (" + std::to_string(bytes.size()) + " bytes)";
  return o;
}

}  // namespace

int main() {
  const fs::path root = fs::temp_directory_path() / ("pdmd_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  fs::create_directories(root);

  int failures = 0;
  auto report = [&](int id, const std::string& name, const std::function<Outcome()>& fn) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << id << "] " << name << ": " << o.detail << std::endl;
  };

  double residual = INFINITY;
  report(1, "exact DMD matches the pinv operator", [&] { return exact_dmd_oracle(&residual); });
  report(2, "exact-mode eigenvector residual", [&] {
    return Outcome{residual <= 1e-8, "max residual / ||A||_F " + fmt(residual) + " (<= 1e-8)"};
  });
  report(3, "kernel DMD with a linear kernel", kernel_dmd_linear);
  report(4, "RBF exactness and IMQ accuracy", rbf_accuracy);

  std::optional<PipelineRun> fhn, ferro;
  report(5, "FHN pipeline", [&] {
    fhn = run_pipeline("fhn", root);
    return pipeline_accuracy(*fhn, 0.05);
  });
  report(6, "ferrocyanide pipeline", [&] {
    ferro = run_pipeline("ferro", root);
    return pipeline_accuracy(*ferro, INFINITY);
  });
  report(7, "timing table and online speedup (FHN)", [&] {
    if (!fhn) throw ValidationError("FHN pipeline did not run");
    return timing_report(*fhn);
  });
  report(8, "error metric properties", metric_properties);
  report(9, "format round-trips and deterministic rebuild", [&] {
    if (!fhn) throw ValidationError("FHN pipeline did not run");
    return format_round_trips(*fhn, root);
  });

  std::error_code ec;
  fs::remove_all(root, ec);
  std::cout << (failures ? std::to_string(failures) + " criteria failed" : std::string("all criteria passed"))
            << std::endl;
  return failures ? 1 : 0;
}
