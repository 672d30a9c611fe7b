#include <CLI11.hpp>

#include <iostream>
#include <sstream>

#include "pdmd/cli/commands.hpp"

namespace {

using namespace pdmd;

int fail(std::string_view code, std::string message) {
  for (char& ch : message) {
    if (ch == '\n' || ch == '\r') ch = ' ';
  }
  std::cerr << "error: " << code << ": " << message << std::endl;
  return 1;
}

Vector parse_mu(const std::string& text) {
  std::vector<double> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size() || !std::isfinite(v)) throw ValidationError("invalid --mu value '" + text + "'");
    values.push_back(v);
  }
  if (values.empty()) throw ValidationError("empty --mu value");
  return Eigen::Map<const Vector>(values.data(), static_cast<Index>(values.size()));
}

std::vector<Vector> parse_mus(const std::vector<std::string>& raw) {
  std::vector<Vector> out;
  for (const auto& r : raw) out.push_back(parse_mu(r));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Parametric DMD: RBF-interpolated snapshots extended by exact or kernel DMD"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "pdmd 1.0.0");

  std::string config_path, out_dir = ".", snapshot_dir, rom_path, reference_dir;
  std::vector<std::string> mu_values;
  Index horizon = -1;
  int workers = 1, repeats = 0;
  unsigned long seed = 0;

  auto* sim = app.add_subcommand("simulate", "Generate training snapshots with the full-order model");
  sim->add_option("--config", config_path, "TOML run configuration")->required();
  sim->add_option("--out", out_dir, "Output directory");
  sim->add_option("--workers", workers, "Parallel simulations")->check(CLI::PositiveNumber);
  sim->add_option("--seed", seed, "Seed for random parameter sampling");

  auto* tr = app.add_subcommand("train", "Fit the RBF network and write a ROM archive");
  tr->add_option("--config", config_path, "TOML run configuration")->required();
  tr->add_option("--snapshots", snapshot_dir, "Directory of snapshot files (defaults to --out)");
  tr->add_option("--out", out_dir, "Output directory");
  tr->add_option("--seed", seed, "Accepted for symmetry; training is deterministic");

  auto* pr = app.add_subcommand("predict", "Predict trajectories at new parameters");
  pr->add_option("--rom", rom_path, "ROM archive (defaults to <out>/rom.pdmr)");
  pr->add_option("--mu", mu_values, "Parameter value, comma-separated for vectors (repeatable)")->required();
  pr->add_option("--horizon", horizon, "DMD steps beyond the snapshot window (defaults to the config)");
  pr->add_option("--out", out_dir, "Output directory");

  auto* ev = app.add_subcommand("evaluate", "Compare predictions with full-order references and time both");
  ev->add_option("--rom", rom_path, "ROM archive (defaults to <out>/rom.pdmr)");
  ev->add_option("--mu", mu_values, "Test parameter (repeatable; defaults to [evaluate] test_params)");
  ev->add_option("--reference", reference_dir, "Directory of reference snapshot files");
  ev->add_option("--repeats", repeats, "Timing repetitions (defaults to the config)")->check(CLI::PositiveNumber);
  ev->add_option("--out", out_dir, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    fail(to_string(ErrorCode::usage), e.what());
    return 2;
  }

  try {
    const std::filesystem::path out(out_dir);
    if (rom_path.empty()) rom_path = (out / cli::kRomFileName).string();
    if (*sim) {
      const auto cfg = cli::load_config(config_path);
      const auto res = cli::cmd_simulate(cfg, out, workers, seed, std::cout);
      if (!res.failures.empty()) {
        return fail(to_string(ErrorCode::numerical), std::to_string(res.failures.size()) + " of " +
                                                         std::to_string(res.params.size()) + " samples failed");
      }
    } else if (*tr) {
      const auto cfg = cli::load_config(config_path);
      std::filesystem::path snaps = snapshot_dir.empty() ? out : std::filesystem::path(snapshot_dir);
      if (snapshot_dir.empty() && cfg.model == cli::ModelKind::external) snaps = cfg.external.snapshot_dir;
      cli::cmd_train(cfg, snaps, out, std::cout);
    } else if (*pr) {
      std::optional<Index> h;
      if (horizon >= 0) h = horizon;
      cli::cmd_predict(rom_path, parse_mus(mu_values), h, out, std::cout);
    } else if (*ev) {
      std::optional<int> r;
      if (repeats > 0) r = repeats;
      const auto res = cli::cmd_evaluate(rom_path, parse_mus(mu_values), reference_dir, out, r, std::cout);
      if (!res.failures.empty()) {
        return fail(to_string(ErrorCode::validation), std::to_string(res.failures.size()) + " of " +
                                                          std::to_string(res.cases.size()) +
                                                          " test parameters could not be evaluated");
      }
    }
  } catch (const Error& e) {
    return fail(to_string(e.code()), e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(to_string(ErrorCode::io), e.what());
  } catch (const std::exception& e) {
    return fail("E_INTERNAL", e.what());
  }
  return 0;
}
