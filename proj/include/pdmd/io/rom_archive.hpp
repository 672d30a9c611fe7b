#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <sstream>
#include <string>

#include "pdmd/io/snapshot_file.hpp"
#include "pdmd/pardmd.hpp"

namespace pdmd::io {

inline constexpr std::array<char, 4> kRomMagic = {'P', 'D', 'M', 'R'};
inline constexpr std::uint32_t kRomVersion = 1;

/// A trained ROM plus the run configuration it was built from.
struct RomArchive {
  ParametricRom rom;
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
};

inline std::string to_string(DmdVariant v) { return v == DmdVariant::exact ? "exact" : "kernel"; }

inline DmdVariant dmd_variant_from_string(const std::string& s) {
  if (s == "exact") return DmdVariant::exact;
  if (s == "kernel") return DmdVariant::kernel;
  throw ValidationError("unknown DMD variant '" + s + "'");
}

inline std::string to_string(DmdAnchor a) {
  switch (a) {
    case DmdAnchor::initial: return "initial";
    case DmdAnchor::last: return "last";
    case DmdAnchor::iterated: return "iterated";
  }
  return "unknown";
}

inline DmdAnchor dmd_anchor_from_string(const std::string& s) {
  if (s == "initial") return DmdAnchor::initial;
  if (s == "last") return DmdAnchor::last;
  if (s == "iterated") return DmdAnchor::iterated;
  throw ValidationError("unknown DMD anchor '" + s + "'");
}

inline std::string to_string(ModeKind m) { return m == ModeKind::exact ? "exact" : "projected"; }

inline ModeKind mode_kind_from_string(const std::string& s) {
  if (s == "exact") return ModeKind::exact;
  if (s == "projected") return ModeKind::projected;
  throw ValidationError("unknown mode kind '" + s + "'");
}

inline std::string to_string(KernelKind k) { return k == KernelKind::polynomial ? "polynomial" : "gaussian"; }

inline KernelKind kernel_kind_from_string(const std::string& s) {
  if (s == "polynomial") return KernelKind::polynomial;
  if (s == "gaussian") return KernelKind::gaussian;
  throw ValidationError("unknown DMD kernel '" + s + "'");
}

inline std::string to_string(RbfSolveMode m) {
  switch (m) {
    case RbfSolveMode::automatic: return "automatic";
    case RbfSolveMode::double_precision: return "double";
    case RbfSolveMode::extended_precision: return "extended";
  }
  return "unknown";
}

inline RbfSolveMode rbf_solve_mode_from_string(const std::string& s) {
  if (s == "automatic") return RbfSolveMode::automatic;
  if (s == "double") return RbfSolveMode::double_precision;
  if (s == "extended") return RbfSolveMode::extended_precision;
  throw ValidationError("unknown RBF solve mode '" + s + "'");
}

namespace detail {

inline std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

inline Vector from_std(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
}

inline nlohmann::ordered_json rom_header(const ParametricRom& rom) {
  const RbfOptions& o = rom.interpolant.options();
  nlohmann::ordered_json rbf;
  rbf["kernel"] = to_string(o.kernel.kind);
  rbf["eps"] = o.kernel.eps;
  rbf["order"] = o.kernel.order;
  rbf["transform"] = to_string(o.transform.kind);
  rbf["scale"] = to_std(o.transform.scale);
  rbf["shift"] = to_std(o.transform.shift);
  rbf["ridge"] = o.ridge;
  rbf["solve_mode"] = to_string(o.solve_mode);
  rbf["cond_threshold"] = o.cond_threshold;
  rbf["basis"] = rom.interpolant.basis() == RbfBasis::cardinal ? "cardinal" : "weights";

  nlohmann::ordered_json dmd;
  dmd["variant"] = to_string(rom.dmd.variant);
  dmd["eta"] = rom.dmd.eta;
  dmd["max_rank"] = rom.dmd.max_rank ? nlohmann::ordered_json(*rom.dmd.max_rank) : nlohmann::ordered_json(nullptr);
  dmd["mode_kind"] = to_string(rom.dmd.mode_kind);
  dmd["anchor"] = to_string(rom.dmd.anchor);
  dmd["kernel"] = to_string(rom.dmd.kernel.kind);
  dmd["alpha"] = rom.dmd.kernel.alpha;
  dmd["sigma"] = rom.dmd.kernel.sigma;
  dmd["sigma_scale"] = rom.dmd.kernel.sigma_scale;

  nlohmann::ordered_json j;
  j["format"] = "pdmd-rom";
  j["format_version"] = kRomVersion;
  j["n_state"] = rom.n_state;
  j["n_cols"] = rom.n_cols;
  j["dt"] = rom.dt;
  j["t0"] = rom.t0;
  j["rbf"] = rbf;
  j["dmd"] = dmd;
  return j;
}

}  // namespace detail

/// "PDMR" | u32 version | u64 JSON length | JSON header | centers block | coefficients block.
/// Both blocks use the snapshot-file numeric layout.
inline std::string serialize_rom(const RomArchive& archive) {
  nlohmann::ordered_json j = detail::rom_header(archive.rom);
  j["config"] = archive.config;
  const std::string text = j.dump(2);
  std::ostringstream os(std::ios::binary);
  os.write(kRomMagic.data(), 4);
  detail::put_u32(os, kRomVersion);
  detail::put_u64(os, static_cast<std::uint64_t>(text.size()));
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  write_matrix_block(os, archive.rom.interpolant.centers());
  write_matrix_block(os, archive.rom.interpolant.coefficients());
  return os.str();
}

inline RomArchive deserialize_rom(const std::string& bytes, const std::string& name = "ROM archive") {
  std::istringstream is(bytes, std::ios::binary);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kRomMagic.data(), 4) != 0) throw IoError(name + ": bad magic, not a ROM archive");
  const auto version = detail::get_uint(is, 4, name + " header");
  if (version != kRomVersion) throw IoError(name + ": unsupported ROM format version " + std::to_string(version));
  const auto length = detail::get_uint(is, 8, name + " header");
  if (length > bytes.size()) throw IoError(name + ": truncated header");
  std::string text(static_cast<std::size_t>(length), '\0');
  is.read(text.data(), static_cast<std::streamsize>(length));
  if (!is) throw IoError(name + ": truncated header");
  const Matrix centers = read_matrix_block(is, name + " centers");
  const Matrix coefficients = read_matrix_block(is, name + " coefficients");
  if (is.peek() != std::char_traits<char>::eof()) throw IoError(name + ": trailing bytes after payload");

  RomArchive out;
  try {
    const auto j = nlohmann::ordered_json::parse(text);
    const auto& rbf = j.at("rbf");
    RbfOptions o;
    o.kernel.kind = rbf_kind_from_string(rbf.at("kernel").get<std::string>());
    o.kernel.eps = rbf.at("eps").get<double>();
    o.kernel.order = rbf.at("order").get<int>();
    o.transform.kind = transform_kind_from_string(rbf.at("transform").get<std::string>());
    o.transform.scale = detail::from_std(rbf.at("scale").get<std::vector<double>>());
    o.transform.shift = detail::from_std(rbf.at("shift").get<std::vector<double>>());
    o.ridge = rbf.at("ridge").get<double>();
    o.solve_mode = rbf_solve_mode_from_string(rbf.at("solve_mode").get<std::string>());
    o.cond_threshold = rbf.at("cond_threshold").get<double>();
    const std::string basis = rbf.at("basis").get<std::string>();
    if (basis != "cardinal" && basis != "weights") throw ValidationError(name + ": unknown RBF basis '" + basis + "'");

    const auto& dmd = j.at("dmd");
    DmdConfig d;
    d.variant = dmd_variant_from_string(dmd.at("variant").get<std::string>());
    d.eta = dmd.at("eta").get<double>();
    if (!dmd.at("max_rank").is_null()) d.max_rank = dmd.at("max_rank").get<Index>();
    d.mode_kind = mode_kind_from_string(dmd.at("mode_kind").get<std::string>());
    d.anchor = dmd_anchor_from_string(dmd.at("anchor").get<std::string>());
    d.kernel.kind = kernel_kind_from_string(dmd.at("kernel").get<std::string>());
    d.kernel.alpha = dmd.at("alpha").get<int>();
    d.kernel.sigma = dmd.at("sigma").get<double>();
    d.kernel.sigma_scale = dmd.at("sigma_scale").get<double>();

    ParametricRom& rom = out.rom;
    rom.interpolant = RbfInterpolant::from_coefficients(centers, coefficients, o,
                                                        basis == "cardinal" ? RbfBasis::cardinal : RbfBasis::weights);
    rom.dmd = d;
    rom.n_state = j.at("n_state").get<Index>();
    rom.n_cols = j.at("n_cols").get<Index>();
    rom.dt = j.at("dt").get<double>();
    rom.t0 = j.at("t0").get<double>();
    rom.param_min = centers.colwise().minCoeff().transpose();
    rom.param_max = centers.colwise().maxCoeff().transpose();
    if (rom.n_state < 1 || rom.n_cols < 1 || rom.n_state * rom.n_cols != coefficients.cols()) {
      throw ValidationError(name + ": coefficient block does not match n_state x n_cols");
    }
    out.config = j.value("config", nlohmann::ordered_json::object());
  } catch (const nlohmann::json::exception& e) {
    throw IoError(name + ": malformed header: " + e.what());
  }
  return out;
}

inline void write_rom_archive(const std::filesystem::path& path, const RomArchive& archive) {
  write_text_file(path, serialize_rom(archive));
}

inline RomArchive read_rom_archive(const std::filesystem::path& path) {
  return deserialize_rom(read_text_file(path), path.string());
}

}  // namespace pdmd::io
