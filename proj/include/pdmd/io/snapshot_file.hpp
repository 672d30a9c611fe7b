#pragma once

#include <nlohmann/json.hpp>

#include <array>
#include <charconv>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "pdmd/matdec.hpp"

namespace pdmd::io {

inline constexpr std::array<char, 4> kSnapshotMagic = {'P', 'D', 'M', 'D'};
inline constexpr std::uint32_t kSnapshotVersion = 1;

/// Sidecar metadata stored next to a snapshot file as <file>.json.
struct SnapshotMeta {
  std::vector<double> param;
  double dt = 1.0;
  double t0 = 0.0;
  std::string model;
  std::string config_hash;
};

inline std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  os.write(b, 4);
}

inline void put_u64(std::ostream& os, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  os.write(b, 8);
}

inline std::uint64_t get_uint(std::istream& is, int bytes, const std::string& what) {
  unsigned char b[8] = {};
  is.read(reinterpret_cast<char*>(b), bytes);
  if (!is) throw IoError("truncated " + what);
  std::uint64_t v = 0;
  for (int i = bytes - 1; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

}  // namespace detail

/// "PDMD" | u32 version | u64 rows | u64 cols | rows*cols little-endian f64, column-major.
inline void write_matrix_block(std::ostream& os, const Matrix& m) {
  os.write(kSnapshotMagic.data(), 4);
  detail::put_u32(os, kSnapshotVersion);
  detail::put_u64(os, static_cast<std::uint64_t>(m.rows()));
  detail::put_u64(os, static_cast<std::uint64_t>(m.cols()));
  const std::size_t count = static_cast<std::size_t>(m.size());
  std::vector<char> buf(count * 8);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint64_t bits = std::bit_cast<std::uint64_t>(m.data()[i]);
    for (int b = 0; b < 8; ++b) buf[i * 8 + static_cast<std::size_t>(b)] = static_cast<char>((bits >> (8 * b)) & 0xffu);
  }
  os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!os) throw IoError("failed to write matrix payload");
}

inline Matrix read_matrix_block(std::istream& is, const std::string& name = "snapshot data") {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kSnapshotMagic.data(), 4) != 0) throw IoError(name + ": bad magic, not a PDMD block");
  const auto version = detail::get_uint(is, 4, name + " header");
  if (version != kSnapshotVersion) throw IoError(name + ": unsupported format version " + std::to_string(version));
  const auto rows = detail::get_uint(is, 8, name + " header");
  const auto cols = detail::get_uint(is, 8, name + " header");
  if (rows > (1ull << 40) || cols > (1ull << 40) || (rows && cols > (1ull << 40) / rows)) {
    throw IoError(name + ": implausible matrix dimensions");
  }
  Matrix m(static_cast<Index>(rows), static_cast<Index>(cols));
  const std::size_t count = static_cast<std::size_t>(rows * cols);
  std::vector<unsigned char> buf(count * 8);
  is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (static_cast<std::size_t>(is.gcount()) != buf.size()) throw IoError(name + ": truncated payload");
  for (std::size_t i = 0; i < count; ++i) {
    std::uint64_t bits = 0;
    for (int b = 7; b >= 0; --b) bits = (bits << 8) | buf[i * 8 + static_cast<std::size_t>(b)];
    m.data()[i] = std::bit_cast<double>(bits);
  }
  return m;
}

inline std::filesystem::path sidecar_path(const std::filesystem::path& file) {
  return std::filesystem::path(file.string() + ".json");
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << text;
  if (!os) throw IoError("failed to write " + path.string());
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline void write_snapshot_file(const std::filesystem::path& path, const Matrix& m) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  write_matrix_block(os, m);
}

inline Matrix read_snapshot_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  Matrix m = read_matrix_block(is, path.string());
  if (is.peek() != std::char_traits<char>::eof()) throw IoError(path.string() + ": trailing bytes after payload");
  return m;
}

inline nlohmann::ordered_json to_json(const SnapshotMeta& meta) {
  nlohmann::ordered_json j;
  j["format"] = "pdmd-snapshot";
  j["format_version"] = kSnapshotVersion;
  j["param"] = meta.param;
  j["dt"] = meta.dt;
  j["t0"] = meta.t0;
  j["model"] = meta.model;
  j["config_hash"] = meta.config_hash;
  return j;
}

inline void write_sidecar(const std::filesystem::path& file, const SnapshotMeta& meta) {
  write_text_file(sidecar_path(file), to_json(meta).dump(2) + "\n");
}

inline SnapshotMeta read_sidecar(const std::filesystem::path& file) {
  const auto path = sidecar_path(file);
  if (!std::filesystem::exists(path)) throw ValidationError("missing sidecar " + path.string() + " for " + file.string());
  SnapshotMeta meta;
  try {
    const auto j = nlohmann::json::parse(read_text_file(path));
    meta.param = j.at("param").get<std::vector<double>>();
    meta.dt = j.at("dt").get<double>();
    meta.t0 = j.at("t0").get<double>();
    meta.model = j.value("model", "");
    meta.config_hash = j.value("config_hash", "");
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("invalid sidecar " + path.string() + ": " + e.what());
  }
  return meta;
}

/// RFC 4180 CSV with '.' decimals and round-trip precision.
inline void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
                      const std::vector<std::vector<std::string>>& rows) {
  auto quote = [](const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
      if (c == '"') q += '"';
      q += c;
    }
    return q + "\"";
  };
  std::ostringstream os;
  for (std::size_t i = 0; i < header.size(); ++i) os << (i ? "," : "") << quote(header[i]);
  os << "\r\n";
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << quote(row[i]);
    os << "\r\n";
  }
  write_text_file(path, os.str());
}

/// Shortest text that reads back to the same double; a positive precision
/// gives %g-style output with that many significant digits instead.
inline std::string format_number(double v, int precision = 0) {
  if (precision <= 0) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
  }
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << std::setprecision(precision) << v;
  return os.str();
}

}  // namespace pdmd::io
