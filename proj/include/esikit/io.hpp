#pragma once

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "esikit/aggregation.hpp"
#include "esikit/engine.hpp"
#include "esikit/error.hpp"
#include "esikit/geometry.hpp"
#include "esikit/serialize.hpp"

namespace esi::io {

namespace fs = std::filesystem;

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw IoError("cannot parse number '" + std::string(s) + "'");
  return v;
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return std::string(std::istreambuf_iterator<char>(in), {});
}

/// Writes through a temporary sibling and renames, so a failed write leaves no
/// partial file behind.
inline void write_file(const fs::path& path, std::string_view content) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IoError("write to '" + path.string() + "' failed");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot move output into place at '" + path.string() + "'");
  }
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline Table parse_csv(std::string_view text, const std::string& source) {
  Table t;
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() : nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    auto fields = split_fields(line);
    if (t.header.empty()) {
      for (auto f : fields) t.header.emplace_back(f);
      continue;
    }
    if (fields.size() != t.header.size())
      throw IoError(source + ":" + std::to_string(line_no) + ": expected " + std::to_string(t.header.size()) +
                    " fields");
    std::vector<double> row;
    row.reserve(fields.size());
    try {
      for (auto f : fields) row.push_back(parse_double(f));
    } catch (const IoError& e) {
      throw IoError(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
    t.rows.push_back(std::move(row));
  }
  if (t.header.empty()) throw IoError(source + ": missing header");
  return t;
}

inline std::string coordinate_header(std::size_t d) {
  std::string h;
  for (std::size_t i = 0; i < d; ++i) h += (i ? ",x" : "x") + std::to_string(i);
  return h;
}

// ---------------------------------------------------------------------------
// Points: x0,...,x{d-1},value

inline ConditioningData parse_points_csv(std::string_view text, const std::string& source = "points") {
  Table t = parse_csv(text, source);
  if (t.header.size() < 2 || t.header.back() != "value")
    throw IoError(source + ": header must be x0,...,x{d-1},value");
  std::size_t d = t.header.size() - 1;
  std::vector<double> coords, values;
  for (const auto& r : t.rows) {
    coords.insert(coords.end(), r.begin(), r.begin() + static_cast<std::ptrdiff_t>(d));
    values.push_back(r.back());
  }
  try {
    return ConditioningData(LocationSet(d, std::move(coords)), std::move(values));
  } catch (const InvalidArgument& e) {
    throw IoError(source + ": " + e.what());
  }
}

inline std::string format_points_csv(const ConditioningData& data) {
  std::string out = coordinate_header(data.dim()) + ",value\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (double c : data.points().row(i)) out += format_double(c) + ',';
    out += format_double(data.values()[i]) + '\n';
  }
  return out;
}

inline ConditioningData read_points_csv(const fs::path& path) {
  return parse_points_csv(read_file(path), path.string());
}

inline void write_points_csv(const fs::path& path, const ConditioningData& data) {
  write_file(path, format_points_csv(data));
}

/// Target locations: x0,...,x{d-1}; a trailing `value` column is ignored.
inline LocationSet read_targets_csv(const fs::path& path) {
  Table t = parse_csv(read_file(path), path.string());
  std::size_t d = t.header.size();
  if (!t.header.empty() && t.header.back() == "value") --d;
  if (d == 0) throw IoError(path.string() + ": no coordinate columns");
  std::vector<double> coords;
  for (const auto& r : t.rows) coords.insert(coords.end(), r.begin(), r.begin() + static_cast<std::ptrdiff_t>(d));
  return LocationSet(d, std::move(coords));
}

/// Long format x0..x{d-1},<columns...> in target order.
inline void write_columns_csv(const fs::path& path, const LocationSet& locations,
                              const std::vector<std::pair<std::string, const std::vector<double>*>>& columns) {
  std::string out = coordinate_header(locations.dim());
  for (const auto& [name, _] : columns) out += ',' + name;
  out += '\n';
  for (std::size_t i = 0; i < locations.size(); ++i) {
    auto r = locations.row(i);
    for (std::size_t a = 0; a < r.size(); ++a) out += (a ? "," : "") + format_double(r[a]);
    for (const auto& [_, col] : columns) out += ',' + format_double((*col)[i]);
    out += '\n';
  }
  write_file(path, out);
}

// ---------------------------------------------------------------------------
// Grid spec: {"origin": [...], "step": [...], "count": [...]}

inline GridSpec grid_from_json(const Json& j) {
  detail::reject_unknown_keys(j, {"origin", "step", "count"}, "grid spec");
  auto origin = detail::get_as<std::vector<double>>(j, "origin", "grid spec");
  auto step = detail::get_as<std::vector<double>>(j, "step", "grid spec");
  auto count = detail::get_as<std::vector<std::size_t>>(j, "count", "grid spec");
  return GridSpec::regular(origin, step, count);
}

inline Json grid_to_json(std::span<const double> origin, std::span<const double> step,
                         std::span<const std::size_t> count) {
  return {{"origin", std::vector<double>(origin.begin(), origin.end())},
          {"step", std::vector<double>(step.begin(), step.end())},
          {"count", std::vector<std::size_t>(count.begin(), count.end())}};
}

inline GridSpec read_grid(const fs::path& path) {
  try {
    return grid_from_json(Json::parse(read_file(path)));
  } catch (const Json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Cube persistence: <prefix>.bin holds rows*cols little-endian float64 in
// location-major order; <prefix>.json is the sidecar.

inline constexpr int kCubeFormatVersion = 1;

inline std::string encode_cube(const SampleCube& cube) {
  std::string bytes(cube.data.size() * 8, '\0');
  for (std::size_t i = 0; i < cube.data.size(); ++i) {
    auto bits = std::bit_cast<std::uint64_t>(cube.data[i]);
    for (int b = 0; b < 8; ++b) bytes[i * 8 + b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
  }
  return bytes;
}

inline std::vector<double> decode_cube(std::string_view bytes) {
  if (bytes.size() % 8 != 0) throw IoError("cube file size is not a multiple of 8 bytes");
  std::vector<double> v(bytes.size() / 8);
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= std::uint64_t(static_cast<unsigned char>(bytes[i * 8 + b])) << (8 * b);
    v[i] = std::bit_cast<double>(bits);
  }
  return v;
}

struct StoredCube {
  SampleCube cube;
  EsiConfig config;
};

inline void write_cube(const fs::path& prefix, const SampleCube& cube, const EsiConfig& config) {
  Json side = {{"format", "esikit.cube"},
               {"version", kCubeFormatVersion},
               {"dtype", "float64"},
               {"byte_order", "little"},
               {"n_targets", cube.rows},
               {"m", cube.cols},
               {"grid_shape", cube.grid_shape},
               {"config", to_json(config)},
               {"seed", config.seed}};
  fs::path bin = prefix, meta = prefix;
  bin += ".bin";
  meta += ".json";
  write_file(bin, encode_cube(cube));
  write_file(meta, side.dump(2) + "\n");
}

inline StoredCube read_cube(const fs::path& prefix) {
  fs::path bin = prefix, meta = prefix;
  bin += ".bin";
  meta += ".json";
  Json side;
  try {
    side = Json::parse(read_file(meta));
  } catch (const Json::exception& e) {
    throw IoError(meta.string() + ": " + e.what());
  }
  const std::string where = "cube sidecar";
  if (detail::get_as<std::string>(side, "format", where) != "esikit.cube" ||
      detail::get_as<int>(side, "version", where) != kCubeFormatVersion)
    throw IoError(meta.string() + ": not a supported esikit cube sidecar");
  StoredCube s;
  s.cube.rows = detail::get_as<std::size_t>(side, "n_targets", where);
  s.cube.cols = detail::get_as<std::size_t>(side, "m", where);
  s.cube.grid_shape = detail::get_as<std::vector<std::size_t>>(side, "grid_shape", where);
  s.cube.data = decode_cube(read_file(bin));
  if (s.cube.data.size() != s.cube.rows * s.cube.cols)
    throw IoError(bin.string() + ": size does not match n_targets * m");
  s.config = esi_config_from_json(side.at("config"));
  return s;
}

}  // namespace esi::io
