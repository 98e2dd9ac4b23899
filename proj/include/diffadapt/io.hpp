#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "diffadapt/core.hpp"
#include "diffadapt/json_io.hpp"

namespace diffadapt::io {

// FNV-1a, 64-bit. Stable across platforms; used for fingerprints and for
// deriving per-item seeds from string ids.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t value);
std::string fingerprint(std::string_view bytes);
std::string file_fingerprint(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);
// Non-blank lines.
std::vector<std::string> read_lines(const std::filesystem::path& path);

// ISO-8601 UTC, second resolution.
std::string utc_timestamp();

template <typename T>
std::vector<T> read_jsonl(const std::filesystem::path& path) {
  std::vector<T> out;
  std::size_t line_no = 0;
  for (const auto& line : read_lines(path)) {
    ++line_no;
    try {
      out.push_back(nlohmann::json::parse(line).get<T>());
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

template <typename T>
void write_jsonl(const std::filesystem::path& path, std::span<const T> items) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  for (const auto& item : items) out << nlohmann::json(item).dump() << '\n';
}

// Loads a newline-delimited JSON problem set. All dataset violations are
// collected first; any violation raises ValidationError listing every one.
std::vector<Problem> load_problems(const std::filesystem::path& path);
void save_problems(const std::filesystem::path& path, std::span<const Problem> problems);

std::string describe(const std::vector<Violation>& violations);

}  // namespace diffadapt::io
