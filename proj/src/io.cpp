#include "diffadapt/io.hpp"

#include <chrono>
#include <ctime>
#include <sstream>

#include "diffadapt/json_io.hpp"

namespace diffadapt::io {

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kDigits[value & 0xF];
    value >>= 4;
  }
  return out;
}

std::string fingerprint(std::string_view bytes) { return hex64(fnv1a64(bytes)); }

std::string file_fingerprint(const std::filesystem::path& path) {
  return fingerprint(read_file(path));
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LookupError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LookupError("cannot open " + path.string());
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    lines.push_back(std::move(line));
  }
  return lines;
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string describe(const std::vector<Violation>& violations) {
  std::ostringstream ss;
  for (const auto& v : violations) ss << "  [" << v.index << "] " << v.message << '\n';
  return ss.str();
}

std::vector<Problem> load_problems(const std::filesystem::path& path) {
  const auto lines = read_lines(path);
  if (auto report = validate_dataset_records(lines); !report.empty()) {
    throw ValidationError("invalid dataset " + path.string() + ":\n" + describe(report));
  }
  std::vector<Problem> problems;
  problems.reserve(lines.size());
  for (const auto& line : lines) problems.push_back(nlohmann::json::parse(line).get<Problem>());
  return problems;
}

void save_problems(const std::filesystem::path& path, std::span<const Problem> problems) {
  write_jsonl(path, problems);
}

}  // namespace diffadapt::io
