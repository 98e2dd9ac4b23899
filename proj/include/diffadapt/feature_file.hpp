#pragma once

// "DFFV" feature files: pre-extracted probe inputs keyed by problem id.
//
// Layout (little-endian):
//   char[4]  magic "DFFV"
//   u32      version (1)
//   u32      dim
//   u32      count
//   count x { u32 id_length, id bytes, f32 x dim }
//   optional UTF-8 JSON object trailer (rest of file), e.g.
//   {"model": ..., "position_rule": ...}

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "diffadapt/core.hpp"

namespace diffadapt {

inline constexpr char kFeatureMagic[4] = {'D', 'F', 'F', 'V'};
inline constexpr std::uint32_t kFeatureFileVersion = 1;

struct FeatureEntry {
  std::string id;
  std::vector<float> values;

  bool operator==(const FeatureEntry&) const = default;
};

class FeatureFile {
 public:
  explicit FeatureFile(std::uint32_t dim, nlohmann::json trailer = nlohmann::json::object());

  // Throws FormatError on bad magic, version, truncation or inconsistent dims.
  static FeatureFile read(const std::filesystem::path& path);
  static FeatureFile decode(std::string_view bytes);
  void write(const std::filesystem::path& path) const;
  std::string encode() const;

  // Values are narrowed to float32. Dimension mismatch or a repeated id is a
  // ValidationError.
  void add(std::string id, std::span<const double> values);
  void add(std::string id, std::vector<float> values);

  std::uint32_t dim() const { return dim_; }
  std::size_t size() const { return entries_.size(); }
  const std::vector<FeatureEntry>& entries() const { return entries_; }
  const nlohmann::json& trailer() const { return trailer_; }
  void set_trailer(nlohmann::json trailer) { trailer_ = std::move(trailer); }

  // Widened to double. Throws LookupError when the id is absent.
  FeatureVector lookup(const std::string& id) const;
  bool contains(const std::string& id) const { return index_.count(id) != 0; }

  // Identifies the feature source: the trailer's model/position_rule (or
  // provider tag) plus the dimension.
  std::string fingerprint() const;

 private:
  std::uint32_t dim_;
  std::vector<FeatureEntry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
  nlohmann::json trailer_;
};

}  // namespace diffadapt
