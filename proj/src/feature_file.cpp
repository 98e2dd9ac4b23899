#include "diffadapt/feature_file.hpp"

#include <bit>
#include <cmath>
#include <cstring>

#include "diffadapt/io.hpp"

namespace diffadapt {
namespace {

static_assert(std::endian::native == std::endian::little,
              "binary formats are written in host order; big-endian hosts need byte swaps");

void put_u32(std::string& out, std::uint32_t v) {
  char buf[4];
  std::memcpy(buf, &v, 4);
  out.append(buf, 4);
}

void put_f32(std::string& out, float v) {
  char buf[4];
  std::memcpy(buf, &v, 4);
  out.append(buf, 4);
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    std::uint32_t v;
    std::memcpy(&v, take(4).data(), 4);
    return v;
  }
  float f32() {
    float v;
    std::memcpy(&v, take(4).data(), 4);
    return v;
  }
  std::string_view take(std::size_t n) {
    if (bytes_.size() - pos_ < n) throw FormatError("feature file truncated");
    auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  std::string_view rest() const { return bytes_.substr(pos_); }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

FeatureFile::FeatureFile(std::uint32_t dim, nlohmann::json trailer)
    : dim_(dim), trailer_(std::move(trailer)) {
  if (dim_ == 0) throw ValidationError("feature file dim must be positive");
  if (!trailer_.is_object()) throw ValidationError("feature file trailer must be a JSON object");
}

void FeatureFile::add(std::string id, std::span<const double> values) {
  std::vector<float> narrowed(values.begin(), values.end());
  add(std::move(id), std::move(narrowed));
}

void FeatureFile::add(std::string id, std::vector<float> values) {
  if (values.size() != dim_) {
    throw ValidationError("feature '" + id + "' has dim " + std::to_string(values.size()) +
                          ", file dim is " + std::to_string(dim_));
  }
  for (float v : values) {
    if (!std::isfinite(v)) throw ValidationError("feature '" + id + "' contains NaN/Inf");
  }
  if (index_.count(id) != 0) throw ValidationError("duplicate feature id '" + id + "'");
  index_.emplace(id, entries_.size());
  entries_.push_back(FeatureEntry{std::move(id), std::move(values)});
}

FeatureVector FeatureFile::lookup(const std::string& id) const {
  const auto it = index_.find(id);
  if (it == index_.end()) throw LookupError("no feature vector for id '" + id + "'");
  const auto& v = entries_[it->second].values;
  return FeatureVector(std::vector<double>(v.begin(), v.end()));
}

std::string FeatureFile::fingerprint() const {
  std::string source = "unknown";
  if (trailer_.contains("fingerprint") && trailer_["fingerprint"].is_string()) {
    return trailer_["fingerprint"].get<std::string>();
  }
  if (trailer_.contains("model") && trailer_["model"].is_string()) {
    source = trailer_["model"].get<std::string>();
    if (trailer_.contains("position_rule") && trailer_["position_rule"].is_string()) {
      source += "@" + trailer_["position_rule"].get<std::string>();
    }
  } else if (trailer_.contains("provider") && trailer_["provider"].is_string()) {
    source = trailer_["provider"].get<std::string>();
  }
  return source + "/d" + std::to_string(dim_);
}

std::string FeatureFile::encode() const {
  std::string out;
  out.append(kFeatureMagic, 4);
  put_u32(out, kFeatureFileVersion);
  put_u32(out, dim_);
  put_u32(out, static_cast<std::uint32_t>(entries_.size()));
  for (const auto& e : entries_) {
    put_u32(out, static_cast<std::uint32_t>(e.id.size()));
    out.append(e.id);
    for (float v : e.values) put_f32(out, v);
  }
  if (!trailer_.empty()) out.append(trailer_.dump());
  return out;
}

FeatureFile FeatureFile::decode(std::string_view bytes) {
  Reader in(bytes);
  if (bytes.size() < 4 || std::memcmp(in.take(4).data(), kFeatureMagic, 4) != 0) {
    throw FormatError("not a feature file (bad magic)");
  }
  const std::uint32_t version = in.u32();
  if (version != kFeatureFileVersion) {
    throw FormatError("unsupported feature file version " + std::to_string(version));
  }
  const std::uint32_t dim = in.u32();
  const std::uint32_t count = in.u32();
  if (dim == 0) throw FormatError("feature file declares dim 0");
  FeatureFile file(dim);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t id_len = in.u32();
    std::string id(in.take(id_len));
    std::vector<float> values(dim);
    for (auto& v : values) v = in.f32();
    try {
      file.add(std::move(id), std::move(values));
    } catch (const ValidationError& e) {
      throw FormatError(std::string("feature file entry invalid: ") + e.what());
    }
  }
  const auto rest = in.rest();
  if (!rest.empty()) {
    try {
      file.set_trailer(nlohmann::json::parse(rest));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("feature file trailer is not JSON: ") + e.what());
    }
    if (!file.trailer().is_object()) throw FormatError("feature file trailer must be an object");
  }
  return file;
}

FeatureFile FeatureFile::read(const std::filesystem::path& path) {
  return decode(io::read_file(path));
}

void FeatureFile::write(const std::filesystem::path& path) const {
  io::write_file(path, encode());
}

}  // namespace diffadapt
