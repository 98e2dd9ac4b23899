#include "diffadapt/probe.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>

#include <spdlog/spdlog.h>

#include "diffadapt/io.hpp"
#include "diffadapt/rng.hpp"

namespace diffadapt {

using nlohmann::json;

namespace {

constexpr char kProbeMagic[4] = {'D', 'F', 'A', 'P'};

void check_dim(const ProbeParameters& p, const FeatureVector& f) {
  if (f.dim() != p.input_dim()) {
    throw DomainError("feature dim " + std::to_string(f.dim()) + " does not match probe input dim " +
                      std::to_string(p.input_dim()));
  }
}

// Views into a flat W1 | b1 | W2 | b2 buffer.
struct Layout {
  std::size_t d, h;
  std::size_t w1() const { return 0; }
  std::size_t b1() const { return h * d; }
  std::size_t w2() const { return h * d + h; }
  std::size_t b2() const { return h * d + h + kNumClasses * h; }
  std::size_t size() const { return b2() + kNumClasses; }
};

struct Scratch {
  std::vector<double> pre;    // W1 h + b1
  std::vector<double> act;    // relu(pre)
  std::vector<double> d_act;  // dL/d act
};

double log_sum_exp(const ClassScores& z) {
  const double m = std::max({z[0], z[1], z[2]});
  double s = 0.0;
  for (double v : z) s += std::exp(v - m);
  return m + std::log(s);
}

// -log softmax(z)[y], as (max - z_y) + log1p(sum of the other terms) so a
// near-perfect fit does not cancel against the max.
double cross_entropy(const ClassScores& z, std::size_t y) {
  const std::size_t top = static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
  double rest = 0.0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    if (c != top) rest += std::exp(z[c] - z[top]);
  }
  return (z[top] - z[y]) + std::log1p(rest);
}

ClassScores flat_logits(const double* theta, const Layout& L, std::span<const double> x,
                        Scratch& s) {
  s.pre.assign(L.h, 0.0);
  s.act.assign(L.h, 0.0);
  for (std::size_t j = 0; j < L.h; ++j) {
    const double* row = theta + L.w1() + j * L.d;
    double a = theta[L.b1() + j];
    for (std::size_t k = 0; k < L.d; ++k) a += row[k] * x[k];
    s.pre[j] = a;
    s.act[j] = a > 0.0 ? a : 0.0;
  }
  ClassScores z{};
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    const double* row = theta + L.w2() + c * L.h;
    double v = theta[L.b2() + c];
    for (std::size_t j = 0; j < L.h; ++j) v += row[j] * s.act[j];
    z[c] = v;
  }
  return z;
}

// Adds this example's gradient (unscaled) into grad and returns its loss.
double accumulate(const double* theta, const Layout& L, const TrainingExample& ex, double* grad,
                  Scratch& s) {
  const auto x = ex.feature.values();
  const ClassScores z = flat_logits(theta, L, x, s);
  const double lse = log_sum_exp(z);
  const std::size_t y = class_index(ex.label);
  ClassScores dz{};
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    dz[c] = std::exp(z[c] - lse) - (c == y ? 1.0 : 0.0);
  }
  s.d_act.assign(L.h, 0.0);
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    double* g_row = grad + L.w2() + c * L.h;
    const double* w_row = theta + L.w2() + c * L.h;
    for (std::size_t j = 0; j < L.h; ++j) {
      g_row[j] += dz[c] * s.act[j];
      s.d_act[j] += w_row[j] * dz[c];
    }
    grad[L.b2() + c] += dz[c];
  }
  for (std::size_t j = 0; j < L.h; ++j) {
    if (!(s.pre[j] > 0.0)) continue;  // relu'(0) = 0
    const double da = s.d_act[j];
    double* g_row = grad + L.w1() + j * L.d;
    for (std::size_t k = 0; k < L.d; ++k) g_row[k] += da * x[k];
    grad[L.b1() + j] += da;
  }
  return lse - z[y];
}

double flat_loss(const double* theta, const Layout& L, std::span<const TrainingExample> data,
                 Scratch& s) {
  double total = 0.0;
  for (const auto& ex : data) {
    const ClassScores z = flat_logits(theta, L, ex.feature.values(), s);
    total += cross_entropy(z, class_index(ex.label));
  }
  return total / static_cast<double>(data.size());
}

void check_batch(const ProbeParameters& p, std::span<const TrainingExample> batch) {
  if (batch.empty()) throw DomainError("empty batch");
  for (const auto& ex : batch) check_dim(p, ex.feature);
}

std::uint64_t tag(std::string_view name) { return io::fnv1a64(name); }

void put_u32(std::string& out, std::uint32_t v) {
  char buf[4];
  std::memcpy(buf, &v, 4);
  out.append(buf, 4);
}

void put_f64(std::string& out, double v) {
  char buf[8];
  std::memcpy(buf, &v, 8);
  out.append(buf, 8);
}

}  // namespace

std::vector<TrainingExample> training_examples(std::span<const LabeledExample> data) {
  std::vector<TrainingExample> out;
  out.reserve(data.size());
  for (const auto& e : data) out.push_back({e.feature, e.label});
  return out;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ValidationError("epochs must be >= 1");
  if (!(learning_rate > 0.0)) throw ValidationError("learning_rate must be positive");
  if (!(weight_decay >= 0.0)) throw ValidationError("weight_decay must be >= 0");
  if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0) || !(adam_beta2 > 0.0 && adam_beta2 < 1.0)) {
    throw ValidationError("adam betas must lie in (0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ValidationError("adam_eps must be positive");
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (hidden_dim < 1) throw ValidationError("hidden_dim must be >= 1");
}

json TrainConfig::to_json() const {
  return json{{"epochs", epochs},         {"learning_rate", learning_rate},
              {"weight_decay", weight_decay}, {"adam_beta1", adam_beta1},
              {"adam_beta2", adam_beta2}, {"adam_eps", adam_eps},
              {"batch_size", batch_size}, {"hidden_dim", hidden_dim},
              {"seed", seed}};
}

ClassScores softmax(const ClassScores& z) {
  const double m = std::max({z[0], z[1], z[2]});
  ClassScores p{};
  double s = 0.0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    p[c] = std::exp(z[c] - m);
    s += p[c];
  }
  for (double& v : p) v /= s;
  return p;
}

ClassScores logits(const ProbeParameters& params, const FeatureVector& feature) {
  check_dim(params, feature);
  const auto theta = params.flatten();
  Scratch s;
  return flat_logits(theta.data(), Layout{params.input_dim(), params.hidden_dim()},
                     feature.values(), s);
}

ClassScores forward(const ProbeParameters& params, const FeatureVector& feature) {
  return softmax(logits(params, feature));
}

double loss(const ProbeParameters& params, std::span<const TrainingExample> batch) {
  check_batch(params, batch);
  const auto theta = params.flatten();
  Scratch s;
  return flat_loss(theta.data(), Layout{params.input_dim(), params.hidden_dim()}, batch, s);
}

ProbeParameters gradient(const ProbeParameters& params, std::span<const TrainingExample> batch) {
  check_batch(params, batch);
  const Layout L{params.input_dim(), params.hidden_dim()};
  const auto theta = params.flatten();
  std::vector<double> grad(L.size(), 0.0);
  Scratch s;
  for (const auto& ex : batch) accumulate(theta.data(), L, ex, grad.data(), s);
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (double& g : grad) g *= inv;
  return ProbeParameters::from_flat(L.d, L.h, grad);
}

ProbeParameters initialize(std::size_t input_dim, std::size_t hidden_dim, std::uint64_t seed) {
  const Layout L{input_dim, hidden_dim};
  std::vector<double> theta(L.size(), 0.0);
  rng::CounterStream stream(rng::mix(seed, tag("probe-init")));
  const double bound1 = 1.0 / std::sqrt(static_cast<double>(input_dim));
  const double bound2 = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
  for (std::size_t i = 0; i < hidden_dim * input_dim; ++i) {
    theta[L.w1() + i] = (2.0 * stream.uniform() - 1.0) * bound1;
  }
  for (std::size_t i = 0; i < kNumClasses * hidden_dim; ++i) {
    theta[L.w2() + i] = (2.0 * stream.uniform() - 1.0) * bound2;
  }
  return ProbeParameters::from_flat(input_dim, hidden_dim, theta);
}

TrainResult train(std::span<const TrainingExample> data, const TrainConfig& config,
                  const std::function<void(int, double)>& on_epoch) {
  config.validate();
  if (data.empty()) throw DomainError("cannot train on an empty dataset");
  const std::size_t d = data.front().feature.dim();
  for (const auto& ex : data) {
    if (ex.feature.dim() != d) throw DomainError("training features have mixed dimensions");
  }

  TrainResult result{initialize(d, config.hidden_dim, config.seed), {}, 0.0, 0.0, 0.0, {}};
  std::array<std::size_t, kNumClasses> counts{};
  for (const auto& ex : data) ++counts[class_index(ex.label)];
  for (auto c : kAllDifficulties) {
    if (counts[class_index(c)] == 0) {
      std::string msg = "no training examples labeled " + std::string(to_string(c));
      spdlog::warn("{}", msg);
      result.warnings.push_back(std::move(msg));
    }
  }

  const Layout L{d, config.hidden_dim};
  std::vector<double> theta = result.params.flatten();
  std::vector<double> m(L.size(), 0.0), v(L.size(), 0.0), grad(L.size());
  std::vector<std::size_t> order(data.size());
  Scratch s;
  result.initial_loss = flat_loss(theta.data(), L, data, s);

  const std::size_t batch = static_cast<std::size_t>(config.batch_size);
  double beta1_t = 1.0, beta2_t = 1.0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng::CounterStream shuffle(rng::mix(rng::mix(config.seed, tag("probe-shuffle")),
                                        static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[shuffle.below(i)]);
    }
    double epoch_loss = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      std::fill(grad.begin(), grad.end(), 0.0);
      double batch_loss = 0.0;
      for (std::size_t i = start; i < end; ++i) {
        batch_loss += accumulate(theta.data(), L, data[order[i]], grad.data(), s);
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      batch_loss *= inv;
      if (!std::isfinite(batch_loss)) {
        throw DomainError("training diverged: loss is " + std::to_string(batch_loss) +
                          " at epoch " + std::to_string(epoch + 1) + ", batch " +
                          std::to_string(n_batches + 1));
      }
      beta1_t *= config.adam_beta1;
      beta2_t *= config.adam_beta2;
      const double lr = config.learning_rate;
      for (std::size_t k = 0; k < theta.size(); ++k) {
        const double g = grad[k] * inv;
        m[k] = config.adam_beta1 * m[k] + (1.0 - config.adam_beta1) * g;
        v[k] = config.adam_beta2 * v[k] + (1.0 - config.adam_beta2) * g * g;
        const double m_hat = m[k] / (1.0 - beta1_t);
        const double v_hat = v[k] / (1.0 - beta2_t);
        theta[k] -= lr * config.weight_decay * theta[k];
        theta[k] -= lr * m_hat / (std::sqrt(v_hat) + config.adam_eps);
      }
      epoch_loss += batch_loss;
      ++n_batches;
    }
    epoch_loss /= static_cast<double>(n_batches);
    result.epoch_loss.push_back(epoch_loss);
    spdlog::debug("epoch {}/{} loss {:.6f}", epoch + 1, config.epochs, epoch_loss);
    if (on_epoch) on_epoch(epoch + 1, epoch_loss);
  }

  result.params = ProbeParameters::from_flat(d, config.hidden_dim, theta);
  result.final_loss = flat_loss(theta.data(), L, data, s);
  result.train_accuracy = accuracy(result.params, data);
  return result;
}

DifficultyLabel argmax_label(const ClassScores& scores) {
  // Preference order on ties.
  constexpr std::array<Difficulty, kNumClasses> kOrder = {Difficulty::kNormal, Difficulty::kEasy,
                                                          Difficulty::kHard};
  Difficulty best = kOrder[0];
  for (std::size_t i = 1; i < kOrder.size(); ++i) {
    if (scores[class_index(kOrder[i])] > scores[class_index(best)]) best = kOrder[i];
  }
  return best;
}

DifficultyLabel predict(const ProbeParameters& params, const FeatureVector& feature) {
  return argmax_label(logits(params, feature));
}

double accuracy(const ProbeParameters& params, std::span<const TrainingExample> data) {
  if (data.empty()) throw DomainError("accuracy of an empty dataset");
  const Layout L{params.input_dim(), params.hidden_dim()};
  const auto theta = params.flatten();
  Scratch s;
  std::size_t hits = 0;
  for (const auto& ex : data) {
    check_dim(params, ex.feature);
    if (argmax_label(flat_logits(theta.data(), L, ex.feature.values(), s)) == ex.label) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

std::string encode_probe(const ProbeParameters& params, const std::string& provider_fingerprint,
                         const json& extra) {
  static_assert(std::endian::native == std::endian::little);
  std::string out(kProbeMagic, 4);
  put_u32(out, kProbeFileVersion);
  put_u32(out, static_cast<std::uint32_t>(params.input_dim()));
  put_u32(out, static_cast<std::uint32_t>(params.hidden_dim()));
  for (double x : params.flatten()) put_f64(out, x);
  json trailer = extra.is_object() ? extra : json::object();
  trailer["class_order"] = {"Easy", "Normal", "Hard"};
  trailer["provider_fingerprint"] = provider_fingerprint;
  out += trailer.dump();
  return out;
}

ProbeFile decode_probe(std::string_view bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kProbeMagic, 4) != 0) {
    throw FormatError("not a probe file (bad magic)");
  }
  auto u32_at = [&](std::size_t pos) {
    std::uint32_t v;
    std::memcpy(&v, bytes.data() + pos, 4);
    return v;
  };
  const std::uint32_t version = u32_at(4);
  if (version != kProbeFileVersion) {
    throw FormatError("unsupported probe file version " + std::to_string(version) + " (expected " +
                      std::to_string(kProbeFileVersion) + ")");
  }
  const std::size_t d = u32_at(8), h = u32_at(12);
  if (d == 0 || h == 0) throw FormatError("probe file has a zero dimension");
  const std::size_t n = ProbeParameters::flat_size(d, h);
  if ((bytes.size() - 16) / 8 < n) throw FormatError("probe file truncated");
  std::vector<double> flat(n);
  std::memcpy(flat.data(), bytes.data() + 16, n * 8);
  const std::string_view rest = bytes.substr(16 + n * 8);
  json trailer = json::object();
  if (!rest.empty()) {
    try {
      trailer = json::parse(rest);
    } catch (const json::exception& e) {
      throw FormatError(std::string("probe file trailer is not JSON: ") + e.what());
    }
  }
  if (trailer.contains("class_order") &&
      trailer["class_order"] != json::array({"Easy", "Normal", "Hard"})) {
    throw FormatError("probe file class order " + trailer["class_order"].dump() +
                      " is not [Easy, Normal, Hard]");
  }
  std::string fp = trailer.value("provider_fingerprint", std::string());
  try {
    return ProbeFile{ProbeParameters::from_flat(d, h, flat), std::move(fp), std::move(trailer)};
  } catch (const ValidationError& e) {
    throw FormatError(std::string("probe file: ") + e.what());
  }
}

void save_probe(const ProbeParameters& params, const std::filesystem::path& path,
                const std::string& provider_fingerprint, const json& extra) {
  io::write_file(path, encode_probe(params, provider_fingerprint, extra));
}

ProbeFile load_probe(const std::filesystem::path& path, const ProbeExpectations& expect) {
  ProbeFile file = decode_probe(io::read_file(path));
  if (expect.input_dim && *expect.input_dim != file.params.input_dim()) {
    throw ValidationError(path.string() + ": probe input dim " +
                          std::to_string(file.params.input_dim()) +
                          " does not match the pipeline's feature dim " +
                          std::to_string(*expect.input_dim));
  }
  if (expect.provider_fingerprint && !expect.provider_fingerprint->empty() &&
      !file.provider_fingerprint.empty() && *expect.provider_fingerprint != file.provider_fingerprint) {
    throw ValidationError(path.string() + ": probe was trained on features from '" +
                          file.provider_fingerprint + "', the pipeline provides '" +
                          *expect.provider_fingerprint + "'");
  }
  return file;
}

std::string probe_fingerprint(const ProbeParameters& params) {
  return io::fingerprint(encode_probe(params, ""));
}

}  // namespace diffadapt
