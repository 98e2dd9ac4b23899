#include "diffadapt/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <unordered_map>

namespace diffadapt {
namespace {

constexpr double kMassTolerance = 1e-6;

struct Accumulator {
  double sum = 0.0;
  double sum_sq = 0.0;
  std::size_t n = 0;

  void add(double x) {
    sum += x;
    sum_sq += x * x;
    ++n;
  }
  double mean() const { return sum / static_cast<double>(n); }
  double standard_error() const {
    if (n < 2) return 0.0;
    const double m = mean();
    const double var = std::max(0.0, (sum_sq - static_cast<double>(n) * m * m) /
                                         static_cast<double>(n - 1));
    return std::sqrt(var / static_cast<double>(n));
  }
};

}  // namespace

std::string_view to_string(TailMode mode) {
  return mode == TailMode::kRenormalize ? "renormalize" : "tail_bucket";
}

TailMode parse_tail_mode(std::string_view text) {
  if (text == "renormalize") return TailMode::kRenormalize;
  if (text == "tail_bucket") return TailMode::kTailBucket;
  throw ValidationError("unknown tail mode '" + std::string(text) + "'");
}

double token_entropy(std::span<const double> probs) {
  if (probs.empty()) throw DomainError("token_entropy: empty distribution");
  double total = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0) || !std::isfinite(p)) {
      throw DomainError("token_entropy: probabilities must be finite and >= 0");
    }
    total += p;
  }
  if (std::abs(total - 1.0) > kMassTolerance) {
    throw DomainError("token_entropy: probabilities sum to " + std::to_string(total));
  }
  double h = 0.0;
  for (double p : probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  // Round-off can push a one-hot or uniform result just outside [0, ln m].
  return std::clamp(h, 0.0, std::log(static_cast<double>(probs.size())));
}

double entropy_from_logprobs(std::span<const double> logprobs, TailMode tail_mode) {
  if (logprobs.empty()) throw DomainError("entropy_from_topk: need at least one alternative");
  std::vector<double> probs;
  probs.reserve(logprobs.size() + 1);
  double mass = 0.0;
  for (double lp : logprobs) {
    if (!(lp <= 0.0)) throw DomainError("entropy_from_topk: logprobs must be <= 0");
    probs.push_back(std::exp(lp));
    mass += probs.back();
  }
  if (mass > 1.0 + kMassTolerance) {
    throw DomainError("entropy_from_topk: listed probability mass exceeds one");
  }
  if (tail_mode == TailMode::kRenormalize) {
    for (double& p : probs) p /= mass;
  } else {
    const double tail = 1.0 - mass;
    if (tail > 0.0) {
      probs.push_back(tail);
    } else if (tail < 0.0) {
      // Within tolerance above one: fold the excess back in.
      for (double& p : probs) p /= mass;
    }
  }
  return token_entropy(probs);
}

double entropy_from_topk(std::span<const Alternative> alternatives, TailMode tail_mode) {
  std::vector<double> logprobs;
  logprobs.reserve(alternatives.size());
  for (const auto& a : alternatives) logprobs.push_back(a.logprob);
  return entropy_from_logprobs(logprobs, tail_mode);
}

double mean_entropy(std::span<const double> entropies) {
  if (entropies.empty()) throw DomainError("generation_entropy: mean of an empty sequence");
  double sum = 0.0;
  for (double h : entropies) sum += h;
  return sum / static_cast<double>(entropies.size());
}

double generation_entropy(std::span<const TokenStep> steps) {
  if (steps.empty()) throw DomainError("generation_entropy: mean of an empty sequence");
  double sum = 0.0;
  for (const auto& s : steps) sum += s.entropy_nats();
  return sum / static_cast<double>(steps.size());
}

double correctness_rate(std::span<const bool> verdicts) {
  if (verdicts.empty()) throw DomainError("correctness_rate: no verdicts");
  std::size_t correct = 0;
  for (bool v : verdicts) correct += v ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(verdicts.size());
}

double correctness_rate(const std::vector<bool>& verdicts) {
  if (verdicts.empty()) throw DomainError("correctness_rate: no verdicts");
  std::size_t correct = 0;
  for (bool v : verdicts) correct += v ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(verdicts.size());
}

DifficultyCurve difficulty_curve(std::span<const GenerationRecord> records,
                                 std::span<const Problem> problems) {
  std::unordered_map<std::string, std::optional<int>> rating_of;
  rating_of.reserve(problems.size());
  for (const auto& p : problems) rating_of.emplace(p.id(), p.difficulty_rating());

  std::map<int, std::pair<Accumulator, Accumulator>> buckets;  // correctness, entropy
  DifficultyCurve curve;
  for (const auto& r : records) {
    const auto it = rating_of.find(r.problem_id());
    if (it == rating_of.end() || !it->second || !r.generation_entropy() || !r.verdict()) {
      ++curve.skipped;
      continue;
    }
    auto& [correctness, entropy] = buckets[*it->second];
    correctness.add(*r.verdict() ? 1.0 : 0.0);
    entropy.add(*r.generation_entropy());
  }
  for (const auto& [rating, acc] : buckets) {
    curve.rows.push_back(CurveRow{rating, acc.first.mean(), acc.second.mean(), acc.first.n,
                                  acc.first.standard_error(), acc.second.standard_error()});
  }
  return curve;
}

std::string curve_to_csv(const DifficultyCurve& curve) {
  std::ostringstream ss;
  ss.precision(10);
  ss << "rating,mean_correctness,mean_entropy,count\n";
  for (const auto& row : curve.rows) {
    ss << row.rating << ',' << row.mean_correctness << ',' << row.mean_entropy << ','
       << row.count << '\n';
  }
  return ss.str();
}

double entropy_reduction(const DifficultyCurve& curve, std::span<const int> from,
                         std::span<const int> to) {
  auto group_mean = [&curve](std::span<const int> ratings) {
    double sum = 0.0;
    std::size_t n = 0;
    for (int r : ratings) {
      for (const auto& row : curve.rows) {
        if (row.rating == r) {
          sum += row.mean_entropy;
          ++n;
        }
      }
    }
    if (n == 0) throw DomainError("entropy_reduction: no curve rows for rating group");
    return sum / static_cast<double>(n);
  };
  const double base = group_mean(from);
  if (base <= 0.0) throw DomainError("entropy_reduction: reference group has zero entropy");
  return 1.0 - group_mean(to) / base;
}

}  // namespace diffadapt
