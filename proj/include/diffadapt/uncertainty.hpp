#pragma once

// Entropy and correctness statistics: the two axes of the difficulty curve.
// All entropies are in nats.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "diffadapt/core.hpp"

namespace diffadapt {

// How to treat probability mass outside the reported top-k alternatives.
//   kRenormalize: rescale the k probabilities to sum to one.
//   kTailBucket:  lump the residual 1 - sum(p) into one extra outcome.
enum class TailMode { kRenormalize, kTailBucket };
std::string_view to_string(TailMode mode);
TailMode parse_tail_mode(std::string_view text);

// -sum p ln p with 0 ln 0 = 0. Requires p >= 0 and |sum p - 1| <= 1e-6.
double token_entropy(std::span<const double> probs);

// Entropy of a top-k logprob list. Throws DomainError when the listed mass
// exceeds 1 + 1e-6 or a logprob is positive.
double entropy_from_topk(std::span<const Alternative> alternatives,
                         TailMode tail_mode = TailMode::kTailBucket);
double entropy_from_logprobs(std::span<const double> logprobs,
                             TailMode tail_mode = TailMode::kTailBucket);

// Mean per-step entropy; empty input is a DomainError.
double generation_entropy(std::span<const TokenStep> steps);
double mean_entropy(std::span<const double> entropies);

// Fraction of true verdicts; empty input is a DomainError.
double correctness_rate(std::span<const bool> verdicts);
double correctness_rate(const std::vector<bool>& verdicts);

struct CurveRow {
  int rating = 0;
  double mean_correctness = 0.0;
  double mean_entropy = 0.0;
  std::size_t count = 0;
  // Standard errors of the two means (sample standard deviation / sqrt(count)).
  double correctness_se = 0.0;
  double entropy_se = 0.0;
};

struct DifficultyCurve {
  std::vector<CurveRow> rows;  // ascending by rating
  std::size_t skipped = 0;     // records lacking a rating, an entropy or a verdict
};

// Buckets records by their problem's difficulty rating (joined on problem id).
DifficultyCurve difficulty_curve(std::span<const GenerationRecord> records,
                                 std::span<const Problem> problems);

// CSV: rating,mean_correctness,mean_entropy,count
std::string curve_to_csv(const DifficultyCurve& curve);

// Relative entropy drop between two rating groups of a curve:
// 1 - mean(bucket means in `to`) / mean(bucket means in `from`).
double entropy_reduction(const DifficultyCurve& curve, std::span<const int> from,
                         std::span<const int> to);

}  // namespace diffadapt
