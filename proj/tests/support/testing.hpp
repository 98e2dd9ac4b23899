#pragma once

// Shared helpers for the unit and acceptance tests: independent reference
// computations and scratch directories.

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "diffadapt/core.hpp"

namespace testing_support {

// -sum p ln p in long double with compensated summation.
inline long double reference_entropy(const std::vector<long double>& p) {
  long double sum = 0.0L, c = 0.0L;
  for (long double x : p) {
    if (x <= 0.0L) continue;
    const long double term = -x * std::log(x);
    const long double t = sum + term;
    c += std::fabs(sum) >= std::fabs(term) ? (sum - t) + term : (term - t) + sum;
    sum = t;
  }
  return sum + c;
}

// softmax in long double.
inline std::array<long double, 3> reference_softmax(const std::array<long double, 3>& z) {
  const long double m = std::max({z[0], z[1], z[2]});
  std::array<long double, 3> e{};
  long double s = 0.0L;
  for (int i = 0; i < 3; ++i) {
    e[i] = std::exp(z[i] - m);
    s += e[i];
  }
  for (auto& x : e) x /= s;
  return e;
}

// Cheapest correct strategy, else cheapest overall, ranking ties by a fixed
// preference list; enumerates every candidate explicitly.
struct Triple {
  std::array<bool, 3> correct;  // Easy, Normal, Hard
  std::array<long, 3> tokens;
};

inline int brute_force_oracle(const Triple& t) {
  // Preference when tokens tie: Easy (0), Hard (2), Normal (1).
  const int preference[3] = {0, 2, 1};
  bool any = t.correct[0] || t.correct[1] || t.correct[2];
  int best = -1;
  for (int candidate = 0; candidate < 3; ++candidate) {
    if (any && !t.correct[candidate]) continue;
    bool dominated = false;
    for (int other = 0; other < 3; ++other) {
      if (other == candidate || (any && !t.correct[other])) continue;
      if (t.tokens[other] < t.tokens[candidate]) dominated = true;
      if (t.tokens[other] == t.tokens[candidate]) {
        const auto rank = [&](int s) { return std::find(preference, preference + 3, s) - preference; };
        if (rank(other) < rank(candidate)) dominated = true;
      }
    }
    if (!dominated) best = candidate;
  }
  return best;
}

class ScratchDir {
 public:
  explicit ScratchDir(const std::string& name) {
    path_ = std::filesystem::temp_directory_path() /
            ("diffadapt-test-" + name + "-" + std::to_string(std::random_device{}()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

}  // namespace testing_support

namespace testing_support {

// Mean cross-entropy of the two-layer MLP, evaluated independently of the
// library in long double from the flat W1 | b1 | W2 | b2 layout.
inline long double reference_loss(std::size_t d, std::size_t h, const std::vector<long double>& theta,
                                  const std::vector<std::vector<double>>& xs, const std::vector<int>& ys) {
  long double total = 0.0L;
  const std::size_t b1 = h * d, w2 = b1 + h, b2 = w2 + 3 * h;
  for (std::size_t n = 0; n < xs.size(); ++n) {
    std::vector<long double> act(h);
    for (std::size_t j = 0; j < h; ++j) {
      long double a = theta[b1 + j];
      for (std::size_t k = 0; k < d; ++k) a += theta[j * d + k] * xs[n][k];
      act[j] = a > 0 ? a : 0;
    }
    std::array<long double, 3> z{};
    for (std::size_t c = 0; c < 3; ++c) {
      z[c] = theta[b2 + c];
      for (std::size_t j = 0; j < h; ++j) z[c] += theta[w2 + c * h + j] * act[j];
    }
    const auto p = reference_softmax(z);
    total -= std::log(p[static_cast<std::size_t>(ys[n])]);
  }
  return total / static_cast<long double>(xs.size());
}

// Largest |analytic - numeric| / max(|analytic|, |numeric|, 1e-6) over all
// parameters, with central differences of step 1e-5.
inline double max_gradient_error(std::size_t d, std::size_t h, const std::vector<double>& theta,
                                 const std::vector<double>& analytic,
                                 const std::vector<std::vector<double>>& xs, const std::vector<int>& ys) {
  constexpr long double kStep = 1e-5L;
  std::vector<long double> t(theta.begin(), theta.end());
  double worst = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const long double saved = t[i];
    t[i] = saved + kStep;
    const long double up = reference_loss(d, h, t, xs, ys);
    t[i] = saved - kStep;
    const long double down = reference_loss(d, h, t, xs, ys);
    t[i] = saved;
    const double numeric = static_cast<double>((up - down) / (2 * kStep));
    const double denom = std::max({std::fabs(analytic[i]), std::fabs(numeric), 1e-6});
    worst = std::max(worst, std::fabs(analytic[i] - numeric) / denom);
  }
  return worst;
}

}  // namespace testing_support
