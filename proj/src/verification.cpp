#include "diffadapt/verification.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>

namespace diffadapt {
namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

// Index one past the brace that closes the group opened at `open`, or npos.
std::size_t match_brace(std::string_view text, std::size_t open) {
  int depth = 0;
  for (std::size_t i = open; i < text.size(); ++i) {
    if (text[i] == '{') {
      ++depth;
    } else if (text[i] == '}') {
      if (--depth == 0) return i + 1;
    }
  }
  return std::string_view::npos;
}

std::optional<std::string> last_boxed(std::string_view text) {
  static constexpr std::string_view kMarker = "\\boxed{";
  std::optional<std::string> found;
  std::size_t pos = text.find(kMarker);
  while (pos != std::string_view::npos) {
    const std::size_t open = pos + kMarker.size() - 1;
    const std::size_t close = match_brace(text, open);
    if (close != std::string_view::npos) {
      found = std::string(trim(text.substr(open + 1, close - open - 2)));
    }
    pos = text.find(kMarker, pos + 1);
  }
  return found;
}

std::optional<std::string> after_last_cue(std::string_view text) {
  const std::string lowered = to_lower(text);
  std::size_t best = std::string::npos;
  std::size_t cue_len = 0;
  for (std::string_view cue : {std::string_view("answer is"), std::string_view("answer:")}) {
    const std::size_t at = lowered.rfind(cue);
    if (at != std::string::npos && (best == std::string::npos || at > best)) {
      best = at;
      cue_len = cue.size();
    }
  }
  if (best == std::string::npos) return std::nullopt;
  std::string_view tail = text.substr(best + cue_len);
  tail = trim(tail);
  if (!tail.empty() && tail.front() == ':') tail = trim(tail.substr(1));
  if (const auto nl = tail.find('\n'); nl != std::string_view::npos) tail = tail.substr(0, nl);
  // A sentence break ends the expression; decimals like "0.5" have no space
  // after the point.
  if (const auto stop = tail.find(". "); stop != std::string_view::npos) {
    tail = tail.substr(0, stop + 1);
  }
  tail = trim(tail);
  while (tail.size() >= 2 && tail.substr(0, 2) == "**") tail = trim(tail.substr(2));
  while (tail.size() >= 2 && tail.substr(tail.size() - 2) == "**") {
    tail = trim(tail.substr(0, tail.size() - 2));
  }
  if (tail.empty()) return std::nullopt;
  return std::string(tail);
}

std::optional<double> parse_decimal(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  const std::string buf(s);
  // strtod accepts hex, inf and nan; answers never use them.
  for (char c : buf) {
    if (!(std::isdigit(static_cast<unsigned char>(c)) || c == '.' || c == '-' || c == '+' ||
          c == 'e' || c == 'E')) {
      return std::nullopt;
    }
  }
  char* end = nullptr;
  const double v = std::strtod(buf.c_str(), &end);
  if (end != buf.c_str() + buf.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

}  // namespace

std::optional<std::string> extract_answer(std::string_view completion_text) {
  if (auto boxed = last_boxed(completion_text)) return boxed;
  return after_last_cue(completion_text);
}

std::string normalize_answer(std::string_view answer) {
  std::string_view s = trim(answer);
  // Peel surrounding $...$ and {...} pairs (and a trailing period inside or
  // outside them) until nothing changes.
  bool changed = true;
  while (changed && !s.empty()) {
    changed = false;
    if (s.back() == '.') {
      s = trim(s.substr(0, s.size() - 1));
      changed = true;
    }
    if (s.size() >= 2 && s.front() == '$' && s.back() == '$') {
      s = trim(s.substr(1, s.size() - 2));
      changed = true;
    }
    if (s.size() >= 2 && s.front() == '{' && s.back() == '}' &&
        match_brace(s, 0) == s.size()) {
      s = trim(s.substr(1, s.size() - 2));
      changed = true;
    }
  }
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (char c : s) {
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

std::optional<double> parse_numeric(std::string_view normalized) {
  std::string_view s = trim(normalized);
  for (std::string_view frac : {std::string_view("\\dfrac{"), std::string_view("\\frac{")}) {
    if (s.substr(0, frac.size()) == frac) {
      const std::size_t open1 = frac.size() - 1;
      const std::size_t close1 = match_brace(s, open1);
      if (close1 == std::string_view::npos || close1 >= s.size() || s[close1] != '{') {
        return std::nullopt;
      }
      const std::size_t close2 = match_brace(s, close1);
      if (close2 != s.size()) return std::nullopt;
      const auto num = parse_decimal(s.substr(open1 + 1, close1 - open1 - 2));
      const auto den = parse_decimal(s.substr(close1 + 1, close2 - close1 - 2));
      if (!num || !den || *den == 0.0) return std::nullopt;
      return *num / *den;
    }
  }
  if (const auto slash = s.find('/'); slash != std::string_view::npos) {
    const auto num = parse_decimal(s.substr(0, slash));
    const auto den = parse_decimal(s.substr(slash + 1));
    if (!num || !den || *den == 0.0) return std::nullopt;
    return *num / *den;
  }
  return parse_decimal(s);
}

bool answers_equivalent(std::string_view candidate, std::string_view gold) {
  const std::string a = normalize_answer(candidate);
  const std::string b = normalize_answer(gold);
  if (a.empty() || b.empty()) return false;
  if (a == b) return true;
  const auto x = parse_numeric(a);
  const auto y = parse_numeric(b);
  if (!x || !y) return false;
  if (*x == *y) return true;
  return std::abs(*x - *y) <= 1e-9 * std::max(std::abs(*x), std::abs(*y));
}

bool verdict(std::string_view completion_text, std::string_view gold_answer) {
  const auto extracted = extract_answer(completion_text);
  if (!extracted) return false;
  return answers_equivalent(*extracted, gold_answer);
}

bool verdict(const GenerationRecord& record, const Problem& problem) {
  return verdict(record.completion_text(), problem.gold_answer());
}

}  // namespace diffadapt
