#pragma once

// Rule-based final-answer extraction and matching.

#include <optional>
#include <string>
#include <string_view>

#include "diffadapt/core.hpp"

namespace diffadapt {

// Content of the last \boxed{...} (brace-balanced); otherwise the text after
// the last "answer is" / "Answer:" cue up to the end of that line or
// sentence; otherwise nullopt. Result is whitespace-trimmed.
std::optional<std::string> extract_answer(std::string_view completion_text);

// Canonical form used for comparison: trimmed, lower-cased, surrounding $ and
// braces stripped, internal whitespace collapsed, trailing period removed.
std::string normalize_answer(std::string_view answer);

// Parses plain decimals, a/b fractions and \frac{a}{b}.
std::optional<double> parse_numeric(std::string_view normalized);

// True when normalized forms match, or both parse as numbers equal within a
// relative tolerance of 1e-9. Empty inputs never match.
bool answers_equivalent(std::string_view candidate, std::string_view gold);

// extract_answer then answers_equivalent; no extractable answer is false.
bool verdict(const GenerationRecord& record, const Problem& problem);
bool verdict(std::string_view completion_text, std::string_view gold_answer);

}  // namespace diffadapt
