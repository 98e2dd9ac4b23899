#pragma once

// Canonical keys for model and benchmark names, so "Qwen/Qwen3-4B",
// "qwen3-4b" and "QWEN3_4B" address the same table row.

#include <string>
#include <string_view>

namespace diffadapt {

// Lowercase, organisation prefix ("org/") dropped, punctuation and the word
// "distill" removed. Known aliases map onto one key.
std::string canonical_model(std::string_view name);

// Lowercase alphanumerics with aliases: "AIME 2024" -> "aime24",
// "MATH-500" -> "math", "MMLU-Pro" -> "mmlupro", "GPQA-Diamond" -> "gpqa", ...
std::string canonical_benchmark(std::string_view name);

}  // namespace diffadapt
