#include "diffadapt/names.hpp"

#include <cctype>
#include <map>

namespace diffadapt {
namespace {

std::string alnum_lower(std::string_view s) {
  std::string out;
  for (unsigned char c : s) {
    if (std::isalnum(c)) out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

void erase_all(std::string& s, std::string_view word) {
  for (auto pos = s.find(word); pos != std::string::npos; pos = s.find(word)) {
    s.erase(pos, word.size());
  }
}

}  // namespace

std::string canonical_model(std::string_view name) {
  if (const auto slash = name.rfind('/'); slash != std::string_view::npos) {
    name = name.substr(slash + 1);
  }
  std::string key = alnum_lower(name);
  erase_all(key, "distill");
  if (key.find("nemotron") != std::string::npos && key.find("15b") != std::string::npos) {
    return "nemotron15b";
  }
  if (key.find("thinkprune") != std::string::npos) return "thinkprune7b";
  return key;
}

std::string canonical_benchmark(std::string_view name) {
  static const std::map<std::string, std::string, std::less<>> kAliases = {
      {"aime2024", "aime24"},     {"aime2025", "aime25"},       {"math500", "math"},
      {"gsm", "gsm8k"},           {"olympiad", "olympiadbench"}, {"minervamath", "minerva"},
      {"gpqadiamond", "gpqa"},
  };
  std::string key = alnum_lower(name);
  if (const auto it = kAliases.find(key); it != kAliases.end()) return it->second;
  return key;
}

}  // namespace diffadapt
