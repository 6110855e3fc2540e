#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "factorizer/corpus.hpp"

namespace factorizer::testing {

/// Pronounceable pseudo-words with a Zipf-like frequency profile:
/// the word at rank r (1-based) occurs round(1000 / r^0.75) times.
inline WordFrequencyList synthetic_frequency_list(std::size_t size = 200, std::uint64_t seed = 2023) {
  static constexpr std::string_view kConsonants = "bdfgklmnprstvz";
  static constexpr std::string_view kVowels = "aeiou";
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> consonant(0, kConsonants.size() - 1);
  std::uniform_int_distribution<std::size_t> vowel(0, kVowels.size() - 1);
  std::uniform_int_distribution<int> syllables(1, 4);
  std::bernoulli_distribution coda(0.3);

  std::vector<std::string> words;
  std::set<std::string> seen;
  while (words.size() < size) {
    std::string w;
    const int n = syllables(rng);
    for (int s = 0; s < n; ++s) {
      w.push_back(kConsonants[consonant(rng)]);
      w.push_back(kVowels[vowel(rng)]);
    }
    if (coda(rng)) w.push_back(kConsonants[consonant(rng)]);
    if (seen.insert(w).second) words.push_back(w);
  }
  WordFrequencyList list;
  for (std::size_t r = 0; r < words.size(); ++r) {
    const double f = std::round(1000.0 / std::pow(static_cast<double>(r + 1), 0.75));
    list.add(words[r], static_cast<std::uint64_t>(std::max(1.0, f)));
  }
  return list;
}

inline std::vector<std::string> words_of(const WordFrequencyList& list) {
  std::vector<std::string> out;
  for (const auto& [w, n] : list.sorted()) out.push_back(w);
  return out;
}

}  // namespace factorizer::testing
