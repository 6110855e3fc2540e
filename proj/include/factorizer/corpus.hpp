#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "factorizer/error.hpp"
#include "factorizer/symbols.hpp"
#include "factorizer/utf8.hpp"

namespace factorizer {

/// Word → corpus count. Immutable once built, apart from merge().
class WordFrequencyList {
 public:
  using Entry = std::pair<std::string, std::uint64_t>;

  void add(std::string_view word, std::uint64_t count = 1) {
    require(!word.empty(), "words must be non-empty");
    require(count >= 1, "word counts must be at least 1");
    counts_[std::string(word)] += count;
    total_ += count;
  }

  /// Order-independent: merging shards in any order yields equal lists.
  void merge(const WordFrequencyList& other) {
    for (const auto& [word, count] : other.counts_) add(word, count);
  }

  std::uint64_t count(std::string_view word) const {
    const auto it = counts_.find(std::string(word));
    return it == counts_.end() ? 0 : it->second;
  }

  std::size_t size() const { return counts_.size(); }
  bool empty() const { return counts_.empty(); }
  std::uint64_t total_words() const { return total_; }

  std::uint64_t max_count() const {
    std::uint64_t best = 0;
    for (const auto& [word, count] : counts_) best = std::max(best, count);
    return best;
  }

  /// Descending count, ties by ascending bytes. Deterministic.
  std::vector<Entry> sorted() const {
    std::vector<Entry> out(counts_.begin(), counts_.end());
    std::sort(out.begin(), out.end(), [](const Entry& a, const Entry& b) {
      return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    return out;
  }

  friend bool operator==(const WordFrequencyList& a, const WordFrequencyList& b) {
    return a.total_ == b.total_ && a.counts_ == b.counts_;
  }

 private:
  std::unordered_map<std::string, std::uint64_t> counts_;
  std::uint64_t total_ = 0;
};

/// Splits text into maximal runs of non-whitespace bytes. ASCII and Unicode
/// whitespace separate words; invalid UTF-8 bytes stay inside words verbatim.
template <typename Callback>
void for_each_word(std::string_view text, Callback&& callback) {
  std::size_t start = 0;
  std::size_t i = 0;
  while (i < text.size()) {
    const utf8::Decoded d = utf8::decode(text, i);
    if (d.valid && utf8::is_whitespace(d.scalar)) {
      if (i > start) callback(text.substr(start, i - start));
      i += d.length;
      start = i;
    } else {
      i += d.length;
    }
  }
  if (i > start) callback(text.substr(start, i - start));
}

inline std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  for_each_word(text, [&](std::string_view w) { words.emplace_back(w); });
  return words;
}

inline void count_words(std::string_view text, WordFrequencyList& list) {
  for_each_word(text, [&](std::string_view w) { list.add(w); });
}

inline WordFrequencyList extract_frequencies(std::istream& in) {
  WordFrequencyList list;
  std::string line;
  while (std::getline(in, line)) count_words(line, list);
  return list;
}

inline WordFrequencyList extract_frequencies(std::string_view text) {
  WordFrequencyList list;
  count_words(text, list);
  return list;
}

// --- sampling and weighting ------------------------------------------------

/// Unnormalized sampling mass f / ln(f + 1); flattens the Zipfian head.
inline double sample_weight(std::uint64_t frequency) {
  require(frequency >= 1, "sample_weight: frequency must be >= 1");
  const double f = static_cast<double>(frequency);
  return f / std::log1p(f);
}

/// Loss multiplier ln(f + 1) that undoes the sampling distortion.
inline double loss_weight(std::uint64_t frequency) {
  require(frequency >= 1, "loss_weight: frequency must be >= 1");
  return std::log1p(static_cast<double>(frequency));
}

// Real-valued overloads, used when checking the weighting algebra on
// non-integer frequencies such as e - 1.
inline double sample_weight(double frequency) {
  require(frequency >= 1.0, "sample_weight: frequency must be >= 1");
  return frequency / std::log1p(frequency);
}

inline double loss_weight(double frequency) {
  require(frequency >= 1.0, "loss_weight: frequency must be >= 1");
  return std::log1p(frequency);
}

/// Probability of keeping a sampled word whole rather than splitting it.
inline double not_split_probability(double frequency, double max_frequency) {
  require(frequency >= 1.0, "not_split_probability: frequency must be >= 1");
  require(frequency <= max_frequency, "not_split_probability: frequency exceeds the maximum");
  if (frequency == max_frequency) return 1.0;
  return std::log1p(frequency) / std::log1p(max_frequency);
}

struct TrainingExample {
  BoundedWord first;                  // the whole word, or the left half of a split
  std::optional<BoundedWord> second;  // right half when split
  std::uint64_t frequency = 0;
  double weight = 0.0;                // loss_weight(frequency)

  bool is_split() const { return second.has_value(); }
};

/// Draws training words proportional to sample_weight and splits them at a
/// uniform interior byte boundary with probability 1 - not_split_probability.
class TrainingSampler {
 public:
  explicit TrainingSampler(const WordFrequencyList& list) : TrainingSampler(list.sorted()) {}

  explicit TrainingSampler(std::vector<WordFrequencyList::Entry> entries)
      : entries_(std::move(entries)) {
    require(!entries_.empty(), "TrainingSampler: empty frequency list");
    std::vector<double> weights;
    weights.reserve(entries_.size());
    for (const auto& [word, count] : entries_) {
      weights.push_back(sample_weight(count));
      max_frequency_ = std::max(max_frequency_, count);
    }
    pick_ = std::discrete_distribution<std::size_t>(weights.begin(), weights.end());
  }

  template <typename Rng>
  TrainingExample draw(Rng& rng) {
    const auto& [word, count] = entries_[pick_(rng)];
    TrainingExample example;
    example.frequency = count;
    example.weight = loss_weight(count);

    const double keep = not_split_probability(static_cast<double>(count),
                                              static_cast<double>(max_frequency_));
    // The Bernoulli draw happens even for single-byte words so that the
    // random stream does not depend on word lengths.
    const bool split = std::bernoulli_distribution(1.0 - keep)(rng) && word.size() >= 2;
    if (!split) {
      example.first = BoundedWord::full(word);
      return example;
    }
    const std::size_t cut = std::uniform_int_distribution<std::size_t>(1, word.size() - 1)(rng);
    example.first = BoundedWord{word.substr(0, cut), true, false};
    example.second = BoundedWord{word.substr(cut), false, true};
    return example;
  }

  const std::vector<WordFrequencyList::Entry>& entries() const { return entries_; }
  std::uint64_t max_frequency() const { return max_frequency_; }

 private:
  std::vector<WordFrequencyList::Entry> entries_;
  std::uint64_t max_frequency_ = 0;
  std::discrete_distribution<std::size_t> pick_;
};

template <typename Rng>
TrainingExample draw_training_example(TrainingSampler& sampler, Rng& rng) {
  return sampler.draw(rng);
}

// --- TSV format ------------------------------------------------------------
// One `word<TAB>count` line per entry in sorted() order. Tabs, newlines and
// backslashes inside words are escaped as \t, \n and \\.

inline std::string escape_tsv_field(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '\t': out += "\\t"; break;
      case '\n': out += "\\n"; break;
      case '\\': out += "\\\\"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

inline std::string unescape_tsv_field(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '\\') {
      out.push_back(s[i]);
      continue;
    }
    if (++i == s.size()) throw FormatError("dangling backslash in TSV field");
    switch (s[i]) {
      case 't': out.push_back('\t'); break;
      case 'n': out.push_back('\n'); break;
      case '\\': out.push_back('\\'); break;
      default: throw FormatError(std::string("unknown TSV escape \\") + s[i]);
    }
  }
  return out;
}

inline void write_tsv(const WordFrequencyList& list, std::ostream& out) {
  for (const auto& [word, count] : list.sorted()) {
    out << escape_tsv_field(word) << '\t' << count << '\n';
  }
}

inline WordFrequencyList read_tsv(std::istream& in) {
  WordFrequencyList list;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    const auto tab = line.rfind('\t');
    if (tab == std::string::npos || tab == 0) {
      throw FormatError("frequency list line " + std::to_string(line_number) +
                        ": expected word<TAB>count");
    }
    std::uint64_t count = 0;
    try {
      std::size_t used = 0;
      count = std::stoull(line.substr(tab + 1), &used);
      if (used != line.size() - tab - 1) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw FormatError("frequency list line " + std::to_string(line_number) + ": bad count");
    }
    if (count == 0) {
      throw FormatError("frequency list line " + std::to_string(line_number) + ": zero count");
    }
    list.add(unescape_tsv_field(std::string_view(line).substr(0, tab)), count);
  }
  return list;
}

}  // namespace factorizer
