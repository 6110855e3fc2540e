#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <queue>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "factorizer/corpus.hpp"
#include "factorizer/dawg.hpp"
#include "factorizer/error.hpp"
#include "factorizer/symbols.hpp"
#include "factorizer/triplet.hpp"
#include "factorizer/vocab.hpp"

namespace factorizer {

enum class ScoreMode { kDeterministic, kSampling };

struct ScoreParams {
  double alpha_split = 0.1;
  double sigma_sample = 0.02;  // ignored in deterministic mode
  ScoreMode mode = ScoreMode::kDeterministic;

  void validate() const {
    require(std::isfinite(alpha_split) && alpha_split >= 0.0, "alpha_split must be finite and >= 0");
    require(std::isfinite(sigma_sample) && sigma_sample >= 0.0, "sigma_sample must be finite and >= 0");
  }

  static ScoreParams sampling(double alpha_split = 0.1, double sigma_sample = 0.02) {
    return {alpha_split, sigma_sample, ScoreMode::kSampling};
  }
};

/// -log p(w|z) + alpha, plus |w| exp(eps) with eps ~ N(0, sigma^2) when
/// sampling; |w| is the subword's byte length.
inline double score_with_noise(const VocabularyEntry& entry, const ScoreParams& params, double eps) {
  double s = -entry.logprob + params.alpha_split;
  if (params.mode == ScoreMode::kSampling) {
    s += static_cast<double>(entry.subword.bytes.size()) * std::exp(eps);
  }
  require(s >= 0.0, "negative edge score for " + to_display(entry.subword));
  return s;
}

template <typename Rng = std::mt19937_64>
double score(const VocabularyEntry& entry, const ScoreParams& params, Rng* rng = nullptr) {
  double eps = 0.0;
  if (params.mode == ScoreMode::kSampling) {
    require(rng != nullptr, "sampling mode needs a random generator");
    eps = std::normal_distribution<double>(0.0, params.sigma_sample)(*rng);
  }
  return score_with_noise(entry, params, eps);
}

struct Piece {
  BoundedWord subword;
  Triplet triplet;
  double score = 0.0;
  std::size_t entry = 0;  // index into the vocabulary

  friend bool operator==(const Piece&, const Piece&) = default;
};

struct Tokenization {
  std::vector<Piece> pieces;
  double total_score = 0.0;

  std::vector<Triplet> triplets() const {
    std::vector<Triplet> out;
    for (const auto& p : pieces) out.push_back(p.triplet);
    return out;
  }

  friend bool operator==(const Tokenization&, const Tokenization&) = default;
};

namespace detail {

// Dijkstra over symbol positions of one word. Labels are ordered by total
// score, then piece count, then split positions with later splits first
// (the longest first piece wins). Edge scores come from `edge(entry index)`,
// evaluated once per relaxed edge.
template <typename EdgeScore>
Tokenization shortest_segmentation(const BoundedWord& word, const Vocabulary& vocab,
                                   const SubwordDawg& dawg, EdgeScore&& edge) {
  require(!word.bytes.empty(), "tokenize_word: empty word");
  const SymbolString symbols = word.symbols();
  const std::size_t n = symbols.size();
  struct Label {
    double cost = std::numeric_limits<double>::infinity();
    std::size_t pieces = 0;
    std::size_t pred = 0;
    std::size_t entry = 0;
    double edge = 0.0;
  };
  std::vector<Label> label(n + 1);
  std::vector<bool> settled(n + 1, false);
  label[0].cost = 0.0;

  auto splits = [&](std::size_t node) {
    std::vector<std::size_t> out;
    for (std::size_t at = node; at != 0; at = label[at].pred) out.push_back(at);
    std::reverse(out.begin(), out.end());
    return out;
  };

  using Key = std::tuple<double, std::size_t, std::size_t>;  // cost, pieces, position
  std::priority_queue<Key, std::vector<Key>, std::greater<>> heap;
  heap.emplace(0.0, 0, 0);
  std::size_t furthest = 0;
  while (!heap.empty()) {
    const auto [cost, pieces, i] = heap.top();
    heap.pop();
    if (settled[i] || cost != label[i].cost || pieces != label[i].pieces) continue;
    settled[i] = true;
    furthest = std::max(furthest, i);
    if (i == n) break;

    dawg.for_each_prefix(std::span<const Symbol>(symbols).subspan(i), [&](std::size_t length, std::size_t index) {
      const std::size_t j = i + length;
      if (settled[j]) return;
      const double w = edge(index);
      const double c = cost + w;
      Label& target = label[j];
      bool take = false;
      if (c != target.cost) {
        take = c < target.cost;
      } else if (pieces + 1 != target.pieces) {
        take = pieces + 1 < target.pieces;
      } else {
        // Same cost and count: later split positions win.
        std::vector<std::size_t> mine = splits(i);
        mine.push_back(j);
        const std::vector<std::size_t> current = splits(j);
        take = std::lexicographical_compare(current.begin(), current.end(), mine.begin(), mine.end());
      }
      if (!take) return;
      const bool rekey = c != target.cost || pieces + 1 != target.pieces;
      target = {c, pieces + 1, i, index, w};
      if (rekey) heap.emplace(c, pieces + 1, j);
    });
  }

  if (!settled[n]) {
    std::size_t byte_offset = furthest;
    if (word.bow && byte_offset > 0) --byte_offset;
    throw CoverageError("word " + to_display(word) + " cannot be covered by the vocabulary; stuck at byte " +
                            std::to_string(byte_offset),
                        byte_offset);
  }

  Tokenization out;
  out.total_score = label[n].cost;
  for (std::size_t at = n; at != 0; at = label[at].pred) {
    const VocabularyEntry& e = vocab[label[at].entry];
    out.pieces.push_back({e.subword, e.triplet, label[at].edge, label[at].entry});
  }
  std::reverse(out.pieces.begin(), out.pieces.end());
  return out;
}

}  // namespace detail

/// Minimum-score segmentation of one word. Sampling mode requires `rng` and
/// draws fresh noise for every edge the search relaxes.
template <typename Rng = std::mt19937_64>
Tokenization tokenize_word(const BoundedWord& word, const Vocabulary& vocab, const SubwordDawg& dawg,
                           const ScoreParams& params, Rng* rng = nullptr) {
  params.validate();
  require(params.mode == ScoreMode::kDeterministic || rng != nullptr,
          "sampling mode needs a random generator");
  return detail::shortest_segmentation(word, vocab, dawg,
                                       [&](std::size_t index) { return score(vocab[index], params, rng); });
}

template <typename Rng = std::mt19937_64>
Tokenization tokenize_word(const BoundedWord& word, const Lexicon& lex, const ScoreParams& params,
                           Rng* rng = nullptr) {
  return tokenize_word(word, lex.vocabulary, lex.dawg, params, rng);
}

/// Splits on whitespace, marks every word with BOW and EOW, tokenizes each.
template <typename Rng = std::mt19937_64>
std::vector<Tokenization> tokenize_text(std::string_view text, const Lexicon& lex, const ScoreParams& params,
                                        Rng* rng = nullptr) {
  std::vector<Tokenization> out;
  for_each_word(text, [&](std::string_view w) {
    out.push_back(tokenize_word(BoundedWord::full(std::string(w)), lex, params, rng));
  });
  return out;
}

template <typename Rng>
std::vector<Tokenization> sample_tokenizations(const BoundedWord& word, const Lexicon& lex,
                                               const ScoreParams& params, Rng& rng, std::size_t n) {
  require(params.mode == ScoreMode::kSampling, "sample_tokenizations: sampling mode required");
  require(n >= 1, "sample_tokenizations: need at least one sample");
  std::vector<Tokenization> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) out.push_back(tokenize_word(word, lex, params, &rng));
  return out;
}

/// Concatenates the subwords of `triplets`; a single space separates words,
/// where a word ends after an EOW piece or before a BOW piece.
inline std::string detokenize(std::span<const Triplet> triplets, const Vocabulary& vocab) {
  std::string out;
  bool boundary = false;
  for (std::size_t i = 0; i < triplets.size(); ++i) {
    const VocabularyEntry* e = vocab.find(triplets[i]);
    if (e == nullptr) {
      throw UnknownTripletError("unknown triplet " + triplets[i].to_string() + " at position " + std::to_string(i),
                                i);
    }
    if (i > 0 && (boundary || e->subword.bow)) out.push_back(' ');
    out += e->subword.bytes;
    boundary = e->subword.eow;
  }
  return out;
}

inline std::string detokenize(const std::vector<Tokenization>& tokenizations, const Vocabulary& vocab) {
  std::vector<Triplet> all;
  for (const auto& t : tokenizations) {
    for (const auto& p : t.pieces) all.push_back(p.triplet);
  }
  return detokenize(std::span<const Triplet>(all), vocab);
}

/// `subword:r,g,b` pieces separated by spaces.
inline std::string format_pieces(const Tokenization& t) {
  std::string out;
  for (const auto& p : t.pieces) {
    if (!out.empty()) out.push_back(' ');
    out += to_display(p.subword);
    out.push_back(':');
    out += p.triplet.to_string();
  }
  return out;
}

}  // namespace factorizer
