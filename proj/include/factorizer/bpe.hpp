#pragma once

// Byte-level BPE over words wrapped in BOW/EOW marker symbols. Token ids:
// 0..257 are the base symbols, merge k produces id 258 + k.

#include <algorithm>
#include <istream>
#include <map>
#include <ostream>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <vector>

#include "factorizer/corpus.hpp"
#include "factorizer/error.hpp"
#include "factorizer/symbols.hpp"

namespace factorizer {

class MergeTable {
 public:
  using TokenId = std::uint32_t;

  struct Merge {
    TokenId left = 0;
    TokenId right = 0;
  };

  MergeTable() {
    for (Symbol s = 0; s < kAlphabetSize; ++s) tokens_.push_back(SymbolString(1, s));
  }

  std::size_t size() const { return merges_.size(); }
  bool empty() const { return merges_.empty(); }
  std::size_t token_count() const { return tokens_.size(); }
  const std::vector<Merge>& merges() const { return merges_; }
  const SymbolString& token(TokenId id) const { return tokens_.at(id); }

  /// Appends a merge of two existing tokens; returns the new token id.
  TokenId add(TokenId left, TokenId right) {
    require(left < tokens_.size() && right < tokens_.size(), "bpe: merge operand does not exist");
    require(!rank_.contains(key(left, right)), "bpe: duplicate merge pair");
    const auto id = static_cast<TokenId>(tokens_.size());
    rank_.emplace(key(left, right), merges_.size());
    merges_.push_back({left, right});
    SymbolString joined = tokens_[left];
    joined.insert(joined.end(), tokens_[right].begin(), tokens_[right].end());
    tokens_.push_back(std::move(joined));
    return id;
  }

  /// Merge rank of (left, right), or npos when the pair never merges.
  std::size_t rank(TokenId left, TokenId right) const {
    const auto it = rank_.find(key(left, right));
    return it == rank_.end() ? npos : it->second;
  }

  TokenId merged_id(std::size_t rank) const { return static_cast<TokenId>(kAlphabetSize + rank); }

  /// Token id of a symbol string, or npos.
  std::size_t id_of(const SymbolString& symbols) const {
    if (by_symbols_.size() != tokens_.size()) {
      by_symbols_.clear();
      for (std::size_t i = 0; i < tokens_.size(); ++i) by_symbols_.emplace(tokens_[i], i);
    }
    const auto it = by_symbols_.find(symbols);
    return it == by_symbols_.end() ? npos : it->second;
  }

  friend bool operator==(const MergeTable& a, const MergeTable& b) { return a.tokens_ == b.tokens_; }

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

 private:
  static std::uint64_t key(TokenId l, TokenId r) { return (std::uint64_t{l} << 32) | r; }

  std::vector<Merge> merges_;
  std::vector<SymbolString> tokens_;
  std::unordered_map<std::uint64_t, std::size_t> rank_;
  mutable std::map<SymbolString, std::size_t> by_symbols_;
};

/// Trains vocab_size - 256 merges (fewer when no adjacent pair is left). Pair
/// counts are weighted by word frequency; ties go to the smallest
/// (left, right) pair of symbol strings.
inline MergeTable train_bpe(const WordFrequencyList& list, std::size_t vocab_size) {
  require(vocab_size > 256, "bpe: vocab_size must exceed 256");
  using TokenId = MergeTable::TokenId;
  MergeTable table;

  struct Word {
    std::vector<TokenId> tokens;
    std::uint64_t count;
  };
  std::vector<Word> words;
  for (const auto& [bytes, count] : list.sorted()) {
    const SymbolString s = BoundedWord::full(bytes).symbols();
    words.push_back({std::vector<TokenId>(s.begin(), s.end()), count});
  }

  using Pair = std::pair<TokenId, TokenId>;
  std::map<Pair, std::uint64_t> counts;
  std::map<Pair, std::set<std::size_t>> where;
  auto order = [&table](const Pair& a, const Pair& b) {
    return std::tie(table.token(a.first), table.token(a.second)) <
           std::tie(table.token(b.first), table.token(b.second));
  };
  // Ranked by count descending, then pair order.
  auto cmp = [&order](const std::pair<std::uint64_t, Pair>& a, const std::pair<std::uint64_t, Pair>& b) {
    if (a.first != b.first) return a.first > b.first;
    return order(a.second, b.second);
  };
  std::set<std::pair<std::uint64_t, Pair>, decltype(cmp)> ranked(cmp);

  auto adjust = [&](const Pair& p, std::int64_t delta, std::size_t w) {
    std::uint64_t& c = counts[p];
    if (c > 0) ranked.erase({c, p});
    c = static_cast<std::uint64_t>(static_cast<std::int64_t>(c) + delta);
    if (c > 0) {
      ranked.insert({c, p});
    } else {
      counts.erase(p);
    }
    if (delta > 0) where[p].insert(w);
  };

  for (std::size_t w = 0; w < words.size(); ++w) {
    const auto& t = words[w].tokens;
    for (std::size_t i = 0; i + 1 < t.size(); ++i) {
      adjust({t[i], t[i + 1]}, static_cast<std::int64_t>(words[w].count), w);
    }
  }

  const std::size_t budget = vocab_size - 256;
  while (table.size() < budget && !ranked.empty()) {
    const Pair best = ranked.begin()->second;
    const TokenId merged = table.add(best.first, best.second);
    const std::set<std::size_t> affected = std::move(where[best]);
    where.erase(best);
    for (const std::size_t w : affected) {
      auto& t = words[w].tokens;
      const auto f = static_cast<std::int64_t>(words[w].count);
      for (std::size_t i = 0; i + 1 < t.size(); ++i) adjust({t[i], t[i + 1]}, -f, w);
      std::vector<TokenId> next;
      for (std::size_t i = 0; i < t.size(); ++i) {
        if (i + 1 < t.size() && t[i] == best.first && t[i + 1] == best.second) {
          next.push_back(merged);
          ++i;
        } else {
          next.push_back(t[i]);
        }
      }
      t = std::move(next);
      for (std::size_t i = 0; i + 1 < t.size(); ++i) adjust({t[i], t[i + 1]}, f, w);
    }
  }
  return table;
}

/// Token ids for one marked word. Each iteration collects every adjacent
/// pair occurrence that has a merge, drops each occurrence with probability
/// `dropout`, and applies the best-ranked surviving merge to its surviving
/// occurrences left to right. Stops when nothing survives, so dropout 1
/// yields the raw symbols.
template <typename Rng = std::mt19937_64>
std::vector<MergeTable::TokenId> encode_bpe_ids(const BoundedWord& word, const MergeTable& table,
                                                double dropout = 0.0, Rng* rng = nullptr) {
  require(dropout >= 0.0 && dropout <= 1.0, "bpe: dropout must lie in [0, 1]");
  require(dropout == 0.0 || rng != nullptr, "bpe: dropout needs a random generator");
  const SymbolString s = word.symbols();
  std::vector<MergeTable::TokenId> t(s.begin(), s.end());
  std::bernoulli_distribution drop(dropout);
  std::vector<std::pair<std::size_t, std::size_t>> live;  // (rank, position)
  while (t.size() > 1) {
    live.clear();
    for (std::size_t i = 0; i + 1 < t.size(); ++i) {
      const std::size_t r = table.rank(t[i], t[i + 1]);
      if (r == MergeTable::npos) continue;
      if (dropout > 0.0 && drop(*rng)) continue;
      live.emplace_back(r, i);
    }
    if (live.empty()) break;
    const std::size_t best = std::min_element(live.begin(), live.end())->first;
    std::vector<bool> at(t.size(), false);
    for (const auto& [r, i] : live) {
      if (r == best) at[i] = true;
    }
    std::vector<MergeTable::TokenId> next;
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (at[i] && i + 1 < t.size()) {
        next.push_back(table.merged_id(best));
        ++i;
      } else {
        next.push_back(t[i]);
      }
    }
    t = std::move(next);
  }
  return t;
}

template <typename Rng = std::mt19937_64>
std::vector<BoundedWord> encode_bpe(const BoundedWord& word, const MergeTable& table, double dropout = 0.0,
                                    Rng* rng = nullptr) {
  std::vector<BoundedWord> out;
  for (const auto id : encode_bpe_ids(word, table, dropout, rng)) {
    out.push_back(BoundedWord::from_symbols(table.token(id)));
  }
  return out;
}

inline std::string bpe_token_display(const MergeTable& table, MergeTable::TokenId id) {
  const SymbolString& s = table.token(id);
  if (s.size() == 1 && s[0] == kEow) return to_display(BoundedWord{"", false, true});
  return to_display(BoundedWord::from_symbols(s));
}

/// One `left right` merge per line in priority order, tokens in display form.
inline void write_merges(const MergeTable& table, std::ostream& out) {
  for (const auto& m : table.merges()) {
    out << bpe_token_display(table, m.left) << ' ' << bpe_token_display(table, m.right) << '\n';
  }
}

inline MergeTable read_merges(std::istream& in) {
  MergeTable table;
  std::string line;
  std::size_t line_no = 0;
  // Markers only occur at token edges: a lone marker on the right is EOW.
  auto parse = [&](std::string_view text, bool right) {
    BoundedWord w = from_display(text);
    if (right && w.bow && !w.eow && w.bytes.empty()) w = {"", false, true};
    SymbolString s;
    if (w.bow) s.push_back(kBow);
    for (const unsigned char c : w.bytes) s.push_back(c);
    if (w.eow) s.push_back(kEow);
    const std::size_t id = table.id_of(s);
    if (id == MergeTable::npos) {
      throw FormatError("merge line " + std::to_string(line_no) + ": unknown token '" + std::string(text) + "'");
    }
    return static_cast<MergeTable::TokenId>(id);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto space = line.find(' ');
    if (space == std::string::npos || line.find(' ', space + 1) != std::string::npos) {
      throw FormatError("merge line " + std::to_string(line_no) + ": expected 'left right'");
    }
    const auto left = parse(std::string_view(line).substr(0, space), false);
    const auto right = parse(std::string_view(line).substr(space + 1), true);
    try {
      table.add(left, right);
    } catch (const PreconditionError& e) {
      throw FormatError("merge line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return table;
}

}  // namespace factorizer
