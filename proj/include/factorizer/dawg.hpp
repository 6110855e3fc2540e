#pragma once

// Minimal deterministic acyclic automaton over the 258-symbol alphabet, built
// incrementally from lexicographically sorted words. Every state records how
// many words its right language holds, which turns each accepted word into
// its rank in sorted order; the vocabulary stores entries in that order, so
// the rank is the entry index.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "factorizer/binary_io.hpp"
#include "factorizer/error.hpp"
#include "factorizer/symbols.hpp"

namespace factorizer {

struct PrefixMatch {
  std::size_t length = 0;  // symbols consumed
  std::size_t index = 0;   // rank of the matched word

  friend bool operator==(const PrefixMatch&, const PrefixMatch&) = default;
};

class SubwordDawg {
 public:
  using StateId = std::uint32_t;

  struct Transition {
    Symbol symbol = 0;
    StateId target = 0;
    std::uint32_t words_before = 0;  // words reachable through earlier transitions
  };

  struct State {
    bool final = false;
    std::vector<Transition> transitions;  // sorted by symbol
    std::uint32_t words = 0;              // size of the right language
  };

  SubwordDawg() { states_.emplace_back(); }

  /// `words` must be non-empty sequences, strictly increasing.
  static SubwordDawg build(std::span<const SymbolString> words) {
    Builder builder;
    for (std::size_t i = 0; i < words.size(); ++i) {
      require(!words[i].empty(), "dawg: empty word");
      require(i == 0 || words[i - 1] < words[i], "dawg: words must be sorted and unique");
      builder.add(words[i]);
    }
    return builder.finish();
  }

  std::size_t state_count() const { return states_.size(); }
  std::size_t word_count() const { return states_[0].words; }

  std::size_t transition_count() const {
    std::size_t n = 0;
    for (const auto& s : states_) n += s.transitions.size();
    return n;
  }

  const std::vector<State>& states() const { return states_; }

  /// Rank of `word` among accepted words, or nullopt when not accepted.
  std::optional<std::size_t> index_of(std::span<const Symbol> word) const {
    std::optional<std::size_t> found;
    if (word.empty()) return found;
    for_each_prefix(word, [&](std::size_t length, std::size_t index) {
      if (length == word.size()) found = index;
    });
    return found;
  }

  bool contains(std::span<const Symbol> word) const { return index_of(word).has_value(); }

  /// Calls f(length, index) for every accepted prefix of `text`, shortest first.
  template <typename F>
  void for_each_prefix(std::span<const Symbol> text, F&& f) const {
    StateId state = 0;
    std::size_t rank = 0;
    for (std::size_t i = 0; i < text.size(); ++i) {
      const State& s = states_[state];
      if (s.final) ++rank;
      const auto it = std::lower_bound(
          s.transitions.begin(), s.transitions.end(), text[i],
          [](const Transition& t, Symbol sym) { return t.symbol < sym; });
      if (it == s.transitions.end() || it->symbol != text[i]) return;
      rank += it->words_before;
      state = it->target;
      if (states_[state].final) f(i + 1, rank);
    }
  }

  std::vector<PrefixMatch> iter_prefixes(std::span<const Symbol> text) const {
    std::vector<PrefixMatch> out;
    for_each_prefix(text, [&](std::size_t length, std::size_t index) { out.push_back({length, index}); });
    return out;
  }

  /// All accepted words in sorted order.
  std::vector<SymbolString> language() const {
    std::vector<SymbolString> out;
    SymbolString path;
    enumerate(0, path, out);
    return out;
  }

  void serialize(io::Writer& w) const {
    w.varint(states_.size());
    for (const auto& s : states_) {
      w.u8(s.final ? 1 : 0);
      w.varint(s.transitions.size());
      Symbol previous = 0;
      for (const auto& t : s.transitions) {
        w.varint(static_cast<std::uint64_t>(t.symbol - previous));
        w.varint(t.target);
        previous = t.symbol;
      }
    }
  }

  static SubwordDawg deserialize(io::Reader& r) {
    SubwordDawg dawg;
    const auto count = r.varint();
    if (count == 0 || count > (std::uint64_t{1} << 31)) throw FormatError("dawg: bad state count");
    dawg.states_.assign(static_cast<std::size_t>(count), State{});
    for (auto& s : dawg.states_) {
      const auto flag = r.u8();
      if (flag > 1) throw FormatError("dawg: bad final flag");
      s.final = flag == 1;
      const auto transitions = r.varint();
      if (transitions > kAlphabetSize) throw FormatError("dawg: too many transitions");
      std::uint64_t symbol = 0;
      for (std::uint64_t k = 0; k < transitions; ++k) {
        const auto delta = r.varint();
        if (k > 0 && delta == 0) throw FormatError("dawg: transitions not strictly increasing");
        symbol += delta;
        const auto target = r.varint();
        if (symbol >= kAlphabetSize || target >= count) throw FormatError("dawg: transition out of range");
        s.transitions.push_back({static_cast<Symbol>(symbol), static_cast<StateId>(target), 0});
      }
    }
    dawg.compute_counts();
    return dawg;
  }

 private:
  void enumerate(StateId state, SymbolString& path, std::vector<SymbolString>& out) const {
    const State& s = states_[state];
    if (s.final) out.push_back(path);
    for (const auto& t : s.transitions) {
      path.push_back(t.symbol);
      enumerate(t.target, path, out);
      path.pop_back();
    }
  }

  // Fills `words` / `words_before` and rejects cycles.
  void compute_counts() {
    enum : std::uint8_t { kNew, kActive, kDone };
    std::vector<std::uint8_t> mark(states_.size(), kNew);
    std::vector<std::pair<StateId, std::size_t>> stack{{0, 0}};
    mark[0] = kActive;
    while (!stack.empty()) {
      auto& [id, next] = stack.back();
      State& s = states_[id];
      if (next < s.transitions.size()) {
        const StateId child = s.transitions[next++].target;
        if (mark[child] == kActive) throw FormatError("dawg: automaton contains a cycle");
        if (mark[child] == kNew) {
          mark[child] = kActive;
          stack.emplace_back(child, 0);
        }
        continue;
      }
      std::uint64_t total = s.final ? 1 : 0;
      for (auto& t : s.transitions) {
        t.words_before = static_cast<std::uint32_t>(total - (s.final ? 1 : 0));
        total += states_[t.target].words;
      }
      if (total > UINT32_MAX) throw FormatError("dawg: language too large");
      s.words = static_cast<std::uint32_t>(total);
      mark[id] = kDone;
      stack.pop_back();
    }
  }

  class Builder {
   public:
    Builder() : states_(1) {}

    void add(const SymbolString& word) {
      std::size_t common = 0;
      while (common < word.size() && common < previous_.size() && word[common] == previous_[common]) {
        ++common;
      }
      minimize(common);
      StateId state = path_.empty() ? 0 : path_[common];
      if (path_.empty()) path_.push_back(0);
      for (std::size_t i = common; i < word.size(); ++i) {
        const auto next = static_cast<StateId>(states_.size());
        states_.emplace_back();
        states_[state].transitions.push_back({word[i], next, 0});
        path_.push_back(next);
        state = next;
      }
      states_[state].final = true;
      previous_ = word;
    }

    SubwordDawg finish() {
      minimize(0);
      // Renumber the live states breadth-first from the root.
      std::vector<StateId> remap(states_.size(), kUnset);
      std::vector<StateId> order{0};
      remap[0] = 0;
      for (std::size_t i = 0; i < order.size(); ++i) {
        for (const auto& t : states_[order[i]].transitions) {
          if (remap[t.target] == kUnset) {
            remap[t.target] = static_cast<StateId>(order.size());
            order.push_back(t.target);
          }
        }
      }
      SubwordDawg dawg;
      dawg.states_.resize(order.size());
      for (std::size_t i = 0; i < order.size(); ++i) {
        State s = states_[order[i]];
        for (auto& t : s.transitions) t.target = remap[t.target];
        dawg.states_[i] = std::move(s);
      }
      dawg.compute_counts();
      return dawg;
    }

   private:
    static constexpr StateId kUnset = UINT32_MAX;

    // Replaces or registers every state on the previous word's path deeper
    // than `depth`, deepest first, so children are canonical before parents.
    void minimize(std::size_t depth) {
      while (path_.size() > depth + 1) {
        const StateId child = path_.back();
        path_.pop_back();
        const StateId parent = path_.back();
        const std::string key = signature(states_[child]);
        const auto [it, inserted] = registry_.try_emplace(key, child);
        if (!inserted) {
          states_[parent].transitions.back().target = it->second;
          states_[child] = State{};
        }
      }
    }

    static std::string signature(const State& s) {
      io::Writer w;
      w.u8(s.final ? 1 : 0);
      for (const auto& t : s.transitions) {
        w.u16(t.symbol);
        w.u32(t.target);
      }
      return w.buffer();
    }

    std::vector<State> states_;
    std::vector<StateId> path_;  // states along the previous word; path_[i] at depth i
    SymbolString previous_;
    std::unordered_map<std::string, StateId> registry_;
  };

  std::vector<State> states_;
};

}  // namespace factorizer
