#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

#include "factorizer/dawg.hpp"

namespace fz = factorizer;

namespace {

fz::SymbolString sym(std::string_view s) { return fz::SymbolString(s.begin(), s.end()); }

std::vector<fz::SymbolString> sorted_unique(std::vector<fz::SymbolString> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

std::vector<fz::SymbolString> random_words(std::mt19937_64& rng, int n, int alphabet, int max_len) {
  std::uniform_int_distribution<int> len(1, max_len);
  std::uniform_int_distribution<int> letter(0, alphabet - 1);
  std::vector<fz::SymbolString> out;
  for (int i = 0; i < n; ++i) {
    fz::SymbolString w;
    const int l = len(rng);
    for (int k = 0; k < l; ++k) {
      const int s = letter(rng);
      // Reserve the top two letters for markers to exercise symbols >= 256.
      w.push_back(s == 0 ? fz::kBow : s == 1 ? fz::kEow : static_cast<fz::Symbol>('a' + s));
    }
    out.push_back(std::move(w));
  }
  return sorted_unique(std::move(out));
}

// Number of trie nodes (root included) for a word set.
std::size_t trie_nodes(const std::vector<fz::SymbolString>& words) {
  std::set<fz::SymbolString> prefixes{{}};
  for (const auto& w : words) {
    for (std::size_t k = 1; k <= w.size(); ++k) prefixes.insert(fz::SymbolString(w.begin(), w.begin() + static_cast<long>(k)));
  }
  return prefixes.size();
}

}  // namespace

TEST(Dawg, PrefixExample) {
  const std::vector<fz::SymbolString> words{sym("a"), sym("ab"), sym("abc")};
  const auto dawg = fz::SubwordDawg::build(words);
  EXPECT_EQ(dawg.word_count(), 3u);
  const auto matches = dawg.iter_prefixes(sym("abd"));
  ASSERT_EQ(matches.size(), 2u);
  EXPECT_EQ(matches[0], (fz::PrefixMatch{1, 0}));
  EXPECT_EQ(matches[1], (fz::PrefixMatch{2, 1}));
  EXPECT_TRUE(dawg.iter_prefixes(sym("")).empty());
  EXPECT_TRUE(dawg.iter_prefixes(sym("xa")).empty());
  EXPECT_EQ(dawg.index_of(sym("abc")), 2u);
  EXPECT_FALSE(dawg.contains(sym("")));
  EXPECT_FALSE(dawg.contains(sym("abcd")));
}

TEST(Dawg, RejectsUnsortedOrEmptyWords) {
  const std::vector<fz::SymbolString> unsorted{sym("b"), sym("a")};
  EXPECT_THROW(fz::SubwordDawg::build(unsorted), fz::PreconditionError);
  const std::vector<fz::SymbolString> dup{sym("a"), sym("a")};
  EXPECT_THROW(fz::SubwordDawg::build(dup), fz::PreconditionError);
  const std::vector<fz::SymbolString> empty{fz::SymbolString{}};
  EXPECT_THROW(fz::SubwordDawg::build(empty), fz::PreconditionError);
}

TEST(Dawg, EmptyLanguage) {
  const auto dawg = fz::SubwordDawg::build(std::vector<fz::SymbolString>{});
  EXPECT_EQ(dawg.word_count(), 0u);
  EXPECT_TRUE(dawg.language().empty());
  EXPECT_TRUE(dawg.iter_prefixes(sym("abc")).empty());
}

TEST(Dawg, SharesSuffixes) {
  const std::vector<fz::SymbolString> words{sym("cat"), sym("hat"), sym("mat"), sym("rat")};
  const auto dawg = fz::SubwordDawg::build(words);
  // root, one state after the first letter, "a", "t".
  EXPECT_EQ(dawg.state_count(), 4u);
  EXPECT_LT(dawg.state_count(), trie_nodes(words));
}

TEST(Dawg, MatchesNaiveOracleOnRandomSets) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    const auto words = random_words(rng, 1 + trial * 3, 6, 7);
    const auto dawg = fz::SubwordDawg::build(words);
    ASSERT_EQ(dawg.word_count(), words.size());
    ASSERT_EQ(dawg.language(), words);
    ASSERT_LE(dawg.state_count(), trie_nodes(words));
    for (std::size_t i = 0; i < words.size(); ++i) ASSERT_EQ(dawg.index_of(words[i]), i);
    const auto queries = random_words(rng, 30, 6, 10);
    for (const auto& q : queries) {
      std::vector<fz::PrefixMatch> want;
      for (std::size_t i = 0; i < words.size(); ++i) {
        const auto& w = words[i];
        if (w.size() <= q.size() && std::equal(w.begin(), w.end(), q.begin())) want.push_back({w.size(), i});
      }
      std::sort(want.begin(), want.end(), [](const auto& a, const auto& b) { return a.length < b.length; });
      ASSERT_EQ(dawg.iter_prefixes(q), want);
    }
  }
}

TEST(Dawg, IsMinimalOnSuffixClosedSet) {
  // All strings of length 1..3 over {x, y}: minimal DFA has 4 states.
  std::vector<fz::SymbolString> words;
  for (int len = 1; len <= 3; ++len) {
    for (int m = 0; m < (1 << len); ++m) {
      fz::SymbolString w;
      for (int k = len - 1; k >= 0; --k) w.push_back(((m >> k) & 1) ? 'y' : 'x');
      words.push_back(w);
    }
  }
  words = sorted_unique(words);
  const auto dawg = fz::SubwordDawg::build(words);
  EXPECT_EQ(dawg.state_count(), 4u);
  EXPECT_EQ(dawg.word_count(), 14u);
}

TEST(Dawg, SerializationRoundTrip) {
  std::mt19937_64 rng(5);
  const auto words = random_words(rng, 300, 8, 9);
  const auto dawg = fz::SubwordDawg::build(words);
  fz::io::Writer w;
  dawg.serialize(w);
  fz::io::Reader r(w.buffer());
  const auto back = fz::SubwordDawg::deserialize(r);
  EXPECT_TRUE(r.at_end());
  EXPECT_EQ(back.language(), words);
  EXPECT_EQ(back.state_count(), dawg.state_count());
  EXPECT_EQ(back.transition_count(), dawg.transition_count());
}

TEST(Dawg, DeserializeRejectsCycles) {
  fz::io::Writer w;
  w.varint(2);
  w.u8(0);
  w.varint(1);
  w.varint('a');
  w.varint(1);
  w.u8(1);
  w.varint(1);
  w.varint('b');
  w.varint(1);  // self loop
  fz::io::Reader r(w.buffer());
  EXPECT_THROW(fz::SubwordDawg::deserialize(r), fz::FormatError);
}

TEST(Dawg, DeserializeRejectsOutOfRange) {
  fz::io::Writer w;
  w.varint(1);
  w.u8(0);
  w.varint(1);
  w.varint('a');
  w.varint(5);
  fz::io::Reader r(w.buffer());
  EXPECT_THROW(fz::SubwordDawg::deserialize(r), fz::FormatError);
}
