#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "factorizer/binary_io.hpp"
#include "factorizer/dawg.hpp"
#include "factorizer/error.hpp"
#include "factorizer/model.hpp"
#include "factorizer/symbols.hpp"
#include "factorizer/training.hpp"
#include "factorizer/triplet.hpp"

namespace factorizer {

struct VocabularyEntry {
  BoundedWord subword;
  Triplet triplet;
  double logprob = 0.0;   // log p(subword | triplet)
  bool fallback = false;  // injected single-byte entry

  friend bool operator==(const VocabularyEntry&, const VocabularyEntry&) = default;
};

namespace detail {

inline std::string subword_key(const BoundedWord& w) {
  std::string key;
  key.push_back(static_cast<char>((w.bow ? 1 : 0) | (w.eow ? 2 : 0)));
  key += w.bytes;
  return key;
}

}  // namespace detail

/// Entries sorted by symbol sequence, with unique lookups in both directions.
class Vocabulary {
 public:
  Vocabulary() = default;

  Vocabulary(int codebook_size, std::vector<VocabularyEntry> entries)
      : codebook_size_(codebook_size), entries_(std::move(entries)) {
    require(codebook_size >= 2 && codebook_size <= 65536, "vocabulary: bad codebook size");
    std::sort(entries_.begin(), entries_.end(),
              [](const VocabularyEntry& a, const VocabularyEntry& b) { return a.subword < b.subword; });
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      const VocabularyEntry& e = entries_[i];
      require(!e.subword.bytes.empty(), "vocabulary: subwords need at least one byte");
      require(e.logprob <= 0.0, "vocabulary: log-probabilities must be <= 0");
      require(e.triplet.r < codebook_size && e.triplet.g < codebook_size && e.triplet.b < codebook_size,
              "vocabulary: triplet outside the codebook range");
      require(by_subword_.emplace(detail::subword_key(e.subword), i).second,
              "vocabulary: duplicate subword " + to_display(e.subword));
      require(by_triplet_.emplace(e.triplet, i).second,
              "vocabulary: duplicate triplet " + e.triplet.to_string());
    }
  }

  int codebook_size() const { return codebook_size_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::vector<VocabularyEntry>& entries() const { return entries_; }
  const VocabularyEntry& operator[](std::size_t i) const { return entries_[i]; }

  const VocabularyEntry* find(const BoundedWord& subword) const {
    const auto it = by_subword_.find(detail::subword_key(subword));
    return it == by_subword_.end() ? nullptr : &entries_[it->second];
  }

  const VocabularyEntry* find(const Triplet& triplet) const {
    const auto it = by_triplet_.find(triplet);
    return it == by_triplet_.end() ? nullptr : &entries_[it->second];
  }

  /// True when every byte has all four marker variants, which makes every
  /// non-empty word segmentable.
  bool covers_all_bytes() const {
    for (int b = 0; b < 256; ++b) {
      for (int flags = 0; flags < 4; ++flags) {
        if (find(BoundedWord{std::string(1, static_cast<char>(b)), (flags & 1) != 0, (flags & 2) != 0}) ==
            nullptr) {
          return false;
        }
      }
    }
    return true;
  }

  std::vector<SymbolString> sorted_symbols() const {
    std::vector<SymbolString> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e.subword.symbols());
    return out;
  }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.codebook_size_ == b.codebook_size_ && a.entries_ == b.entries_;
  }

 private:
  int codebook_size_ = 256;
  std::vector<VocabularyEntry> entries_;
  std::unordered_map<std::string, std::size_t> by_subword_;
  std::unordered_map<Triplet, std::size_t, TripletHash> by_triplet_;
};

inline SubwordDawg build_dawg(const Vocabulary& vocab) {
  require(!vocab.empty(), "build_dawg: empty vocabulary");
  const auto words = vocab.sorted_symbols();
  return SubwordDawg::build(words);
}

/// A vocabulary together with its prefix automaton.
struct Lexicon {
  Vocabulary vocabulary;
  SubwordDawg dawg;

  static Lexicon compile(Vocabulary vocab) {
    SubwordDawg dawg = build_dawg(vocab);
    return {std::move(vocab), std::move(dawg)};
  }
};

// --- building from a trained model ----------------------------------------

struct CollisionRecord {
  BoundedWord dropped;
  BoundedWord kept;
  Triplet triplet;
  double dropped_logprob = 0.0;
  double kept_logprob = 0.0;
};

struct VocabularyBuildReport {
  std::size_t used_triplets = 0;
  std::size_t unterminated = 0;        // decodes cut by the length limit, skipped
  std::size_t distinct_subwords = 0;
  std::size_t duplicate_decodes = 0;   // triplets whose subword was already claimed
  std::vector<CollisionRecord> collisions;
  std::size_t fallbacks = 0;
};

/// Argmax search result for one subword.
struct BestCode {
  Triplet triplet;
  double logprob = -std::numeric_limits<double>::infinity();
};

/// Generic exact argmax over `used` by sequential scoring with early exit.
/// `logprob(t, w, floor)` may return -inf once it knows the result is below floor.
template <typename Decoder>
std::vector<BestCode> best_codes_by_scan(const Decoder& decoder, std::span<const BoundedWord> words,
                                         std::span<const Triplet> used, std::span<const BestCode> seeds) {
  std::vector<BestCode> out(seeds.begin(), seeds.end());
  for (std::size_t i = 0; i < words.size(); ++i) {
    for (const Triplet& t : used) {
      const double lp = decoder.logprob(t, words[i], out[i].logprob);
      if (lp > out[i].logprob || (lp == out[i].logprob && t < out[i].triplet)) out[i] = {t, lp};
    }
  }
  return out;
}

/// Adapts a trained Autoencoder to the vocabulary builder. The argmax search
/// walks a trie of the decoded subwords, evaluating all still-competitive
/// triplets for a shared prefix in one batched step and discarding any whose
/// partial log-probability has fallen below the weakest seed in the subtree.
class AutoencoderDecoder {
 public:
  explicit AutoencoderDecoder(const Autoencoder& model) : model_(model) {}

  DecodeResult decode(const Triplet& t) const {
    return model_.greedy_decode(t, model_.config().beam_width);
  }

  double logprob(const Triplet& t, const BoundedWord& w, double floor) const {
    return model_.decode_logprob(t, w, floor);
  }

  std::vector<BestCode> best_codes(std::span<const BoundedWord> words, std::span<const Triplet> used,
                                   std::span<const BestCode> seeds) const {
    std::vector<BestCode> out(seeds.begin(), seeds.end());
    if (words.empty() || used.empty()) return out;

    // Trie over decoder target sequences.
    struct Node {
      std::map<Symbol, std::size_t> children;
      std::vector<std::size_t> words_ending;
      double floor = std::numeric_limits<double>::infinity();
    };
    std::vector<Node> trie(1);
    std::vector<SymbolString> targets;
    for (std::size_t i = 0; i < words.size(); ++i) {
      targets.push_back(decoder_targets(words[i].symbols()));
      std::size_t node = 0;
      trie[0].floor = std::min(trie[0].floor, seeds[i].logprob);
      for (const Symbol s : targets.back()) {
        const auto it = trie[node].children.find(s);
        if (it != trie[node].children.end()) {
          node = it->second;
        } else {
          const std::size_t child = trie.size();
          trie[node].children.emplace(s, child);
          trie.emplace_back();
          node = child;
        }
        trie[node].floor = std::min(trie[node].floor, seeds[i].logprob);
      }
      trie[node].words_ending.push_back(i);
    }

    const ModelConfig& config = model_.config();
    Matrix contexts(static_cast<Eigen::Index>(used.size()), config.hidden_dim);
    for (std::size_t k = 0; k < used.size(); ++k) {
      contexts.row(static_cast<Eigen::Index>(k)) = model_.code_context(used[k]);
    }

    struct Frame {
      std::size_t node;
      SymbolString prefix;
      std::vector<std::size_t> alive;  // indices into `used`
      std::vector<double> partial;
    };
    std::vector<std::size_t> all(used.size());
    for (std::size_t k = 0; k < all.size(); ++k) all[k] = k;
    std::vector<Frame> stack;
    stack.push_back({0, {}, std::move(all), std::vector<double>(used.size(), 0.0)});

    while (!stack.empty()) {
      Frame frame = std::move(stack.back());
      stack.pop_back();
      const Node& node = trie[frame.node];
      for (const std::size_t w : node.words_ending) {
        for (std::size_t a = 0; a < frame.alive.size(); ++a) {
          const Triplet& t = used[frame.alive[a]];
          const double lp = frame.partial[a];
          if (lp > out[w].logprob || (lp == out[w].logprob && t < out[w].triplet)) out[w] = {t, lp};
        }
      }
      if (node.children.empty() || frame.alive.empty()) continue;

      const Matrix lp = step(contexts, frame.alive, frame.prefix);
      for (const auto& [symbol, child] : node.children) {
        Frame next{child, frame.prefix, {}, {}};
        next.prefix.push_back(symbol);
        for (std::size_t a = 0; a < frame.alive.size(); ++a) {
          const double score = frame.partial[a] + lp(static_cast<Eigen::Index>(a), symbol);
          if (score >= trie[child].floor) {
            next.alive.push_back(frame.alive[a]);
            next.partial.push_back(score);
          }
        }
        stack.push_back(std::move(next));
      }
    }
    return out;
  }

 private:
  Matrix step(const Matrix& contexts, const std::vector<std::size_t>& alive,
              const SymbolString& prefix) const {
    const ModelConfig& config = model_.config();
    Matrix pre(static_cast<Eigen::Index>(alive.size()), config.hidden_dim);
    for (std::size_t a = 0; a < alive.size(); ++a) {
      pre.row(static_cast<Eigen::Index>(a)) = contexts.row(static_cast<Eigen::Index>(alive[a]));
    }
    return model_.next_logprobs_batch(pre, prefix);
  }

  const Autoencoder& model_;
};

namespace detail {

inline std::vector<BoundedWord> fallback_subwords() {
  std::vector<BoundedWord> out;
  for (int b = 0; b < 256; ++b) {
    for (int flags = 0; flags < 4; ++flags) {
      out.push_back({std::string(1, static_cast<char>(b)), (flags & 1) != 0, (flags & 2) != 0});
    }
  }
  return out;
}

}  // namespace detail

/// Static vocabulary from a decoder: every used triplet is decoded to its
/// most likely subword, every distinct subword is then re-assigned the used
/// triplet that maximizes its likelihood, triplet collisions keep the more
/// likely subword, and missing single-byte subwords (all four marker
/// variants) are injected with the lowest log-probability minus one on
/// unclaimed triplets.
template <typename Decoder>
Vocabulary build_vocabulary(const Decoder& decoder, std::span<const Triplet> used, int codebook_size,
                            VocabularyBuildReport* report = nullptr) {
  if (used.empty()) throw Error("build_vocabulary: the checkpoint has no used triplets");
  VocabularyBuildReport local;
  VocabularyBuildReport& rep = report != nullptr ? *report : local;
  rep = {};
  rep.used_triplets = used.size();

  std::vector<Triplet> sorted_used(used.begin(), used.end());
  std::sort(sorted_used.begin(), sorted_used.end());

  // Decode every used triplet; keep the best decoding triplet per subword as a seed.
  std::vector<BoundedWord> words;
  std::vector<BestCode> seeds;
  std::unordered_map<std::string, std::size_t> word_index;
  for (const Triplet& t : sorted_used) {
    const DecodeResult d = decoder.decode(t);
    if (!d.terminated || d.word.bytes.empty()) {
      ++rep.unterminated;
      continue;
    }
    const auto [it, inserted] = word_index.try_emplace(detail::subword_key(d.word), words.size());
    if (inserted) {
      words.push_back(d.word);
      seeds.push_back({t, d.logprob});
    } else {
      ++rep.duplicate_decodes;
      if (d.logprob > seeds[it->second].logprob) seeds[it->second] = {t, d.logprob};
    }
  }
  if (words.empty()) throw Error("build_vocabulary: no triplet decoded to a terminated subword");
  rep.distinct_subwords = words.size();

  std::vector<BestCode> best;
  if constexpr (requires { decoder.best_codes(words, sorted_used, seeds); }) {
    best = decoder.best_codes(words, sorted_used, seeds);
  } else {
    best = best_codes_by_scan(decoder, std::span<const BoundedWord>(words), sorted_used, seeds);
  }

  // Collision pruning: one subword per triplet, the most likely one wins.
  std::map<Triplet, std::size_t> owner;
  for (std::size_t i = 0; i < words.size(); ++i) {
    const auto [it, inserted] = owner.try_emplace(best[i].triplet, i);
    if (inserted) continue;
    const std::size_t other = it->second;
    const bool take = best[i].logprob > best[other].logprob ||
                      (best[i].logprob == best[other].logprob && words[i] < words[other]);
    const std::size_t kept = take ? i : other;
    const std::size_t dropped = take ? other : i;
    rep.collisions.push_back({words[dropped], words[kept], best[i].triplet, best[dropped].logprob,
                              best[kept].logprob});
    it->second = kept;
  }

  std::vector<VocabularyEntry> entries;
  std::unordered_map<std::string, bool> present;
  double min_logprob = 0.0;
  for (const auto& [triplet, i] : owner) {
    entries.push_back({words[i], triplet, best[i].logprob, false});
    present[detail::subword_key(words[i])] = true;
    min_logprob = std::min(min_logprob, best[i].logprob);
  }

  // Byte fallbacks on the lexicographically first unclaimed triplets.
  const double fallback_logprob = min_logprob - 1.0;
  const auto k = static_cast<std::uint32_t>(codebook_size);
  std::uint64_t cursor = 0;
  const std::uint64_t space = std::uint64_t{k} * k * k;
  for (const BoundedWord& fb : detail::fallback_subwords()) {
    if (present.contains(detail::subword_key(fb))) continue;
    Triplet t;
    for (;; ++cursor) {
      if (cursor >= space) throw Error("build_vocabulary: no unclaimed triplets left for byte fallbacks");
      t = {static_cast<std::uint16_t>(cursor / (k * k)), static_cast<std::uint16_t>((cursor / k) % k),
           static_cast<std::uint16_t>(cursor % k)};
      if (!owner.contains(t)) break;
    }
    ++cursor;
    entries.push_back({fb, t, fallback_logprob, true});
    ++rep.fallbacks;
  }
  return Vocabulary(codebook_size, std::move(entries));
}

inline std::vector<Triplet> used_triplets(const Checkpoint& ckpt) {
  std::vector<Triplet> out;
  for (const auto& [t, n] : ckpt.triplet_usage) {
    if (n > 0) out.push_back(t);
  }
  return out;
}

inline Vocabulary build_vocabulary(const Checkpoint& ckpt, VocabularyBuildReport* report = nullptr) {
  const Autoencoder model = ckpt.inference_model();
  const auto used = used_triplets(ckpt);
  return build_vocabulary(AutoencoderDecoder(model), std::span<const Triplet>(used),
                          ckpt.config.codebook_size, report);
}

// --- on-disk format --------------------------------------------------------
//
//   magic "FCTZVOCB", u32 version
//   u32 codebook_size, u64 entry count
//   entries in sorted order: u8 flags (1 = BOW, 2 = EOW, 4 = fallback),
//     varint byte length, bytes, triplet as 3 x u8 when codebook_size <= 256
//     else 3 x u16, f64 logprob
//   automaton: varint state count, then per state u8 final, varint transition
//     count, and (varint symbol delta, varint target) per transition

inline constexpr std::string_view kVocabularyMagic = "FCTZVOCB";
inline constexpr std::uint32_t kVocabularyVersion = 1;

inline std::string serialize_lexicon(const Lexicon& lex) {
  const Vocabulary& vocab = lex.vocabulary;
  io::Writer w;
  w.bytes(kVocabularyMagic);
  w.u32(kVocabularyVersion);
  w.u32(static_cast<std::uint32_t>(vocab.codebook_size()));
  w.u64(vocab.size());
  const bool wide = vocab.codebook_size() > 256;
  for (const auto& e : vocab.entries()) {
    w.u8(static_cast<std::uint8_t>((e.subword.bow ? 1 : 0) | (e.subword.eow ? 2 : 0) |
                                   (e.fallback ? 4 : 0)));
    w.string(e.subword.bytes);
    for (int c = 0; c < 3; ++c) {
      if (wide) {
        w.u16(e.triplet[c]);
      } else {
        w.u8(static_cast<std::uint8_t>(e.triplet[c]));
      }
    }
    w.f64(e.logprob);
  }
  lex.dawg.serialize(w);
  return w.buffer();
}

inline Lexicon deserialize_lexicon(std::string_view data) {
  io::Reader r(data);
  io::expect_header(r, kVocabularyMagic, kVocabularyVersion, "vocabulary");
  const auto k = r.u32();
  if (k < 2 || k > 65536) throw FormatError("vocabulary: bad codebook size");
  const auto count = r.u64();
  if (count > data.size()) throw FormatError("vocabulary: entry count exceeds file size");
  const bool wide = k > 256;
  std::vector<VocabularyEntry> entries;
  entries.reserve(static_cast<std::size_t>(count));
  for (std::uint64_t i = 0; i < count; ++i) {
    VocabularyEntry e;
    const auto flags = r.u8();
    if (flags > 7) throw FormatError("vocabulary: bad entry flags");
    e.subword.bow = (flags & 1) != 0;
    e.subword.eow = (flags & 2) != 0;
    e.fallback = (flags & 4) != 0;
    e.subword.bytes = r.string();
    std::array<std::uint16_t, 3> idx{};
    for (auto& v : idx) v = wide ? r.u16() : r.u8();
    e.triplet = {idx[0], idx[1], idx[2]};
    e.logprob = r.f64();
    entries.push_back(std::move(e));
  }
  Lexicon lex;
  try {
    lex.vocabulary = Vocabulary(static_cast<int>(k), std::move(entries));
  } catch (const PreconditionError& e) {
    throw FormatError(std::string("vocabulary: ") + e.what());
  }
  lex.dawg = SubwordDawg::deserialize(r);
  if (!r.at_end()) throw FormatError("vocabulary: trailing bytes after the automaton");

  const auto& vocab = lex.vocabulary;
  if (lex.dawg.word_count() != vocab.size()) {
    throw FormatError("vocabulary: automaton language size does not match the entry table");
  }
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    if (lex.dawg.index_of(vocab[i].subword.symbols()) != i) {
      throw FormatError("vocabulary: automaton does not index entry " + std::to_string(i));
    }
  }
  return lex;
}

inline void save_lexicon(const Lexicon& lex, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  const std::string data = serialize_lexicon(lex);
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError("failed writing '" + path + "'");
}

inline Lexicon load_lexicon(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  return deserialize_lexicon(io::read_all(in));
}

/// `subword<TAB>r,g,b<TAB>logprob` per entry, in entry order.
inline void write_vocabulary_tsv(const Vocabulary& vocab, std::ostream& out) {
  for (const auto& e : vocab.entries()) {
    out << to_display(e.subword) << '\t' << e.triplet.to_string() << '\t'
        << std::setprecision(17) << e.logprob << '\n';
  }
}

}  // namespace factorizer
