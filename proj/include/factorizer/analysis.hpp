#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "factorizer/bpe.hpp"
#include "factorizer/corpus.hpp"
#include "factorizer/error.hpp"
#include "factorizer/tokenizer.hpp"
#include "factorizer/utf8.hpp"
#include "factorizer/vocab.hpp"

namespace factorizer {

// --- splits per word -------------------------------------------------------

struct SplitsRow {
  double parameter = 0.0;  // alpha_split, or vocab size for BPE
  std::uint64_t words = 0;
  std::uint64_t pieces = 0;

  double mean() const { return words == 0 ? 0.0 : static_cast<double>(pieces) / static_cast<double>(words); }
};

/// Deterministic tokenization of every word in `words` for each alpha.
inline std::vector<SplitsRow> splits_per_word(const Lexicon& lex, std::span<const std::string> words,
                                              std::span<const double> alphas) {
  require(!words.empty(), "splits_per_word: empty corpus");
  std::vector<SplitsRow> rows;
  for (const double alpha : alphas) {
    ScoreParams params;
    params.alpha_split = alpha;
    SplitsRow row{alpha, 0, 0};
    for (const auto& w : words) {
      row.pieces += tokenize_word(BoundedWord::full(w), lex, params).pieces.size();
      ++row.words;
    }
    rows.push_back(row);
  }
  return rows;
}

/// BPE counterpart: one table per vocabulary size, trained on `training`.
inline std::vector<SplitsRow> bpe_splits_per_word(const WordFrequencyList& training,
                                                  std::span<const std::string> words,
                                                  std::span<const std::size_t> vocab_sizes) {
  require(!words.empty(), "splits_per_word: empty corpus");
  std::vector<SplitsRow> rows;
  for (const std::size_t size : vocab_sizes) {
    const MergeTable table = train_bpe(training, size);
    SplitsRow row{static_cast<double>(size), 0, 0};
    for (const auto& w : words) {
      row.pieces += encode_bpe_ids(BoundedWord::full(w), table).size();
      ++row.words;
    }
    rows.push_back(row);
  }
  return rows;
}

inline void write_splits_csv(std::span<const SplitsRow> rows, std::string_view parameter_name,
                             std::ostream& out) {
  out << parameter_name << ",words,pieces,mean_pieces\n";
  for (const auto& r : rows) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", r.mean());
    out << r.parameter << ',' << r.words << ',' << r.pieces << ',' << buf << '\n';
  }
}

// --- index histograms ------------------------------------------------------

/// Shannon entropy of `counts` divided by ln(support); 0 for support <= 1.
inline double normalized_entropy(std::span<const std::uint64_t> counts, std::size_t support) {
  std::uint64_t total = 0;
  for (const auto c : counts) total += c;
  if (total == 0 || support <= 1) return 0.0;
  double h = 0.0;
  for (const auto c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / static_cast<double>(total);
    h -= p * std::log(p);
  }
  return h / std::log(static_cast<double>(support));
}

struct IndexHistogram {
  std::vector<std::vector<std::uint64_t>> counts;  // per channel
  std::vector<double> normalized_entropy;          // per channel
  std::uint64_t pieces = 0;
};

/// Per-channel counts of R, G and B indices over the deterministic
/// tokenization of `words`; entropies are normalized by ln K.
inline IndexHistogram index_histogram(const Lexicon& lex, std::span<const std::string> words,
                                      const ScoreParams& params = {}) {
  const auto k = static_cast<std::size_t>(lex.vocabulary.codebook_size());
  IndexHistogram h;
  h.counts.assign(3, std::vector<std::uint64_t>(k, 0));
  for (const auto& w : words) {
    for (const auto& p : tokenize_word(BoundedWord::full(w), lex, params).pieces) {
      for (int c = 0; c < 3; ++c) ++h.counts[static_cast<std::size_t>(c)][p.triplet[c]];
      ++h.pieces;
    }
  }
  for (const auto& channel : h.counts) h.normalized_entropy.push_back(normalized_entropy(channel, k));
  return h;
}

/// Token-id counts for BPE; entropy normalized by ln of the table's token count.
inline IndexHistogram bpe_index_histogram(const MergeTable& table, std::span<const std::string> words) {
  IndexHistogram h;
  h.counts.assign(1, std::vector<std::uint64_t>(table.token_count(), 0));
  for (const auto& w : words) {
    for (const auto id : encode_bpe_ids(BoundedWord::full(w), table)) {
      ++h.counts[0][id];
      ++h.pieces;
    }
  }
  h.normalized_entropy.push_back(normalized_entropy(h.counts[0], table.token_count()));
  return h;
}

inline void write_histogram_csv(const IndexHistogram& h, std::ostream& out) {
  out << "channel,index,count\n";
  for (std::size_t c = 0; c < h.counts.size(); ++c) {
    for (std::size_t i = 0; i < h.counts[c].size(); ++i) {
      if (h.counts[c][i] != 0) out << c << ',' << i << ',' << h.counts[c][i] << '\n';
    }
  }
}

// --- character noise -------------------------------------------------------

enum NoiseOp : unsigned { kNoiseDelete = 1, kNoiseCase = 2, kNoiseRepeat = 4, kNoiseAll = 7 };

struct NoiseConfig {
  double p_noise = 0.0;
  std::uint64_t seed = 0;
  unsigned ops = kNoiseAll;  // subset drawn from uniformly

  void validate() const {
    require(p_noise >= 0.0 && p_noise <= 1.0, "p_noise must lie in [0, 1]");
    require(ops != 0 && (ops & ~unsigned{kNoiseAll}) == 0, "noise: bad operation mask");
  }
};

struct NoiseStats {
  std::uint64_t characters = 0;
  std::uint64_t perturbed = 0;
  std::array<std::uint64_t, 3> by_op{};  // delete, case, repeat
};

/// Opposite-case scalar for ASCII, Latin-1, Latin Extended-A, Greek and
/// Cyrillic letters; other scalars map to themselves.
inline char32_t flip_case(char32_t c) {
  if (c < 0x80) {
    if (c >= 'a' && c <= 'z') return c - 32;
    if (c >= 'A' && c <= 'Z') return c + 32;
    return c;
  }
  if (c >= 0xC0 && c <= 0xDE && c != 0xD7) return c + 32;
  if (c >= 0xE0 && c <= 0xFE && c != 0xF7) return c - 32;
  if (c == 0xFF) return 0x178;
  if (c == 0x178) return 0xFF;
  if (c >= 0x100 && c <= 0x17F) {
    if (c == 0x130 || c == 0x131 || c == 0x138 || c == 0x149 || c == 0x17F) return c;
    const bool odd_upper = (c >= 0x139 && c <= 0x148) || (c >= 0x179 && c <= 0x17E);
    const bool upper = odd_upper ? (c % 2 == 1) : (c % 2 == 0);
    return upper ? c + 1 : c - 1;
  }
  if (c >= 0x391 && c <= 0x3A9 && c != 0x3A2) return c + 32;
  if (c >= 0x3B1 && c <= 0x3C9 && c != 0x3C2) return c - 32;
  if (c >= 0x410 && c <= 0x42F) return c + 32;
  if (c >= 0x430 && c <= 0x44F) return c - 32;
  if (c >= 0x400 && c <= 0x40F) return c + 80;
  if (c >= 0x450 && c <= 0x45F) return c - 80;
  return c;
}

/// Perturbs each Unicode scalar with probability p_noise by deleting it,
/// flipping its case, or repeating it 1-3 extra times. Invalid bytes are
/// read as U+FFFD, so the output is always valid UTF-8.
template <typename Rng>
std::string perturb(std::string_view text, const NoiseConfig& config, Rng& rng, NoiseStats* stats = nullptr) {
  config.validate();
  std::vector<unsigned> ops;
  for (const unsigned op : {kNoiseDelete, kNoiseCase, kNoiseRepeat}) {
    if ((config.ops & op) != 0) ops.push_back(op);
  }
  std::bernoulli_distribution hit(config.p_noise);
  std::uniform_int_distribution<std::size_t> pick(0, ops.size() - 1);
  std::uniform_int_distribution<int> repeats(1, 3);
  NoiseStats local;
  NoiseStats& st = stats != nullptr ? *stats : local;

  std::string out;
  out.reserve(text.size());
  for (std::size_t pos = 0; pos < text.size();) {
    const auto d = utf8::decode(text, pos);
    pos += d.length;
    const char32_t c = d.valid ? d.scalar : U'�';
    ++st.characters;
    if (!hit(rng)) {
      utf8::append(out, c);
      continue;
    }
    ++st.perturbed;
    const unsigned op = ops[pick(rng)];
    if (op == kNoiseDelete) {
      ++st.by_op[0];
    } else if (op == kNoiseCase) {
      ++st.by_op[1];
      utf8::append(out, flip_case(c));
    } else {
      ++st.by_op[2];
      const int extra = repeats(rng);
      for (int k = 0; k <= extra; ++k) utf8::append(out, c);
    }
  }
  return out;
}

// --- colors ----------------------------------------------------------------

/// `#RRGGBB` for a triplet; channels are scaled to 0..255 when K > 256.
inline std::string triplet_color(const Triplet& t, int codebook_size) {
  auto channel = [&](std::uint16_t v) -> unsigned {
    if (codebook_size <= 256) return v;
    return static_cast<unsigned>(std::lround(static_cast<double>(v) * 255.0 / (codebook_size - 1)));
  };
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02X%02X%02X", channel(t.r), channel(t.g), channel(t.b));
  return buf;
}

struct ColorReport {
  struct Row {
    std::string subword;  // display form
    Triplet triplet;
    std::string color;
  };
  std::vector<std::vector<Row>> words;
  std::string warning;  // set when channels were scaled

  std::string html() const {
    std::string out = "<div class=\"factorizer-colors\">\n";
    for (const auto& word : words) {
      out += "<p>";
      for (const auto& r : word) {
        out += "<span style=\"background-color:" + r.color + "\" title=\"" + r.triplet.to_string() + "\">";
        for (const char ch : r.subword) {
          switch (ch) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            case '\'': out += "&#39;"; break;
            default: out.push_back(ch);
          }
        }
        out += "</span>";
      }
      out += "</p>\n";
    }
    out += "</div>\n";
    return out;
  }

  std::string table() const {
    std::string out = "subword\ttriplet\tcolor\n";
    for (const auto& word : words) {
      for (const auto& r : word) out += r.subword + '\t' + r.triplet.to_string() + '\t' + r.color + '\n';
    }
    return out;
  }
};

inline ColorReport colorize(std::span<const Tokenization> stream, int codebook_size) {
  ColorReport report;
  if (codebook_size > 256) {
    report.warning = "codebook size " + std::to_string(codebook_size) + " exceeds 256; colors are scaled to 8 bits";
  }
  for (const auto& t : stream) {
    auto& rows = report.words.emplace_back();
    for (const auto& p : t.pieces) {
      rows.push_back({to_display(p.subword), p.triplet, triplet_color(p.triplet, codebook_size)});
    }
  }
  return report;
}

}  // namespace factorizer
