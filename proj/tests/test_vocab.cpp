#include <gtest/gtest.h>

#include <filesystem>
#include <map>
#include <random>
#include <sstream>

#include "factorizer/vocab.hpp"

namespace fz = factorizer;

namespace {

// Table-driven decoder: decode() reads `decodes`, logprob() reads `scores`
// and falls back to a fixed low value.
struct FakeDecoder {
  std::map<fz::Triplet, fz::DecodeResult> decodes;
  std::map<std::pair<fz::Triplet, fz::BoundedWord>, double> scores;
  double unknown = -40.0;

  fz::DecodeResult decode(const fz::Triplet& t) const {
    const auto it = decodes.find(t);
    return it == decodes.end() ? fz::DecodeResult{} : it->second;
  }

  double logprob(const fz::Triplet& t, const fz::BoundedWord& w, double) const {
    const auto it = scores.find({t, w});
    return it == scores.end() ? unknown : it->second;
  }

  void emit(fz::Triplet t, fz::BoundedWord w, double lp) {
    decodes[t] = {w, lp, true};
    scores[{t, w}] = lp;
  }
};

fz::Triplet T(int r, int g, int b) { return fz::make_triplet({r, g, b}); }

std::vector<fz::Triplet> keys(const FakeDecoder& d) {
  std::vector<fz::Triplet> out;
  for (const auto& [t, r] : d.decodes) out.push_back(t);
  return out;
}

fz::ModelConfig small_config() {
  fz::ModelConfig c;
  c.codebook_size = 4;
  c.latent_dim = 3;
  c.hidden_dim = 5;
  c.context_width = 2;
  c.encoder_embedding_dim = 4;
  c.decoder_embedding_dim = 3;
  c.encoder_positions = 4;
  c.max_word_length = 10;
  c.beam_width = 3;
  return c;
}

}  // namespace

TEST(BuildVocabulary, InjectiveDecoderKeepsEverySubword) {
  FakeDecoder d;
  d.emit(T(0, 0, 1), fz::BoundedWord::full("ab"), -1.0);
  d.emit(T(0, 1, 0), fz::BoundedWord{"c", true, false}, -2.0);
  d.emit(T(1, 1, 1), fz::BoundedWord{"de", false, false}, -0.5);
  const auto used = keys(d);
  fz::VocabularyBuildReport report;
  const auto vocab = fz::build_vocabulary(d, used, 16, &report);
  EXPECT_EQ(report.used_triplets, 3u);
  EXPECT_EQ(report.distinct_subwords, 3u);
  EXPECT_TRUE(report.collisions.empty());
  ASSERT_NE(vocab.find(fz::BoundedWord::full("ab")), nullptr);
  EXPECT_EQ(vocab.find(fz::BoundedWord::full("ab"))->triplet, T(0, 0, 1));
  EXPECT_EQ(vocab.find(T(1, 1, 1))->subword, (fz::BoundedWord{"de", false, false}));
  EXPECT_EQ(vocab.find(T(1, 1, 1))->logprob, -0.5);
  // 1024 byte variants, one of which ("c" with BOW) came from the decoder.
  EXPECT_EQ(report.fallbacks, 1023u);
  EXPECT_EQ(vocab.size(), 3u + 1023u);
}

TEST(BuildVocabulary, DuplicateDecodesCollapseToTheLikelierTriplet) {
  FakeDecoder d;
  const auto w = fz::BoundedWord::full("xy");
  d.emit(T(0, 0, 0), w, -3.0);
  d.emit(T(2, 0, 0), w, -1.5);
  d.emit(T(3, 3, 3), fz::BoundedWord::full("z"), -0.1);
  fz::VocabularyBuildReport report;
  const auto vocab = fz::build_vocabulary(d, keys(d), 16, &report);
  EXPECT_EQ(report.duplicate_decodes, 1u);
  EXPECT_EQ(report.distinct_subwords, 2u);
  const auto* e = vocab.find(w);
  ASSERT_NE(e, nullptr);
  EXPECT_EQ(e->triplet, T(2, 0, 0));
  EXPECT_EQ(e->logprob, -1.5);
  // The losing triplet is free again and goes to a byte fallback.
  ASSERT_NE(vocab.find(T(0, 0, 0)), nullptr);
  EXPECT_TRUE(vocab.find(T(0, 0, 0))->fallback);
}

TEST(BuildVocabulary, ArgmaxCollisionKeepsHigherLogprobAndLogsIt) {
  FakeDecoder d;
  const auto a = fz::BoundedWord::full("aa");
  const auto b = fz::BoundedWord::full("bb");
  d.emit(T(0, 0, 1), a, -2.0);
  d.emit(T(0, 0, 2), b, -2.0);
  // Both subwords score best on (0,0,1).
  d.scores[{T(0, 0, 2), a}] = -5.0;
  d.scores[{T(0, 0, 1), b}] = -1.0;
  fz::VocabularyBuildReport report;
  const auto vocab = fz::build_vocabulary(d, keys(d), 16, &report);
  ASSERT_EQ(report.collisions.size(), 1u);
  const auto& c = report.collisions[0];
  EXPECT_EQ(c.kept, b);
  EXPECT_EQ(c.dropped, a);
  EXPECT_EQ(c.triplet, T(0, 0, 1));
  EXPECT_EQ(c.kept_logprob, -1.0);
  EXPECT_EQ(c.dropped_logprob, -2.0);
  EXPECT_EQ(vocab.find(T(0, 0, 1))->subword, b);
  EXPECT_EQ(vocab.find(a), nullptr);
}

TEST(BuildVocabulary, FallbacksCoverEveryByteOnUnclaimedTriplets) {
  FakeDecoder d;
  d.emit(T(0, 0, 0), fz::BoundedWord::full("hello"), -4.0);
  d.emit(T(0, 0, 2), fz::BoundedWord::full("w"), -0.25);
  const auto vocab = fz::build_vocabulary(d, keys(d), 16, nullptr);
  EXPECT_TRUE(vocab.covers_all_bytes());
  std::set<fz::Triplet> seen;
  for (const auto& e : vocab.entries()) {
    EXPECT_TRUE(seen.insert(e.triplet).second);
    if (e.fallback) {
      EXPECT_EQ(e.subword.bytes.size(), 1u);
      EXPECT_EQ(e.logprob, -5.0);
    }
  }
  // The first fallback (byte 0, no markers) takes the first free triplet.
  const auto* zero = vocab.find(fz::BoundedWord{std::string(1, '\0'), false, false});
  ASSERT_NE(zero, nullptr);
  EXPECT_EQ(zero->triplet, T(0, 0, 1));
  EXPECT_EQ(vocab.find(fz::BoundedWord{std::string(1, '\0'), true, false})->triplet, T(0, 0, 3));
}

TEST(BuildVocabulary, Errors) {
  FakeDecoder d;
  EXPECT_THROW(fz::build_vocabulary(d, std::vector<fz::Triplet>{}, 4), fz::Error);
  // Nothing terminates.
  EXPECT_THROW(fz::build_vocabulary(d, std::vector<fz::Triplet>{T(0, 0, 0)}, 4), fz::Error);
  // K = 2 leaves 8 triplets, far short of the 1024 fallbacks.
  FakeDecoder small;
  small.emit(T(0, 0, 0), fz::BoundedWord::full("q"), -1.0);
  EXPECT_THROW(fz::build_vocabulary(small, keys(small), 2), fz::Error);
}

TEST(BuildVocabulary, BatchedArgmaxMatchesScan) {
  const auto c = small_config();
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 5; ++trial) {
    auto params = fz::Parameters::initialize(c, rng);
    // Favor stopping so that most codes decode to a terminated subword.
    params[fz::kOutB](0, fz::kPad) = 1.5;
    params[fz::kOutB](0, fz::kEow) = 1.5;
    auto books = fz::make_codebooks(c);
    std::normal_distribution<double> normal;
    for (auto& b : books) {
      for (Eigen::Index i = 0; i < b.vectors.size(); ++i) b.vectors.data()[i] = normal(rng);
    }
    const fz::Autoencoder model(c, params, books);
    const fz::AutoencoderDecoder decoder(model);
    std::vector<fz::Triplet> used;
    for (int r = 0; r < 4; ++r) {
      for (int g = 0; g < 4; ++g) {
        for (int b = 0; b < 4; ++b) used.push_back(T(r, g, b));
      }
    }
    std::vector<fz::BoundedWord> words;
    std::vector<fz::BestCode> seeds;
    for (const auto& t : used) {
      const auto d = decoder.decode(t);
      if (!d.terminated) continue;
      if (std::find(words.begin(), words.end(), d.word) != words.end()) continue;
      words.push_back(d.word);
      seeds.push_back({t, d.logprob});
    }
    ASSERT_FALSE(words.empty());
    const auto fast = decoder.best_codes(words, used, seeds);
    // Exhaustive oracle without any pruning.
    for (std::size_t i = 0; i < words.size(); ++i) {
      fz::BestCode want{used[0], model.decode_logprob(used[0], words[i])};
      for (const auto& t : used) {
        const double lp = model.decode_logprob(t, words[i]);
        if (lp > want.logprob) want = {t, lp};
      }
      EXPECT_EQ(fast[i].triplet, want.triplet) << fz::to_display(words[i]);
      EXPECT_NEAR(fast[i].logprob, want.logprob, 1e-9);
    }
  }
}

TEST(Vocabulary, RejectsInvalidEntries) {
  const auto w = fz::BoundedWord::full("a");
  EXPECT_THROW(fz::Vocabulary(4, {{w, T(0, 0, 0), -1.0, false}, {w, T(0, 0, 1), -1.0, false}}),
               fz::PreconditionError);
  EXPECT_THROW(fz::Vocabulary(4, {{w, T(0, 0, 0), -1.0, false},
                                  {fz::BoundedWord::full("b"), T(0, 0, 0), -1.0, false}}),
               fz::PreconditionError);
  EXPECT_THROW(fz::Vocabulary(4, {{w, T(0, 0, 4), -1.0, false}}), fz::PreconditionError);
  EXPECT_THROW(fz::Vocabulary(4, {{w, T(0, 0, 0), 0.5, false}}), fz::PreconditionError);
  EXPECT_THROW(fz::Vocabulary(4, {{fz::BoundedWord{"", true, true}, T(0, 0, 0), -1.0, false}}),
               fz::PreconditionError);
}

TEST(LexiconFormat, RoundTripAndRejections) {
  FakeDecoder d;
  d.emit(T(1, 2, 3), fz::BoundedWord::full("hello"), -4.0);
  d.emit(T(3, 2, 1), fz::BoundedWord{"lo", false, true}, -1.25);
  const auto lex = fz::Lexicon::compile(fz::build_vocabulary(d, keys(d), 16));
  const auto bytes = fz::serialize_lexicon(lex);
  const auto back = fz::deserialize_lexicon(bytes);
  EXPECT_EQ(back.vocabulary, lex.vocabulary);
  EXPECT_EQ(back.dawg.language(), lex.dawg.language());

  auto bad_version = bytes;
  bad_version[8] = 7;
  try {
    fz::deserialize_lexicon(bad_version);
    FAIL();
  } catch (const fz::FormatError& e) {
    EXPECT_NE(std::string(e.what()).find('7'), std::string::npos);
  }
  EXPECT_THROW(fz::deserialize_lexicon(bytes.substr(0, bytes.size() - 1)), fz::FormatError);
  EXPECT_THROW(fz::deserialize_lexicon(bytes + "x"), fz::FormatError);
  EXPECT_THROW(fz::deserialize_lexicon("FCTZVOCX"), fz::FormatError);

  const auto path = (std::filesystem::temp_directory_path() / "fz_test_vocab.bin").string();
  fz::save_lexicon(lex, path);
  EXPECT_EQ(fz::load_lexicon(path).vocabulary, lex.vocabulary);
  std::filesystem::remove(path);
  EXPECT_THROW(fz::load_lexicon(path), fz::IoError);
}

TEST(LexiconFormat, WideCodebooksUseSixteenBitIndices) {
  const fz::Vocabulary vocab(300, {{fz::BoundedWord::full("a"), T(299, 0, 257), -1.0, false}});
  const auto lex = fz::Lexicon::compile(vocab);
  EXPECT_EQ(fz::deserialize_lexicon(fz::serialize_lexicon(lex)).vocabulary, vocab);
}

TEST(VocabularyTsv, OneLinePerEntry) {
  const fz::Vocabulary vocab(16, {{fz::BoundedWord::full("ab"), T(1, 2, 3), -0.5, false},
                                  {fz::BoundedWord{"c d", false, false}, T(0, 0, 1), -2.0, true}});
  std::ostringstream out;
  fz::write_vocabulary_tsv(vocab, out);
  EXPECT_EQ(out.str(), "c\\x20d\t0,0,1\t-2\n\xE2\x90\xA3" "ab\xE2\x90\xA3\t1,2,3\t-0.5\n");
}
