// Command-line front end. Exit codes: 0 success, 1 domain error (coverage,
// divergence, unknown triplet), 2 usage or I/O error.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "factorizer/factorizer.hpp"

namespace fz = factorizer;
using nlohmann::json;

namespace {

constexpr std::uint64_t kDefaultSeed = 42;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// "-" means stdin / stdout.
class Input {
 public:
  explicit Input(const std::string& path) {
    if (path == "-") {
      stream_ = &std::cin;
      return;
    }
    file_ = std::make_unique<std::ifstream>(path, std::ios::binary);
    if (!*file_) throw fz::IoError("cannot open '" + path + "'");
    stream_ = file_.get();
  }
  std::istream& get() { return *stream_; }

 private:
  std::unique_ptr<std::ifstream> file_;
  std::istream* stream_ = nullptr;
};

class Output {
 public:
  explicit Output(const std::string& path) : path_(path) {
    if (path == "-") {
      stream_ = &std::cout;
      return;
    }
    file_ = std::make_unique<std::ofstream>(path, std::ios::binary);
    if (!*file_) throw fz::IoError("cannot open '" + path + "' for writing");
    stream_ = file_.get();
  }
  std::ostream& get() { return *stream_; }
  void finish() {
    stream_->flush();
    if (!*stream_) throw fz::IoError("failed writing '" + path_ + "'");
  }

 private:
  std::string path_;
  std::unique_ptr<std::ofstream> file_;
  std::ostream* stream_ = nullptr;
};

std::string read_input(const std::string& path) {
  Input in(path);
  return fz::io::read_all(in.get());
}

fz::WordFrequencyList read_frequencies(const std::string& path) {
  Input in(path);
  return fz::read_tsv(in.get());
}

// Paths are checked before any work starts; "-" is always accepted.
const CLI::Validator kReadable(
    [](std::string& path) -> std::string {
      if (path == "-") return {};
      std::ifstream probe(path, std::ios::binary);
      return probe ? std::string() : "cannot open input '" + path + "'";
    },
    "PATH");

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw UsageError("bad grid value '" + item + "'");
    }
  }
  if (out.empty()) throw UsageError("empty grid");
  return out;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json tokenization_json(const fz::Tokenization& t) {
  json pieces = json::array();
  for (const auto& p : t.pieces) {
    pieces.push_back({{"subword", fz::to_display(p.subword)},
                      {"triplet", {p.triplet.r, p.triplet.g, p.triplet.b}},
                      {"score", p.score}});
  }
  return {{"pieces", pieces}, {"total_score", t.total_score}};
}

// --- subcommands -----------------------------------------------------------

struct FreqArgs {
  std::string input = "-";
  std::string output = "-";
};

void run_freq(const FreqArgs& a) {
  Input in(a.input);
  const auto list = fz::extract_frequencies(in.get());
  Output out(a.output);
  fz::write_tsv(list, out.get());
  out.finish();
}

struct TrainArgs {
  std::string input;
  std::string output;
  std::string resume;
  std::uint64_t seed = kDefaultSeed;
  long log_every = 100;
  std::optional<long> steps;
  fz::ModelConfig config;
  std::string optimizer = "adam";
};

void run_train(TrainArgs a) {
  const auto list = read_frequencies(a.input);
  fz::Checkpoint ckpt;
  if (!a.resume.empty()) {
    ckpt = fz::load_checkpoint(a.resume);
    if (a.steps) ckpt.config.steps = *a.steps;
  } else {
    if (a.steps) a.config.steps = *a.steps;
    a.config.optimizer = a.optimizer == "sgd" ? fz::OptimizerKind::kSgd : fz::OptimizerKind::kAdam;
    ckpt = fz::initialize_checkpoint(a.config, a.seed);
  }

  fz::TrainOptions options;
  options.log_every = a.log_every;
  options.on_warning = [](const std::string& msg) { std::cerr << "warning: " << msg << '\n'; };
  options.on_progress = [](const fz::TrainingProgress& p) {
    std::fprintf(stderr,
                 "step %ld loss %.6f reconstruction %.6f commitment %.6f lr %.3g usage-entropy %.4f/%.4f/%.4f "
                 "resets %d\n",
                 p.step, p.loss, p.reconstruction, p.commitment, p.learning_rate, p.usage_entropy[0],
                 p.usage_entropy[1], p.usage_entropy[2], p.resets);
  };
  if (ckpt.step < ckpt.config.steps) {
    try {
      fz::train_steps(ckpt, list, ckpt.config.steps, options);
    } catch (const fz::DivergenceError&) {
      const std::string dump = a.output + ".diverged";
      fz::save_checkpoint(ckpt, dump);
      std::cerr << "diagnostic checkpoint written to " << dump << '\n';
      throw;
    }
  }
  fz::save_checkpoint(ckpt, a.output);
}

struct BuildVocabArgs {
  std::string checkpoint;
  std::string output;
  std::string tsv;
};

void run_build_vocab(const BuildVocabArgs& a) {
  const auto ckpt = fz::load_checkpoint(a.checkpoint);
  fz::VocabularyBuildReport report;
  auto lex = fz::Lexicon::compile(fz::build_vocabulary(ckpt, &report));
  for (const auto& c : report.collisions) {
    std::cerr << "collision on " << c.triplet.to_string() << ": kept " << fz::to_display(c.kept) << " ("
              << format_double(c.kept_logprob) << "), dropped " << fz::to_display(c.dropped) << " ("
              << format_double(c.dropped_logprob) << ")\n";
  }
  std::cerr << "used triplets " << report.used_triplets << ", distinct subwords " << report.distinct_subwords
            << ", unterminated " << report.unterminated << ", collisions " << report.collisions.size()
            << ", byte fallbacks " << report.fallbacks << ", entries " << lex.vocabulary.size() << ", states "
            << lex.dawg.state_count() << '\n';
  fz::save_lexicon(lex, a.output);
  if (!a.tsv.empty()) {
    Output out(a.tsv);
    fz::write_vocabulary_tsv(lex.vocabulary, out.get());
    out.finish();
  }
}

void run_vocab_info(const std::string& path) {
  const auto lex = fz::load_lexicon(path);
  std::size_t fallbacks = 0;
  for (const auto& e : lex.vocabulary.entries()) fallbacks += e.fallback ? 1 : 0;
  std::cout << "codebook_size " << lex.vocabulary.codebook_size() << '\n'
            << "entries " << lex.vocabulary.size() << '\n'
            << "fallback_entries " << fallbacks << '\n'
            << "dawg_states " << lex.dawg.state_count() << '\n'
            << "dawg_transitions " << lex.dawg.transition_count() << '\n';
}

void run_vocab_export(const std::string& path, const std::string& output) {
  const auto lex = fz::load_lexicon(path);
  Output out(output);
  fz::write_vocabulary_tsv(lex.vocabulary, out.get());
  out.finish();
}

struct TokenizeArgs {
  std::string vocab;
  std::string input = "-";
  std::string output = "-";
  double alpha = 0.1;
  std::optional<double> sigma;
  std::size_t samples = 1;
  std::uint64_t seed = kDefaultSeed;
  std::string format = "text";
};

void run_tokenize(const TokenizeArgs& a) {
  const auto lex = fz::load_lexicon(a.vocab);
  if (a.samples == 0) throw UsageError("--samples must be at least 1");
  fz::ScoreParams params;
  params.alpha_split = a.alpha;
  if (a.sigma || a.samples > 1) {
    params.mode = fz::ScoreMode::kSampling;
    params.sigma_sample = a.sigma.value_or(0.02);
  }
  try {
    params.validate();
  } catch (const fz::PreconditionError& e) {
    throw UsageError(e.what());
  }
  std::mt19937_64 rng(a.seed);
  const bool wide = lex.vocabulary.codebook_size() > 256;

  Input in(a.input);
  Output out(a.output);
  std::ostream& os = out.get();
  if (a.format == "tsv") os << "line\tsample\tword\tpiece\tsubword\ttriplet\tscore\n";
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in.get(), line)) {
    ++line_no;
    for (std::size_t s = 0; s < a.samples; ++s) {
      const auto words = fz::tokenize_text(line, lex, params, &rng);
      if (a.format == "text") {
        for (const auto& t : words) os << fz::format_pieces(t) << '\n';
      } else if (a.format == "json") {
        json j = {{"line", line_no}, {"sample", s}, {"words", json::array()}};
        for (const auto& t : words) j["words"].push_back(tokenization_json(t));
        os << j.dump() << '\n';
      } else if (a.format == "tsv") {
        for (std::size_t w = 0; w < words.size(); ++w) {
          for (std::size_t p = 0; p < words[w].pieces.size(); ++p) {
            const auto& piece = words[w].pieces[p];
            os << line_no << '\t' << s << '\t' << w << '\t' << p << '\t' << fz::to_display(piece.subword) << '\t'
               << piece.triplet.to_string() << '\t' << format_double(piece.score) << '\n';
          }
        }
      } else {
        fz::io::Writer w;
        for (const auto& t : words) {
          for (const auto& p : t.pieces) {
            for (int c = 0; c < 3; ++c) {
              if (wide) {
                w.u16(p.triplet[c]);
              } else {
                w.u8(static_cast<std::uint8_t>(p.triplet[c]));
              }
            }
          }
        }
        os.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
      }
    }
    if (a.format != "binary") os.flush();
  }
  out.finish();
}

// Tokens are `r,g,b` or `subword:r,g,b`; one output line per input line.
std::vector<fz::Triplet> parse_triplets(const std::string& line, std::size_t line_no) {
  std::vector<fz::Triplet> out;
  std::istringstream ss(line);
  std::string token;
  while (ss >> token) {
    const auto colon = token.rfind(':');
    const std::string spec = colon == std::string::npos ? token : token.substr(colon + 1);
    std::array<int, 3> idx{};
    char c1 = 0;
    char c2 = 0;
    std::istringstream ts(spec);
    if (!(ts >> idx[0] >> c1 >> idx[1] >> c2 >> idx[2]) || c1 != ',' || c2 != ',' || !ts.eof() ||
        idx[0] < 0 || idx[1] < 0 || idx[2] < 0 || idx[0] > 65535 || idx[1] > 65535 || idx[2] > 65535) {
      throw fz::FormatError("line " + std::to_string(line_no) + ": bad triplet '" + token + "'");
    }
    out.push_back(fz::make_triplet(idx));
  }
  return out;
}

void run_detokenize(const std::string& vocab, const std::string& input) {
  const auto lex = fz::load_lexicon(vocab);
  Input in(input);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in.get(), line)) {
    ++line_no;
    const auto triplets = parse_triplets(line, line_no);
    std::cout << fz::detokenize(triplets, lex.vocabulary) << '\n';
  }
}

void run_bpe_train(const std::string& input, std::size_t vocab_size, const std::string& output) {
  const auto list = read_frequencies(input);
  fz::MergeTable table;
  try {
    table = fz::train_bpe(list, vocab_size);
  } catch (const fz::PreconditionError& e) {
    throw UsageError(e.what());
  }
  if (table.size() < vocab_size - 256) {
    std::cerr << "warning: only " << table.size() << " merges possible on this corpus\n";
  }
  Output out(output);
  fz::write_merges(table, out.get());
  out.finish();
}

void run_bpe_encode(const std::string& merges, const std::string& input, double dropout, std::uint64_t seed) {
  if (dropout < 0.0 || dropout > 1.0) throw UsageError("--dropout must lie in [0, 1]");
  Input min(merges);
  const auto table = fz::read_merges(min.get());
  std::mt19937_64 rng(seed);
  Input in(input);
  std::string line;
  while (std::getline(in.get(), line)) {
    fz::for_each_word(line, [&](std::string_view w) {
      const auto pieces = fz::encode_bpe(fz::BoundedWord::full(std::string(w)), table, dropout, &rng);
      std::string row;
      for (const auto& p : pieces) {
        if (!row.empty()) row.push_back(' ');
        const auto s = p.symbols();
        row += (s.size() == 1 && s[0] == fz::kEow) ? fz::to_display(fz::BoundedWord{"", false, true})
                                                    : fz::to_display(p);
      }
      std::cout << row << '\n';
    });
  }
}

struct StatsArgs {
  std::string vocab;
  std::string corpus = "-";
  std::string grid = "0,0.1,0.5,1,5,50";
  std::string format = "csv";
  std::string merges_training;  // frequency list; switches the grid to BPE vocab sizes
};

void run_stats(const StatsArgs& a) {
  const auto grid = parse_grid(a.grid);
  const auto words = fz::split_words(read_input(a.corpus));
  if (words.empty()) throw UsageError("stats: the corpus contains no words");
  std::vector<fz::SplitsRow> rows;
  std::string parameter = "alpha_split";
  if (!a.merges_training.empty()) {
    parameter = "vocab_size";
    std::vector<std::size_t> sizes;
    for (const double g : grid) {
      if (g <= 256 || g != static_cast<double>(static_cast<std::size_t>(g))) {
        throw UsageError("BPE grid values must be integers above 256");
      }
      sizes.push_back(static_cast<std::size_t>(g));
    }
    rows = fz::bpe_splits_per_word(read_frequencies(a.merges_training), words, sizes);
  } else {
    if (a.vocab.empty()) throw UsageError("stats needs --vocab or --bpe-train");
    rows = fz::splits_per_word(fz::load_lexicon(a.vocab), words, grid);
  }
  if (a.format == "json") {
    json j = json::array();
    for (const auto& r : rows) {
      j.push_back({{parameter, r.parameter}, {"words", r.words}, {"pieces", r.pieces}, {"mean_pieces", r.mean()}});
    }
    std::cout << j.dump(2) << '\n';
  } else {
    fz::write_splits_csv(rows, parameter, std::cout);
  }
}

struct HistogramArgs {
  std::string vocab;
  std::string merges;
  std::string corpus = "-";
  std::string format = "csv";
};

void run_histogram(const HistogramArgs& a) {
  if (a.vocab.empty() == a.merges.empty()) throw UsageError("histogram needs exactly one of --vocab, --merges");
  const auto words = fz::split_words(read_input(a.corpus));
  fz::IndexHistogram h;
  if (!a.vocab.empty()) {
    h = fz::index_histogram(fz::load_lexicon(a.vocab), words);
  } else {
    Input min(a.merges);
    h = fz::bpe_index_histogram(fz::read_merges(min.get()), words);
  }
  if (a.format == "json") {
    json j = {{"pieces", h.pieces}, {"normalized_entropy", h.normalized_entropy}, {"counts", h.counts}};
    std::cout << j.dump() << '\n';
    return;
  }
  fz::write_histogram_csv(h, std::cout);
  for (std::size_t c = 0; c < h.normalized_entropy.size(); ++c) {
    std::cerr << "channel " << c << " normalized entropy " << format_double(h.normalized_entropy[c]) << '\n';
  }
}

struct NoiseArgs {
  std::string input = "-";
  double p = 0.1;
  std::uint64_t seed = kDefaultSeed;
  std::vector<std::string> ops;
};

void run_noise(const NoiseArgs& a) {
  fz::NoiseConfig config;
  config.p_noise = a.p;
  config.seed = a.seed;
  if (!a.ops.empty()) {
    config.ops = 0;
    for (const auto& op : a.ops) {
      if (op == "delete") config.ops |= fz::kNoiseDelete;
      else if (op == "case") config.ops |= fz::kNoiseCase;
      else if (op == "repeat") config.ops |= fz::kNoiseRepeat;
      else throw UsageError("unknown noise operation '" + op + "'");
    }
  }
  try {
    config.validate();
  } catch (const fz::PreconditionError& e) {
    throw UsageError(e.what());
  }
  std::mt19937_64 rng(config.seed);
  fz::NoiseStats stats;
  std::cout << fz::perturb(read_input(a.input), config, rng, &stats);
  std::cerr << "characters " << stats.characters << " perturbed " << stats.perturbed << " (delete "
            << stats.by_op[0] << ", case " << stats.by_op[1] << ", repeat " << stats.by_op[2] << ")\n";
}

struct ColorizeArgs {
  std::string vocab;
  std::string input = "-";
  std::string format = "html";
  double alpha = 0.1;
};

void run_colorize(const ColorizeArgs& a) {
  const auto lex = fz::load_lexicon(a.vocab);
  fz::ScoreParams params;
  params.alpha_split = a.alpha;
  const auto stream = fz::tokenize_text(read_input(a.input), lex, params);
  const auto report = fz::colorize(stream, lex.vocabulary.codebook_size());
  if (!report.warning.empty()) std::cerr << "warning: " << report.warning << '\n';
  std::cout << (a.format == "text" ? report.table() : report.html());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Factorized subword tokenization toolkit"};
  app.require_subcommand(1);

  FreqArgs freq;
  auto* freq_cmd = app.add_subcommand("freq", "Count words in a text corpus, write word<TAB>count");
  freq_cmd->add_option("input", freq.input, "Corpus path or -")->check(kReadable);
  freq_cmd->add_option("-o,--output", freq.output, "Output TSV path or -");

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train the autoencoder on a frequency list");
  train_cmd->add_option("input", train.input, "Frequency list TSV")->required()->check(kReadable);
  train_cmd->add_option("-o,--output", train.output, "Checkpoint path")->required();
  train_cmd->add_option("--resume", train.resume, "Continue from this checkpoint")->check(kReadable);
  train_cmd->add_option("--seed", train.seed, "Random seed");
  train_cmd->add_option("--log-every", train.log_every, "Progress interval in steps");
  train_cmd->add_option("--steps", train.steps, "Total training steps");
  train_cmd->add_option("--codebook-size", train.config.codebook_size, "Codes per channel (K)");
  train_cmd->add_option("--latent-dim", train.config.latent_dim, "Latent dimension (D)");
  train_cmd->add_option("--hidden-dim", train.config.hidden_dim, "Hidden layer width");
  train_cmd->add_option("--context-width", train.config.context_width, "Decoder history window");
  train_cmd->add_option("--batch-size", train.config.batch_size, "Examples per step");
  train_cmd->add_option("--max-word-length", train.config.max_word_length, "Longest symbol sequence");
  train_cmd->add_option("--learning-rate", train.config.learning_rate, "Initial learning rate");
  train_cmd->add_option("--final-learning-rate", train.config.final_learning_rate, "Learning rate at the end");
  train_cmd->add_option("--beta", train.config.beta, "Commitment weight");
  train_cmd->add_option("--codebook-decay", train.config.codebook_decay, "Codebook EMA decay");
  train_cmd->add_option("--weight-ema-decay", train.config.weight_ema_decay, "Parameter EMA decay");
  train_cmd->add_option("--beam-width", train.config.beam_width, "Decoder beam width");
  train_cmd->add_option("--optimizer", train.optimizer, "adam or sgd")
      ->check(CLI::IsMember({"adam", "sgd"}));

  BuildVocabArgs build;
  auto* build_cmd = app.add_subcommand("build-vocab", "Decode the vocabulary of a checkpoint");
  build_cmd->add_option("checkpoint", build.checkpoint, "Checkpoint path")->required()->check(kReadable);
  build_cmd->add_option("-o,--output", build.output, "Vocabulary path")->required();
  build_cmd->add_option("--tsv", build.tsv, "Also export subword<TAB>r,g,b<TAB>logprob");

  std::string vocab_path;
  std::string export_out = "-";
  auto* vocab_cmd = app.add_subcommand("vocab", "Inspect a vocabulary file");
  vocab_cmd->require_subcommand(1);
  auto* info_cmd = vocab_cmd->add_subcommand("info", "Print summary counts");
  info_cmd->add_option("vocab", vocab_path, "Vocabulary path")->required()->check(kReadable);
  auto* export_cmd = vocab_cmd->add_subcommand("export", "Write the entries as TSV");
  export_cmd->add_option("vocab", vocab_path, "Vocabulary path")->required()->check(kReadable);
  export_cmd->add_option("-o,--output", export_out, "Output path or -");

  TokenizeArgs tok;
  auto* tok_cmd = app.add_subcommand("tokenize", "Tokenize text line by line");
  tok_cmd->add_option("vocab", tok.vocab, "Vocabulary path")->required()->check(kReadable);
  tok_cmd->add_option("-i,--input", tok.input, "Input path or -")->check(kReadable);
  tok_cmd->add_option("-o,--output", tok.output, "Output path or -");
  tok_cmd->add_option("--alpha-split", tok.alpha, "Per-piece penalty");
  tok_cmd->add_option("--sigma-sample", tok.sigma, "Noise scale; enables sampling");
  tok_cmd->add_option("--samples", tok.samples, "Sampled tokenizations per line");
  tok_cmd->add_option("--seed", tok.seed, "Random seed");
  tok_cmd->add_option("--format", tok.format, "text, json, tsv or binary")
      ->check(CLI::IsMember({"text", "json", "tsv", "binary"}));

  std::string detok_vocab;
  std::string detok_input = "-";
  auto* detok_cmd = app.add_subcommand("detokenize", "Turn triplet lines back into text");
  detok_cmd->add_option("vocab", detok_vocab, "Vocabulary path")->required()->check(kReadable);
  detok_cmd->add_option("-i,--input", detok_input, "Input path or -")->check(kReadable);

  std::string bpe_input;
  std::string bpe_output = "-";
  std::size_t bpe_size = 0;
  auto* bpe_train_cmd = app.add_subcommand("bpe-train", "Train byte-level BPE merges");
  bpe_train_cmd->add_option("input", bpe_input, "Frequency list TSV")->required()->check(kReadable);
  bpe_train_cmd->add_option("--vocab-size", bpe_size, "256 plus the number of merges")->required();
  bpe_train_cmd->add_option("-o,--output", bpe_output, "Merge file or -");

  std::string bpe_merges;
  std::string bpe_enc_input = "-";
  double dropout = 0.0;
  std::uint64_t bpe_seed = kDefaultSeed;
  auto* bpe_enc_cmd = app.add_subcommand("bpe-encode", "Encode text with BPE merges, one word per line");
  bpe_enc_cmd->add_option("merges", bpe_merges, "Merge file")->required()->check(kReadable);
  bpe_enc_cmd->add_option("-i,--input", bpe_enc_input, "Input path or -")->check(kReadable);
  bpe_enc_cmd->add_option("--dropout", dropout, "Merge dropout probability");
  bpe_enc_cmd->add_option("--seed", bpe_seed, "Random seed");

  StatsArgs stats;
  auto* stats_cmd = app.add_subcommand("stats", "Mean pieces per word over a parameter grid");
  stats_cmd->add_option("--vocab", stats.vocab, "Vocabulary path")->check(kReadable);
  stats_cmd->add_option("--bpe-train", stats.merges_training,
                        "Frequency list; grid values become BPE vocabulary sizes")
      ->check(kReadable);
  stats_cmd->add_option("corpus", stats.corpus, "Corpus path or -")->check(kReadable);
  stats_cmd->add_option("--grid", stats.grid, "Comma-separated parameter values");
  stats_cmd->add_option("--format", stats.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));

  HistogramArgs hist;
  auto* hist_cmd = app.add_subcommand("histogram", "Index usage counts and normalized entropy");
  hist_cmd->add_option("--vocab", hist.vocab, "Vocabulary path")->check(kReadable);
  hist_cmd->add_option("--merges", hist.merges, "BPE merge file")->check(kReadable);
  hist_cmd->add_option("corpus", hist.corpus, "Corpus path or -")->check(kReadable);
  hist_cmd->add_option("--format", hist.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));

  NoiseArgs noise;
  auto* noise_cmd = app.add_subcommand("noise", "Perturb characters of a text");
  noise_cmd->add_option("input", noise.input, "Input path or -")->check(kReadable);
  noise_cmd->add_option("-p,--p-noise", noise.p, "Per-character probability");
  noise_cmd->add_option("--seed", noise.seed, "Random seed");
  noise_cmd->add_option("--ops", noise.ops, "Subset of delete, case, repeat")->delimiter(',');

  ColorizeArgs color;
  auto* color_cmd = app.add_subcommand("colorize", "Render pieces with their triplet colors");
  color_cmd->add_option("vocab", color.vocab, "Vocabulary path")->required()->check(kReadable);
  color_cmd->add_option("-i,--input", color.input, "Input path or -")->check(kReadable);
  color_cmd->add_option("--format", color.format, "html or text")->check(CLI::IsMember({"html", "text"}));
  color_cmd->add_option("--alpha-split", color.alpha, "Per-piece penalty");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*freq_cmd) run_freq(freq);
    else if (*train_cmd) run_train(train);
    else if (*build_cmd) run_build_vocab(build);
    else if (*info_cmd) run_vocab_info(vocab_path);
    else if (*export_cmd) run_vocab_export(vocab_path, export_out);
    else if (*tok_cmd) run_tokenize(tok);
    else if (*detok_cmd) run_detokenize(detok_vocab, detok_input);
    else if (*bpe_train_cmd) run_bpe_train(bpe_input, bpe_size, bpe_output);
    else if (*bpe_enc_cmd) run_bpe_encode(bpe_merges, bpe_enc_input, dropout, bpe_seed);
    else if (*stats_cmd) run_stats(stats);
    else if (*hist_cmd) run_histogram(hist);
    else if (*noise_cmd) run_noise(noise);
    else if (*color_cmd) run_colorize(color);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const fz::IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const fz::FormatError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const fz::PreconditionError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const fz::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
