#pragma once

// Desk-scale auto-encoder: a pooled position-aware encoder with three latent
// heads (R, G, B), three quantization bottlenecks, and an autoregressive
// decoder conditioned on the three code vectors and a fixed byte-history
// window. Gradients are written out by hand.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "factorizer/error.hpp"
#include "factorizer/symbols.hpp"
#include "factorizer/triplet.hpp"
#include "factorizer/vq.hpp"

namespace factorizer {

using Matrix = vq::Matrix;
using Vector = vq::Vector;
using RowVector = Eigen::RowVectorXd;

inline constexpr int kNumCodebooks = 3;

enum class OptimizerKind : std::uint32_t { kSgd = 0, kAdam = 1 };

struct ModelConfig {
  int codebook_size = 16;
  int latent_dim = 32;
  int hidden_dim = 128;
  int context_width = 8;
  int encoder_embedding_dim = 64;
  int decoder_embedding_dim = 16;
  int encoder_positions = 16;  // positions past this share the last embedding table
  int max_word_length = 64;    // in symbols, markers included
  double beta = 0.5;
  double codebook_decay = 0.96;
  double dead_code_threshold = 0.1;
  double weight_ema_decay = 0.999;
  long steps = 5000;
  int batch_size = 64;
  double learning_rate = 1e-2;
  double final_learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  int beam_width = 8;

  int decoder_input_dim() const {
    return kNumCodebooks * latent_dim + context_width * decoder_embedding_dim;
  }

  void validate() const {
    require(codebook_size >= 2 && codebook_size <= 65536, "codebook size must lie in [2, 65536]");
    require(latent_dim >= 1 && hidden_dim >= 1 && context_width >= 1, "dimensions must be positive");
    require(encoder_embedding_dim >= 1 && decoder_embedding_dim >= 1 && encoder_positions >= 1,
            "embedding sizes must be positive");
    require(max_word_length >= 3, "max word length must allow at least one byte plus markers");
    require(beta >= 0.0, "beta must be non-negative");
    require(codebook_decay >= 0.0 && codebook_decay < 1.0, "codebook decay must lie in [0, 1)");
    require(weight_ema_decay >= 0.0 && weight_ema_decay <= 1.0, "weight EMA decay must lie in [0, 1]");
    require(dead_code_threshold > 0.0, "dead-code threshold must be positive");
    require(steps >= 0 && batch_size >= 1, "steps must be >= 0 and batch size >= 1");
    require(learning_rate > 0.0 && final_learning_rate > 0.0, "learning rates must be positive");
    require(beam_width >= 1, "beam width must be positive");
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

enum TensorId : int {
  kEncEmbed,
  kEncW,
  kEncB,
  kHeadRW,
  kHeadRB,
  kHeadGW,
  kHeadGB,
  kHeadBW,
  kHeadBB,
  kDecEmbed,
  kDecW,
  kDecB,
  kOutW,
  kOutB,
  kTensorCount
};

inline const char* tensor_name(int id) {
  static constexpr const char* kNames[kTensorCount] = {
      "encoder.embedding", "encoder.hidden.weight", "encoder.hidden.bias",
      "encoder.head_r.weight", "encoder.head_r.bias", "encoder.head_g.weight",
      "encoder.head_g.bias", "encoder.head_b.weight", "encoder.head_b.bias",
      "decoder.embedding", "decoder.hidden.weight", "decoder.hidden.bias",
      "decoder.output.weight", "decoder.output.bias"};
  return kNames[id];
}

inline int head_weight(int channel) { return kHeadRW + 2 * channel; }
inline int head_bias(int channel) { return kHeadRB + 2 * channel; }

/// All trainable tensors. Weights use the row-vector convention y = x W + b;
/// biases are 1 x n matrices.
struct Parameters {
  std::array<Matrix, kTensorCount> tensors;

  Matrix& operator[](int id) { return tensors[static_cast<std::size_t>(id)]; }
  const Matrix& operator[](int id) const { return tensors[static_cast<std::size_t>(id)]; }

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& t : tensors) n += static_cast<std::size_t>(t.size());
    return n;
  }

  bool same_shape(const Parameters& other) const {
    for (int i = 0; i < kTensorCount; ++i) {
      if ((*this)[i].rows() != other[i].rows() || (*this)[i].cols() != other[i].cols()) return false;
    }
    return true;
  }

  bool all_finite() const {
    for (const auto& t : tensors) {
      if (!t.allFinite()) return false;
    }
    return true;
  }

  static Parameters zeros_like(const Parameters& like) {
    Parameters p;
    for (int i = 0; i < kTensorCount; ++i) p[i] = Matrix::Zero(like[i].rows(), like[i].cols());
    return p;
  }

  static std::array<std::pair<int, int>, kTensorCount> shapes(const ModelConfig& c) {
    const int h = c.hidden_dim;
    return {{{c.encoder_positions * kAlphabetSize, c.encoder_embedding_dim},
             {c.encoder_embedding_dim, h},
             {1, h},
             {h, c.latent_dim},
             {1, c.latent_dim},
             {h, c.latent_dim},
             {1, c.latent_dim},
             {h, c.latent_dim},
             {1, c.latent_dim},
             {c.context_width * kDecoderSymbols, c.decoder_embedding_dim},
             {c.decoder_input_dim(), h},
             {1, h},
             {h, kDecoderSymbols},
             {1, kDecoderSymbols}}};
  }

  /// Embeddings ~ N(0, 1), weights ~ N(0, 1/fan_in), biases zero.
  template <typename Rng>
  static Parameters initialize(const ModelConfig& config, Rng& rng) {
    config.validate();
    Parameters p;
    const auto dims = shapes(config);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int i = 0; i < kTensorCount; ++i) {
      const auto [rows, cols] = dims[static_cast<std::size_t>(i)];
      p[i] = Matrix::Zero(rows, cols);
      const bool bias = rows == 1;
      if (bias) continue;
      const bool embedding = i == kEncEmbed || i == kDecEmbed;
      const double scale = embedding ? 1.0 : 1.0 / std::sqrt(static_cast<double>(rows));
      for (Eigen::Index k = 0; k < p[i].size(); ++k) p[i].data()[k] = scale * normal(rng);
    }
    return p;
  }
};

using Codebooks = std::array<vq::Codebook, kNumCodebooks>;

inline Codebooks make_codebooks(const ModelConfig& config) {
  Codebooks books;
  for (auto& book : books) {
    book = vq::Codebook(config.codebook_size, config.latent_dim, config.codebook_decay,
                        config.dead_code_threshold);
  }
  return books;
}

// --- decoder targets -------------------------------------------------------
// A subword is generated symbol by symbol, markers included. Sequences that
// end in EOW stop there; all others end with an explicit padding symbol.

inline SymbolString decoder_targets(std::span<const Symbol> symbols) {
  SymbolString targets(symbols.begin(), symbols.end());
  if (targets.empty() || targets.back() != kEow) targets.push_back(kPad);
  return targets;
}

/// History slot j for predicting position t holds symbols[t - 1 - j], or
/// padding before the start of the sequence.
inline Symbol history_symbol(std::span<const Symbol> symbols, std::size_t t, int slot) {
  const auto back = static_cast<std::ptrdiff_t>(t) - 1 - slot;
  return back >= 0 ? symbols[static_cast<std::size_t>(back)] : kPad;
}

// --- batched forward / backward -------------------------------------------

namespace detail {

inline int encoder_row(const ModelConfig& config, std::size_t position, Symbol symbol) {
  const int p = std::min(static_cast<int>(position), config.encoder_positions - 1);
  return p * kAlphabetSize + symbol;
}

inline Matrix add_bias(Matrix m, const Matrix& bias) {
  m.rowwise() += bias.row(0);
  return m;
}

inline void log_softmax_rows(Matrix& logits) {
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    auto row = logits.row(i);
    const double m = row.maxCoeff();
    const double lse = m + std::log((row.array() - m).exp().sum());
    row.array() -= lse;
  }
}

}  // namespace detail

struct EncoderActivations {
  Matrix pooled;  // B x Ee
  Matrix hidden;  // B x H (post-tanh)
  std::array<Matrix, kNumCodebooks> latents;  // B x D each
};

inline EncoderActivations encoder_forward(const ModelConfig& config, const Parameters& params,
                                          std::span<const SymbolString> words) {
  const auto batch = static_cast<Eigen::Index>(words.size());
  EncoderActivations act;
  act.pooled = Matrix::Zero(batch, config.encoder_embedding_dim);
  for (Eigen::Index b = 0; b < batch; ++b) {
    const auto& word = words[static_cast<std::size_t>(b)];
    require(!word.empty(), "encoder: empty symbol sequence");
    require(static_cast<int>(word.size()) <= config.max_word_length,
            "encoder: word of " + std::to_string(word.size()) + " symbols exceeds the maximum of " +
                std::to_string(config.max_word_length));
    for (std::size_t p = 0; p < word.size(); ++p) {
      require(word[p] < kAlphabetSize, "encoder: symbol outside the alphabet");
      act.pooled.row(b) += params[kEncEmbed].row(detail::encoder_row(config, p, word[p]));
    }
    act.pooled.row(b) /= static_cast<double>(word.size());
  }
  act.hidden = detail::add_bias(act.pooled * params[kEncW], params[kEncB]).array().tanh().matrix();
  for (int c = 0; c < kNumCodebooks; ++c) {
    act.latents[static_cast<std::size_t>(c)] =
        detail::add_bias(act.hidden * params[head_weight(c)], params[head_bias(c)]);
  }
  return act;
}

/// Teacher-forced decoder rows for a batch.
struct DecoderRows {
  std::vector<int> example;   // batch index of each row
  std::vector<Symbol> target;
  std::vector<Symbol> history;  // context_width symbols per row

  std::size_t size() const { return target.size(); }

  static DecoderRows build(const ModelConfig& config, std::span<const SymbolString> words) {
    DecoderRows rows;
    for (std::size_t b = 0; b < words.size(); ++b) {
      const auto targets = decoder_targets(words[b]);
      for (std::size_t t = 0; t < targets.size(); ++t) {
        rows.example.push_back(static_cast<int>(b));
        rows.target.push_back(targets[t]);
        for (int j = 0; j < config.context_width; ++j) {
          rows.history.push_back(history_symbol(targets, t, j));
        }
      }
    }
    return rows;
  }
};

struct DecoderActivations {
  Matrix input;     // T x decoder_input_dim
  Matrix hidden;    // T x H (post-tanh)
  Matrix logprobs;  // T x kDecoderSymbols
};

inline DecoderActivations decoder_forward(const ModelConfig& config, const Parameters& params,
                                          const std::array<Matrix, kNumCodebooks>& codes,
                                          const DecoderRows& rows) {
  const int d = config.latent_dim;
  const int e = config.decoder_embedding_dim;
  const auto count = static_cast<Eigen::Index>(rows.size());
  DecoderActivations act;
  act.input.resize(count, config.decoder_input_dim());
  for (Eigen::Index r = 0; r < count; ++r) {
    const int b = rows.example[static_cast<std::size_t>(r)];
    for (int c = 0; c < kNumCodebooks; ++c) {
      act.input.row(r).segment(c * d, d) = codes[static_cast<std::size_t>(c)].row(b);
    }
    for (int j = 0; j < config.context_width; ++j) {
      const Symbol h = rows.history[static_cast<std::size_t>(r) * config.context_width + j];
      act.input.row(r).segment(kNumCodebooks * d + j * e, e) =
          params[kDecEmbed].row(j * kDecoderSymbols + h);
    }
  }
  act.hidden = detail::add_bias(act.input * params[kDecW], params[kDecB]).array().tanh().matrix();
  act.logprobs = detail::add_bias(act.hidden * params[kOutW], params[kOutB]);
  detail::log_softmax_rows(act.logprobs);
  return act;
}

/// Quantization held fixed while probing gradients: the decoder input is the
/// live latent plus a frozen offset (code - latent at the base point), and
/// the commitment term pulls towards the frozen codes.
struct FrozenQuantization {
  std::array<Matrix, kNumCodebooks> codes;
  std::array<Matrix, kNumCodebooks> offsets;
  std::array<std::vector<int>, kNumCodebooks> assignments;
};

struct BatchResult {
  double loss = 0.0;            // (1/B) sum_b w_b (L_r + beta L_e)
  double reconstruction = 0.0;  // unweighted mean negative log-likelihood
  double commitment = 0.0;      // unweighted mean commitment term
  std::array<std::vector<int>, kNumCodebooks> assignments;
  std::array<Matrix, kNumCodebooks> latents;
};

inline FrozenQuantization freeze_quantization(const ModelConfig& config, const Parameters& params,
                                              const Codebooks& books,
                                              std::span<const SymbolString> words) {
  const auto enc = encoder_forward(config, params, words);
  FrozenQuantization frozen;
  for (int c = 0; c < kNumCodebooks; ++c) {
    const auto cs = static_cast<std::size_t>(c);
    const Matrix& latents = enc.latents[cs];
    frozen.codes[cs].resize(latents.rows(), latents.cols());
    for (Eigen::Index b = 0; b < latents.rows(); ++b) {
      const auto q = vq::quantize(latents.row(b).transpose(), books[cs]);
      frozen.codes[cs].row(b) = q.vector.transpose();
      frozen.assignments[cs].push_back(q.index);
    }
    frozen.offsets[cs] = frozen.codes[cs] - latents;
  }
  return frozen;
}

/// Weighted VQ-VAE loss in EMA mode and, when `grad` is non-null, its
/// gradient. Codebook vectors receive no gradient; the encoder is reached
/// through the straight-through path plus the commitment term.
inline BatchResult loss_and_gradient(const ModelConfig& config, const Parameters& params,
                                     const Codebooks& books, std::span<const SymbolString> words,
                                     std::span<const double> weights, Parameters* grad,
                                     const FrozenQuantization* frozen = nullptr) {
  require(words.size() == weights.size(), "loss: one weight per word required");
  require(!words.empty(), "loss: empty batch");
  const auto batch = static_cast<Eigen::Index>(words.size());
  const double inv_batch = 1.0 / static_cast<double>(batch);
  const int d = config.latent_dim;
  const int e = config.decoder_embedding_dim;

  BatchResult result;
  const EncoderActivations enc = encoder_forward(config, params, words);

  std::array<Matrix, kNumCodebooks> targets;  // sg(z) for the commitment term
  std::array<Matrix, kNumCodebooks> decoder_in;
  for (int c = 0; c < kNumCodebooks; ++c) {
    const auto cs = static_cast<std::size_t>(c);
    if (frozen != nullptr) {
      targets[cs] = frozen->codes[cs];
      decoder_in[cs] = enc.latents[cs] + frozen->offsets[cs];
      result.assignments[cs] = frozen->assignments[cs];
    } else {
      targets[cs].resize(batch, d);
      for (Eigen::Index b = 0; b < batch; ++b) {
        const auto q = vq::quantize(enc.latents[cs].row(b).transpose(), books[cs]);
        targets[cs].row(b) = q.vector.transpose();
        result.assignments[cs].push_back(q.index);
      }
      decoder_in[cs] = targets[cs];
    }
    result.latents[cs] = enc.latents[cs];
  }

  const DecoderRows rows = DecoderRows::build(config, words);
  const DecoderActivations dec = decoder_forward(config, params, decoder_in, rows);

  std::vector<double> nll(static_cast<std::size_t>(batch), 0.0);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    nll[static_cast<std::size_t>(rows.example[r])] -=
        dec.logprobs(static_cast<Eigen::Index>(r), rows.target[r]);
  }
  std::vector<double> commit(static_cast<std::size_t>(batch), 0.0);
  for (int c = 0; c < kNumCodebooks; ++c) {
    const auto cs = static_cast<std::size_t>(c);
    for (Eigen::Index b = 0; b < batch; ++b) {
      commit[static_cast<std::size_t>(b)] +=
          vq::commitment_loss(enc.latents[cs].row(b), targets[cs].row(b));
    }
  }
  for (std::size_t b = 0; b < words.size(); ++b) {
    result.loss += weights[b] * vq::combine_losses(nll[b], commit[b], config.beta);
    result.reconstruction += nll[b];
    result.commitment += commit[b];
  }
  result.loss *= inv_batch;
  result.reconstruction *= inv_batch;
  result.commitment *= inv_batch;

  if (grad == nullptr) return result;
  *grad = Parameters::zeros_like(params);
  Parameters& g = *grad;

  // Output softmax.
  Matrix d_logits = dec.logprobs.array().exp().matrix();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto ri = static_cast<Eigen::Index>(r);
    d_logits(ri, rows.target[r]) -= 1.0;
    d_logits.row(ri) *= weights[static_cast<std::size_t>(rows.example[r])] * inv_batch;
  }
  g[kOutW].noalias() = dec.hidden.transpose() * d_logits;
  g[kOutB] = d_logits.colwise().sum();

  // Decoder hidden layer.
  Matrix d_pre = (d_logits * params[kOutW].transpose()).array() * (1.0 - dec.hidden.array().square());
  g[kDecW].noalias() = dec.input.transpose() * d_pre;
  g[kDecB] = d_pre.colwise().sum();
  const Matrix d_input = d_pre * params[kDecW].transpose();

  std::array<Matrix, kNumCodebooks> d_latent;
  for (auto& m : d_latent) m = Matrix::Zero(batch, d);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto ri = static_cast<Eigen::Index>(r);
    const int b = rows.example[r];
    // Straight-through: the gradient at the code vector goes to the latent.
    for (int c = 0; c < kNumCodebooks; ++c) {
      d_latent[static_cast<std::size_t>(c)].row(b) += d_input.row(ri).segment(c * d, d);
    }
    for (int j = 0; j < config.context_width; ++j) {
      const Symbol h = rows.history[r * static_cast<std::size_t>(config.context_width) +
                                    static_cast<std::size_t>(j)];
      g[kDecEmbed].row(j * kDecoderSymbols + h) +=
          d_input.row(ri).segment(kNumCodebooks * d + j * e, e);
    }
  }

  // Commitment term and the encoder heads.
  Matrix d_hidden = Matrix::Zero(batch, config.hidden_dim);
  for (int c = 0; c < kNumCodebooks; ++c) {
    const auto cs = static_cast<std::size_t>(c);
    for (Eigen::Index b = 0; b < batch; ++b) {
      const double scale = weights[static_cast<std::size_t>(b)] * inv_batch * config.beta;
      d_latent[cs].row(b) +=
          scale * vq::commitment_loss_gradient(enc.latents[cs].row(b), targets[cs].row(b)).transpose();
    }
    g[head_weight(c)].noalias() = enc.hidden.transpose() * d_latent[cs];
    g[head_bias(c)] = d_latent[cs].colwise().sum();
    d_hidden.noalias() += d_latent[cs] * params[head_weight(c)].transpose();
  }

  const Matrix d_enc_pre = d_hidden.array() * (1.0 - enc.hidden.array().square());
  g[kEncW].noalias() = enc.pooled.transpose() * d_enc_pre;
  g[kEncB] = d_enc_pre.colwise().sum();
  const Matrix d_pooled = d_enc_pre * params[kEncW].transpose();
  for (std::size_t b = 0; b < words.size(); ++b) {
    const auto& word = words[b];
    const double share = 1.0 / static_cast<double>(word.size());
    for (std::size_t p = 0; p < word.size(); ++p) {
      g[kEncEmbed].row(detail::encoder_row(config, p, word[p])) +=
          share * d_pooled.row(static_cast<Eigen::Index>(b));
    }
  }
  return result;
}

// --- inference -------------------------------------------------------------

using CodeVectors = std::array<Vector, kNumCodebooks>;

struct DecodeResult {
  BoundedWord word;
  double logprob = -std::numeric_limits<double>::infinity();
  bool terminated = false;  // false when the max length forced a cut
};

/// Frozen model for inference. Decoder pre-activations are assembled from
/// precomputed per-code and per-history-slot tables, so scoring a triplet
/// costs one output projection per generated symbol.
class Autoencoder {
 public:
  Autoencoder(ModelConfig config, Parameters params, Codebooks books)
      : config_(std::move(config)), params_(std::move(params)), books_(std::move(books)) {
    config_.validate();
    const int d = config_.latent_dim;
    const int e = config_.decoder_embedding_dim;
    const Matrix& w = params_[kDecW];
    for (int c = 0; c < kNumCodebooks; ++c) {
      code_tables_[static_cast<std::size_t>(c)] =
          books_[static_cast<std::size_t>(c)].vectors * w.middleRows(c * d, d);
    }
    history_tables_.resize(static_cast<std::size_t>(config_.context_width));
    for (int j = 0; j < config_.context_width; ++j) {
      history_tables_[static_cast<std::size_t>(j)] =
          params_[kDecEmbed].middleRows(j * kDecoderSymbols, kDecoderSymbols) *
          w.middleRows(kNumCodebooks * d + j * e, e);
    }
  }

  const ModelConfig& config() const { return config_; }
  const Parameters& parameters() const { return params_; }
  const Codebooks& codebooks() const { return books_; }

  CodeVectors encode(const BoundedWord& word) const {
    require(static_cast<int>(word.size()) <= config_.max_word_length,
            "encode: word of " + std::to_string(word.size()) + " symbols exceeds the maximum of " +
                std::to_string(config_.max_word_length));
    const SymbolString symbols = word.symbols();
    const auto act = encoder_forward(config_, params_, std::span<const SymbolString>(&symbols, 1));
    CodeVectors out;
    for (int c = 0; c < kNumCodebooks; ++c) {
      out[static_cast<std::size_t>(c)] = act.latents[static_cast<std::size_t>(c)].row(0).transpose();
    }
    return out;
  }

  Triplet quantize(const CodeVectors& latents) const {
    std::array<int, kNumCodebooks> idx{};
    for (int c = 0; c < kNumCodebooks; ++c) {
      const auto cs = static_cast<std::size_t>(c);
      idx[cs] = vq::quantize(latents[cs], books_[cs]).index;
    }
    return make_triplet(idx);
  }

  Triplet encode_triplet(const BoundedWord& word) const { return quantize(encode(word)); }

  CodeVectors code_vectors(const Triplet& t) const {
    CodeVectors out;
    for (int c = 0; c < kNumCodebooks; ++c) {
      const auto cs = static_cast<std::size_t>(c);
      out[cs] = books_[cs].vectors.row(t[c]).transpose();
    }
    return out;
  }

  /// Code-dependent part of the decoder pre-activation, bias included.
  RowVector code_context(const CodeVectors& codes) const {
    const int d = config_.latent_dim;
    RowVector pre = params_[kDecB].row(0);
    for (int c = 0; c < kNumCodebooks; ++c) {
      require(codes[static_cast<std::size_t>(c)].size() == d, "decoder: code dimension mismatch");
      pre += codes[static_cast<std::size_t>(c)].transpose() * params_[kDecW].middleRows(c * d, d);
    }
    return pre;
  }

  RowVector code_context(const Triplet& t) const {
    RowVector pre = params_[kDecB].row(0);
    for (int c = 0; c < kNumCodebooks; ++c) {
      require(t[c] < config_.codebook_size, "decoder: triplet index out of range");
      pre += code_tables_[static_cast<std::size_t>(c)].row(t[c]);
    }
    return pre;
  }

  /// Next-symbol log-probabilities after each of `prefixes`, one row each.
  Matrix next_logprobs(const RowVector& context, std::span<const SymbolString> prefixes) const {
    const auto n = static_cast<Eigen::Index>(prefixes.size());
    Matrix pre(n, config_.hidden_dim);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& prefix = prefixes[static_cast<std::size_t>(i)];
      pre.row(i) = context;
      for (int j = 0; j < config_.context_width; ++j) {
        pre.row(i) += history_tables_[static_cast<std::size_t>(j)].row(
            history_symbol(prefix, prefix.size(), j));
      }
    }
    Matrix logits = detail::add_bias(pre.array().tanh().matrix() * params_[kOutW], params_[kOutB]);
    detail::log_softmax_rows(logits);
    return logits;
  }

  /// Next-symbol log-probabilities after one shared `prefix`, one row per
  /// code context in `contexts`.
  Matrix next_logprobs_batch(Matrix contexts, const SymbolString& prefix) const {
    for (int j = 0; j < config_.context_width; ++j) {
      contexts.rowwise() +=
          history_tables_[static_cast<std::size_t>(j)].row(history_symbol(prefix, prefix.size(), j));
    }
    Matrix logits = detail::add_bias(contexts.array().tanh().matrix() * params_[kOutW], params_[kOutB]);
    detail::log_softmax_rows(logits);
    return logits;
  }

  /// log p(word | codes), teacher-forced. Returns -inf as soon as the partial
  /// sum drops below `floor` (every term is <= 0, so it can only decrease).
  double decode_logprob(const RowVector& context, const BoundedWord& word,
                        double floor = -std::numeric_limits<double>::infinity()) const {
    const SymbolString targets = decoder_targets(word.symbols());
    double total = 0.0;
    SymbolString prefix;
    prefix.reserve(targets.size());
    for (const Symbol target : targets) {
      const Matrix lp = next_logprobs(context, std::span<const SymbolString>(&prefix, 1));
      total += lp(0, target);
      if (total < floor) return -std::numeric_limits<double>::infinity();
      prefix.push_back(target);
    }
    return total;
  }

  double decode_logprob(const CodeVectors& codes, const BoundedWord& word) const {
    return decode_logprob(code_context(codes), word);
  }

  double decode_logprob(const Triplet& t, const BoundedWord& word,
                        double floor = -std::numeric_limits<double>::infinity()) const {
    return decode_logprob(code_context(t), word, floor);
  }

  DecodeResult greedy_decode(const CodeVectors& codes, int beam_width) const {
    return decode(code_context(codes), beam_width);
  }

  DecodeResult greedy_decode(const Triplet& t, int beam_width) const {
    return decode(code_context(t), beam_width);
  }

  /// Beam search for argmax_w p(w | codes). Candidates are ranked jointly;
  /// finished ones leave the beam. For widths above one the pure greedy path
  /// is decoded as well and the better of the two is returned, so widening
  /// the beam never lowers the score.
  DecodeResult decode(const RowVector& context, int beam_width) const {
    require(beam_width >= 1, "beam width must be positive");
    DecodeResult best = beam_search(context, beam_width);
    if (beam_width > 1) {
      DecodeResult greedy = beam_search(context, 1);
      if (better(greedy, best)) best = std::move(greedy);
    }
    return best;
  }

 private:
  static bool better(const DecodeResult& a, const DecodeResult& b) {
    if (a.terminated != b.terminated) return a.terminated;
    return a.logprob > b.logprob;
  }

  // Which symbols may follow `prefix`: markers only at the edges, and at
  // least one byte before the sequence may end.
  static bool allowed(const SymbolString& prefix, Symbol next) {
    const bool has_byte = std::any_of(prefix.begin(), prefix.end(), [](Symbol s) { return s < 256; });
    if (next < 256) return true;
    if (next == kBow) return prefix.empty();
    return has_byte;  // kEow or kPad end the sequence
  }

  DecodeResult beam_search(const RowVector& context, int width) const {
    struct Hypothesis {
      SymbolString symbols;
      double score = 0.0;
    };
    struct Candidate {
      double score;
      std::size_t parent;
      Symbol symbol;
    };

    std::vector<Hypothesis> beam(1);
    std::optional<DecodeResult> finished;
    std::vector<SymbolString> prefixes;
    std::vector<Candidate> candidates;

    for (int step = 0; step < config_.max_word_length && !beam.empty(); ++step) {
      prefixes.clear();
      for (const auto& h : beam) prefixes.push_back(h.symbols);
      const Matrix lp = next_logprobs(context, prefixes);

      candidates.clear();
      for (std::size_t i = 0; i < beam.size(); ++i) {
        for (int s = 0; s < kDecoderSymbols; ++s) {
          const auto symbol = static_cast<Symbol>(s);
          if (!allowed(beam[i].symbols, symbol)) continue;
          candidates.push_back({beam[i].score + lp(static_cast<Eigen::Index>(i), s), i, symbol});
        }
      }
      const auto keep = std::min(candidates.size(), static_cast<std::size_t>(width));
      std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep),
                        candidates.end(), [](const Candidate& a, const Candidate& b) {
                          if (a.score != b.score) return a.score > b.score;
                          if (a.parent != b.parent) return a.parent < b.parent;
                          return a.symbol < b.symbol;
                        });

      std::vector<Hypothesis> next;
      for (std::size_t k = 0; k < keep; ++k) {
        const Candidate& cand = candidates[k];
        SymbolString symbols = beam[cand.parent].symbols;
        if (cand.symbol == kEow || cand.symbol == kPad) {
          if (cand.symbol == kEow) symbols.push_back(kEow);
          if (!finished || cand.score > finished->logprob) {
            finished = DecodeResult{BoundedWord::from_symbols(symbols), cand.score, true};
          }
          continue;
        }
        symbols.push_back(cand.symbol);
        next.push_back({std::move(symbols), cand.score});
      }
      beam = std::move(next);
      if (finished && (beam.empty() || finished->logprob >= beam.front().score)) break;
    }
    if (finished) return *finished;
    // Nothing terminated within the length budget.
    require(!beam.empty(), "decode: empty beam");
    return DecodeResult{BoundedWord::from_symbols(beam.front().symbols), beam.front().score, false};
  }

  ModelConfig config_;
  Parameters params_;
  Codebooks books_;
  std::array<Matrix, kNumCodebooks> code_tables_;  // K x H per channel
  std::vector<Matrix> history_tables_;             // kDecoderSymbols x H per slot
};

}  // namespace factorizer
