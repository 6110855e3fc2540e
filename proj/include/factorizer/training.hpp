#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "factorizer/corpus.hpp"
#include "factorizer/error.hpp"
#include "factorizer/model.hpp"
#include "factorizer/triplet.hpp"
#include "factorizer/vq.hpp"

namespace factorizer {

/// A split half waiting for a slot in the next batch.
struct PendingExample {
  BoundedWord word;
  double weight = 0.0;

  friend bool operator==(const PendingExample&, const PendingExample&) = default;
};

/// Everything needed to run inference or to resume training.
struct Checkpoint {
  ModelConfig config;
  Parameters params;      // live weights
  Parameters ema_params;  // parameter EMA, used for inference
  Codebooks codebooks;
  std::map<Triplet, std::uint64_t> triplet_usage;  // houses the prior p(z)
  long step = 0;
  std::mt19937_64 rng;
  Parameters adam_first;   // empty tensors under SGD
  Parameters adam_second;
  std::deque<PendingExample> pending;

  Autoencoder inference_model() const { return Autoencoder(config, ema_params, codebooks); }

  std::uint64_t usage_total() const {
    std::uint64_t total = 0;
    for (const auto& [t, n] : triplet_usage) total += n;
    return total;
  }
};

/// ema <- decay * ema + (1 - decay) * live, tensor by tensor.
inline void ema_parameters(const Parameters& live, Parameters& ema, double decay) {
  require(live.same_shape(ema), "ema_parameters: shape mismatch");
  require(decay >= 0.0 && decay <= 1.0, "ema_parameters: decay must lie in [0, 1]");
  for (int i = 0; i < kTensorCount; ++i) ema[i] = decay * ema[i] + (1.0 - decay) * live[i];
}

/// Cosine decay from the initial to the final learning rate over config.steps.
inline double learning_rate_at(const ModelConfig& config, long step) {
  if (config.steps <= 1) return config.learning_rate;
  const double progress =
      std::min(1.0, static_cast<double>(step) / static_cast<double>(config.steps - 1));
  return config.final_learning_rate + 0.5 * (config.learning_rate - config.final_learning_rate) *
                                          (1.0 + std::cos(std::numbers::pi * progress));
}

inline Checkpoint initialize_checkpoint(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Checkpoint ckpt;
  ckpt.config = config;
  ckpt.rng.seed(seed);
  ckpt.params = Parameters::initialize(config, ckpt.rng);
  ckpt.ema_params = ckpt.params;
  ckpt.codebooks = make_codebooks(config);
  // Placeholder vectors; the first training batch replaces them with encoder outputs.
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& book : ckpt.codebooks) {
    for (Eigen::Index k = 0; k < book.vectors.size(); ++k) book.vectors.data()[k] = normal(ckpt.rng);
  }
  if (config.optimizer == OptimizerKind::kAdam) {
    ckpt.adam_first = Parameters::zeros_like(ckpt.params);
    ckpt.adam_second = Parameters::zeros_like(ckpt.params);
  }
  return ckpt;
}

struct TrainingProgress {
  long step = 0;
  double loss = 0.0;
  double reconstruction = 0.0;
  double commitment = 0.0;
  double learning_rate = 0.0;
  std::array<double, kNumCodebooks> usage_entropy{};
  int resets = 0;  // dead codes reassigned since the previous report
};

struct TrainOptions {
  long log_every = 100;
  std::function<void(const TrainingProgress&)> on_progress;
  std::function<void(const std::string&)> on_warning;
};

namespace detail {

inline std::vector<WordFrequencyList::Entry> trainable_entries(const WordFrequencyList& list,
                                                               const ModelConfig& config,
                                                               const TrainOptions& options) {
  std::vector<WordFrequencyList::Entry> kept;
  std::size_t dropped = 0;
  for (auto& entry : list.sorted()) {
    if (static_cast<int>(entry.first.size()) + 2 > config.max_word_length) {
      ++dropped;
      continue;
    }
    kept.push_back(std::move(entry));
  }
  if (dropped > 0 && options.on_warning) {
    options.on_warning("dropped " + std::to_string(dropped) + " words longer than " +
                       std::to_string(config.max_word_length - 2) + " bytes");
  }
  require(!kept.empty(), "train: no trainable words in the frequency list");
  return kept;
}

inline void adam_step(Parameters& params, const Parameters& grad, Parameters& first,
                      Parameters& second, double lr, long t) {
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.98;
  constexpr double kEpsilon = 1e-6;
  const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t));
  for (int i = 0; i < kTensorCount; ++i) {
    first[i] = kBeta1 * first[i] + (1.0 - kBeta1) * grad[i];
    second[i] = kBeta2 * second[i] + (1.0 - kBeta2) * grad[i].cwiseAbs2();
    params[i].array() -=
        lr * (first[i].array() / c1) / ((second[i].array() / c2).sqrt() + kEpsilon);
  }
}

}  // namespace detail

/// Runs training steps until `ckpt.step == until_step`. Each step samples a
/// batch, quantizes the three latents, applies the weighted loss
/// sum ln(f+1) (L_r + beta L_e), takes an optimizer step, updates the
/// codebooks by EMA, resets dead codes, updates the parameter EMA, and
/// counts the triplet of every example. Throws DivergenceError, leaving the
/// model weights as they were before the failing step, when the loss is not
/// finite.
inline void train_steps(Checkpoint& ckpt, const WordFrequencyList& list, long until_step,
                        const TrainOptions& options = {}) {
  const ModelConfig& config = ckpt.config;
  TrainingSampler sampler(detail::trainable_entries(list, config, options));
  const auto batch_size = static_cast<std::size_t>(config.batch_size);

  std::vector<SymbolString> words;
  std::vector<double> weights;
  int resets_since_report = 0;
  while (ckpt.step < until_step) {
    words.clear();
    weights.clear();
    while (words.size() < batch_size) {
      if (!ckpt.pending.empty()) {
        words.push_back(ckpt.pending.front().word.symbols());
        weights.push_back(ckpt.pending.front().weight);
        ckpt.pending.pop_front();
        continue;
      }
      TrainingExample example = sampler.draw(ckpt.rng);
      words.push_back(example.first.symbols());
      weights.push_back(example.weight);
      if (example.second) ckpt.pending.push_back({std::move(*example.second), example.weight});
    }

    if (ckpt.step == 0) {
      const auto enc = encoder_forward(config, ckpt.params, words);
      for (int c = 0; c < kNumCodebooks; ++c) {
        const auto cs = static_cast<std::size_t>(c);
        std::uniform_int_distribution<Eigen::Index> pick(0, enc.latents[cs].rows() - 1);
        for (int k = 0; k < config.codebook_size; ++k) {
          ckpt.codebooks[cs].vectors.row(k) = enc.latents[cs].row(pick(ckpt.rng));
        }
      }
    }

    Parameters grad;
    const BatchResult result =
        loss_and_gradient(config, ckpt.params, ckpt.codebooks, words, weights, &grad);
    if (!std::isfinite(result.loss)) {
      throw DivergenceError("training diverged at step " + std::to_string(ckpt.step) +
                                ": loss is not finite",
                            ckpt.step);
    }

    const double lr = learning_rate_at(config, ckpt.step);
    if (config.optimizer == OptimizerKind::kAdam) {
      detail::adam_step(ckpt.params, grad, ckpt.adam_first, ckpt.adam_second, lr, ckpt.step + 1);
    } else {
      for (int i = 0; i < kTensorCount; ++i) ckpt.params[i] -= lr * grad[i];
    }

    for (int c = 0; c < kNumCodebooks; ++c) {
      const auto cs = static_cast<std::size_t>(c);
      vq::ema_update(ckpt.codebooks[cs], result.latents[cs], result.assignments[cs]);
      resets_since_report +=
          static_cast<int>(vq::reset_dead_codes(ckpt.codebooks[cs], result.latents[cs], ckpt.rng)
                               .reset.size());
    }
    for (std::size_t b = 0; b < words.size(); ++b) {
      ++ckpt.triplet_usage[make_triplet({result.assignments[0][b], result.assignments[1][b],
                                         result.assignments[2][b]})];
    }
    ema_parameters(ckpt.params, ckpt.ema_params, config.weight_ema_decay);
    ++ckpt.step;

    const bool report = options.log_every > 0 &&
                        (ckpt.step % options.log_every == 0 || ckpt.step == until_step);
    if (report && options.on_progress) {
      TrainingProgress progress;
      progress.step = ckpt.step;
      progress.loss = result.loss;
      progress.reconstruction = result.reconstruction;
      progress.commitment = result.commitment;
      progress.learning_rate = lr;
      for (int c = 0; c < kNumCodebooks; ++c) {
        progress.usage_entropy[static_cast<std::size_t>(c)] =
            vq::usage_entropy(ckpt.codebooks[static_cast<std::size_t>(c)]);
      }
      progress.resets = resets_since_report;
      options.on_progress(progress);
    }
    if (report) resets_since_report = 0;
  }
}

inline Checkpoint train(const WordFrequencyList& list, const ModelConfig& config,
                        std::uint64_t seed, const TrainOptions& options = {}) {
  require(!list.empty(), "train: empty frequency list");
  Checkpoint ckpt = initialize_checkpoint(config, seed);
  train_steps(ckpt, list, config.steps, options);
  return ckpt;
}

/// Fraction of words that survive encode -> quantize -> beam decode intact.
inline double reconstruction_accuracy(const Autoencoder& model, const std::vector<std::string>& words,
                                      std::vector<std::string>* failures = nullptr) {
  if (words.empty()) return 1.0;
  std::size_t exact = 0;
  for (const auto& w : words) {
    const BoundedWord word = BoundedWord::full(w);
    const DecodeResult decoded =
        model.greedy_decode(model.encode_triplet(word), model.config().beam_width);
    if (decoded.terminated && decoded.word == word) {
      ++exact;
    } else if (failures != nullptr) {
      failures->push_back(w);
    }
  }
  return static_cast<double>(exact) / static_cast<double>(words.size());
}

}  // namespace factorizer
