#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "factorizer/error.hpp"

namespace factorizer::vq {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// K learned vectors of dimension D with their EMA usage counts.
struct Codebook {
  Matrix vectors;  // K x D
  Vector usage;    // K
  double decay = 0.96;
  double reset_threshold = 0.1;

  Codebook() = default;
  Codebook(int size, int dim, double decay_ = 0.96, double reset_threshold_ = 0.1)
      : vectors(Matrix::Zero(size, dim)),
        usage(Vector::Ones(size)),
        decay(decay_),
        reset_threshold(reset_threshold_) {
    require(size >= 2, "codebook needs at least two vectors");
    require(dim >= 1, "codebook dimension must be positive");
    require(decay >= 0.0 && decay < 1.0, "codebook decay must lie in [0, 1)");
    require(reset_threshold > 0.0, "reset threshold must be positive");
  }

  int size() const { return static_cast<int>(vectors.rows()); }
  int dim() const { return static_cast<int>(vectors.cols()); }
};

struct QuantizationResult {
  int index = 0;
  Vector vector;
  double distance = 0.0;  // Euclidean, unsquared
};

/// Nearest codebook row by Euclidean distance; ties go to the lowest index.
template <typename Derived>
QuantizationResult quantize(const Eigen::MatrixBase<Derived>& latent, const Codebook& codebook) {
  require(latent.size() == codebook.dim(), "quantize: latent dimension does not match codebook");
  int best = 0;
  double best_sq = std::numeric_limits<double>::infinity();
  for (int k = 0; k < codebook.size(); ++k) {
    const double sq = (codebook.vectors.row(k).transpose() - latent).squaredNorm();
    if (sq < best_sq) {
      best_sq = sq;
      best = k;
    }
  }
  return {best, codebook.vectors.row(best).transpose(), std::sqrt(best_sq)};
}

/// EMA step for counts and vectors from one batch.
///
/// Counts first: c_k <- decay * c_k + (1 - decay) * n_k, with n_k the exact
/// number of batch rows assigned to k. Vectors then move to the EMA of the
/// assigned latents normalised by the refreshed count:
///   z_k <- (decay * c_k_old * z_k + (1 - decay) * sum_i e_i) / c_k_new
/// which leaves z_k untouched when n_k = 0 and yields the batch mean for
/// decay = 0.
inline void ema_update(Codebook& codebook, const Matrix& latents, std::span<const int> assignments) {
  require(latents.rows() == static_cast<Eigen::Index>(assignments.size()),
          "ema_update: one assignment per latent row required");
  if (assignments.empty()) return;
  require(latents.cols() == codebook.dim(), "ema_update: latent dimension does not match codebook");

  const int size = codebook.size();
  std::vector<long> counts(static_cast<std::size_t>(size), 0);
  Matrix sums = Matrix::Zero(size, codebook.dim());
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    const int k = assignments[i];
    require(k >= 0 && k < size, "ema_update: assignment out of range");
    ++counts[static_cast<std::size_t>(k)];
    sums.row(k) += latents.row(static_cast<Eigen::Index>(i));
  }

  const double decay = codebook.decay;
  for (int k = 0; k < size; ++k) {
    const auto n = counts[static_cast<std::size_t>(k)];
    const double old_count = codebook.usage[k];
    const double new_count = decay * old_count + (1.0 - decay) * static_cast<double>(n);
    codebook.usage[k] = new_count;
    if (n == 0) continue;
    codebook.vectors.row(k) =
        (decay * old_count * codebook.vectors.row(k) + (1.0 - decay) * sums.row(k)) / new_count;
  }
}

struct ResetReport {
  std::vector<int> reset;     // codes reassigned to a batch latent
  std::vector<int> deferred;  // dead codes left alone because the batch was empty
};

/// Every code with usage below the threshold takes a uniformly random batch
/// latent as its new vector and restarts at count 1.
template <typename Rng>
ResetReport reset_dead_codes(Codebook& codebook, const Matrix& latents, Rng& rng) {
  ResetReport report;
  for (int k = 0; k < codebook.size(); ++k) {
    if (codebook.usage[k] >= codebook.reset_threshold) continue;
    if (latents.rows() == 0) {
      report.deferred.push_back(k);
      continue;
    }
    require(latents.cols() == codebook.dim(), "reset_dead_codes: latent dimension mismatch");
    std::uniform_int_distribution<Eigen::Index> pick(0, latents.rows() - 1);
    codebook.vectors.row(k) = latents.row(pick(rng));
    codebook.usage[k] = 1.0;
    report.reset.push_back(k);
  }
  return report;
}

/// Shannon entropy (nats) of the normalized usage counts.
inline double usage_entropy(const Codebook& codebook) {
  const double total = codebook.usage.sum();
  if (total <= 0.0) return 0.0;
  double h = 0.0;
  for (int k = 0; k < codebook.size(); ++k) {
    const double p = codebook.usage[k] / total;
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

// --- losses ----------------------------------------------------------------
// Both alignment terms use the squared Euclidean norm. They share a value and
// differ only in which side receives gradient.

struct VqLossTerms {
  double reconstruction = 0.0;
  double codebook = 0.0;  // unused in EMA mode
  double commitment = 0.0;
  double beta = 0.5;

  double total() const { return reconstruction + codebook + beta * commitment; }
};

/// ||sg(e) - z||^2; gradient flows to the codebook vector only.
template <typename A, typename B>
double codebook_loss(const Eigen::MatrixBase<A>& latent, const Eigen::MatrixBase<B>& code) {
  return (latent - code).squaredNorm();
}

template <typename A, typename B>
Vector codebook_loss_gradient(const Eigen::MatrixBase<A>& latent, const Eigen::MatrixBase<B>& code) {
  return 2.0 * (code - latent);
}

/// ||e - sg(z)||^2; gradient flows to the encoder output only.
template <typename A, typename B>
double commitment_loss(const Eigen::MatrixBase<A>& latent, const Eigen::MatrixBase<B>& code) {
  return (latent - code).squaredNorm();
}

template <typename A, typename B>
Vector commitment_loss_gradient(const Eigen::MatrixBase<A>& latent, const Eigen::MatrixBase<B>& code) {
  return 2.0 * (latent - code);
}

/// Total loss in EMA mode, where the codebook term is replaced by EMA updates.
inline double combine_losses(double reconstruction, double commitment, double beta) {
  // NaN passes through; the trainer reports it as divergence.
  require(!(commitment < 0.0), "combine_losses: commitment loss must be non-negative");
  return reconstruction + beta * commitment;
}

/// Straight-through estimator: the forward pass emits the codebook vector,
/// the backward pass hands the downstream gradient to the latent unchanged
/// and gives the codebook vector nothing.
struct StraightThrough {
  static Vector forward(const Vector& latent, const Vector& quantized) {
    require(latent.size() == quantized.size(), "straight_through: shape mismatch");
    return quantized;
  }

  struct Gradients {
    Vector latent;
    Vector quantized;
  };

  static Gradients backward(const Vector& upstream) {
    return {upstream, Vector::Zero(upstream.size())};
  }

  /// d forward / d latent; the identity by construction.
  static Matrix jacobian(int dim) { return Matrix::Identity(dim, dim); }
};

}  // namespace factorizer::vq
