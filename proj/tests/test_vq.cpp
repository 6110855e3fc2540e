#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "factorizer/vq.hpp"

namespace vq = factorizer::vq;

namespace {

vq::Codebook book_from(std::initializer_list<std::initializer_list<double>> rows, double decay = 0.96) {
  const int k = static_cast<int>(rows.size());
  const int d = static_cast<int>(rows.begin()->size());
  vq::Codebook book(k, d, decay, 0.1);
  int r = 0;
  for (const auto& row : rows) {
    int c = 0;
    for (double v : row) book.vectors(r, c++) = v;
    ++r;
  }
  return book;
}

vq::Vector vec(std::initializer_list<double> v) {
  vq::Vector out(static_cast<Eigen::Index>(v.size()));
  int i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

}  // namespace

TEST(Quantize, PicksNearestRow) {
  const auto book = book_from({{0, 0}, {3, 4}});
  const auto q = vq::quantize(vec({3, 3}), book);
  EXPECT_EQ(q.index, 1);
  EXPECT_DOUBLE_EQ(q.distance, 1.0);
  EXPECT_EQ(q.vector, vec({3, 4}));
}

TEST(Quantize, ExactMatchAndTies) {
  const auto book = book_from({{1, 0}, {-1, 0}, {5, 5}});
  const auto exact = vq::quantize(vec({5, 5}), book);
  EXPECT_EQ(exact.index, 2);
  EXPECT_EQ(exact.distance, 0.0);
  EXPECT_EQ(vq::quantize(vec({0, 0}), book).index, 0);
}

TEST(Quantize, RejectsDimensionMismatch) {
  const auto book = book_from({{0, 0}, {1, 1}});
  EXPECT_THROW(vq::quantize(vec({1, 2, 3}), book), factorizer::PreconditionError);
}

TEST(Quantize, AgreesWithBruteForce) {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 20000; ++trial) {
    vq::Codebook book(8, 4);
    for (Eigen::Index i = 0; i < book.vectors.size(); ++i) book.vectors.data()[i] = normal(rng);
    vq::Vector x(4);
    for (auto& v : x) v = normal(rng);
    int best = 0;
    double best_d = 1e300;
    for (int k = 0; k < 8; ++k) {
      double d = 0;
      for (int j = 0; j < 4; ++j) d += (book.vectors(k, j) - x[j]) * (book.vectors(k, j) - x[j]);
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    ASSERT_EQ(vq::quantize(x, book).index, best);
  }
}

TEST(EmaUpdate, HandComputedCount) {
  auto book = book_from({{0.0}, {10.0}});
  vq::Matrix latents(2, 1);
  latents << 1.0, 3.0;
  const std::vector<int> assign{0, 0};
  vq::ema_update(book, latents, assign);
  EXPECT_NEAR(book.usage[0], 1.04, 1e-12);
  // z' = (0.96 * 1 * 0 + 0.04 * (1 + 3)) / 1.04
  EXPECT_NEAR(book.vectors(0, 0), 0.16 / 1.04, 1e-12);
  // Unassigned code: count decays, vector stays.
  EXPECT_NEAR(book.usage[1], 0.96, 1e-12);
  EXPECT_EQ(book.vectors(1, 0), 10.0);
}

TEST(EmaUpdate, ZeroDecayGivesBatchStatistics) {
  auto book = book_from({{7, 7}, {9, 9}}, 0.0);
  vq::Matrix latents(3, 2);
  latents << 1, 2, 3, 4, 5, 6;
  const std::vector<int> assign{1, 1, 1};
  vq::ema_update(book, latents, assign);
  EXPECT_EQ(book.usage[1], 3.0);
  EXPECT_NEAR(book.vectors(1, 0), 3.0, 1e-12);
  EXPECT_NEAR(book.vectors(1, 1), 4.0, 1e-12);
  EXPECT_EQ(book.usage[0], 0.0);
}

TEST(EmaUpdate, EmptyBatchIsNoOp) {
  auto book = book_from({{1, 2}, {3, 4}});
  const auto before = book.vectors;
  vq::ema_update(book, vq::Matrix(0, 2), std::vector<int>{});
  EXPECT_EQ(book.vectors, before);
  EXPECT_EQ(book.usage, vq::Vector::Ones(2));
}

TEST(EmaUpdate, StaysFiniteAndBounded) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1, 1);
  vq::Codebook book(6, 3);
  for (Eigen::Index i = 0; i < book.vectors.size(); ++i) book.vectors.data()[i] = u(rng);
  for (int step = 0; step < 2000; ++step) {
    vq::Matrix latents(5, 3);
    for (Eigen::Index i = 0; i < latents.size(); ++i) latents.data()[i] = u(rng);
    std::vector<int> assign;
    for (int b = 0; b < 5; ++b) assign.push_back(vq::quantize(latents.row(b).transpose(), book).index);
    const auto old = book.vectors;
    vq::ema_update(book, latents, assign);
    double max_latent = 0;
    for (int b = 0; b < 5; ++b) max_latent = std::max(max_latent, latents.row(b).norm());
    for (int k = 0; k < 6; ++k) {
      ASSERT_TRUE(book.vectors.row(k).allFinite());
      ASSERT_LE(book.vectors.row(k).norm(), std::max(old.row(k).norm(), max_latent) + 1e-9);
      ASSERT_GE(book.usage[k], 0.0);
    }
  }
}

TEST(ResetDeadCodes, NoOpWhenAllAlive) {
  auto book = book_from({{1, 1}, {2, 2}});
  vq::Matrix latents(1, 2);
  latents << 9, 9;
  std::mt19937_64 rng(0);
  const auto report = vq::reset_dead_codes(book, latents, rng);
  EXPECT_TRUE(report.reset.empty());
  EXPECT_EQ(book.vectors(0, 0), 1.0);
}

TEST(ResetDeadCodes, FiresExactlyBelowThreshold) {
  auto book = book_from({{1, 1}, {2, 2}, {3, 3}});
  book.usage << 0.1, 0.0999999, 0.5;
  vq::Matrix latents(1, 2);
  latents << 9, 8;
  std::mt19937_64 rng(0);
  const auto report = vq::reset_dead_codes(book, latents, rng);
  ASSERT_EQ(report.reset, std::vector<int>{1});
  EXPECT_EQ(book.vectors(1, 0), 9.0);
  EXPECT_EQ(book.vectors(1, 1), 8.0);
  EXPECT_EQ(book.usage[1], 1.0);
  EXPECT_EQ(book.vectors(0, 0), 1.0);
  EXPECT_EQ(book.usage[0], 0.1);
}

TEST(ResetDeadCodes, DefersOnEmptyBatch) {
  auto book = book_from({{1, 1}, {2, 2}});
  book.usage[0] = 0.0;
  std::mt19937_64 rng(0);
  const auto report = vq::reset_dead_codes(book, vq::Matrix(0, 2), rng);
  EXPECT_TRUE(report.reset.empty());
  EXPECT_EQ(report.deferred, std::vector<int>{0});
  EXPECT_EQ(book.usage[0], 0.0);
}

TEST(ResetDeadCodes, PicksBatchLatentsUniformly) {
  vq::Matrix latents(4, 1);
  latents << 0, 1, 2, 3;
  std::mt19937_64 rng(17);
  std::vector<int> hits(4, 0);
  const int trials = 10000;
  for (int t = 0; t < trials; ++t) {
    auto book = book_from({{-1}, {-2}});
    book.usage[0] = 0.0;
    vq::reset_dead_codes(book, latents, rng);
    ++hits[static_cast<std::size_t>(book.vectors(0, 0))];
  }
  const double sigma = std::sqrt(trials * 0.25 * 0.75);
  for (int h : hits) EXPECT_LT(std::abs(h - trials * 0.25), 3 * sigma);
}

TEST(Losses, CombineAndTerms) {
  EXPECT_DOUBLE_EQ(vq::combine_losses(2.0, 0.5, 0.5), 2.25);
  EXPECT_DOUBLE_EQ(vq::combine_losses(2.0, 0.5, 0.0), 2.0);
  EXPECT_DOUBLE_EQ(vq::combine_losses(2.0, 0.0, 0.7), 2.0);
  EXPECT_THROW(vq::combine_losses(1.0, -1.0, 0.5), factorizer::PreconditionError);
  const auto e = vec({1, 2});
  const auto z = vec({0, 0});
  EXPECT_DOUBLE_EQ(vq::commitment_loss(e, z), 5.0);
  EXPECT_DOUBLE_EQ(vq::codebook_loss(e, z), 5.0);
  EXPECT_EQ(vq::commitment_loss_gradient(e, z), vec({2, 4}));
  EXPECT_EQ(vq::codebook_loss_gradient(e, z), vec({-2, -4}));
  vq::VqLossTerms terms{1.0, 2.0, 3.0, 0.5};
  EXPECT_DOUBLE_EQ(terms.total(), 4.5);
}

TEST(StraightThrough, ForwardAndJacobian) {
  const auto l = vec({0.3, -2.0, 5.0});
  const auto z = vec({1.0, 1.0, 1.0});
  EXPECT_EQ(vq::StraightThrough::forward(l, z), z);
  const auto g = vq::StraightThrough::backward(vec({0.1, 0.2, 0.3}));
  EXPECT_EQ(g.latent, vec({0.1, 0.2, 0.3}));
  EXPECT_EQ(g.quantized, vq::Vector::Zero(3));
  const auto j = vq::StraightThrough::jacobian(3);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) EXPECT_EQ(j(r, c), r == c ? 1.0 : 0.0);
  }
}

TEST(UsageEntropy, UniformIsLogK) {
  vq::Codebook book(16, 2);
  EXPECT_NEAR(vq::usage_entropy(book), std::log(16.0), 1e-12);
  book.usage.setZero();
  book.usage[3] = 5.0;
  EXPECT_EQ(vq::usage_entropy(book), 0.0);
}
