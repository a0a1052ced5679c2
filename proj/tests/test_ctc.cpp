#include <gtest/gtest.h>

#include <cmath>

#include "a2s/ctc.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

namespace a2s::ctc {
namespace {

Matrix<double> uniform_rows(Eigen::Index rows, Eigen::Index cols) {
  return Matrix<double>::Constant(rows, cols, 1.0 / static_cast<double>(cols));
}

TEST(CtcLoss, TwoFrameExample) {
  const auto grid = PosteriorGrid<double>::from_probabilities(uniform_rows(2, 2));
  const std::vector<Token> target{1};
  EXPECT_NEAR(ctc_loss(grid, target).loss, -std::log(0.75), 1e-12);
  EXPECT_NEAR(-std::log(0.75), 0.28768, 1e-5);
}

TEST(CtcLoss, CertainPathHasZeroLoss) {
  Matrix<double> p = Matrix<double>::Zero(5, 3);
  const std::vector<Token> path{0, 1, 1, 0, 2};
  for (Eigen::Index t = 0; t < 5; ++t) p(t, path[static_cast<std::size_t>(t)]) = 1.0;
  const auto grid = PosteriorGrid<double>::from_probabilities(p);
  EXPECT_EQ(ctc_loss(grid, std::vector<Token>{1, 2}).loss, 0.0);
}

TEST(CtcLoss, Feasibility) {
  const auto one = PosteriorGrid<double>::from_probabilities(uniform_rows(1, 2));
  EXPECT_EQ(test::error_of([&] { ctc_loss(one, std::vector<Token>{1, 1}); }), Errc::InfeasibleLength);
  const auto three = PosteriorGrid<double>::from_probabilities(uniform_rows(3, 2));
  EXPECT_NO_THROW(ctc_loss(three, std::vector<Token>{1, 1}));
  EXPECT_EQ(min_frames(std::vector<Token>{1, 1, 2, 2, 2}), 8u);
  EXPECT_EQ(test::error_of([&] { ctc_loss(three, std::vector<Token>{2}); }), Errc::ShapeMismatch);
  EXPECT_EQ(test::error_of([&] { ctc_loss(three, std::vector<Token>{0}); }), Errc::ShapeMismatch);
}

TEST(CtcLoss, EmptyTargetIsAllBlank) {
  Rng rng(1);
  const auto p = test::random_distribution_rows(4, 3, rng);
  const auto grid = PosteriorGrid<double>::from_probabilities(p);
  double expected = 0.0;
  for (Eigen::Index t = 0; t < 4; ++t) expected -= std::log(p(t, 0));
  EXPECT_NEAR(ctc_loss(grid, std::vector<Token>{}).loss, expected, 1e-12);
}

TEST(CtcLoss, MatchesPathEnumeration) {
  Rng rng(2024);
  int checked = 0;
  for (int i = 0; i < 300; ++i) {
    const auto L = static_cast<Eigen::Index>(1 + rng.below(7));
    const auto V = static_cast<Eigen::Index>(2 + rng.below(3));
    std::vector<Token> target(rng.below(5));
    for (auto& t : target) t = static_cast<Token>(1 + rng.below(static_cast<std::uint64_t>(V - 1)));
    if (static_cast<std::size_t>(L) < min_frames(target)) continue;
    const auto p = test::random_distribution_rows(L, V, rng);
    const auto result = ctc_loss(PosteriorGrid<double>::from_probabilities(p), target);
    EXPECT_NEAR(std::exp(-result.loss), test::brute_force_ctc(p, target), 1e-12);
    ++checked;
  }
  EXPECT_GT(checked, 150);
}

TEST(CtcLattice, EveryFrameCarriesTheTotal) {
  Rng rng(5);
  const std::vector<Token> target{1, 2, 2, 3};
  const auto p = test::random_distribution_rows(9, 4, rng);
  const auto r = ctc_loss(PosteriorGrid<double>::from_probabilities(p), target);
  const auto& lat = r.lattice;
  for (Eigen::Index t = 0; t < 9; ++t) {
    double acc = neg_inf<double>();
    for (Eigen::Index s = 0; s < lat.log_alpha.cols(); ++s) acc = log_add(acc, lat.log_alpha(t, s) + lat.log_beta(t, s));
    EXPECT_NEAR(acc, lat.log_likelihood, 1e-9);
    EXPECT_LE(lat.log_alpha.row(t).maxCoeff(), 0.0);
    EXPECT_LE(lat.log_beta.row(t).maxCoeff(), 0.0);
  }
}

double loss_of_logits(const Matrix<double>& logits, const std::vector<Token>& target) {
  return ctc_loss(PosteriorGrid<double>::from_logits(logits), target).loss;
}

TEST(CtcGrad, MatchesFiniteDifferences) {
  Rng rng(77);
  for (int trial = 0; trial < 40; ++trial) {
    const auto L = static_cast<Eigen::Index>(2 + rng.below(5));
    const auto V = static_cast<Eigen::Index>(2 + rng.below(3));
    std::vector<Token> target(1 + rng.below(3));
    for (auto& t : target) t = static_cast<Token>(1 + rng.below(static_cast<std::uint64_t>(V - 1)));
    if (static_cast<std::size_t>(L) < min_frames(target)) continue;
    Matrix<double> logits(L, V);
    for (Eigen::Index i = 0; i < logits.size(); ++i) logits.data()[i] = rng.uniform(-2.0, 2.0);
    const auto grid = PosteriorGrid<double>::from_logits(logits);
    const auto grad = ctc_grad(ctc_loss(grid, target).lattice, grid);
    const double h = 1e-5;
    for (Eigen::Index i = 0; i < logits.size(); ++i) {
      Matrix<double> up = logits, down = logits;
      up.data()[i] += h;
      down.data()[i] -= h;
      const double numeric = (loss_of_logits(up, target) - loss_of_logits(down, target)) / (2 * h);
      const double analytic = grad.data()[i];
      const double scale = std::max({std::abs(numeric), std::abs(analytic), 1e-3});
      EXPECT_LT(std::abs(numeric - analytic) / scale, 1e-4) << "trial " << trial << " entry " << i;
    }
  }
}

TEST(CtcGrad, RowsSumToZero) {
  Rng rng(8);
  const std::vector<Token> target{2, 1, 1};
  Matrix<double> logits(7, 3);
  for (Eigen::Index i = 0; i < logits.size(); ++i) logits.data()[i] = rng.uniform(-3.0, 3.0);
  const auto grid = PosteriorGrid<double>::from_logits(logits);
  const auto grad = ctc_grad(ctc_loss(grid, target).lattice, grid);
  for (Eigen::Index t = 0; t < grad.rows(); ++t) EXPECT_NEAR(grad.row(t).sum(), 0.0, 1e-9);
}

TEST(CtcGrad, ConfidentCorrectGridIsStationary) {
  const std::vector<Token> path{0, 1, 0, 2, 2};
  Matrix<double> logits = Matrix<double>::Constant(5, 3, -30.0);
  for (Eigen::Index t = 0; t < 5; ++t) logits(t, path[static_cast<std::size_t>(t)]) = 30.0;
  const auto grid = PosteriorGrid<double>::from_logits(logits);
  const auto grad = ctc_grad(ctc_loss(grid, std::vector<Token>{1, 2}).lattice, grid);
  EXPECT_LT(grad.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Greedy, OneHotAndTies) {
  Matrix<double> p = Matrix<double>::Zero(5, 3);
  const std::vector<Token> labels{0, 2, 2, 0, 1};
  for (Eigen::Index t = 0; t < 5; ++t) p(t, labels[static_cast<std::size_t>(t)]) = 1.0;
  EXPECT_EQ(greedy_decode(PosteriorGrid<double>::from_probabilities(p)), labels);
  EXPECT_EQ(greedy_decode(PosteriorGrid<double>::from_probabilities(uniform_rows(4, 5))), std::vector<Token>(4, 0));
}

TEST(Greedy, MatchesRowScan) {
  Rng rng(12);
  const auto p = test::random_distribution_rows(50, 7, rng);
  const auto decoded = greedy_decode(PosteriorGrid<double>::from_probabilities(p));
  for (Eigen::Index t = 0; t < 50; ++t) {
    Eigen::Index best;
    p.row(t).maxCoeff(&best);
    EXPECT_EQ(decoded[static_cast<std::size_t>(t)], static_cast<Token>(best));
  }
}

TEST(Collapse, Definition) {
  EXPECT_EQ(collapse(std::vector<Token>{0, 1, 1, 0, 2, 2, 0}), (std::vector<Token>{1, 2}));
  EXPECT_EQ(collapse(std::vector<Token>{1, 0, 1}), (std::vector<Token>{1, 1}));
  EXPECT_EQ(collapse(std::vector<Token>{1, 1, 1}), (std::vector<Token>{1}));
  EXPECT_TRUE(collapse(std::vector<Token>{0, 0}).empty());
  EXPECT_TRUE(collapse(std::vector<Token>{}).empty());
}

TEST(Collapse, InvertsRandomExpansions) {
  Rng rng(99);
  for (int i = 0; i < 2000; ++i) {
    std::vector<Token> target(rng.below(12));
    for (auto& t : target) t = static_cast<Token>(1 + rng.below(4));
    const auto e = test::random_expansion(target, rng);
    EXPECT_GE(e.size(), min_frames(target));
    ASSERT_EQ(collapse(e), target);
  }
}

}  // namespace
}  // namespace a2s::ctc
