#include <cmath>

#include <gtest/gtest.h>

#include "iiao/losses.hpp"
#include "iiao/ops.hpp"
#include "iiao/rng.hpp"

using namespace iiao;
using namespace iiao::losses;

namespace {

double rc_value(const Tensor& e, const LossConfig& cfg) {
  Tape tape;
  return tape.value(rc_loss(tape, tape.constant(e), cfg)).item();
}

}  // namespace

TEST(LossConfig, Validation) {
  LossConfig c;
  EXPECT_TRUE(c.validate().empty());
  c.stride_s = 30;
  c.threshold = 1.5;
  c.lambda = -1;
  EXPECT_EQ(c.validate().size(), 3u);
  EXPECT_THROW(c.require_valid(), std::invalid_argument);
}

TEST(Windows, ReferenceGrid) {
  const auto g = window_grid(50, 50, 27, 23);
  const std::vector<std::pair<int, int>> want = {{0, 0}, {0, 23}, {23, 0}, {23, 23}};
  EXPECT_EQ(g.offsets, want);
}

TEST(Windows, FlushWindowWhenStrideLeavesAGap) {
  EXPECT_EQ(window_starts(10, 4, 4), (std::vector<int>{0, 4, 6}));
  EXPECT_EQ(window_starts(8, 4, 4), (std::vector<int>{0, 4}));
  EXPECT_EQ(window_starts(5, 5, 1), (std::vector<int>{0}));
  EXPECT_EQ(window_starts(16, 9, 7), (std::vector<int>{0, 7}));
}

TEST(Windows, RejectsWindowLargerThanMap) {
  EXPECT_THROW(window_grid(10, 4, 5, 1), std::invalid_argument);
  EXPECT_THROW(window_starts(10, 3, 0), std::invalid_argument);
}

TEST(Windows, CoveragePropertySmall) {
  for (int h = 1; h <= 20; ++h)
    for (int k = 1; k <= h; ++k)
      for (int s = 1; s <= k; ++s) {
        const auto starts = window_starts(h, k, s);
        std::vector<int> cover(static_cast<std::size_t>(h), 0);
        for (std::size_t i = 0; i < starts.size(); ++i) {
          if (i > 0) {
            ASSERT_LT(starts[i - 1], starts[i]);
          }
          ASSERT_LE(starts[i] + k, h);
          for (int p = starts[i]; p < starts[i] + k; ++p) cover[static_cast<std::size_t>(p)] = 1;
        }
        for (int c : cover) ASSERT_EQ(c, 1) << h << " " << k << " " << s;
      }
}

// (2 sigma(2) + 2)^2 + (1.9 sigma(1.9) + 1.9)^2 to 20 digits, computed at
// high precision. Window = whole map; threshold 0.9 keeps {2, 1.9} as hard.
TEST(RcLoss, HandComputedExample) {
  LossConfig cfg;
  cfg.window_k = 2;
  cfg.stride_s = 2;
  cfg.threshold = 0.9;
  const Tensor e(Shape{1, 1, 2, 2}, {2.0, 1.9, 0.5, 1.0});
  const double want = 26.771935080833725673 + 0.25 + 1.0;
  EXPECT_NEAR(rc_value(e, cfg), want, 1e-12);
}

TEST(RcLoss, StrictInequalityAtTheCut) {
  // 1.0 == 2.0 * 0.5 is not above the cut
  const auto masks = window_masks(Tensor(Shape{1, 1, 2, 2}, {2.0, 1.0, 0.0, 0.0}), window_grid(2, 2, 2, 2), 0.5);
  EXPECT_EQ(masks.error_prone[0], 1.0);
  EXPECT_EQ(masks.error_prone[1], 0.0);
  EXPECT_EQ(masks.error_tolerant[1], 1.0);
}

TEST(RcLoss, OverlapCountsEveryWindow) {
  // 3 x 3 map, k = 2, s = 1: the center pixel sits in all four windows.
  const auto masks = window_masks(Tensor(Shape{1, 1, 3, 3}, 0.5), window_grid(3, 3, 2, 1), 0.95);
  EXPECT_EQ(masks.error_prone.at(0, 0, 1, 1) + masks.error_tolerant.at(0, 0, 1, 1), 4.0);
  EXPECT_EQ(masks.error_prone.at(0, 0, 0, 1) + masks.error_tolerant.at(0, 0, 0, 1), 2.0);
  EXPECT_EQ(masks.error_prone.at(0, 0, 0, 0) + masks.error_tolerant.at(0, 0, 0, 0), 1.0);
}

TEST(RcLoss, DegeneratesToSquaredErrorAtThresholdOne) {
  LossConfig cfg;
  cfg.window_k = 4;
  cfg.stride_s = 4;
  cfg.threshold = 1.0;
  Rng rng(3);
  Tensor e(Shape{2, 1, 8, 12});
  double sq = 0.0;
  for (double& v : e.values()) {
    v = rng.uniform(0.0, 3.0);
    sq += v * v;
  }
  EXPECT_NEAR(rc_value(e, cfg), sq / 2.0, 1e-12 * sq);
}

TEST(RcLoss, ZeroErrorGivesZeroLoss) {
  LossConfig cfg;
  cfg.window_k = 3;
  cfg.stride_s = 2;
  EXPECT_EQ(rc_value(Tensor(Shape{1, 1, 5, 5}), cfg), 0.0);
}

TEST(RcLoss, HardPixelsCostMoreThanSquaredError) {
  LossConfig cfg;
  cfg.window_k = 4;
  cfg.stride_s = 4;
  Rng rng(4);
  Tensor e(Shape{1, 1, 8, 8});
  for (double& v : e.values()) v = rng.uniform(0.01, 1.0);
  cfg.threshold = 1.0;
  const double mse = rc_value(e, cfg);
  cfg.threshold = 0.95;
  EXPECT_GT(rc_value(e, cfg), mse);
}

TEST(RcLoss, MaskCarriesNoGradient) {
  // Gradient equals the analytic per-pixel derivative with the masks frozen.
  LossConfig cfg;
  cfg.window_k = 2;
  cfg.stride_s = 2;
  cfg.threshold = 0.9;
  Tape tape;
  const Var e = tape.input(Tensor(Shape{1, 1, 2, 2}, {2.0, 1.9, 0.5, 1.0}));
  tape.backward(rc_loss(tape, e, cfg));
  auto dg = [](double x) {
    const double s = 1.0 / (1.0 + std::exp(-x));
    const double g = x * s + x;
    return 2.0 * g * (s + x * s * (1.0 - s) + 1.0);
  };
  EXPECT_NEAR(tape.grad(e)[0], dg(2.0), 1e-12);
  EXPECT_NEAR(tape.grad(e)[1], dg(1.9), 1e-12);
  EXPECT_NEAR(tape.grad(e)[2], 1.0, 1e-12);
  EXPECT_NEAR(tape.grad(e)[3], 2.0, 1e-12);
}

TEST(Euclidean, MeanOverBatch) {
  Tape tape;
  const Var p = tape.constant(Tensor(Shape{2, 1, 1, 2}, {1.0, 2.0, 3.0, 4.0}));
  const Var g = tape.constant(Tensor(Shape{2, 1, 1, 2}, {0.0, 0.0, 3.0, 2.0}));
  EXPECT_DOUBLE_EQ(tape.value(euclidean_loss(tape, p, g)).item(), (1.0 + 4.0 + 0.0 + 4.0) / 2.0);
  const Var bad = tape.constant(Tensor(Shape{2, 1, 2, 1}));
  EXPECT_THROW(euclidean_loss(tape, p, bad), ShapeError);
}

TEST(TotalLoss, WeightsTheTerms) {
  LossConfig cfg;
  cfg.window_k = 1;
  cfg.stride_s = 1;
  cfg.lambda = 1.5;
  cfg.gamma = 0.5;
  cfg.threshold = 1.0;
  Tape tape;
  const Var gt = tape.constant(Tensor(Shape{1, 1, 1, 2}, {1.0, 0.0}));
  model::ForwardVars fwd;
  fwd.f_wei = {tape.constant(Tensor(Shape{1, 1, 1, 2}, {1.0, 0.5})),
               tape.constant(Tensor(Shape{1, 1, 1, 2}, {0.0, 0.0}))};
  fwd.f_pre = tape.constant(Tensor(Shape{1, 1, 1, 2}, {3.0, 0.0}));
  const auto terms = total_loss(tape, fwd, gt, cfg);
  ASSERT_EQ(terms.wei.size(), 2u);
  const double w1 = tape.value(terms.wei[0]).item();
  const double w2 = tape.value(terms.wei[1]).item();
  const double pre = tape.value(terms.pre).item();
  EXPECT_DOUBLE_EQ(pre, 4.0);
  EXPECT_DOUBLE_EQ(w1, 0.25);
  EXPECT_DOUBLE_EQ(w2, 1.0);
  EXPECT_DOUBLE_EQ(tape.value(terms.total).item(), 0.5 * 4.0 + 1.5 * (0.25 + 1.0));
}
