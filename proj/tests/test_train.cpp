#include <algorithm>
#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "iiao/image_ops.hpp"
#include "iiao/synthdata.hpp"
#include "iiao/train.hpp"
#include "test_util.hpp"

using namespace iiao;
using namespace iiao::train;
using densitymap::AnnotationSet;
using iiao::testing::slurp;
using iiao::testing::TempDir;

namespace {

model::ModelConfig small_model() {
  model::ModelConfig c;
  c.base_channels = 16;
  c.reduction_ratio = 4;
  c.encoder_widths = {4, 8, 8, 8};
  c.seed = 2;
  return c;
}

losses::LossConfig small_loss() {
  losses::LossConfig c;
  c.window_k = 3;
  c.stride_s = 2;
  return c;
}

TrainConfig small_train() {
  TrainConfig c;
  c.crop = 32;
  c.batch_size = 2;
  c.epochs = 2;
  c.lr0 = 1e-3;
  c.seed = 4;
  return c;
}

std::vector<Sample> small_dataset(int n, int size = 40, int height = 36) {
  synthdata::SceneSpec spec;
  spec.width = size;
  spec.height = height;
  std::vector<Sample> out;
  for (int i = 0; i < n; ++i) {
    spec.seed = static_cast<std::uint64_t>(100 + i);
    spec.n_points = 3 + 2 * i;
    auto scene = synthdata::generate(spec);
    out.push_back({"s" + std::to_string(i), scene.image, scene.annotations});
  }
  return out;
}

AnnotationSet points(std::size_t w, std::size_t h, std::vector<densitymap::Point> pts) {
  AnnotationSet a;
  a.width = w;
  a.height = h;
  a.points = std::move(pts);
  return a;
}

}  // namespace

TEST(Schedule, HalvesEveryInterval) {
  TrainConfig c;
  EXPECT_EQ(lr_at(0, c), 1e-4);
  EXPECT_EQ(lr_at(99, c), 1e-4);
  EXPECT_EQ(lr_at(100, c), 5e-5);
  EXPECT_EQ(lr_at(250, c), 2.5e-5);
}

TEST(TrainConfig, ReportsEveryProblem) {
  TrainConfig c;
  EXPECT_TRUE(c.validate().empty());
  c.crop = 20;
  c.flip_p = 2.0;
  c.lr0 = 0.0;
  c.batch_size = 0;
  EXPECT_GE(c.validate().size(), 4u);
  EXPECT_THROW(c.require_valid(), std::invalid_argument);
}

TEST(Adam, FirstStepMatchesReference) {
  model::ModelParams p{{"w", Tensor(Shape{1}, 0.0)}};
  model::Gradients g{{"w", Tensor(Shape{1}, 1.0)}};
  Adam opt;
  opt.step(p, g, 0.1);
  EXPECT_NEAR(p.at("w")[0], -0.099999999000000010, 2e-17);
  EXPECT_EQ(opt.steps(), 1);
}

TEST(Adam, ZeroGradientIsAFixedPoint) {
  model::ModelParams p{{"w", Tensor(Shape{3}, {1.0, -2.0, 0.5})}};
  const model::ModelParams before = p;
  model::Gradients g{{"w", Tensor(Shape{3})}};
  Adam opt;
  for (int i = 0; i < 5; ++i) opt.step(p, g, 0.1);
  EXPECT_EQ(p.at("w"), before.at("w"));
}

TEST(Adam, RejectsNonFiniteAndNamesTheParameter) {
  model::ModelParams p{{"a", Tensor(Shape{2}, 1.0)}, {"b", Tensor(Shape{2}, 1.0)}};
  const model::ModelParams before = p;
  model::Gradients g{{"a", Tensor(Shape{2}, 1.0)},
                     {"b", Tensor(Shape{2}, {0.0, std::numeric_limits<double>::quiet_NaN()})}};
  Adam opt;
  try {
    opt.step(p, g, 0.1);
    FAIL() << "expected NonFiniteGradient";
  } catch (const NonFiniteGradient& e) {
    EXPECT_EQ(e.param(), "b");
  }
  EXPECT_EQ(p.at("a"), before.at("a"));
  EXPECT_EQ(opt.steps(), 0);
}

TEST(ClipGlobalNorm, ScalesDownOnly) {
  model::Gradients g{{"a", Tensor(Shape{2}, {3.0, 0.0})}, {"b", Tensor(Shape{1}, {4.0})}};
  EXPECT_DOUBLE_EQ(clip_global_norm(g, 10.0), 5.0);
  EXPECT_EQ(g.at("a")[0], 3.0);
  EXPECT_DOUBLE_EQ(clip_global_norm(g, 1.0), 5.0);
  EXPECT_NEAR(g.at("a")[0], 0.6, 1e-15);
  EXPECT_NEAR(g.at("b")[0], 0.8, 1e-15);
}

TEST(Flip, MirrorsAboutTheCenterLine) {
  const auto f = flip_points(points(400, 10, {{10.0, 3.0}, {399.5, 1.0}}));
  EXPECT_DOUBLE_EQ(f.points[0].x, 390.0);
  EXPECT_DOUBLE_EQ(f.points[0].y, 3.0);
  EXPECT_DOUBLE_EQ(f.points[1].x, 0.5);
}

TEST(Flip, IsAnInvolutionAndStaysInside) {
  Rng rng(8);
  std::vector<densitymap::Point> pts;
  for (int i = 0; i < 200; ++i) pts.push_back({rng.uniform(0.001, 37.0), rng.uniform(0.0, 20.0)});
  pts.push_back({0.0, 0.0});
  const auto a = points(37, 20, pts);
  const auto once = flip_points(a);
  const auto twice = flip_points(once);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    EXPECT_GE(once.points[i].x, 0.0);
    EXPECT_LT(once.points[i].x, 37.0);
    if (i + 1 < pts.size()) {
      EXPECT_NEAR(twice.points[i].x, pts[i].x, 1e-12);
    }
  }
}

TEST(Flip, PointStaysOnItsPixel) {
  // a point in pixel j lands in the pixel that flip_horizontal moves j to
  Tensor img(Shape{3, 1, 9});
  img[4 - 1] = 1.0;
  const auto flipped = image::flip_horizontal(img);
  const auto f = flip_points(points(9, 1, {{3.4, 0.5}}));
  const auto j = static_cast<std::size_t>(f.points[0].x);
  EXPECT_EQ(flipped[j], 1.0);
}

TEST(ReflectPad, MirrorsInteriorPointsOnly) {
  Tensor img(Shape{3, 1, 5});
  const auto p = reflect_pad(img, points(5, 1, {{0.5, 0.5}, {1.2, 0.5}, {3.5, 0.5}, {4.5, 0.5}}), 1, 8);
  EXPECT_EQ(p.image.dim(2), 8u);
  EXPECT_EQ(p.annotations.width, 8u);
  std::vector<double> xs;
  for (const auto& q : p.annotations.points) xs.push_back(q.x);
  ASSERT_EQ(xs.size(), 6u);
  EXPECT_DOUBLE_EQ(xs[4], 7.8);
  EXPECT_DOUBLE_EQ(xs[5], 5.5);
}

TEST(ReflectPad, CopiedPixelsCarryTheirPoints) {
  // every padded pixel holding a copy of pixel j gets a point iff j has one
  Tensor img(Shape{3, 3, 4});
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<double>(i % 12);
  const auto p = reflect_pad(img, points(4, 3, {{1.5, 1.5}}), 7, 9);
  std::size_t hits = 0;
  for (std::size_t y = 0; y < 7; ++y)
    for (std::size_t x = 0; x < 9; ++x)
      if (p.image[y * 9 + x] == 5.0) ++hits;
  EXPECT_EQ(p.annotations.count(), hits);
  for (const auto& q : p.annotations.points) {
    const auto x = static_cast<std::size_t>(q.x), y = static_cast<std::size_t>(q.y);
    EXPECT_EQ(p.image[y * 9 + x], 5.0);
  }
}

TEST(CropPoints, KeepsOnlyInsideAndTranslates) {
  const auto c = crop_points(points(20, 20, {{5.0, 5.0}, {12.5, 3.0}, {19.0, 19.0}}), 2, 10, 8, 8);
  ASSERT_EQ(c.count(), 1u);
  EXPECT_DOUBLE_EQ(c.points[0].x, 2.5);
  EXPECT_DOUBLE_EQ(c.points[0].y, 1.0);
}

TEST(Augment, TargetCountMatchesCroppedHeads) {
  const auto data = small_dataset(3);
  TrainConfig cfg = small_train();
  cfg.gray_p = 0.5;
  densitymap::LabelConfig labels;
  labels.sigma = 1.0;
  Rng rng(1);
  for (int i = 0; i < 20; ++i) {
    const auto& s = data[static_cast<std::size_t>(i % 3)];
    const auto a = augment(s.image, s.annotations, cfg, labels, rng);
    EXPECT_EQ(a.image.shape(), (Shape{3, 32, 32}));
    EXPECT_EQ(a.target.width, 4u);
    EXPECT_EQ(a.target.height, 4u);
    EXPECT_NEAR(a.target.sum(), static_cast<double>(a.annotations.count()), 1e-9);
  }
}

TEST(Augment, PadsSmallImages) {
  const auto data = small_dataset(1, 20, 16);
  TrainConfig cfg = small_train();
  Rng rng(2);
  const auto a = augment(data[0].image, data[0].annotations, cfg, densitymap::LabelConfig{}, rng);
  EXPECT_EQ(a.image.shape(), (Shape{3, 32, 32}));
  EXPECT_GE(a.annotations.count(), data[0].annotations.count());
}

TEST(Step, SmallLearningRateDecreasesTheLoss) {
  const auto cfg = small_model();
  auto params = model::init_params(cfg);
  const auto data = small_dataset(2, 32, 32);
  Tensor images(Shape{2, 3, 32, 32});
  Tensor targets(Shape{2, 1, 4, 4});
  for (std::size_t b = 0; b < 2; ++b) {
    const auto& s = data[b];
    for (std::size_t i = 0; i < 3 * 32 * 32; ++i) images[b * 3 * 32 * 32 + i] = s.image[i];
    const auto t = densitymap::to_target_grid(densitymap::render_fixed(s.annotations, 2.0), 8);
    for (std::size_t i = 0; i < 16; ++i) targets[b * 16 + i] = t.values[i];
  }
  const auto before = evaluate_batch(params, cfg, small_loss(), images, targets, true);
  ASSERT_FALSE(before.grads.empty());
  // plain gradient step
  for (auto& [name, p] : params) {
    const Tensor& g = before.grads.at(name);
    for (std::size_t i = 0; i < p.size(); ++i) p[i] -= 1e-6 * g[i];
  }
  const auto after = evaluate_batch(params, cfg, small_loss(), images, targets, false);
  EXPECT_LT(after.total, before.total);
  EXPECT_TRUE(after.grads.empty());
}

TEST(TrainLoop, DeterministicAndWritesOutputs) {
  const auto data = small_dataset(3);
  TempDir a, b;
  const auto ra = train_loop(small_model(), small_train(), small_loss(), densitymap::LabelConfig{}, data, {a.path(), {}});
  const auto rb = train_loop(small_model(), small_train(), small_loss(), densitymap::LabelConfig{}, data, {b.path(), {}});
  ASSERT_FALSE(ra.aborted);
  ASSERT_EQ(ra.log.size(), 2u);
  EXPECT_EQ(slurp(a / "metrics.csv"), slurp(b / "metrics.csv"));
  EXPECT_EQ(slurp(a / "last.ckpt"), slurp(b / "last.ckpt"));
  EXPECT_EQ(slurp(a / "best.ckpt"), slurp(b / "best.ckpt"));
  const std::string csv = slurp(a / "metrics.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), log_header(2));
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
  EXPECT_NE(ra.params, model::init_params(small_model()));
  EXPECT_GE(ra.best_epoch, 0);
  EXPECT_EQ(model::load_checkpoint(a / "last.ckpt").epoch, 1);
}

TEST(TrainLoop, CallbackSeesEveryEpoch) {
  const auto data = small_dataset(2);
  int calls = 0;
  TrainOutputs out;
  out.on_epoch = [&](const EpochLog& e) { EXPECT_EQ(e.epoch, calls++); };
  train_loop(small_model(), small_train(), small_loss(), densitymap::LabelConfig{}, data, out);
  EXPECT_EQ(calls, 2);
}

TEST(TrainLoop, AbortsOnNonFiniteInput) {
  auto data = small_dataset(2);
  for (auto& s : data) std::ranges::fill(s.image.values(), std::numeric_limits<double>::quiet_NaN());
  TempDir dir;
  const auto r = train_loop(small_model(), small_train(), small_loss(), densitymap::LabelConfig{}, data, {dir.path(), {}});
  EXPECT_TRUE(r.aborted);
  EXPECT_NE(r.abort_reason.find("non-finite"), std::string::npos);
  EXPECT_TRUE(r.log.empty());
}

TEST(LogRow, RoundTripsDoubles) {
  EpochLog row;
  row.epoch = 3;
  row.lr = 1e-4;
  row.loss_total = 0.1 + 0.2;
  row.loss_wei = {1.0 / 3.0, 2.0};
  row.loss_pre = 5.0;
  row.train_mae = 0.25;
  const std::string s = format_log_row(row);
  const std::string header = log_header(2);
  EXPECT_EQ(std::count(s.begin(), s.end(), ','), std::count(header.begin(), header.end(), ','));
  EXPECT_NE(s.find("0.30000000000000004"), std::string::npos);
}
