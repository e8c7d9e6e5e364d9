#include <cmath>

#include <gtest/gtest.h>

#include "iiao/densitymap.hpp"
#include "iiao/rng.hpp"
#include "test_util.hpp"

using namespace iiao;
using namespace iiao::densitymap;
using iiao::testing::TempDir;

namespace {

AnnotationSet make(std::size_t w, std::size_t h, std::vector<Point> pts) {
  AnnotationSet a;
  a.width = w;
  a.height = h;
  a.points = std::move(pts);
  return a;
}

}  // namespace

TEST(Annotations, ParseJson) {
  const auto a = parse_annotations_json(R"({"w": 10, "h": 8, "points": [[1.5, 2], [9.9, 7.1]]})", "img");
  EXPECT_EQ(a.width, 10u);
  EXPECT_EQ(a.height, 8u);
  ASSERT_EQ(a.count(), 2u);
  EXPECT_EQ(a.points[1].x, 9.9);
  EXPECT_EQ(a.clamped, 0u);
}

TEST(Annotations, ClampRule) {
  const auto a = parse_annotations_json(R"({"w": 100, "h": 50, "points": [[100, 10], [-3, 60], [99.999, 49.5]]})");
  EXPECT_EQ(a.clamped, 2u);
  EXPECT_DOUBLE_EQ(a.points[0].x, 99.999);
  EXPECT_EQ(a.points[1].x, 0.0);
  EXPECT_DOUBLE_EQ(a.points[1].y, 49.999);
  EXPECT_EQ(a.points[2].x, 99.999);
}

TEST(Annotations, MalformedInputNamesTheProblem) {
  auto message = [](const std::string& text) {
    try {
      parse_annotations_json(text, "x");
    } catch (const std::runtime_error& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  EXPECT_NE(message(R"({"w": 10, "points": []})").find("'h'"), std::string::npos);
  EXPECT_NE(message(R"({"w": 10, "h": 0, "points": []})").find("positive"), std::string::npos);
  EXPECT_NE(message(R"({"w": 10, "h": 5, "points": [[1]]})").find("points[0]"), std::string::npos);
  EXPECT_NE(message("{not json").find("annotation x"), std::string::npos);
}

TEST(Annotations, CsvWithSidecarAndRoundTrip) {
  TempDir dir;
  iiao::testing::spit(dir / "a.csv", "x,y\n1.5,2.5\n3,4\n");
  iiao::testing::spit(dir / "a.dims", "20 10\n");
  const auto a = load_annotations(dir / "a.csv", AnnotationFormat::csv);
  EXPECT_EQ(a.width, 20u);
  EXPECT_EQ(a.count(), 2u);
  EXPECT_EQ(a.image_id, "a");
  save_annotations_json(a, dir / "a.json");
  const auto b = load_annotations(dir / "a.json", AnnotationFormat::json);
  EXPECT_EQ(b.points[0].x, 1.5);
  EXPECT_EQ(b.height, 10u);

  iiao::testing::spit(dir / "bad.csv", "x,y\n1.5,abc\n");
  try {
    load_annotations(dir / "bad.csv", AnnotationFormat::csv, std::pair<std::size_t, std::size_t>{5, 5});
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos);
  }
}

// Reference values from an independent NumPy rendering of the same kernel.
TEST(Render, FixedKernelReferenceValues) {
  const auto dm = render_fixed(make(21, 21, {{10.5, 10.5}}), 2.0);
  EXPECT_NEAR(dm.at(10, 10), 0.039790135140764016, 1e-15);
  EXPECT_NEAR(dm.at(10, 12), 0.024133936916982436, 1e-15);
  EXPECT_NEAR(dm.at(2, 10), 1.334810329891678e-05, 1e-18);
  EXPECT_EQ(dm.at(1, 10), 0.0);  // outside the ceil(4 sigma) square

  const auto corner = render_fixed(make(12, 10, {{0.2, 9.7}}), 1.5);
  EXPECT_NEAR(corner.at(9, 0), 0.213571220500627, 1e-14);
  EXPECT_NEAR(corner.at(8, 1), 0.1096511207377064, 1e-14);
  EXPECT_NEAR(corner.at(3, 6), 6.335366004949324e-09, 1e-21);
  EXPECT_NEAR(corner.sum(), 1.0, 1e-12);
}

TEST(Render, EmptyAnnotationsGiveZeroMap) {
  const auto dm = render_fixed(make(16, 16, {}), 4.0);
  EXPECT_EQ(dm.sum(), 0.0);
  EXPECT_EQ(render_adaptive(make(8, 8, {}), {}).sum(), 0.0);
}

TEST(Render, TinySigmaKeepsMassInOnePixel) {
  const auto dm = render_fixed(make(4, 4, {{2.5, 1.5}}), 1e-3);
  EXPECT_NEAR(dm.at(1, 2), 1.0, 1e-12);
  const auto under = render_fixed(make(4, 4, {{2.0, 1.0}}), 1e-200);
  EXPECT_NEAR(under.sum(), 1.0, 1e-12);
}

TEST(Render, RejectsNonPositiveSigma) {
  EXPECT_THROW(render_fixed(make(4, 4, {}), 0.0), std::invalid_argument);
}

// Four points on a 3 x 4 rectangle: each sees neighbors at 3, 4 and 5.
TEST(Render, AdaptiveSigmaFromNearestNeighbors) {
  const auto a = make(20, 20, {{2, 2}, {5, 2}, {2, 6}, {5, 6}});
  for (double s : adaptive_sigmas(a, {3, 0.3, 0.1, 15.0})) EXPECT_NEAR(s, 1.2, 1e-15);
  for (double s : adaptive_sigmas(a, {3, 0.3, 2.0, 15.0})) EXPECT_EQ(s, 2.0);
  for (double s : adaptive_sigmas(a, {4, 0.3, 1.0, 15.0})) EXPECT_EQ(s, 15.0);  // n <= k
}

TEST(Render, ConservesCountNearBorders) {
  Rng rng(9);
  for (int t = 0; t < 50; ++t) {
    AnnotationSet a = make(24, 16, {});
    for (int i = 0; i < 40; ++i) a.points.push_back({rng.uniform(0.0, 24.0), rng.uniform(0.0, 16.0)});
    EXPECT_NEAR(render_fixed(a, rng.uniform(0.3, 12.0)).sum(), 40.0, 40e-12);
    EXPECT_NEAR(render_adaptive(a, {}).sum(), 40.0, 40e-12);
  }
}

TEST(Render, LabelConfigDispatch) {
  LabelConfig cfg;
  const auto a = make(16, 16, {{3, 3}, {8, 8}});
  EXPECT_EQ(render(a, cfg).values, render_fixed(a, 4.0).values);
  cfg.mode = LabelMode::adaptive;
  EXPECT_EQ(render(a, cfg).values, render_adaptive(a, cfg.adaptive).values);
  cfg.sigma = -1.0;
  EXPECT_FALSE(cfg.validate().empty());
}

TEST(TargetGrid, SumPoolsByEight) {
  DensityMap dm(16, 8);
  for (std::size_t i = 0; i < dm.values.size(); ++i) dm.values[i] = static_cast<double>(i);
  const auto g = to_target_grid(dm, 8);
  EXPECT_EQ(g.width, 2u);
  EXPECT_EQ(g.height, 1u);
  double left = 0.0;
  for (std::size_t y = 0; y < 8; ++y)
    for (std::size_t x = 0; x < 8; ++x) left += dm.at(y, x);
  EXPECT_EQ(g.at(0, 0), left);
  EXPECT_EQ(g.sum(), dm.sum());
  EXPECT_THROW(to_target_grid(DensityMap(12, 8), 8), std::invalid_argument);
}

TEST(Export, CsvRoundTripIsExact) {
  TempDir dir;
  const auto dm = render_fixed(make(9, 7, {{2.2, 3.3}, {8.1, 0.4}}), 1.7);
  write_csv(dm, dir / "m.csv");
  const auto back = read_csv(dir / "m.csv");
  EXPECT_EQ(back.width, 9u);
  EXPECT_EQ(back.height, 7u);
  for (std::size_t i = 0; i < dm.values.size(); ++i) EXPECT_NEAR(back.values[i], dm.values[i], 1e-12);
  write_csv(dm, dir / "m2.csv");
  EXPECT_EQ(iiao::testing::slurp(dir / "m.csv"), iiao::testing::slurp(dir / "m2.csv"));
}

TEST(Export, PgmRecordsScale) {
  TempDir dir;
  DensityMap dm(3, 2);
  dm.values = {0.0, 0.5, 0.25, 0.0, 0.0, 0.1};
  const double scale = write_pgm(dm, dir / "m.pgm");
  EXPECT_DOUBLE_EQ(scale, 65535.0 / 0.5);
  const std::string bytes = iiao::testing::slurp(dir / "m.pgm");
  EXPECT_EQ(bytes.rfind("P5\n# scale 131070\n3 2\n65535\n", 0), 0u);
  const std::size_t header = std::string("P5\n# scale 131070\n3 2\n65535\n").size();
  ASSERT_EQ(bytes.size(), header + 12);
  const auto px = [&](std::size_t i) {
    return (static_cast<unsigned char>(bytes[header + 2 * i]) << 8) | static_cast<unsigned char>(bytes[header + 2 * i + 1]);
  };
  EXPECT_EQ(px(1), 65535);
  EXPECT_EQ(px(2), 32768);  // round(0.25 * 131070) = 32767.5 -> 32768
}
