#include <array>
#include <cstdio>
#include <cmath>
#include <cstdlib>
#include <string>

#include <gtest/gtest.h>

#include "iiao/densitymap.hpp"
#include "iiao/model.hpp"
#include "test_util.hpp"

using iiao::testing::slurp;
using iiao::testing::spit;
using iiao::testing::TempDir;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run cli(const std::string& args) {
  const std::string cmd = std::string(IIAO_CLI_PATH) + " " + args + " 2>&1";
  Run r;
  FILE* p = ::popen(cmd.c_str(), "r");
  if (!p) return r;
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), buf.size(), p)) r.out += buf.data();
  const int status = ::pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string q(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

}  // namespace

TEST(Cli, ExitCodes) {
  EXPECT_EQ(cli("--help").code, 0);
  EXPECT_EQ(cli("").code, 2);
  EXPECT_EQ(cli("nosuchcommand").code, 2);
  EXPECT_EQ(cli("synth --train 1 --test 1").code, 2);
  EXPECT_EQ(cli("gen-labels --data /tmp --out /tmp/x --format bmp").code, 2);
  EXPECT_EQ(cli("eval --checkpoint /nonexistent.ckpt --data /nonexistent").code, 2);
  TempDir dir;
  spit(dir / "junk.ckpt", "not a checkpoint");
  EXPECT_EQ(cli("eval --checkpoint " + q(dir / "junk.ckpt") + " --data " + q(dir.path())).code, 1);
}

TEST(Cli, BadConfigListsEveryError) {
  TempDir dir;
  spit(dir / "bad.toml", "[train]\nepochs = -1\nbatch_size = 0\n");
  const auto r = cli("train --config " + q(dir / "bad.toml") + " --data /tmp");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("epochs"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("batch_size"), std::string::npos) << r.out;
}

TEST(Cli, SynthIsIdempotent) {
  TempDir a, b;
  const std::string args = " --train 2 --test 1 --seed 5 --width 32 --height 32 --count-min 2 --count-max 6";
  ASSERT_EQ(cli("synth --out " + q(a.path()) + args).code, 0);
  ASSERT_EQ(cli("synth --out " + q(b.path()) + args).code, 0);
  for (const char* f : {"manifest.json", "train/train_0001.ppm", "train/train_0001.json", "test/test_0000.ppm"})
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
}

TEST(Cli, GenLabelsConservesCounts) {
  TempDir dir;
  ASSERT_EQ(cli("synth --train 3 --test 1 --seed 2 --width 40 --height 24 --out " + q(dir.path())).code, 0);
  for (const char* mode : {"fixed", "adaptive"}) {
    const auto out = dir / (std::string("maps_") + mode);
    const auto r = cli("gen-labels --data " + q(dir / "train") + " --out " + q(out) + " --mode " + mode + " --grid 8");
    ASSERT_EQ(r.code, 0) << r.out;
    for (int i = 0; i < 3; ++i) {
      const std::string id = "train_000" + std::to_string(i);
      const auto dm = iiao::densitymap::read_csv(out / (id + ".csv"));
      const auto ann = iiao::densitymap::load_annotations(dir / "train" / (id + ".json"),
                                                          iiao::densitymap::AnnotationFormat::json);
      EXPECT_EQ(dm.width, 5u);
      EXPECT_NEAR(dm.sum(), static_cast<double>(ann.count()), 1e-9);
    }
  }
}

TEST(Cli, TrainEvalPredict) {
  TempDir dir;
  ASSERT_EQ(cli("synth --train 2 --test 2 --seed 1 --width 32 --height 32 --count-min 1 --count-max 5 --out " +
                q(dir.path()))
                .code,
            0);
  spit(dir / "c.toml",
       "[model]\nbase_channels = 16\nreduction_ratio = 4\nencoder_widths = [4, 8, 8, 8]\n"
       "[train]\ncrop = 32\nbatch_size = 2\nepochs = 2\n[loss]\nwindow_k = 3\nstride_s = 2\n");
  const auto run = dir / "run";
  const auto t = cli("train --config " + q(dir / "c.toml") + " --data " + q(dir / "train") + " --out " + q(run));
  ASSERT_EQ(t.code, 0) << t.out;
  for (const char* f : {"config.toml", "metrics.csv", "best.ckpt", "last.ckpt"})
    EXPECT_TRUE(std::filesystem::exists(run / f)) << f;
  EXPECT_NE(slurp(run / "config.toml").find("epochs = 2"), std::string::npos);

  const auto e = cli("eval --checkpoint " + q(run) + " --data " + q(dir / "test") + " --out " + q(dir / "rep"));
  ASSERT_EQ(e.code, 0) << e.out;
  EXPECT_NE(e.out.find("MAE"), std::string::npos);
  for (const char* f : {"report.json", "scatter.csv", "eval_config.json"})
    EXPECT_TRUE(std::filesystem::exists(dir / "rep" / f)) << f;

  const auto p = cli("predict --checkpoint " + q(run / "last.ckpt") + " --image " +
                     q(dir / "test/test_0000.ppm") + " --out " + q(dir / "map.csv"));
  ASSERT_EQ(p.code, 0) << p.out;
  const double count = std::stod(p.out);
  EXPECT_NEAR(iiao::densitymap::read_csv(dir / "map.csv").sum(), count, 1e-9 * (1.0 + std::abs(count)));
}

TEST(Cli, VerifyPasses) {
  const auto r = cli("verify --suite windows");
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("[PASS]"), std::string::npos);
  EXPECT_EQ(r.out.find("[FAIL]"), std::string::npos);
  EXPECT_EQ(cli("verify --suite nosuch").code, 2);
}
