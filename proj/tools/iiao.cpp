// Command-line entry point: synth, gen-labels, train, eval, predict, verify.
// Exit codes: 0 success, 1 runtime or verification failure, 2 usage/config error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "iiao/config.hpp"
#include "iiao/dataset.hpp"
#include "iiao/densitymap.hpp"
#include "iiao/eval.hpp"
#include "iiao/image_io.hpp"
#include "iiao/kernels.hpp"
#include "iiao/model.hpp"
#include "iiao/synthdata.hpp"
#include "iiao/train.hpp"
#include "iiao/verify.hpp"

namespace fs = std::filesystem;
using namespace iiao;

namespace {

constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

// A run directory means its best checkpoint.
fs::path resolve_checkpoint(const std::string& arg) {
  fs::path p(arg);
  if (fs::is_directory(p)) p /= "best.ckpt";
  if (!fs::exists(p)) throw UsageError("checkpoint not found: " + p.string());
  return p;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  int n_train = 0, n_test = 0;
  std::uint64_t seed = 0;
  std::string out;
  int width = 128, height = 128;
  int count_min = 10, count_max = 300;
  double radius_min = 2.0, radius_max = 5.0;
  std::string background = "gradient";
  bool clustered = false;
};

int cmd_synth(const SynthArgs& a) {
  synthdata::SplitTemplate templ;
  templ.scene.width = a.width;
  templ.scene.height = a.height;
  templ.scene.head_radius_min = a.radius_min;
  templ.scene.head_radius_max = a.radius_max;
  try {
    templ.scene.background = synthdata::parse_background(a.background);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  templ.scene.clustered = a.clustered;
  templ.count_min = a.count_min;
  templ.count_max = a.count_max;
  const auto m = synthdata::generate_split(a.n_train, a.n_test, templ, a.seed, a.out);
  std::printf("wrote %zu scenes to %s\n", m.scenes.size(), a.out.c_str());
  return kOk;
}

struct LabelArgs {
  std::string data, out, mode = "fixed", format = "csv";
  double sigma = 4.0, beta = 0.3, sigma_min = 1.0, sigma_max = 15.0;
  int k = 3;
  int grid = 1;
};

int cmd_gen_labels(const LabelArgs& a) {
  densitymap::LabelConfig cfg;
  if (a.mode == "fixed") cfg.mode = densitymap::LabelMode::fixed;
  else if (a.mode == "adaptive") cfg.mode = densitymap::LabelMode::adaptive;
  else throw UsageError("--mode must be fixed or adaptive");
  cfg.sigma = a.sigma;
  cfg.adaptive = {a.k, a.beta, a.sigma_min, a.sigma_max};
  const auto errors = cfg.validate();
  if (!errors.empty()) throw UsageError(errors.front());
  if (a.format != "csv" && a.format != "pgm") throw UsageError("--format must be csv or pgm");
  if (a.grid != 1 && a.grid != 8) throw UsageError("--grid must be 1 or 8");
  if (!fs::is_directory(a.data)) throw std::runtime_error("not a directory: " + a.data);

  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(a.data))
    if (e.is_regular_file() && e.path().extension() == ".json" && e.path().filename() != "manifest.json")
      files.push_back(e.path());
  std::sort(files.begin(), files.end());
  fs::create_directories(a.out);

  double worst = 0.0;
  for (const auto& f : files) {
    const auto ann = densitymap::load_annotations(f, densitymap::AnnotationFormat::json);
    auto dm = densitymap::render(ann, cfg);
    if (a.grid == 8) dm = densitymap::to_target_grid(dm, 8);
    const fs::path target = fs::path(a.out) / (f.stem().string() + "." + a.format);
    if (a.format == "csv") densitymap::write_csv(dm, target);
    else densitymap::write_pgm(dm, target);
    worst = std::max(worst, std::abs(dm.sum() - static_cast<double>(ann.count())));
    if (ann.clamped) std::fprintf(stderr, "%s: %zu points clamped into the image\n", f.string().c_str(), ann.clamped);
  }
  std::printf("wrote %zu maps to %s (max |sum - count| = %.3g)\n", files.size(), a.out.c_str(), worst);
  return kOk;
}

struct TrainArgs {
  std::string config, data, out;
  std::vector<std::string> set;
  int epochs = 0;
};

int cmd_train(const TrainArgs& a) {
  std::vector<std::string> overrides = a.set;
  if (a.epochs > 0) overrides.push_back("train.epochs=" + std::to_string(a.epochs));
  if (!a.data.empty()) overrides.push_back("paths.train_data=" + a.data);
  if (!a.out.empty()) overrides.push_back("paths.out=" + a.out);
  const config::RunConfig cfg = config::load(a.config, overrides);
  if (cfg.paths.train_data.empty()) throw UsageError("no training data: set paths.train_data or --data");
  if (cfg.paths.out.empty()) throw UsageError("no output directory: set paths.out or --out");

  const auto dataset = load_dataset(cfg.paths.train_data);
  fs::create_directories(cfg.paths.out);
  write_text(fs::path(cfg.paths.out) / "config.toml", config::to_text(cfg));

  train::TrainOutputs outputs;
  outputs.dir = cfg.paths.out;
  outputs.on_epoch = [](const train::EpochLog& row) {
    std::printf("epoch %d  lr %.3g  loss %.6g  train_mae %.4f\n", row.epoch, row.lr, row.loss_total, row.train_mae);
    std::fflush(stdout);
  };
  const auto result = train::train_loop(cfg.model, cfg.train, cfg.loss, cfg.labels, dataset, outputs);
  if (result.aborted) {
    std::fprintf(stderr, "training aborted: %s\n", result.abort_reason.c_str());
    return kFailure;
  }
  std::printf("best train MAE %.4f at epoch %d; checkpoints in %s\n", result.best_mae, result.best_epoch,
              cfg.paths.out.c_str());
  return kOk;
}

struct EvalArgs {
  std::string checkpoint, data, out;
  std::vector<double> levels = {50.0, 500.0};
  bool no_rescale = false;
};

int cmd_eval(const EvalArgs& a) {
  const auto ckpt = model::load_checkpoint(resolve_checkpoint(a.checkpoint));
  eval::EvalOptions opts;
  opts.level_bounds = a.levels;
  opts.rescale_large = !a.no_rescale;
  const auto report = eval::evaluate(load_dataset(a.data), ckpt.params, ckpt.config, opts);
  std::printf("MAE %.4f  MSE %.4f  (%zu images)\n", report.overall.mae, report.overall.mse, report.per_image.size());
  for (const auto& l : report.levels)
    std::printf("  %-10s n=%-4zu MAE %.4f  MSE %.4f\n", l.label.c_str(), l.n, l.metrics.mae, l.metrics.mse);
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    eval::write_report_json(report, fs::path(a.out) / "report.json");
    eval::write_scatter_csv(report, fs::path(a.out) / "scatter.csv");
    nlohmann::ordered_json echo;
    echo["checkpoint"] = a.checkpoint;
    echo["data"] = a.data;
    echo["levels"] = a.levels;
    echo["rescale_large"] = opts.rescale_large;
    echo["model"] = nlohmann::json::parse(model::config_to_json(ckpt.config));
    write_text(fs::path(a.out) / "eval_config.json", echo.dump(2) + "\n");
  }
  return kOk;
}

struct PredictArgs {
  std::string checkpoint, image, out, format = "csv";
};

int cmd_predict(const PredictArgs& a) {
  if (a.format != "csv" && a.format != "pgm") throw UsageError("--format must be csv or pgm");
  const auto ckpt = model::load_checkpoint(resolve_checkpoint(a.checkpoint));
  const auto pred = eval::predict_count(eval::rescale_large(read_ppm(a.image)), ckpt.params, ckpt.config);
  if (a.format == "csv") densitymap::write_csv(pred.map, a.out);
  else densitymap::write_pgm(pred.map, a.out);
  std::printf("%.17g\n", pred.count);
  return kOk;
}

int cmd_verify(const std::string& suite, std::uint64_t seed) {
  std::vector<verify::SuiteResult> results;
  try {
    results = verify::run(suite, seed);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  for (const auto& s : results) {
    for (const auto& c : s.cases)
      std::printf("[%s] %s/%s: %s\n", c.passed ? "PASS" : "FAIL", s.suite.c_str(), c.name.c_str(), c.detail.c_str());
  }
  for (const auto& s : results)
    if (const auto* f = s.first_failure()) {
      std::printf("first failure: %s/%s: %s\n", s.suite.c_str(), f->name.c_str(), f->detail.c_str());
      return kFailure;
    }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Crowd-counting density-map toolkit"};
  app.require_subcommand(1);
  int threads = 0;
  std::string backend;
  app.add_option("--threads", threads, "OpenMP thread count (overrides IIAO_THREADS)");
  app.add_option("--backend", backend, "kernel backend: serial or omp")->check(CLI::IsMember({"serial", "omp"}));

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic train/test split");
  synth->add_option("--train", sa.n_train, "training scenes")->required();
  synth->add_option("--test", sa.n_test, "test scenes")->required();
  synth->add_option("--seed", sa.seed, "split seed");
  synth->add_option("--out", sa.out, "output directory")->required();
  synth->add_option("--width", sa.width);
  synth->add_option("--height", sa.height);
  synth->add_option("--count-min", sa.count_min);
  synth->add_option("--count-max", sa.count_max);
  synth->add_option("--radius-min", sa.radius_min);
  synth->add_option("--radius-max", sa.radius_max);
  synth->add_option("--background", sa.background, "flat, gradient or noise");
  synth->add_flag("--clustered", sa.clustered, "draw heads from 1-4 Gaussian clusters");

  LabelArgs la;
  auto* labels = app.add_subcommand("gen-labels", "Render density maps from annotation files");
  labels->add_option("--data", la.data, "directory of .json annotations")->required();
  labels->add_option("--out", la.out, "output directory")->required();
  labels->add_option("--mode", la.mode, "fixed or adaptive");
  labels->add_option("--sigma", la.sigma, "fixed kernel width");
  labels->add_option("--k", la.k, "neighbors for the adaptive kernel");
  labels->add_option("--beta", la.beta, "adaptive kernel scale");
  labels->add_option("--sigma-min", la.sigma_min);
  labels->add_option("--sigma-max", la.sigma_max);
  labels->add_option("--format", la.format, "csv or pgm");
  labels->add_option("--grid", la.grid, "1 for full resolution, 8 for the 1/8 training grid");

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "Train from a config file");
  tr->add_option("--config", ta.config, "config file")->required()->check(CLI::ExistingFile);
  tr->add_option("--set", ta.set, "override, e.g. --set train.lr0=1e-3");
  tr->add_option("--epochs", ta.epochs, "override train.epochs");
  tr->add_option("--data", ta.data, "override paths.train_data");
  tr->add_option("--out", ta.out, "override paths.out");

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  ev->add_option("--checkpoint", ea.checkpoint, "checkpoint file or run directory")->required();
  ev->add_option("--data", ea.data, "dataset directory")->required();
  ev->add_option("--out", ea.out, "report directory");
  ev->add_option("--levels", ea.levels, "density-level bounds")->delimiter(',');
  ev->add_flag("--no-rescale", ea.no_rescale, "skip the large-image downscale");

  PredictArgs pa;
  auto* pr = app.add_subcommand("predict", "Predict a density map for one image");
  pr->add_option("--checkpoint", pa.checkpoint, "checkpoint file or run directory")->required();
  pr->add_option("--image", pa.image, "PPM image")->required()->check(CLI::ExistingFile);
  pr->add_option("--out", pa.out, "map output path")->required();
  pr->add_option("--format", pa.format, "csv or pgm");

  std::string suite = "all";
  std::uint64_t vseed = 0;
  auto* ve = app.add_subcommand("verify", "Run gradient-check and oracle suites");
  ve->add_option("--suite", suite, "grads, rcloss, softblock, windows, labels, metrics or all");
  ve->add_option("--seed", vseed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    kernels::configure_threads_from_env();
    if (threads > 0) kernels::set_threads(threads);
    if (!backend.empty()) {
      if (backend == "omp" && !kernels::omp_available()) throw UsageError("built without OpenMP");
      kernels::set_backend(backend == "omp" ? kernels::Backend::omp : kernels::Backend::serial);
    }
    if (synth->parsed()) return cmd_synth(sa);
    if (labels->parsed()) return cmd_gen_labels(la);
    if (tr->parsed()) return cmd_train(ta);
    if (ev->parsed()) return cmd_eval(ea);
    if (pr->parsed()) return cmd_predict(pa);
    if (ve->parsed()) return cmd_verify(suite, vseed);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  } catch (const config::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kFailure;
  }
  return kUsage;
}
