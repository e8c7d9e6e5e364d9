#include "iiao/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <stdexcept>

#include "iiao/densitymap.hpp"
#include "iiao/eval.hpp"
#include "iiao/grad_check.hpp"
#include "iiao/losses.hpp"
#include "iiao/model.hpp"
#include "iiao/ops.hpp"
#include "iiao/rng.hpp"

namespace iiao::verify {

bool SuiteResult::passed() const {
  return std::all_of(cases.begin(), cases.end(), [](const CaseResult& c) { return c.passed; });
}

const CaseResult* SuiteResult::first_failure() const {
  for (const auto& c : cases)
    if (!c.passed) return &c;
  return nullptr;
}

namespace {

std::string fmt(const char* pattern, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, pattern, a, b, c);
  return buf;
}

Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

double scalar_sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Runs a finite-difference check; the relative-error floor scales with |f| so
// that coordinates with negligible gradient are compared absolutely.
CaseResult fd_case(const std::string& name, const ScalarComputation& fn, std::vector<Tensor> inputs,
                   double tol, GradCheckOptions opts = {}, double floor_scale = 1e-6) {
  {
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& t : inputs) vars.push_back(tape.input(t, false));
    const double f = tape.value(fn(tape, vars)).item();
    opts.denominator_floor = floor_scale * std::max(1.0, std::abs(f));
  }
  const GradCheckResult r = grad_check(fn, std::move(inputs), opts);
  CaseResult c{name, r.max_relative_error < tol && r.checked > 0, {}};
  c.detail = fmt("max rel err %.3g over %.0f coords", r.max_relative_error, static_cast<double>(r.checked));
  if (r.skipped_nonsmooth) c.detail += fmt(" (%.0f at kinks skipped)", static_cast<double>(r.skipped_nonsmooth));
  if (!c.passed)
    c.detail += fmt("; worst analytic %.10g vs numeric %.10g", r.worst_analytic, r.worst_numeric);
  return c;
}

// sum(op(x) * R) for a fixed random R, so every output gets a distinct weight.
ScalarComputation weighted(std::function<Var(Tape&, std::span<const Var>)> op, Tensor weights) {
  return [op, weights](Tape& tape, std::span<const Var> in) {
    const Var y = op(tape, in);
    return ops::sum_all(tape, ops::mul(tape, y, tape.constant(weights)));
  };
}

Shape out_shape(const std::function<Var(Tape&, std::span<const Var>)>& op, const std::vector<Tensor>& in) {
  Tape tape;
  std::vector<Var> vars;
  for (const Tensor& t : in) vars.push_back(tape.input(t, false));
  return tape.value(op(tape, vars)).shape();
}

}  // namespace

// ---------------------------------------------------------------------------
// soft block

CaseResult softblock_oracle(int trials, std::uint64_t seed, double tol) {
  Rng rng(seed, 0x736f6674ULL);
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    const auto B = static_cast<std::size_t>(rng.integer(1, 2));
    const auto C = static_cast<std::size_t>(rng.integer(1, 8));
    const auto H = static_cast<std::size_t>(rng.integer(1, 16));
    const auto W = static_cast<std::size_t>(rng.integer(1, 16));
    const Tensor att = random_tensor(rng, {B, C, H, W}, 0.0, 1.0);
    const Tensor mul = random_tensor(rng, {B, C, H, W}, -2.0, 2.0);

    Tape tape;
    const auto sb = model::soft_block(tape, tape.constant(att), tape.constant(mul));
    const Tensor& got = tape.value(sb.f_wei);
    if (got.shape() != Shape{B, 1, H, W})
      return {"softblock_oracle", false, "F_wei shape " + shape_str(got.shape())};

    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) {
          double mx = att.at(b, 0, y, x);
          for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, att.at(b, c, y, x));
          double z = 0.0, dot = 0.0;
          for (std::size_t c = 0; c < C; ++c) {
            const double e = std::exp(att.at(b, c, y, x) - mx);
            z += e;
            dot += e * mul.at(b, c, y, x);
          }
          worst = std::max(worst, std::abs(got.at(b, 0, y, x) - dot / z));
        }
  }
  return {"softblock_oracle", worst < tol, fmt("max abs diff %.3g over %.0f trials", worst, trials)};
}

// ---------------------------------------------------------------------------
// gradients

std::vector<CaseResult> primitive_grads(std::uint64_t seed, double tol) {
  Rng rng(seed, 0x7072696dULL);
  std::vector<CaseResult> out;
  using Op = std::function<Var(Tape&, std::span<const Var>)>;

  auto run = [&](const std::string& name, const Op& op, std::vector<Tensor> inputs, bool nonsmooth = false) {
    const Tensor w = random_tensor(rng, out_shape(op, inputs));
    GradCheckOptions opts;
    opts.skip_nonsmooth = nonsmooth;
    out.push_back(fd_case(name, weighted(op, w), std::move(inputs), tol, opts));
  };

  for (auto [stride, pad] : {std::pair{1, 1}, std::pair{2, 0}, std::pair{1, 2}}) {
    run("conv2d_s" + std::to_string(stride) + "_p" + std::to_string(pad),
        [stride, pad](Tape& t, std::span<const Var> in) {
          return ops::conv2d(t, in[0], in[1], in[2], {stride, pad});
        },
        {random_tensor(rng, {2, 3, 7, 6}), random_tensor(rng, {4, 3, 3, 3}), random_tensor(rng, {4})});
  }
  for (auto fn : {ops::Pointwise::relu, ops::Pointwise::sigmoid, ops::Pointwise::abs,
                  ops::Pointwise::square, ops::Pointwise::silu_plus_identity}) {
    const bool kink = fn == ops::Pointwise::relu || fn == ops::Pointwise::abs;
    run(std::string(ops::to_string(fn)),
        [fn](Tape& t, std::span<const Var> in) { return ops::pointwise(t, in[0], fn); },
        {random_tensor(rng, {2, 3, 4, 5}, -2.0, 2.0)}, kink);
  }
  run("channel_softmax", [](Tape& t, std::span<const Var> in) { return ops::channel_softmax(t, in[0]); },
      {random_tensor(rng, {2, 4, 3, 3}, -2.0, 2.0)});
  run("maxpool2", [](Tape& t, std::span<const Var> in) { return ops::resample(t, in[0], ops::Resample::maxpool2()); },
      {random_tensor(rng, {2, 2, 6, 8})}, true);
  run("bilinear_up2",
      [](Tape& t, std::span<const Var> in) { return ops::resample(t, in[0], ops::Resample::bilinear_up2()); },
      {random_tensor(rng, {1, 2, 3, 4})});
  run("sumpool4", [](Tape& t, std::span<const Var> in) { return ops::resample(t, in[0], ops::Resample::sumpool(4)); },
      {random_tensor(rng, {1, 2, 8, 4})});
  for (auto mode : {ops::CombineMode::mul, ops::CombineMode::add, ops::CombineMode::sub}) {
    const char* names[] = {"mul", "add", "sub"};
    run(names[static_cast<int>(mode)],
        [mode](Tape& t, std::span<const Var> in) { return ops::combine(t, in[0], in[1], mode); },
        {random_tensor(rng, {2, 3, 3, 2}), random_tensor(rng, {2, 3, 3, 2})});
  }
  run("concat_channels",
      [](Tape& t, std::span<const Var> in) { return ops::concat_channels(t, in[0], in[1]); },
      {random_tensor(rng, {2, 2, 3, 3}), random_tensor(rng, {2, 3, 3, 3})});
  run("sum_channels", [](Tape& t, std::span<const Var> in) { return ops::sum_channels(t, in[0]); },
      {random_tensor(rng, {2, 3, 4, 4})});
  run("scale", [](Tape& t, std::span<const Var> in) { return ops::scale(t, in[0], -1.75); },
      {random_tensor(rng, {1, 2, 3, 3})});
  out.push_back(fd_case(
      "sum_all", [](Tape& t, std::span<const Var> in) { return ops::sum_all(t, ops::square(t, in[0])); },
      {random_tensor(rng, {2, 2, 3, 3})}, tol));
  return out;
}

CaseResult softblock_grads(std::uint64_t seed, double tol) {
  Rng rng(seed, 0x73626772ULL);
  const Tensor att = random_tensor(rng, {2, 5, 4, 3}, 0.05, 0.95);
  const Tensor mul = random_tensor(rng, {2, 5, 4, 3}, -1.0, 1.0);
  const Tensor w_out = random_tensor(rng, {2, 5, 4, 3});
  const Tensor w_wei = random_tensor(rng, {2, 1, 4, 3});
  return fd_case(
      "soft_block",
      [&](Tape& t, std::span<const Var> in) {
        const auto sb = model::soft_block(t, in[0], in[1]);
        return ops::add(t, ops::sum_all(t, ops::mul(t, sb.f_out, t.constant(w_out))),
                        ops::sum_all(t, ops::mul(t, sb.f_wei, t.constant(w_wei))));
      },
      {att, mul}, tol);
}

CaseResult rcloss_grads(int points, std::uint64_t seed, double tol) {
  Rng rng(seed, 0x72636772ULL);
  losses::LossConfig cfg;
  cfg.window_k = 5;
  cfg.stride_s = 3;
  cfg.threshold = 0.8;
  const Tensor gt = random_tensor(rng, {2, 1, 11, 9}, 0.0, 0.5);
  Tensor f_wei = gt;
  for (double& v : f_wei.values()) v += (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(0.05, 1.0);
  GradCheckOptions opts;
  opts.max_coords_per_input = static_cast<std::size_t>(points);
  opts.skip_nonsmooth = true;
  opts.seed = seed + 1;
  CaseResult c = fd_case(
      "rc_loss",
      [&](Tape& t, std::span<const Var> in) {
        return losses::rc_loss(t, losses::error_map(t, in[0], t.constant(gt)), cfg);
      },
      {f_wei}, tol, opts);
  return c;
}

CaseResult network_grads(std::uint64_t seed, double tol) {
  model::ModelConfig mc;
  mc.base_channels = 16;
  mc.reduction_ratio = 16;
  mc.encoder_widths = {4, 8, 8, 8};
  mc.init_std = 0.3;
  mc.seed = seed;
  losses::LossConfig lc;
  lc.window_k = 3;
  lc.stride_s = 2;

  Rng rng(seed, 0x6e657467ULL);
  const model::ModelParams params = model::init_params(mc);
  const Tensor image = random_tensor(rng, {1, 3, 32, 32}, 0.0, 1.0);
  const Tensor gt = random_tensor(rng, {1, 1, 4, 4}, 0.0, 0.2);

  std::vector<std::string> names;
  std::vector<Tensor> inputs;
  for (const auto& [name, t] : params) {
    names.push_back(name);
    inputs.push_back(t);
  }
  GradCheckOptions opts;
  opts.max_coords_per_input = 3;
  opts.skip_nonsmooth = true;
  opts.eps = 1e-6;
  opts.kink_tolerance = 1e-4;
  opts.seed = seed + 7;
  return fd_case(
      "network_total_loss",
      [&](Tape& t, std::span<const Var> in) {
        const model::BoundParams bound(t, names, in);
        const auto fwd = model::network_forward(t, t.constant(image), bound, mc);
        return losses::total_loss(t, fwd, t.constant(gt), lc).total;
      },
      std::move(inputs), tol, opts, 1e-5);
}

// ---------------------------------------------------------------------------
// windows and rc_loss

CaseResult window_reference_case() {
  const auto grid = losses::window_grid(50, 50, 27, 23);
  const std::vector<std::pair<int, int>> expect = {{0, 0}, {0, 23}, {23, 0}, {23, 23}};
  std::vector<int> cover(50 * 50, 0);
  for (auto [r, c] : grid.offsets)
    for (int i = r; i < r + 27; ++i)
      for (int j = c; j < c + 27; ++j) ++cover[static_cast<std::size_t>(i * 50 + j)];
  const bool full = std::all_of(cover.begin(), cover.end(), [](int n) { return n > 0; });
  const bool ok = grid.offsets == expect && full;
  return {"window_50_27_23", ok,
          fmt("%.0f windows, full coverage %.0f", static_cast<double>(grid.offsets.size()), full)};
}

CaseResult window_coverage(int max_dim) {
  long grids = 0;
  std::vector<int> cover;
  for (int h = 1; h <= max_dim; ++h)
    for (int w = 1; w <= max_dim; ++w)
      for (int k = 1; k <= std::min(h, w); ++k)
        for (int s = 1; s <= k; ++s) {
          const auto grid = losses::window_grid(h, w, k, s);
          cover.assign(static_cast<std::size_t>(h * w), 0);
          for (auto [r, c] : grid.offsets) {
            if (r < 0 || c < 0 || r + k > h || c + k > w)
              return {"window_coverage", false, fmt("window out of bounds at h=%g w=%g k=%g", h, w, k)};
            for (int i = r; i < r + k; ++i)
              for (int j = c; j < c + k; ++j) cover[static_cast<std::size_t>(i * w + j)] = 1;
          }
          if (std::find(cover.begin(), cover.end(), 0) != cover.end())
            return {"window_coverage", false,
                    fmt("uncovered pixel at h=%g w=%g k=%g", h, w, k) + " s=" + std::to_string(s)};
          ++grids;
        }
  return {"window_coverage", true, fmt("%.0f grids up to %.0f", static_cast<double>(grids), max_dim)};
}

namespace {

// Scalar-loop rc_loss: walk every window, find its maximum, and add the
// piecewise penalty of every pixel it covers.
double rcloss_reference(const Tensor& e, int k, int s, double threshold) {
  const int B = static_cast<int>(e.dim(0)), H = static_cast<int>(e.dim(2)), W = static_cast<int>(e.dim(3));
  auto starts = [&](int dim) {
    std::vector<int> v;
    for (int p = 0; p + k <= dim; p += s) v.push_back(p);
    if (v.back() + k < dim) v.push_back(dim - k);
    return v;
  };
  double total = 0.0;
  for (int b = 0; b < B; ++b)
    for (int r : starts(H))
      for (int c : starts(W)) {
        double mx = -1.0;
        for (int i = r; i < r + k; ++i)
          for (int j = c; j < c + k; ++j) mx = std::max(mx, e.at(b, 0, i, j));
        for (int i = r; i < r + k; ++i)
          for (int j = c; j < c + k; ++j) {
            const double v = e.at(b, 0, i, j);
            const double g = v * scalar_sigmoid(v) + v;
            total += v > mx * threshold ? g * g : v * v;
          }
      }
  return total / B;
}

double rcloss_value(const Tensor& e, const losses::LossConfig& cfg) {
  Tape tape;
  return tape.value(losses::rc_loss(tape, tape.constant(e), cfg)).item();
}

}  // namespace

CaseResult rcloss_bruteforce(int trials, std::uint64_t seed, double tol) {
  Rng rng(seed, 0x62727574ULL);
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    const int H = static_cast<int>(rng.integer(1, 24)), W = static_cast<int>(rng.integer(1, 24));
    losses::LossConfig cfg;
    cfg.window_k = static_cast<int>(rng.integer(1, std::min(H, W)));
    cfg.stride_s = static_cast<int>(rng.integer(1, cfg.window_k));
    cfg.threshold = rng.uniform(0.5, 1.0);
    const Tensor e = random_tensor(rng, {static_cast<std::size_t>(rng.integer(1, 3)), 1,
                                         static_cast<std::size_t>(H), static_cast<std::size_t>(W)},
                                   0.0, 2.0);
    const double want = rcloss_reference(e, cfg.window_k, cfg.stride_s, cfg.threshold);
    const double got = rcloss_value(e, cfg);
    worst = std::max(worst, std::abs(got - want) / std::max(1.0, std::abs(want)));
  }
  return {"rcloss_bruteforce", worst < tol, fmt("max rel diff %.3g over %.0f maps", worst, trials)};
}

CaseResult rcloss_mse_degeneracy(int trials, std::uint64_t seed, double tol) {
  Rng rng(seed, 0x64656765ULL);
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    losses::LossConfig cfg;
    cfg.window_k = static_cast<int>(rng.integer(1, 8));
    cfg.stride_s = cfg.window_k;
    cfg.threshold = 1.0;
    const auto B = static_cast<std::size_t>(rng.integer(1, 3));
    const auto H = static_cast<std::size_t>(cfg.window_k * rng.integer(1, 4));
    const auto W = static_cast<std::size_t>(cfg.window_k * rng.integer(1, 4));
    const Tensor e = random_tensor(rng, {B, 1, H, W}, 0.0, 2.0);
    double want = 0.0;
    for (double v : e.values()) want += v * v;
    want /= static_cast<double>(B);
    worst = std::max(worst, std::abs(rcloss_value(e, cfg) - want) / std::max(1.0, want));
  }
  return {"rcloss_mse_degeneracy", worst < tol, fmt("max rel diff %.3g over %.0f maps", worst, trials)};
}

CaseResult incremental_penalty(int samples, std::uint64_t seed) {
  Rng rng(seed, 0x696e6372ULL);
  for (int i = 0; i < samples; ++i) {
    const double e = std::exp(rng.uniform(-12.0, 4.0));
    const double g = ops::pointwise_value(ops::Pointwise::silu_plus_identity, e);
    if (!(g * g > e * e)) return {"incremental_penalty", false, fmt("g(E)^2 <= E^2 at E = %.17g", e)};
  }
  return {"incremental_penalty", true, fmt("%.0f samples", samples)};
}

// ---------------------------------------------------------------------------
// labels and metrics

CaseResult label_conservation(int trials, int max_points, std::uint64_t seed) {
  Rng rng(seed, 0x6c61626cULL);
  double worst = 0.0, worst_pool = 0.0;
  for (int t = 0; t < trials; ++t) {
    densitymap::AnnotationSet ann;
    ann.width = static_cast<std::size_t>(8 * rng.integer(1, 24));
    ann.height = static_cast<std::size_t>(8 * rng.integer(1, 24));
    const long n = rng.integer(0, max_points);
    for (long i = 0; i < n; ++i)
      ann.points.push_back({rng.uniform(0.0, static_cast<double>(ann.width)),
                            rng.uniform(0.0, static_cast<double>(ann.height))});
    densitymap::clamp_points(ann);
    const double count = static_cast<double>(n);
    for (int mode = 0; mode < 2; ++mode) {
      const auto dm = mode == 0 ? densitymap::render_fixed(ann, rng.uniform(0.5, 8.0))
                                : densitymap::render_adaptive(ann, {});
      const double err = std::abs(dm.sum() - count);
      if (!(err <= 1e-6 * count) && !(n == 0 && dm.sum() == 0.0))
        return {"label_conservation", false,
                fmt("sum %.17g for %.0f points (mode %.0f)", dm.sum(), count, mode)};
      worst = std::max(worst, count > 0 ? err / count : 0.0);
      const double pooled = densitymap::to_target_grid(dm, 8).sum();
      worst_pool = std::max(worst_pool, std::abs(pooled - dm.sum()) / std::max(1.0, count));
    }
  }
  const bool ok = worst_pool < 1e-12;
  return {"label_conservation", ok,
          fmt("max rel err %.3g; 1/8 grid max rel drift %.3g over %.0f sets", worst, worst_pool, trials)};
}

CaseResult metric_formulas() {
  const double r1[] = {3.0, -4.0};
  const auto m1 = eval::mae_mse_residuals(r1);
  const double r2[] = {-7.0};
  const auto m2 = eval::mae_mse_residuals(r2);
  const double zero[] = {0.0, 0.0, 0.0};
  const auto m3 = eval::mae_mse_residuals(zero);
  const bool ok = std::abs(m1.mae - 3.5) < 1e-12 && std::abs(m1.mse - 3.5355339059327376220) < 1e-7 &&
                  m2.mae == 7.0 && m2.mse == 7.0 && m3.mae == 0.0 && m3.mse == 0.0;
  return {"metric_formulas", ok, fmt("{3,-4}: MAE %.17g MSE %.17g", m1.mae, m1.mse)};
}

CaseResult mae_below_mse(int trials, std::uint64_t seed) {
  Rng rng(seed, 0x6d616d73ULL);
  for (int t = 0; t < trials; ++t) {
    std::vector<double> r(static_cast<std::size_t>(rng.integer(1, 50)));
    for (double& v : r) v = rng.normal(0.0, rng.uniform(0.1, 100.0));
    const auto m = eval::mae_mse_residuals(r);
    if (m.mae > m.mse * (1.0 + 1e-15))
      return {"mae_below_mse", false, fmt("MAE %.17g > MSE %.17g", m.mae, m.mse)};
  }
  return {"mae_below_mse", true, fmt("%.0f residual sets", trials)};
}

// ---------------------------------------------------------------------------

std::vector<std::string> suite_names() { return {"grads", "rcloss", "softblock", "windows", "labels", "metrics"}; }

std::vector<SuiteResult> run(const std::string& suite, std::uint64_t seed) {
  if (suite == "all") {
    std::vector<SuiteResult> all;
    for (const auto& name : suite_names()) all.push_back(run(name, seed).front());
    return all;
  }
  SuiteResult r{suite, {}};
  if (suite == "grads") {
    r.cases = primitive_grads(seed);
    r.cases.push_back(softblock_grads(seed));
    r.cases.push_back(rcloss_grads(10, seed));
    r.cases.push_back(network_grads(seed));
  } else if (suite == "rcloss") {
    r.cases = {rcloss_bruteforce(200, seed), rcloss_mse_degeneracy(100, seed), incremental_penalty(1000, seed)};
  } else if (suite == "softblock") {
    r.cases = {softblock_oracle(100, seed)};
  } else if (suite == "windows") {
    r.cases = {window_reference_case(), window_coverage(32)};
  } else if (suite == "labels") {
    r.cases = {label_conservation(100, 500, seed)};
  } else if (suite == "metrics") {
    r.cases = {metric_formulas(), mae_below_mse(1000, seed)};
  } else {
    throw std::invalid_argument("unknown suite '" + suite + "'");
  }
  return {r};
}

}  // namespace iiao::verify
