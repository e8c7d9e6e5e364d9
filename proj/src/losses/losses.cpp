#include "iiao/losses.hpp"

#include <algorithm>
#include <array>
#include <stdexcept>

#include "iiao/ops.hpp"

namespace iiao::losses {

std::vector<std::string> LossConfig::validate() const {
  std::vector<std::string> errors;
  if (window_k < 1) errors.push_back("loss.window_k must be >= 1");
  if (stride_s < 1) errors.push_back("loss.stride_s must be >= 1");
  if (stride_s > window_k)
    errors.push_back("loss.stride_s (" + std::to_string(stride_s) +
                     ") must not exceed loss.window_k (" + std::to_string(window_k) + ")");
  if (!(threshold > 0.0 && threshold <= 1.0)) errors.push_back("loss.threshold must lie in (0, 1]");
  if (!(lambda >= 0.0)) errors.push_back("loss.lambda must be >= 0");
  if (!(gamma >= 0.0)) errors.push_back("loss.gamma must be >= 0");
  return errors;
}

void LossConfig::require_valid() const {
  const auto errors = validate();
  if (errors.empty()) return;
  std::string msg = "invalid loss config:";
  for (const auto& e : errors) msg += "\n  " + e;
  throw std::invalid_argument(msg);
}

std::vector<int> window_starts(int dim, int k, int s) {
  if (s < 1) throw std::invalid_argument("window stride must be >= 1");
  if (k < 1 || k > dim)
    throw std::invalid_argument("window size " + std::to_string(k) + " does not fit dimension " +
                                std::to_string(dim));
  const int n = (dim - k) / s + 1;
  std::vector<int> starts;
  starts.reserve(static_cast<std::size_t>(n) + 1);
  for (int i = 0; i < n; ++i) starts.push_back(i * s);
  if (starts.back() + k < dim) starts.push_back(dim - k);  // flush with the far edge
  return starts;
}

WindowGrid window_grid(int h, int w, int k, int s) {
  const std::vector<int> rows = window_starts(h, k, s);
  const std::vector<int> cols = window_starts(w, k, s);
  WindowGrid grid;
  grid.k = k;
  for (int r : rows)
    for (int c : cols) grid.offsets.emplace_back(r, c);
  return grid;
}

Var euclidean_loss(Tape& tape, Var pred, Var gt) {
  const Tensor& p = tape.value(pred);
  require_4d(p, "euclidean_loss");
  if (p.shape() != tape.value(gt).shape())
    throw ShapeError("euclidean_loss: prediction " + shape_str(p.shape()) + " vs ground truth " +
                     shape_str(tape.value(gt).shape()));
  const double inv_batch = 1.0 / static_cast<double>(p.dim(0));
  const Var sq = ops::square(tape, ops::sub(tape, pred, gt));
  return ops::scale(tape, ops::sum_all(tape, sq), inv_batch);
}

Var error_map(Tape& tape, Var f_wei, Var gt) {
  if (tape.value(f_wei).shape() != tape.value(gt).shape())
    throw ShapeError("error_map: F_wei " + shape_str(tape.value(f_wei).shape()) +
                     " vs ground truth " + shape_str(tape.value(gt).shape()));
  return ops::abs(tape, ops::sub(tape, f_wei, gt));
}

WindowMasks window_masks(const Tensor& error, const WindowGrid& grid, double threshold) {
  require_4d(error, "rc_loss");
  if (error.dim(1) != 1)
    throw ShapeError("rc_loss: error map must have one channel, got " + shape_str(error.shape()));
  const std::size_t B = error.dim(0), H = error.dim(2), W = error.dim(3);
  const auto k = static_cast<std::size_t>(grid.k);
  WindowMasks masks{Tensor(error.shape()), Tensor(error.shape())};

  for (std::size_t b = 0; b < B; ++b) {
    const double* e = error.data() + b * H * W;
    double* ep = masks.error_prone.data() + b * H * W;
    double* et = masks.error_tolerant.data() + b * H * W;
    for (auto [r0, c0] : grid.offsets) {
      const auto r = static_cast<std::size_t>(r0), c = static_cast<std::size_t>(c0);
      if (r + k > H || c + k > W) throw std::invalid_argument("rc_loss: window grid exceeds map");
      double mx = e[r * W + c];
      for (std::size_t i = r; i < r + k; ++i)
        for (std::size_t j = c; j < c + k; ++j) mx = std::max(mx, e[i * W + j]);
      const double cut = mx * threshold;
      for (std::size_t i = r; i < r + k; ++i)
        for (std::size_t j = c; j < c + k; ++j) {
          if (e[i * W + j] > cut)
            ep[i * W + j] += 1.0;
          else
            et[i * W + j] += 1.0;
        }
    }
  }
  return masks;
}

Var rc_loss(Tape& tape, Var error, const LossConfig& cfg) {
  const Tensor& e = tape.value(error);
  require_4d(e, "rc_loss");
  const WindowGrid grid = window_grid(static_cast<int>(e.dim(2)), static_cast<int>(e.dim(3)),
                                      cfg.window_k, cfg.stride_s);
  WindowMasks masks = window_masks(e, grid, cfg.threshold);
  const double inv_batch = 1.0 / static_cast<double>(e.dim(0));

  // Each window counts every pixel it covers, so a pixel's penalty is weighted
  // by the number of windows that put it on each side of the cut.
  const Var ep_count = tape.constant(std::move(masks.error_prone));
  const Var et_count = tape.constant(std::move(masks.error_tolerant));
  const Var ep_penalty = ops::square(tape, ops::silu_plus_identity(tape, error));
  const Var et_penalty = ops::square(tape, error);
  const Var per_pixel = ops::add(tape, ops::mul(tape, ep_penalty, ep_count),
                                 ops::mul(tape, et_penalty, et_count));
  return ops::scale(tape, ops::sum_all(tape, per_pixel), inv_batch);
}

LossTerms total_loss(Tape& tape, const model::ForwardVars& outputs, Var gt, const LossConfig& cfg) {
  cfg.require_valid();
  LossTerms terms;
  for (Var f_wei : outputs.f_wei) terms.wei.push_back(rc_loss(tape, error_map(tape, f_wei, gt), cfg));
  terms.pre = euclidean_loss(tape, outputs.f_pre, gt);

  Var total = ops::scale(tape, terms.pre, cfg.gamma);
  for (Var w : terms.wei) total = ops::add(tape, total, ops::scale(tape, w, cfg.lambda));
  terms.total = total;
  return terms;
}

}  // namespace iiao::losses
