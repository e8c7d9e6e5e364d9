#pragma once

#include <string>
#include <utility>
#include <vector>

#include "iiao/model.hpp"
#include "iiao/tape.hpp"

namespace iiao::losses {

struct LossConfig {
  int window_k = 27;
  int stride_s = 23;
  double threshold = 0.95;
  double lambda = 1.5;  // weight of each F_wei head
  double gamma = 0.5;   // weight of the final prediction

  std::vector<std::string> validate() const;
  void require_valid() const;
};

// Top-left corners of the sliding windows, lexicographically increasing.
struct WindowGrid {
  int k = 0;
  std::vector<std::pair<int, int>> offsets;  // (row, col)
};

// Regular grid at stride s (floor((dim - k) / s) + 1 windows per axis), plus
// one window flush with the far edge on any axis the regular grid leaves
// uncovered. Throws std::invalid_argument if k > min(h, w) or s < 1.
WindowGrid window_grid(int h, int w, int k, int s);

// Per-axis window starts used by window_grid.
std::vector<int> window_starts(int dim, int k, int s);

// (1/N) sum_i ||pred_i - gt_i||^2 over a batch of N maps.
Var euclidean_loss(Tape& tape, Var pred, Var gt);

// |f_wei - gt|
Var error_map(Tape& tape, Var f_wei, Var gt);

// How many windows put each pixel on the error-prone side (E > MAX * threshold)
// and on the error-tolerant side. Computed from values only; the mask carries
// no gradient.
struct WindowMasks {
  Tensor error_prone;
  Tensor error_tolerant;
};
WindowMasks window_masks(const Tensor& error, const WindowGrid& grid, double threshold);

// Regional correlation loss on a B x 1 x h x w error map: per window, pixels
// above MAX * threshold are penalized by (E*sigmoid(E) + E)^2, the rest by
// E^2; summed over all windows and images and divided by B.
Var rc_loss(Tape& tape, Var error, const LossConfig& cfg);

struct LossTerms {
  Var total;
  std::vector<Var> wei;  // unweighted rc_loss per F_wei head
  Var pre;               // unweighted euclidean loss of F_pre
};

// lambda * sum_heads rc_loss(|F_wei - gt|) + gamma * euclidean(F_pre, gt).
LossTerms total_loss(Tape& tape, const model::ForwardVars& outputs, Var gt, const LossConfig& cfg);

}  // namespace iiao::losses
