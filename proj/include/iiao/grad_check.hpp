#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "iiao/tape.hpp"
#include "iiao/tensor.hpp"

namespace iiao {

// A scalar-valued computation built on a fresh tape from the given inputs.
// It must be deterministic; the checker evaluates it many times.
using ScalarComputation = std::function<Var(Tape& tape, std::span<const Var> inputs)>;

struct GradCheckOptions {
  double eps = 1e-5;
  // Relative error is |analytic - numeric| / max(|analytic|, |numeric|, floor).
  double denominator_floor = 1e-8;
  // 0 checks every coordinate; otherwise a seeded random subset per input.
  std::size_t max_coords_per_input = 0;
  std::uint64_t seed = 1;
  // When set, coordinates whose one-sided differences disagree by more than
  // kink_tolerance (relative) are treated as straddling a non-smooth point
  // (relu/abs kink, max tie, mask flip) and excluded from the maximum.
  bool skip_nonsmooth = false;
  double kink_tolerance = 1e-2;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_nonsmooth = 0;
  // Location and values of the worst coordinate.
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Compares the tape's analytic gradient against central finite differences.
GradCheckResult grad_check(const ScalarComputation& computation, std::vector<Tensor> inputs,
                           const GradCheckOptions& options);

// Worst relative error over every coordinate of every input.
double grad_check(const ScalarComputation& computation, std::vector<Tensor> inputs, double eps);

}  // namespace iiao
