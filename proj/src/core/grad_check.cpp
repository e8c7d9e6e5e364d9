#include "iiao/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "iiao/rng.hpp"

namespace iiao {

namespace {

double evaluate(const ScalarComputation& fn, const std::vector<Tensor>& inputs) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(inputs.size());
  for (const Tensor& t : inputs) vars.push_back(tape.input(t, false));
  return tape.value(fn(tape, vars)).item();
}

}  // namespace

GradCheckResult grad_check(const ScalarComputation& computation, std::vector<Tensor> inputs,
                           const GradCheckOptions& options) {
  if (!(options.eps >= 1e-7 && options.eps <= 1e-3))
    throw std::invalid_argument("grad_check: eps must lie in [1e-7, 1e-3]");

  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& t : inputs) vars.push_back(tape.input(t, true));
    const Var out = computation(tape, vars);
    tape.backward(out);
    for (Var v : vars) {
      auto g = tape.grad(v);
      analytic.emplace_back(g.begin(), g.end());
    }
  }

  GradCheckResult result;
  Rng rng(options.seed, 0x67726164ULL);
  for (std::size_t in = 0; in < inputs.size(); ++in) {
    std::vector<std::size_t> coords(inputs[in].size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (options.max_coords_per_input && coords.size() > options.max_coords_per_input) {
      rng.shuffle(coords);
      coords.resize(options.max_coords_per_input);
      std::sort(coords.begin(), coords.end());
    }

    for (std::size_t i : coords) {
      double& x = inputs[in][i];
      const double saved = x;
      x = saved + options.eps;
      const double f_plus = evaluate(computation, inputs);
      x = saved - options.eps;
      const double f_minus = evaluate(computation, inputs);
      double f_mid = 0.0;
      if (options.skip_nonsmooth) {
        x = saved;
        f_mid = evaluate(computation, inputs);
      }
      x = saved;

      if (options.skip_nonsmooth) {
        const double fwd = (f_plus - f_mid) / options.eps;
        const double bwd = (f_mid - f_minus) / options.eps;
        const double scale = std::max({std::fabs(fwd), std::fabs(bwd), options.denominator_floor});
        if (std::fabs(fwd - bwd) > options.kink_tolerance * scale) {
          ++result.skipped_nonsmooth;
          continue;
        }
      }

      const double numeric = (f_plus - f_minus) / (2.0 * options.eps);
      const double a = analytic[in][i];
      const double denom =
          std::max({std::fabs(a), std::fabs(numeric), options.denominator_floor});
      const double rel = std::fabs(a - numeric) / denom;
      ++result.checked;
      if (result.checked == 1 || rel > result.max_relative_error) {
        result.max_relative_error = rel;
        result.worst_input = in;
        result.worst_index = i;
        result.worst_analytic = a;
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

double grad_check(const ScalarComputation& computation, std::vector<Tensor> inputs, double eps) {
  GradCheckOptions opts;
  opts.eps = eps;
  return grad_check(computation, std::move(inputs), opts).max_relative_error;
}

}  // namespace iiao
