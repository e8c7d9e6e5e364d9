#pragma once

#include <string_view>

#include "iiao/tape.hpp"
#include "iiao/tensor.hpp"

// Differentiable primitives. Each op reads its operands from the tape, records
// its output, and registers an analytic backward.
namespace iiao::ops {

struct Conv2dOptions {
  int stride = 1;
  int padding = 0;
};

// Cross-correlation of a BCHW input with an OIKK kernel plus per-output bias.
Var conv2d(Tape& tape, Var input, Var kernel, Var bias, Conv2dOptions opts = {});

enum class Pointwise { relu, sigmoid, abs, square, silu_plus_identity };

// Parses "relu", "sigmoid", "abs", "square", "silu_plus_identity".
Pointwise parse_pointwise(std::string_view name);
std::string_view to_string(Pointwise fn);

// Scalar form of each map and its derivative, shared with the op.
double pointwise_value(Pointwise fn, double x);
double pointwise_derivative(Pointwise fn, double x);

Var pointwise(Tape& tape, Var input, Pointwise fn);
inline Var relu(Tape& t, Var x) { return pointwise(t, x, Pointwise::relu); }
inline Var sigmoid(Tape& t, Var x) { return pointwise(t, x, Pointwise::sigmoid); }
inline Var abs(Tape& t, Var x) { return pointwise(t, x, Pointwise::abs); }
inline Var square(Tape& t, Var x) { return pointwise(t, x, Pointwise::square); }
inline Var silu_plus_identity(Tape& t, Var x) {
  return pointwise(t, x, Pointwise::silu_plus_identity);
}

// Softmax over the channel axis at every (b, h, w).
Var channel_softmax(Tape& tape, Var input);

enum class ResampleMode { maxpool2, bilinear_up2, sumpool };

struct Resample {
  ResampleMode mode = ResampleMode::maxpool2;
  int factor = 2;  // sumpool only

  static Resample maxpool2() { return {ResampleMode::maxpool2, 2}; }
  static Resample bilinear_up2() { return {ResampleMode::bilinear_up2, 2}; }
  static Resample sumpool(int f) { return {ResampleMode::sumpool, f}; }
};

Var resample(Tape& tape, Var input, Resample how);

enum class CombineMode { mul, add, sub, concat_channels };

Var combine(Tape& tape, Var a, Var b, CombineMode mode);
inline Var mul(Tape& t, Var a, Var b) { return combine(t, a, b, CombineMode::mul); }
inline Var add(Tape& t, Var a, Var b) { return combine(t, a, b, CombineMode::add); }
inline Var sub(Tape& t, Var a, Var b) { return combine(t, a, b, CombineMode::sub); }
inline Var concat_channels(Tape& t, Var a, Var b) {
  return combine(t, a, b, CombineMode::concat_channels);
}

enum class ReduceMode { sum_channels, sum_all };

Var reduce(Tape& tape, Var input, ReduceMode mode);
inline Var sum_channels(Tape& t, Var x) { return reduce(t, x, ReduceMode::sum_channels); }
inline Var sum_all(Tape& t, Var x) { return reduce(t, x, ReduceMode::sum_all); }

// Multiplies every element by a constant.
Var scale(Tape& tape, Var input, double factor);

}  // namespace iiao::ops
