#include "iiao/ops.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "iiao/kernels.hpp"

namespace iiao::ops {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

void accumulate(std::span<double> dst, std::span<const double> src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

// ---------------------------------------------------------------------------
// conv2d

Var conv2d(Tape& tape, Var input, Var kernel, Var bias, Conv2dOptions opts) {
  const Tensor& x = tape.value(input);
  const Tensor& w = tape.value(kernel);
  const Tensor& b = tape.value(bias);
  require_4d(x, "conv2d input");
  require_4d(w, "conv2d kernel");
  if (opts.stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
  if (opts.padding < 0) throw std::invalid_argument("conv2d: padding must be >= 0");
  if (w.dim(2) != w.dim(3))
    throw ShapeError("conv2d: kernel must be square (OIKK), got " + shape_str(w.shape()));
  if (x.dim(1) != w.dim(1))
    throw ShapeError("conv2d: input " + shape_str(x.shape()) + " has " +
                     std::to_string(x.dim(1)) + " channels but kernel " + shape_str(w.shape()) +
                     " expects " + std::to_string(w.dim(1)));
  if (b.rank() != 1 || b.dim(0) != w.dim(0))
    throw ShapeError("conv2d: bias " + shape_str(b.shape()) + " does not match kernel " +
                     shape_str(w.shape()));

  kernels::ConvGeometry g;
  g.batch = x.dim(0);
  g.in_channels = x.dim(1);
  g.in_h = x.dim(2);
  g.in_w = x.dim(3);
  g.out_channels = w.dim(0);
  g.kernel = w.dim(2);
  g.stride = static_cast<std::size_t>(opts.stride);
  g.padding = static_cast<std::size_t>(opts.padding);
  if (g.in_h + 2 * g.padding < g.kernel || g.in_w + 2 * g.padding < g.kernel)
    throw ShapeError("conv2d: kernel " + shape_str(w.shape()) + " larger than padded input " +
                     shape_str(x.shape()));

  Tensor out(Shape{g.batch, g.out_channels, g.out_h(), g.out_w()});
  kernels::conv2d_forward(g, x.values(), w.values(), b.values(), out.values());

  const std::array<Var, 3> parents{input, kernel, bias};
  return tape.record(std::move(out), parents, [=](Tape& t, Var self) {
    auto gout = t.grad(self);
    if (t.requires_grad(input))
      kernels::conv2d_backward_input(g, gout, t.value(kernel).values(), t.grad_mut(input));
    if (t.requires_grad(kernel) || t.requires_grad(bias)) {
      std::vector<double> gk(g.kernel_size(), 0.0), gb(g.out_channels, 0.0);
      kernels::conv2d_backward_kernel(g, gout, t.value(input).values(), gk, gb);
      if (t.requires_grad(kernel)) accumulate(t.grad_mut(kernel), gk);
      if (t.requires_grad(bias)) accumulate(t.grad_mut(bias), gb);
    }
  });
}

// ---------------------------------------------------------------------------
// pointwise

Pointwise parse_pointwise(std::string_view name) {
  if (name == "relu") return Pointwise::relu;
  if (name == "sigmoid") return Pointwise::sigmoid;
  if (name == "abs") return Pointwise::abs;
  if (name == "square") return Pointwise::square;
  if (name == "silu_plus_identity") return Pointwise::silu_plus_identity;
  throw std::invalid_argument("unknown pointwise function '" + std::string(name) + "'");
}

std::string_view to_string(Pointwise fn) {
  switch (fn) {
    case Pointwise::relu: return "relu";
    case Pointwise::sigmoid: return "sigmoid";
    case Pointwise::abs: return "abs";
    case Pointwise::square: return "square";
    case Pointwise::silu_plus_identity: return "silu_plus_identity";
  }
  return "?";
}

double pointwise_value(Pointwise fn, double x) {
  switch (fn) {
    case Pointwise::relu: return x > 0.0 ? x : 0.0;
    case Pointwise::sigmoid: return stable_sigmoid(x);
    case Pointwise::abs: return std::fabs(x);
    case Pointwise::square: return x * x;
    case Pointwise::silu_plus_identity: return x * stable_sigmoid(x) + x;
  }
  return 0.0;
}

double pointwise_derivative(Pointwise fn, double x) {
  switch (fn) {
    case Pointwise::relu: return x > 0.0 ? 1.0 : 0.0;
    case Pointwise::sigmoid: {
      const double s = stable_sigmoid(x);
      return s * (1.0 - s);
    }
    case Pointwise::abs: return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
    case Pointwise::square: return 2.0 * x;
    case Pointwise::silu_plus_identity: {
      const double s = stable_sigmoid(x);
      return s + x * s * (1.0 - s) + 1.0;
    }
  }
  return 0.0;
}

Var pointwise(Tape& tape, Var input, Pointwise fn) {
  const Tensor& x = tape.value(input);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = pointwise_value(fn, x[i]);

  const std::array<Var, 1> parents{input};
  return tape.record(std::move(out), parents, [=](Tape& t, Var self) {
    auto gout = t.grad(self);
    const Tensor& xv = t.value(input);
    auto gin = t.grad_mut(input);
    for (std::size_t i = 0; i < gin.size(); ++i)
      gin[i] += gout[i] * pointwise_derivative(fn, xv[i]);
  });
}

// ---------------------------------------------------------------------------
// channel softmax

Var channel_softmax(Tape& tape, Var input) {
  const Tensor& x = tape.value(input);
  require_4d(x, "channel_softmax");
  const std::size_t B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  if (C == 0) throw ShapeError("channel_softmax: zero channels");

  Tensor out(x.shape());
  for (std::size_t b = 0; b < B; ++b) {
    const double* in = x.data() + b * C * HW;
    double* y = out.data() + b * C * HW;
    for (std::size_t p = 0; p < HW; ++p) {
      double mx = in[p];
      for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, in[c * HW + p]);
      double z = 0.0;
      for (std::size_t c = 0; c < C; ++c) {
        y[c * HW + p] = std::exp(in[c * HW + p] - mx);
        z += y[c * HW + p];
      }
      for (std::size_t c = 0; c < C; ++c) y[c * HW + p] /= z;
    }
  }

  const std::array<Var, 1> parents{input};
  return tape.record(std::move(out), parents, [=](Tape& t, Var self) {
    auto gout = t.grad(self);
    const Tensor& y = t.value(self);
    auto gin = t.grad_mut(input);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t p = 0; p < HW; ++p) {
        const std::size_t base = b * C * HW + p;
        double dot = 0.0;
        for (std::size_t c = 0; c < C; ++c) dot += gout[base + c * HW] * y[base + c * HW];
        for (std::size_t c = 0; c < C; ++c)
          gin[base + c * HW] += y[base + c * HW] * (gout[base + c * HW] - dot);
      }
  });
}

// ---------------------------------------------------------------------------
// resampling

namespace {

// Source taps of a 2x bilinear upsample along one axis (half-pixel centers,
// edge clamped).
struct Taps {
  std::size_t i0, i1;
  double w0, w1;
};

Taps upsample_taps(std::size_t o, std::size_t in_n) {
  double src = (static_cast<double>(o) + 0.5) / 2.0 - 0.5;
  if (src < 0.0) src = 0.0;
  const auto i0 = std::min(static_cast<std::size_t>(src), in_n - 1);
  const std::size_t i1 = std::min(i0 + 1, in_n - 1);
  const double w1 = src - static_cast<double>(i0);
  return {i0, i1, 1.0 - w1, w1};
}

Var maxpool2(Tape& tape, Var input) {
  const Tensor& x = tape.value(input);
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (H % 2 || W % 2)
    throw ShapeError("maxpool2: spatial dims of " + shape_str(x.shape()) +
                     " not divisible by 2");
  Tensor out(Shape{B, C, H / 2, W / 2});
  std::vector<std::size_t> argmax(out.size());
  kernels::maxpool2_forward({B * C, H, W}, x.values(), out.values(), argmax);

  const std::array<Var, 1> parents{input};
  return tape.record(std::move(out), parents,
                     [=, argmax = std::move(argmax)](Tape& t, Var self) {
                       auto gout = t.grad(self);
                       auto gin = t.grad_mut(input);
                       for (std::size_t o = 0; o < gout.size(); ++o) gin[argmax[o]] += gout[o];
                     });
}

Var bilinear_up2(Tape& tape, Var input) {
  const Tensor& x = tape.value(input);
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (H == 0 || W == 0) throw ShapeError("bilinear_up2: empty input " + shape_str(x.shape()));
  const std::size_t OH = 2 * H, OW = 2 * W;
  std::vector<Taps> rows(OH), cols(OW);
  for (std::size_t o = 0; o < OH; ++o) rows[o] = upsample_taps(o, H);
  for (std::size_t o = 0; o < OW; ++o) cols[o] = upsample_taps(o, W);

  Tensor out(Shape{B, C, OH, OW});
  for (std::size_t p = 0; p < B * C; ++p) {
    const double* in = x.data() + p * H * W;
    double* y = out.data() + p * OH * OW;
    for (std::size_t oh = 0; oh < OH; ++oh) {
      const Taps& r = rows[oh];
      for (std::size_t ow = 0; ow < OW; ++ow) {
        const Taps& c = cols[ow];
        y[oh * OW + ow] = r.w0 * (c.w0 * in[r.i0 * W + c.i0] + c.w1 * in[r.i0 * W + c.i1]) +
                          r.w1 * (c.w0 * in[r.i1 * W + c.i0] + c.w1 * in[r.i1 * W + c.i1]);
      }
    }
  }

  const std::array<Var, 1> parents{input};
  return tape.record(std::move(out), parents, [=](Tape& t, Var self) {
    auto gout = t.grad(self);
    auto gin = t.grad_mut(input);
    for (std::size_t p = 0; p < B * C; ++p) {
      const double* g = gout.data() + p * OH * OW;
      double* gi = gin.data() + p * H * W;
      for (std::size_t oh = 0; oh < OH; ++oh) {
        const Taps& r = rows[oh];
        for (std::size_t ow = 0; ow < OW; ++ow) {
          const Taps& c = cols[ow];
          const double go = g[oh * OW + ow];
          gi[r.i0 * W + c.i0] += go * r.w0 * c.w0;
          gi[r.i0 * W + c.i1] += go * r.w0 * c.w1;
          gi[r.i1 * W + c.i0] += go * r.w1 * c.w0;
          gi[r.i1 * W + c.i1] += go * r.w1 * c.w1;
        }
      }
    }
  });
}

Var sumpool(Tape& tape, Var input, int factor) {
  const Tensor& x = tape.value(input);
  if (factor < 1) throw std::invalid_argument("sumpool: factor must be >= 1");
  const auto f = static_cast<std::size_t>(factor);
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (H % f || W % f)
    throw ShapeError("sumpool(" + std::to_string(f) + "): spatial dims of " +
                     shape_str(x.shape()) + " not divisible");
  const std::size_t OH = H / f, OW = W / f;
  Tensor out(Shape{B, C, OH, OW});
  for (std::size_t p = 0; p < B * C; ++p)
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t w = 0; w < W; ++w)
        out[(p * OH + h / f) * OW + w / f] += x[(p * H + h) * W + w];

  const std::array<Var, 1> parents{input};
  return tape.record(std::move(out), parents, [=](Tape& t, Var self) {
    auto gout = t.grad(self);
    auto gin = t.grad_mut(input);
    for (std::size_t p = 0; p < B * C; ++p)
      for (std::size_t h = 0; h < H; ++h)
        for (std::size_t w = 0; w < W; ++w)
          gin[(p * H + h) * W + w] += gout[(p * OH + h / f) * OW + w / f];
  });
}

}  // namespace

Var resample(Tape& tape, Var input, Resample how) {
  require_4d(tape.value(input), "resample");
  switch (how.mode) {
    case ResampleMode::maxpool2: return maxpool2(tape, input);
    case ResampleMode::bilinear_up2: return bilinear_up2(tape, input);
    case ResampleMode::sumpool: return sumpool(tape, input, how.factor);
  }
  throw std::invalid_argument("resample: unknown mode");
}

// ---------------------------------------------------------------------------
// combine / reduce / scale

Var combine(Tape& tape, Var a, Var b, CombineMode mode) {
  const Tensor& x = tape.value(a);
  const Tensor& y = tape.value(b);
  const std::array<Var, 2> parents{a, b};

  if (mode == CombineMode::concat_channels) {
    require_4d(x, "concat_channels");
    require_4d(y, "concat_channels");
    if (x.dim(0) != y.dim(0) || x.dim(2) != y.dim(2) || x.dim(3) != y.dim(3))
      throw ShapeError("concat_channels: B,H,W mismatch " + shape_str(x.shape()) + " vs " +
                       shape_str(y.shape()));
    const std::size_t B = x.dim(0), Ca = x.dim(1), Cb = y.dim(1), HW = x.dim(2) * x.dim(3);
    Tensor out(Shape{B, Ca + Cb, x.dim(2), x.dim(3)});
    for (std::size_t n = 0; n < B; ++n) {
      std::copy_n(x.data() + n * Ca * HW, Ca * HW, out.data() + n * (Ca + Cb) * HW);
      std::copy_n(y.data() + n * Cb * HW, Cb * HW, out.data() + (n * (Ca + Cb) + Ca) * HW);
    }
    return tape.record(std::move(out), parents, [=](Tape& t, Var self) {
      auto g = t.grad(self);
      for (std::size_t n = 0; n < B; ++n) {
        if (t.requires_grad(a)) {
          auto ga = t.grad_mut(a);
          for (std::size_t i = 0; i < Ca * HW; ++i) ga[n * Ca * HW + i] += g[n * (Ca + Cb) * HW + i];
        }
        if (t.requires_grad(b)) {
          auto gb = t.grad_mut(b);
          for (std::size_t i = 0; i < Cb * HW; ++i)
            gb[n * Cb * HW + i] += g[(n * (Ca + Cb) + Ca) * HW + i];
        }
      }
    });
  }

  require_same_shape(x, y, "combine");
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    switch (mode) {
      case CombineMode::mul: out[i] = x[i] * y[i]; break;
      case CombineMode::add: out[i] = x[i] + y[i]; break;
      case CombineMode::sub: out[i] = x[i] - y[i]; break;
      case CombineMode::concat_channels: break;
    }
  }
  return tape.record(std::move(out), parents, [=](Tape& t, Var self) {
    auto g = t.grad(self);
    if (t.requires_grad(a)) {
      auto ga = t.grad_mut(a);
      if (mode == CombineMode::mul) {
        const Tensor& yv = t.value(b);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * yv[i];
      } else {
        accumulate(ga, g);
      }
    }
    if (t.requires_grad(b)) {
      auto gb = t.grad_mut(b);
      if (mode == CombineMode::mul) {
        const Tensor& xv = t.value(a);
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * xv[i];
      } else if (mode == CombineMode::sub) {
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g[i];
      } else {
        accumulate(gb, g);
      }
    }
  });
}

Var reduce(Tape& tape, Var input, ReduceMode mode) {
  const Tensor& x = tape.value(input);
  const std::array<Var, 1> parents{input};

  if (mode == ReduceMode::sum_all) {
    Tensor out = Tensor::scalar(x.sum());
    return tape.record(std::move(out), parents, [=](Tape& t, Var self) {
      const double g = t.grad(self)[0];
      for (double& v : t.grad_mut(input)) v += g;
    });
  }

  require_4d(x, "sum_channels");
  const std::size_t B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  Tensor out(Shape{B, 1, x.dim(2), x.dim(3)});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t p = 0; p < HW; ++p) out[b * HW + p] += x[(b * C + c) * HW + p];
  return tape.record(std::move(out), parents, [=](Tape& t, Var self) {
    auto g = t.grad(self);
    auto gin = t.grad_mut(input);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t p = 0; p < HW; ++p) gin[(b * C + c) * HW + p] += g[b * HW + p];
  });
}

Var scale(Tape& tape, Var input, double factor) {
  const Tensor& x = tape.value(input);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * factor;
  const std::array<Var, 1> parents{input};
  return tape.record(std::move(out), parents, [=](Tape& t, Var self) {
    auto g = t.grad(self);
    auto gin = t.grad_mut(input);
    for (std::size_t i = 0; i < gin.size(); ++i) gin[i] += g[i] * factor;
  });
}

}  // namespace iiao::ops
