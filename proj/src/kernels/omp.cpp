#include <algorithm>

#include "iiao/kernels.hpp"

// Row-oriented kernels: for each kernel tap the valid output range is computed
// once so the innermost loop is a branch-free axpy over a row.

namespace iiao::kernels::omp {

namespace {

struct Range {
  std::size_t lo = 0;
  std::size_t hi = 0;  // exclusive
};

// Output positions o in [0, out_n) with o*stride + tap - pad inside [0, in_n).
Range valid_outputs(std::size_t out_n, std::size_t in_n, std::size_t tap, std::size_t stride,
                    std::size_t pad) {
  const long s = static_cast<long>(stride);
  const long before = static_cast<long>(pad) - static_cast<long>(tap);
  const long lo = before > 0 ? (before + s - 1) / s : 0;
  const long top = static_cast<long>(in_n) - 1 + static_cast<long>(pad) - static_cast<long>(tap);
  if (top < 0) return {};
  const long hi = std::min<long>(top / s + 1, static_cast<long>(out_n));
  if (lo >= hi) return {};
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

}  // namespace

void conv2d_forward(const ConvGeometry& g, std::span<const double> input,
                    std::span<const double> kernel, std::span<const double> bias,
                    std::span<double> output) {
  const std::size_t oh_n = g.out_h(), ow_n = g.out_w(), k = g.kernel, s = g.stride;
  const long planes = static_cast<long>(g.batch * g.out_channels);

#pragma omp parallel for schedule(static)
  for (long plane = 0; plane < planes; ++plane) {
    const std::size_t b = static_cast<std::size_t>(plane) / g.out_channels;
    const std::size_t oc = static_cast<std::size_t>(plane) % g.out_channels;
    double* out = output.data() + static_cast<std::size_t>(plane) * oh_n * ow_n;
    std::fill(out, out + oh_n * ow_n, bias.empty() ? 0.0 : bias[oc]);

    for (std::size_t ic = 0; ic < g.in_channels; ++ic) {
      const double* in = input.data() + (b * g.in_channels + ic) * g.in_h * g.in_w;
      const double* wk = kernel.data() + (oc * g.in_channels + ic) * k * k;
      for (std::size_t kh = 0; kh < k; ++kh) {
        const Range rows = valid_outputs(oh_n, g.in_h, kh, s, g.padding);
        for (std::size_t kw = 0; kw < k; ++kw) {
          const Range cols = valid_outputs(ow_n, g.in_w, kw, s, g.padding);
          const double wv = wk[kh * k + kw];
          for (std::size_t oh = rows.lo; oh < rows.hi; ++oh) {
            const double* in_row = in + (oh * s + kh - g.padding) * g.in_w;
            double* out_row = out + oh * ow_n;
            if (s == 1) {
              const double* src = in_row + kw - g.padding;
              for (std::size_t ow = cols.lo; ow < cols.hi; ++ow) out_row[ow] += wv * src[ow];
            } else {
              for (std::size_t ow = cols.lo; ow < cols.hi; ++ow)
                out_row[ow] += wv * in_row[ow * s + kw - g.padding];
            }
          }
        }
      }
    }
  }
}

void conv2d_backward_input(const ConvGeometry& g, std::span<const double> grad_output,
                           std::span<const double> kernel, std::span<double> grad_input) {
  const std::size_t oh_n = g.out_h(), ow_n = g.out_w(), k = g.kernel, s = g.stride;
  const long planes = static_cast<long>(g.batch * g.in_channels);

#pragma omp parallel for schedule(static)
  for (long plane = 0; plane < planes; ++plane) {
    const std::size_t b = static_cast<std::size_t>(plane) / g.in_channels;
    const std::size_t ic = static_cast<std::size_t>(plane) % g.in_channels;
    double* gin = grad_input.data() + static_cast<std::size_t>(plane) * g.in_h * g.in_w;

    for (std::size_t oc = 0; oc < g.out_channels; ++oc) {
      const double* gout = grad_output.data() + (b * g.out_channels + oc) * oh_n * ow_n;
      const double* wk = kernel.data() + (oc * g.in_channels + ic) * k * k;
      for (std::size_t kh = 0; kh < k; ++kh) {
        const Range rows = valid_outputs(oh_n, g.in_h, kh, s, g.padding);
        for (std::size_t kw = 0; kw < k; ++kw) {
          const Range cols = valid_outputs(ow_n, g.in_w, kw, s, g.padding);
          const double wv = wk[kh * k + kw];
          for (std::size_t oh = rows.lo; oh < rows.hi; ++oh) {
            double* gin_row = gin + (oh * s + kh - g.padding) * g.in_w;
            const double* gout_row = gout + oh * ow_n;
            if (s == 1) {
              double* dst = gin_row + kw - g.padding;
              for (std::size_t ow = cols.lo; ow < cols.hi; ++ow) dst[ow] += wv * gout_row[ow];
            } else {
              for (std::size_t ow = cols.lo; ow < cols.hi; ++ow)
                gin_row[ow * s + kw - g.padding] += wv * gout_row[ow];
            }
          }
        }
      }
    }
  }
}

void conv2d_backward_kernel(const ConvGeometry& g, std::span<const double> grad_output,
                            std::span<const double> input, std::span<double> grad_kernel,
                            std::span<double> grad_bias) {
  const std::size_t oh_n = g.out_h(), ow_n = g.out_w(), k = g.kernel, s = g.stride;
  const long pairs = static_cast<long>(g.out_channels * g.in_channels);

#pragma omp parallel for schedule(static)
  for (long pair = 0; pair < pairs; ++pair) {
    const std::size_t oc = static_cast<std::size_t>(pair) / g.in_channels;
    const std::size_t ic = static_cast<std::size_t>(pair) % g.in_channels;
    double* gk = grad_kernel.data() + static_cast<std::size_t>(pair) * k * k;
    for (std::size_t kh = 0; kh < k; ++kh) {
      const Range rows = valid_outputs(oh_n, g.in_h, kh, s, g.padding);
      for (std::size_t kw = 0; kw < k; ++kw) {
        const Range cols = valid_outputs(ow_n, g.in_w, kw, s, g.padding);
        double acc = 0.0;
        for (std::size_t b = 0; b < g.batch; ++b) {
          const double* gout = grad_output.data() + (b * g.out_channels + oc) * oh_n * ow_n;
          const double* in = input.data() + (b * g.in_channels + ic) * g.in_h * g.in_w;
          for (std::size_t oh = rows.lo; oh < rows.hi; ++oh) {
            const double* in_row = in + (oh * s + kh - g.padding) * g.in_w;
            const double* gout_row = gout + oh * ow_n;
            if (s == 1) {
              const double* src = in_row + kw - g.padding;
              for (std::size_t ow = cols.lo; ow < cols.hi; ++ow) acc += gout_row[ow] * src[ow];
            } else {
              for (std::size_t ow = cols.lo; ow < cols.hi; ++ow)
                acc += gout_row[ow] * in_row[ow * s + kw - g.padding];
            }
          }
        }
        gk[kh * k + kw] += acc;
      }
    }
  }

  if (grad_bias.empty()) return;
  const long out_channels = static_cast<long>(g.out_channels);
#pragma omp parallel for schedule(static)
  for (long oc = 0; oc < out_channels; ++oc) {
    double acc = 0.0;
    for (std::size_t b = 0; b < g.batch; ++b) {
      const double* gout =
          grad_output.data() + (b * g.out_channels + static_cast<std::size_t>(oc)) * oh_n * ow_n;
      for (std::size_t i = 0; i < oh_n * ow_n; ++i) acc += gout[i];
    }
    grad_bias[static_cast<std::size_t>(oc)] += acc;
  }
}

void maxpool2_forward(const PoolGeometry& g, std::span<const double> input,
                      std::span<double> output, std::span<std::size_t> argmax) {
  const std::size_t oh_n = g.in_h / 2, ow_n = g.in_w / 2;
  const long planes = static_cast<long>(g.planes);

#pragma omp parallel for schedule(static)
  for (long pl = 0; pl < planes; ++pl) {
    const std::size_t p = static_cast<std::size_t>(pl);
    for (std::size_t oh = 0; oh < oh_n; ++oh) {
      const std::size_t top = (p * g.in_h + 2 * oh) * g.in_w;
      const std::size_t bottom = top + g.in_w;
      for (std::size_t ow = 0; ow < ow_n; ++ow) {
        const std::size_t cand[4] = {top + 2 * ow, top + 2 * ow + 1, bottom + 2 * ow,
                                     bottom + 2 * ow + 1};
        std::size_t best = cand[0];
        for (int i = 1; i < 4; ++i)
          if (input[cand[i]] > input[best]) best = cand[i];
        const std::size_t o = (p * oh_n + oh) * ow_n + ow;
        output[o] = input[best];
        argmax[o] = best;
      }
    }
  }
}

}  // namespace iiao::kernels::omp
