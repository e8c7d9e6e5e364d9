#include "iiao/kernels.hpp"

// Reference kernels: one output element at a time, bounds checked per tap.

namespace iiao::kernels::serial {

namespace {

// Input coordinate for output position `o` and kernel tap `k`; negative or
// past-the-end values fall in the zero padding.
inline long tap(std::size_t o, std::size_t k, const ConvGeometry& g) {
  return static_cast<long>(o * g.stride + k) - static_cast<long>(g.padding);
}

}  // namespace

void conv2d_forward(const ConvGeometry& g, std::span<const double> input,
                    std::span<const double> kernel, std::span<const double> bias,
                    std::span<double> output) {
  const std::size_t oh_n = g.out_h(), ow_n = g.out_w(), k = g.kernel;
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t oc = 0; oc < g.out_channels; ++oc)
      for (std::size_t oh = 0; oh < oh_n; ++oh)
        for (std::size_t ow = 0; ow < ow_n; ++ow) {
          double acc = bias.empty() ? 0.0 : bias[oc];
          for (std::size_t ic = 0; ic < g.in_channels; ++ic)
            for (std::size_t kh = 0; kh < k; ++kh)
              for (std::size_t kw = 0; kw < k; ++kw) {
                const long ih = tap(oh, kh, g), iw = tap(ow, kw, g);
                if (ih < 0 || iw < 0 || ih >= static_cast<long>(g.in_h) ||
                    iw >= static_cast<long>(g.in_w))
                  continue;
                acc += kernel[((oc * g.in_channels + ic) * k + kh) * k + kw] *
                       input[((b * g.in_channels + ic) * g.in_h + ih) * g.in_w + iw];
              }
          output[((b * g.out_channels + oc) * oh_n + oh) * ow_n + ow] = acc;
        }
}

void conv2d_backward_input(const ConvGeometry& g, std::span<const double> grad_output,
                           std::span<const double> kernel, std::span<double> grad_input) {
  const std::size_t oh_n = g.out_h(), ow_n = g.out_w(), k = g.kernel;
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t oc = 0; oc < g.out_channels; ++oc)
      for (std::size_t oh = 0; oh < oh_n; ++oh)
        for (std::size_t ow = 0; ow < ow_n; ++ow) {
          const double go = grad_output[((b * g.out_channels + oc) * oh_n + oh) * ow_n + ow];
          for (std::size_t ic = 0; ic < g.in_channels; ++ic)
            for (std::size_t kh = 0; kh < k; ++kh)
              for (std::size_t kw = 0; kw < k; ++kw) {
                const long ih = tap(oh, kh, g), iw = tap(ow, kw, g);
                if (ih < 0 || iw < 0 || ih >= static_cast<long>(g.in_h) ||
                    iw >= static_cast<long>(g.in_w))
                  continue;
                grad_input[((b * g.in_channels + ic) * g.in_h + ih) * g.in_w + iw] +=
                    go * kernel[((oc * g.in_channels + ic) * k + kh) * k + kw];
              }
        }
}

void conv2d_backward_kernel(const ConvGeometry& g, std::span<const double> grad_output,
                            std::span<const double> input, std::span<double> grad_kernel,
                            std::span<double> grad_bias) {
  const std::size_t oh_n = g.out_h(), ow_n = g.out_w(), k = g.kernel;
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t oc = 0; oc < g.out_channels; ++oc)
      for (std::size_t oh = 0; oh < oh_n; ++oh)
        for (std::size_t ow = 0; ow < ow_n; ++ow) {
          const double go = grad_output[((b * g.out_channels + oc) * oh_n + oh) * ow_n + ow];
          if (!grad_bias.empty()) grad_bias[oc] += go;
          for (std::size_t ic = 0; ic < g.in_channels; ++ic)
            for (std::size_t kh = 0; kh < k; ++kh)
              for (std::size_t kw = 0; kw < k; ++kw) {
                const long ih = tap(oh, kh, g), iw = tap(ow, kw, g);
                if (ih < 0 || iw < 0 || ih >= static_cast<long>(g.in_h) ||
                    iw >= static_cast<long>(g.in_w))
                  continue;
                grad_kernel[((oc * g.in_channels + ic) * k + kh) * k + kw] +=
                    go * input[((b * g.in_channels + ic) * g.in_h + ih) * g.in_w + iw];
              }
        }
}

void maxpool2_forward(const PoolGeometry& g, std::span<const double> input,
                      std::span<double> output, std::span<std::size_t> argmax) {
  const std::size_t oh_n = g.in_h / 2, ow_n = g.in_w / 2;
  for (std::size_t p = 0; p < g.planes; ++p)
    for (std::size_t oh = 0; oh < oh_n; ++oh)
      for (std::size_t ow = 0; ow < ow_n; ++ow) {
        std::size_t best = (p * g.in_h + 2 * oh) * g.in_w + 2 * ow;
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = (p * g.in_h + 2 * oh + dy) * g.in_w + 2 * ow + dx;
            if (input[idx] > input[best]) best = idx;
          }
        const std::size_t o = (p * oh_n + oh) * ow_n + ow;
        output[o] = input[best];
        argmax[o] = best;
      }
}

}  // namespace iiao::kernels::serial
