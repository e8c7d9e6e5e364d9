#include "iiao/image_ops.hpp"

#include <algorithm>
#include <cmath>

namespace iiao::image {

namespace {

void require_image(const Tensor& image, const char* what) {
  if (image.rank() != 3 || image.dim(0) != 3)
    throw ShapeError(std::string(what) + ": expected 3 x H x W image, got " + shape_str(image.shape()));
}

}  // namespace

std::size_t reflect_index(long i, std::size_t n) {
  if (n == 1) return 0;
  const long period = 2 * static_cast<long>(n) - 2;
  long m = i % period;
  if (m < 0) m += period;
  if (m >= static_cast<long>(n)) m = period - m;
  return static_cast<std::size_t>(m);
}

Tensor reflect_pad(const Tensor& image, std::size_t h, std::size_t w) {
  require_image(image, "reflect_pad");
  const std::size_t H = image.dim(1), W = image.dim(2);
  const std::size_t oh = std::max(H, h), ow = std::max(W, w);
  if (oh == H && ow == W) return image;
  Tensor out(Shape{3, oh, ow});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < oh; ++y) {
      const std::size_t sy = reflect_index(static_cast<long>(y), H);
      for (std::size_t x = 0; x < ow; ++x)
        out[(c * oh + y) * ow + x] = image[(c * H + sy) * W + reflect_index(static_cast<long>(x), W)];
    }
  return out;
}

Tensor crop(const Tensor& image, std::size_t top, std::size_t left, std::size_t h, std::size_t w) {
  require_image(image, "crop");
  const std::size_t H = image.dim(1), W = image.dim(2);
  if (top + h > H || left + w > W)
    throw ShapeError("crop: window " + std::to_string(h) + "x" + std::to_string(w) + " at (" +
                     std::to_string(top) + "," + std::to_string(left) + ") exceeds image " +
                     shape_str(image.shape()));
  Tensor out(Shape{3, h, w});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < h; ++y) {
      const double* src = image.data() + (c * H + top + y) * W + left;
      std::copy(src, src + w, out.data() + (c * h + y) * w);
    }
  return out;
}

Tensor flip_horizontal(const Tensor& image) {
  require_image(image, "flip_horizontal");
  const std::size_t H = image.dim(1), W = image.dim(2);
  Tensor out(image.shape());
  for (std::size_t row = 0; row < 3 * H; ++row)
    for (std::size_t x = 0; x < W; ++x) out[row * W + x] = image[row * W + (W - 1 - x)];
  return out;
}

Tensor to_grayscale(const Tensor& image) {
  require_image(image, "to_grayscale");
  const std::size_t plane = image.dim(1) * image.dim(2);
  Tensor out(image.shape());
  for (std::size_t i = 0; i < plane; ++i) {
    const double y = 0.299 * image[i] + 0.587 * image[plane + i] + 0.114 * image[2 * plane + i];
    out[i] = out[plane + i] = out[2 * plane + i] = y;
  }
  return out;
}

Tensor resize_bilinear(const Tensor& image, std::size_t h, std::size_t w) {
  require_image(image, "resize_bilinear");
  if (h == 0 || w == 0) throw ShapeError("resize_bilinear: target size must be positive");
  const std::size_t H = image.dim(1), W = image.dim(2);
  Tensor out(Shape{3, h, w});
  const double sy = static_cast<double>(H) / static_cast<double>(h);
  const double sx = static_cast<double>(W) / static_cast<double>(w);
  for (std::size_t y = 0; y < h; ++y) {
    const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, static_cast<double>(H - 1));
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, H - 1);
    const double ty = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < w; ++x) {
      const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, static_cast<double>(W - 1));
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, W - 1);
      const double tx = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < 3; ++c) {
        const double* p = image.data() + c * H * W;
        const double top = p[y0 * W + x0] * (1 - tx) + p[y0 * W + x1] * tx;
        const double bot = p[y1 * W + x0] * (1 - tx) + p[y1 * W + x1] * tx;
        out[(c * h + y) * w + x] = top * (1 - ty) + bot * ty;
      }
    }
  }
  return out;
}

}  // namespace iiao::image
