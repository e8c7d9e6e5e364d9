#pragma once

#include <cstddef>

#include "iiao/tensor.hpp"

// Geometric and color transforms on 3 x H x W images.
namespace iiao::image {

// Mirror index for reflection padding without repeating the edge pixel
// (dcb|abcd|cba). Valid for any i when n >= 2; always 0 when n == 1.
std::size_t reflect_index(long i, std::size_t n);

// Pads on the bottom and right by reflection up to (h, w). Dimensions already
// at least that large are left alone.
Tensor reflect_pad(const Tensor& image, std::size_t h, std::size_t w);

Tensor crop(const Tensor& image, std::size_t top, std::size_t left, std::size_t h, std::size_t w);
Tensor flip_horizontal(const Tensor& image);

// ITU-R BT.601 luma replicated to all three channels.
Tensor to_grayscale(const Tensor& image);

// Bilinear resampling with half-pixel centers and edge clamping.
Tensor resize_bilinear(const Tensor& image, std::size_t h, std::size_t w);

}  // namespace iiao::image
