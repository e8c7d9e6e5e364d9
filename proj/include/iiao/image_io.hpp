#pragma once

#include <filesystem>

#include "iiao/tensor.hpp"

namespace iiao {

// Binary 8-bit PPM (P6) <-> 3xHxW tensor with values in [0, 1].
Tensor read_ppm(const std::filesystem::path& path);
void write_ppm(const Tensor& image, const std::filesystem::path& path);

// Rounds every value to the nearest 1/255 step, as a PPM round trip would.
Tensor quantize_8bit(const Tensor& image);

}  // namespace iiao
