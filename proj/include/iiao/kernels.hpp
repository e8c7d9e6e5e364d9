#pragma once

#include <cstddef>
#include <span>

// Raw compute kernels behind the tensor ops. Every kernel exists twice: a
// plain serial reference written for clarity, and an OpenMP version written
// for speed. The tensor ops call the dispatching entry points at the bottom of
// this header; tests hold the two variants against each other.
//
// Parallel variants partition work so that every output element is written by
// exactly one thread with a fixed summation order, so results do not depend on
// the thread count.
namespace iiao::kernels {

struct ConvGeometry {
  std::size_t batch = 1;
  std::size_t in_channels = 1;
  std::size_t in_h = 1;
  std::size_t in_w = 1;
  std::size_t out_channels = 1;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;

  std::size_t out_h() const { return (in_h + 2 * padding - kernel) / stride + 1; }
  std::size_t out_w() const { return (in_w + 2 * padding - kernel) / stride + 1; }
  std::size_t input_size() const { return batch * in_channels * in_h * in_w; }
  std::size_t output_size() const { return batch * out_channels * out_h() * out_w(); }
  std::size_t kernel_size() const { return out_channels * in_channels * kernel * kernel; }
};

struct PoolGeometry {
  std::size_t planes = 1;  // batch * channels
  std::size_t in_h = 2;
  std::size_t in_w = 2;
};

namespace serial {

void conv2d_forward(const ConvGeometry& g, std::span<const double> input,
                    std::span<const double> kernel, std::span<const double> bias,
                    std::span<double> output);
// Accumulates into grad_input.
void conv2d_backward_input(const ConvGeometry& g, std::span<const double> grad_output,
                           std::span<const double> kernel, std::span<double> grad_input);
// Accumulates into grad_kernel and grad_bias.
void conv2d_backward_kernel(const ConvGeometry& g, std::span<const double> grad_output,
                            std::span<const double> input, std::span<double> grad_kernel,
                            std::span<double> grad_bias);

// 2x2 max pooling; `argmax` receives the flat input index chosen for each
// output (first index wins ties).
void maxpool2_forward(const PoolGeometry& g, std::span<const double> input,
                      std::span<double> output, std::span<std::size_t> argmax);

}  // namespace serial

namespace omp {

void conv2d_forward(const ConvGeometry& g, std::span<const double> input,
                    std::span<const double> kernel, std::span<const double> bias,
                    std::span<double> output);
void conv2d_backward_input(const ConvGeometry& g, std::span<const double> grad_output,
                           std::span<const double> kernel, std::span<double> grad_input);
void conv2d_backward_kernel(const ConvGeometry& g, std::span<const double> grad_output,
                            std::span<const double> input, std::span<double> grad_kernel,
                            std::span<double> grad_bias);
void maxpool2_forward(const PoolGeometry& g, std::span<const double> input,
                      std::span<double> output, std::span<std::size_t> argmax);

}  // namespace omp

enum class Backend { serial, omp };

// Process-wide selection used by the dispatchers below. Defaults to omp when
// built with OpenMP, serial otherwise.
void set_backend(Backend backend);
Backend backend();
bool omp_available();

// Applies the thread-count environment variable IIAO_THREADS if set.
void configure_threads_from_env();
// No-op without OpenMP or for n < 1.
void set_threads(int n);

void conv2d_forward(const ConvGeometry& g, std::span<const double> input,
                    std::span<const double> kernel, std::span<const double> bias,
                    std::span<double> output);
void conv2d_backward_input(const ConvGeometry& g, std::span<const double> grad_output,
                           std::span<const double> kernel, std::span<double> grad_input);
void conv2d_backward_kernel(const ConvGeometry& g, std::span<const double> grad_output,
                            std::span<const double> input, std::span<double> grad_kernel,
                            std::span<double> grad_bias);
void maxpool2_forward(const PoolGeometry& g, std::span<const double> input,
                      std::span<double> output, std::span<std::size_t> argmax);

}  // namespace iiao::kernels
