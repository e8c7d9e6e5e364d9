#include <atomic>
#include <cstdlib>
#include <string>

#include "iiao/kernels.hpp"

#ifdef IIAO_HAVE_OPENMP
#include <omp.h>
#endif

namespace iiao::kernels {

namespace {

#ifdef IIAO_HAVE_OPENMP
std::atomic<Backend> g_backend{Backend::omp};
#else
std::atomic<Backend> g_backend{Backend::serial};
#endif

}  // namespace

bool omp_available() {
#ifdef IIAO_HAVE_OPENMP
  return true;
#else
  return false;
#endif
}

void set_backend(Backend b) { g_backend.store(b); }
Backend backend() { return g_backend.load(); }

void configure_threads_from_env() {
#ifdef IIAO_HAVE_OPENMP
  if (const char* env = std::getenv("IIAO_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n > 0) omp_set_num_threads(n);
    } catch (const std::exception&) {
      // ignored: fall back to the OpenMP default
    }
  }
#endif
}

void set_threads(int n) {
#ifdef IIAO_HAVE_OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

void conv2d_forward(const ConvGeometry& g, std::span<const double> input,
                    std::span<const double> kernel, std::span<const double> bias,
                    std::span<double> output) {
  if (backend() == Backend::omp)
    omp::conv2d_forward(g, input, kernel, bias, output);
  else
    serial::conv2d_forward(g, input, kernel, bias, output);
}

void conv2d_backward_input(const ConvGeometry& g, std::span<const double> grad_output,
                           std::span<const double> kernel, std::span<double> grad_input) {
  if (backend() == Backend::omp)
    omp::conv2d_backward_input(g, grad_output, kernel, grad_input);
  else
    serial::conv2d_backward_input(g, grad_output, kernel, grad_input);
}

void conv2d_backward_kernel(const ConvGeometry& g, std::span<const double> grad_output,
                            std::span<const double> input, std::span<double> grad_kernel,
                            std::span<double> grad_bias) {
  if (backend() == Backend::omp)
    omp::conv2d_backward_kernel(g, grad_output, input, grad_kernel, grad_bias);
  else
    serial::conv2d_backward_kernel(g, grad_output, input, grad_kernel, grad_bias);
}

void maxpool2_forward(const PoolGeometry& g, std::span<const double> input,
                      std::span<double> output, std::span<std::size_t> argmax) {
  if (backend() == Backend::omp)
    omp::maxpool2_forward(g, input, output, argmax);
  else
    serial::maxpool2_forward(g, input, output, argmax);
}

}  // namespace iiao::kernels
