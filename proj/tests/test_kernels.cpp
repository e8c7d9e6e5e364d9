#include <vector>

#include <gtest/gtest.h>

#include "iiao/kernels.hpp"
#include "iiao/rng.hpp"

#ifdef IIAO_HAVE_OPENMP
#include <omp.h>
#endif

using namespace iiao;
using kernels::ConvGeometry;

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

// Direct loop over the definition of cross-correlation.
std::vector<double> naive_conv(const ConvGeometry& g, const std::vector<double>& x,
                               const std::vector<double>& w, const std::vector<double>& b) {
  std::vector<double> y(g.output_size());
  const long P = static_cast<long>(g.padding);
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t o = 0; o < g.out_channels; ++o)
      for (std::size_t oy = 0; oy < g.out_h(); ++oy)
        for (std::size_t ox = 0; ox < g.out_w(); ++ox) {
          double acc = b[o];
          for (std::size_t c = 0; c < g.in_channels; ++c)
            for (std::size_t ky = 0; ky < g.kernel; ++ky)
              for (std::size_t kx = 0; kx < g.kernel; ++kx) {
                const long iy = static_cast<long>(oy * g.stride + ky) - P;
                const long ix = static_cast<long>(ox * g.stride + kx) - P;
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(g.in_h) || ix >= static_cast<long>(g.in_w)) continue;
                acc += w[((o * g.in_channels + c) * g.kernel + ky) * g.kernel + kx] *
                       x[((n * g.in_channels + c) * g.in_h + static_cast<std::size_t>(iy)) * g.in_w +
                         static_cast<std::size_t>(ix)];
              }
          y[((n * g.out_channels + o) * g.out_h() + oy) * g.out_w() + ox] = acc;
        }
  return y;
}

std::vector<ConvGeometry> geometries() {
  return {
      {1, 1, 5, 5, 1, 3, 1, 1}, {2, 3, 7, 6, 4, 3, 2, 0}, {2, 4, 9, 9, 3, 5, 1, 2},
      {1, 8, 16, 12, 16, 3, 1, 1}, {3, 2, 4, 4, 5, 1, 1, 0}, {1, 3, 11, 8, 2, 3, 3, 1},
  };
}

void expect_close(const std::vector<double>& a, const std::vector<double>& b, double tol) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) ASSERT_NEAR(a[i], b[i], tol) << "index " << i;
}

}  // namespace

TEST(Kernels, SerialForwardMatchesDefinition) {
  Rng rng(1);
  for (const auto& g : geometries()) {
    const auto x = random_vec(rng, g.input_size());
    const auto w = random_vec(rng, g.kernel_size());
    const auto b = random_vec(rng, g.out_channels);
    std::vector<double> y(g.output_size());
    kernels::serial::conv2d_forward(g, x, w, b, y);
    expect_close(y, naive_conv(g, x, w, b), 1e-13);
  }
}

// <y, dy> is linear in x and in w, so the backward kernels must satisfy
// <grad_input, x> + <grad_kernel, w> + <grad_bias, 1> = <dy, y>.
TEST(Kernels, SerialBackwardIsTheAdjoint) {
  Rng rng(2);
  for (const auto& g : geometries()) {
    const auto x = random_vec(rng, g.input_size());
    const auto w = random_vec(rng, g.kernel_size());
    const auto b = random_vec(rng, g.out_channels);
    const auto dy = random_vec(rng, g.output_size());
    std::vector<double> y(g.output_size()), gx(g.input_size()), gw(g.kernel_size()), gb(g.out_channels);
    kernels::serial::conv2d_forward(g, x, w, b, y);
    kernels::serial::conv2d_backward_input(g, dy, w, gx);
    kernels::serial::conv2d_backward_kernel(g, dy, x, gw, gb);
    double lhs = 0.0, rhs = 0.0, bias_part = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) rhs += dy[i] * y[i];
    for (std::size_t i = 0; i < x.size(); ++i) lhs += gx[i] * x[i];
    double lhs_w = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) lhs_w += gw[i] * w[i];
    for (std::size_t o = 0; o < b.size(); ++o) bias_part += gb[o] * b[o];
    // each of the two linear parts alone reproduces <dy, y - bias term>
    EXPECT_NEAR(lhs + bias_part, rhs, 1e-10);
    EXPECT_NEAR(lhs_w + bias_part, rhs, 1e-10);
  }
}

TEST(Kernels, BackwardAccumulates) {
  const ConvGeometry g{1, 1, 3, 3, 1, 3, 1, 1};
  Rng rng(3);
  const auto dy = random_vec(rng, g.output_size());
  const auto w = random_vec(rng, g.kernel_size());
  std::vector<double> once(g.input_size()), twice(g.input_size());
  kernels::serial::conv2d_backward_input(g, dy, w, once);
  kernels::serial::conv2d_backward_input(g, dy, w, twice);
  kernels::serial::conv2d_backward_input(g, dy, w, twice);
  for (std::size_t i = 0; i < once.size(); ++i) EXPECT_NEAR(twice[i], 2.0 * once[i], 1e-14);
}

TEST(Kernels, MaxpoolArgmaxTiesTakeFirst) {
  const kernels::PoolGeometry g{1, 2, 4};
  const std::vector<double> x = {1.0, 3.0, 2.0, 2.0, 3.0, 0.0, 2.0, 2.0};
  std::vector<double> y(2);
  std::vector<std::size_t> arg(2);
  kernels::serial::maxpool2_forward(g, x, y, arg);
  EXPECT_EQ(y[0], 3.0);
  EXPECT_EQ(arg[0], 1u);
  EXPECT_EQ(y[1], 2.0);
  EXPECT_EQ(arg[1], 2u);
}

#ifdef IIAO_HAVE_OPENMP

TEST(Kernels, OmpMatchesSerial) {
  Rng rng(4);
  for (const auto& g : geometries()) {
    const auto x = random_vec(rng, g.input_size());
    const auto w = random_vec(rng, g.kernel_size());
    const auto b = random_vec(rng, g.out_channels);
    const auto dy = random_vec(rng, g.output_size());

    std::vector<double> ys(g.output_size()), yo(g.output_size());
    kernels::serial::conv2d_forward(g, x, w, b, ys);
    kernels::omp::conv2d_forward(g, x, w, b, yo);
    expect_close(ys, yo, 1e-13);

    std::vector<double> gxs(g.input_size()), gxo(g.input_size());
    kernels::serial::conv2d_backward_input(g, dy, w, gxs);
    kernels::omp::conv2d_backward_input(g, dy, w, gxo);
    expect_close(gxs, gxo, 1e-13);

    std::vector<double> gws(g.kernel_size()), gwo(g.kernel_size()), gbs(g.out_channels), gbo(g.out_channels);
    kernels::serial::conv2d_backward_kernel(g, dy, x, gws, gbs);
    kernels::omp::conv2d_backward_kernel(g, dy, x, gwo, gbo);
    expect_close(gws, gwo, 1e-12);
    expect_close(gbs, gbo, 1e-12);
  }
  const kernels::PoolGeometry pg{6, 8, 10};
  const auto px = random_vec(rng, 6 * 8 * 10);
  std::vector<double> ps(6 * 4 * 5), po(6 * 4 * 5);
  std::vector<std::size_t> as(ps.size()), ao(po.size());
  kernels::serial::maxpool2_forward(pg, px, ps, as);
  kernels::omp::maxpool2_forward(pg, px, po, ao);
  EXPECT_EQ(ps, po);
  EXPECT_EQ(as, ao);
}

TEST(Kernels, OmpResultIndependentOfThreadCount) {
  const ConvGeometry g{2, 8, 16, 16, 8, 3, 1, 1};
  Rng rng(5);
  const auto x = random_vec(rng, g.input_size());
  const auto w = random_vec(rng, g.kernel_size());
  const auto b = random_vec(rng, g.out_channels);
  const auto dy = random_vec(rng, g.output_size());
  auto run = [&](int threads) {
    omp_set_num_threads(threads);
    std::vector<double> y(g.output_size()), gx(g.input_size()), gw(g.kernel_size()), gb(g.out_channels);
    kernels::omp::conv2d_forward(g, x, w, b, y);
    kernels::omp::conv2d_backward_input(g, dy, w, gx);
    kernels::omp::conv2d_backward_kernel(g, dy, x, gw, gb);
    y.insert(y.end(), gx.begin(), gx.end());
    y.insert(y.end(), gw.begin(), gw.end());
    y.insert(y.end(), gb.begin(), gb.end());
    return y;
  };
  const auto one = run(1);
  EXPECT_EQ(one, run(3));
  EXPECT_EQ(one, run(8));
}

#endif

TEST(Kernels, BackendSelection) {
  const auto saved = kernels::backend();
  kernels::set_backend(kernels::Backend::serial);
  EXPECT_EQ(kernels::backend(), kernels::Backend::serial);
  kernels::set_backend(saved);
}
