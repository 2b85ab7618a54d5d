#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "acmix/gradcheck.hpp"
#include "acmix/ops.hpp"
#include "acmix/tensor.hpp"
#include "oracles.hpp"

using namespace acmix;

TEST(Tensor, IndexingIsNchwRowMajor) {
  Tensor t({2, 3, 4, 5});
  EXPECT_EQ(t.size(), 120u);
  EXPECT_EQ(t.index(1, 2, 3, 4), 119u);
  EXPECT_EQ(t.index(0, 1, 0, 0), 20u);
  t(1, 0, 2, 3) = 7.5;
  EXPECT_EQ(t.data()[t.index(1, 0, 2, 3)], 7.5);
  EXPECT_EQ(t.plane(1, 0)[2 * 5 + 3], 7.5);
}

TEST(Tensor, ArithmeticChecksShapes) {
  Tensor a({1, 2, 3, 3}, 1.0), b({1, 2, 3, 3}, 2.0), c({1, 3, 3, 3});
  EXPECT_EQ((a + b)(0, 1, 2, 2), 3.0);
  EXPECT_EQ((b - a)(0, 0, 0, 0), 1.0);
  EXPECT_EQ((2.5 * a)(0, 1, 1, 1), 2.5);
  EXPECT_THROW(a += c, ShapeError);
  EXPECT_THROW(Tensor({1, 1, 2, 2}, std::vector<double>(3)), ShapeError);
}

TEST(Tensor, SliceConcatRoundTrip) {
  std::mt19937_64 rng(1);
  const Tensor t = random_tensor({2, 6, 3, 4}, rng);
  std::vector<Tensor> parts{slice_channels(t, 0, 2), slice_channels(t, 2, 3), slice_channels(t, 5, 1)};
  EXPECT_EQ(max_abs_diff(concat_channels(parts), t), 0.0);
  EXPECT_THROW(slice_channels(t, 5, 2), ShapeError);
}

TEST(ConvKernel, RejectsEvenSize) {
  EXPECT_THROW(ConvKernel(2, 2, 2), ShapeError);
  EXPECT_THROW(ConvKernel(2, 2, 0), ShapeError);
  EXPECT_NO_THROW(ConvKernel(2, 2, 5));
}

TEST(Conv2dReference, MatchesPaddedOracle) {
  std::mt19937_64 rng(11);
  for (std::size_t k : {1u, 3u, 5u, 7u}) {
    const Tensor x = random_tensor({2, 3, 6, 9}, rng);
    const ConvKernel w = random_kernel(4, 3, k, rng);
    EXPECT_LE(max_abs_diff(conv2d_reference(x, w), oracle::padded_conv(x, w)), 1e-12) << "k=" << k;
  }
}

TEST(Conv2dReference, KernelLargerThanMap) {
  std::mt19937_64 rng(12);
  const Tensor x = random_tensor({1, 2, 2, 3}, rng);
  const ConvKernel w = random_kernel(2, 2, 7, rng);
  EXPECT_LE(max_abs_diff(conv2d_reference(x, w), oracle::padded_conv(x, w)), 1e-12);
}

TEST(Conv2dReference, ChannelMismatchThrows) {
  EXPECT_THROW(conv2d_reference(Tensor({1, 3, 4, 4}), ConvKernel(2, 4, 3)), ShapeError);
}

TEST(PointwiseConv, BitIdenticalToOneByOneConv) {
  std::mt19937_64 rng(13);
  const Tensor x = random_tensor({2, 5, 7, 6}, rng);
  const Matrix w = random_matrix(3, 5, rng);
  EXPECT_EQ(max_abs_diff(pointwise_conv(x, w), conv2d_reference(x, ConvKernel::from_matrix(w))), 0.0);
}

TEST(PointwiseConv, BackwardMatchesFiniteDifferences) {
  std::mt19937_64 rng(14);
  Tensor x = random_tensor({2, 3, 4, 4}, rng);
  Matrix w = random_matrix(4, 3, rng);
  const Tensor up = random_tensor({2, 4, 4, 4}, rng);
  const auto loss = [&] { return dot(up, pointwise_conv(x, w)); };
  const Matrix gw = pointwise_conv_backward_weight(x, up);
  const Tensor gx = pointwise_conv_backward_input(w, up);
  EXPECT_LE(relative_error(gw.data(), finite_difference_grad_inplace(loss, w.data(), 1e-5)), 1e-8);
  EXPECT_LE(relative_error(gx.data(), finite_difference_grad_inplace(loss, x.data(), 1e-5)), 1e-8);
}

TEST(Conv2dReference, KernelGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(15);
  const Tensor x = random_tensor({2, 2, 5, 5}, rng);
  ConvKernel w = random_kernel(3, 2, 3, rng);
  const Tensor up = random_tensor({2, 3, 5, 5}, rng);
  const ConvKernel g = conv2d_backward_kernel(x, w, up);
  const auto numeric = finite_difference_grad_inplace([&] { return dot(up, conv2d_reference(x, w)); }, w.data(), 1e-5);
  EXPECT_LE(relative_error(g.data(), numeric), 1e-8);
}

TEST(Softmax, MatchesLongDoubleOracle) {
  std::mt19937_64 rng(16);
  std::uniform_real_distribution<double> d(-20.0, 20.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> z(1 + trial % 30);
    for (double& v : z) v = d(rng);
    const auto w = softmax_over_set(z);
    const auto ref = oracle::softmax_ld(z);
    double s = 0.0;
    for (std::size_t t = 0; t < z.size(); ++t) {
      EXPECT_NEAR(w[t], static_cast<double>(ref[t]), 1e-15);
      s += w[t];
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Softmax, StableForHugeLogits) {
  const auto w = softmax_over_set(std::vector<double>{1000.0, 1000.0, -1000.0});
  EXPECT_DOUBLE_EQ(w[0], 0.5);
  EXPECT_DOUBLE_EQ(w[1], 0.5);
  EXPECT_EQ(w[2], 0.0);
}

TEST(Softmax, RejectsEmptyAndNonFinite) {
  EXPECT_THROW(softmax_over_set(std::vector<double>{}), std::invalid_argument);
  EXPECT_THROW(softmax_over_set(std::vector<double>{0.0, std::nan("")}), std::invalid_argument);
  EXPECT_THROW(softmax_over_set(std::vector<double>{std::numeric_limits<double>::infinity()}), std::invalid_argument);
}

TEST(Gradcheck, QuadraticIsExact) {
  std::vector<double> x{1.0, -2.0, 0.5};
  const auto f = [&] { return x[0] * x[0] + 3.0 * x[1] * x[1] + x[0] * x[2]; };
  const auto g = finite_difference_grad_inplace(f, x, 1e-5);
  EXPECT_NEAR(g[0], 2.0 * 1.0 + 0.5, 1e-9);
  EXPECT_NEAR(g[1], 6.0 * -2.0, 1e-9);
  EXPECT_NEAR(g[2], 1.0, 1e-9);
  EXPECT_EQ(x, (std::vector<double>{1.0, -2.0, 0.5}));
}

TEST(Gradcheck, TensorOverloadLeavesPointUntouched) {
  std::mt19937_64 rng(17);
  const Tensor p = random_tensor({1, 2, 2, 2}, rng);
  const Tensor g = finite_difference_grad([](const Tensor& t) { return 0.5 * dot(t, t); }, p, 1e-5);
  EXPECT_LE(max_abs_diff(g, p), 1e-9);
}

TEST(Gradcheck, NonFiniteNamesCoordinate) {
  std::vector<double> x{0.0, 1.0};
  const auto f = [&] { return x[1] > 1.0 ? std::nan("") : x[0]; };
  try {
    finite_difference_grad_inplace(f, x, 1e-3);
    FAIL() << "expected NonFiniteError";
  } catch (const NonFiniteError& e) {
    EXPECT_EQ(e.coordinate(), 1u);
  }
  EXPECT_EQ(x[1], 1.0);
}

TEST(Gradcheck, RejectsNonPositiveStep) {
  std::vector<double> x{1.0};
  EXPECT_THROW(finite_difference_grad_inplace([] { return 0.0; }, x, 0.0), std::invalid_argument);
  EXPECT_THROW(finite_difference_grad_inplace([] { return 0.0; }, x, -1e-5), std::invalid_argument);
}

TEST(Gradcheck, RelativeError) {
  const std::vector<double> a{3.0, 4.0}, b{3.0, 4.0}, z{0.0, 0.0}, c{0.0, 5.0};
  EXPECT_EQ(relative_error(a, b), 0.0);
  EXPECT_EQ(relative_error(z, z), 0.0);
  EXPECT_DOUBLE_EQ(relative_error(a, c), std::sqrt(9.0 + 1.0) / 5.0);
  EXPECT_THROW(relative_error(a, std::vector<double>{1.0}), ShapeError);
}
