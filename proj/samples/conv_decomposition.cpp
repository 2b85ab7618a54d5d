// Convolution as 1x1 projections plus shifts, checked against the direct sum.

#include <cstdio>
#include <random>

#include "acmix/conv_decomp.hpp"
#include "acmix/ops.hpp"

int main() {
  std::mt19937_64 rng(2024);
  const acmix::Tensor x = acmix::random_tensor({1, 8, 14, 14}, rng);
  const acmix::ConvKernel w = acmix::random_kernel(16, 8, 3, rng);

  const acmix::Tensor direct = acmix::conv2d_reference(x, w);
  const acmix::Tensor decomposed = acmix::conv2d_decomposed(x, w);
  std::printf("3x3 conv, 8 -> 16 channels, 14x14: max |direct - decomposed| = %.3e\n",
              acmix::max_abs_diff(direct, decomposed));

  // A shift is a depthwise conv with a one-hot kernel.
  const acmix::ShiftSpec s{-1, 1};
  const double dev = acmix::max_abs_diff(acmix::shift(x, s), acmix::shift_via_depthwise(x, s, 3));
  std::printf("shift (%d, %d) vs one-hot depthwise: max dev = %.3e\n", s.dx, s.dy, dev);
  return 0;
}
