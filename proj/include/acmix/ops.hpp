#pragma once

// Reference (naive-loop) operators shared by every other module.

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "acmix/tensor.hpp"

namespace acmix {

/// Standard stride-1 convolution with floor(k/2) zero padding ("same" output size).
/// Each output element accumulates kernel position (p, q) outermost, input channel innermost.
inline Tensor conv2d_reference(const Tensor& input, const ConvKernel& kernel) {
  if (input.channels() != kernel.in_channels()) {
    throw ShapeError("conv2d: input has " + std::to_string(input.channels()) +
                     " channels, kernel expects " + std::to_string(kernel.in_channels()));
  }
  const auto H = static_cast<std::ptrdiff_t>(input.height());
  const auto W = static_cast<std::ptrdiff_t>(input.width());
  const auto k = static_cast<std::ptrdiff_t>(kernel.k());
  const std::ptrdiff_t r = k / 2;
  Tensor out({input.batch(), kernel.out_channels(), input.height(), input.width()});
  for (std::size_t n = 0; n < input.batch(); ++n)
    for (std::size_t o = 0; o < kernel.out_channels(); ++o)
      for (std::ptrdiff_t i = 0; i < H; ++i)
        for (std::ptrdiff_t j = 0; j < W; ++j) {
          double acc = 0.0;
          for (std::ptrdiff_t p = 0; p < k; ++p) {
            const std::ptrdiff_t a = i + p - r;
            if (a < 0 || a >= H) continue;
            for (std::ptrdiff_t q = 0; q < k; ++q) {
              const std::ptrdiff_t b = j + q - r;
              if (b < 0 || b >= W) continue;
              for (std::size_t c = 0; c < input.channels(); ++c) {
                acc += kernel(o, c, static_cast<std::size_t>(p), static_cast<std::size_t>(q)) *
                       input(n, c, static_cast<std::size_t>(a), static_cast<std::size_t>(b));
              }
            }
          }
          out(n, o, static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = acc;
        }
  return out;
}

/// Gradient of <upstream, conv2d_reference(input, kernel)> with respect to the kernel.
inline ConvKernel conv2d_backward_kernel(const Tensor& input, const ConvKernel& kernel,
                                         const Tensor& upstream) {
  const Shape expect{input.batch(), kernel.out_channels(), input.height(), input.width()};
  if (upstream.shape() != expect) {
    throw ShapeError("conv2d backward: upstream " + upstream.shape().str() + ", expected " + expect.str());
  }
  const auto H = static_cast<std::ptrdiff_t>(input.height());
  const auto W = static_cast<std::ptrdiff_t>(input.width());
  const auto k = static_cast<std::ptrdiff_t>(kernel.k());
  const std::ptrdiff_t r = k / 2;
  ConvKernel grad(kernel.out_channels(), kernel.in_channels(), kernel.k());
  for (std::size_t o = 0; o < kernel.out_channels(); ++o)
    for (std::size_t c = 0; c < kernel.in_channels(); ++c)
      for (std::ptrdiff_t p = 0; p < k; ++p)
        for (std::ptrdiff_t q = 0; q < k; ++q) {
          double acc = 0.0;
          for (std::size_t n = 0; n < input.batch(); ++n)
            for (std::ptrdiff_t i = 0; i < H; ++i) {
              const std::ptrdiff_t a = i + p - r;
              if (a < 0 || a >= H) continue;
              for (std::ptrdiff_t j = 0; j < W; ++j) {
                const std::ptrdiff_t b = j + q - r;
                if (b < 0 || b >= W) continue;
                acc += upstream(n, o, static_cast<std::size_t>(i), static_cast<std::size_t>(j)) *
                       input(n, c, static_cast<std::size_t>(a), static_cast<std::size_t>(b));
              }
            }
          grad(o, c, static_cast<std::size_t>(p), static_cast<std::size_t>(q)) = acc;
        }
  return grad;
}

/// 1x1 convolution: per-pixel matrix-vector product with an (out x in) weight.
inline Tensor pointwise_conv(const Tensor& input, const Matrix& weight) {
  if (weight.cols() != input.channels()) {
    throw ShapeError("pointwise_conv: weight has " + std::to_string(weight.cols()) +
                     " columns, input has " + std::to_string(input.channels()) + " channels");
  }
  const std::size_t P = input.shape().plane();
  Tensor out({input.batch(), weight.rows(), input.height(), input.width()});
  for (std::size_t n = 0; n < input.batch(); ++n)
    for (std::size_t o = 0; o < weight.rows(); ++o) {
      auto dst = out.plane(n, o);
      for (std::size_t c = 0; c < input.channels(); ++c) {
        const double w = weight(o, c);
        auto src = input.plane(n, c);
        for (std::size_t t = 0; t < P; ++t) dst[t] += w * src[t];
      }
    }
  return out;
}

/// d<upstream, pointwise_conv(input, W)>/dW.
inline Matrix pointwise_conv_backward_weight(const Tensor& input, const Tensor& upstream) {
  if (upstream.batch() != input.batch() || upstream.height() != input.height() ||
      upstream.width() != input.width()) {
    throw ShapeError("pointwise backward: upstream " + upstream.shape().str() + " vs input " +
                     input.shape().str());
  }
  Matrix grad(upstream.channels(), input.channels());
  for (std::size_t n = 0; n < input.batch(); ++n)
    for (std::size_t o = 0; o < upstream.channels(); ++o) {
      auto g = upstream.plane(n, o);
      for (std::size_t c = 0; c < input.channels(); ++c) {
        auto x = input.plane(n, c);
        double acc = 0.0;
        for (std::size_t t = 0; t < g.size(); ++t) acc += g[t] * x[t];
        grad(o, c) += acc;
      }
    }
  return grad;
}

/// d<upstream, pointwise_conv(input, W)>/dinput, i.e. pointwise_conv(upstream, W^T).
inline Tensor pointwise_conv_backward_input(const Matrix& weight, const Tensor& upstream) {
  if (upstream.channels() != weight.rows()) throw ShapeError("pointwise backward: channel mismatch");
  const std::size_t P = upstream.shape().plane();
  Tensor grad({upstream.batch(), weight.cols(), upstream.height(), upstream.width()});
  for (std::size_t n = 0; n < upstream.batch(); ++n)
    for (std::size_t c = 0; c < weight.cols(); ++c) {
      auto dst = grad.plane(n, c);
      for (std::size_t o = 0; o < weight.rows(); ++o) {
        const double w = weight(o, c);
        auto g = upstream.plane(n, o);
        for (std::size_t t = 0; t < P; ++t) dst[t] += w * g[t];
      }
    }
  return grad;
}

/// Numerically stable softmax (max subtraction, compensated normalizer).
inline std::vector<double> softmax_over_set(std::span<const double> logits) {
  if (logits.empty()) throw std::invalid_argument("softmax over an empty set");
  double peak = logits[0];
  for (double z : logits) {
    if (!std::isfinite(z)) throw std::invalid_argument("softmax: non-finite logit");
    peak = std::max(peak, z);
  }
  std::vector<double> out(logits.size());
  double total = 0.0;
  double carry = 0.0;  // Neumaier compensation
  for (std::size_t m = 0; m < logits.size(); ++m) {
    out[m] = std::exp(logits[m] - peak);
    const double t = total + out[m];
    carry += std::abs(total) >= std::abs(out[m]) ? (total - t) + out[m] : (out[m] - t) + total;
    total = t;
  }
  total += carry;
  for (double& e : out) e /= total;
  return out;
}

}  // namespace acmix
