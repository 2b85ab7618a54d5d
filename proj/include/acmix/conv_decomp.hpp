#pragma once

// Convolution as k^2 pointwise projections followed by shift-and-sum, and the
// depthwise / group-convolution replacements for the tensor shift.

#include <cstddef>
#include <cstdlib>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "acmix/ops.hpp"
#include "acmix/tensor.hpp"

namespace acmix {

/// Displacement of a Shift: output(i, j) reads input(i + dx, j + dy).
/// dx moves along rows, dy along columns.
struct ShiftSpec {
  int dx = 0;
  int dy = 0;

  bool operator==(const ShiftSpec&) const = default;
};

namespace detail {

// Half-open range of output indices t in [0, extent) for which t + offset is in range.
struct Span1D {
  std::size_t begin = 0;
  std::size_t end = 0;
};

inline Span1D valid_range(std::ptrdiff_t extent, std::ptrdiff_t offset) {
  std::ptrdiff_t lo = offset < 0 ? -offset : 0;
  std::ptrdiff_t hi = offset > 0 ? extent - offset : extent;
  if (hi < lo) hi = lo;
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

// dst(i, j) += w * src(i + di, j + dj) over the in-range region of one plane.
inline void accumulate_shifted(std::span<double> dst, std::span<const double> src, std::size_t H,
                               std::size_t W, std::ptrdiff_t di, std::ptrdiff_t dj, double w) {
  const auto rows = valid_range(static_cast<std::ptrdiff_t>(H), di);
  const auto cols = valid_range(static_cast<std::ptrdiff_t>(W), dj);
  for (std::size_t i = rows.begin; i < rows.end; ++i) {
    double* out = dst.data() + i * W;
    const std::size_t row = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(i) + di) * W;
    const double* in = src.data() + row + static_cast<std::size_t>(static_cast<std::ptrdiff_t>(cols.begin) + dj);
    for (std::size_t j = cols.begin, t = 0; j < cols.end; ++j, ++t) out[j] += w * in[t];
  }
}

}  // namespace detail

/// Spatial translation with zero fill for vacated positions.
inline Tensor shift(const Tensor& input, ShiftSpec spec) {
  if (static_cast<std::size_t>(std::abs(spec.dx)) >= input.height() ||
      static_cast<std::size_t>(std::abs(spec.dy)) >= input.width()) {
    throw std::invalid_argument("shift (" + std::to_string(spec.dx) + ", " + std::to_string(spec.dy) +
                                ") exceeds feature map " + input.shape().str());
  }
  const std::size_t H = input.height(), W = input.width();
  Tensor out(input.shape());
  const auto rows = detail::valid_range(static_cast<std::ptrdiff_t>(H), spec.dx);
  const auto cols = detail::valid_range(static_cast<std::ptrdiff_t>(W), spec.dy);
  for (std::size_t n = 0; n < input.batch(); ++n)
    for (std::size_t c = 0; c < input.channels(); ++c)
      for (std::size_t i = rows.begin; i < rows.end; ++i)
        for (std::size_t j = cols.begin; j < cols.end; ++j)
          out(n, c, i, j) = input(n, c, i + spec.dx, j + spec.dy);
  return out;
}

/// Convolution evaluated as Stage I (one pointwise projection per kernel tap) and
/// Stage II (shift each projection by its tap offset and sum).
inline Tensor conv2d_decomposed(const Tensor& input, const ConvKernel& kernel) {
  if (input.channels() != kernel.in_channels()) {
    throw ShapeError("conv2d_decomposed: input has " + std::to_string(input.channels()) +
                     " channels, kernel expects " + std::to_string(kernel.in_channels()));
  }
  const int r = static_cast<int>(kernel.radius());
  Tensor out({input.batch(), kernel.out_channels(), input.height(), input.width()});
  for (std::size_t p = 0; p < kernel.k(); ++p)
    for (std::size_t q = 0; q < kernel.k(); ++q) {
      const ShiftSpec offset{static_cast<int>(p) - r, static_cast<int>(q) - r};
      // A tap displaced past the whole map never lands in range.
      if (static_cast<std::size_t>(std::abs(offset.dx)) >= input.height() ||
          static_cast<std::size_t>(std::abs(offset.dy)) >= input.width())
        continue;
      const Tensor projected = pointwise_conv(input, kernel.tap(p, q));
      out += shift(projected, offset);
    }
  return out;
}

/// Per-channel k x k convolution, zero padded, stride 1. `kernels` holds (channels, k, k).
inline Tensor depthwise_conv(const Tensor& input, std::span<const double> kernels, std::size_t k) {
  if (k % 2 == 0 || kernels.size() != input.channels() * k * k) {
    throw ShapeError("depthwise_conv: expected " + std::to_string(input.channels()) + " odd " +
                     std::to_string(k) + "x" + std::to_string(k) + " kernels");
  }
  const auto r = static_cast<std::ptrdiff_t>(k / 2);
  Tensor out(input.shape());
  for (std::size_t n = 0; n < input.batch(); ++n)
    for (std::size_t c = 0; c < input.channels(); ++c) {
      auto dst = out.plane(n, c);
      auto src = input.plane(n, c);
      for (std::size_t p = 0; p < k; ++p)
        for (std::size_t q = 0; q < k; ++q) {
          const double w = kernels[(c * k + p) * k + q];
          detail::accumulate_shifted(dst, src, input.height(), input.width(),
                                     static_cast<std::ptrdiff_t>(p) - r,
                                     static_cast<std::ptrdiff_t>(q) - r, w);
        }
    }
  return out;
}

/// The one-hot k x k kernel whose depthwise convolution reproduces shift(., spec).
inline std::vector<double> shift_kernel(ShiftSpec spec, std::size_t k) {
  const int r = static_cast<int>(k / 2);
  if (k % 2 == 0 || std::abs(spec.dx) > r || std::abs(spec.dy) > r) {
    throw std::invalid_argument("shift (" + std::to_string(spec.dx) + ", " + std::to_string(spec.dy) +
                                ") is out of reach of a " + std::to_string(k) + "x" +
                                std::to_string(k) + " kernel");
  }
  std::vector<double> kern(k * k, 0.0);
  kern[static_cast<std::size_t>(spec.dx + r) * k + static_cast<std::size_t>(spec.dy + r)] = 1.0;
  return kern;
}

/// Shift realised as a depthwise convolution with fixed one-hot kernels.
inline Tensor shift_via_depthwise(const Tensor& input, ShiftSpec spec, std::size_t k) {
  const auto one = shift_kernel(spec, k);
  std::vector<double> kernels;
  kernels.reserve(input.channels() * k * k);
  for (std::size_t c = 0; c < input.channels(); ++c) kernels.insert(kernels.end(), one.begin(), one.end());
  return depthwise_conv(input, kernels, k);
}

enum class BankInit {
  fixed_shift,       ///< one-hot shift kernels, never updated
  learnable_shift,   ///< learnable, initialised to the one-hot shift kernels
  learnable_random,  ///< learnable, random initialisation
};

/// k^2 groups (one per kernel position) of per-channel k x k depthwise kernels.
/// Group g = p * k + q corresponds to displacement (p - k/2, q - k/2).
class ShiftKernelBank {
 public:
  ShiftKernelBank() = default;

  ShiftKernelBank(std::size_t k, std::size_t channels, BankInit init, std::vector<double> data)
      : k_(k), channels_(channels), init_(init), data_(std::move(data)) {
    if (k_ == 0 || k_ % 2 == 0) throw ShapeError("kernel bank size must be odd");
    if (data_.size() != k_ * k_ * channels_ * k_ * k_) throw ShapeError("kernel bank data length mismatch");
  }

  static ShiftKernelBank one_hot(std::size_t k, std::size_t channels, BankInit init = BankInit::fixed_shift) {
    if (init == BankInit::learnable_random) throw std::invalid_argument("one_hot bank cannot be random");
    std::vector<double> data(k * k * channels * k * k, 0.0);
    ShiftKernelBank bank(k, channels, init, std::move(data));
    for (std::size_t p = 0; p < k; ++p)
      for (std::size_t q = 0; q < k; ++q)
        for (std::size_t c = 0; c < channels; ++c) bank(p * k + q, c, p, q) = 1.0;
    return bank;
  }

  static ShiftKernelBank random(std::size_t k, std::size_t channels, std::mt19937_64& rng,
                                double scale = 0.5) {
    std::vector<double> data(k * k * channels * k * k);
    fill_uniform(data, rng, -scale, scale);
    return ShiftKernelBank(k, channels, BankInit::learnable_random, std::move(data));
  }

  std::size_t k() const { return k_; }
  std::size_t channels() const { return channels_; }
  std::size_t groups() const { return k_ * k_; }
  std::size_t size() const { return data_.size(); }
  BankInit init() const { return init_; }
  bool learnable() const { return init_ != BankInit::fixed_shift; }

  ShiftSpec displacement(std::size_t group) const {
    const int r = static_cast<int>(k_ / 2);
    return {static_cast<int>(group / k_) - r, static_cast<int>(group % k_) - r};
  }

  double& operator()(std::size_t g, std::size_t c, std::size_t p, std::size_t q) {
    return data_[((g * channels_ + c) * k_ + p) * k_ + q];
  }
  double operator()(std::size_t g, std::size_t c, std::size_t p, std::size_t q) const {
    return data_[((g * channels_ + c) * k_ + p) * k_ + q];
  }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  /// True iff every kernel is the one-hot shift kernel of its group.
  bool is_one_hot() const {
    for (std::size_t g = 0; g < groups(); ++g)
      for (std::size_t c = 0; c < channels_; ++c)
        for (std::size_t p = 0; p < k_; ++p)
          for (std::size_t q = 0; q < k_; ++q)
            if ((*this)(g, c, p, q) != (g == p * k_ + q ? 1.0 : 0.0)) return false;
    return true;
  }

 private:
  std::size_t k_ = 1;
  std::size_t channels_ = 0;
  BankInit init_ = BankInit::fixed_shift;
  std::vector<double> data_;
};

namespace detail {

inline void check_group_inputs(std::span<const Tensor> features, const ShiftKernelBank& bank) {
  if (features.size() != bank.groups()) {
    throw ShapeError("group conv: " + std::to_string(features.size()) + " feature maps for " +
                     std::to_string(bank.groups()) + " kernel groups");
  }
  const Shape s = features.front().shape();
  if (s.channels != bank.channels()) {
    throw ShapeError("group conv: features have " + std::to_string(s.channels) +
                     " channels, bank has " + std::to_string(bank.channels()));
  }
  for (const Tensor& f : features)
    if (f.shape() != s) throw ShapeError("group conv: mismatched feature shapes " + f.shape().str() + " vs " + s.str());
}

}  // namespace detail

/// Concatenate k^2 feature maps along channels, apply the grouped depthwise convolution
/// (group g convolves feature g channel-by-channel) and sum the group outputs.
inline Tensor shift_sum_group_conv(std::span<const Tensor> features, const ShiftKernelBank& bank) {
  detail::check_group_inputs(features, bank);
  const Shape s = features.front().shape();
  const std::size_t k = bank.k();
  const auto r = static_cast<std::ptrdiff_t>(k / 2);
  Tensor out(s);
  for (std::size_t n = 0; n < s.batch; ++n)
    for (std::size_t c = 0; c < s.channels; ++c) {
      auto dst = out.plane(n, c);
      for (std::size_t g = 0; g < bank.groups(); ++g) {
        auto src = features[g].plane(n, c);
        for (std::size_t p = 0; p < k; ++p)
          for (std::size_t q = 0; q < k; ++q)
            detail::accumulate_shifted(dst, src, s.height, s.width, static_cast<std::ptrdiff_t>(p) - r,
                                       static_cast<std::ptrdiff_t>(q) - r, bank(g, c, p, q));
      }
    }
  return out;
}

struct GroupConvGrads {
  std::vector<Tensor> features;  ///< one per group
  std::vector<double> bank;      ///< same layout as ShiftKernelBank::data()
};

/// Gradients of <upstream, shift_sum_group_conv(features, bank)>.
inline GroupConvGrads shift_sum_group_conv_backward(std::span<const Tensor> features,
                                                    const ShiftKernelBank& bank, const Tensor& upstream) {
  detail::check_group_inputs(features, bank);
  const Shape s = features.front().shape();
  if (upstream.shape() != s) throw ShapeError("group conv backward: upstream " + upstream.shape().str());
  const std::size_t k = bank.k();
  const auto r = static_cast<std::ptrdiff_t>(k / 2);
  GroupConvGrads grads;
  grads.features.assign(bank.groups(), Tensor(s));
  grads.bank.assign(bank.size(), 0.0);
  const auto H = static_cast<std::ptrdiff_t>(s.height);
  const auto W = static_cast<std::ptrdiff_t>(s.width);
  for (std::size_t n = 0; n < s.batch; ++n)
    for (std::size_t c = 0; c < s.channels; ++c) {
      auto up = upstream.plane(n, c);
      for (std::size_t g = 0; g < bank.groups(); ++g) {
        auto src = features[g].plane(n, c);
        auto dsrc = grads.features[g].plane(n, c);
        for (std::size_t p = 0; p < k; ++p)
          for (std::size_t q = 0; q < k; ++q) {
            const std::ptrdiff_t di = static_cast<std::ptrdiff_t>(p) - r;
            const std::ptrdiff_t dj = static_cast<std::ptrdiff_t>(q) - r;
            // Input-side gradient is the transposed shift: dsrc(a, b) += w * up(a - di, b - dj).
            detail::accumulate_shifted(dsrc, up, s.height, s.width, -di, -dj, bank(g, c, p, q));
            const auto rows = detail::valid_range(H, di);
            const auto cols = detail::valid_range(W, dj);
            double acc = 0.0;
            for (std::size_t i = rows.begin; i < rows.end; ++i)
              for (std::size_t j = cols.begin; j < cols.end; ++j)
                acc += up[i * s.width + j] *
                       src[static_cast<std::size_t>((static_cast<std::ptrdiff_t>(i) + di) * W +
                                                    static_cast<std::ptrdiff_t>(j) + dj)];
            grads.bank[((g * s.channels + c) * k + p) * k + q] += acc;
          }
      }
    }
  return grads;
}

}  // namespace acmix
