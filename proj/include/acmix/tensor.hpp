#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace acmix {

/// Thrown whenever operand shapes do not line up.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Shape {
  std::size_t batch = 0;
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t size() const { return batch * channels * height * width; }
  std::size_t plane() const { return height * width; }

  bool operator==(const Shape&) const = default;

  std::string str() const {
    std::ostringstream os;
    os << "(" << batch << ", " << channels << ", " << height << ", " << width << ")";
    return os.str();
  }
};

/// Dense rank-4 array in (batch, channel, row, column) row-major order.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, double fill = 0.0)
      : shape_(shape), data_(shape.size(), fill) {}

  Tensor(Shape shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.size()) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_.str());
    }
  }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  std::size_t batch() const { return shape_.batch; }
  std::size_t channels() const { return shape_.channels; }
  std::size_t height() const { return shape_.height; }
  std::size_t width() const { return shape_.width; }

  std::size_t index(std::size_t n, std::size_t c, std::size_t i, std::size_t j) const {
    return ((n * shape_.channels + c) * shape_.height + i) * shape_.width + j;
  }

  double& operator()(std::size_t n, std::size_t c, std::size_t i, std::size_t j) {
    return data_[index(n, c, i, j)];
  }
  double operator()(std::size_t n, std::size_t c, std::size_t i, std::size_t j) const {
    return data_[index(n, c, i, j)];
  }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  /// One (height x width) feature plane.
  std::span<double> plane(std::size_t n, std::size_t c) {
    return std::span<double>(data_).subspan(index(n, c, 0, 0), shape_.plane());
  }
  std::span<const double> plane(std::size_t n, std::size_t c) const {
    return std::span<const double>(data_).subspan(index(n, c, 0, 0), shape_.plane());
  }

  Tensor& operator+=(const Tensor& other) {
    require_same_shape(other, "+=");
    for (std::size_t t = 0; t < data_.size(); ++t) data_[t] += other.data_[t];
    return *this;
  }
  Tensor& operator-=(const Tensor& other) {
    require_same_shape(other, "-=");
    for (std::size_t t = 0; t < data_.size(); ++t) data_[t] -= other.data_[t];
    return *this;
  }
  Tensor& operator*=(double s) {
    for (double& x : data_) x *= s;
    return *this;
  }

  friend Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
  friend Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
  friend Tensor operator*(double s, Tensor a) { return a *= s; }

  void require_same_shape(const Tensor& other, const char* what) const {
    if (other.shape_ != shape_) {
      throw ShapeError(std::string(what) + ": shape " + shape_.str() + " vs " + other.shape_.str());
    }
  }

 private:
  Shape shape_{};
  std::vector<double> data_;
};

/// Row-major dense matrix; used for 1x1 projection weights and small FC layers.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw ShapeError("matrix data length " + std::to_string(data_.size()) + " does not match " +
                       std::to_string(rows_) + "x" + std::to_string(cols_));
    }
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t r = 0; r < n; ++r) m(r, r) = 1.0;
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  /// Rows [first, first + count) as a new matrix.
  Matrix row_block(std::size_t first, std::size_t count) const {
    if (first + count > rows_) throw ShapeError("row block out of range");
    Matrix out(count, cols_);
    for (std::size_t r = 0; r < count; ++r)
      for (std::size_t c = 0; c < cols_; ++c) out(r, c) = (*this)(first + r, c);
    return out;
  }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Convolution weights (out_channels, in_channels, k, k) with odd k.
class ConvKernel {
 public:
  ConvKernel() = default;
  ConvKernel(std::size_t out_channels, std::size_t in_channels, std::size_t k, double fill = 0.0)
      : out_(out_channels), in_(in_channels), k_(k), data_(out_channels * in_channels * k * k, fill) {
    validate();
  }
  ConvKernel(std::size_t out_channels, std::size_t in_channels, std::size_t k, std::vector<double> data)
      : out_(out_channels), in_(in_channels), k_(k), data_(std::move(data)) {
    validate();
    if (data_.size() != out_ * in_ * k_ * k_) throw ShapeError("kernel data length mismatch");
  }

  /// A 1x1 kernel carrying the given (out x in) matrix.
  static ConvKernel from_matrix(const Matrix& w) {
    return ConvKernel(w.rows(), w.cols(), 1,
                      std::vector<double>(w.data().begin(), w.data().end()));
  }

  std::size_t out_channels() const { return out_; }
  std::size_t in_channels() const { return in_; }
  std::size_t k() const { return k_; }
  std::size_t radius() const { return k_ / 2; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t o, std::size_t c, std::size_t p, std::size_t q) {
    return data_[((o * in_ + c) * k_ + p) * k_ + q];
  }
  double operator()(std::size_t o, std::size_t c, std::size_t p, std::size_t q) const {
    return data_[((o * in_ + c) * k_ + p) * k_ + q];
  }

  /// K_{p,q}: the (out x in) matrix applied at kernel position (p, q).
  Matrix tap(std::size_t p, std::size_t q) const {
    if (p >= k_ || q >= k_) throw ShapeError("kernel tap out of range");
    Matrix m(out_, in_);
    for (std::size_t o = 0; o < out_; ++o)
      for (std::size_t c = 0; c < in_; ++c) m(o, c) = (*this)(o, c, p, q);
    return m;
  }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

 private:
  void validate() const {
    if (k_ == 0 || k_ % 2 == 0) {
      throw ShapeError("kernel size must be odd and positive, got " + std::to_string(k_));
    }
  }

  std::size_t out_ = 0;
  std::size_t in_ = 0;
  std::size_t k_ = 1;
  std::vector<double> data_;
};

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("max_abs_diff: length mismatch");
  double worst = 0.0;
  for (std::size_t t = 0; t < a.size(); ++t) worst = std::max(worst, std::abs(a[t] - b[t]));
  return worst;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  a.require_same_shape(b, "max_abs_diff");
  return max_abs_diff(a.data(), b.data());
}

inline double dot(const Tensor& a, const Tensor& b) {
  a.require_same_shape(b, "dot");
  double acc = 0.0;
  for (std::size_t t = 0; t < a.size(); ++t) acc += a.data()[t] * b.data()[t];
  return acc;
}

inline double sum(const Tensor& a) {
  double acc = 0.0;
  for (double x : a.data()) acc += x;
  return acc;
}

inline bool all_finite(std::span<const double> xs) {
  for (double x : xs)
    if (!std::isfinite(x)) return false;
  return true;
}

/// Channels [first, first + count) of every batch item.
inline Tensor slice_channels(const Tensor& t, std::size_t first, std::size_t count) {
  if (first + count > t.channels()) {
    throw ShapeError("channel slice [" + std::to_string(first) + ", " + std::to_string(first + count) +
                     ") exceeds " + std::to_string(t.channels()) + " channels");
  }
  Tensor out({t.batch(), count, t.height(), t.width()});
  for (std::size_t n = 0; n < t.batch(); ++n)
    for (std::size_t c = 0; c < count; ++c) {
      auto src = t.plane(n, first + c);
      std::copy(src.begin(), src.end(), out.plane(n, c).begin());
    }
  return out;
}

inline Tensor concat_channels(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  Shape s = parts.front().shape();
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    if (p.batch() != s.batch || p.height() != s.height || p.width() != s.width) {
      throw ShapeError("concat_channels: " + p.shape().str() + " vs " + s.str());
    }
    total += p.channels();
  }
  Tensor out({s.batch, total, s.height, s.width});
  for (std::size_t n = 0; n < s.batch; ++n) {
    std::size_t c0 = 0;
    for (const Tensor& p : parts) {
      for (std::size_t c = 0; c < p.channels(); ++c) {
        auto src = p.plane(n, c);
        std::copy(src.begin(), src.end(), out.plane(n, c0 + c).begin());
      }
      c0 += p.channels();
    }
  }
  return out;
}

inline void fill_uniform(std::span<double> xs, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  for (double& x : xs) x = dist(rng);
}

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(shape);
  fill_uniform(t.data(), rng, lo, hi);
  return t;
}

inline Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng,
                            double lo = -1.0, double hi = 1.0) {
  Matrix m(rows, cols);
  fill_uniform(m.data(), rng, lo, hi);
  return m;
}

inline ConvKernel random_kernel(std::size_t out, std::size_t in, std::size_t k, std::mt19937_64& rng) {
  ConvKernel kern(out, in, k);
  fill_uniform(kern.data(), rng);
  return kern;
}

}  // namespace acmix
