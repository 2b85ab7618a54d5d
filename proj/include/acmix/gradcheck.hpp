#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "acmix/tensor.hpp"

namespace acmix {

/// Raised when the probed function returns NaN/Inf; `coordinate` names the perturbed entry.
class NonFiniteError : public std::runtime_error {
 public:
  NonFiniteError(std::size_t coordinate, double step)
      : std::runtime_error("non-finite function value at coordinate " + std::to_string(coordinate) +
                           (step > 0 ? " (+eps)" : " (-eps)")),
        coordinate_(coordinate) {}
  std::size_t coordinate() const { return coordinate_; }

 private:
  std::size_t coordinate_;
};

/// Central differences of `f()` with respect to each entry of `coords`, perturbed in place.
/// Every entry is restored to its original value before returning.
template <class F>
std::vector<double> finite_difference_grad_inplace(F&& f, std::span<double> coords, double epsilon) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("finite difference step must be positive");
  std::vector<double> grad(coords.size());
  for (std::size_t t = 0; t < coords.size(); ++t) {
    const double saved = coords[t];
    coords[t] = saved + epsilon;
    const double up = f();
    coords[t] = saved - epsilon;
    const double down = f();
    coords[t] = saved;
    if (!std::isfinite(up)) throw NonFiniteError(t, +epsilon);
    if (!std::isfinite(down)) throw NonFiniteError(t, -epsilon);
    grad[t] = (up - down) / (2.0 * epsilon);
  }
  return grad;
}

/// Central-difference gradient of a scalar function of a tensor.
template <class F>
Tensor finite_difference_grad(F&& f, const Tensor& point, double epsilon) {
  Tensor x = point;
  auto g = finite_difference_grad_inplace([&] { return f(static_cast<const Tensor&>(x)); }, x.data(),
                                          epsilon);
  return Tensor(point.shape(), std::move(g));
}

/// ||a - b||_2 / max(||a||_2, ||b||_2); zero when both vanish.
inline double relative_error(std::span<const double> analytic, std::span<const double> numeric) {
  if (analytic.size() != numeric.size()) throw ShapeError("relative_error: length mismatch");
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t t = 0; t < analytic.size(); ++t) {
    diff += (analytic[t] - numeric[t]) * (analytic[t] - numeric[t]);
    na += analytic[t] * analytic[t];
    nb += numeric[t] * numeric[t];
  }
  const double scale = std::sqrt(std::max(na, nb));
  if (scale == 0.0) return 0.0;
  return std::sqrt(diff) / scale;
}

}  // namespace acmix
