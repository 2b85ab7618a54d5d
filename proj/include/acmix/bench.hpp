#pragma once

// Shift-aggregation implementations timed against each other, after an output-equivalence gate.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "acmix/conv_decomp.hpp"
#include "acmix/tensor.hpp"

namespace acmix {

struct BenchOptions {
  std::uint64_t seed = 1234;
  std::size_t size = 56;  ///< H = W
  std::size_t channels = 64;
  std::size_t kernel = 3;  ///< k_c
  std::size_t warmup = 3;
  std::size_t iterations = 20;
  double tolerance = 1e-10;
  bool inject_fault = false;  ///< perturb one weight of the learnable bank
};

struct BenchTiming {
  std::string variant;
  std::size_t parameter_touches = 0;  ///< kernel weights read per call
  double mean_ms = 0.0;
  double median_ms = 0.0;
  double min_ms = 0.0;
  double stddev_ms = 0.0;
  double speedup_vs_naive = 0.0;  ///< naive mean / this mean
};

struct BenchResult {
  bool equivalent = false;
  double max_deviation = 0.0;
  std::string failing_variant;
  std::vector<BenchTiming> timings;  ///< empty unless `equivalent`

  nlohmann::json to_json(const BenchOptions& o) const {
    nlohmann::json t = nlohmann::json::array();
    for (const BenchTiming& b : timings) {
      t.push_back({{"variant", b.variant},
                   {"parameter_touches", b.parameter_touches},
                   {"mean_ms", b.mean_ms},
                   {"median_ms", b.median_ms},
                   {"min_ms", b.min_ms},
                   {"stddev_ms", b.stddev_ms},
                   {"speedup_vs_naive", b.speedup_vs_naive}});
    }
    nlohmann::json j = {{"size", o.size},
                        {"channels", o.channels},
                        {"kernel", o.kernel},
                        {"seed", o.seed},
                        {"warmup", o.warmup},
                        {"iterations", o.iterations},
                        {"equivalent", equivalent},
                        {"max_deviation", max_deviation},
                        {"tolerance", o.tolerance},
                        {"timings", t}};
    if (!failing_variant.empty()) j["failing_variant"] = failing_variant;
    return j;
  }

  std::string to_text(const BenchOptions& o) const {
    std::ostringstream os;
    os << "shift aggregation, H=W=" << o.size << " C=" << o.channels << " k_c=" << o.kernel << " seed=" << o.seed
       << "\n";
    os << "equivalence gate: " << (equivalent ? "passed" : "FAILED") << " (max deviation " << max_deviation << ")\n";
    if (!equivalent) {
      os << "variant '" << failing_variant << "' disagrees with the naive loop; no timings reported\n";
      return os.str();
    }
    for (const BenchTiming& b : timings) {
      os << "  " << b.variant << ": mean " << b.mean_ms << " ms, median " << b.median_ms << " ms, min " << b.min_ms
         << " ms, sd " << b.stddev_ms << " ms, speedup x" << b.speedup_vs_naive << ", weights touched "
         << b.parameter_touches << "\n";
    }
    return os.str();
  }
};

/// Naive aggregation: materialise each shifted map, then add.
inline Tensor shift_sum_naive(std::span<const Tensor> maps, std::size_t k) {
  const int r = static_cast<int>(k / 2);
  Tensor out(maps.front().shape());
  for (std::size_t g = 0; g < maps.size(); ++g) {
    const ShiftSpec s{static_cast<int>(g / k) - r, static_cast<int>(g % k) - r};
    out += shift(maps[g], s);
  }
  return out;
}

namespace detail {

inline BenchTiming time_variant(const std::string& name, std::size_t touches, const std::function<Tensor()>& fn,
                                const BenchOptions& o) {
  for (std::size_t t = 0; t < o.warmup; ++t) (void)fn();
  std::vector<double> ms;
  for (std::size_t t = 0; t < std::max<std::size_t>(o.iterations, 1); ++t) {
    const auto start = std::chrono::steady_clock::now();
    const Tensor out = fn();
    const auto stop = std::chrono::steady_clock::now();
    ms.push_back(std::chrono::duration<double, std::milli>(stop - start).count());
  }
  BenchTiming b;
  b.variant = name;
  b.parameter_touches = touches;
  b.mean_ms = std::accumulate(ms.begin(), ms.end(), 0.0) / static_cast<double>(ms.size());
  std::vector<double> sorted = ms;
  std::sort(sorted.begin(), sorted.end());
  b.median_ms = sorted[sorted.size() / 2];
  b.min_ms = sorted.front();
  double var = 0.0;
  for (double x : ms) var += (x - b.mean_ms) * (x - b.mean_ms);
  b.stddev_ms = std::sqrt(var / static_cast<double>(ms.size()));
  return b;
}

}  // namespace detail

inline BenchResult run_bench(const BenchOptions& o) {
  std::mt19937_64 rng(o.seed);
  const std::size_t k = o.kernel;
  std::vector<Tensor> maps;
  for (std::size_t g = 0; g < k * k; ++g) maps.push_back(random_tensor({1, o.channels, o.size, o.size}, rng));
  const ShiftKernelBank fixed = ShiftKernelBank::one_hot(k, o.channels, BankInit::fixed_shift);
  ShiftKernelBank learnable = ShiftKernelBank::one_hot(k, o.channels, BankInit::learnable_shift);
  if (o.inject_fault) learnable.data()[0] += 0.5;

  BenchResult r;
  const Tensor naive = shift_sum_naive(maps, k);
  const double dev_fixed = max_abs_diff(naive, shift_sum_group_conv(maps, fixed));
  const double dev_learn = max_abs_diff(naive, shift_sum_group_conv(maps, learnable));
  r.max_deviation = std::max(dev_fixed, dev_learn);
  r.equivalent = r.max_deviation <= o.tolerance;
  if (!r.equivalent) {
    r.failing_variant = dev_fixed > o.tolerance ? "group-conv-fixed" : "group-conv-learnable";
    return r;
  }

  r.timings.push_back(detail::time_variant("tensor-shift-loop", 0, [&] { return shift_sum_naive(maps, k); }, o));
  r.timings.push_back(detail::time_variant("group-conv-fixed", fixed.size(),
                                           [&] { return shift_sum_group_conv(maps, fixed); }, o));
  r.timings.push_back(detail::time_variant("group-conv-learnable", learnable.size(),
                                           [&] { return shift_sum_group_conv(maps, learnable); }, o));
  for (BenchTiming& b : r.timings) b.speedup_vs_naive = r.timings.front().mean_ms / b.mean_ms;
  return r;
}

}  // namespace acmix
