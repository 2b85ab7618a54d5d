#pragma once

// Equivalence matrix behind `acmix verify`.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "acmix/acmix.hpp"
#include "acmix/attention.hpp"
#include "acmix/conv_decomp.hpp"
#include "acmix/ops.hpp"
#include "acmix/report.hpp"
#include "acmix/tensor.hpp"

namespace acmix {

struct VerifyOptions {
  std::uint64_t seed = 1234;
  double tolerance = 1e-10;  ///< for checks that compare different summation orders
  std::vector<std::size_t> sizes{8, 16};
  std::vector<std::size_t> kernels{1, 3, 5};
  std::vector<std::size_t> channels{4, 8, 16};
  std::size_t batch = 2;
  bool inject_fault = false;  ///< perturb one kernel weight on the decomposed side
};

namespace detail {

inline std::string dims(std::initializer_list<std::pair<const char*, std::size_t>> kv) {
  std::string s;
  for (const auto& [k, v] : kv) {
    if (!s.empty()) s += " ";
    s += std::string(k) + "=" + std::to_string(v);
  }
  return s;
}

inline void verify_conv_decomposition(CheckReport& r, const VerifyOptions& o, std::uint64_t& seed) {
  for (std::size_t hw : o.sizes)
    for (std::size_t k : o.kernels)
      for (std::size_t cin : o.channels)
        for (std::size_t cout : o.channels) {
          std::mt19937_64 rng(seed);
          const Tensor x = random_tensor({o.batch, cin, hw, hw}, rng);
          ConvKernel kernel = random_kernel(cout, cin, k, rng);
          const Tensor ref = conv2d_reference(x, kernel);
          if (o.inject_fault) kernel.data()[0] += 0.5;
          const Tensor dec = conv2d_decomposed(x, kernel);
          r.add("conv-decomposition", dims({{"k", k}, {"c_in", cin}, {"c_out", cout}, {"hw", hw}}), seed,
                max_abs_diff(ref, dec), o.tolerance, o.inject_fault ? "fault injected" : "");
          ++seed;
        }
}

inline void verify_shift_depthwise(CheckReport& r, const VerifyOptions& o, std::uint64_t& seed) {
  const std::size_t hw = o.sizes.empty() ? 8 : o.sizes.front();
  for (std::size_t k : {3u, 5u}) {
    const int rad = static_cast<int>(k / 2);
    for (int dx = -rad; dx <= rad; ++dx)
      for (int dy = -rad; dy <= rad; ++dy) {
        std::mt19937_64 rng(seed);
        const Tensor x = random_tensor({o.batch, 4, hw, hw}, rng);
        const double dev = max_abs_diff(shift(x, {dx, dy}), shift_via_depthwise(x, {dx, dy}, k));
        r.add("shift-depthwise",
              "k=" + std::to_string(k) + " dx=" + std::to_string(dx) + " dy=" + std::to_string(dy) +
                  " hw=" + std::to_string(hw),
              seed, dev, 1e-12);
        ++seed;
      }
  }
}

inline void verify_group_conv(CheckReport& r, const VerifyOptions& o, std::uint64_t& seed) {
  for (std::size_t hw : o.sizes)
    for (std::size_t k : {3u, 5u})
      for (std::size_t c : o.channels) {
        std::mt19937_64 rng(seed);
        const ShiftKernelBank bank = ShiftKernelBank::one_hot(k, c);
        std::vector<Tensor> maps;
        for (std::size_t g = 0; g < bank.groups(); ++g) maps.push_back(random_tensor({o.batch, c, hw, hw}, rng));
        Tensor explicit_sum({o.batch, c, hw, hw});
        for (std::size_t g = 0; g < bank.groups(); ++g) explicit_sum += shift(maps[g], bank.displacement(g));
        r.add("group-conv-shift-sum", dims({{"k_c", k}, {"c", c}, {"hw", hw}}), seed,
              max_abs_diff(explicit_sum, shift_sum_group_conv(maps, bank)), o.tolerance);
        ++seed;
      }
}

inline std::vector<ACmixConfig> limit_configs() {
  std::vector<ACmixConfig> cfgs;
  ACmixConfig a;
  a.positional_encoding = true;
  cfgs.push_back(a);
  ACmixConfig b;
  b.attention = AttentionKind::window;
  b.out_channels = 8;
  b.heads = 4;
  cfgs.push_back(b);
  ACmixConfig c;
  c.attention = AttentionKind::patchwise;
  c.conv_kernel = 5;
  cfgs.push_back(c);
  ACmixConfig d;
  d.border = BorderMode::padded_keys;
  d.attn_kernel = 5;
  d.positional_encoding = true;
  cfgs.push_back(d);
  return cfgs;
}

inline void verify_acmix_limits(CheckReport& r, const VerifyOptions& o, std::uint64_t& seed) {
  const std::size_t hw = o.sizes.empty() ? 8 : o.sizes.front();
  for (const ACmixConfig& cfg : limit_configs()) {
    std::mt19937_64 rng(seed);
    ACmixParams p = ACmixParams::init(cfg, rng, BankInit::learnable_random);
    if (p.pos) fill_uniform(p.pos->data(), rng);
    const Tensor x = random_tensor({o.batch, cfg.in_channels, hw, hw}, rng);
    const Intermediates inter = stage1_project(x, p, cfg);
    const Tensor att = attention_path(inter, p, cfg);
    const Tensor conv = conv_path(inter, p, cfg);
    const std::string inst = std::string(to_string(cfg.attention)) + " " +
                             dims({{"heads", cfg.heads}, {"k_a", cfg.attn_kernel}, {"k_c", cfg.conv_kernel}});
    p.alpha = 1.0;
    p.beta = 0.0;
    r.add("acmix-limit-attention", inst, seed, max_abs_diff(acmix_forward(x, p, cfg), att), 0.0);
    p.alpha = 0.0;
    p.beta = 1.0;
    r.add("acmix-limit-conv", inst, seed, max_abs_diff(acmix_forward(x, p, cfg), conv), 0.0);
    p.alpha = 1.0;
    p.beta = 1.0;
    r.add("acmix-limit-sum", inst, seed, max_abs_diff(acmix_forward(x, p, cfg), att + conv), 1e-12);
    ++seed;
  }
}

inline void verify_attention_sanity(CheckReport& r, const VerifyOptions& o, std::uint64_t& seed) {
  const std::size_t hw = o.sizes.empty() ? 8 : o.sizes.front();
  struct Case {
    AttentionKind kind;
    BorderMode border;
    std::size_t field;
  };
  const Case cases[] = {{AttentionKind::local, BorderMode::truncate, 3},
                        {AttentionKind::local, BorderMode::padded_keys, 5},
                        {AttentionKind::window, BorderMode::truncate, 3},
                        {AttentionKind::global, BorderMode::truncate, 1}};
  for (const Case& cs : cases) {
    AttentionMode mode;
    mode.kind = cs.kind;
    mode.border = cs.border;
    mode.field = cs.field;
    std::mt19937_64 rng(seed);
    const std::size_t d = 4;
    const Tensor q = random_tensor({1, d, hw, hw}, rng, -3.0, 3.0);
    const Tensor k = random_tensor({1, d, hw, hw}, rng, -3.0, 3.0);
    const std::size_t reach = cs.kind == AttentionKind::local ? cs.field / 2 : hw - 1;
    RelPosTable pos(1, reach);
    fill_uniform(pos.data(), rng, -2.0, 2.0);

    double worst_sum = 0.0;
    QueryContext ctx;
    for (std::size_t i = 0; i < hw; ++i)
      for (std::size_t j = 0; j < hw; ++j) {
        gather_query(ctx, q, k, mode, &pos, 0, 0, i, j);
        double s = 0.0;
        for (double w : attention_weights(ctx.query, ctx.keys, mode, ctx.bias)) s += w;
        worst_sum = std::max(worst_sum, std::abs(s - 1.0));
      }
    const std::string inst = std::string(to_string(cs.kind)) + " border=" + to_string(cs.border) +
                             " k_a=" + std::to_string(cs.field) + " hw=" + std::to_string(hw);
    r.add("attention-weights-sum", inst, seed, worst_sum, 1e-12);

    // Padded keys carry zero values, so only the truncating modes see a constant field.
    if (cs.border == BorderMode::truncate || cs.kind != AttentionKind::local) {
      const double value = 0.7;
      Tensor v({1, d, hw, hw});
      for (double& x : v.data()) x = value;
      const Tensor out = attend(q, k, v, mode, &pos, 0);
      double dev = 0.0;
      for (double x : out.data()) dev = std::max(dev, std::abs(x - value));
      r.add("attention-constant-field", inst, seed, dev, 1e-12);
    }
    ++seed;
  }
}

}  // namespace detail

inline CheckReport run_verify(const VerifyOptions& o) {
  if (!(o.tolerance >= 0.0)) throw std::invalid_argument("tolerance must be non-negative");
  CheckReport r;
  r.command = "verify";
  std::uint64_t seed = o.seed;
  detail::verify_conv_decomposition(r, o, seed);
  detail::verify_shift_depthwise(r, o, seed);
  detail::verify_group_conv(r, o, seed);
  detail::verify_acmix_limits(r, o, seed);
  detail::verify_attention_sanity(r, o, seed);
  return r;
}

}  // namespace acmix
