#pragma once

// Analytic ACmix gradients against central differences, one check per parameter group.

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "acmix/acmix.hpp"
#include "acmix/gradcheck.hpp"
#include "acmix/report.hpp"

namespace acmix {

struct GradcheckCase {
  std::string label;
  ACmixConfig config;
  Shape input;
  BankInit bank = BankInit::learnable_shift;
};

struct GradcheckOptions {
  std::uint64_t seed = 1234;
  double tolerance = 1e-5;
  double epsilon = 1e-5;
  bool zero_input = false;
  std::vector<GradcheckCase> cases;
};

/// Default matrix: several heads, local (both borders), window, global and patchwise attention,
/// and every mix mode.
inline std::vector<GradcheckCase> default_gradcheck_cases() {
  std::vector<GradcheckCase> out;
  {
    GradcheckCase c{"local-truncate", {}, {1, 4, 6, 6}};
    c.config.positional_encoding = true;
    out.push_back(c);
  }
  {
    GradcheckCase c{"window", {}, {1, 3, 7, 7}};
    c.config.in_channels = 3;
    c.config.out_channels = 8;
    c.config.heads = 4;
    c.config.attention = AttentionKind::window;
    c.config.positional_encoding = true;
    c.config.mix = MixMode::alpha_complement;
    out.push_back(c);
  }
  {
    GradcheckCase c{"local-padded-keys", {}, {2, 4, 5, 5}, BankInit::learnable_random};
    c.config.out_channels = 4;
    c.config.attn_kernel = 5;
    c.config.conv_kernel = 5;
    c.config.border = BorderMode::padded_keys;
    c.config.positional_encoding = true;
    c.config.mix = MixMode::alpha_one;
    out.push_back(c);
  }
  {
    GradcheckCase c{"global", {}, {1, 2, 4, 4}};
    c.config.in_channels = 2;
    c.config.out_channels = 4;
    c.config.attention = AttentionKind::global;
    out.push_back(c);
  }
  {
    GradcheckCase c{"patchwise", {}, {1, 4, 5, 5}};
    c.config.out_channels = 4;
    c.config.attention = AttentionKind::patchwise;
    out.push_back(c);
  }
  return out;
}

namespace detail {

struct GroupProbe {
  std::string name;
  std::span<double> coords;
  std::vector<double> analytic;
};

}  // namespace detail

/// Runs every parameter group of one case and appends a check per group.
inline void gradcheck_case(CheckReport& report, const GradcheckCase& gc, std::uint64_t seed, double tolerance,
                           double epsilon, bool zero_input) {
  std::mt19937_64 rng(seed);
  const ACmixConfig& cfg = gc.config;
  ACmixParams p = ACmixParams::init(cfg, rng, gc.bank);
  p.alpha = 0.8;
  p.beta = 0.6;
  if (p.pos) fill_uniform(p.pos->data(), rng, -0.5, 0.5);
  Tensor x = random_tensor(gc.input, rng);
  if (zero_input) x = Tensor(gc.input);
  const Tensor upstream = random_tensor({gc.input.batch, cfg.out_channels, gc.input.height, gc.input.width}, rng);

  const ACmixGrads g = acmix_backward(x, p, cfg, upstream);
  const auto loss = [&] { return dot(upstream, acmix_forward(x, p, cfg)); };

  std::vector<detail::GroupProbe> probes;
  probes.push_back({"input", x.data(), {g.input.data().begin(), g.input.data().end()}});
  probes.push_back({"w_q", p.w_q.data(), {g.w_q.data().begin(), g.w_q.data().end()}});
  probes.push_back({"w_k", p.w_k.data(), {g.w_k.data().begin(), g.w_k.data().end()}});
  probes.push_back({"w_v", p.w_v.data(), {g.w_v.data().begin(), g.w_v.data().end()}});
  for (std::size_t l = 0; l < cfg.heads; ++l)
    probes.push_back({"fc." + std::to_string(l), p.fc[l].data(), {g.fc[l].data().begin(), g.fc[l].data().end()}});
  if (p.bank.learnable()) probes.push_back({"bank", p.bank.data(), g.bank});
  if (p.pos) probes.push_back({"pos", p.pos->data(), g.pos});
  for (std::size_t l = 0; l < p.phi.size(); ++l) {
    probes.push_back({"phi." + std::to_string(l) + ".hidden", p.phi[l].hidden.data(),
                      {g.phi_hidden[l].data().begin(), g.phi_hidden[l].data().end()}});
    probes.push_back({"phi." + std::to_string(l) + ".output", p.phi[l].output.data(),
                      {g.phi_output[l].data().begin(), g.phi_output[l].data().end()}});
  }
  if (cfg.mix != MixMode::fixed_one_one) probes.push_back({"alpha", {&p.alpha, 1}, {g.alpha}});
  if (cfg.mix == MixMode::alpha_beta) probes.push_back({"beta", {&p.beta, 1}, {g.beta}});

  const std::string inst_base = gc.label + " mix=" + to_string(cfg.mix) + " heads=" + std::to_string(cfg.heads);
  for (detail::GroupProbe& probe : probes) {
    const std::vector<double> numeric = finite_difference_grad_inplace(loss, probe.coords, epsilon);
    const double err = relative_error(probe.analytic, numeric);
    report.add("grad:" + probe.name, inst_base, seed, err, tolerance);
  }
  if (zero_input) {
    report.add("zero-input:input-finite", inst_base, seed, all_finite(g.input.data()) ? 0.0 : INFINITY, 0.0);
    for (const Matrix* m : {&g.w_q, &g.w_k, &g.w_v}) {
      double worst = 0.0;
      for (double v : m->data()) worst = std::max(worst, std::abs(v));
      report.add("zero-input:projection-grad", inst_base, seed, worst, 0.0);
    }
  }
}

inline CheckReport run_gradcheck(const GradcheckOptions& o) {
  if (!(o.tolerance > 0.0)) throw std::invalid_argument("tolerance must be positive");
  CheckReport r;
  r.command = "gradcheck";
  const std::vector<GradcheckCase> cases = o.cases.empty() ? default_gradcheck_cases() : o.cases;
  std::uint64_t seed = o.seed;
  for (const GradcheckCase& gc : cases) gradcheck_case(r, gc, seed++, o.tolerance, o.epsilon, o.zero_input);
  return r;
}

}  // namespace acmix
