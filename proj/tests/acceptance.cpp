// Acceptance run: one PASS/FAIL line per criterion, sub-lines for the cost tables.
// Exit status is nonzero if any line fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "acmix/acmix.hpp"
#include "acmix/bench.hpp"
#include "acmix/cost_model.hpp"
#include "acmix/gradcheck_suite.hpp"
#include "acmix/train_toy.hpp"
#include "acmix/verify.hpp"

using namespace acmix;

namespace {

int failures = 0;

void line(const std::string& id, bool ok, const std::string& detail) {
  std::printf("%s %-3s %s\n", ok ? "PASS" : "FAIL", id.c_str(), detail.c_str());
  if (!ok) ++failures;
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct Worst {
  double deviation = 0.0;
  std::size_t count = 0;
  bool all_passed = true;
};

Worst collect(const CheckReport& r, const std::vector<std::string>& groups) {
  Worst w;
  for (const CheckResult& c : r.checks)
    for (const std::string& g : groups)
      if (c.group == g) {
        w.deviation = std::max(w.deviation, c.deviation);
        w.all_passed = w.all_passed && c.passed;
        ++w.count;
      }
  return w;
}

// A reported GFLOPs figure matches if within 10% relative or if the computed value rounds
// to it at the printed precision.
bool flops_match(double computed, double reported, int decimals) {
  const double scale = std::pow(10.0, decimals);
  const bool rounds = std::round(computed * scale) == std::round(reported * scale);
  return rounds || std::abs(computed - reported) <= 0.10 * reported;
}

struct StageRow {
  const char* label;
  const char* arch;
  OperatorChoice op;
  double s1, s2;
  int decimals;
  double f1;  ///< reported Stage I share
};

void check_stage_row(const std::string& id, const StageRow& row) {
  const CostReport r = architecture_cost(preset(row.arch, row.op));
  const double g1 = static_cast<double>(r.stage1_flops) / 1e9, g2 = static_cast<double>(r.stage2_flops) / 1e9;
  const double f1 = r.stage1_flop_fraction();
  const bool ok = flops_match(g1, row.s1, row.decimals) && flops_match(g2, row.s2, row.decimals) &&
                  std::abs(f1 - row.f1) <= 0.03;
  line(id, ok,
       std::string(row.label) + fmt(": I %.4f G (%.1f%%) vs %.2f; ", g1, 100.0 * f1, row.s1) +
           fmt("II %.4f G (%.1f%%) vs %.2f; Stage I share target %.0f%%", g2, 100.0 * (1.0 - f1), row.s2,
               100.0 * row.f1));
}

void check_whole_model(const std::string& id, const char* label, const char* arch, OperatorChoice op, double gflops,
                       double mparams) {
  const CostReport r = architecture_cost(preset(arch, op));
  const double g = static_cast<double>(r.total_flops()) / 1e9, m = static_cast<double>(r.total_params()) / 1e6;
  const bool ok = std::abs(g / gflops - 1.0) <= 0.05 && std::abs(m / mparams - 1.0) <= 0.05;
  line(id, ok, std::string(label) + fmt(": %.3f G / %.2f M vs %.1f G / %.1f M (5%%)", g, m, gflops, mparams));
}

}  // namespace

int main() {
  // 1-4 and 8 share the verify matrix.
  auto t0 = std::chrono::steady_clock::now();
  const CheckReport verify = run_verify({});
  const double verify_s = seconds_since(t0);

  {
    const Worst w = collect(verify, {"conv-decomposition"});
    line("1", w.all_passed && w.count >= 27 && w.deviation <= 1e-10 && verify_s < 10.0,
         fmt("conv decomposition: %.0f cases, max dev %.2e (tol 1e-10), %.2f s", static_cast<double>(w.count),
             w.deviation, verify_s));
  }
  {
    const Worst w = collect(verify, {"shift-depthwise"});
    line("2", w.all_passed && w.count == 34 && w.deviation <= 1e-12,
         fmt("shift vs one-hot depthwise: %.0f displacements (k=3,5), max dev %.2e (tol 1e-12)",
             static_cast<double>(w.count), w.deviation));
  }
  {
    const Worst w = collect(verify, {"group-conv-shift-sum"});
    line("3", w.all_passed && w.count > 0 && w.deviation <= 1e-10,
         fmt("group conv vs explicit shift-sum: %.0f cases, max dev %.2e (tol 1e-10)", static_cast<double>(w.count),
             w.deviation));
  }
  {
    const Worst lim = collect(verify, {"acmix-limit-attention", "acmix-limit-conv"});
    const Worst sum = collect(verify, {"acmix-limit-sum"});
    line("4", lim.all_passed && lim.deviation == 0.0 && sum.all_passed && sum.deviation <= 1e-12,
         fmt("ACmix limits: (1,0)/(0,1) max dev %.2e (bitwise), (1,1) max dev %.2e (tol 1e-12)", lim.deviation,
             sum.deviation));
  }

  {
    t0 = std::chrono::steady_clock::now();
    const CheckReport g = run_gradcheck({});
    const double s = seconds_since(t0);
    double worst = 0.0;
    bool multi_head = false, local = false, window = false;
    for (const CheckResult& c : g.checks) worst = std::max(worst, c.deviation);
    for (const GradcheckCase& gc : default_gradcheck_cases()) {
      multi_head = multi_head || gc.config.heads > 1;
      local = local || gc.config.attention == AttentionKind::local;
      window = window || gc.config.attention == AttentionKind::window;
    }
    line("5", g.all_passed() && multi_head && local && window && s < 60.0,
         fmt("gradcheck: %.0f groups over %.0f configs, worst rel err %.2e (tol 1e-5), %.1f s",
             static_cast<double>(g.checks.size()), static_cast<double>(default_gradcheck_cases().size()), worst, s));
  }

  {
    t0 = std::chrono::steady_clock::now();
    const StageRow table[] = {
        {"ResNet-50 conv", "resnet50", OperatorChoice::conv, 1.9, 0.1, 1, 0.99},
        {"ResNet-50 self-attention", "resnet50", OperatorChoice::attention, 1.0, 0.2, 1, 0.83},
        {"ResNet-50 ACmix", "resnet50", OperatorChoice::acmix, 1.0, 0.4, 1, 0.73},
    };
    const StageRow appendix[] = {
        {"ResNet-50 conv", "resnet50", OperatorChoice::conv, 1.85, 0.01, 2, 0.99},
        {"ResNet-50 self-attention", "resnet50", OperatorChoice::attention, 0.96, 0.19, 2, 0.83},
        {"ResNet-50 ACmix", "resnet50", OperatorChoice::acmix, 0.96, 0.35, 2, 0.73},
        {"SAN-19 self-attention", "san19", OperatorChoice::attention, 1.29, 0.72, 2, 1.29 / (1.29 + 0.72)},
        {"SAN-19 ACmix", "san19", OperatorChoice::acmix, 1.29, 0.89, 2, 0.60},
        {"Swin-T self-attention", "swin-t", OperatorChoice::attention, 1.04, 0.49, 2, 0.68},
        {"Swin-T ACmix", "swin-t", OperatorChoice::acmix, 1.04, 0.64, 2, 1.04 / (1.04 + 0.64)},
    };
    for (const StageRow& r : table) check_stage_row("6a", r);
    for (const StageRow& r : appendix) check_stage_row("6b", r);
    check_whole_model("6c", "ResNet-50", "resnet50", OperatorChoice::conv, 4.1, 25.6);
    check_whole_model("6c", "Swin-T", "swin-t", OperatorChoice::attention, 4.5, 29.0);
    const double s = seconds_since(t0);
    line("6", s < 1.0, fmt("cost model runtime %.3f s (limit 1 s)", s));
  }

  {
    std::mt19937_64 rng(7);
    std::size_t configs = 0, mismatches = 0;
    for (std::size_t C : {4u, 8u, 64u})
      for (std::size_t N : {1u, 2u, 4u})
        for (std::size_t kc : {1u, 3u, 5u})
          for (AttentionKind kind : {AttentionKind::local, AttentionKind::window, AttentionKind::global,
                                     AttentionKind::patchwise}) {
            ACmixConfig cfg;
            cfg.in_channels = cfg.out_channels = C;
            cfg.heads = N;
            cfg.conv_kernel = kc;
            cfg.attention = kind;
            cfg.positional_encoding = kind == AttentionKind::local || kind == AttentionKind::window;
            const ParamCount live = count_params_live(ACmixParams::init(cfg, rng));
            LayerSpec s;
            s.kind = LayerKind::acmix;
            s.c_in = s.c_out = C;
            s.heads = N;
            s.k_c = kc;
            s.k_a = cfg.attn_kernel;
            s.attention = kind;
            s.positional_encoding = cfg.positional_encoding;
            const CostReport m = layer_cost(s);
            const std::size_t budget = 3 * kc * kc * N + kc * kc * kc * kc * C;
            ++configs;
            if (live.stage1 != m.stage1_params || live.stage2 != m.stage2_params ||
                live.positional != m.positional_params || live.stage1 != 3 * C * C ||
                (kind != AttentionKind::patchwise && live.stage2 != budget))
              ++mismatches;
          }
    line("7", mismatches == 0,
         fmt("count_params_live vs layer_cost: %.0f configs, %.0f mismatches", static_cast<double>(configs),
             static_cast<double>(mismatches)));
  }

  {
    const Worst sum = collect(verify, {"attention-weights-sum"});
    const Worst cst = collect(verify, {"attention-constant-field"});
    line("8", sum.all_passed && cst.all_passed && sum.count > 0 && cst.count > 0,
         fmt("attention weights: max |sum - 1| %.2e, constant field max dev %.2e (tol 1e-12)", sum.deviation,
             cst.deviation));
  }

  {
    t0 = std::chrono::steady_clock::now();
    TrainOptions o;
    const TrainResult r = train_toy(o);
    const TrajectoryRecord& rec = r.record;
    const bool roundtrip = trajectory_from_json(nlohmann::json::parse(trajectory_to_json(rec).dump())) == rec &&
                           trajectory_from_csv(trajectory_to_csv(rec), rec.mix) == rec;
    line("9", r.reduction() >= 0.5 && rec.complete() && rec.loss.size() == o.steps + 1 && roundtrip,
         fmt("toy training: smoothed loss %.4g -> %.4g (%.1f%% reduction, need 50%%), %.1f s", r.initial_smoothed,
             r.final_smoothed, 100.0 * r.reduction(), seconds_since(t0)) +
             (roundtrip ? ", trajectory JSON/CSV round-trip ok" : ", trajectory round-trip FAILED"));
  }

  {
    BenchOptions o;
    o.warmup = 1;
    o.iterations = 5;
    const BenchResult ok = run_bench(o);
    o.inject_fault = true;
    const BenchResult bad = run_bench(o);
    std::string order;
    for (const BenchTiming& t : ok.timings) order += " " + t.variant + fmt("=%.2fms", t.mean_ms);
    line("10", ok.equivalent && ok.timings.size() == 3 && !bad.equivalent && bad.timings.empty(),
         fmt("bench gate: max dev %.2e, faulted bank suppresses timings;", ok.max_deviation) + order);
  }

  std::printf("%d failing line(s)\n", failures);
  return failures == 0 ? 0 : 1;
}
