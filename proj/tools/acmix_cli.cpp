// acmix: equivalence checks, gradient checks, cost reports, shift benchmarks and toy training.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "acmix/bench.hpp"
#include "acmix/cost_model.hpp"
#include "acmix/gradcheck_suite.hpp"
#include "acmix/serialize.hpp"
#include "acmix/train_toy.hpp"
#include "acmix/verify.hpp"

namespace {

constexpr int kExitFail = 1;
constexpr int kExitError = 2;

struct Common {
  std::uint64_t seed = 1234;
  std::string format = "text";
  std::string out;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--seed", c.seed, "random seed")->capture_default_str();
  cmd->add_option("--format", c.format, "report format")->check(CLI::IsMember({"json", "text"}))->capture_default_str();
  cmd->add_option("--out", c.out, "write the report here instead of stdout");
}

void emit(const Common& c, const std::string& text, const nlohmann::json& j) {
  const std::string body = c.format == "json" ? j.dump(2) + "\n" : text;
  if (c.out.empty()) {
    std::cout << body;
  } else {
    acmix::write_text_file(c.out, body);
    std::cout << "report written to " << c.out << "\n";
  }
}

void check_tolerance(double tol) {
  if (!(tol >= std::numeric_limits<double>::epsilon()))
    throw CLI::ValidationError("--tol", "tolerance must be at least machine epsilon");
}

int emit_report(const Common& c, const acmix::CheckReport& r) {
  emit(c, r.to_text(), r.to_json());
  if (!r.all_passed()) {
    for (const acmix::CheckResult& f : r.checks)
      if (!f.passed) {
        std::cerr << r.command << ": first failure " << f.group << " [" << f.instance << "] seed " << f.seed
                  << " deviation " << f.deviation << "\n";
        break;
      }
    return kExitFail;
  }
  return 0;
}

acmix::ArchitectureSpec resolve_arch(const std::string& arch, const std::string& op) {
  if (std::filesystem::exists(arch)) return acmix::architecture_from_json(acmix::read_json_file(arch));
  const acmix::OperatorChoice choice = op.empty() ? acmix::default_operator(arch) : acmix::parse_operator(op);
  return acmix::preset(arch, choice);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ACmix operator toolkit"};
  app.require_subcommand(1);

  // verify
  Common verify_common;
  acmix::VerifyOptions verify_opts;
  auto* verify = app.add_subcommand("verify", "run the equivalence matrix");
  add_common(verify, verify_common);
  verify->add_option("--tol", verify_opts.tolerance, "tolerance for reordered-sum comparisons")->capture_default_str();
  verify->add_option("--sizes", verify_opts.sizes, "feature map sizes (H = W)")->delimiter(',');
  verify->add_option("--kernels", verify_opts.kernels, "convolution kernel sizes")->delimiter(',');
  verify->add_option("--channels", verify_opts.channels, "channel counts")->delimiter(',');
  verify->add_flag("--inject-fault", verify_opts.inject_fault, "perturb one kernel weight on the decomposed side");

  // gradcheck
  Common grad_common;
  acmix::GradcheckOptions grad_opts;
  std::string grad_border, grad_mix;
  auto* gradcheck = app.add_subcommand("gradcheck", "compare analytic and finite-difference gradients");
  add_common(gradcheck, grad_common);
  gradcheck->add_option("--tol", grad_opts.tolerance, "relative error threshold")->capture_default_str();
  gradcheck->add_option("--eps", grad_opts.epsilon, "finite-difference step")->capture_default_str();
  gradcheck->add_option("--border", grad_border, "border mode for local-attention cases")
      ->check(CLI::IsMember({"truncate", "padded-keys"}));
  gradcheck->add_option("--mix", grad_mix, "mix mode for every case")
      ->check(CLI::IsMember({"alpha-beta", "alpha-one", "alpha-complement", "one-one"}));
  gradcheck->add_flag("--zero-input", grad_opts.zero_input, "use an all-zero input");

  // cost
  Common cost_common;
  std::string cost_arch, cost_op;
  auto* cost = app.add_subcommand("cost", "FLOPs and parameter report");
  add_common(cost, cost_common);
  cost->add_option("--arch,arch", cost_arch, "preset name or architecture JSON file");
  cost->add_option("--operator", cost_op, "operator substituted into the preset")
      ->check(CLI::IsMember({"conv", "attn", "acmix"}));

  // bench
  Common bench_common;
  acmix::BenchOptions bench_opts;
  std::vector<std::size_t> bench_sizes;
  auto* bench = app.add_subcommand("bench", "time shift-aggregation implementations");
  add_common(bench, bench_common);
  bench->add_option("--sizes", bench_sizes, "feature map size (H = W); first entry used")->delimiter(',');
  bench->add_option("--channels", bench_opts.channels)->capture_default_str();
  bench->add_option("--kernel", bench_opts.kernel)->capture_default_str();
  bench->add_option("--warmup", bench_opts.warmup)->capture_default_str();
  bench->add_option("--iterations", bench_opts.iterations)->capture_default_str();
  bench->add_option("--tol", bench_opts.tolerance, "equivalence gate tolerance")->capture_default_str();
  bench->add_flag("--inject-fault", bench_opts.inject_fault, "perturb one weight of the learnable bank");

  // train-toy
  Common train_common;
  acmix::TrainOptions train_opts;
  std::string train_mix = "alpha-beta", train_task = "teacher", train_border = "truncate";
  double min_reduction = 0.5;
  auto* train = app.add_subcommand("train-toy", "train a two-layer residual ACmix net and record alpha/beta");
  add_common(train, train_common);
  train->add_option("--steps", train_opts.steps)->capture_default_str();
  train->add_option("--lr", train_opts.lr)->capture_default_str();
  train->add_option("--mix", train_mix)
      ->check(CLI::IsMember({"alpha-beta", "alpha-one", "alpha-complement", "one-one"}))
      ->capture_default_str();
  train->add_option("--task", train_task)->check(CLI::IsMember({"teacher", "zero"}))->capture_default_str();
  train->add_option("--border", train_border)->check(CLI::IsMember({"truncate", "padded-keys"}))->capture_default_str();
  train->add_option("--min-reduction", min_reduction, "required smoothed-loss reduction")->capture_default_str();
  train->add_option("--size", train_opts.size, "feature map size (H = W)")->capture_default_str();
  std::string trajectory_prefix;
  train->add_option("--trajectory-out", trajectory_prefix, "write <prefix>.json and <prefix>.csv");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*verify) {
      check_tolerance(verify_opts.tolerance);
      verify_opts.seed = verify_common.seed;
      return emit_report(verify_common, acmix::run_verify(verify_opts));
    }
    if (*gradcheck) {
      check_tolerance(grad_opts.tolerance);
      grad_opts.seed = grad_common.seed;
      grad_opts.cases = acmix::default_gradcheck_cases();
      for (acmix::GradcheckCase& c : grad_opts.cases) {
        if (!grad_border.empty() && c.config.attention == acmix::AttentionKind::local)
          c.config.border = acmix::parse_border(grad_border);
        if (!grad_mix.empty()) c.config.mix = acmix::parse_mix_mode(grad_mix);
      }
      return emit_report(grad_common, acmix::run_gradcheck(grad_opts));
    }
    if (*cost) {
      if (cost_arch.empty()) throw CLI::ValidationError("arch", "an architecture preset or spec file is required");
      const acmix::CostReport r = acmix::architecture_cost(resolve_arch(cost_arch, cost_op));
      emit(cost_common, acmix::report_to_text(r), acmix::report_to_json(r));
      return 0;
    }
    if (*bench) {
      check_tolerance(bench_opts.tolerance);
      bench_opts.seed = bench_common.seed;
      if (!bench_sizes.empty()) bench_opts.size = bench_sizes.front();
      const acmix::BenchResult r = acmix::run_bench(bench_opts);
      emit(bench_common, r.to_text(bench_opts), r.to_json(bench_opts));
      return r.equivalent ? 0 : kExitFail;
    }
    if (*train) {
      train_opts.seed = train_common.seed;
      train_opts.mix = acmix::parse_mix_mode(train_mix);
      train_opts.task = acmix::parse_toy_task(train_task);
      train_opts.border = acmix::parse_border(train_border);
      const acmix::TrainResult r = acmix::train_toy(train_opts);
      const acmix::TrajectoryRecord& rec = r.record;

      bool json_roundtrip = acmix::trajectory_from_json(nlohmann::json::parse(acmix::trajectory_to_json(rec).dump())) == rec;
      bool csv_roundtrip = acmix::trajectory_from_csv(acmix::trajectory_to_csv(rec), rec.mix) == rec;
      if (!trajectory_prefix.empty()) {
        acmix::write_text_file(trajectory_prefix + ".json", acmix::trajectory_to_json(rec).dump(2) + "\n");
        acmix::write_text_file(trajectory_prefix + ".csv", acmix::trajectory_to_csv(rec));
        json_roundtrip = json_roundtrip &&
                         acmix::trajectory_from_json(acmix::read_json_file(trajectory_prefix + ".json")) == rec;
        std::ifstream in(trajectory_prefix + ".csv");
        std::stringstream ss;
        ss << in.rdbuf();
        csv_roundtrip = csv_roundtrip && acmix::trajectory_from_csv(ss.str(), rec.mix) == rec;
      }
      const bool complete = rec.complete();
      const bool reduced = r.reduction() >= min_reduction;
      const bool passed = complete && reduced && json_roundtrip && csv_roundtrip;

      nlohmann::json j = {{"seed", train_opts.seed},
                          {"steps", train_opts.steps},
                          {"lr", train_opts.lr},
                          {"mix", rec.mix},
                          {"task", train_task},
                          {"initial_smoothed_loss", r.initial_smoothed},
                          {"final_smoothed_loss", r.final_smoothed},
                          {"reduction", r.reduction()},
                          {"min_reduction", min_reduction},
                          {"trajectory_complete", complete},
                          {"json_roundtrip", json_roundtrip},
                          {"csv_roundtrip", csv_roundtrip},
                          {"passed", passed}};
      std::ostringstream os;
      os << "train-toy seed=" << train_opts.seed << " steps=" << train_opts.steps << " lr=" << train_opts.lr
         << " mix=" << rec.mix << " task=" << train_task << "\n"
         << "smoothed loss " << r.initial_smoothed << " -> " << r.final_smoothed << " (reduction "
         << 100.0 * r.reduction() << "%, required " << 100.0 * min_reduction << "%)\n";
      for (std::size_t l = 0; l < rec.layers; ++l) {
        const acmix::TrajectoryPoint& p = rec.points[rec.points.size() - rec.layers + l];
        os << "layer " << l << ": |alpha|=" << p.abs_alpha() << " |beta|=" << p.abs_beta();
        if (const auto lr = p.log_ratio()) os << " log|alpha/beta|=" << *lr;
        os << "\n";
      }
      os << "trajectory complete: " << (complete ? "yes" : "no") << ", json round-trip: "
         << (json_roundtrip ? "ok" : "FAILED") << ", csv round-trip: " << (csv_roundtrip ? "ok" : "FAILED") << "\n"
         << (passed ? "PASS" : "FAIL") << "\n";
      emit(train_common, os.str(), j);
      return passed ? 0 : kExitFail;
    }
  } catch (const acmix::TrainingDiverged& e) {
    std::cerr << "train-toy: " << e.what() << "\n";
    return kExitFail;
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
