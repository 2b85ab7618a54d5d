#pragma once

// Toy training run: two residual ACmix layers fitted by plain gradient descent, recording
// |alpha|, |beta| and log|alpha / beta| per layer and step.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "acmix/acmix.hpp"
#include "acmix/ops.hpp"

namespace acmix {

inline constexpr const char* kTrajectoryFormat = "acmix.trajectory";

struct TrajectoryPoint {
  std::size_t step = 0;
  std::size_t layer = 0;
  double alpha = 0.0;  ///< effective weight on the attention path
  double beta = 0.0;   ///< effective weight on the convolution path

  double abs_alpha() const { return std::abs(alpha); }
  double abs_beta() const { return std::abs(beta); }
  std::optional<double> log_ratio() const {
    if (beta == 0.0 || alpha == 0.0) return std::nullopt;
    return std::log(std::abs(alpha / beta));
  }
  bool operator==(const TrajectoryPoint&) const = default;
};

struct TrajectoryRecord {
  std::string mix;
  std::size_t layers = 0;
  std::vector<double> loss;  ///< loss at steps 0..n-1
  std::vector<TrajectoryPoint> points;

  bool operator==(const TrajectoryRecord&) const = default;

  /// Every (step, layer) pair present, steps non-decreasing.
  bool complete() const {
    if (points.size() != loss.size() * layers) return false;
    for (std::size_t t = 0; t < points.size(); ++t)
      if (points[t].step != t / layers || points[t].layer != t % layers) return false;
    return true;
  }
};

inline nlohmann::json trajectory_to_json(const TrajectoryRecord& r) {
  nlohmann::json pts = nlohmann::json::array();
  for (const TrajectoryPoint& p : r.points) {
    const auto lr = p.log_ratio();
    pts.push_back({{"step", p.step},
                   {"layer", p.layer},
                   {"alpha", p.alpha},
                   {"beta", p.beta},
                   {"abs_alpha", p.abs_alpha()},
                   {"abs_beta", p.abs_beta()},
                   {"log_abs_alpha_over_beta", lr ? nlohmann::json(*lr) : nlohmann::json(nullptr)}});
  }
  return {{"format", kTrajectoryFormat}, {"version", 1}, {"mix", r.mix},
          {"layers", r.layers},          {"loss", r.loss}, {"points", pts}};
}

inline TrajectoryRecord trajectory_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != kTrajectoryFormat) throw std::invalid_argument("not an acmix.trajectory document");
  TrajectoryRecord r;
  r.mix = j.at("mix").get<std::string>();
  r.layers = j.at("layers").get<std::size_t>();
  r.loss = j.at("loss").get<std::vector<double>>();
  for (const auto& p : j.at("points")) {
    r.points.push_back({p.at("step").get<std::size_t>(), p.at("layer").get<std::size_t>(), p.at("alpha").get<double>(),
                        p.at("beta").get<double>()});
  }
  return r;
}

inline std::string trajectory_to_csv(const TrajectoryRecord& r) {
  std::ostringstream os;
  os << "step,layer,alpha,beta,abs_alpha,abs_beta,log_abs_alpha_over_beta,loss\n";
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  for (const TrajectoryPoint& p : r.points) {
    const auto lr = p.log_ratio();
    os << p.step << "," << p.layer << "," << num(p.alpha) << "," << num(p.beta) << "," << num(p.abs_alpha()) << ","
       << num(p.abs_beta()) << "," << (lr ? num(*lr) : "") << "," << num(r.loss.at(p.step)) << "\n";
  }
  return os.str();
}

/// Inverse of trajectory_to_csv. `mix` is not stored in the CSV and must be supplied.
inline TrajectoryRecord trajectory_from_csv(const std::string& text, const std::string& mix) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line.rfind("step,layer,alpha,beta", 0) != 0)
    throw std::invalid_argument("trajectory CSV header missing");
  TrajectoryRecord r;
  r.mix = mix;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (line.back() == ',') f.emplace_back();
    if (f.size() != 8) throw std::invalid_argument("trajectory CSV row has " + std::to_string(f.size()) + " fields");
    TrajectoryPoint p{std::stoul(f[0]), std::stoul(f[1]), std::strtod(f[2].c_str(), nullptr),
                      std::strtod(f[3].c_str(), nullptr)};
    if (p.layer + 1 > r.layers) r.layers = p.layer + 1;
    if (p.step == r.loss.size()) r.loss.push_back(std::strtod(f[7].c_str(), nullptr));
    r.points.push_back(p);
  }
  return r;
}

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(std::uint64_t seed, std::size_t step)
      : std::runtime_error("loss became non-finite at step " + std::to_string(step) + " (seed " +
                           std::to_string(seed) + ")"),
        seed_(seed),
        step_(step) {}
  std::uint64_t seed() const { return seed_; }
  std::size_t step() const { return step_; }

 private:
  std::uint64_t seed_;
  std::size_t step_;
};

enum class ToyTask {
  teacher,  ///< target = x + a fixed random 3x3 convolution of x
  zero,     ///< target = 0
};

inline ToyTask parse_toy_task(const std::string& s) {
  if (s == "teacher") return ToyTask::teacher;
  if (s == "zero") return ToyTask::zero;
  throw std::invalid_argument("unknown toy task '" + s + "'");
}

struct TrainOptions {
  std::uint64_t seed = 1234;
  std::size_t steps = 500;
  double lr = 0.05;
  std::size_t size = 16;
  std::size_t channels = 4;
  std::size_t heads = 2;
  std::size_t batch = 2;
  std::size_t layers = 2;
  MixMode mix = MixMode::alpha_beta;
  ToyTask task = ToyTask::teacher;
  AttentionKind attention = AttentionKind::local;
  BorderMode border = BorderMode::truncate;
  std::size_t smoothing = 10;
};

struct TrainResult {
  TrajectoryRecord record;
  double initial_smoothed = 0.0;  ///< trailing-window mean at step 0
  double final_smoothed = 0.0;    ///< trailing-window mean at the last step

  double reduction() const { return initial_smoothed > 0.0 ? 1.0 - final_smoothed / initial_smoothed : 0.0; }
};

/// Trailing mean over `window` losses ending at step t.
inline double smoothed_loss(const std::vector<double>& loss, std::size_t t, std::size_t window) {
  const std::size_t first = t + 1 >= window ? t + 1 - window : 0;
  double s = 0.0;
  for (std::size_t u = first; u <= t; ++u) s += loss[u];
  return s / static_cast<double>(t + 1 - first);
}

namespace detail {

inline void descend(std::span<double> w, std::span<const double> g, double lr) {
  for (std::size_t t = 0; t < w.size(); ++t) w[t] -= lr * g[t];
}

inline void apply_step(ACmixParams& p, const ACmixGrads& g, const ACmixConfig& cfg, double lr) {
  descend(p.w_q.data(), g.w_q.data(), lr);
  descend(p.w_k.data(), g.w_k.data(), lr);
  descend(p.w_v.data(), g.w_v.data(), lr);
  for (std::size_t l = 0; l < p.fc.size(); ++l) descend(p.fc[l].data(), g.fc[l].data(), lr);
  if (p.bank.learnable()) descend(p.bank.data(), g.bank, lr);
  if (p.pos) descend(p.pos->data(), g.pos, lr);
  for (std::size_t l = 0; l < p.phi.size(); ++l) {
    descend(p.phi[l].hidden.data(), g.phi_hidden[l].data(), lr);
    descend(p.phi[l].output.data(), g.phi_output[l].data(), lr);
  }
  if (cfg.mix != MixMode::fixed_one_one) p.alpha -= lr * g.alpha;
  if (cfg.mix == MixMode::alpha_beta) p.beta -= lr * g.beta;
}

}  // namespace detail

inline TrainResult train_toy(const TrainOptions& o) {
  if (o.layers == 0 || o.steps == 0) throw std::invalid_argument("layers and steps must be positive");
  if (!(o.lr > 0.0) || !std::isfinite(o.lr)) throw std::invalid_argument("learning rate must be positive");
  std::mt19937_64 rng(o.seed);
  ACmixConfig cfg;
  cfg.in_channels = cfg.out_channels = o.channels;
  cfg.heads = o.heads;
  cfg.attention = o.attention;
  cfg.border = o.border;
  cfg.positional_encoding = o.attention == AttentionKind::local || o.attention == AttentionKind::window;
  cfg.mix = o.mix;
  cfg.validate();

  std::vector<ACmixParams> net;
  for (std::size_t l = 0; l < o.layers; ++l) net.push_back(ACmixParams::init(cfg, rng));

  const Shape shape{o.batch, o.channels, o.size, o.size};
  const Tensor x = random_tensor(shape, rng);
  Tensor target(shape);
  if (o.task == ToyTask::teacher) {
    ConvKernel teacher = random_kernel(o.channels, o.channels, 3, rng);
    for (double& w : teacher.data()) w /= std::sqrt(9.0 * static_cast<double>(o.channels));
    target = x + conv2d_reference(x, teacher);
  }
  const double inv_count = 1.0 / static_cast<double>(shape.size());

  TrainResult result;
  TrajectoryRecord& rec = result.record;
  rec.mix = to_string(o.mix);
  rec.layers = o.layers;
  std::vector<Tensor> acts(o.layers + 1);
  for (std::size_t step = 0; step <= o.steps; ++step) {
    acts[0] = x;
    try {
      for (std::size_t l = 0; l < o.layers; ++l) acts[l + 1] = acts[l] + acmix_forward(acts[l], net[l], cfg);
    } catch (const std::invalid_argument&) {
      // Overflowed weights surface as non-finite attention logits before the loss does.
      if (step == 0) throw;
      throw TrainingDiverged(o.seed, step);
    }
    const Tensor diff = acts[o.layers] - target;
    const double loss = dot(diff, diff) * inv_count;
    if (!std::isfinite(loss)) throw TrainingDiverged(o.seed, step);
    rec.loss.push_back(loss);
    for (std::size_t l = 0; l < o.layers; ++l) {
      const auto [a, b] = net[l].mix(cfg.mix);
      rec.points.push_back({step, l, a, b});
    }
    if (step == o.steps) break;

    Tensor up = (2.0 * inv_count) * diff;
    for (std::size_t l = o.layers; l-- > 0;) {
      const ACmixGrads g = acmix_backward(acts[l], net[l], cfg, up);
      up += g.input;
      detail::apply_step(net[l], g, cfg, o.lr);
    }
  }
  result.initial_smoothed = smoothed_loss(rec.loss, 0, o.smoothing);
  result.final_smoothed = smoothed_loss(rec.loss, rec.loss.size() - 1, o.smoothing);
  return result;
}

}  // namespace acmix
