#pragma once

// Symbolic FLOP and parameter accounting. One multiply-accumulate counts as one FLOP.
// Softmax, exponentiation, normalisation layers, biases and positional-bias additions
// are not counted; positional tables are tallied separately from the stage budgets.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "acmix/attention.hpp"

namespace acmix {

enum class LayerKind { conv, self_attention, acmix, pointwise, pooling, fc };

inline const char* to_string(LayerKind k) {
  switch (k) {
    case LayerKind::conv: return "conv";
    case LayerKind::self_attention: return "self-attention";
    case LayerKind::acmix: return "acmix";
    case LayerKind::pointwise: return "pointwise";
    case LayerKind::pooling: return "pooling";
    case LayerKind::fc: return "fc";
  }
  return "?";
}

inline LayerKind parse_layer_kind(const std::string& s) {
  if (s == "conv") return LayerKind::conv;
  if (s == "self-attention" || s == "attn") return LayerKind::self_attention;
  if (s == "acmix") return LayerKind::acmix;
  if (s == "pointwise") return LayerKind::pointwise;
  if (s == "pooling") return LayerKind::pooling;
  if (s == "fc") return LayerKind::fc;
  throw std::invalid_argument("unknown layer kind '" + s + "'");
}

/// One layer (or a run of `repeat` identical layers) of an architecture.
/// `h` and `w` are the input resolution; the output resolution is ceil(h / stride).
///
/// Resolution rule for strided layers: convolutions are charged entirely at the output
/// resolution. Self-attention is charged at the input resolution (attend, then pool).
/// ACmix charges Stage I, the attention path and the FC at the input resolution, and the
/// shift-sum and group convolution at the output resolution.
struct LayerSpec {
  std::string name;
  LayerKind kind = LayerKind::conv;
  std::uint64_t c_in = 0;
  std::uint64_t c_out = 0;
  std::uint64_t h = 1;
  std::uint64_t w = 1;
  std::uint64_t stride = 1;
  std::uint64_t k_c = 3;
  std::uint64_t k_a = 7;
  std::uint64_t heads = 1;
  std::uint64_t qk_channels = 0;  ///< width of q and k; 0 means c_out
  AttentionKind attention = AttentionKind::local;
  // Patchwise weight network: `phi_groups` independent networks, each reading
  // (c_qk / phi_groups)(F + 1) inputs through `phi_hidden` units into F * phi_share outputs.
  // Zero picks the shape used by PatchwisePhi (one per head, hidden F, one output per key).
  std::uint64_t phi_groups = 0;
  std::uint64_t phi_hidden = 0;
  std::uint64_t phi_share = 0;
  std::uint64_t kv_reduction = 1;  ///< keys/values on an R-times coarser grid (spatial-reduction attention)
  bool output_projection = false;  ///< C_v x C_out projection after aggregation, charged to Stage II
  bool positional_encoding = false;
  bool module = true;  ///< counted in the module-level stage tallies
  std::uint64_t repeat = 1;

  std::uint64_t out_h() const { return (h + stride - 1) / stride; }
  std::uint64_t out_w() const { return (w + stride - 1) / stride; }
  std::uint64_t qk() const { return qk_channels ? qk_channels : c_out; }
  bool is_attention() const { return kind == LayerKind::self_attention || kind == LayerKind::acmix; }

  /// Number of keys each query aggregates over.
  std::uint64_t field() const {
    if (attention == AttentionKind::global) {
      return ((h + kv_reduction - 1) / kv_reduction) * ((w + kv_reduction - 1) / kv_reduction);
    }
    return k_a * k_a;
  }

  void validate() const {
    const std::string where = "layer '" + name + "': ";
    if (h == 0 || w == 0 || stride == 0 || repeat == 0) throw std::invalid_argument(where + "dimensions must be positive");
    if (kind != LayerKind::pooling && (c_in == 0 || c_out == 0))
      throw std::invalid_argument(where + "channel counts must be positive");
    if ((kind == LayerKind::conv || kind == LayerKind::acmix) && k_c == 0)
      throw std::invalid_argument(where + "k_c must be positive");
    if (kind == LayerKind::acmix && k_c % 2 == 0) throw std::invalid_argument(where + "ACmix k_c must be odd");
    if (is_attention()) {
      if (k_a == 0 && attention != AttentionKind::global) throw std::invalid_argument(where + "k_a must be positive");
      if (heads == 0 || c_out % heads != 0 || qk() % heads != 0)
        throw std::invalid_argument(where + "heads must divide the q/k and v widths");
      if (kv_reduction == 0) throw std::invalid_argument(where + "kv_reduction must be positive");
      if (kv_reduction > 1 && attention != AttentionKind::global)
        throw std::invalid_argument(where + "kv_reduction applies to global attention only");
      if (attention == AttentionKind::patchwise && phi_groups && qk() % phi_groups != 0)
        throw std::invalid_argument(where + "phi_groups must divide the q/k width");
    }
  }
};

struct ArchitectureSpec {
  std::string name;
  bool whole_model = false;  ///< true when `layers` lists every layer of the network
  std::vector<LayerSpec> layers;

  void validate() const {
    if (layers.empty()) throw std::invalid_argument("architecture '" + name + "' has no layers");
    for (const LayerSpec& l : layers) l.validate();
  }
};

struct LayerCost {
  std::string name;
  LayerKind kind = LayerKind::conv;
  bool module = true;
  std::uint64_t repeat = 1;
  std::uint64_t stage1_flops = 0;
  std::uint64_t stage2_flops = 0;
  std::uint64_t stage1_params = 0;
  std::uint64_t stage2_params = 0;
  std::uint64_t positional_params = 0;

  std::uint64_t flops() const { return stage1_flops + stage2_flops; }
  std::uint64_t params() const { return stage1_params + stage2_params; }
};

/// Stage tallies cover module layers only; `other_*` covers everything else.
struct CostReport {
  std::string name;
  bool whole_model = false;
  std::uint64_t stage1_flops = 0;
  std::uint64_t stage2_flops = 0;
  std::uint64_t stage1_params = 0;
  std::uint64_t stage2_params = 0;
  std::uint64_t other_flops = 0;
  std::uint64_t other_params = 0;
  std::uint64_t positional_params = 0;
  std::vector<LayerCost> layers;

  std::uint64_t module_flops() const { return stage1_flops + stage2_flops; }
  std::uint64_t module_params() const { return stage1_params + stage2_params; }
  std::uint64_t total_flops() const { return module_flops() + other_flops; }
  std::uint64_t total_params() const { return module_params() + other_params; }

  static double share(std::uint64_t part, std::uint64_t whole) {
    return whole == 0 ? 0.0 : static_cast<double>(part) / static_cast<double>(whole);
  }
  double stage1_flop_fraction() const { return share(stage1_flops, module_flops()); }
  double stage2_flop_fraction() const { return share(stage2_flops, module_flops()); }
  double stage1_param_fraction() const { return share(stage1_params, module_params()); }
  double stage2_param_fraction() const { return share(stage2_params, module_params()); }
};

namespace detail {

inline std::uint64_t phi_cost(const LayerSpec& s) {
  const std::uint64_t F = s.field();
  const std::uint64_t groups = s.phi_groups ? s.phi_groups : s.heads;
  const std::uint64_t hidden = s.phi_hidden ? s.phi_hidden : F;
  const std::uint64_t share = s.phi_share ? s.phi_share : 1;
  return s.qk() * (F + 1) * hidden + groups * hidden * F * share;
}

}  // namespace detail

/// Cost of one layer spec; totals already multiplied by `repeat`.
inline LayerCost layer_cost_entry(const LayerSpec& s) {
  s.validate();
  LayerCost c;
  c.name = s.name;
  c.kind = s.kind;
  c.module = s.module;
  c.repeat = s.repeat;
  const std::uint64_t in_hw = s.h * s.w, out_hw = s.out_h() * s.out_w();
  switch (s.kind) {
    case LayerKind::conv:
      c.stage1_flops = s.k_c * s.k_c * s.c_in * s.c_out * out_hw;
      c.stage1_params = s.k_c * s.k_c * s.c_in * s.c_out;
      c.stage2_flops = s.k_c * s.k_c * s.c_out * out_hw;
      break;
    case LayerKind::pointwise:
    case LayerKind::fc:
      c.stage1_flops = s.c_in * s.c_out * out_hw;
      c.stage1_params = s.c_in * s.c_out;
      break;
    case LayerKind::pooling:
      break;
    case LayerKind::self_attention:
    case LayerKind::acmix: {
      const std::uint64_t qk = s.qk(), v = s.c_out, R = s.kv_reduction;
      const std::uint64_t kv_hw = ((s.h + R - 1) / R) * ((s.w + R - 1) / R);
      const std::uint64_t F = s.field();
      // Stage I. ACmix projects k and v at full resolution because the convolution path consumes them.
      const std::uint64_t kv_proj_hw = s.kind == LayerKind::acmix ? in_hw : kv_hw;
      c.stage1_flops = s.c_in * qk * in_hw + s.c_in * (qk + v) * kv_proj_hw;
      c.stage1_params = s.c_in * (2 * qk + v);
      if (R > 1) {
        c.stage1_flops += R * R * s.c_in * s.c_in * kv_hw;
        c.stage1_params += R * R * s.c_in * s.c_in;
      }
      // Stage II: weights plus weighted sum.
      if (s.attention == AttentionKind::patchwise) {
        const std::uint64_t phi = detail::phi_cost(s);
        c.stage2_flops = (phi + F * v) * in_hw;
        c.stage2_params = phi;
      } else {
        c.stage2_flops = F * (qk + v) * in_hw;
      }
      if (s.output_projection) {
        c.stage2_flops += v * s.c_out * in_hw;
        c.stage2_params += v * s.c_out;
      }
      if (s.kind == LayerKind::acmix) {
        const std::uint64_t k2 = s.k_c * s.k_c;
        c.stage2_flops += 3 * k2 * v * in_hw + (k2 + k2 * k2) * v * out_hw;
        c.stage2_params += 3 * k2 * s.heads + k2 * k2 * v;
      }
      if (s.positional_encoding && s.attention != AttentionKind::global && s.attention != AttentionKind::patchwise)
        c.positional_params = s.heads * (2 * s.k_a - 1) * (2 * s.k_a - 1);
      break;
    }
  }
  c.stage1_flops *= s.repeat;
  c.stage2_flops *= s.repeat;
  c.stage1_params *= s.repeat;
  c.stage2_params *= s.repeat;
  c.positional_params *= s.repeat;
  return c;
}

namespace detail {

inline void accumulate(CostReport& r, const LayerCost& c) {
  if (c.module) {
    r.stage1_flops += c.stage1_flops;
    r.stage2_flops += c.stage2_flops;
    r.stage1_params += c.stage1_params;
    r.stage2_params += c.stage2_params;
  } else {
    r.other_flops += c.flops();
    r.other_params += c.params();
  }
  r.positional_params += c.positional_params;
  r.layers.push_back(c);
}

}  // namespace detail

/// Stage I / Stage II cost of a single layer, whether or not it is flagged as a module.
inline CostReport layer_cost(const LayerSpec& spec) {
  LayerSpec s = spec;
  s.module = true;
  CostReport r;
  r.name = s.name;
  detail::accumulate(r, layer_cost_entry(s));
  return r;
}

inline CostReport architecture_cost(const ArchitectureSpec& arch) {
  arch.validate();
  CostReport r;
  r.name = arch.name;
  r.whole_model = arch.whole_model;
  for (const LayerSpec& l : arch.layers) detail::accumulate(r, layer_cost_entry(l));
  return r;
}

// ---------------------------------------------------------------------------
// Presets

enum class OperatorChoice { conv, attention, acmix };

inline const char* to_string(OperatorChoice o) {
  switch (o) {
    case OperatorChoice::conv: return "conv";
    case OperatorChoice::attention: return "attn";
    case OperatorChoice::acmix: return "acmix";
  }
  return "?";
}

inline OperatorChoice parse_operator(const std::string& s) {
  if (s == "conv") return OperatorChoice::conv;
  if (s == "attn" || s == "self-attention") return OperatorChoice::attention;
  if (s == "acmix") return OperatorChoice::acmix;
  throw std::invalid_argument("unknown operator '" + s + "' (expected conv, attn or acmix)");
}

namespace detail {

inline LayerSpec make_layer(std::string name, LayerKind kind, std::uint64_t c_in, std::uint64_t c_out,
                            std::uint64_t hw, std::uint64_t stride = 1, std::uint64_t repeat = 1) {
  LayerSpec l;
  l.name = std::move(name);
  l.kind = kind;
  l.c_in = c_in;
  l.c_out = c_out;
  l.h = l.w = hw;
  l.stride = stride;
  l.repeat = repeat;
  l.module = false;
  return l;
}

inline ArchitectureSpec resnet(const std::string& name, const std::vector<std::uint64_t>& blocks, OperatorChoice op) {
  ArchitectureSpec a;
  a.name = name;
  a.whole_model = true;
  LayerSpec stem = make_layer("stem", LayerKind::conv, 3, 64, 224, 2);
  stem.k_c = 7;
  a.layers.push_back(stem);
  a.layers.push_back(make_layer("maxpool", LayerKind::pooling, 64, 64, 112, 2));
  std::uint64_t in_ch = 64, res_in = 56;
  for (std::size_t s = 0; s < 4; ++s) {
    const std::uint64_t width = 64u << s, out = 4 * width, res = 56u >> s, stride = s == 0 ? 1 : 2;
    const std::string tag = "res" + std::to_string(s + 2);
    for (int first = 1; first >= 0; --first) {
      const std::uint64_t n = first ? 1 : blocks[s] - 1;
      if (n == 0) continue;
      const std::uint64_t cin = first ? in_ch : out, hw = first ? res_in : res, st = first ? stride : 1;
      const std::string b = tag + (first ? ".first" : ".rest");
      a.layers.push_back(make_layer(b + ".reduce", LayerKind::pointwise, cin, width, hw, 1, n));
      LayerSpec m = make_layer(b + ".mix", LayerKind::conv, width, width, hw, st, n);
      m.module = true;
      if (op != OperatorChoice::conv) {
        m.kind = op == OperatorChoice::acmix ? LayerKind::acmix : LayerKind::self_attention;
        m.heads = 4;
        m.positional_encoding = true;
      }
      a.layers.push_back(m);
      a.layers.push_back(make_layer(b + ".expand", LayerKind::pointwise, width, out, res, 1, n));
      if (first) a.layers.push_back(make_layer(b + ".downsample", LayerKind::pointwise, cin, out, hw, st));
    }
    in_ch = out;
    res_in = res;
  }
  a.layers.push_back(make_layer("avgpool", LayerKind::pooling, 2048, 2048, 7, 7));
  a.layers.push_back(make_layer("fc", LayerKind::fc, 2048, 1000, 1));
  return a;
}

inline ArchitectureSpec san(const std::string& name, const std::vector<std::uint64_t>& blocks, OperatorChoice op) {
  if (op == OperatorChoice::conv) throw std::invalid_argument(name + " has no convolution variant");
  static constexpr std::uint64_t planes[] = {64, 256, 512, 1024, 2048};
  static constexpr std::uint64_t kernels[] = {3, 7, 7, 7, 7};
  ArchitectureSpec a;
  a.name = name;
  a.whole_model = true;
  a.layers.push_back(make_layer("input", LayerKind::pointwise, 3, 64, 224));
  std::uint64_t prev = 64, res = 224;
  for (std::size_t s = 0; s < 5; ++s) {
    const std::uint64_t P = planes[s];
    const std::string tag = "stage" + std::to_string(s + 1);
    a.layers.push_back(make_layer(tag + ".pool", LayerKind::pooling, prev, prev, res, 2));
    res /= 2;
    a.layers.push_back(make_layer(tag + ".transition", LayerKind::pointwise, prev, P, res));
    LayerSpec m = make_layer(tag + ".sa", op == OperatorChoice::acmix ? LayerKind::acmix : LayerKind::self_attention,
                             P, P / 4, res, 1, blocks[s]);
    m.module = true;
    m.attention = AttentionKind::patchwise;
    m.k_a = kernels[s];
    m.qk_channels = P / 16;
    m.heads = 4;
    m.phi_groups = 1;
    m.phi_hidden = P / 32;
    m.phi_share = P / 32;
    a.layers.push_back(m);
    a.layers.push_back(make_layer(tag + ".expand", LayerKind::pointwise, P / 4, P, res, 1, blocks[s]));
    prev = P;
  }
  a.layers.push_back(make_layer("avgpool", LayerKind::pooling, 2048, 2048, 7, 7));
  a.layers.push_back(make_layer("fc", LayerKind::fc, 2048, 1000, 1));
  return a;
}

inline ArchitectureSpec swin(const std::string& name, const std::vector<std::uint64_t>& depths, OperatorChoice op) {
  if (op == OperatorChoice::conv) throw std::invalid_argument(name + " has no convolution variant");
  ArchitectureSpec a;
  a.name = name;
  a.whole_model = true;
  LayerSpec embed = make_layer("patch-embed", LayerKind::conv, 3, 96, 224, 4);
  embed.k_c = 4;
  a.layers.push_back(embed);
  std::uint64_t C = 96, res = 56;
  for (std::size_t s = 0; s < 4; ++s) {
    const std::string tag = "stage" + std::to_string(s + 1);
    if (s > 0) {
      a.layers.push_back(make_layer(tag + ".merge", LayerKind::pointwise, 4 * C, 2 * C, res, 2));
      C *= 2;
      res /= 2;
    }
    LayerSpec m = make_layer(tag + ".attn", op == OperatorChoice::acmix ? LayerKind::acmix : LayerKind::self_attention,
                             C, C, res, 1, depths[s]);
    m.module = true;
    m.attention = AttentionKind::window;
    m.k_a = 7;
    m.heads = C / 32;
    m.output_projection = true;
    m.positional_encoding = true;
    a.layers.push_back(m);
    a.layers.push_back(make_layer(tag + ".mlp1", LayerKind::pointwise, C, 4 * C, res, 1, depths[s]));
    a.layers.push_back(make_layer(tag + ".mlp2", LayerKind::pointwise, 4 * C, C, res, 1, depths[s]));
  }
  a.layers.push_back(make_layer("avgpool", LayerKind::pooling, C, C, 7, 7));
  a.layers.push_back(make_layer("head", LayerKind::fc, C, 1000, 1));
  return a;
}

inline ArchitectureSpec pvt(const std::string& name, const std::vector<std::uint64_t>& depths, OperatorChoice op) {
  if (op == OperatorChoice::conv) throw std::invalid_argument(name + " has no convolution variant");
  static constexpr std::uint64_t dims[] = {64, 128, 320, 512};
  static constexpr std::uint64_t heads[] = {1, 2, 5, 8};
  static constexpr std::uint64_t reduction[] = {8, 4, 2, 1};
  static constexpr std::uint64_t mlp_ratio[] = {8, 8, 4, 4};
  static constexpr std::uint64_t patch[] = {4, 2, 2, 2};
  ArchitectureSpec a;
  a.name = name;
  a.whole_model = true;
  std::uint64_t prev = 3, res = 224;
  for (std::size_t s = 0; s < 4; ++s) {
    const std::uint64_t C = dims[s];
    const std::string tag = "stage" + std::to_string(s + 1);
    LayerSpec embed = make_layer(tag + ".embed", LayerKind::conv, prev, C, res, patch[s]);
    embed.k_c = patch[s];
    a.layers.push_back(embed);
    res /= patch[s];
    LayerSpec m = make_layer(tag + ".attn", op == OperatorChoice::acmix ? LayerKind::acmix : LayerKind::self_attention,
                             C, C, res, 1, depths[s]);
    m.module = true;
    m.attention = AttentionKind::global;
    m.heads = heads[s];
    m.kv_reduction = reduction[s];
    m.output_projection = true;
    a.layers.push_back(m);
    a.layers.push_back(make_layer(tag + ".mlp1", LayerKind::pointwise, C, mlp_ratio[s] * C, res, 1, depths[s]));
    a.layers.push_back(make_layer(tag + ".mlp2", LayerKind::pointwise, mlp_ratio[s] * C, C, res, 1, depths[s]));
    prev = C;
  }
  a.layers.push_back(make_layer("avgpool", LayerKind::pooling, 512, 512, 7, 7));
  a.layers.push_back(make_layer("head", LayerKind::fc, 512, 1000, 1));
  return a;
}

inline std::string normalize_name(const std::string& s) {
  std::string out;
  for (char ch : s)
    if (ch != '-' && ch != '_' && ch != ' ') out += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return out;
}

}  // namespace detail

inline std::vector<std::string> preset_names() {
  return {"resnet26", "resnet38", "resnet50", "san10", "san15", "san19", "pvt-t", "pvt-s", "swin-t", "swin-s"};
}

/// The operator each family uses natively.
inline OperatorChoice default_operator(const std::string& preset) {
  return detail::normalize_name(preset).rfind("resnet", 0) == 0 ? OperatorChoice::conv : OperatorChoice::attention;
}

inline bool is_preset(const std::string& name) {
  const std::string n = detail::normalize_name(name);
  for (const std::string& p : preset_names())
    if (detail::normalize_name(p) == n) return true;
  return false;
}

/// Built-in layouts at 224 x 224 input. SAN, PVT and Swin have no convolution variant.
inline ArchitectureSpec preset(const std::string& name, OperatorChoice op) {
  const std::string n = detail::normalize_name(name);
  const std::string label = name + " (" + to_string(op) + ")";
  if (n == "resnet26") return detail::resnet(label, {1, 2, 4, 1}, op);
  if (n == "resnet38") return detail::resnet(label, {2, 3, 5, 2}, op);
  if (n == "resnet50") return detail::resnet(label, {3, 4, 6, 3}, op);
  if (n == "san10") return detail::san(label, {2, 1, 2, 4, 1}, op);
  if (n == "san15") return detail::san(label, {3, 2, 3, 5, 2}, op);
  if (n == "san19") return detail::san(label, {3, 3, 4, 6, 3}, op);
  if (n == "pvtt") return detail::pvt(label, {2, 2, 2, 2}, op);
  if (n == "pvts") return detail::pvt(label, {3, 4, 6, 3}, op);
  if (n == "swint") return detail::swin(label, {2, 2, 6, 2}, op);
  if (n == "swins") return detail::swin(label, {2, 2, 18, 2}, op);
  throw std::invalid_argument("unknown architecture preset '" + name + "'");
}

// ---------------------------------------------------------------------------
// JSON and text I/O

inline LayerSpec layer_from_json(const nlohmann::json& j) {
  LayerSpec l;
  l.kind = parse_layer_kind(j.at("kind").get<std::string>());
  l.name = j.value("name", std::string(to_string(l.kind)));
  l.c_in = j.value("c_in", std::uint64_t{0});
  l.c_out = j.value("c_out", l.c_in);
  l.h = j.value("h", std::uint64_t{1});
  l.w = j.value("w", l.h);
  l.stride = j.value("stride", std::uint64_t{1});
  l.k_c = j.value("k_c", std::uint64_t{3});
  l.k_a = j.value("k_a", std::uint64_t{7});
  l.heads = j.value("heads", std::uint64_t{1});
  l.qk_channels = j.value("qk_channels", std::uint64_t{0});
  l.attention = parse_attention_kind(j.value("attention", std::string("local")));
  l.phi_groups = j.value("phi_groups", std::uint64_t{0});
  l.phi_hidden = j.value("phi_hidden", std::uint64_t{0});
  l.phi_share = j.value("phi_share", std::uint64_t{0});
  l.kv_reduction = j.value("kv_reduction", std::uint64_t{1});
  l.output_projection = j.value("output_projection", false);
  l.positional_encoding = j.value("positional_encoding", false);
  l.module = j.value("module", l.kind == LayerKind::conv || l.is_attention());
  l.repeat = j.value("repeat", std::uint64_t{1});
  for (const auto& [key, _] : j.items()) {
    static const char* known[] = {"kind", "name", "c_in", "c_out", "h", "w", "stride", "k_c", "k_a", "heads",
                                  "qk_channels", "attention", "phi_groups", "phi_hidden", "phi_share",
                                  "kv_reduction", "output_projection", "positional_encoding", "module", "repeat"};
    if (std::find_if(std::begin(known), std::end(known), [&](const char* k) { return key == k; }) == std::end(known))
      throw std::invalid_argument("layer '" + l.name + "': unknown field '" + key + "'");
  }
  l.validate();
  return l;
}

inline nlohmann::json layer_to_json(const LayerSpec& l) {
  return {{"name", l.name},
          {"kind", to_string(l.kind)},
          {"c_in", l.c_in},
          {"c_out", l.c_out},
          {"h", l.h},
          {"w", l.w},
          {"stride", l.stride},
          {"k_c", l.k_c},
          {"k_a", l.k_a},
          {"heads", l.heads},
          {"qk_channels", l.qk_channels},
          {"attention", to_string(l.attention)},
          {"phi_groups", l.phi_groups},
          {"phi_hidden", l.phi_hidden},
          {"phi_share", l.phi_share},
          {"kv_reduction", l.kv_reduction},
          {"output_projection", l.output_projection},
          {"positional_encoding", l.positional_encoding},
          {"module", l.module},
          {"repeat", l.repeat}};
}

inline ArchitectureSpec architecture_from_json(const nlohmann::json& j) {
  ArchitectureSpec a;
  a.name = j.value("name", std::string("custom"));
  a.whole_model = j.value("whole_model", false);
  if (!j.contains("layers") || !j.at("layers").is_array()) throw std::invalid_argument("architecture needs a 'layers' array");
  for (const auto& lj : j.at("layers")) a.layers.push_back(layer_from_json(lj));
  a.validate();
  return a;
}

inline nlohmann::json architecture_to_json(const ArchitectureSpec& a) {
  nlohmann::json layers = nlohmann::json::array();
  for (const LayerSpec& l : a.layers) layers.push_back(layer_to_json(l));
  return {{"name", a.name}, {"whole_model", a.whole_model}, {"layers", layers}};
}

inline nlohmann::json report_to_json(const CostReport& r) {
  nlohmann::json layers = nlohmann::json::array();
  for (const LayerCost& c : r.layers) {
    layers.push_back({{"name", c.name},
                      {"kind", to_string(c.kind)},
                      {"module", c.module},
                      {"repeat", c.repeat},
                      {"stage1_flops", c.stage1_flops},
                      {"stage2_flops", c.stage2_flops},
                      {"stage1_params", c.stage1_params},
                      {"stage2_params", c.stage2_params},
                      {"positional_params", c.positional_params}});
  }
  nlohmann::json j = {
      {"name", r.name},
      {"flops_convention", "1 MAC = 1 FLOP"},
      {"module",
       {{"stage1_flops", r.stage1_flops},
        {"stage2_flops", r.stage2_flops},
        {"stage1_params", r.stage1_params},
        {"stage2_params", r.stage2_params},
        {"stage1_flop_fraction", r.stage1_flop_fraction()},
        {"stage2_flop_fraction", r.stage2_flop_fraction()},
        {"stage1_param_fraction", r.stage1_param_fraction()},
        {"stage2_param_fraction", r.stage2_param_fraction()}}},
      {"positional_params", r.positional_params},
      {"layers", layers}};
  if (r.whole_model) j["whole_model"] = {{"flops", r.total_flops()}, {"params", r.total_params()}};
  return j;
}

inline std::string report_to_text(const CostReport& r) {
  std::ostringstream os;
  auto g = [](std::uint64_t x) { return static_cast<double>(x) / 1e9; };
  auto m = [](std::uint64_t x) { return static_cast<double>(x) / 1e6; };
  os << "architecture: " << r.name << "\n";
  os << "convention:   1 MAC = 1 FLOP\n\n";
  os << std::fixed;
  os << std::left << std::setw(10) << "stage" << std::right << std::setw(12) << "GFLOPs" << std::setw(9) << "share"
     << std::setw(12) << "Mparams" << std::setw(9) << "share" << "\n";
  auto row = [&](const char* label, std::uint64_t f, double ff, std::uint64_t p, double pf) {
    os << std::left << std::setw(10) << label << std::right << std::setprecision(4) << std::setw(12) << g(f)
       << std::setprecision(1) << std::setw(8) << 100.0 * ff << "%" << std::setprecision(4) << std::setw(12) << m(p)
       << std::setprecision(1) << std::setw(8) << 100.0 * pf << "%\n";
  };
  row("I", r.stage1_flops, r.stage1_flop_fraction(), r.stage1_params, r.stage1_param_fraction());
  row("II", r.stage2_flops, r.stage2_flop_fraction(), r.stage2_params, r.stage2_param_fraction());
  if (r.positional_params) os << "positional tables: " << std::setprecision(4) << m(r.positional_params) << " M (not in totals)\n";
  if (r.whole_model) {
    os << "whole model: " << std::setprecision(3) << g(r.total_flops()) << " GFLOPs, " << m(r.total_params())
       << " M params\n";
  }
  os << "\n" << std::left << std::setw(24) << "layer" << std::setw(16) << "kind" << std::setw(8) << "module"
     << std::right << std::setw(8) << "repeat" << std::setw(14) << "MFLOPs I" << std::setw(14) << "MFLOPs II"
     << std::setw(12) << "Kparams" << "\n";
  for (const LayerCost& c : r.layers) {
    os << std::left << std::setw(24) << c.name << std::setw(16) << to_string(c.kind) << std::setw(8)
       << (c.module ? "yes" : "no") << std::right << std::setw(8) << c.repeat << std::setprecision(2) << std::setw(14)
       << static_cast<double>(c.stage1_flops) / 1e6 << std::setw(14) << static_cast<double>(c.stage2_flops) / 1e6
       << std::setw(12) << static_cast<double>(c.params()) / 1e3 << "\n";
  }
  return os.str();
}

}  // namespace acmix
