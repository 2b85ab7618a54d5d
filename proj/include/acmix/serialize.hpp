#pragma once

// JSON forms of tensors and ACmix checkpoints. Layouts are documented in docs/formats.md.

#include <cstddef>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "acmix/acmix.hpp"
#include "acmix/tensor.hpp"

namespace acmix {

using json = nlohmann::json;

inline constexpr const char* kTensorFormat = "acmix.tensor";
inline constexpr const char* kCheckpointFormat = "acmix.checkpoint";

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline json tensor_to_json(const Tensor& t) {
  const Shape& s = t.shape();
  return {{"format", kTensorFormat},
          {"version", 1},
          {"shape", {s.batch, s.channels, s.height, s.width}},
          {"data", std::vector<double>(t.data().begin(), t.data().end())}};
}

inline Tensor tensor_from_json(const json& j) {
  if (j.value("format", "") != kTensorFormat) throw FormatError("not an acmix.tensor document");
  const auto dims = j.at("shape").get<std::vector<std::size_t>>();
  if (dims.size() != 4) throw FormatError("tensor shape must have 4 entries");
  return Tensor({dims[0], dims[1], dims[2], dims[3]}, j.at("data").get<std::vector<double>>());
}

namespace detail {

inline json array_json(std::vector<std::size_t> shape, std::span<const double> data) {
  return {{"shape", std::move(shape)}, {"data", std::vector<double>(data.begin(), data.end())}};
}

inline std::vector<double> array_data(const json& arrays, const std::string& name, std::size_t expected) {
  if (!arrays.contains(name)) throw FormatError("checkpoint is missing array '" + name + "'");
  auto data = arrays.at(name).at("data").get<std::vector<double>>();
  if (data.size() != expected) {
    throw FormatError("array '" + name + "' has " + std::to_string(data.size()) + " values, expected " +
                      std::to_string(expected));
  }
  return data;
}

inline const char* to_string(BankInit b) {
  switch (b) {
    case BankInit::fixed_shift: return "fixed-shift";
    case BankInit::learnable_shift: return "learnable-shift";
    case BankInit::learnable_random: return "learnable-random";
  }
  return "?";
}

inline BankInit parse_bank_init(const std::string& s) {
  if (s == "fixed-shift") return BankInit::fixed_shift;
  if (s == "learnable-shift") return BankInit::learnable_shift;
  if (s == "learnable-random") return BankInit::learnable_random;
  throw FormatError("unknown bank init '" + s + "'");
}

}  // namespace detail

inline json config_to_json(const ACmixConfig& c) {
  return {{"in_channels", c.in_channels},
          {"out_channels", c.out_channels},
          {"heads", c.heads},
          {"attn_kernel", c.attn_kernel},
          {"conv_kernel", c.conv_kernel},
          {"attention", to_string(c.attention)},
          {"border", to_string(c.border)},
          {"positional_encoding", c.positional_encoding},
          {"mix", to_string(c.mix)}};
}

inline ACmixConfig config_from_json(const json& j) {
  ACmixConfig c;
  c.in_channels = j.at("in_channels").get<std::size_t>();
  c.out_channels = j.at("out_channels").get<std::size_t>();
  c.heads = j.at("heads").get<std::size_t>();
  c.attn_kernel = j.at("attn_kernel").get<std::size_t>();
  c.conv_kernel = j.at("conv_kernel").get<std::size_t>();
  c.attention = parse_attention_kind(j.at("attention").get<std::string>());
  c.border = parse_border(j.at("border").get<std::string>());
  c.positional_encoding = j.at("positional_encoding").get<bool>();
  c.mix = parse_mix_mode(j.at("mix").get<std::string>());
  c.validate();
  return c;
}

inline json checkpoint_to_json(const ACmixConfig& cfg, const ACmixParams& p) {
  p.validate(cfg);
  const std::size_t k = cfg.conv_kernel;
  json arrays;
  arrays["w_q"] = detail::array_json({p.w_q.rows(), p.w_q.cols()}, p.w_q.data());
  arrays["w_k"] = detail::array_json({p.w_k.rows(), p.w_k.cols()}, p.w_k.data());
  arrays["w_v"] = detail::array_json({p.w_v.rows(), p.w_v.cols()}, p.w_v.data());
  for (std::size_t l = 0; l < p.fc.size(); ++l)
    arrays["fc." + std::to_string(l)] = detail::array_json({p.fc[l].rows(), 3}, p.fc[l].data());
  arrays["bank"] = detail::array_json({k * k, cfg.out_channels, k, k}, p.bank.data());
  if (p.pos) arrays["pos"] = detail::array_json({p.pos->heads(), p.pos->span(), p.pos->span()}, p.pos->data());
  for (std::size_t l = 0; l < p.phi.size(); ++l) {
    arrays["phi." + std::to_string(l) + ".hidden"] =
        detail::array_json({p.phi[l].hidden.rows(), p.phi[l].hidden.cols()}, p.phi[l].hidden.data());
    arrays["phi." + std::to_string(l) + ".output"] =
        detail::array_json({p.phi[l].output.rows(), p.phi[l].output.cols()}, p.phi[l].output.data());
  }
  return {{"format", kCheckpointFormat},
          {"version", 1},
          {"config", config_to_json(cfg)},
          {"scalars", {{"alpha", p.alpha}, {"beta", p.beta}}},
          {"bank_init", detail::to_string(p.bank.init())},
          {"arrays", arrays}};
}

struct Checkpoint {
  ACmixConfig config;
  ACmixParams params;
};

inline Checkpoint checkpoint_from_json(const json& j) {
  if (j.value("format", "") != kCheckpointFormat) throw FormatError("not an acmix.checkpoint document");
  Checkpoint ck;
  ck.config = config_from_json(j.at("config"));
  const ACmixConfig& c = ck.config;
  const json& arrays = j.at("arrays");
  ACmixParams& p = ck.params;
  p.w_q = Matrix(c.out_channels, c.in_channels, detail::array_data(arrays, "w_q", c.out_channels * c.in_channels));
  p.w_k = Matrix(c.out_channels, c.in_channels, detail::array_data(arrays, "w_k", c.out_channels * c.in_channels));
  p.w_v = Matrix(c.out_channels, c.in_channels, detail::array_data(arrays, "w_v", c.out_channels * c.in_channels));
  const std::size_t taps = c.conv_kernel * c.conv_kernel;
  for (std::size_t l = 0; l < c.heads; ++l)
    p.fc.emplace_back(taps, 3, detail::array_data(arrays, "fc." + std::to_string(l), taps * 3));
  p.bank = ShiftKernelBank(c.conv_kernel, c.out_channels, detail::parse_bank_init(j.at("bank_init").get<std::string>()),
                           detail::array_data(arrays, "bank", taps * c.out_channels * taps));
  if (c.positional_encoding) {
    const auto& dims = arrays.at("pos").at("shape");
    const std::size_t span = dims.at(1).get<std::size_t>();
    if (span % 2 == 0) throw FormatError("positional table span must be odd");
    p.pos = RelPosTable(c.heads, span / 2, detail::array_data(arrays, "pos", c.heads * span * span));
  }
  if (c.attention == AttentionKind::patchwise) {
    const std::size_t F = c.attn_kernel * c.attn_kernel, d = c.head_dim();
    for (std::size_t l = 0; l < c.heads; ++l) {
      const std::string base = "phi." + std::to_string(l);
      p.phi.push_back({Matrix(F, d * (F + 1), detail::array_data(arrays, base + ".hidden", F * d * (F + 1))),
                       Matrix(F, F, detail::array_data(arrays, base + ".output", F * F))});
    }
  }
  p.alpha = j.at("scalars").at("alpha").get<double>();
  p.beta = j.at("scalars").at("beta").get<double>();
  p.validate(c);
  return ck;
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return json::parse(in);
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

}  // namespace acmix
