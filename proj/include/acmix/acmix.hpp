#pragma once

// ACmix: one shared Stage I of three 1x1 projections feeding a self-attention path
// and a convolution path (light FC + shift/group-conv aggregation), mixed as
// alpha * F_att + beta * F_conv.

#include <cmath>
#include <cstddef>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "acmix/attention.hpp"
#include "acmix/conv_decomp.hpp"
#include "acmix/ops.hpp"
#include "acmix/tensor.hpp"

namespace acmix {

/// How the two path outputs are combined (ablation rows of the combination study).
enum class MixMode {
  alpha_beta,        ///< alpha * att + beta * conv, both learned
  alpha_one,         ///< alpha * att + conv, beta frozen at 1
  alpha_complement,  ///< alpha * att + (1 - alpha) * conv
  fixed_one_one,     ///< att + conv, nothing learned
};

inline const char* to_string(MixMode m) {
  switch (m) {
    case MixMode::alpha_beta: return "alpha-beta";
    case MixMode::alpha_one: return "alpha-one";
    case MixMode::alpha_complement: return "alpha-complement";
    case MixMode::fixed_one_one: return "one-one";
  }
  return "?";
}

inline MixMode parse_mix_mode(const std::string& s) {
  if (s == "alpha-beta") return MixMode::alpha_beta;
  if (s == "alpha-one") return MixMode::alpha_one;
  if (s == "alpha-complement") return MixMode::alpha_complement;
  if (s == "one-one") return MixMode::fixed_one_one;
  throw std::invalid_argument("unknown mix mode '" + s + "'");
}

struct ACmixConfig {
  std::size_t in_channels = 4;
  std::size_t out_channels = 8;
  std::size_t heads = 2;
  std::size_t attn_kernel = 3;  ///< k_a
  std::size_t conv_kernel = 3;  ///< k_c
  AttentionKind attention = AttentionKind::local;
  BorderMode border = BorderMode::truncate;
  bool positional_encoding = false;
  MixMode mix = MixMode::alpha_beta;

  std::size_t head_dim() const { return out_channels / heads; }

  AttentionMode attention_mode() const {
    AttentionMode m;
    m.kind = attention;
    m.field = attn_kernel;
    m.border = border;
    return m;
  }

  void validate() const {
    if (in_channels == 0 || out_channels == 0) throw std::invalid_argument("channel counts must be positive");
    if (heads == 0 || out_channels % heads != 0) {
      throw std::invalid_argument("heads (" + std::to_string(heads) + ") must divide C_out (" +
                                  std::to_string(out_channels) + ")");
    }
    if (attn_kernel % 2 == 0 || conv_kernel % 2 == 0) throw std::invalid_argument("k_a and k_c must be odd");
    if (positional_encoding && attention == AttentionKind::patchwise) {
      throw std::invalid_argument("patchwise attention takes no positional encoding");
    }
    attention_mode().validate();
  }
};

struct ACmixParams {
  Matrix w_q, w_k, w_v;     ///< (C_out x C_in) each
  std::vector<Matrix> fc;   ///< one (k_c^2 x 3) matrix per head; columns mix (q, k, v)
  ShiftKernelBank bank;     ///< k_c^2 groups of C_out per-channel k_c x k_c kernels
  double alpha = 1.0;
  double beta = 1.0;
  std::optional<RelPosTable> pos;
  std::vector<PatchwisePhi> phi;

  /// Random projections and FC, one-hot bank, alpha = beta = 1, zero positional table.
  static ACmixParams init(const ACmixConfig& cfg, std::mt19937_64& rng, BankInit bank_init = BankInit::learnable_shift) {
    cfg.validate();
    ACmixParams p;
    const double s = 1.0 / std::sqrt(static_cast<double>(cfg.in_channels));
    p.w_q = random_matrix(cfg.out_channels, cfg.in_channels, rng, -s, s);
    p.w_k = random_matrix(cfg.out_channels, cfg.in_channels, rng, -s, s);
    p.w_v = random_matrix(cfg.out_channels, cfg.in_channels, rng, -s, s);
    const std::size_t taps = cfg.conv_kernel * cfg.conv_kernel;
    for (std::size_t l = 0; l < cfg.heads; ++l) p.fc.push_back(random_matrix(taps, 3, rng, -0.5, 0.5));
    p.bank = bank_init == BankInit::learnable_random ? ShiftKernelBank::random(cfg.conv_kernel, cfg.out_channels, rng)
                                                      : ShiftKernelBank::one_hot(cfg.conv_kernel, cfg.out_channels, bank_init);
    if (cfg.positional_encoding) p.pos = RelPosTable(cfg.heads, cfg.attn_kernel - 1);
    if (cfg.attention == AttentionKind::patchwise)
      for (std::size_t l = 0; l < cfg.heads; ++l)
        p.phi.push_back(PatchwisePhi::random(cfg.head_dim(), cfg.attn_kernel * cfg.attn_kernel, rng));
    return p;
  }

  void validate(const ACmixConfig& cfg) const {
    cfg.validate();
    for (const Matrix* m : {&w_q, &w_k, &w_v})
      if (m->rows() != cfg.out_channels || m->cols() != cfg.in_channels)
        throw ShapeError("projection weights must be C_out x C_in");
    const std::size_t taps = cfg.conv_kernel * cfg.conv_kernel;
    if (fc.size() != cfg.heads) throw ShapeError("one FC matrix per head required");
    for (const Matrix& m : fc)
      if (m.rows() != taps || m.cols() != 3) throw ShapeError("FC matrices must be k_c^2 x 3");
    if (bank.k() != cfg.conv_kernel || bank.channels() != cfg.out_channels) throw ShapeError("kernel bank does not match config");
    if (cfg.positional_encoding != pos.has_value()) throw ShapeError("positional table presence does not match config");
    if (pos && pos->heads() != cfg.heads) throw ShapeError("positional table head count mismatch");
    if (cfg.attention == AttentionKind::patchwise && phi.size() != cfg.heads) throw ShapeError("one phi per head required");
  }

  /// Effective (alpha, beta) applied to the two paths.
  std::pair<double, double> mix(MixMode mode) const {
    switch (mode) {
      case MixMode::alpha_beta: return {alpha, beta};
      case MixMode::alpha_one: return {alpha, 1.0};
      case MixMode::alpha_complement: return {alpha, 1.0 - alpha};
      case MixMode::fixed_one_one: return {1.0, 1.0};
    }
    return {alpha, beta};
  }
};

/// The 3N intermediate feature maps: q/k/v pieces per head, each (batch, head_dim, H, W).
struct Intermediates {
  std::vector<Tensor> q, k, v;
};

/// Stage I: three 1x1 projections, each split into N contiguous channel blocks.
inline Intermediates stage1_project(const Tensor& input, const ACmixParams& params, const ACmixConfig& cfg) {
  params.validate(cfg);
  if (input.channels() != cfg.in_channels) {
    throw ShapeError("ACmix input has " + std::to_string(input.channels()) + " channels, config expects " +
                     std::to_string(cfg.in_channels));
  }
  const Tensor q = pointwise_conv(input, params.w_q);
  const Tensor k = pointwise_conv(input, params.w_k);
  const Tensor v = pointwise_conv(input, params.w_v);
  const std::size_t d = cfg.head_dim();
  Intermediates out;
  for (std::size_t l = 0; l < cfg.heads; ++l) {
    out.q.push_back(slice_channels(q, l * d, d));
    out.k.push_back(slice_channels(k, l * d, d));
    out.v.push_back(slice_channels(v, l * d, d));
  }
  return out;
}

namespace detail {

inline void check_intermediates(const Intermediates& x, const ACmixConfig& cfg) {
  if (x.q.size() != cfg.heads || x.k.size() != cfg.heads || x.v.size() != cfg.heads) {
    throw ShapeError("expected " + std::to_string(cfg.heads) + " q/k/v pieces");
  }
  const Shape s = x.q.front().shape();
  if (s.channels != cfg.head_dim()) throw ShapeError("pieces must carry head_dim channels");
  for (std::size_t l = 0; l < cfg.heads; ++l)
    if (x.q[l].shape() != s || x.k[l].shape() != s || x.v[l].shape() != s) throw ShapeError("q/k/v pieces differ in shape");
}

}  // namespace detail

/// Self-attention path: each head's (q, k, v) pieces through Stage II, heads concatenated.
inline Tensor attention_path(const Intermediates& x, const ACmixParams& params, const ACmixConfig& cfg) {
  detail::check_intermediates(x, cfg);
  const AttentionMode mode = cfg.attention_mode();
  std::vector<Tensor> heads;
  for (std::size_t l = 0; l < cfg.heads; ++l) {
    heads.push_back(attend(x.q[l], x.k[l], x.v[l], mode, params.pos ? &*params.pos : nullptr, l,
                           cfg.attention == AttentionKind::patchwise ? &params.phi[l] : nullptr));
  }
  return concat_channels(heads);
}

/// The k_c^2 feature maps (C_out channels each) produced by the per-head FC layers.
/// Map `tap`, channel l*d + c, pixel (i, j) = fc_l[tap] . (q_l, k_l, v_l)[c, i, j].
inline std::vector<Tensor> conv_path_features(const Intermediates& x, const ACmixParams& params, const ACmixConfig& cfg) {
  detail::check_intermediates(x, cfg);
  const Shape s = x.q.front().shape();
  const std::size_t d = cfg.head_dim(), taps = cfg.conv_kernel * cfg.conv_kernel, P = s.plane();
  std::vector<Tensor> maps(taps, Tensor({s.batch, cfg.out_channels, s.height, s.width}));
  for (std::size_t n = 0; n < s.batch; ++n)
    for (std::size_t l = 0; l < cfg.heads; ++l)
      for (std::size_t c = 0; c < d; ++c) {
        auto qs = x.q[l].plane(n, c), ks = x.k[l].plane(n, c), vs = x.v[l].plane(n, c);
        for (std::size_t t = 0; t < taps; ++t) {
          const double a = params.fc[l](t, 0), b = params.fc[l](t, 1), e = params.fc[l](t, 2);
          auto dst = maps[t].plane(n, l * d + c);
          for (std::size_t u = 0; u < P; ++u) dst[u] = a * qs[u] + b * ks[u] + e * vs[u];
        }
      }
  return maps;
}

/// Convolution path: FC-generated k_c^2 maps aggregated by the shift/group-conv bank.
inline Tensor conv_path(const Intermediates& x, const ACmixParams& params, const ACmixConfig& cfg) {
  const auto maps = conv_path_features(x, params, cfg);
  return shift_sum_group_conv(maps, params.bank);
}

struct ACmixOutputs {
  Tensor attention;
  Tensor conv;
  Tensor out;
};

inline ACmixOutputs acmix_forward_parts(const Tensor& input, const ACmixParams& params, const ACmixConfig& cfg) {
  const Intermediates x = stage1_project(input, params, cfg);
  ACmixOutputs o{attention_path(x, params, cfg), conv_path(x, params, cfg), {}};
  const auto [a, b] = params.mix(cfg.mix);
  o.out = Tensor(o.attention.shape());
  auto dst = o.out.data();
  auto att = o.attention.data();
  auto conv = o.conv.data();
  for (std::size_t t = 0; t < dst.size(); ++t) dst[t] = a * att[t] + b * conv[t];
  return o;
}

inline Tensor acmix_forward(const Tensor& input, const ACmixParams& params, const ACmixConfig& cfg) {
  return acmix_forward_parts(input, params, cfg).out;
}

struct ACmixGrads {
  Tensor input;
  Matrix w_q, w_k, w_v;
  std::vector<Matrix> fc;
  std::vector<double> bank;  ///< layout of ShiftKernelBank::data()
  std::vector<double> pos;   ///< layout of RelPosTable::data(); empty without a table
  std::vector<Matrix> phi_hidden, phi_output;
  double alpha = 0.0;
  double beta = 0.0;
};

/// Analytic gradients of <upstream, acmix_forward(input, params, cfg)>.
inline ACmixGrads acmix_backward(const Tensor& input, const ACmixParams& params, const ACmixConfig& cfg,
                                 const Tensor& upstream) {
  const Intermediates x = stage1_project(input, params, cfg);
  const Tensor att = attention_path(x, params, cfg);
  const auto maps = conv_path_features(x, params, cfg);
  const Tensor conv = shift_sum_group_conv(maps, params.bank);
  if (upstream.shape() != att.shape()) {
    throw ShapeError("upstream gradient " + upstream.shape().str() + " does not match output " + att.shape().str());
  }

  ACmixGrads g;
  const auto [a, b] = params.mix(cfg.mix);
  const double g_att = dot(upstream, att), g_conv = dot(upstream, conv);
  switch (cfg.mix) {
    case MixMode::alpha_beta: g.alpha = g_att; g.beta = g_conv; break;
    case MixMode::alpha_one: g.alpha = g_att; break;
    case MixMode::alpha_complement: g.alpha = g_att - g_conv; break;
    case MixMode::fixed_one_one: break;
  }

  const std::size_t d = cfg.head_dim(), taps = cfg.conv_kernel * cfg.conv_kernel;
  const Shape piece = x.q.front().shape();
  std::vector<Tensor> dq(cfg.heads, Tensor(piece)), dk(cfg.heads, Tensor(piece)), dv(cfg.heads, Tensor(piece));

  // Attention path.
  const AttentionMode mode = cfg.attention_mode();
  if (params.pos) g.pos.assign(params.pos->size(), 0.0);
  for (std::size_t l = 0; l < cfg.heads; ++l) {
    Tensor up = a * slice_channels(upstream, l * d, d);
    const PatchwisePhi* phi = cfg.attention == AttentionKind::patchwise ? &params.phi[l] : nullptr;
    AttendGrads hg = attend_backward(x.q[l], x.k[l], x.v[l], mode, params.pos ? &*params.pos : nullptr, l, phi, up);
    dq[l] += hg.q;
    dk[l] += hg.k;
    dv[l] += hg.v;
    if (params.pos)
      for (std::size_t t = 0; t < hg.pos.size(); ++t) g.pos[l * params.pos->per_head() + t] += hg.pos[t];
    if (phi) {
      g.phi_hidden.push_back(std::move(hg.phi_hidden));
      g.phi_output.push_back(std::move(hg.phi_output));
    }
  }

  // Convolution path.
  const Tensor up_conv = b * upstream;
  GroupConvGrads cg = shift_sum_group_conv_backward(maps, params.bank, up_conv);
  g.bank = std::move(cg.bank);
  g.fc.assign(cfg.heads, Matrix(taps, 3));
  const std::size_t P = piece.plane();
  for (std::size_t n = 0; n < piece.batch; ++n)
    for (std::size_t l = 0; l < cfg.heads; ++l)
      for (std::size_t c = 0; c < d; ++c) {
        auto qs = x.q[l].plane(n, c), ks = x.k[l].plane(n, c), vs = x.v[l].plane(n, c);
        auto dqs = dq[l].plane(n, c), dks = dk[l].plane(n, c), dvs = dv[l].plane(n, c);
        for (std::size_t t = 0; t < taps; ++t) {
          auto gm = cg.features[t].plane(n, l * d + c);
          double sq = 0.0, sk = 0.0, sv = 0.0;
          const double fa = params.fc[l](t, 0), fb = params.fc[l](t, 1), fe = params.fc[l](t, 2);
          for (std::size_t u = 0; u < P; ++u) {
            sq += gm[u] * qs[u];
            sk += gm[u] * ks[u];
            sv += gm[u] * vs[u];
            dqs[u] += fa * gm[u];
            dks[u] += fb * gm[u];
            dvs[u] += fe * gm[u];
          }
          g.fc[l](t, 0) += sq;
          g.fc[l](t, 1) += sk;
          g.fc[l](t, 2) += sv;
        }
      }

  // Shared Stage I.
  const Tensor dQ = concat_channels(dq), dK = concat_channels(dk), dV = concat_channels(dv);
  g.w_q = pointwise_conv_backward_weight(input, dQ);
  g.w_k = pointwise_conv_backward_weight(input, dK);
  g.w_v = pointwise_conv_backward_weight(input, dV);
  g.input = pointwise_conv_backward_input(params.w_q, dQ);
  g.input += pointwise_conv_backward_input(params.w_k, dK);
  g.input += pointwise_conv_backward_input(params.w_v, dV);
  return g;
}

/// Stored weight counts split by stage; positional tables are tallied separately.
struct ParamCount {
  std::size_t stage1 = 0;
  std::size_t stage2 = 0;
  std::size_t positional = 0;

  std::size_t total() const { return stage1 + stage2; }
};

inline ParamCount count_params_live(const ConvKernel& kernel) { return {kernel.size(), 0, 0}; }

inline ParamCount count_params_live(const AttentionParams& params) {
  ParamCount c{params.w_q.size() + params.w_k.size() + params.w_v.size(), 0, params.pos ? params.pos->size() : 0};
  for (const PatchwisePhi& phi : params.phi) c.stage2 += phi.hidden.size() + phi.output.size();
  return c;
}

inline ParamCount count_params_live(const ACmixParams& params) {
  ParamCount c{params.w_q.size() + params.w_k.size() + params.w_v.size(), 0, params.pos ? params.pos->size() : 0};
  for (const Matrix& m : params.fc) c.stage2 += m.size();
  c.stage2 += params.bank.size();
  for (const PatchwisePhi& phi : params.phi) c.stage2 += phi.hidden.size() + phi.output.size();
  return c;
}

}  // namespace acmix
