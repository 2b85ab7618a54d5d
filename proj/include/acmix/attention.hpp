#pragma once

// Multi-head self-attention split into Stage I (1x1 projections) and Stage II
// (attention weights + weighted aggregation), with local, patchwise, window and
// global weight variants and an optional relative positional bias.

#include <cmath>
#include <cstddef>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "acmix/ops.hpp"
#include "acmix/tensor.hpp"

namespace acmix {

enum class AttentionKind {
  local,      ///< softmax over the k_a x k_a neighbourhood
  patchwise,  ///< phi([q, keys...]) over the k_a x k_a neighbourhood, no softmax
  window,     ///< softmax over the non-overlapping k_a x k_a window holding the query
  global,     ///< softmax over the whole feature map
};

/// How local attention treats neighbours that fall outside the map.
enum class BorderMode {
  truncate,     ///< drop them; softmax renormalises over in-bounds keys
  padded_keys,  ///< keep them as zero keys with zero values
};

struct AttentionMode {
  AttentionKind kind = AttentionKind::local;
  std::size_t field = 3;  ///< k_a: neighbourhood or window extent
  BorderMode border = BorderMode::truncate;
  // Window partition origin; windows start at rows origin + m * field (edge windows truncated).
  std::size_t window_row_origin = 0;
  std::size_t window_col_origin = 0;

  bool softmax() const { return kind != AttentionKind::patchwise; }

  void validate() const {
    if (field == 0) throw std::invalid_argument("attention field must be positive");
    if ((kind == AttentionKind::local || kind == AttentionKind::patchwise) && field % 2 == 0) {
      throw std::invalid_argument("local/patchwise attention field must be odd, got " + std::to_string(field));
    }
  }
};

inline const char* to_string(AttentionKind kind) {
  switch (kind) {
    case AttentionKind::local: return "local";
    case AttentionKind::patchwise: return "patchwise";
    case AttentionKind::window: return "window";
    case AttentionKind::global: return "global";
  }
  return "?";
}

inline AttentionKind parse_attention_kind(const std::string& s) {
  if (s == "local") return AttentionKind::local;
  if (s == "patchwise") return AttentionKind::patchwise;
  if (s == "window") return AttentionKind::window;
  if (s == "global") return AttentionKind::global;
  throw std::invalid_argument("unknown attention kind '" + s + "'");
}

inline const char* to_string(BorderMode b) { return b == BorderMode::truncate ? "truncate" : "padded-keys"; }

inline BorderMode parse_border(const std::string& s) {
  if (s == "truncate") return BorderMode::truncate;
  if (s == "padded-keys") return BorderMode::padded_keys;
  throw std::invalid_argument("unknown border mode '" + s + "'");
}

/// Learnable per-head biases indexed by the key-minus-query offset (di, dj) in [-reach, reach]^2.
class RelPosTable {
 public:
  RelPosTable() = default;
  RelPosTable(std::size_t heads, std::size_t reach)
      : heads_(heads), reach_(reach), data_(heads * (2 * reach + 1) * (2 * reach + 1), 0.0) {}
  RelPosTable(std::size_t heads, std::size_t reach, std::vector<double> data)
      : heads_(heads), reach_(reach), data_(std::move(data)) {
    if (data_.size() != heads_ * per_head()) throw ShapeError("positional table data length mismatch");
  }

  std::size_t heads() const { return heads_; }
  std::size_t reach() const { return reach_; }
  std::size_t span() const { return 2 * reach_ + 1; }
  std::size_t per_head() const { return span() * span(); }
  std::size_t size() const { return data_.size(); }

  bool covers(std::ptrdiff_t di, std::ptrdiff_t dj) const {
    const auto r = static_cast<std::ptrdiff_t>(reach_);
    return di >= -r && di <= r && dj >= -r && dj <= r;
  }

  std::size_t offset_index(std::ptrdiff_t di, std::ptrdiff_t dj) const {
    if (!covers(di, dj)) {
      throw std::out_of_range("relative offset (" + std::to_string(di) + ", " + std::to_string(dj) +
                              ") outside table reach " + std::to_string(reach_));
    }
    const auto r = static_cast<std::ptrdiff_t>(reach_);
    return static_cast<std::size_t>((di + r) * static_cast<std::ptrdiff_t>(span()) + (dj + r));
  }

  double operator()(std::size_t head, std::ptrdiff_t di, std::ptrdiff_t dj) const {
    return data_[head * per_head() + offset_index(di, dj)];
  }
  double& operator()(std::size_t head, std::ptrdiff_t di, std::ptrdiff_t dj) {
    return data_[head * per_head() + offset_index(di, dj)];
  }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::span<const double> head(std::size_t l) const {
    return std::span<const double>(data_).subspan(l * per_head(), per_head());
  }

 private:
  std::size_t heads_ = 0;
  std::size_t reach_ = 0;
  std::vector<double> data_;
};

/// Patchwise weight function phi for one head: F outputs from the concatenation
/// [q, k_1, ..., k_F] (length d * (F + 1)) through linear -> ReLU -> linear.
/// The hidden width equals the field size F.
struct PatchwisePhi {
  Matrix hidden;  // F x d(F + 1)
  Matrix output;  // F x F

  std::size_t field_size() const { return output.rows(); }

  static PatchwisePhi random(std::size_t head_dim, std::size_t field_size, std::mt19937_64& rng) {
    const double s1 = 1.0 / std::sqrt(static_cast<double>(head_dim * (field_size + 1)));
    const double s2 = 1.0 / std::sqrt(static_cast<double>(field_size));
    return {random_matrix(field_size, head_dim * (field_size + 1), rng, -s1, s1),
            random_matrix(field_size, field_size, rng, -s2, s2)};
  }
};

struct AttentionParams {
  std::size_t heads = 1;
  Matrix w_q;  ///< (C_out x C_in); head l owns rows [l*d, (l+1)*d)
  Matrix w_k;
  Matrix w_v;
  std::optional<RelPosTable> pos;
  std::vector<PatchwisePhi> phi;  ///< one per head, patchwise mode only

  std::size_t in_channels() const { return w_q.cols(); }
  std::size_t out_channels() const { return w_q.rows(); }
  std::size_t head_dim() const { return heads == 0 ? 0 : out_channels() / heads; }

  void validate() const {
    if (heads == 0 || out_channels() % heads != 0) {
      throw ShapeError("heads (" + std::to_string(heads) + ") must divide output channels (" +
                       std::to_string(out_channels()) + ")");
    }
    for (const Matrix* m : {&w_k, &w_v})
      if (m->rows() != w_q.rows() || m->cols() != w_q.cols()) throw ShapeError("q/k/v projections differ in shape");
    if (pos && pos->heads() != heads) throw ShapeError("positional table head count mismatch");
    if (!all_finite(w_q.data()) || !all_finite(w_k.data()) || !all_finite(w_v.data()))
      throw std::invalid_argument("non-finite projection weights");
  }

  static AttentionParams random(std::size_t c_in, std::size_t c_out, std::size_t heads, std::mt19937_64& rng) {
    const double s = 1.0 / std::sqrt(static_cast<double>(c_in));
    AttentionParams p;
    p.heads = heads;
    p.w_q = random_matrix(c_out, c_in, rng, -s, s);
    p.w_k = random_matrix(c_out, c_in, rng, -s, s);
    p.w_v = random_matrix(c_out, c_in, rng, -s, s);
    p.validate();
    return p;
  }
};

/// One position of a query's receptive field.
struct FieldEntry {
  std::ptrdiff_t row;
  std::ptrdiff_t col;
  bool inside;  ///< false for padded positions (zero key, zero value)
};

namespace detail {

inline std::ptrdiff_t floor_div(std::ptrdiff_t a, std::ptrdiff_t b) {
  std::ptrdiff_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

}  // namespace detail

/// The key positions attended by query (i, j), in row-major order.
inline std::vector<FieldEntry> attention_field(const AttentionMode& mode, std::size_t H, std::size_t W,
                                               std::size_t i, std::size_t j) {
  const auto h = static_cast<std::ptrdiff_t>(H), w = static_cast<std::ptrdiff_t>(W);
  const auto qi = static_cast<std::ptrdiff_t>(i), qj = static_cast<std::ptrdiff_t>(j);
  const auto f = static_cast<std::ptrdiff_t>(mode.field);
  std::vector<FieldEntry> field;
  switch (mode.kind) {
    case AttentionKind::local:
    case AttentionKind::patchwise: {
      const bool keep_outside = mode.kind == AttentionKind::patchwise || mode.border == BorderMode::padded_keys;
      const std::ptrdiff_t r = f / 2;
      for (std::ptrdiff_t a = qi - r; a <= qi + r; ++a)
        for (std::ptrdiff_t b = qj - r; b <= qj + r; ++b) {
          const bool inside = a >= 0 && a < h && b >= 0 && b < w;
          if (inside || keep_outside) field.push_back({a, b, inside});
        }
      break;
    }
    case AttentionKind::window: {
      const auto ro = static_cast<std::ptrdiff_t>(mode.window_row_origin);
      const auto co = static_cast<std::ptrdiff_t>(mode.window_col_origin);
      const std::ptrdiff_t wr = detail::floor_div(qi - ro, f), wc = detail::floor_div(qj - co, f);
      const std::ptrdiff_t r0 = std::max<std::ptrdiff_t>(0, ro + wr * f), r1 = std::min(h, ro + (wr + 1) * f);
      const std::ptrdiff_t c0 = std::max<std::ptrdiff_t>(0, co + wc * f), c1 = std::min(w, co + (wc + 1) * f);
      for (std::ptrdiff_t a = r0; a < r1; ++a)
        for (std::ptrdiff_t b = c0; b < c1; ++b) field.push_back({a, b, true});
      break;
    }
    case AttentionKind::global:
      for (std::ptrdiff_t a = 0; a < h; ++a)
        for (std::ptrdiff_t b = 0; b < w; ++b) field.push_back({a, b, true});
      break;
  }
  return field;
}

namespace detail {

struct PhiActivations {
  std::vector<double> input;   // [q, k_1..k_F]
  std::vector<double> hidden;  // pre-activation
  std::vector<double> weights;
};

inline PhiActivations phi_forward(const PatchwisePhi& phi, std::span<const double> query,
                                  std::span<const double> keys) {
  PhiActivations act;
  act.input.reserve(query.size() + keys.size());
  act.input.insert(act.input.end(), query.begin(), query.end());
  act.input.insert(act.input.end(), keys.begin(), keys.end());
  if (act.input.size() != phi.hidden.cols()) {
    throw ShapeError("patchwise phi expects input length " + std::to_string(phi.hidden.cols()) + ", got " +
                     std::to_string(act.input.size()));
  }
  const std::size_t F = phi.field_size();
  act.hidden.assign(F, 0.0);
  for (std::size_t h = 0; h < F; ++h) {
    double acc = 0.0;
    for (std::size_t t = 0; t < act.input.size(); ++t) acc += phi.hidden(h, t) * act.input[t];
    act.hidden[h] = acc;
  }
  act.weights.assign(F, 0.0);
  for (std::size_t m = 0; m < F; ++m) {
    double acc = 0.0;
    for (std::size_t h = 0; h < F; ++h) acc += phi.output(m, h) * std::max(0.0, act.hidden[h]);
    act.weights[m] = acc;
  }
  return act;
}

}  // namespace detail

/// Attention weights of one query over its field.
/// `keys` is row-major (count x d); `pos_bias` holds one bias per key (empty = none).
/// Softmax modes evaluate softmax((q.k + B) / sqrt(d)); patchwise evaluates phi([q, keys]).
inline std::vector<double> attention_weights(std::span<const double> query, std::span<const double> keys,
                                             const AttentionMode& mode, std::span<const double> pos_bias = {},
                                             const PatchwisePhi* phi = nullptr) {
  const std::size_t d = query.size();
  if (d == 0 || keys.empty()) throw std::invalid_argument("attention over an empty field");
  if (keys.size() % d != 0) throw ShapeError("key block is not a multiple of the query dimension");
  const std::size_t count = keys.size() / d;
  if (!pos_bias.empty() && pos_bias.size() != count) throw ShapeError("one positional bias per key required");

  if (!mode.softmax()) {
    if (phi == nullptr) throw std::invalid_argument("patchwise attention requires phi weights");
    if (!pos_bias.empty()) throw std::invalid_argument("patchwise attention takes no positional bias");
    if (phi->field_size() != count) throw ShapeError("phi field size does not match key count");
    return detail::phi_forward(*phi, query, keys).weights;
  }

  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<double> logits(count);
  for (std::size_t m = 0; m < count; ++m) {
    double acc = 0.0;
    for (std::size_t t = 0; t < d; ++t) acc += query[t] * keys[m * d + t];
    logits[m] = (acc + (pos_bias.empty() ? 0.0 : pos_bias[m])) * scale;
  }
  return softmax_over_set(logits);
}

namespace detail {

struct QueryContext {
  std::vector<FieldEntry> field;
  std::vector<double> query;
  std::vector<double> keys;
  std::vector<double> bias;
};

inline void gather_query(QueryContext& ctx, const Tensor& q, const Tensor& k, const AttentionMode& mode,
                         const RelPosTable* pos, std::size_t head, std::size_t n, std::size_t i, std::size_t j) {
  const std::size_t d = q.channels();
  ctx.field = attention_field(mode, q.height(), q.width(), i, j);
  ctx.query.resize(d);
  for (std::size_t t = 0; t < d; ++t) ctx.query[t] = q(n, t, i, j);
  ctx.keys.assign(ctx.field.size() * d, 0.0);
  ctx.bias.clear();
  for (std::size_t m = 0; m < ctx.field.size(); ++m) {
    const FieldEntry& e = ctx.field[m];
    if (e.inside)
      for (std::size_t t = 0; t < d; ++t)
        ctx.keys[m * d + t] = k(n, t, static_cast<std::size_t>(e.row), static_cast<std::size_t>(e.col));
    if (pos) {
      ctx.bias.push_back((*pos)(head, e.row - static_cast<std::ptrdiff_t>(i),
                                e.col - static_cast<std::ptrdiff_t>(j)));
    }
  }
}

inline void check_head_inputs(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionMode& mode,
                              const RelPosTable* pos, std::size_t head, const PatchwisePhi* phi) {
  mode.validate();
  if (q.shape() != k.shape() || q.shape() != v.shape()) {
    throw ShapeError("q/k/v shapes differ: " + q.shape().str() + ", " + k.shape().str() + ", " + v.shape().str());
  }
  if (mode.kind == AttentionKind::patchwise) {
    if (phi == nullptr) throw std::invalid_argument("patchwise attention requires phi weights");
    if (phi->field_size() != mode.field * mode.field) throw ShapeError("phi field size does not match k_a^2");
    if (phi->hidden.cols() != q.channels() * (mode.field * mode.field + 1))
      throw ShapeError("phi input width does not match head dimension");
  }
  if (pos) {
    if (mode.kind == AttentionKind::patchwise) throw std::invalid_argument("patchwise attention takes no positional bias");
    if (head >= pos->heads()) throw ShapeError("positional table has no entry for head " + std::to_string(head));
    std::size_t need = 0;
    if (mode.kind == AttentionKind::local) need = mode.field / 2;
    if (mode.kind == AttentionKind::window) need = std::min(mode.field, std::max(q.height(), q.width())) - 1;
    if (mode.kind == AttentionKind::global) need = std::max(q.height(), q.width()) - 1;
    if (pos->reach() < need) {
      throw ShapeError("positional table reach " + std::to_string(pos->reach()) + " below required " +
                       std::to_string(need));
    }
  }
}

}  // namespace detail

/// Stage II for one head: out(i, j) = sum over field of A(q_ij, k_ab) v_ab.
inline Tensor attend(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionMode& mode,
                     const RelPosTable* pos = nullptr, std::size_t head = 0, const PatchwisePhi* phi = nullptr) {
  detail::check_head_inputs(q, k, v, mode, pos, head, phi);
  const std::size_t d = q.channels();
  Tensor out(v.shape());
  detail::QueryContext ctx;
  for (std::size_t n = 0; n < q.batch(); ++n)
    for (std::size_t i = 0; i < q.height(); ++i)
      for (std::size_t j = 0; j < q.width(); ++j) {
        detail::gather_query(ctx, q, k, mode, pos, head, n, i, j);
        const auto w = attention_weights(ctx.query, ctx.keys, mode, ctx.bias, phi);
        for (std::size_t t = 0; t < d; ++t) {
          double acc = 0.0;
          for (std::size_t m = 0; m < ctx.field.size(); ++m) {
            const FieldEntry& e = ctx.field[m];
            if (e.inside) acc += w[m] * v(n, t, static_cast<std::size_t>(e.row), static_cast<std::size_t>(e.col));
          }
          out(n, t, i, j) = acc;
        }
      }
  return out;
}

struct AttendGrads {
  Tensor q, k, v;
  std::vector<double> pos;  ///< this head's slice of the positional table (empty if none)
  Matrix phi_hidden, phi_output;
};

/// Gradients of <upstream, attend(q, k, v, ...)>.
inline AttendGrads attend_backward(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionMode& mode,
                                   const RelPosTable* pos, std::size_t head, const PatchwisePhi* phi,
                                   const Tensor& upstream) {
  detail::check_head_inputs(q, k, v, mode, pos, head, phi);
  if (upstream.shape() != v.shape()) throw ShapeError("attend backward: upstream " + upstream.shape().str());
  const std::size_t d = q.channels();
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  AttendGrads g{Tensor(q.shape()), Tensor(k.shape()), Tensor(v.shape()), {}, {}, {}};
  if (pos) g.pos.assign(pos->per_head(), 0.0);
  if (phi) {
    g.phi_hidden = Matrix(phi->hidden.rows(), phi->hidden.cols());
    g.phi_output = Matrix(phi->output.rows(), phi->output.cols());
  }

  detail::QueryContext ctx;
  std::vector<double> dw, dz, up(d);
  for (std::size_t n = 0; n < q.batch(); ++n)
    for (std::size_t i = 0; i < q.height(); ++i)
      for (std::size_t j = 0; j < q.width(); ++j) {
        detail::gather_query(ctx, q, k, mode, pos, head, n, i, j);
        const std::size_t F = ctx.field.size();
        for (std::size_t t = 0; t < d; ++t) up[t] = upstream(n, t, i, j);

        std::vector<double> w;
        detail::PhiActivations act;
        if (mode.softmax()) {
          w = attention_weights(ctx.query, ctx.keys, mode, ctx.bias, phi);
        } else {
          act = detail::phi_forward(*phi, ctx.query, ctx.keys);
          w = act.weights;
        }

        // Aggregation: out = sum_m w_m v_m.
        dw.assign(F, 0.0);
        for (std::size_t m = 0; m < F; ++m) {
          const FieldEntry& e = ctx.field[m];
          if (!e.inside) continue;
          const auto a = static_cast<std::size_t>(e.row), b = static_cast<std::size_t>(e.col);
          double acc = 0.0;
          for (std::size_t t = 0; t < d; ++t) {
            g.v(n, t, a, b) += w[m] * up[t];
            acc += up[t] * v(n, t, a, b);
          }
          dw[m] = acc;
        }

        if (mode.softmax()) {
          double mean = 0.0;
          for (std::size_t m = 0; m < F; ++m) mean += w[m] * dw[m];
          dz.assign(F, 0.0);
          for (std::size_t m = 0; m < F; ++m) dz[m] = w[m] * (dw[m] - mean) * scale;
          for (std::size_t m = 0; m < F; ++m) {
            const FieldEntry& e = ctx.field[m];
            for (std::size_t t = 0; t < d; ++t) g.q(n, t, i, j) += dz[m] * ctx.keys[m * d + t];
            if (e.inside) {
              const auto a = static_cast<std::size_t>(e.row), b = static_cast<std::size_t>(e.col);
              for (std::size_t t = 0; t < d; ++t) g.k(n, t, a, b) += dz[m] * ctx.query[t];
            }
            if (pos) {
              g.pos[pos->offset_index(e.row - static_cast<std::ptrdiff_t>(i),
                                      e.col - static_cast<std::ptrdiff_t>(j))] += dz[m];
            }
          }
        } else {
          // w = W2 relu(h), h = W1 x.
          std::vector<double> dh(F, 0.0);
          for (std::size_t m = 0; m < F; ++m)
            for (std::size_t hh = 0; hh < F; ++hh) {
              g.phi_output(m, hh) += dw[m] * std::max(0.0, act.hidden[hh]);
              if (act.hidden[hh] > 0.0) dh[hh] += phi->output(m, hh) * dw[m];
            }
          std::vector<double> dx(act.input.size(), 0.0);
          for (std::size_t hh = 0; hh < F; ++hh) {
            if (dh[hh] == 0.0) continue;
            for (std::size_t t = 0; t < act.input.size(); ++t) {
              g.phi_hidden(hh, t) += dh[hh] * act.input[t];
              dx[t] += phi->hidden(hh, t) * dh[hh];
            }
          }
          for (std::size_t t = 0; t < d; ++t) g.q(n, t, i, j) += dx[t];
          for (std::size_t m = 0; m < F; ++m) {
            const FieldEntry& e = ctx.field[m];
            if (!e.inside) continue;
            const auto a = static_cast<std::size_t>(e.row), b = static_cast<std::size_t>(e.col);
            for (std::size_t t = 0; t < d; ++t) g.k(n, t, a, b) += dx[(m + 1) * d + t];
          }
        }
      }
  return g;
}

/// Stage I: per-head queries, keys and values, each (batch, head_dim, H, W).
struct HeadProjections {
  std::vector<Tensor> q, k, v;
};

inline HeadProjections project_qkv(const Tensor& input, const AttentionParams& params) {
  params.validate();
  if (input.channels() != params.in_channels()) {
    throw ShapeError("project_qkv: input has " + std::to_string(input.channels()) + " channels, projections expect " +
                     std::to_string(params.in_channels()));
  }
  const std::size_t d = params.head_dim();
  HeadProjections out;
  for (std::size_t l = 0; l < params.heads; ++l) {
    out.q.push_back(pointwise_conv(input, params.w_q.row_block(l * d, d)));
    out.k.push_back(pointwise_conv(input, params.w_k.row_block(l * d, d)));
    out.v.push_back(pointwise_conv(input, params.w_v.row_block(l * d, d)));
  }
  return out;
}

/// Full multi-head self-attention: Stage I projections, per-head Stage II, head concatenation.
inline Tensor attention_aggregate(const Tensor& input, const AttentionParams& params, const AttentionMode& mode) {
  const HeadProjections qkv = project_qkv(input, params);
  if (mode.kind == AttentionKind::patchwise && params.phi.size() != params.heads) {
    throw std::invalid_argument("patchwise attention requires one phi per head");
  }
  std::vector<Tensor> heads;
  for (std::size_t l = 0; l < params.heads; ++l) {
    heads.push_back(attend(qkv.q[l], qkv.k[l], qkv.v[l], mode, params.pos ? &*params.pos : nullptr, l,
                           mode.kind == AttentionKind::patchwise ? &params.phi[l] : nullptr));
  }
  return concat_channels(heads);
}

}  // namespace acmix
