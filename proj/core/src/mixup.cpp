#include "xmixup/mixup.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace xmixup {

void MixupConfig::validate(const EncoderConfig& encoder) const {
  if (!(lambda0 > 0.0 && lambda0 <= 1.0)) throw std::invalid_argument("mixup: lambda0 must lie in (0, 1]");
  if (mix_layer && (*mix_layer < 1 || *mix_layer > encoder.num_layers)) {
    throw std::invalid_argument("mixup: mix_layer " + std::to_string(*mix_layer) + " outside [1, " +
                                std::to_string(encoder.num_layers) + "]");
  }
  if (!(schedule_k >= 1.0)) throw std::invalid_argument("mixup: schedule_k must be >= 1");
  if (n_scale && !(*n_scale > 0.0)) throw std::invalid_argument("mixup: n_scale must be positive");
  if (fixed_lambda && !(*fixed_lambda >= 0.0 && *fixed_lambda <= 1.0)) {
    throw std::invalid_argument("mixup: fixed lambda must lie in [0, 1]");
  }
}

Var cross_attention(Var target, Var source, const AttentionParams& params, std::span<const std::uint8_t> source_mask) {
  if (source.rows() == 0) throw std::invalid_argument("cross_attention: empty source sequence");
  return multi_head_attention(target, source, source, params, source_mask);
}

namespace {

std::size_t count_valid(std::span<const std::uint8_t> mask, std::size_t n) {
  if (mask.empty()) return n;
  std::size_t c = 0;
  for (auto m : mask) c += m ? 1 : 0;
  return c;
}

bool valid_at(std::span<const std::uint8_t> mask, std::size_t i) { return mask.empty() || mask[i] != 0; }

// -(1/valid rows) sum over valid rows of sum_j a log a; a = 0 contributes 0.
double mean_row_entropy(const Tensor& a, std::span<const std::uint8_t> row_mask) {
  const std::size_t rows = a.rows(), cols = a.cols();
  const std::size_t valid = count_valid(row_mask, rows);
  double total = 0.0;
  for (std::size_t i = 0; i < rows; ++i) {
    if (!valid_at(row_mask, i)) continue;
    for (std::size_t j = 0; j < cols; ++j) {
      const double v = a[i * cols + j];
      if (v > 0.0) total += v * std::log(v);
    }
  }
  return -total / static_cast<double>(valid);
}

Tensor scaled_scores(const Tensor& q, const Tensor& k, double n_scale) {
  const std::size_t I = q.rows(), J = k.rows(), d = q.cols();
  const double inv = 1.0 / std::sqrt(n_scale);
  Tensor s = Tensor::matrix(I, J);
  for (std::size_t i = 0; i < I; ++i) {
    for (std::size_t j = 0; j < J; ++j) {
      double dot = 0.0;
      for (std::size_t c = 0; c < d; ++c) dot += q[i * d + c] * k[j * d + c];
      s[i * J + j] = dot * inv;
    }
  }
  return s;
}

void check_entropy_inputs(std::size_t t_rows, std::size_t t_cols, std::size_t s_rows, std::size_t s_cols,
                          std::span<const std::uint8_t> tmask, std::span<const std::uint8_t> smask, double n_scale) {
  if (!(n_scale > 0.0)) throw std::invalid_argument("attention_entropy: n_scale must be positive");
  if (t_cols != s_cols) throw std::invalid_argument("attention_entropy: hidden sizes differ");
  if (!tmask.empty() && tmask.size() != t_rows) throw std::invalid_argument("attention_entropy: target mask length");
  if (!smask.empty() && smask.size() != s_rows) throw std::invalid_argument("attention_entropy: source mask length");
  if (count_valid(tmask, t_rows) == 0 || count_valid(smask, s_rows) == 0) {
    throw std::invalid_argument("attention_entropy: no unmasked rows");
  }
}

}  // namespace

AttentionStats attention_entropy(const Tensor& target, const Tensor& source, std::span<const std::uint8_t> target_mask,
                                 std::span<const std::uint8_t> source_mask, double n_scale) {
  check_entropy_inputs(target.rows(), target.cols(), source.rows(), source.cols(), target_mask, source_mask, n_scale);
  AttentionStats stats;
  stats.weights = softmax_rows(scaled_scores(target, source, n_scale), source_mask);
  stats.entropy_forward = mean_row_entropy(stats.weights, target_mask);
  const Tensor reverse = softmax_rows(scaled_scores(source, target, n_scale), target_mask);
  stats.entropy_backward = mean_row_entropy(reverse, source_mask);
  return stats;
}

namespace {

Var directional_entropy(Var query, Var key, std::span<const std::uint8_t> query_mask,
                        std::span<const std::uint8_t> key_mask, double n_scale) {
  Tape& tape = *query.tape;
  Var scores = scale(matmul(query, transpose(key)), 1.0 / std::sqrt(n_scale));
  Var a = softmax_rows(scores, key_mask);
  const std::size_t rows = a.rows(), cols = a.cols();
  Tensor row_weight = Tensor::matrix(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    const double w = valid_at(query_mask, i) ? 1.0 : 0.0;
    for (std::size_t j = 0; j < cols; ++j) row_weight[i * cols + j] = w;
  }
  Var plogp = mul(a, log_clamped(a, std::numeric_limits<double>::min()));
  Var total = sum(mul(plogp, tape.constant(std::move(row_weight))));
  return scale(total, -1.0 / static_cast<double>(count_valid(query_mask, rows)));
}

}  // namespace

TapedEntropy attention_entropy(Var target, Var source, std::span<const std::uint8_t> target_mask,
                               std::span<const std::uint8_t> source_mask, double n_scale) {
  check_entropy_inputs(target.rows(), target.cols(), source.rows(), source.cols(), target_mask, source_mask, n_scale);
  return TapedEntropy{directional_entropy(target, source, target_mask, source_mask, n_scale),
                      directional_entropy(source, target, source_mask, target_mask, n_scale)};
}

double mixup_ratio(const AttentionStats& stats, double w, double b, double lambda0) {
  const double z = (stats.entropy_forward + stats.entropy_backward) * w + b;
  if (!std::isfinite(z)) throw std::invalid_argument("mixup_ratio: non-finite input");
  const double s = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  return lambda0 * s;
}

Var mixup_ratio(const TapedEntropy& stats, Var w, Var b, double lambda0) {
  Var z = add(mul(add(stats.forward, stats.backward), w), b);
  if (!z.value().all_finite()) throw std::invalid_argument("mixup_ratio: non-finite input");
  return scale(sigmoid(z), lambda0);
}

Tensor manifold_mix(const Tensor& target, const Tensor& cross, double lambda, const Tensor& gain, const Tensor& bias) {
  if (target.rows() != cross.rows() || target.cols() != cross.cols()) {
    throw std::invalid_argument("manifold_mix: shape mismatch");
  }
  Tensor mixed(target.shape(), 0.0);
  for (std::size_t i = 0; i < mixed.size(); ++i) mixed[i] = lambda * cross[i] + (1.0 - lambda) * target[i];
  return layer_norm(mixed, gain, bias);
}

Var manifold_mix(Var target, Var cross, Var lambda, Var gain, Var bias) {
  if (target.rows() != cross.rows() || target.cols() != cross.cols()) {
    throw std::invalid_argument("manifold_mix: shape mismatch");
  }
  Var keep = affine(lambda, -1.0, 1.0);
  return layer_norm(add(scale_by(cross, lambda), scale_by(target, keep)), gain, bias);
}

double sampling_threshold(long step, double k) {
  if (step < 0) throw std::invalid_argument("sampling_threshold: negative step");
  if (!(k >= 1.0)) throw std::invalid_argument("sampling_threshold: k must be >= 1");
  return k / (k + std::exp(static_cast<double>(step) / k));
}

const std::vector<int>& sample_source(const ParallelExample& example, double p_star, double u) {
  if (u <= p_star) return example.src;
  if (!example.bt_src) throw std::invalid_argument("sample_source: back-translated source missing");
  return *example.bt_src;
}

PairEncoding encode_pair(const BoundParams& p, std::span<const int> src, std::span<const int> tgt,
                         const MixupConfig& mix) {
  const auto& cfg = p.config();
  mix.validate(cfg);
  PairEncoding out;
  if (!mix.mix_layer) {
    out.source = encode_single(p, src);
    out.target = encode_single(p, tgt);
    return out;
  }
  const int mix_layer = *mix.mix_layer;
  const double n_scale = mix.n_scale.value_or(static_cast<double>(cfg.d_model));

  HiddenStates& s = out.source;
  HiddenStates& t = out.target;
  Var hs = embed_tokens(p, src);
  Var ht = embed_tokens(p, tgt);
  s.mask = padding_mask(src);
  t.mask = padding_mask(tgt);
  for (HiddenStates* h : {&s, &t}) {
    h->attention_residual.push_back(Var{});
    h->attention_output.push_back(Var{});
  }
  s.layers.push_back(hs);
  t.layers.push_back(ht);

  for (int l = 1; l <= cfg.num_layers; ++l) {
    const auto s_att = attention_sublayer(p, l, hs, s.mask);
    const auto t_att = attention_sublayer(p, l, ht, t.mask);
    Var t_out = t_att.output;
    if (l == mix_layer) {
      Var cross = cross_attention(t_att.output, s_att.output, attention_params(p, l), s.mask);
      Var lambda;
      if (mix.fixed_lambda) {
        lambda = p.tape().constant(Tensor::scalar(*mix.fixed_lambda));
      } else {
        out.entropy = attention_entropy(t_att.output, s_att.output, t.mask, s.mask, n_scale);
        lambda = mixup_ratio(*out.entropy, p["mix.ratio.w"], p["mix.ratio.b"], mix.lambda0);
      }
      t_out = manifold_mix(t_att.output, cross, lambda, p["mix.ln.gain"], p["mix.ln.bias"]);
      out.lambda = lambda;
      out.cross = cross;
    }
    hs = feed_forward_sublayer(p, l, s_att.output);
    ht = feed_forward_sublayer(p, l, t_out);
    s.attention_residual.push_back(s_att.residual);
    s.attention_output.push_back(s_att.output);
    s.layers.push_back(hs);
    t.attention_residual.push_back(t_att.residual);
    t.attention_output.push_back(t_out);
    t.layers.push_back(ht);
  }
  return out;
}

}  // namespace xmixup
