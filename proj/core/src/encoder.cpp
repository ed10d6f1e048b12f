#include "xmixup/encoder.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace xmixup {

std::string to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::classification: return "classification";
    case TaskKind::structured: return "structured";
    case TaskKind::span: return "span";
  }
  return "unknown";
}

TaskKind task_kind_from_string(const std::string& s) {
  if (s == "classification") return TaskKind::classification;
  if (s == "structured") return TaskKind::structured;
  if (s == "span") return TaskKind::span;
  throw std::invalid_argument("unknown task kind: " + s);
}

void EncoderConfig::validate() const {
  if (num_layers < 1) throw std::invalid_argument("encoder: num_layers must be >= 1");
  if (d_model < 2) throw std::invalid_argument("encoder: d_model must be >= 2");
  if (num_heads < 1 || d_model % num_heads != 0) {
    throw std::invalid_argument("encoder: num_heads must divide d_model");
  }
  if (ffn_dim < 1) throw std::invalid_argument("encoder: ffn_dim must be >= 1");
  if (vocab_size < 2) throw std::invalid_argument("encoder: vocab_size must be >= 2");
  if (max_len < 1) throw std::invalid_argument("encoder: max_len must be >= 1");
}

const Tensor& ModelParams::at(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw std::out_of_range("unknown parameter: " + name);
  return it->second;
}

namespace {

std::string layer_key(int layer, const char* suffix) { return "layer" + std::to_string(layer) + "." + suffix; }

Tensor glorot(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Tensor t = Tensor::matrix(fan_in, fan_out);
  for (auto& v : t.storage()) v = dist(rng);
  return t;
}

Tensor uniform(std::size_t rows, std::size_t cols, double limit, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-limit, limit);
  Tensor t = Tensor::matrix(rows, cols);
  for (auto& v : t.storage()) v = dist(rng);
  return t;
}

int head_width(TaskKind task, int num_labels) {
  switch (task) {
    case TaskKind::classification:
    case TaskKind::structured: return num_labels;
    case TaskKind::span: return 2;
  }
  return num_labels;
}

}  // namespace

ModelParams init_model(const EncoderConfig& config, TaskKind task, int num_labels, std::uint64_t seed) {
  config.validate();
  if (num_labels < 2 && task != TaskKind::span) throw std::invalid_argument("init_model: need at least two labels");
  ModelParams m;
  m.config = config;
  m.task = task;
  m.num_labels = num_labels;
  std::mt19937_64 rng(seed);
  const auto d = static_cast<std::size_t>(config.d_model);
  const auto f = static_cast<std::size_t>(config.ffn_dim);
  auto& t = m.tensors;
  t["embed.token"] = uniform(static_cast<std::size_t>(config.vocab_size), d, 0.1, rng);
  t["embed.position"] = uniform(static_cast<std::size_t>(config.max_len), d, 0.1, rng);
  for (int l = 1; l <= config.num_layers; ++l) {
    t[layer_key(l, "attn.wq")] = glorot(d, d, rng);
    t[layer_key(l, "attn.wk")] = glorot(d, d, rng);
    t[layer_key(l, "attn.wv")] = glorot(d, d, rng);
    t[layer_key(l, "attn.wo")] = glorot(d, d, rng);
    t[layer_key(l, "ln1.gain")] = Tensor({d}, 1.0);
    t[layer_key(l, "ln1.bias")] = Tensor({d}, 0.0);
    t[layer_key(l, "ffn.w1")] = glorot(d, f, rng);
    t[layer_key(l, "ffn.b1")] = Tensor({f}, 0.0);
    t[layer_key(l, "ffn.w2")] = glorot(f, d, rng);
    t[layer_key(l, "ffn.b2")] = Tensor({d}, 0.0);
    t[layer_key(l, "ln2.gain")] = Tensor({d}, 1.0);
    t[layer_key(l, "ln2.bias")] = Tensor({d}, 0.0);
  }
  t["mix.ln.gain"] = Tensor({d}, 1.0);
  t["mix.ln.bias"] = Tensor({d}, 0.0);
  t["mix.ratio.w"] = Tensor({1}, 0.0);
  t["mix.ratio.b"] = Tensor({1}, 0.0);
  const auto width = static_cast<std::size_t>(head_width(task, num_labels));
  t["head.w"] = glorot(d, width, rng);
  t["head.b"] = Tensor({width}, 0.0);
  return m;
}

BoundParams::BoundParams(Tape& tape, const ModelParams& model, bool trainable) : tape_(&tape), model_(&model) {
  for (const auto& [name, value] : model.tensors) {
    vars_.emplace(name, trainable ? tape.param(name, value) : tape.constant(value));
  }
}

Var BoundParams::operator[](const std::string& name) const {
  auto it = vars_.find(name);
  if (it == vars_.end()) throw std::out_of_range("parameter not bound: " + name);
  return it->second;
}

AttentionParams attention_params(const BoundParams& p, int layer) {
  return AttentionParams{p[layer_key(layer, "attn.wq")], p[layer_key(layer, "attn.wk")],
                         p[layer_key(layer, "attn.wv")], p[layer_key(layer, "attn.wo")], p.config().num_heads};
}

Var multi_head_attention(Var q, Var k, Var v, const AttentionParams& params, std::span<const std::uint8_t> key_mask) {
  const std::size_t d_model = params.wq.rows();
  if (q.cols() != d_model || k.cols() != d_model || v.cols() != d_model) {
    throw std::invalid_argument("multi_head_attention: inputs must have d_model columns");
  }
  if (k.rows() != v.rows()) throw std::invalid_argument("multi_head_attention: keys and values differ in length");
  if (params.num_heads < 1 || d_model % static_cast<std::size_t>(params.num_heads) != 0) {
    throw std::invalid_argument("multi_head_attention: num_heads must divide d_model");
  }
  if (!key_mask.empty()) {
    bool any = false;
    for (auto m : key_mask) any = any || m != 0;
    if (!any) throw std::invalid_argument("multi_head_attention: no attendable key position");
  }
  const auto heads = static_cast<std::size_t>(params.num_heads);
  const std::size_t dh = d_model / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  Var qp = matmul(q, params.wq);
  Var kp = matmul(k, params.wk);
  Var vp = matmul(v, params.wv);
  std::vector<Var> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    Var qh = heads == 1 ? qp : slice_cols(qp, h * dh, dh);
    Var kh = heads == 1 ? kp : slice_cols(kp, h * dh, dh);
    Var vh = heads == 1 ? vp : slice_cols(vp, h * dh, dh);
    Var scores = scale(matmul(qh, transpose(kh)), inv_sqrt);
    Var weights = softmax_rows(scores, key_mask);
    outs.push_back(matmul(weights, vh));
  }
  Var cat = heads == 1 ? outs[0] : concat_cols(outs);
  return matmul(cat, params.wo);
}

Mask padding_mask(std::span<const int> tokens) {
  Mask m(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) m[i] = tokens[i] == kPadId ? 0 : 1;
  return m;
}

namespace {

std::vector<int> positions(std::size_t n) {
  std::vector<int> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = static_cast<int>(i);
  return p;
}

}  // namespace

Var embed_tokens(const BoundParams& p, std::span<const int> tokens) {
  const auto& cfg = p.config();
  if (tokens.empty()) throw std::invalid_argument("encode: empty token sequence");
  if (tokens.size() > static_cast<std::size_t>(cfg.max_len)) {
    throw std::invalid_argument("encode: sequence length " + std::to_string(tokens.size()) + " exceeds max_len " +
                                std::to_string(cfg.max_len));
  }
  for (int id : tokens) {
    if (id < 0 || id >= cfg.vocab_size) throw std::out_of_range("encode: out-of-vocabulary token id " + std::to_string(id));
  }
  bool any = false;
  for (int id : tokens) any = any || id != kPadId;
  if (!any) throw std::invalid_argument("encode: sequence has no unmasked position");
  const auto pos = positions(tokens.size());
  return add(embed(p["embed.token"], tokens), embed(p["embed.position"], pos));
}

AttentionSublayer attention_sublayer(const BoundParams& p, int layer, Var h, std::span<const std::uint8_t> mask) {
  Var residual = add(h, multi_head_attention(h, h, h, attention_params(p, layer), mask));
  Var out = layer_norm(residual, p[layer_key(layer, "ln1.gain")], p[layer_key(layer, "ln1.bias")]);
  return {residual, out};
}

Var feed_forward_sublayer(const BoundParams& p, int layer, Var a) {
  Var hidden = gelu(add_row(matmul(a, p[layer_key(layer, "ffn.w1")]), p[layer_key(layer, "ffn.b1")]));
  Var ff = add_row(matmul(hidden, p[layer_key(layer, "ffn.w2")]), p[layer_key(layer, "ffn.b2")]);
  return layer_norm(add(a, ff), p[layer_key(layer, "ln2.gain")], p[layer_key(layer, "ln2.bias")]);
}

HiddenStates encode_single(const BoundParams& p, std::span<const int> tokens) {
  HiddenStates hs;
  Var h = embed_tokens(p, tokens);
  hs.mask = padding_mask(tokens);
  hs.layers.push_back(h);
  hs.attention_residual.push_back(Var{});
  hs.attention_output.push_back(Var{});
  for (int l = 1; l <= p.config().num_layers; ++l) {
    const auto att = attention_sublayer(p, l, h, hs.mask);
    h = feed_forward_sublayer(p, l, att.output);
    hs.attention_residual.push_back(att.residual);
    hs.attention_output.push_back(att.output);
    hs.layers.push_back(h);
  }
  return hs;
}

Var sequence_representation(const HiddenStates& h) { return masked_mean_rows(h.last(), h.mask); }

Var classification_probs(const BoundParams& p, Var representation) {
  return softmax_rows(add_row(matmul(representation, p["head.w"]), p["head.b"]));
}

Var token_probs(const BoundParams& p, const HiddenStates& h) {
  return softmax_rows(add_row(matmul(h.last(), p["head.w"]), p["head.b"]));
}

Var span_probs(const BoundParams& p, const HiddenStates& h) {
  Var logits = transpose(add_row(matmul(h.last(), p["head.w"]), p["head.b"]));
  return softmax_rows(logits, h.mask);
}

}  // namespace xmixup
