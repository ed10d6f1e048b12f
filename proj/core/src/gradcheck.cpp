#include "xmixup/gradcheck.hpp"

#include <functional>
#include <random>

#include "xmixup/autodiff.hpp"
#include "xmixup/encoder.hpp"
#include "xmixup/mixup.hpp"
#include "xmixup/objectives.hpp"
#include "xmixup/pipeline.hpp"

namespace xmixup {

namespace {

using Bindings = std::map<std::string, Var>;
using Builder = std::function<Var(Tape&, const Bindings&)>;

class Rand {
 public:
  explicit Rand(std::uint64_t seed) : rng_(seed) {}
  Tensor matrix(std::size_t r, std::size_t c, double scale = 1.0) {
    std::normal_distribution<double> n(0.0, scale);
    Tensor t = Tensor::matrix(r, c);
    for (double& v : t.storage()) v = n(rng_);
    return t;
  }
  Tensor probs(std::size_t r, std::size_t c) { return softmax_rows(matrix(r, c)); }

 private:
  std::mt19937_64 rng_;
};

double eval_loss(const ParamMap& theta, const Builder& build) {
  Tape tape;
  Bindings vars;
  for (const auto& [name, t] : theta) vars.emplace(name, tape.param(name, t));
  return build(tape, vars).item();
}

double check(const ParamMap& theta, const Builder& build) {
  Tape tape;
  Bindings vars;
  for (const auto& [name, t] : theta) vars.emplace(name, tape.param(name, t));
  const ParamMap analytic = backward(tape, build(tape, vars));
  const ParamMap numeric = finite_diff_grad([&](const ParamMap& th) { return eval_loss(th, build); }, theta);
  return max_relative_error(analytic, numeric);
}

// Weighted sum so every output entry carries a distinct gradient.
Var weighted(Tape& tape, Var out, const Tensor& w) { return sum(mul(out, tape.constant(w))); }

double model_check(const ModelParams& base, const std::function<Var(const BoundParams&)>& objective) {
  const auto f = [&](const ParamMap& theta) {
    ModelParams m = base;
    m.tensors = theta;
    Tape tape;
    BoundParams p(tape, m, false);
    return objective(p).item();
  };
  Tape tape;
  BoundParams p(tape, base, true);
  const ParamMap analytic = backward(tape, objective(p));
  return max_relative_error(analytic, finite_diff_grad(f, base.tensors));
}

ParallelExample tiny_example(TaskKind task, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> word(1, 11);
  ParallelExample ex;
  ex.src = {word(rng), word(rng), word(rng), word(rng), 0};
  ex.tgt = {word(rng), word(rng), word(rng), word(rng)};
  ex.bt_src = std::vector<int>{word(rng), word(rng), word(rng)};
  ex.tgt_to_src = {0, 1, 2, 3};
  ex.tgt_to_bt = {0, 1, -1, 2};
  switch (task) {
    case TaskKind::classification:
      ex.label = 2;
      ex.tgt_label = 2;
      ex.bt_label = 2;
      break;
    case TaskKind::structured:
      ex.label = std::vector<int>{1, 0, 0, 1, -1};
      ex.tgt_label = std::vector<int>{1, 0, -1, 1};
      ex.bt_label = std::vector<int>{1, 0, 1};
      break;
    case TaskKind::span:
      ex.label = Span{1, 3};
      ex.tgt_label = Span{0, 2};
      ex.bt_label = Span{1, 2};
      break;
  }
  return ex;
}

}  // namespace

std::vector<GradcheckCase> run_gradcheck(std::uint64_t seed) {
  Rand r(seed);
  std::vector<GradcheckCase> out;
  const Mask src_mask{1, 1, 1, 0};

  {
    const ParamMap theta{{"q", r.matrix(3, 8)},          {"kv", r.matrix(4, 8)},
                         {"wq", r.matrix(8, 8, 0.4)},    {"wk", r.matrix(8, 8, 0.4)},
                         {"wv", r.matrix(8, 8, 0.4)},    {"wo", r.matrix(8, 8, 0.4)}};
    const Tensor w = r.matrix(3, 8);
    out.push_back({"multi_head_attention", check(theta, [&](Tape& t, const Bindings& v) {
                     AttentionParams ap{v.at("wq"), v.at("wk"), v.at("wv"), v.at("wo"), 2};
                     return weighted(t, multi_head_attention(v.at("q"), v.at("kv"), v.at("kv"), ap, src_mask), w);
                   })});
    out.push_back({"cross_attention", check(theta, [&](Tape& t, const Bindings& v) {
                     AttentionParams ap{v.at("wq"), v.at("wk"), v.at("wv"), v.at("wo"), 4};
                     return weighted(t, cross_attention(v.at("q"), v.at("kv"), ap, src_mask), w);
                   })});
  }
  {
    const ParamMap theta{{"h", r.matrix(3, 6)}, {"gain", r.matrix(1, 6)}, {"bias", r.matrix(1, 6)}};
    const Tensor w = r.matrix(3, 6);
    out.push_back({"layer_norm", check(theta, [&](Tape& t, const Bindings& v) {
                     return weighted(t, layer_norm(v.at("h"), v.at("gain"), v.at("bias")), w);
                   })});
  }
  {
    const ParamMap theta{{"ht", r.matrix(3, 8, 0.5)}, {"hs", r.matrix(4, 8, 0.5)}, {"w", r.matrix(1, 1)},
                         {"b", r.matrix(1, 1)}};
    const Mask tgt_mask{1, 1, 1};
    out.push_back({"attention_entropy", check(theta, [&](Tape&, const Bindings& v) {
                     const auto e = attention_entropy(v.at("ht"), v.at("hs"), tgt_mask, src_mask, 8.0);
                     return add(e.forward, scale(e.backward, 0.7));
                   })});
    out.push_back({"mixup_ratio", check(theta, [&](Tape&, const Bindings& v) {
                     const auto e = attention_entropy(v.at("ht"), v.at("hs"), tgt_mask, src_mask, 8.0);
                     return mixup_ratio(e, v.at("w"), v.at("b"), 0.5);
                   })});
  }
  {
    const ParamMap theta{{"ht", r.matrix(3, 6)}, {"hc", r.matrix(3, 6)}, {"lambda", Tensor::scalar(0.3)},
                         {"gain", r.matrix(1, 6)}, {"bias", r.matrix(1, 6)}};
    const Tensor w = r.matrix(3, 6);
    out.push_back({"manifold_mix", check(theta, [&](Tape& t, const Bindings& v) {
                     return weighted(t, manifold_mix(v.at("ht"), v.at("hc"), v.at("lambda"), v.at("gain"), v.at("bias")),
                                     w);
                   })});
  }
  {
    const ParamMap theta{{"zs", r.matrix(1, 3)}, {"zt", r.matrix(1, 3)}, {"rs", r.matrix(1, 5)}, {"rt", r.matrix(1, 5)},
                         {"tok", r.matrix(4, 2)}};
    const Tensor y = Tensor::matrix(1, 3, {0.0, 1.0, 0.0});
    const Tensor soft = r.probs(4, 2);
    const Mask tok_mask{1, 0, 1, 1};
    out.push_back({"classification_loss", check(theta, [&](Tape&, const Bindings& v) {
                     return classification_loss(softmax_rows(v.at("zs")), y);
                   })});
    out.push_back({"token_level_loss", check(theta, [&](Tape&, const Bindings& v) {
                     return token_level_loss(softmax_rows(v.at("tok")), soft, tok_mask);
                   })});
    out.push_back({"mse_loss", check(theta, [&](Tape&, const Bindings& v) { return mse_loss(v.at("rs"), v.at("rt")); })});
    out.push_back({"kl_divergence", check(theta, [&](Tape&, const Bindings& v) {
                     return kl_divergence(softmax_rows(v.at("zs")), softmax_rows(v.at("zt")));
                   })});
    out.push_back({"total_loss", check(theta, [&](Tape&, const Bindings& v) {
                     Var ps = softmax_rows(v.at("zs"));
                     Var pt = softmax_rows(v.at("zt"));
                     TapedLossParts parts{classification_loss(ps, y), classification_loss(pt, y),
                                          mse_loss(v.at("rs"), v.at("rt")), kl_divergence(ps, pt)};
                     return total_loss(parts, 0.4);
                   })});
  }

  // Full objective on a tiny model. The structured objective is excluded on
  // purpose: its target-stream pseudo-labels are a stop-gradient, which finite
  // differences cannot see.
  EncoderConfig enc{1, 8, 2, 8, 12, 6};
  std::mt19937_64 rng(seed);
  for (const TaskKind task : {TaskKind::classification, TaskKind::span}) {
    const ModelParams base = init_model(enc, task, task == TaskKind::span ? 2 : 3, seed);
    ModelParams model = base;
    // Nonzero gate so the quality path carries gradient.
    model.tensors.at("mix.ratio.w")[0] = 0.3;
    model.tensors.at("mix.ratio.b")[0] = -0.2;
    TrainConfig cfg = TrainConfig::defaults_for(task);
    cfg.encoder = enc;
    cfg.mix_layer = 1;
    const ParallelExample ex = tiny_example(task, rng);
    out.push_back({"objective/" + to_string(task), model_check(model, [&](const BoundParams& p) {
                     return example_objective(p, cfg, ex, false).total;
                   })});
  }
  return out;
}

}  // namespace xmixup
