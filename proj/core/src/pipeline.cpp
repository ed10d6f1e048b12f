#include "xmixup/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "xmixup/log.hpp"

namespace xmixup {

TrainConfig TrainConfig::defaults_for(TaskKind task) {
  TrainConfig c;
  switch (task) {
    case TaskKind::classification:
      c.alpha = 0.4;
      c.schedule_k = 1000.0;
      c.mix_layer = 1;
      break;
    case TaskKind::structured:
      c.alpha = 0.8;
      c.schedule_k = 1000.0;
      c.mix_layer = 1;
      break;
    case TaskKind::span:
      c.alpha = 0.2;
      c.schedule_k = 2000.0;
      c.mix_layer = 2;
      break;
  }
  return c;
}

MixupConfig TrainConfig::mixup() const {
  MixupConfig m;
  m.lambda0 = lambda0;
  m.mix_layer = toggles.use_mixup ? mix_layer : std::nullopt;
  m.schedule_k = schedule_k;
  m.n_scale = n_scale;
  if (toggles.constant_lambda) m.fixed_lambda = lambda0;
  return m;
}

void TrainConfig::validate() const {
  encoder.validate();
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("train: alpha must lie in [0, 1]");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("train: learning rate must be positive");
  if (batch_size < 1) throw std::invalid_argument("train: batch size must be >= 1");
  if (epochs < 0) throw std::invalid_argument("train: epochs must be >= 0");
  mixup().validate(encoder);
}

void adam_step(ParamMap& params, const ParamMap& grads, AdamState& s, double lr) {
  ++s.t;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.t));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.t));
  for (const auto& [name, g] : grads) {
    auto& p = params.at(name);
    auto [mit, m_new] = s.m.try_emplace(name, p.shape(), 0.0);
    auto [vit, v_new] = s.v.try_emplace(name, p.shape(), 0.0);
    auto& m = mit->second;
    auto& v = vit->second;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = s.beta1 * m[i] + (1.0 - s.beta1) * g[i];
      v[i] = s.beta2 * v[i] + (1.0 - s.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + s.eps);
    }
  }
}

namespace {

Tensor one_hot(int cls, int num_classes) {
  if (cls < 0 || cls >= num_classes) throw std::out_of_range("class label " + std::to_string(cls) + " out of range");
  Tensor t = Tensor::matrix(1, static_cast<std::size_t>(num_classes));
  t[static_cast<std::size_t>(cls)] = 1.0;
  return t;
}

struct TokenTargets {
  Tensor y;
  Mask mask;
};

TokenTargets tag_targets(const std::vector<int>& tags, std::size_t n, int num_classes) {
  if (tags.size() != n) throw std::invalid_argument("tag sequence length does not match tokens");
  TokenTargets t{Tensor::matrix(n, static_cast<std::size_t>(num_classes)), Mask(n, 0)};
  for (std::size_t i = 0; i < n; ++i) {
    if (tags[i] < 0) continue;
    if (tags[i] >= num_classes) throw std::out_of_range("tag out of range");
    t.y[i * static_cast<std::size_t>(num_classes) + static_cast<std::size_t>(tags[i])] = 1.0;
    t.mask[i] = 1;
  }
  return t;
}

Tensor span_targets(const Span& span, std::size_t n) {
  if (span.start < 0 || span.end < span.start || static_cast<std::size_t>(span.end) >= n) {
    throw std::out_of_range("span outside sequence");
  }
  Tensor y = Tensor::matrix(2, n);
  y[static_cast<std::size_t>(span.start)] = 1.0;
  y[n + static_cast<std::size_t>(span.end)] = 1.0;
  return y;
}

Var task_loss_on(const BoundParams& p, const HiddenStates& h, Var representation, const Label& label) {
  const auto& model = p.model();
  const std::size_t n = h.mask.size();
  switch (model.task) {
    case TaskKind::classification:
      return classification_loss(classification_probs(p, representation), one_hot(std::get<int>(label), model.num_labels));
    case TaskKind::structured: {
      const auto t = tag_targets(std::get<std::vector<int>>(label), n, model.num_labels);
      return token_level_loss(token_probs(p, h), t.y, t.mask);
    }
    case TaskKind::span:
      return token_level_loss(span_probs(p, h), span_targets(std::get<Span>(label), n), {});
  }
  throw std::logic_error("unhandled task kind");
}

}  // namespace

Var single_stream_loss(const BoundParams& p, std::span<const int> tokens, const Label& label) {
  const auto h = encode_single(p, tokens);
  return task_loss_on(p, h, sequence_representation(h), label);
}

ExampleObjective example_objective(const BoundParams& p, const TrainConfig& config, const ParallelExample& ex,
                                   bool use_bt) {
  const auto& model = p.model();
  if (use_bt && (!ex.bt_src || !ex.bt_label)) throw std::invalid_argument("example has no back-translation");
  const auto& src = use_bt ? *ex.bt_src : ex.src;
  const Label& src_label = use_bt ? *ex.bt_label : ex.label;
  const Label& tgt_label = ex.tgt_label ? *ex.tgt_label : ex.label;

  const auto enc = encode_pair(p, src, ex.tgt, config.mixup());
  Var r_s = sequence_representation(enc.source);
  Var r_t = sequence_representation(enc.target);

  ExampleObjective out;
  out.lambda = enc.lambda;
  auto& parts = out.parts;
  switch (model.task) {
    case TaskKind::classification: {
      if (std::get<int>(tgt_label) != std::get<int>(src_label)) {
        throw std::logic_error("translation changed a classification label");
      }
      const Tensor y = one_hot(std::get<int>(src_label), model.num_labels);
      Var p_s = classification_probs(p, r_s);
      Var p_t = classification_probs(p, r_t);
      parts.task_s = classification_loss(p_s, y);
      parts.task_t = classification_loss(p_t, y);
      if (config.toggles.kl_consistency) parts.kl = kl_divergence(p_s, p_t);
      break;
    }
    case TaskKind::structured: {
      const std::size_t ns = enc.source.mask.size(), nt = enc.target.mask.size();
      const auto c = static_cast<std::size_t>(model.num_labels);
      const auto ts = tag_targets(std::get<std::vector<int>>(src_label), ns, model.num_labels);
      Var probs_s = token_probs(p, enc.source);
      parts.task_s = token_level_loss(probs_s, ts.y, ts.mask);
      const auto& align = use_bt ? ex.tgt_to_bt : ex.tgt_to_src;
      if (align.size() == nt) {
        // Soft targets from the source head at aligned positions, detached.
        const Tensor soft = pseudo_labels(probs_s.value());
        Tensor y = Tensor::matrix(nt, c);
        Mask mask(nt, 0);
        for (std::size_t i = 0; i < nt; ++i) {
          if (align[i] < 0) continue;
          const auto j = static_cast<std::size_t>(align[i]);
          for (std::size_t k = 0; k < c; ++k) y[i * c + k] = soft[j * c + k];
          mask[i] = 1;
        }
        parts.task_t = token_level_loss(token_probs(p, enc.target), y, mask);
      } else {
        const auto tt = tag_targets(std::get<std::vector<int>>(tgt_label), nt, model.num_labels);
        parts.task_t = token_level_loss(token_probs(p, enc.target), tt.y, tt.mask);
      }
      break;
    }
    case TaskKind::span: {
      parts.task_s = token_level_loss(span_probs(p, enc.source),
                                      span_targets(std::get<Span>(src_label), enc.source.mask.size()), {});
      parts.task_t = token_level_loss(span_probs(p, enc.target),
                                      span_targets(std::get<Span>(tgt_label), enc.target.mask.size()), {});
      break;
    }
  }
  if (config.toggles.mse_consistency) parts.mse = mse_loss(r_s, r_t);
  out.total = total_loss(parts, config.alpha);
  return out;
}

namespace {

void check_bundle(const TrainConfig& config, const DatasetBundle& bundle) {
  config.validate();
  if (bundle.vocab_size > config.encoder.vocab_size) {
    throw std::invalid_argument("bundle vocabulary exceeds encoder vocab_size");
  }
  if (config.toggles.use_mixup) {
    for (const auto& ex : bundle.train) {
      if (config.toggles.scheduled_sampling && (!ex.bt_src || !ex.bt_label)) {
        throw std::invalid_argument("scheduled sampling needs back-translated sources in every training example");
      }
    }
  }
}

struct EpochAccumulator {
  double total = 0, task_s = 0, task_t = 0, mse = 0, kl = 0;
  double lambda_sum = 0;
  double lambda_min = std::numeric_limits<double>::infinity();
  double lambda_max = -std::numeric_limits<double>::infinity();
  std::size_t lambda_count = 0;
  std::size_t n_s = 0, n_t = 0, n = 0;

  void add_lambda(double v) {
    lambda_sum += v;
    lambda_min = std::min(lambda_min, v);
    lambda_max = std::max(lambda_max, v);
    ++lambda_count;
  }
};

void fill_epoch(EpochMetrics& row, const EpochAccumulator& acc, bool paired) {
  const auto div = [](double v, std::size_t n) { return n ? v / static_cast<double>(n) : 0.0; };
  row.loss_total = div(acc.total, acc.n);
  row.loss_task_s = div(acc.task_s, paired ? acc.n : acc.n_s);
  row.loss_task_t = div(acc.task_t, paired ? acc.n : acc.n_t);
  row.loss_mse = div(acc.mse, acc.n);
  row.loss_kl = div(acc.kl, acc.n);
  row.lambda_mean = div(acc.lambda_sum, acc.lambda_count);
  row.lambda_min = acc.lambda_count ? acc.lambda_min : 0.0;
  row.lambda_max = acc.lambda_count ? acc.lambda_max : 0.0;
}

void step_or_abort(TrainResult& r, Tape& tape, Var batch_sum, std::size_t batch, const TrainConfig& config) {
  Var loss = scale(batch_sum, 1.0 / static_cast<double>(batch));
  if (!std::isfinite(loss.item())) {
    throw std::runtime_error("training diverged: non-finite loss at step " + std::to_string(r.step));
  }
  const ParamMap grads = backward(tape, loss);
  adam_step(r.model.tensors, grads, r.optimizer, config.learning_rate);
  ++r.step;
}

void train_translate_train(TrainResult& r, const TrainConfig& config, const DatasetBundle& bundle) {
  struct Item {
    const std::vector<int>* tokens;
    const Label* label;
    bool is_source;
  };
  std::vector<Item> items;
  items.reserve(bundle.train.size() * 2);
  for (const auto& ex : bundle.train) {
    items.push_back({&ex.src, &ex.label, true});
    items.push_back({&ex.tgt, ex.tgt_label ? &*ex.tgt_label : &ex.label, false});
  }
  std::mt19937_64 rng(config.seed + 1);
  std::vector<std::size_t> order(items.size());
  const auto bs = static_cast<std::size_t>(config.batch_size);
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    EpochAccumulator acc;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t end = std::min(order.size(), start + bs);
      Tape tape;
      BoundParams p(tape, r.model, true);
      std::optional<Var> batch_sum;
      for (std::size_t k = start; k < end; ++k) {
        const auto& item = items[order[k]];
        Var l = single_stream_loss(p, *item.tokens, *item.label);
        batch_sum = batch_sum ? add(*batch_sum, l) : l;
        const double v = l.item();
        acc.total += v;
        ++acc.n;
        if (item.is_source) {
          acc.task_s += v;
          ++acc.n_s;
        } else {
          acc.task_t += v;
          ++acc.n_t;
        }
      }
      step_or_abort(r, tape, *batch_sum, end - start, config);
    }
    EpochMetrics row;
    row.run_id = config.run_id;
    row.epoch = epoch;
    fill_epoch(row, acc, false);
    row.eval_metric = evaluate(r.model, config, bundle.test).metric;
    log::info("[{}] epoch {} loss {:.4f} eval {:.4f}", config.run_id, epoch, row.loss_total, row.eval_metric);
    r.log.push_back(row);
  }
}

void train_mixup(TrainResult& r, const TrainConfig& config, const DatasetBundle& bundle) {
  std::mt19937_64 rng(config.seed + 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::size_t> order(bundle.train.size());
  const auto bs = static_cast<std::size_t>(config.batch_size);
  const TaskKind task = r.model.task;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    EpochAccumulator acc;
    double p_star = 1.0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t end = std::min(order.size(), start + bs);
      p_star = sampling_threshold(r.step, config.schedule_k);
      Tape tape;
      BoundParams p(tape, r.model, true);
      std::optional<Var> batch_sum;
      for (std::size_t k = start; k < end; ++k) {
        const auto& ex = bundle.train[order[k]];
        bool use_bt = false;
        if (config.toggles.scheduled_sampling) use_bt = &sample_source(ex, p_star, unit(rng)) != &ex.src;
        const auto obj = example_objective(p, config, ex, use_bt);
        batch_sum = batch_sum ? add(*batch_sum, obj.total) : obj.total;
        const auto b = breakdown(obj.parts, config.alpha, task);
        acc.total += obj.total.item();
        acc.task_s += b.task_s;
        acc.task_t += b.task_t;
        acc.mse += b.mse;
        acc.kl += b.kl;
        ++acc.n;
        if (obj.lambda) acc.add_lambda(obj.lambda->item());
      }
      step_or_abort(r, tape, *batch_sum, end - start, config);
    }
    EpochMetrics row;
    row.run_id = config.run_id;
    row.epoch = epoch;
    fill_epoch(row, acc, true);
    row.p_star = config.toggles.scheduled_sampling ? p_star : 1.0;
    row.eval_metric = evaluate(r.model, config, bundle.test).metric;
    log::info("[{}] epoch {} loss {:.4f} lambda {:.4f} p* {:.4f} eval {:.4f}", config.run_id, epoch, row.loss_total,
              row.lambda_mean, row.p_star, row.eval_metric);
    r.log.push_back(row);
  }
}

}  // namespace

TrainResult train(const TrainConfig& config, const DatasetBundle& bundle) {
  check_bundle(config, bundle);
  TrainResult r;
  r.model = init_model(config.encoder, bundle.task, bundle.num_labels, config.seed);
  if (config.epochs == 0) return r;
  if (bundle.train.empty()) throw std::invalid_argument("train: empty training collection");
  if (config.toggles.use_mixup) {
    train_mixup(r, config, bundle);
  } else {
    train_translate_train(r, config, bundle);
  }
  return r;
}

// Inference --------------------------------------------------------------------

int argmax(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("argmax of empty sequence");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return static_cast<int>(best);
}

namespace {

bool paired_inference(const TrainConfig& config) {
  return config.toggles.use_mixup && config.toggles.mixup_inference && config.mix_layer.has_value();
}

struct TargetView {
  HiddenStates target;
  std::optional<HiddenStates> source;
};

TargetView encode_for_inference(const BoundParams& p, const TrainConfig& config, std::span<const int> tgt,
                                std::optional<std::span<const int>> tt_src) {
  if (paired_inference(config)) {
    if (!tt_src) throw std::invalid_argument("mixup inference needs a translate-test source sequence");
    auto enc = encode_pair(p, *tt_src, tgt, config.mixup());
    return {std::move(enc.target), std::move(enc.source)};
  }
  return {encode_single(p, tgt), std::nullopt};
}

}  // namespace

ClassPrediction infer_classification(const ModelParams& model, const TrainConfig& config, std::span<const int> tgt,
                                     std::optional<std::span<const int>> tt_src) {
  Tape tape;
  BoundParams p(tape, model, false);
  const auto view = encode_for_inference(p, config, tgt, tt_src);
  Var p_t = classification_probs(p, sequence_representation(view.target));
  ClassPrediction out;
  out.probs = p_t.value().storage();
  if (view.source) {
    Var p_s = classification_probs(p, sequence_representation(*view.source));
    for (std::size_t j = 0; j < out.probs.size(); ++j) out.probs[j] = (p_s.value()[j] + p_t.value()[j]) / 2.0;
  }
  out.label = argmax(out.probs);
  return out;
}

std::vector<int> infer_tags(const ModelParams& model, const TrainConfig& config, std::span<const int> tgt,
                            std::optional<std::span<const int>> tt_src) {
  Tape tape;
  BoundParams p(tape, model, false);
  const auto view = encode_for_inference(p, config, tgt, tt_src);
  const Tensor probs = token_probs(p, view.target).value();
  const std::size_t c = probs.cols();
  std::vector<int> tags;
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    if (!view.target.mask[i]) continue;
    tags.push_back(argmax(probs.data().subspan(i * c, c)));
  }
  return tags;
}

Span infer_span(const ModelParams& model, const TrainConfig& config, std::span<const int> tgt,
                std::optional<std::span<const int>> tt_src) {
  Tape tape;
  BoundParams p(tape, model, false);
  const auto view = encode_for_inference(p, config, tgt, tt_src);
  const Tensor probs = span_probs(p, view.target).value();
  const std::size_t n = probs.cols();
  Span best{0, 0};
  double best_score = -1.0;
  for (std::size_t s = 0; s < n; ++s) {
    if (!view.target.mask[s]) continue;
    for (std::size_t e = s; e < n; ++e) {
      if (!view.target.mask[e]) continue;
      const double score = probs[s] * probs[n + e];
      if (score > best_score) {
        best_score = score;
        best = Span{static_cast<int>(s), static_cast<int>(e)};
      }
    }
  }
  return best;
}

namespace {

double span_f1(const Span& pred, const Span& gold) {
  const int overlap = std::min(pred.end, gold.end) - std::max(pred.start, gold.start) + 1;
  if (overlap <= 0) return 0.0;
  const double precision = static_cast<double>(overlap) / (pred.end - pred.start + 1);
  const double recall = static_cast<double>(overlap) / (gold.end - gold.start + 1);
  return 2.0 * precision * recall / (precision + recall);
}

}  // namespace

EvalResult evaluate(const ModelParams& model, const TrainConfig& config, const std::vector<ParallelExample>& test) {
  EvalResult r;
  if (test.empty()) return r;
  const auto tt = [](const ParallelExample& ex) { return std::optional<std::span<const int>>(ex.src); };
  switch (model.task) {
    case TaskKind::classification: {
      std::size_t correct = 0;
      for (const auto& ex : test) {
        correct += infer_classification(model, config, ex.tgt, tt(ex)).label == std::get<int>(ex.label) ? 1 : 0;
      }
      r.metric = static_cast<double>(correct) / static_cast<double>(test.size());
      r.exact_match = r.metric;
      break;
    }
    case TaskKind::structured: {
      std::size_t tp = 0, fp = 0, fn = 0, exact = 0;
      for (const auto& ex : test) {
        const auto pred = infer_tags(model, config, ex.tgt, tt(ex));
        const auto& gold = std::get<std::vector<int>>(ex.label);
        bool all = pred.size() == gold.size();
        for (std::size_t i = 0; i < std::min(pred.size(), gold.size()); ++i) {
          if (gold[i] < 0) continue;
          tp += pred[i] == 1 && gold[i] == 1;
          fp += pred[i] == 1 && gold[i] != 1;
          fn += pred[i] != 1 && gold[i] == 1;
          all = all && pred[i] == gold[i];
        }
        exact += all ? 1 : 0;
      }
      r.metric = tp + fp + fn == 0 ? 1.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
      r.exact_match = static_cast<double>(exact) / static_cast<double>(test.size());
      break;
    }
    case TaskKind::span: {
      double f1 = 0.0, em = 0.0;
      for (const auto& ex : test) {
        const auto pred = infer_span(model, config, ex.tgt, tt(ex));
        const auto& gold = std::get<Span>(ex.label);
        f1 += span_f1(pred, gold);
        em += pred == gold ? 1.0 : 0.0;
      }
      r.metric = f1 / static_cast<double>(test.size());
      r.exact_match = em / static_cast<double>(test.size());
      break;
    }
  }
  return r;
}

// Harnesses --------------------------------------------------------------------

std::vector<std::pair<std::string, TrainConfig>> ablation_configs(const TrainConfig& base) {
  std::vector<std::pair<std::string, TrainConfig>> rows;
  auto row = [&](std::string name, auto&& edit) {
    TrainConfig c = base;
    edit(c.toggles);
    c.run_id = base.run_id + ":" + name;
    rows.emplace_back(std::move(name), std::move(c));
  };
  row("full", [](Toggles&) {});
  row("w/o mixup", [](Toggles& t) { t = Toggles::all_off(); });
  row("w/o mixup inference", [](Toggles& t) { t.mixup_inference = false; });
  row("w/o scheduled sampling", [](Toggles& t) { t.scheduled_sampling = false; });
  row("w/o consistency", [](Toggles& t) {
    t.mse_consistency = false;
    t.kl_consistency = false;
  });
  row("lambda=lambda0", [](Toggles& t) { t.constant_lambda = true; });
  row("w/o MSE consistency", [](Toggles& t) { t.mse_consistency = false; });
  row("w/o KL consistency", [](Toggles& t) { t.kl_consistency = false; });
  return rows;
}

std::vector<AblationRow> ablate(const TrainConfig& base, const DatasetBundle& bundle) {
  std::vector<AblationRow> out;
  for (auto& [name, config] : ablation_configs(base)) {
    auto result = train(config, bundle);
    AblationRow row;
    row.name = name;
    row.result = evaluate(result.model, config, bundle.test);
    row.log = std::move(result.log);
    row.config = std::move(config);
    out.push_back(std::move(row));
  }
  return out;
}

std::vector<LayerSweepRow> sweep_layer(const TrainConfig& base, std::span<const int> layers, const DatasetBundle& bundle) {
  for (int l : layers) {
    if (l < 1 || l > base.encoder.num_layers) {
      throw std::invalid_argument("sweep_layer: layer " + std::to_string(l) + " outside [1, num_layers]");
    }
  }
  std::vector<LayerSweepRow> out;
  for (int l : layers) {
    TrainConfig c = base;
    c.mix_layer = l;
    c.run_id = base.run_id + ":layer" + std::to_string(l);
    auto result = train(c, bundle);
    out.push_back({l, evaluate(result.model, c, bundle.test), std::move(result.log)});
  }
  TrainConfig baseline = base;
  baseline.toggles = Toggles::all_off();
  baseline.run_id = base.run_id + ":baseline";
  auto result = train(baseline, bundle);
  out.push_back({std::nullopt, evaluate(result.model, baseline, bundle.test), std::move(result.log)});
  return out;
}

namespace {

std::string num(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

}  // namespace

void write_metrics_csv(std::ostream& out, std::span<const EpochMetrics> rows) {
  out << "run_id,epoch,loss_total,loss_task_S,loss_task_T,loss_mse,loss_kl,lambda_mean,p_star,eval_metric\n";
  for (const auto& r : rows) {
    out << r.run_id << ',' << r.epoch << ',' << num(r.loss_total) << ',' << num(r.loss_task_s) << ','
        << num(r.loss_task_t) << ',' << num(r.loss_mse) << ',' << num(r.loss_kl) << ',' << num(r.lambda_mean) << ','
        << num(r.p_star) << ',' << num(r.eval_metric) << '\n';
  }
}

void write_ablation_csv(std::ostream& out, std::span<const AblationRow> rows) {
  out << "row,metric,exact_match\n";
  for (const auto& r : rows) out << '"' << r.name << "\"," << num(r.result.metric) << ',' << num(r.result.exact_match) << '\n';
}

void write_sweep_csv(std::ostream& out, std::span<const LayerSweepRow> rows) {
  out << "layer,metric,exact_match\n";
  for (const auto& r : rows) {
    out << (r.layer ? std::to_string(*r.layer) : std::string("baseline")) << ',' << num(r.result.metric) << ','
        << num(r.result.exact_match) << '\n';
  }
}

}  // namespace xmixup
