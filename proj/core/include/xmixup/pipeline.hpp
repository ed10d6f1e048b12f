#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "xmixup/corpus.hpp"
#include "xmixup/encoder.hpp"
#include "xmixup/mixup.hpp"
#include "xmixup/objectives.hpp"

namespace xmixup {

struct Toggles {
  bool use_mixup = true;
  bool mixup_inference = true;
  bool scheduled_sampling = true;
  bool mse_consistency = true;
  bool kl_consistency = true;
  /// Fix lambda = lambda0 instead of the quality-gated ratio.
  bool constant_lambda = false;

  static Toggles all_off() { return {false, false, false, false, false, false}; }
  friend bool operator==(const Toggles&, const Toggles&) = default;
};

struct TrainConfig {
  EncoderConfig encoder;
  double alpha = 0.4;
  double schedule_k = 1000.0;
  double lambda0 = 0.5;
  std::optional<int> mix_layer = 1;
  std::optional<double> n_scale;
  double learning_rate = 1e-3;
  int batch_size = 16;
  int epochs = 10;
  std::uint64_t seed = 1;
  Toggles toggles;
  std::string run_id = "run";

  /// Balance weight, decay constant and mix layer tuned per task family.
  static TrainConfig defaults_for(TaskKind task);
  MixupConfig mixup() const;
  void validate() const;
};

/// Per-epoch training log row.
struct EpochMetrics {
  std::string run_id;
  int epoch = 0;
  double loss_total = 0.0;
  double loss_task_s = 0.0;
  double loss_task_t = 0.0;
  double loss_mse = 0.0;
  double loss_kl = 0.0;
  double lambda_mean = 0.0;
  double lambda_min = 0.0;
  double lambda_max = 0.0;
  double p_star = 0.0;
  double eval_metric = 0.0;

  friend bool operator==(const EpochMetrics&, const EpochMetrics&) = default;
};

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long t = 0;
  ParamMap m;
  ParamMap v;
};

/// One bias-corrected Adam update of every parameter that has a gradient.
void adam_step(ParamMap& params, const ParamMap& grads, AdamState& state, double learning_rate);

struct TrainResult {
  ModelParams model;
  std::vector<EpochMetrics> log;
  AdamState optimizer;
  long step = 0;
};

/// X-Mixup training when toggles.use_mixup, otherwise plain translate-train
/// on the concatenation of source and translated target examples.
TrainResult train(const TrainConfig& config, const DatasetBundle& bundle);

/// Per-example objective of the dual-stream model on an existing tape.
struct ExampleObjective {
  TapedLossParts parts;
  Var total;
  std::optional<Var> lambda;
};

ExampleObjective example_objective(const BoundParams& params, const TrainConfig& config, const ParallelExample& example,
                                   bool use_back_translation);

/// Cross-entropy of one single-stream example (translate-train).
Var single_stream_loss(const BoundParams& params, std::span<const int> tokens, const Label& label);

/// Index of the largest entry; ties go to the lowest index.
int argmax(std::span<const double> values);

struct ClassPrediction {
  int label = 0;
  std::vector<double> probs;
};

/// Mean of source and target distributions with mixup inference, otherwise
/// the single-stream target distribution.
ClassPrediction infer_classification(const ModelParams& model, const TrainConfig& config, std::span<const int> tgt,
                                     std::optional<std::span<const int>> translate_test_src);

/// Target-stream tags (structured) for each position.
std::vector<int> infer_tags(const ModelParams& model, const TrainConfig& config, std::span<const int> tgt,
                            std::optional<std::span<const int>> translate_test_src);

/// Target-stream answer span (start <= end maximising p_start * p_end).
Span infer_span(const ModelParams& model, const TrainConfig& config, std::span<const int> tgt,
                std::optional<std::span<const int>> translate_test_src);

struct EvalResult {
  /// Accuracy (classification), tag F1 (structured) or span F1 (span).
  double metric = 0.0;
  /// Exact match for spans; equals metric otherwise.
  double exact_match = 0.0;
  friend bool operator==(const EvalResult&, const EvalResult&) = default;
};

EvalResult evaluate(const ModelParams& model, const TrainConfig& config, const std::vector<ParallelExample>& test);

struct AblationRow {
  std::string name;
  TrainConfig config;
  EvalResult result;
  std::vector<EpochMetrics> log;
};

/// The eight ablation settings derived from `base`, in table order.
std::vector<std::pair<std::string, TrainConfig>> ablation_configs(const TrainConfig& base);
std::vector<AblationRow> ablate(const TrainConfig& base, const DatasetBundle& bundle);

struct LayerSweepRow {
  /// nullopt marks the translate-train baseline row.
  std::optional<int> layer;
  EvalResult result;
  std::vector<EpochMetrics> log;
};

std::vector<LayerSweepRow> sweep_layer(const TrainConfig& base, std::span<const int> layers, const DatasetBundle& bundle);

void write_metrics_csv(std::ostream& out, std::span<const EpochMetrics> rows);
void write_ablation_csv(std::ostream& out, std::span<const AblationRow> rows);
void write_sweep_csv(std::ostream& out, std::span<const LayerSweepRow> rows);

}  // namespace xmixup
