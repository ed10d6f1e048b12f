#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "xmixup/analysis.hpp"
#include "xmixup/checkpoint.hpp"
#include "xmixup/config.hpp"
#include "xmixup/corpus.hpp"
#include "xmixup/gradcheck.hpp"
#include "xmixup/log.hpp"
#include "xmixup/pipeline.hpp"

namespace fs = std::filesystem;
using namespace xmixup;

namespace {

struct Flags {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out, data, checkpoint, task, run_id;
  std::optional<int> mix_layer, epochs, train_size, test_size;
  std::optional<double> alpha, schedule_k, lambda0;
  bool no_mixup = false, no_mixup_inference = false, no_scheduled_sampling = false;
  bool no_mse = false, no_kl = false, constant_lambda = false;
  std::vector<int> layers;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "flat key = value config file");
  cmd->add_option("--seed", f.seed, "seed for data generation and training");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--data", f.data, "JSONL dataset bundle");
  cmd->add_option("--checkpoint", f.checkpoint, "checkpoint file");
  cmd->add_option("--task", f.task, "classification | structured | span");
  cmd->add_option("--run-id", f.run_id, "label used in metric logs");
  cmd->add_option("--epochs", f.epochs);
  cmd->add_option("--train-size", f.train_size);
  cmd->add_option("--test-size", f.test_size);
  cmd->add_option("--mix-layer", f.mix_layer, "1-based mix layer");
  cmd->add_option("--alpha", f.alpha, "source/target task balance");
  cmd->add_option("--schedule-k", f.schedule_k, "scheduled sampling decay constant");
  cmd->add_option("--lambda0", f.lambda0, "mixup ratio upper bound");
  cmd->add_flag("--no-mixup", f.no_mixup, "translate-train baseline");
  cmd->add_flag("--no-mixup-inference", f.no_mixup_inference);
  cmd->add_flag("--no-scheduled-sampling", f.no_scheduled_sampling);
  cmd->add_flag("--no-mse-consistency", f.no_mse);
  cmd->add_flag("--no-kl-consistency", f.no_kl);
  cmd->add_flag("--constant-lambda", f.constant_lambda, "fix lambda = lambda0");
}

// Defaults, then the config file, then flags.
RunConfig resolve(const Flags& f) {
  RunConfig c;
  if (f.config) apply_file(c, *f.config);
  if (f.task) c.set_task(task_kind_from_string(*f.task));
  if (f.seed) c.set_seed(*f.seed);
  if (f.out) c.out = *f.out;
  if (f.data) c.data = *f.data;
  if (f.checkpoint) c.checkpoint = *f.checkpoint;
  if (f.run_id) c.train.run_id = *f.run_id;
  if (f.epochs) c.train.epochs = *f.epochs;
  if (f.train_size) c.sizes.train = *f.train_size;
  if (f.test_size) c.sizes.test = *f.test_size;
  if (f.mix_layer) c.train.mix_layer = *f.mix_layer;
  if (f.alpha) c.train.alpha = *f.alpha;
  if (f.schedule_k) c.train.schedule_k = *f.schedule_k;
  if (f.lambda0) c.train.lambda0 = *f.lambda0;
  auto& t = c.train.toggles;
  if (f.no_mixup) t = Toggles::all_off();
  if (f.no_mixup_inference) t.mixup_inference = false;
  if (f.no_scheduled_sampling) t.scheduled_sampling = false;
  if (f.no_mse) t.mse_consistency = false;
  if (f.no_kl) t.kl_consistency = false;
  if (f.constant_lambda) t.constant_lambda = true;
  return c;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

void echo_config(const RunConfig& c) {
  fs::create_directories(c.out);
  const std::string text = to_key_values(c);
  log::info("resolved config:\n{}", text);
  open_out(c.out / "config.txt") << text;
}

DatasetBundle bundle_for(const RunConfig& c) {
  if (fs::exists(c.data)) {
    auto b = load_jsonl(c.data);
    if (b.task != c.task) throw std::runtime_error("dataset task " + to_string(b.task) + " does not match " + to_string(c.task));
    return b;
  }
  log::info("{} not found; generating the bundle in memory", c.data.string());
  return gen_bundle(c.task, c.sizes, c.language, c.language.seed);
}

int cmd_gen_data(const RunConfig& c) {
  const auto bundle = gen_bundle(c.task, c.sizes, c.language, c.language.seed);
  if (c.data.has_parent_path()) fs::create_directories(c.data.parent_path());
  save_jsonl(bundle, c.data);
  std::cout << "wrote " << c.data.string() << '\n';
  return 0;
}

int cmd_train(const RunConfig& c) {
  echo_config(c);
  const auto bundle = bundle_for(c);
  const auto result = train(c.train, bundle);
  {
    auto file = open_out(c.out / "metrics.csv");
    write_metrics_csv(file, result.log);
  }
  save_checkpoint({c.train, result.model, result.optimizer, result.step}, c.checkpoint);
  const auto eval = evaluate(result.model, c.train, bundle.test);
  std::cout << "metric " << eval.metric << " exact_match " << eval.exact_match << '\n';
  return 0;
}

int cmd_eval(const RunConfig& c) {
  const auto ck = load_checkpoint(c.checkpoint);
  const auto bundle = bundle_for(c);
  const auto eval = evaluate(ck.model, ck.config, bundle.test);
  fs::create_directories(c.out);
  auto out = open_out(c.out / "eval.csv");
  out << "metric,exact_match\n" << eval.metric << ',' << eval.exact_match << '\n';
  std::cout << "metric " << eval.metric << " exact_match " << eval.exact_match << '\n';
  return 0;
}

int cmd_analyze(const RunConfig& c) {
  const auto ck = load_checkpoint(c.checkpoint);
  const auto bundle = bundle_for(c);
  const auto report = discrepancy_report(ck.model, ck.config, bundle.parallel);
  write_report(report, c.out);
  for (const auto& row : report.cka) {
    std::cout << row.variant << " cka(" << row.lang_a << ", " << row.lang_b << ") = " << row.value << '\n';
  }
  return 0;
}

int cmd_gradcheck(const RunConfig& c) {
  constexpr int kSeeds = 20;
  double worst = 0.0;
  std::string worst_case;
  for (int i = 0; i < kSeeds; ++i) {
    for (const auto& r : run_gradcheck(c.train.seed + static_cast<std::uint64_t>(i))) {
      if (r.max_relative_error >= worst) {
        worst = r.max_relative_error;
        worst_case = r.name;
      }
    }
  }
  std::printf("max relative error %.3e (%s) over %d seeds\n", worst, worst_case.c_str(), kSeeds);
  return worst <= 1e-4 ? 0 : 1;
}

int cmd_sweep(const RunConfig& c, std::vector<int> layers) {
  echo_config(c);
  if (layers.empty()) {
    for (int l = 1; l <= c.train.encoder.num_layers; ++l) layers.push_back(l);
  }
  const auto bundle = bundle_for(c);
  const auto rows = sweep_layer(c.train, layers, bundle);
  {
    auto file = open_out(c.out / "sweep.csv");
    write_sweep_csv(file, rows);
  }
  std::vector<EpochMetrics> log;
  for (const auto& r : rows) log.insert(log.end(), r.log.begin(), r.log.end());
  {
    auto file = open_out(c.out / "metrics.csv");
    write_metrics_csv(file, log);
  }
  write_sweep_csv(std::cout, rows);
  return 0;
}

int cmd_ablate(const RunConfig& c) {
  echo_config(c);
  const auto bundle = bundle_for(c);
  const auto rows = ablate(c.train, bundle);
  {
    auto file = open_out(c.out / "ablation.csv");
    write_ablation_csv(file, rows);
  }
  std::vector<EpochMetrics> log;
  for (const auto& r : rows) log.insert(log.end(), r.log.begin(), r.log.end());
  {
    auto file = open_out(c.out / "metrics.csv");
    write_metrics_csv(file, log);
  }
  write_ablation_csv(std::cout, rows);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"X-Mixup cross-lingual transfer laboratory"};
  app.require_subcommand(1);
  Flags flags;
  std::vector<CLI::App*> cmds;
  for (const char* name : {"gen-data", "train", "eval", "analyze", "gradcheck", "sweep-layer", "ablate"}) {
    auto* cmd = app.add_subcommand(name);
    add_common(cmd, flags);
    cmds.push_back(cmd);
  }
  cmds[5]->add_option("--layers", flags.layers, "layers to sweep")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return 2;
  }

  try {
    log::configure_from_env();
    const RunConfig c = resolve(flags);
    c.train.validate();
    const std::string name = app.get_subcommands().front()->get_name();
    if (name == "gen-data") return cmd_gen_data(c);
    if (name == "train") return cmd_train(c);
    if (name == "eval") return cmd_eval(c);
    if (name == "analyze") return cmd_analyze(c);
    if (name == "gradcheck") return cmd_gradcheck(c);
    if (name == "sweep-layer") return cmd_sweep(c, flags.layers);
    return cmd_ablate(c);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
