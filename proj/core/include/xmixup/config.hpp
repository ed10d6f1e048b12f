#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "xmixup/corpus.hpp"
#include "xmixup/pipeline.hpp"

namespace xmixup {

/// Everything a command needs: training, data generation and paths.
struct RunConfig {
  TaskKind task = TaskKind::classification;
  TrainConfig train = TrainConfig::defaults_for(TaskKind::classification);
  ToyLanguageSpec language;
  BundleSizes sizes;
  std::filesystem::path data = "data/bundle.jsonl";
  std::filesystem::path checkpoint = "out/checkpoint.json";
  std::filesystem::path out = "out";

  /// One seed drives data generation and training.
  void set_seed(std::uint64_t seed);
  /// Switches the task and resets the per-task training defaults.
  void set_task(TaskKind task);
};

/// Parses `key = value` lines. `#` starts a comment; blank lines are ignored.
/// Errors name the offending line.
std::map<std::string, std::string> parse_key_values(const std::string& text);

/// Applies one dotted key (e.g. `train.alpha`, `toggles.use_mixup`).
/// Unknown keys and unparsable values throw.
void apply_setting(RunConfig& config, const std::string& key, const std::string& value);

/// Loads a config file over `config`. `task` is applied first so that the
/// remaining keys override the per-task defaults it selects.
void apply_file(RunConfig& config, const std::filesystem::path& path);

/// Every key of `config` in the same format `apply_file` accepts.
std::string to_key_values(const RunConfig& config);

}  // namespace xmixup
