#pragma once

#include <filesystem>
#include <string>

#include "xmixup/pipeline.hpp"

namespace xmixup {

/// Everything needed to resume or evaluate a run.
struct Checkpoint {
  TrainConfig config;
  ModelParams model;
  AdamState optimizer;
  long step = 0;
};

/// JSON manifest with the config snapshot, step counter, optimizer moments
/// and every parameter as {shape, data} in row-major order. Doubles are
/// written in shortest round-trip form, so load(save(c)) is exact.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string config_to_json(const TrainConfig& config);
TrainConfig config_from_json(const std::string& text);

}  // namespace xmixup
