#include "xmixup/log.hpp"

#include <spdlog/sinks/stdout_sinks.h>

#include <cstdlib>
#include <stdexcept>
#include <string>

namespace xmixup::log {

void configure_from_env() {
  auto logger = spdlog::stderr_logger_st("xmixup");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);
  const char* env = std::getenv("X_MIXUP_LOG");
  const std::string level = env ? env : "info";
  if (level == "quiet") {
    spdlog::set_level(spdlog::level::warn);
  } else if (level == "info") {
    spdlog::set_level(spdlog::level::info);
  } else if (level == "debug") {
    spdlog::set_level(spdlog::level::debug);
  } else {
    throw std::invalid_argument("X_MIXUP_LOG must be quiet, info or debug, got '" + level + "'");
  }
}

}  // namespace xmixup::log
