#pragma once

#include <spdlog/spdlog.h>

#include <utility>

namespace xmixup::log {

/// Applies X_MIXUP_LOG={quiet|info|debug} to the default logger (stderr).
/// Unset means info. Called once by the CLI; library code just logs.
void configure_from_env();

template <typename... Args>
void info(fmt::format_string<Args...> fmt, Args&&... args) {
  spdlog::info(fmt, std::forward<Args>(args)...);
}

template <typename... Args>
void debug(fmt::format_string<Args...> fmt, Args&&... args) {
  spdlog::debug(fmt, std::forward<Args>(args)...);
}

template <typename... Args>
void warn(fmt::format_string<Args...> fmt, Args&&... args) {
  spdlog::warn(fmt, std::forward<Args>(args)...);
}

}  // namespace xmixup::log
