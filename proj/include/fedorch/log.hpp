#pragma once

#include <cstdlib>
#include <memory>
#include <string>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

namespace fedorch {

// Shared stderr logger; level from FEDORCH_LOG (trace, debug, info, warn,
// error, critical, off). Defaults to warn.
inline spdlog::logger& log() {
  static const std::shared_ptr<spdlog::logger> logger = [] {
    auto l = spdlog::get("fedorch");
    if (!l) l = spdlog::stderr_color_mt("fedorch");
    const char* env = std::getenv("FEDORCH_LOG");
    l->set_level(env ? spdlog::level::from_str(env) : spdlog::level::warn);
    l->set_pattern("[%H:%M:%S.%e] [%^%l%$] %v");
    return l;
  }();
  return *logger;
}

}  // namespace fedorch
