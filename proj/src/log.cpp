#include "ts3/log.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>

#include <cstdlib>
#include <string>

namespace ts3::log {

bool init_from_env() {
  static bool sink_ready = false;
  if (!sink_ready) {
    auto logger = spdlog::stderr_color_mt("ts3");
    logger->set_pattern("[%l] %v");
    spdlog::set_default_logger(logger);
    sink_ready = true;
  }
  const char* raw = std::getenv("TS3_LOG_LEVEL");
  if (raw == nullptr) return true;
  const std::string level(raw);
  if (level == "error") {
    spdlog::set_level(spdlog::level::err);
  } else if (level == "info") {
    spdlog::set_level(spdlog::level::info);
  } else if (level == "debug") {
    spdlog::set_level(spdlog::level::debug);
  } else {
    return false;
  }
  return true;
}

}  // namespace ts3::log
