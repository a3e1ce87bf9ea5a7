#pragma once

#include <spdlog/spdlog.h>

namespace ts3::log {

// Reads TS3_LOG_LEVEL (error | info | debug) and routes spdlog output to
// stderr. Unset keeps the current level; an unknown value returns false.
bool init_from_env();

}  // namespace ts3::log
