#pragma once

#include <string_view>

namespace tiltcrm::log {

enum class Level { error = 0, info = 1, debug = 2 };

// Reads TILTCRM_LOG once; defaults to error.
Level threshold();
void set_threshold(Level level);

void write(Level level, std::string_view message);

inline void error(std::string_view m) { write(Level::error, m); }
inline void info(std::string_view m) { write(Level::info, m); }
inline void debug(std::string_view m) { write(Level::debug, m); }

}  // namespace tiltcrm::log
