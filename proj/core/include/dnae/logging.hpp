#pragma once

#include <string>

namespace dnae {

enum class LogLevel { debug = 0, info = 1, warn = 2, error = 3, off = 4 };

/// Minimum level emitted to stderr. Initialized once from the DNAE_LOG
/// environment variable ("debug", "info", "warn", "error", "off");
/// defaults to info.
LogLevel log_level();
void set_log_level(LogLevel level);

void log_message(LogLevel level, const std::string& msg);

inline void log_debug(const std::string& msg) { log_message(LogLevel::debug, msg); }
inline void log_info(const std::string& msg)  { log_message(LogLevel::info, msg); }
inline void log_warn(const std::string& msg)  { log_message(LogLevel::warn, msg); }
inline void log_error(const std::string& msg) { log_message(LogLevel::error, msg); }

} // namespace dnae
