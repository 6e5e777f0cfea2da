#include "dnae/logging.hpp"

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <mutex>

namespace dnae {

namespace {

LogLevel parse_level(const char* s) {
    if (!s) return LogLevel::info;
    if (std::strcmp(s, "debug") == 0) return LogLevel::debug;
    if (std::strcmp(s, "info") == 0) return LogLevel::info;
    if (std::strcmp(s, "warn") == 0) return LogLevel::warn;
    if (std::strcmp(s, "error") == 0) return LogLevel::error;
    if (std::strcmp(s, "off") == 0) return LogLevel::off;
    return LogLevel::info;
}

std::atomic<int>& level_slot() {
    static std::atomic<int> level{static_cast<int>(parse_level(std::getenv("DNAE_LOG")))};
    return level;
}

const char* level_tag(LogLevel level) {
    switch (level) {
        case LogLevel::debug: return "debug";
        case LogLevel::info:  return "info";
        case LogLevel::warn:  return "warn";
        case LogLevel::error: return "error";
        default:              return "?";
    }
}

} // namespace

LogLevel log_level() { return static_cast<LogLevel>(level_slot().load()); }

void set_log_level(LogLevel level) { level_slot().store(static_cast<int>(level)); }

void log_message(LogLevel level, const std::string& msg) {
    if (static_cast<int>(level) < level_slot().load()) return;
    static std::mutex mu;
    std::lock_guard<std::mutex> lock(mu);
    std::fprintf(stderr, "[dnae:%s] %s\n", level_tag(level), msg.c_str());
}

} // namespace dnae
