#ifndef HOSL_LOG_HPP
#define HOSL_LOG_HPP

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <string>

namespace hosl {

// Verbosity from HOSL_LOG: quiet | info (default) | debug.
enum class LogLevel { kQuiet = 0, kInfo = 1, kDebug = 2 };

inline LogLevel log_level() {
  static const LogLevel level = [] {
    const char* env = std::getenv("HOSL_LOG");
    if (!env) return LogLevel::kInfo;
    if (std::strcmp(env, "quiet") == 0) return LogLevel::kQuiet;
    if (std::strcmp(env, "debug") == 0) return LogLevel::kDebug;
    return LogLevel::kInfo;
  }();
  return level;
}

inline void log_info(const std::string& msg) {
  if (log_level() >= LogLevel::kInfo) {
    std::fprintf(stderr, "[hosl] %s\n", msg.c_str());
  }
}

inline void log_debug(const std::string& msg) {
  if (log_level() >= LogLevel::kDebug) {
    std::fprintf(stderr, "[hosl] %s\n", msg.c_str());
  }
}

}  // namespace hosl

#endif  // HOSL_LOG_HPP
