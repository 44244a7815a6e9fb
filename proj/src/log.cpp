#include "semtrack/log.hpp"

#include <atomic>
#include <cstdio>

namespace semtrack {

namespace {
std::atomic<int> g_level{static_cast<int>(LogLevel::kQuiet)};
}

void set_log_level(LogLevel level) { g_level = static_cast<int>(level); }

bool log_enabled(LogLevel level) { return static_cast<int>(level) <= g_level.load(); }

void log_line(LogLevel level, std::string_view text) {
  if (!log_enabled(level)) return;
  std::fprintf(stderr, "%.*s\n", static_cast<int>(text.size()), text.data());
}

}  // namespace semtrack
