#pragma once

#include <string_view>

namespace semtrack {

enum class LogLevel { kQuiet = 0, kInfo = 1, kDebug = 2 };

void set_log_level(LogLevel level);
bool log_enabled(LogLevel level);
// One line to stderr when `level` is enabled.
void log_line(LogLevel level, std::string_view text);

}  // namespace semtrack
