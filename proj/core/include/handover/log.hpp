#pragma once

#include <string_view>

namespace handover {

enum class LogLevel { Debug, Info, Warning, Error, Off };

void set_log_level(LogLevel level);
LogLevel log_level();

void log_info(std::string_view message);
void log_warning(std::string_view message);

}  // namespace handover
