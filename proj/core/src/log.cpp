#include "handover/log.hpp"

#include <atomic>
#include <iostream>

namespace handover {
namespace {
std::atomic<LogLevel> g_level{LogLevel::Warning};
}

void set_log_level(LogLevel level) { g_level = level; }
LogLevel log_level() { return g_level; }

void log_info(std::string_view message) {
    if (g_level <= LogLevel::Info) std::cerr << "[info] " << message << '\n';
}

void log_warning(std::string_view message) {
    if (g_level <= LogLevel::Warning) std::cerr << "[warn] " << message << '\n';
}

}  // namespace handover
