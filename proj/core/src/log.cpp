#include "nudge/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace nudge::log {

namespace {
std::atomic<Level> g_level{Level::Warn};
std::mutex g_mu;

const char* tag(Level l) {
    switch (l) {
    case Level::Debug: return "debug";
    case Level::Info: return "info";
    case Level::Warn: return "warn";
    case Level::Error: return "error";
    case Level::Off: break;
    }
    return "";
}
} // namespace

void set_level(Level l) { g_level = l; }
Level level() { return g_level; }

void write(Level l, std::string_view message) {
    if (l < g_level.load() || l == Level::Off) {
        return;
    }
    std::lock_guard lock(g_mu);
    std::clog << "[nudge:" << tag(l) << "] " << message << '\n';
}

} // namespace nudge::log
