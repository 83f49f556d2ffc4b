#include "fedirr/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace fedirr::log {

namespace {
std::atomic<Level> g_level{Level::warn};
std::mutex g_mu;
} // namespace

void set_level(Level level) noexcept { g_level = level; }
Level level() noexcept { return g_level; }

void write(Level lvl, std::string_view line) {
  if (lvl < g_level.load()) return;
  static constexpr const char* names[] = {"debug", "info", "warn", "error"};
  std::lock_guard lock(g_mu);
  std::cerr << '[' << names[static_cast<int>(lvl)] << "] " << line << '\n';
}

} // namespace fedirr::log
