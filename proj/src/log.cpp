// SPDX-License-Identifier: Apache-2.0
#include "camc/log.hpp"

#include <iostream>
#include <mutex>

namespace camc::log {

namespace {

std::mutex g_mu;
Level g_min = Level::Warn;

void stderr_sink(Level level, const std::string& msg) {
  static constexpr const char* kTag[] = {"debug", "info", "warn", "error"};
  std::cerr << "[" << kTag[static_cast<int>(level)] << "] " << msg << '\n';
}

Sink& sink() {
  static Sink s = stderr_sink;
  return s;
}

}  // namespace

void set_sink(Sink s) {
  std::lock_guard lock(g_mu);
  sink() = std::move(s);
}

void reset_sink() { set_sink(stderr_sink); }

void set_min_level(Level level) {
  std::lock_guard lock(g_mu);
  g_min = level;
}

void write(Level level, const std::string& msg) {
  std::lock_guard lock(g_mu);
  if (level < g_min) return;
  sink()(level, msg);
}

}  // namespace camc::log
