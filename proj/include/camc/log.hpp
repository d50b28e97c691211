// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>

namespace camc::log {

enum class Level { Debug, Info, Warn, Error };

using Sink = std::function<void(Level, const std::string&)>;

/// Replaces the process-wide sink (default: stderr for Warn and above).
void set_sink(Sink sink);
void reset_sink();
void set_min_level(Level level);

void write(Level level, const std::string& msg);
inline void info(const std::string& msg) { write(Level::Info, msg); }
inline void warn(const std::string& msg) { write(Level::Warn, msg); }
inline void error(const std::string& msg) { write(Level::Error, msg); }

}  // namespace camc::log
