// SPDX-License-Identifier: Apache-2.0
#pragma once

// The `camc` command: gen-data, train, eval, sweep-r, sweep-grid, confusion,
// summary, serve, device, inspect.
//
// Every subcommand that produces files writes them under a run directory
// $CAMC_RUN_DIR/<command>-<hash> (default root "runs"), where <hash> is the
// CRC32 of the resolved config. eval, sweep-grid, confusion, serve and device
// operate on an existing training run directory instead.

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace camc::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Full default configuration. Config files may only use keys present here.
nlohmann::json default_config();

/// Overlays `user` onto `base`; unknown keys and type changes raise UsageError.
void merge_config(nlohmann::json& base, const nlohmann::json& user, const std::string& where = "");

/// Eight lowercase hex digits identifying a resolved config.
std::string config_hash(const nlohmann::json& resolved);

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, char** argv);

}  // namespace camc::cli
