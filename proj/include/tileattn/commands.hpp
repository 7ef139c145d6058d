#pragma once

#include <string>
#include <vector>

#include "tileattn/bench.hpp"

namespace tileattn {

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitConfigError = 2;
inline constexpr int kExitIoError = 3;

// Loads a JSON config file into a GridConfig (missing keys keep defaults).
// Throws std::invalid_argument on malformed content, std::runtime_error on
// I/O failure.
GridConfig load_config_file(const std::string& path);

// Correctness gate over (method, dtype, mask kind, schedule, S, D) with
// S in {64,128,256} and all three mask kinds. Prints one line per cell;
// returns kExitCheckFailed if any cell fails.
int cmd_check(const GridConfig& config);

// Full grid sweep; writes <out>/bench.csv and <out>/manifest.json. Never
// aborts mid-grid on single-point failures.
int cmd_bench(const GridConfig& config);

// Schedule sweep of the tiled kernel per shape; writes <out>/tune.csv and
// <out>/sensitivity.csv and prints the best/runner-up table.
int cmd_tune(const GridConfig& config);

// Reads bench/tune CSVs, emits the SVG plots with companion CSVs and the
// ratio aggregate table (<out>/aggregate.csv).
int cmd_report(const std::vector<std::string>& csv_paths,
               const std::string& out_dir, const std::string& method,
               const std::string& baseline);

}  // namespace tileattn
