#pragma once

#include <filesystem>
#include <vector>

#include "gradmarket/config.hpp"
#include "gradmarket/engine.hpp"
#include "gradmarket/metrics.hpp"

namespace gradmarket::cli {

// Run every repeat of one experiment config and write the full output set
// (config.yaml echo, per-repeat trace files, metrics.csv, summary.json) under
// `out`. With jobs > 1, repeats run in parallel; a single repeat instead fans
// its seller training out across the pool. Either way the bytes on disk are
// identical to a serial run because every repeat is a pure function of
// (config, repeat index).
std::vector<MetricsReport> execute_experiment(const MarketplaceConfig& config,
                                              const std::filesystem::path& out,
                                              int jobs);

}  // namespace gradmarket::cli
