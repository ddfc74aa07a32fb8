#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gradmarket/aggregate.hpp"
#include "gradmarket/attack.hpp"
#include "gradmarket/config.hpp"
#include "gradmarket/data.hpp"
#include "gradmarket/model.hpp"

namespace gradmarket {

class ThreadPool;

// Everything the buyer's ledger remembers about one round. `scores`,
// `divergence` and `payments` align with `sampled`; `weights` aligns with
// `selected`.
struct RoundLedger {
  int round = 0;
  std::vector<int> sampled;
  std::vector<int> selected;
  std::vector<double> weights;
  std::vector<double> scores;
  std::vector<double> divergence;  // ||g_i - g_B|| at submission time
  std::vector<int> payments;       // 0/1, unit payment per selection
  int cost = 0;                    // |S_t|
  double accuracy = 0.0;
  std::optional<double> asr;       // absent when there is no triggered test set
};

struct RunTrace {
  std::string config_hash;  // canonical config hash, hex
  std::uint64_t run_seed = 0;
  int num_sellers = 0;
  int num_rounds = 0;
  std::vector<SellerRole> roles;   // indexed by seller id
  std::vector<RoundLedger> rounds; // rounds 1..T in order
  ModelParams final_model;
};

// Copyable snapshot of a run in progress.
struct ExperimentState {
  MarketplaceConfig config;
  std::uint64_t run_seed = 0;
  Partition partition;  // seller shards already poisoned
  std::vector<SellerRole> roles;
  ModelParams model;
  RoundAggregator aggregator{AggregatorConfig{}};
  GradientVector prev_round_delta;  // applied global delta of round t-1
};

// Materialise the configured dataset pair (train, test). Synthetic data is
// generated from the config seed (identical across repeats) and round-trips
// through dataset.cache when set; idx-images loads the four files.
std::pair<Dataset, Dataset> build_dataset(const MarketplaceConfig& config);

// Split, roles, poisoning, model init; everything seeded from run_seed.
ExperimentState init_experiment(const MarketplaceConfig& config,
                                const Dataset& train, const Dataset& test,
                                std::uint64_t run_seed);

// One marketplace round: sample sellers, train locally, sybil post-process,
// refresh the buyer gradient, aggregate, pay, apply the update, evaluate.
// Seller training fans out over `pool` when provided; results are merged in
// seller-id order so the ledger is schedule-independent.
RoundLedger run_round(ExperimentState& state, int t, ThreadPool* pool = nullptr);

// The full lifecycle for one seed: split -> T rounds -> final evaluation.
RunTrace run_experiment(const MarketplaceConfig& config, const Dataset& train,
                        const Dataset& test, std::uint64_t run_seed,
                        ThreadPool* pool = nullptr);
RunTrace run_experiment(const MarketplaceConfig& config, std::uint64_t run_seed,
                        ThreadPool* pool = nullptr);

// Cumulative per-seller payments; conserves the total selected count.
std::vector<long long> settle(const RunTrace& trace);

// Line-delimited JSON trace file (header record, one record per round, final
// model record). read_trace throws IoError on malformed input.
void write_trace(const std::string& path, const RunTrace& trace);
RunTrace read_trace(const std::string& path);

}  // namespace gradmarket
