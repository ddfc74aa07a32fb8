#pragma once

#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gradmarket/engine.hpp"

namespace gradmarket {

struct CocResult {
  int t_star = 0;       // first round reaching the milestone (1-based)
  long long coc = 0;    // selected-gradient count up to and including t_star
};

struct MilestoneResult {
  double target = 0.0;
  std::optional<CocResult> reached;
};

// Everything the run-level report carries. Optionals are metrics whose
// preconditions a given trace does not meet (no malicious sellers, no
// triggered test set, single round, ...).
struct MetricsReport {
  // per-round series, index t-1
  std::vector<int> cost;
  std::vector<double> accuracy;
  std::vector<std::optional<double>> asr;
  std::vector<std::optional<double>> msr;  // |S_t ∩ M| / |S_t|

  std::vector<MilestoneResult> milestones;
  std::optional<double> msr_fraction;      // selected-gradient fraction
  std::optional<double> msr_rate;          // per-seller per-round rate
  std::optional<double> bsr_rate;
  std::optional<double> divergence_selection_r;
  std::optional<double> payment_gini_benign;
  std::optional<double> entropy_bits;
  std::optional<double> entropy_normalized;
  std::optional<double> jaccard_stability;
  double benign_cost_per_round = 0.0;
  double malicious_cost_per_round = 0.0;
  long long total_cost = 0;
  double final_accuracy = 0.0;
  std::optional<double> final_asr;
  std::vector<long long> payments;  // per seller id
};

// First round whose accuracy reaches the milestone, plus the cumulative cost
// up to it. Absent when the milestone is never reached.
std::optional<CocResult> cost_of_convergence(std::span<const double> accuracy,
                                             std::span<const int> cost,
                                             double milestone);

// Fraction of all selections that came from malicious sellers; absent when
// nothing was ever selected.
std::optional<double> malicious_selection_rate(const RunTrace& trace);

// Mean per-round per-seller selection probability over `sellers`.
double per_seller_selection_rate(const RunTrace& trace, std::span<const int> sellers);

// Pearson r between submission divergence and the 0/1 selection indicator,
// pooled over every (seller, round) submission. Absent when fewer than two
// submissions exist or either variable is constant.
std::optional<double> divergence_selection_correlation(const RunTrace& trace);

// Gini over a nonempty payment vector; 0 when all payments are zero.
double payment_gini(std::span<const long long> payments);

// Shannon entropy (bits, and normalised by log2 N) of selected seller ids.
std::pair<double, double> selection_diversity(const RunTrace& trace);

// Mean Jaccard overlap of consecutive selection sets (T >= 2). Two empty
// sets count as identical; empty-vs-nonempty counts as 0.
double selection_stability(const RunTrace& trace);

// Fraction of triggered inputs the model classifies as the target label.
double attack_success_rate(const ModelParams& model, const Dataset& triggered,
                           int target_label);

// (mean benign selections per round, mean malicious selections per round).
std::pair<double, double> cost_composition(const RunTrace& trace);

// Assemble the full report for one trace (requires >= 1 round).
MetricsReport build_report(const RunTrace& trace, std::span<const double> milestones);

// Per-round CSV across repeats: repeat,round,cost,accuracy,asr,msr_fraction,
// selected_ids (semicolon-joined). Optional fields render as empty cells.
void write_metrics_csv(std::ostream& out, std::span<const RunTrace> traces);

// summary.json text: config hash and seed, per-repeat run-level metrics,
// mean/std aggregation and mean per-round series.
std::string summary_json(const MarketplaceConfig& config,
                         std::span<const RunTrace> traces,
                         std::span<const MetricsReport> reports);

}  // namespace gradmarket
