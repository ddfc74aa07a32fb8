#pragma once

#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "gradmarket/config.hpp"
#include "gradmarket/data.hpp"
#include "gradmarket/model.hpp"

namespace gradmarket {

// One seller's round submission. Deliberately carries no benign/malicious
// flag: aggregators only ever see what a real buyer would.
struct Submission {
  int seller_id = 0;
  std::size_t num_samples = 0;
  GradientVector delta;
};

struct AggregationResult {
  std::vector<int> selected;     // ascending seller ids
  std::vector<double> weights;   // aligned with `selected`
  GradientVector aggregate;      // zero vector when nothing is selected
  std::vector<double> scores;    // aligned with the submission order
};

// Size-weighted average; every submitter is selected.
AggregationResult fedavg(std::span<const Submission> subs);

// Trust scores max(0, cos(g_i, g_B)); selected = positive trust; submissions
// renormalised to the buyer gradient's magnitude before trust-weighted
// averaging. Throws on a zero-norm buyer gradient.
AggregationResult fltrust(std::span<const Submission> subs,
                          const GradientVector& buyer_delta);

struct MartflOutcome {
  AggregationResult result;
  GradientVector next_reference;
};

// Cosine similarity to the evolving reference; the higher-mean group of an
// exact 1-D 2-means split is selected and averaged with max(0, s_i) weights
// (uniform fallback when all clip to zero). The reference moves to the
// aggregate whenever it is nonzero.
MartflOutcome martfl(std::span<const Submission> subs,
                     const GradientVector& reference);

// Per-submission sigmoid masks trained on the buyer root, 2-means clustering
// of the mask vectors, larger cluster selected and averaged unweighted.
AggregationResult skymask(std::span<const Submission> subs,
                          const ModelParams& global, const Dataset& buyer_root,
                          int mask_steps, double mask_lr);

// Exact 1-D 2-means used by martfl: minimises total within-group squared
// deviation over all threshold splits. Input sorted ascending strictly
// increasing somewhere (not all equal); returns the size of the low group
// (1..n-1), smallest optimum on ties.
std::size_t two_means_low_count(const std::vector<double>& sorted_values);

// Loss and d(loss)/d(mask logits) of the masked model w + sigmoid(z) * delta
// evaluated full batch on `data`. Exposed for finite-difference testing.
std::pair<double, std::vector<double>> mask_loss_gradient(
    const ModelParams& global, const GradientVector& delta,
    const std::vector<double>& mask_logits, const Dataset& data);

// Stateful dispatcher used by the engine: owns the martfl reference between
// rounds. Copyable so experiment state can be snapshotted.
class RoundAggregator {
 public:
  explicit RoundAggregator(const AggregatorConfig& config) : config_(config) {}

  // `buyer_delta` is this round's buyer-root gradient; `global` and
  // `buyer_root` feed skymask. martfl seeds its reference with the first
  // round's buyer delta.
  AggregationResult run(std::span<const Submission> subs,
                        const GradientVector& buyer_delta,
                        const ModelParams& global, const Dataset& buyer_root);

  const AggregatorConfig& config() const { return config_; }
  const std::optional<GradientVector>& reference() const { return reference_; }

 private:
  AggregatorConfig config_;
  std::optional<GradientVector> reference_;  // martfl only
};

}  // namespace gradmarket
