#pragma once

#include <cstdint>
#include <vector>

#include "gradmarket/config.hpp"
#include "gradmarket/data.hpp"
#include "gradmarket/model.hpp"

namespace gradmarket {

struct SellerRole {
  int id = 0;
  bool malicious = false;
  int sybil_group = -1;  // >= 0: member of a coordinated submission group
};

// floor(fraction * n), the adversary head count.
int malicious_count(int num_sellers, double adversary_fraction);

// Seeded uniform choice of floor(adversary_fraction * N) malicious sellers.
// Under sybil_backdoor all malicious sellers form group 0. Indexed by id.
std::vector<SellerRole> assign_roles(int num_sellers, const AttackConfig& attack,
                                     std::uint64_t seed);

// Stamp the trigger onto one sample and relabel it to the target class.
// Image layouts (rows, cols > 0) get a patch_side x patch_side patch of
// `value` in the configured corner; flat layouts get the trailing
// offset_dims features set to `value`. Throws std::invalid_argument when the
// patch exceeds the image or offset_dims exceeds the feature count.
Sample apply_trigger(const Sample& sample, const TriggerConfig& trigger,
                     int target_label, int rows, int cols);

// Apply the attack to a malicious seller's shard:
//   backdoor / sybil_backdoor: trigger a seeded round(poison_rate * n) subset;
//   label_flip: relabel a seeded round(flip_fraction * n) subset uniformly at
//     random to a different class;
//   none: identity copy.
Dataset poison_dataset(const Dataset& shard, const AttackConfig& attack,
                       std::uint64_t seed);

// Coordinated-submission post-processing:
// lambda * raw + (1 - lambda) * mimic_target.
GradientVector sybil_blend(const GradientVector& raw,
                           const GradientVector& mimic_target, double lambda);

// Triggered mirror of the test set: every sample whose label differs from
// the target gets the trigger, original label retained. Empty for attack
// kinds without a trigger.
Dataset build_triggered_test(const Dataset& test, const AttackConfig& attack);

}  // namespace gradmarket
