#include "gradmarket/attack.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "gradmarket/rng.hpp"

namespace gradmarket {

namespace {

bool has_trigger(AttackKind kind) {
  return kind == AttackKind::backdoor || kind == AttackKind::sybil_backdoor;
}

}  // namespace

int malicious_count(int num_sellers, double adversary_fraction) {
  return static_cast<int>(
      std::floor(adversary_fraction * static_cast<double>(num_sellers)));
}

std::vector<SellerRole> assign_roles(int num_sellers, const AttackConfig& attack,
                                     std::uint64_t seed) {
  if (num_sellers < 1) throw std::invalid_argument("assign_roles: no sellers");
  std::vector<SellerRole> roles(num_sellers);
  for (int i = 0; i < num_sellers; ++i) roles[i].id = i;
  const int bad = attack.kind == AttackKind::none
                      ? 0
                      : malicious_count(num_sellers, attack.adversary_fraction);
  if (bad == 0) return roles;

  Rng rng(seed);
  std::vector<int> ids(num_sellers);
  std::iota(ids.begin(), ids.end(), 0);
  rng.shuffle(ids);
  for (int k = 0; k < bad; ++k) {
    auto& role = roles[ids[k]];
    role.malicious = true;
    if (attack.kind == AttackKind::sybil_backdoor) role.sybil_group = 0;
  }
  return roles;
}

Sample apply_trigger(const Sample& sample, const TriggerConfig& trigger,
                     int target_label, int rows, int cols) {
  Sample out = sample;
  if (rows > 0 && cols > 0) {
    const int side = trigger.patch_side;
    if (side > rows || side > cols) {
      throw std::invalid_argument("apply_trigger: patch larger than the image");
    }
    if (static_cast<std::size_t>(rows) * cols != out.features.size()) {
      throw std::invalid_argument("apply_trigger: image layout mismatch");
    }
    const bool bottom = trigger.location == TriggerLocation::bottom_right ||
                        trigger.location == TriggerLocation::bottom_left;
    const bool right = trigger.location == TriggerLocation::bottom_right ||
                       trigger.location == TriggerLocation::top_right;
    const int r0 = bottom ? rows - side : 0;
    const int c0 = right ? cols - side : 0;
    for (int r = r0; r < r0 + side; ++r) {
      for (int c = c0; c < c0 + side; ++c) {
        out.features[static_cast<std::size_t>(r) * cols + c] = trigger.value;
      }
    }
  } else {
    const int k = trigger.offset_dims;
    if (k > static_cast<int>(out.features.size())) {
      throw std::invalid_argument(
          "apply_trigger: offset_dims exceeds the feature count");
    }
    for (int i = 0; i < k; ++i) {
      out.features[out.features.size() - 1 - static_cast<std::size_t>(i)] =
          trigger.value;
    }
  }
  out.label = target_label;
  return out;
}

Dataset poison_dataset(const Dataset& shard, const AttackConfig& attack,
                       std::uint64_t seed) {
  Dataset out = shard;
  if (attack.kind == AttackKind::none) return out;

  Rng rng(seed);
  const std::size_t n = shard.size();

  if (has_trigger(attack.kind)) {
    if (attack.target_label < 0 || attack.target_label >= shard.num_classes) {
      throw std::invalid_argument("poison_dataset: target label out of range");
    }
    const auto count = static_cast<std::size_t>(
        std::llround(attack.poison_rate * static_cast<double>(n)));
    for (std::size_t id : rng.sample_indices(n, count)) {
      out.set(id, apply_trigger(out.get(id), attack.trigger, attack.target_label,
                                out.rows, out.cols));
    }
    return out;
  }

  // label_flip
  if (shard.num_classes < 2) {
    throw std::invalid_argument("poison_dataset: label_flip needs >= 2 classes");
  }
  const auto count = static_cast<std::size_t>(
      std::llround(attack.flip_fraction * static_cast<double>(n)));
  for (std::size_t id : rng.sample_indices(n, count)) {
    const int old = out.labels[id];
    // Uniform over the other classes.
    const auto pick =
        static_cast<int>(rng.uniform_index(static_cast<std::size_t>(shard.num_classes - 1)));
    out.labels[id] = pick < old ? pick : pick + 1;
  }
  return out;
}

GradientVector sybil_blend(const GradientVector& raw,
                           const GradientVector& mimic_target, double lambda) {
  if (raw.size() != mimic_target.size()) {
    throw std::invalid_argument("sybil_blend: length mismatch");
  }
  std::vector<double> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    out[i] = lambda * raw[i] + (1.0 - lambda) * mimic_target[i];
  }
  return GradientVector(std::move(out));
}

Dataset build_triggered_test(const Dataset& test, const AttackConfig& attack) {
  Dataset out;
  out.dim = test.dim;
  out.num_classes = test.num_classes;
  out.rows = test.rows;
  out.cols = test.cols;
  if (!has_trigger(attack.kind)) return out;
  for (std::size_t i = 0; i < test.size(); ++i) {
    if (test.labels[i] == attack.target_label) continue;
    Sample s = apply_trigger(test.get(i), attack.trigger, attack.target_label,
                             test.rows, test.cols);
    s.label = test.labels[i];  // original label; success means flipping it
    out.append(s);
  }
  return out;
}

}  // namespace gradmarket
