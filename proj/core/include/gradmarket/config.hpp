#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace gradmarket {

// The config document is malformed YAML (or not a mapping at all).
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The config document parsed but a field violates its constraint. The
// message always names the field and the constraint.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A data file could not be read or has malformed contents.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DatasetKind { synthetic, idx_images };
enum class BuyerBiasKind { unbiased, dirichlet };
enum class AggregatorKind { fedavg, fltrust, martfl, skymask };
enum class AttackKind { none, backdoor, label_flip, sybil_backdoor };
enum class TriggerLocation { bottom_right, bottom_left, top_right, top_left };

std::string_view to_string(DatasetKind k);
std::string_view to_string(BuyerBiasKind k);
std::string_view to_string(AggregatorKind k);
std::string_view to_string(AttackKind k);
std::string_view to_string(TriggerLocation k);

struct DatasetConfig {
  DatasetKind kind = DatasetKind::synthetic;
  // synthetic
  int classes = 3;
  int dim = 8;
  int train_samples = 6000;
  int test_samples = 1000;
  std::string cache;  // optional on-disk cache for the generated dataset
  // idx-images
  std::string train_images;
  std::string train_labels;
  std::string test_images;
  std::string test_labels;
};

struct BuyerBiasConfig {
  BuyerBiasKind kind = BuyerBiasKind::unbiased;
  double alpha = 0.3;  // Dirichlet concentration when kind == dirichlet
};

struct AggregatorConfig {
  AggregatorKind kind = AggregatorKind::fedavg;
  // skymask mask optimisation
  int mask_steps = 20;
  double mask_lr = 0.1;
};

struct TriggerConfig {
  int patch_side = 10;  // square patch edge, image datasets
  double value = 1.0;   // written into every triggered feature
  TriggerLocation location = TriggerLocation::bottom_right;
  int offset_dims = 8;  // trailing feature count, flat datasets
};

struct AttackConfig {
  AttackKind kind = AttackKind::none;
  double adversary_fraction = 0.0;
  double poison_rate = 0.5;     // triggered fraction of a malicious shard
  double flip_fraction = 0.5;   // relabelled fraction under label_flip
  int target_label = 0;
  double mimicry_lambda = 0.5;  // sybil blend: lambda*raw + (1-lambda)*mimic
  TriggerConfig trigger;
};

struct MarketplaceConfig {
  DatasetConfig dataset;
  int num_sellers = 30;
  int num_rounds = 200;
  double sample_fraction = 0.3;  // sellers drawn per round: ceil(fraction*N)
  int local_epochs = 2;
  int batch_size = 64;
  double local_lr = 0.001;
  double buyer_root_fraction = 0.02;
  BuyerBiasConfig buyer_bias;
  double seller_noise = 0.3;  // multiplicative class-proportion noise bound
  AggregatorConfig aggregator;
  AttackConfig attack;
  std::vector<double> milestones = {0.70, 0.80, 0.85};
  int repeats = 10;
  std::uint64_t seed = 0;
};

// Parse a YAML document into a validated config. Unknown keys are rejected.
// `overrides` are dotted-path assignments ("attack.poison_rate=0.1") applied
// on top of the document before validation.
MarketplaceConfig load_config(const std::string& text,
                              std::span<const std::string> overrides = {});
MarketplaceConfig load_config_file(const std::string& path,
                                   std::span<const std::string> overrides = {});

// Canonical YAML serialisation: fixed key order, shortest round-trip number
// formatting. load_config(serialize_config(c)) == c, bit for bit.
std::string serialize_config(const MarketplaceConfig& config);

// FNV-1a hash of the canonical serialisation. Two configs hash equal iff
// their canonical forms are identical.
std::uint64_t config_hash(const MarketplaceConfig& config);
std::string config_hash_hex(const MarketplaceConfig& config);

// Stable per-purpose seed streams: every random decision in a run draws from
// Rng(derive_seed(run_seed, label, index)) for a documented (label, index).
std::uint64_t derive_seed(std::uint64_t seed, std::string_view label,
                          std::uint64_t index);

// Shortest round-trip decimal formatting (std::to_chars).
std::string format_double(double value);

}  // namespace gradmarket
