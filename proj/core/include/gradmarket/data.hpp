#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gradmarket/config.hpp"

namespace gradmarket {

struct Sample {
  std::vector<double> features;
  int label = 0;
};

// Dense labelled dataset, features flattened row-major per sample. For image
// data `rows`/`cols` record the original layout; flat datasets leave them 0.
struct Dataset {
  int dim = 0;
  int num_classes = 0;
  int rows = 0;
  int cols = 0;
  std::vector<double> features;  // size() == count * dim
  std::vector<int> labels;       // size() == count

  std::size_t size() const { return labels.size(); }
  const double* row(std::size_t i) const { return features.data() + i * dim; }
  Sample get(std::size_t i) const {
    return Sample{{features.begin() + static_cast<std::ptrdiff_t>(i * dim),
                   features.begin() + static_cast<std::ptrdiff_t>((i + 1) * dim)},
                  labels[i]};
  }
  void set(std::size_t i, const Sample& s);
  void append(const Sample& s);
  std::vector<std::size_t> class_counts() const;
};

// Gaussian class blobs: class c is centred at 2.0 * e_c, unit variance,
// labels assigned round robin so the classes are balanced, then all features
// are rescaled to [0, 1] by one global affine map.
Dataset make_synthetic(int classes, int dim, int samples, std::uint64_t seed);

// IDX (big-endian) image/label pair, pixels scaled to [0, 1] by /255.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

// Flat binary round trip for generated datasets (little-endian, documented in
// the README). `tag` is stamped into the header and checked on load so a
// cache built from different generation parameters is never silently reused.
void save_dataset_cache(const std::string& path, const Dataset& train,
                        const Dataset& test, std::uint64_t tag);
bool load_dataset_cache(const std::string& path, Dataset& train, Dataset& test,
                        std::uint64_t tag);

// One run's marketplace split.
struct Partition {
  Dataset buyer_root;
  std::vector<Dataset> sellers;
  Dataset test_clean;
  Dataset test_triggered;  // empty unless the attack kind carries a trigger
  // Target class mix per seller (rows sum to 1); what the allocator aimed
  // for before any pool-exhaustion fallback.
  std::vector<std::vector<double>> class_proportions;
};

// Carve train data into the buyer root and per-seller shards:
//   1. buyer root: round(buyer_root_fraction * |train|) samples, stratified
//      over the target class mix (empirical train mix, or a Dirichlet(alpha)
//      draw when buyer_bias.kind == dirichlet);
//   2. the rest is dealt to num_sellers equal-size shards whose class mix
//      tracks the buyer mix with per-seller multiplicative noise
//      Uniform(-seller_noise, +seller_noise), falling back proportionally
//      when a class pool runs out;
//   3. test_triggered mirrors `test` with the attack trigger stamped on every
//      sample whose label differs from the target (original labels kept).
// Buyer root and seller shards are pairwise disjoint and cover train.
Partition split_market(const Dataset& train, const Dataset& test,
                       const MarketplaceConfig& config, std::uint64_t seed);

}  // namespace gradmarket
