#include "gradmarket/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "gradmarket/attack.hpp"
#include "gradmarket/rng.hpp"

namespace gradmarket {

namespace {

constexpr double kClassSeparation = 2.0;
constexpr double kProportionFloor = 1e-6;  // keeps every class reachable

// Largest-remainder split of `total` over non-negative weights (sum > 0).
// Equal fractional remainders are broken by priority rotated with
// `tie_rotation` so repeated allocations do not systematically favour the
// lowest class index.
std::vector<long long> largest_remainder(const std::vector<double>& weights,
                                         long long total, int tie_rotation) {
  const std::size_t n = weights.size();
  const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<long long> counts(n, 0);
  if (total <= 0) return counts;
  std::vector<double> frac(n, 0.0);
  long long assigned = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double share = weights[i] / sum * static_cast<double>(total);
    counts[i] = static_cast<long long>(std::floor(share));
    frac[i] = share - static_cast<double>(counts[i]);
    assigned += counts[i];
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const std::size_t rot = n == 0 ? 0 : static_cast<std::size_t>(tie_rotation) % n;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (frac[a] != frac[b]) return frac[a] > frac[b];
    return (a + n - rot) % n < (b + n - rot) % n;
  });
  for (long long k = total - assigned; k > 0; --k) {
    counts[order[static_cast<std::size_t>(total - assigned - k)]] += 1;
  }
  return counts;
}

// Largest-remainder allocation capped by per-class capacity; shortfall is
// redistributed over classes with room left (proportional fallback).
std::vector<long long> allocate_capped(const std::vector<double>& weights,
                                       long long total,
                                       std::vector<long long> capacity,
                                       int tie_rotation) {
  const std::size_t n = weights.size();
  std::vector<long long> counts(n, 0);
  long long todo = total;
  while (todo > 0) {
    std::vector<double> w(n, 0.0);
    double w_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (capacity[i] > 0) {
        w[i] = weights[i];
        w_sum += w[i];
      }
    }
    if (w_sum <= 0.0) {
      // Target classes are exhausted; fall back to whatever room remains.
      for (std::size_t i = 0; i < n; ++i) {
        w[i] = static_cast<double>(capacity[i]);
        w_sum += w[i];
      }
      if (w_sum <= 0.0) {
        throw std::invalid_argument("split_market: sample pool exhausted");
      }
    }
    const auto ask = largest_remainder(w, todo, tie_rotation);
    for (std::size_t i = 0; i < n; ++i) {
      const long long take = std::min(ask[i], capacity[i]);
      counts[i] += take;
      capacity[i] -= take;
      todo -= take;
    }
  }
  return counts;
}

std::vector<unsigned char> read_all(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return bytes;
}

std::uint32_t be32(const unsigned char* p) {
  return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
         (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

// Little-endian scalar IO for the dataset cache.
void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

struct ByteReader {
  const unsigned char* p;
  const unsigned char* end;
  bool ok = true;
  std::uint32_t u32() {
    if (end - p < 4) { ok = false; return 0; }
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(p[i]) << (8 * i);
    p += 4;
    return v;
  }
  std::uint64_t u64() {
    if (end - p < 8) { ok = false; return 0; }
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(p[i]) << (8 * i);
    p += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
};

void put_dataset(std::string& out, const Dataset& ds) {
  put_u32(out, static_cast<std::uint32_t>(ds.dim));
  put_u32(out, static_cast<std::uint32_t>(ds.num_classes));
  put_u32(out, static_cast<std::uint32_t>(ds.rows));
  put_u32(out, static_cast<std::uint32_t>(ds.cols));
  put_u64(out, ds.size());
  for (double v : ds.features) put_f64(out, v);
  for (int l : ds.labels) put_u32(out, static_cast<std::uint32_t>(l));
}

bool get_dataset(ByteReader& r, Dataset& ds) {
  ds.dim = static_cast<int>(r.u32());
  ds.num_classes = static_cast<int>(r.u32());
  ds.rows = static_cast<int>(r.u32());
  ds.cols = static_cast<int>(r.u32());
  const std::uint64_t count = r.u64();
  if (!r.ok || ds.dim <= 0 || count > (1ull << 32)) return false;
  ds.features.resize(count * static_cast<std::uint64_t>(ds.dim));
  ds.labels.resize(count);
  for (double& v : ds.features) v = r.f64();
  for (int& l : ds.labels) l = static_cast<int>(r.u32());
  return r.ok;
}

constexpr std::uint64_t kCacheMagic = 0x4753444d43414348ull;  // "GSDMCACH"
constexpr std::uint32_t kCacheVersion = 1;

}  // namespace

void Dataset::set(std::size_t i, const Sample& s) {
  if (static_cast<int>(s.features.size()) != dim) {
    throw std::invalid_argument("Dataset::set: feature width mismatch");
  }
  std::copy(s.features.begin(), s.features.end(),
            features.begin() + static_cast<std::ptrdiff_t>(i * dim));
  labels[i] = s.label;
}

void Dataset::append(const Sample& s) {
  if (static_cast<int>(s.features.size()) != dim) {
    throw std::invalid_argument("Dataset::append: feature width mismatch");
  }
  features.insert(features.end(), s.features.begin(), s.features.end());
  labels.push_back(s.label);
}

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(num_classes, 0);
  for (int l : labels) {
    if (l < 0 || l >= num_classes) {
      throw std::invalid_argument("Dataset::class_counts: label out of range");
    }
    counts[static_cast<std::size_t>(l)] += 1;
  }
  return counts;
}

Dataset make_synthetic(int classes, int dim, int samples, std::uint64_t seed) {
  if (classes < 2) throw std::invalid_argument("make_synthetic: need at least 2 classes");
  if (dim < classes) throw std::invalid_argument("make_synthetic: dim must be >= classes");
  if (samples < 10 * classes) {
    throw std::invalid_argument("make_synthetic: need at least 10 samples per class");
  }
  Rng rng(seed);
  Dataset ds;
  ds.dim = dim;
  ds.num_classes = classes;
  ds.features.resize(static_cast<std::size_t>(samples) * dim);
  ds.labels.resize(samples);
  for (int i = 0; i < samples; ++i) {
    const int label = i % classes;  // round robin keeps classes balanced
    ds.labels[i] = label;
    double* row = ds.features.data() + static_cast<std::size_t>(i) * dim;
    for (int j = 0; j < dim; ++j) {
      row[j] = (j == label ? kClassSeparation : 0.0) + rng.normal();
    }
  }
  // One affine map onto [0, 1] for the whole feature block, preserving the
  // relative geometry of the class blobs.
  const auto [mn_it, mx_it] = std::minmax_element(ds.features.begin(), ds.features.end());
  const double mn = *mn_it, mx = *mx_it;
  const double span = mx > mn ? mx - mn : 1.0;
  for (double& v : ds.features) v = (v - mn) / span;
  return ds;
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  const auto ib = read_all(images_path);
  if (ib.size() < 16) throw IoError(images_path + ": truncated image header");
  if (be32(ib.data()) != 0x00000803u) {
    throw IoError(images_path + ": bad image magic");
  }
  const std::uint64_t count = be32(ib.data() + 4);
  const std::uint64_t rows = be32(ib.data() + 8);
  const std::uint64_t cols = be32(ib.data() + 12);
  if (count == 0 || rows == 0 || cols == 0) {
    throw IoError(images_path + ": empty image file");
  }
  if (ib.size() != 16 + count * rows * cols) {
    throw IoError(images_path + ": image payload length mismatch");
  }

  const auto lb = read_all(labels_path);
  if (lb.size() < 8) throw IoError(labels_path + ": truncated label header");
  if (be32(lb.data()) != 0x00000801u) {
    throw IoError(labels_path + ": bad label magic");
  }
  const std::uint64_t label_count = be32(lb.data() + 4);
  if (lb.size() != 8 + label_count) {
    throw IoError(labels_path + ": label payload length mismatch");
  }
  if (label_count != count) {
    throw IoError(images_path + ": image/label count mismatch");
  }

  Dataset ds;
  ds.rows = static_cast<int>(rows);
  ds.cols = static_cast<int>(cols);
  ds.dim = static_cast<int>(rows * cols);
  ds.features.resize(count * rows * cols);
  ds.labels.resize(count);
  for (std::size_t i = 0; i < ds.features.size(); ++i) {
    ds.features[i] = static_cast<double>(ib[16 + i]) / 255.0;
  }
  int max_label = 0;
  for (std::uint64_t i = 0; i < count; ++i) {
    ds.labels[i] = static_cast<int>(lb[8 + i]);
    max_label = std::max(max_label, ds.labels[i]);
  }
  ds.num_classes = max_label + 1;
  return ds;
}

void save_dataset_cache(const std::string& path, const Dataset& train,
                        const Dataset& test, std::uint64_t tag) {
  std::string blob;
  blob.reserve(32 + 8 * (train.features.size() + test.features.size()));
  put_u64(blob, kCacheMagic);
  put_u32(blob, kCacheVersion);
  put_u64(blob, tag);
  put_dataset(blob, train);
  put_dataset(blob, test);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write dataset cache: " + path);
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!out) throw IoError("cannot write dataset cache: " + path);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot write dataset cache: " + path);
}

bool load_dataset_cache(const std::string& path, Dataset& train, Dataset& test,
                        std::uint64_t tag) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  ByteReader r{bytes.data(), bytes.data() + bytes.size()};
  if (r.u64() != kCacheMagic || r.u32() != kCacheVersion || r.u64() != tag || !r.ok) {
    return false;
  }
  Dataset a, b;
  if (!get_dataset(r, a) || !get_dataset(r, b) || r.p != r.end) return false;
  train = std::move(a);
  test = std::move(b);
  return true;
}

Partition split_market(const Dataset& train, const Dataset& test,
                       const MarketplaceConfig& config, std::uint64_t seed) {
  const int num_classes = train.num_classes;
  const int n_sellers = config.num_sellers;
  const long long n_train = static_cast<long long>(train.size());
  if (num_classes < 1 || n_train == 0) {
    throw std::invalid_argument("split_market: empty training data");
  }
  const long long root_size =
      std::llround(config.buyer_root_fraction * static_cast<double>(n_train));
  if (root_size < 1) {
    throw std::invalid_argument("split_market: buyer root would be empty");
  }
  if (n_train - root_size < n_sellers) {
    throw std::invalid_argument(
        "split_market: not enough samples for every seller");
  }

  Rng rng(seed);

  // Target class mix for the buyer root.
  const auto train_counts = train.class_counts();
  std::vector<double> root_target(num_classes);
  if (config.buyer_bias.kind == BuyerBiasKind::dirichlet) {
    root_target = rng.dirichlet(
        std::vector<double>(num_classes, config.buyer_bias.alpha));
  } else {
    for (int c = 0; c < num_classes; ++c) {
      root_target[c] =
          static_cast<double>(train_counts[c]) / static_cast<double>(n_train);
    }
  }

  // Per-class index pools, shuffled once; allocation pops from the back.
  std::vector<std::vector<std::size_t>> pools(num_classes);
  for (std::size_t i = 0; i < train.size(); ++i) {
    pools[static_cast<std::size_t>(train.labels[i])].push_back(i);
  }
  for (auto& pool : pools) rng.shuffle(pool);

  std::vector<long long> room(num_classes);
  for (int c = 0; c < num_classes; ++c) {
    room[c] = static_cast<long long>(pools[c].size());
  }

  auto take = [&](const std::vector<long long>& quota) {
    std::vector<std::size_t> ids;
    for (int c = 0; c < num_classes; ++c) {
      for (long long k = 0; k < quota[c]; ++k) {
        ids.push_back(pools[c].back());
        pools[c].pop_back();
        room[c] -= 1;
      }
    }
    std::sort(ids.begin(), ids.end());
    Dataset out;
    out.dim = train.dim;
    out.num_classes = train.num_classes;
    out.rows = train.rows;
    out.cols = train.cols;
    out.features.reserve(ids.size() * static_cast<std::size_t>(train.dim));
    out.labels.reserve(ids.size());
    for (std::size_t id : ids) out.append(train.get(id));
    return out;
  };

  Partition part;
  const auto root_quota = allocate_capped(root_target, root_size, room, 0);
  part.buyer_root = take(root_quota);

  // Empirical buyer mix; sellers drift around it.
  std::vector<double> buyer_mix(num_classes);
  for (int c = 0; c < num_classes; ++c) {
    buyer_mix[c] = static_cast<double>(root_quota[c]) / static_cast<double>(root_size);
  }

  const long long pool_total = n_train - root_size;
  const long long base = pool_total / n_sellers;
  const long long extra = pool_total % n_sellers;

  part.sellers.reserve(n_sellers);
  part.class_proportions.reserve(n_sellers);
  for (int i = 0; i < n_sellers; ++i) {
    const long long size_i = base + (i < extra ? 1 : 0);
    std::vector<double> q(num_classes);
    double q_sum = 0.0;
    for (int c = 0; c < num_classes; ++c) {
      const double noise = rng.uniform(-config.seller_noise, config.seller_noise);
      q[c] = std::max(kProportionFloor, buyer_mix[c] * (1.0 + noise));
      q_sum += q[c];
    }
    for (double& v : q) v /= q_sum;
    part.class_proportions.push_back(q);
    part.sellers.push_back(take(allocate_capped(q, size_i, room, i + 1)));
  }

  part.test_clean = test;
  part.test_triggered = build_triggered_test(test, config.attack);
  return part;
}

}  // namespace gradmarket
