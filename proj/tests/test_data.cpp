#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <vector>

#include <doctest.h>

#include "gradmarket/data.hpp"
#include "support/temp_dir.hpp"

using namespace gradmarket;
using gradmarket::testing::TempDir;

namespace {

bool same_dataset(const Dataset& a, const Dataset& b) {
  return a.dim == b.dim && a.num_classes == b.num_classes && a.rows == b.rows &&
         a.cols == b.cols && a.features == b.features && a.labels == b.labels;
}

// Multiset of (features, label) rows, for disjoint-cover checks.
std::multiset<std::pair<std::vector<double>, int>> row_multiset(const Dataset& d) {
  std::multiset<std::pair<std::vector<double>, int>> out;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto s = d.get(i);
    out.insert({s.features, s.label});
  }
  return out;
}

void write_bytes(const std::string& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

void push_be32(std::vector<unsigned char>& out, std::uint32_t v) {
  out.push_back(static_cast<unsigned char>(v >> 24));
  out.push_back(static_cast<unsigned char>(v >> 16));
  out.push_back(static_cast<unsigned char>(v >> 8));
  out.push_back(static_cast<unsigned char>(v));
}

// Hand-rolled IDX pair: `pixels` row major per image.
void write_idx_pair(const std::string& images_path, const std::string& labels_path,
                    int rows, int cols, const std::vector<unsigned char>& pixels,
                    const std::vector<unsigned char>& labels) {
  std::vector<unsigned char> images;
  push_be32(images, 0x803);
  push_be32(images, static_cast<std::uint32_t>(labels.size()));
  push_be32(images, static_cast<std::uint32_t>(rows));
  push_be32(images, static_cast<std::uint32_t>(cols));
  images.insert(images.end(), pixels.begin(), pixels.end());
  write_bytes(images_path, images);

  std::vector<unsigned char> lab;
  push_be32(lab, 0x801);
  push_be32(lab, static_cast<std::uint32_t>(labels.size()));
  lab.insert(lab.end(), labels.begin(), labels.end());
  write_bytes(labels_path, lab);
}

MarketplaceConfig split_config(int sellers, double root_fraction) {
  MarketplaceConfig c;
  c.num_sellers = sellers;
  c.buyer_root_fraction = root_fraction;
  return c;
}

}  // namespace

TEST_CASE("make_synthetic emits balanced classes scaled to [0, 1]") {
  const auto data = make_synthetic(4, 16, 800, 7);
  CHECK(data.size() == 800);
  CHECK(data.dim == 16);
  CHECK(data.num_classes == 4);
  CHECK(data.rows == 0);

  const auto counts = data.class_counts();
  REQUIRE(counts.size() == 4);
  for (auto c : counts) CHECK(c == 200);  // round-robin labels

  double lo = 1e300, hi = -1e300;
  for (double v : data.features) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  CHECK(lo == doctest::Approx(0.0));
  CHECK(hi == doctest::Approx(1.0));

  // The class-mean coordinate separates: feature c should average higher on
  // class c than on other classes.
  double own = 0, other = 0;
  int own_n = 0, other_n = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (int c = 0; c < 4; ++c) {
      if (data.labels[i] == c) {
        own += data.row(i)[c];
        ++own_n;
      } else {
        other += data.row(i)[c];
        ++other_n;
      }
    }
  }
  CHECK(own / own_n > other / other_n + 0.1);

  CHECK(same_dataset(data, make_synthetic(4, 16, 800, 7)));
  CHECK_FALSE(same_dataset(data, make_synthetic(4, 16, 800, 8)));

  CHECK_THROWS_AS(make_synthetic(1, 16, 800, 7), std::invalid_argument);
  CHECK_THROWS_AS(make_synthetic(4, 3, 800, 7), std::invalid_argument);
  CHECK_THROWS_AS(make_synthetic(4, 16, 10, 7), std::invalid_argument);
}

TEST_CASE("load_idx reads the big-endian pair and scales pixels") {
  TempDir dir;
  // Two 2x3 images.
  const std::vector<unsigned char> pixels = {0,  51,  102, 153, 204, 255,
                                             255, 204, 153, 102, 51,  0};
  write_idx_pair(dir.str("img"), dir.str("lab"), 2, 3, pixels, {1, 0});

  const auto data = load_idx(dir.str("img"), dir.str("lab"));
  CHECK(data.size() == 2);
  CHECK(data.dim == 6);
  CHECK(data.rows == 2);
  CHECK(data.cols == 3);
  CHECK(data.num_classes == 2);  // max label + 1
  CHECK(data.labels == std::vector<int>{1, 0});
  CHECK(data.row(0)[0] == doctest::Approx(0.0));
  CHECK(data.row(0)[1] == doctest::Approx(51.0 / 255.0));
  CHECK(data.row(0)[5] == doctest::Approx(1.0));
  CHECK(data.row(1)[0] == doctest::Approx(1.0));
}

TEST_CASE("load_idx rejects malformed files") {
  TempDir dir;
  write_bytes(dir.str("bad_magic"), {0, 0, 8, 4, 0, 0, 0, 0});
  write_bytes(dir.str("short"), {0, 0, 8, 3});
  const std::vector<unsigned char> pixels(4, 7);
  write_idx_pair(dir.str("img"), dir.str("lab"), 2, 2, pixels, {0});
  write_idx_pair(dir.str("img3"), dir.str("lab3"), 2, 2, pixels, {0});
  // Mismatched counts between the two files.
  std::vector<unsigned char> lab2;
  push_be32(lab2, 0x801);
  push_be32(lab2, 2);
  lab2.push_back(0);
  lab2.push_back(1);
  write_bytes(dir.str("lab2"), lab2);

  CHECK_THROWS_AS(load_idx(dir.str("missing"), dir.str("lab")), IoError);
  CHECK_THROWS_AS(load_idx(dir.str("bad_magic"), dir.str("lab")), IoError);
  CHECK_THROWS_AS(load_idx(dir.str("short"), dir.str("lab")), IoError);
  CHECK_THROWS_AS(load_idx(dir.str("img"), dir.str("lab2")), IoError);
  CHECK_NOTHROW(load_idx(dir.str("img"), dir.str("lab")));
}

TEST_CASE("dataset cache round trips and rejects stale tags") {
  TempDir dir;
  const auto train = make_synthetic(3, 8, 120, 1);
  const auto test = make_synthetic(3, 8, 60, 2);
  const std::string path = dir.str("cache.bin");

  save_dataset_cache(path, train, test, 0xfeedu);
  Dataset train2, test2;
  REQUIRE(load_dataset_cache(path, train2, test2, 0xfeedu));
  CHECK(same_dataset(train, train2));
  CHECK(same_dataset(test, test2));

  Dataset t3, t4;
  CHECK_FALSE(load_dataset_cache(path, t3, t4, 0xbeefu));       // wrong tag
  CHECK_FALSE(load_dataset_cache(dir.str("nope"), t3, t4, 1));  // missing file

  // Truncated cache is detected, not half-loaded.
  std::ofstream(path, std::ios::binary | std::ios::trunc) << "garbage";
  CHECK_FALSE(load_dataset_cache(path, t3, t4, 0xfeedu));
}

TEST_CASE("split_market partitions train exactly") {
  const auto train = make_synthetic(4, 8, 2000, 3);
  const auto test = make_synthetic(4, 8, 200, 4);
  auto config = split_config(7, 0.05);
  const auto part = split_market(train, test, config, 99);

  CHECK(part.buyer_root.size() == 100);  // round(0.05 * 2000)
  REQUIRE(part.sellers.size() == 7);
  REQUIRE(part.class_proportions.size() == 7);

  // Shard sizes are equal up to the remainder spread.
  std::size_t total = part.buyer_root.size();
  for (const auto& shard : part.sellers) {
    CHECK(shard.size() >= (2000 - 100) / 7);
    CHECK(shard.size() <= (2000 - 100) / 7 + 1);
    total += shard.size();
  }
  CHECK(total == train.size());

  // Disjoint cover: root + shards reassemble the training multiset.
  auto expected = row_multiset(train);
  auto got = row_multiset(part.buyer_root);
  for (const auto& shard : part.sellers) {
    for (const auto& row : row_multiset(shard)) got.insert(row);
  }
  CHECK(got == expected);

  for (const auto& mix : part.class_proportions) {
    double sum = 0;
    for (double p : mix) sum += p;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  }

  // Clean test set passes through untouched; no trigger attack, no mirror.
  CHECK(same_dataset(part.test_clean, test));
  CHECK(part.test_triggered.size() == 0);
}

TEST_CASE("unbiased split with zero noise tracks the buyer mix per class") {
  const auto train = make_synthetic(4, 8, 2048, 5);
  const auto test = make_synthetic(4, 8, 100, 6);
  auto config = split_config(8, 0.0625);  // root 128, shards 240
  config.seller_noise = 0.0;
  const auto part = split_market(train, test, config, 11);

  // Root is stratified: balanced train data -> balanced root.
  const auto root_counts = part.buyer_root.class_counts();
  for (auto c : root_counts) CHECK(c == 32);

  // Every shard mirrors the root proportions within one sample per class.
  for (const auto& shard : part.sellers) {
    const auto counts = shard.class_counts();
    REQUIRE(counts.size() == 4);
    const double expect = static_cast<double>(shard.size()) / 4.0;
    for (auto c : counts) {
      CHECK(std::abs(static_cast<double>(c) - expect) <= 1.0);
    }
  }
}

TEST_CASE("dirichlet buyer bias skews the root distribution") {
  const auto train = make_synthetic(4, 8, 4000, 5);
  const auto test = make_synthetic(4, 8, 100, 6);
  auto config = split_config(5, 0.1);
  config.buyer_bias.kind = BuyerBiasKind::dirichlet;
  config.buyer_bias.alpha = 0.1;  // strongly concentrated draws

  // A small alpha makes near-uniform roots vanishingly unlikely.
  const auto part = split_market(train, test, config, 21);
  const auto counts = part.buyer_root.class_counts();
  std::size_t lo = counts[0], hi = counts[0];
  for (auto c : counts) {
    lo = std::min(lo, c);
    hi = std::max(hi, c);
  }
  CHECK(hi > lo + 50);

  // Different seeds draw different mixes.
  const auto part2 = split_market(train, test, config, 22);
  CHECK(part.buyer_root.class_counts() != part2.buyer_root.class_counts());
}

TEST_CASE("split_market is deterministic in the seed") {
  const auto train = make_synthetic(3, 8, 900, 5);
  const auto test = make_synthetic(3, 8, 90, 6);
  auto config = split_config(6, 0.1);
  config.buyer_bias.kind = BuyerBiasKind::dirichlet;

  const auto a = split_market(train, test, config, 42);
  const auto b = split_market(train, test, config, 42);
  REQUIRE(a.sellers.size() == b.sellers.size());
  CHECK(same_dataset(a.buyer_root, b.buyer_root));
  for (std::size_t i = 0; i < a.sellers.size(); ++i) {
    CHECK(same_dataset(a.sellers[i], b.sellers[i]));
  }

  const auto c = split_market(train, test, config, 43);
  CHECK_FALSE(same_dataset(a.buyer_root, c.buyer_root));
}

TEST_CASE("split_market mirrors a triggered test set for trigger attacks") {
  const auto train = make_synthetic(3, 8, 900, 5);
  const auto test = make_synthetic(3, 8, 90, 6);
  auto config = split_config(6, 0.1);
  config.attack.kind = AttackKind::backdoor;
  config.attack.target_label = 1;
  config.attack.trigger.offset_dims = 2;
  config.attack.trigger.value = 0.5;

  const auto part = split_market(train, test, config, 7);
  std::size_t non_target = 0;
  for (int label : test.labels) {
    if (label != 1) ++non_target;
  }
  REQUIRE(part.test_triggered.size() == non_target);
  for (std::size_t i = 0; i < part.test_triggered.size(); ++i) {
    CHECK(part.test_triggered.labels[i] != 1);  // original labels kept
    CHECK(part.test_triggered.row(i)[6] == 0.5);
    CHECK(part.test_triggered.row(i)[7] == 0.5);
  }
}

TEST_CASE("split_market rejects impossible splits") {
  const auto train = make_synthetic(3, 8, 300, 5);
  const auto test = make_synthetic(3, 8, 30, 6);
  // 0.001 * 300 rounds to zero root samples.
  CHECK_THROWS_AS(split_market(train, test, split_config(5, 0.001), 1),
                  std::invalid_argument);
  // 0.99 * 300 leaves 3 samples for 5 sellers.
  CHECK_THROWS_AS(split_market(train, test, split_config(5, 0.99), 1),
                  std::invalid_argument);
}
