#include <fstream>
#include <string>
#include <vector>

#include <doctest.h>

#include "gradmarket/config.hpp"
#include "support/temp_dir.hpp"

using namespace gradmarket;

namespace {

const std::string kFullDocument = R"(
dataset:
  kind: synthetic
  classes: 4
  dim: 16
  train_samples: 8000
  test_samples: 1000
num_sellers: 30
num_rounds: 150
sample_fraction: 0.3
local_epochs: 2
batch_size: 64
local_lr: 0.001
buyer_root_fraction: 0.02
buyer_bias:
  kind: dirichlet
  alpha: 0.5
seller_noise: 0.25
aggregator:
  kind: skymask
  mask_steps: 10
  mask_lr: 0.2
attack:
  kind: sybil_backdoor
  adversary_fraction: 0.3
  poison_rate: 0.4
  flip_fraction: 0.6
  target_label: 2
  mimicry_lambda: 0.7
  trigger:
    patch_side: 5
    value: 0.9
    location: top-left
    offset_dims: 4
milestones: [0.6, 0.7]
repeats: 3
seed: 99
)";

}  // namespace

TEST_CASE("defaults survive an empty document") {
  const auto c = load_config("{}");
  CHECK(c.dataset.kind == DatasetKind::synthetic);
  CHECK(c.dataset.classes == 3);
  CHECK(c.dataset.dim == 8);
  CHECK(c.num_sellers == 30);
  CHECK(c.num_rounds == 200);
  CHECK(c.sample_fraction == 0.3);
  CHECK(c.local_epochs == 2);
  CHECK(c.batch_size == 64);
  CHECK(c.local_lr == 0.001);
  CHECK(c.buyer_root_fraction == 0.02);
  CHECK(c.buyer_bias.kind == BuyerBiasKind::unbiased);
  CHECK(c.seller_noise == 0.3);
  CHECK(c.aggregator.kind == AggregatorKind::fedavg);
  CHECK(c.aggregator.mask_steps == 20);
  CHECK(c.aggregator.mask_lr == 0.1);
  CHECK(c.attack.kind == AttackKind::none);
  CHECK(c.attack.adversary_fraction == 0.0);
  CHECK(c.attack.trigger.patch_side == 10);
  CHECK(c.attack.trigger.offset_dims == 8);
  CHECK(c.milestones == std::vector<double>{0.70, 0.80, 0.85});
  CHECK(c.repeats == 10);
  CHECK(c.seed == 0);
}

TEST_CASE("every field in a full document lands") {
  const auto c = load_config(kFullDocument);
  CHECK(c.dataset.classes == 4);
  CHECK(c.dataset.dim == 16);
  CHECK(c.dataset.train_samples == 8000);
  CHECK(c.dataset.test_samples == 1000);
  CHECK(c.num_rounds == 150);
  CHECK(c.buyer_bias.kind == BuyerBiasKind::dirichlet);
  CHECK(c.buyer_bias.alpha == 0.5);
  CHECK(c.seller_noise == 0.25);
  CHECK(c.aggregator.kind == AggregatorKind::skymask);
  CHECK(c.aggregator.mask_steps == 10);
  CHECK(c.aggregator.mask_lr == 0.2);
  CHECK(c.attack.kind == AttackKind::sybil_backdoor);
  CHECK(c.attack.adversary_fraction == 0.3);
  CHECK(c.attack.poison_rate == 0.4);
  CHECK(c.attack.flip_fraction == 0.6);
  CHECK(c.attack.target_label == 2);
  CHECK(c.attack.mimicry_lambda == 0.7);
  CHECK(c.attack.trigger.patch_side == 5);
  CHECK(c.attack.trigger.value == 0.9);
  CHECK(c.attack.trigger.location == TriggerLocation::top_left);
  CHECK(c.attack.trigger.offset_dims == 4);
  CHECK(c.milestones == std::vector<double>{0.6, 0.7});
  CHECK(c.repeats == 3);
  CHECK(c.seed == 99);
}

TEST_CASE("canonical serialisation round trips bit for bit") {
  const auto c = load_config(kFullDocument);
  const std::string canonical = serialize_config(c);
  const auto reparsed = load_config(canonical);
  CHECK(serialize_config(reparsed) == canonical);
  CHECK(config_hash(reparsed) == config_hash(c));
  CHECK(config_hash_hex(c).size() == 16);
}

TEST_CASE("equivalent documents hash equal, different configs differ") {
  const auto a = load_config("num_rounds: 5\nseed: 3");
  const auto b = load_config("seed: 3\nnum_rounds: 5");  // key order irrelevant
  const auto c = load_config("num_rounds: 6\nseed: 3");
  CHECK(config_hash(a) == config_hash(b));
  CHECK(config_hash(a) != config_hash(c));
}

TEST_CASE("overrides apply in order and are validated") {
  std::vector<std::string> overrides = {"attack.kind=backdoor",
                                        "attack.adversary_fraction=0.2",
                                        "attack.adversary_fraction=0.4",
                                        "aggregator.kind=fltrust"};
  const auto c = load_config("{}", overrides);
  CHECK(c.attack.kind == AttackKind::backdoor);
  CHECK(c.attack.adversary_fraction == 0.4);  // last write wins
  CHECK(c.aggregator.kind == AggregatorKind::fltrust);

  std::vector<std::string> bogus_key = {"attack.nonsense=1"};
  CHECK_THROWS_AS(load_config("{}", bogus_key), ValidationError);
  std::vector<std::string> no_equals = {"attack.kind"};
  CHECK_THROWS_AS(load_config("{}", no_equals), ValidationError);
  std::vector<std::string> through_scalar = {"seed.inner=1"};
  CHECK_THROWS_AS(load_config("{}", through_scalar), ValidationError);
}

TEST_CASE("unknown keys and malformed YAML are rejected") {
  CHECK_THROWS_AS(load_config("bogus: 1"), ValidationError);
  CHECK_THROWS_AS(load_config("dataset:\n  bogus: 1"), ValidationError);
  CHECK_THROWS_AS(load_config("[1, 2, 3]"), ParseError);
  CHECK_THROWS_AS(load_config("dataset: [}"), ParseError);
  // idx-images keys are invalid for synthetic datasets and vice versa
  CHECK_THROWS_AS(load_config("dataset:\n  kind: synthetic\n  train_images: x"),
                  ValidationError);
  CHECK_THROWS_AS(load_config("dataset:\n  kind: idx-images\n  classes: 3"),
                  ValidationError);
}

TEST_CASE("validation rejects out-of-range fields") {
  CHECK_THROWS_AS(load_config("num_sellers: 0"), ValidationError);
  CHECK_THROWS_AS(load_config("num_rounds: -1"), ValidationError);
  CHECK_THROWS_AS(load_config("sample_fraction: 0"), ValidationError);
  CHECK_THROWS_AS(load_config("sample_fraction: 1.2"), ValidationError);
  CHECK_THROWS_AS(load_config("local_epochs: 0"), ValidationError);
  CHECK_THROWS_AS(load_config("batch_size: 0"), ValidationError);
  CHECK_THROWS_AS(load_config("local_lr: 0"), ValidationError);
  CHECK_THROWS_AS(load_config("buyer_root_fraction: 0"), ValidationError);
  CHECK_THROWS_AS(load_config("buyer_root_fraction: 1"), ValidationError);
  CHECK_THROWS_AS(load_config("seller_noise: -0.1"), ValidationError);
  CHECK_THROWS_AS(load_config("buyer_bias: {kind: dirichlet, alpha: 0}"),
                  ValidationError);
  CHECK_THROWS_AS(load_config("aggregator: {kind: skymask, mask_steps: -1}"),
                  ValidationError);
  CHECK_THROWS_AS(load_config("aggregator: {kind: skymask, mask_lr: 0}"),
                  ValidationError);
  CHECK_THROWS_AS(load_config("attack: {kind: backdoor, adversary_fraction: 1}"),
                  ValidationError);
  CHECK_THROWS_AS(load_config("attack: {kind: backdoor, adversary_fraction: 1.5}"),
                  ValidationError);
  CHECK_THROWS_AS(load_config("attack: {kind: backdoor, poison_rate: -0.1}"),
                  ValidationError);
  CHECK_THROWS_AS(load_config("attack: {kind: label_flip, flip_fraction: 2}"),
                  ValidationError);
  CHECK_THROWS_AS(load_config("attack: {kind: backdoor, target_label: -1}"),
                  ValidationError);
  CHECK_THROWS_AS(
      load_config("attack: {kind: sybil_backdoor, mimicry_lambda: -0.5}"),
      ValidationError);
  // An empty trigger patch is legal: the sample keeps its features and only
  // the label moves.
  CHECK_NOTHROW(load_config("attack: {kind: backdoor, trigger: {patch_side: 0}}"));
  CHECK_THROWS_AS(load_config("attack: {kind: backdoor, trigger: {patch_side: -1}}"),
                  ValidationError);
  CHECK_THROWS_AS(load_config("milestones: [0.9, 0.8]"), ValidationError);
  CHECK_THROWS_AS(load_config("milestones: [1.5]"), ValidationError);
  CHECK_THROWS_AS(load_config("repeats: 0"), ValidationError);
  CHECK_THROWS_AS(load_config("dataset: {classes: 1}"), ValidationError);
  CHECK_THROWS_AS(load_config("dataset: {classes: 4, dim: 3}"), ValidationError);
  CHECK_THROWS_AS(load_config("dataset: {train_samples: 10}"), ValidationError);
  CHECK_THROWS_AS(load_config("dataset: {test_samples: 5}"), ValidationError);
  CHECK_THROWS_AS(load_config("dataset: {kind: idx-images}"), ValidationError);
}

TEST_CASE("enum spellings round trip through to_string") {
  CHECK(to_string(DatasetKind::idx_images) == "idx-images");
  CHECK(to_string(BuyerBiasKind::dirichlet) == "dirichlet");
  CHECK(to_string(AggregatorKind::martfl) == "martfl");
  CHECK(to_string(AttackKind::label_flip) == "label_flip");
  CHECK(to_string(TriggerLocation::bottom_right) == "bottom-right");
  for (const char* name : {"fedavg", "fltrust", "martfl", "skymask"}) {
    const auto c = load_config(std::string("aggregator: {kind: ") + name + "}");
    CHECK(to_string(c.aggregator.kind) == name);
  }
}

TEST_CASE("load_config_file reads from disk and reports missing files") {
  gradmarket::testing::TempDir dir;
  {
    std::ofstream out(dir.str("c.yaml"));
    out << "num_rounds: 17\n";
  }
  CHECK(load_config_file(dir.str("c.yaml")).num_rounds == 17);
  CHECK_THROWS_AS(load_config_file(dir.str("missing.yaml")), IoError);
}

TEST_CASE("derive_seed separates labels and indices") {
  const auto a = derive_seed(1, "round-sample", 0);
  const auto b = derive_seed(1, "round-sample", 1);
  const auto c = derive_seed(1, "seller-local", 0);
  const auto d = derive_seed(2, "round-sample", 0);
  CHECK(a != b);
  CHECK(a != c);
  CHECK(a != d);
  CHECK(a == derive_seed(1, "round-sample", 0));  // pure function
}

TEST_CASE("format_double is shortest round-trip decimal") {
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(1.0) == "1");
  CHECK(format_double(0.3000000000000001) == "0.3000000000000001");
  CHECK(format_double(-2.5) == "-2.5");
  CHECK(format_double(1e-9) == "1e-09");
}
