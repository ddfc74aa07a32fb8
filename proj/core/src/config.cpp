#include "gradmarket/config.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <sstream>

#include "gradmarket/rng.hpp"

namespace gradmarket {

namespace {

[[noreturn]] void fail(const std::string& field, const std::string& what) {
  throw ValidationError(field + ": " + what);
}

// ---- enum <-> token tables -------------------------------------------------

template <typename E, std::size_t N>
E parse_enum(const std::array<std::pair<std::string_view, E>, N>& table,
             const std::string& token, const std::string& field) {
  for (const auto& entry : table) {
    if (entry.first == token) return entry.second;
  }
  std::string expected;
  for (const auto& entry : table) {
    if (!expected.empty()) expected += " | ";
    expected += entry.first;
  }
  fail(field, "must be one of " + expected + " (got '" + token + "')");
}

constexpr std::array<std::pair<std::string_view, DatasetKind>, 2> kDatasetKinds{{
    {"synthetic", DatasetKind::synthetic},
    {"idx-images", DatasetKind::idx_images},
}};
constexpr std::array<std::pair<std::string_view, BuyerBiasKind>, 2> kBiasKinds{{
    {"unbiased", BuyerBiasKind::unbiased},
    {"dirichlet", BuyerBiasKind::dirichlet},
}};
constexpr std::array<std::pair<std::string_view, AggregatorKind>, 4> kAggKinds{{
    {"fedavg", AggregatorKind::fedavg},
    {"fltrust", AggregatorKind::fltrust},
    {"martfl", AggregatorKind::martfl},
    {"skymask", AggregatorKind::skymask},
}};
constexpr std::array<std::pair<std::string_view, AttackKind>, 4> kAttackKinds{{
    {"none", AttackKind::none},
    {"backdoor", AttackKind::backdoor},
    {"label_flip", AttackKind::label_flip},
    {"sybil_backdoor", AttackKind::sybil_backdoor},
}};
constexpr std::array<std::pair<std::string_view, TriggerLocation>, 4> kLocations{{
    {"bottom-right", TriggerLocation::bottom_right},
    {"bottom-left", TriggerLocation::bottom_left},
    {"top-right", TriggerLocation::top_right},
    {"top-left", TriggerLocation::top_left},
}};

// ---- YAML field extraction -------------------------------------------------

void check_keys(const YAML::Node& node, const std::string& prefix,
                std::initializer_list<std::string_view> allowed) {
  if (!node.IsDefined() || node.IsNull()) return;
  if (!node.IsMap()) {
    throw ParseError(prefix.empty() ? "config document must be a mapping"
                                    : prefix + ": must be a mapping");
  }
  for (const auto& kv : node) {
    const std::string key = kv.first.as<std::string>();
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      fail(prefix + key, "unknown key");
    }
  }
}

int get_int(const YAML::Node& n, const std::string& field, int fallback) {
  if (!n.IsDefined() || n.IsNull()) return fallback;
  try {
    return n.as<int>();
  } catch (const YAML::Exception&) {
    fail(field, "expected an integer");
  }
}

std::uint64_t get_u64(const YAML::Node& n, const std::string& field,
                      std::uint64_t fallback) {
  if (!n.IsDefined() || n.IsNull()) return fallback;
  try {
    return n.as<std::uint64_t>();
  } catch (const YAML::Exception&) {
    fail(field, "expected an unsigned integer");
  }
}

double get_double(const YAML::Node& n, const std::string& field, double fallback) {
  if (!n.IsDefined() || n.IsNull()) return fallback;
  try {
    return n.as<double>();
  } catch (const YAML::Exception&) {
    fail(field, "expected a number");
  }
}

std::string get_string(const YAML::Node& n, const std::string& field,
                       std::string fallback) {
  if (!n.IsDefined() || n.IsNull()) return fallback;
  try {
    return n.as<std::string>();
  } catch (const YAML::Exception&) {
    fail(field, "expected a string");
  }
}

template <typename E, std::size_t N>
E get_enum(const YAML::Node& n, const std::string& field, E fallback,
           const std::array<std::pair<std::string_view, E>, N>& table) {
  if (!n.IsDefined() || n.IsNull()) return fallback;
  return parse_enum(table, get_string(n, field, ""), field);
}

// ---- section parsers -------------------------------------------------------

DatasetConfig parse_dataset(const YAML::Node& node) {
  DatasetConfig d;
  if (!node.IsDefined() || node.IsNull()) return d;
  d.kind = get_enum(node["kind"], "dataset.kind", d.kind, kDatasetKinds);
  if (d.kind == DatasetKind::synthetic) {
    check_keys(node, "dataset.",
               {"kind", "classes", "dim", "train_samples", "test_samples", "cache"});
    d.classes = get_int(node["classes"], "dataset.classes", d.classes);
    d.dim = get_int(node["dim"], "dataset.dim", d.dim);
    d.train_samples =
        get_int(node["train_samples"], "dataset.train_samples", d.train_samples);
    d.test_samples =
        get_int(node["test_samples"], "dataset.test_samples", d.test_samples);
    d.cache = get_string(node["cache"], "dataset.cache", d.cache);
  } else {
    check_keys(node, "dataset.",
               {"kind", "train_images", "train_labels", "test_images", "test_labels"});
    d.train_images = get_string(node["train_images"], "dataset.train_images", "");
    d.train_labels = get_string(node["train_labels"], "dataset.train_labels", "");
    d.test_images = get_string(node["test_images"], "dataset.test_images", "");
    d.test_labels = get_string(node["test_labels"], "dataset.test_labels", "");
  }
  return d;
}

TriggerConfig parse_trigger(const YAML::Node& node) {
  TriggerConfig t;
  if (!node.IsDefined() || node.IsNull()) return t;
  check_keys(node, "attack.trigger.",
             {"patch_side", "value", "location", "offset_dims"});
  t.patch_side = get_int(node["patch_side"], "attack.trigger.patch_side", t.patch_side);
  t.value = get_double(node["value"], "attack.trigger.value", t.value);
  t.location = get_enum(node["location"], "attack.trigger.location", t.location,
                        kLocations);
  t.offset_dims =
      get_int(node["offset_dims"], "attack.trigger.offset_dims", t.offset_dims);
  return t;
}

AttackConfig parse_attack(const YAML::Node& node) {
  AttackConfig a;
  if (!node.IsDefined() || node.IsNull()) return a;
  check_keys(node, "attack.",
             {"kind", "adversary_fraction", "poison_rate", "flip_fraction",
              "target_label", "mimicry_lambda", "trigger"});
  a.kind = get_enum(node["kind"], "attack.kind", a.kind, kAttackKinds);
  a.adversary_fraction = get_double(node["adversary_fraction"],
                                    "attack.adversary_fraction", a.adversary_fraction);
  a.poison_rate = get_double(node["poison_rate"], "attack.poison_rate", a.poison_rate);
  a.flip_fraction =
      get_double(node["flip_fraction"], "attack.flip_fraction", a.flip_fraction);
  a.target_label = get_int(node["target_label"], "attack.target_label", a.target_label);
  a.mimicry_lambda =
      get_double(node["mimicry_lambda"], "attack.mimicry_lambda", a.mimicry_lambda);
  a.trigger = parse_trigger(node["trigger"]);
  return a;
}

// ---- validation -------------------------------------------------------------

void require(bool ok, const std::string& field, const std::string& what) {
  if (!ok) fail(field, what);
}

void validate(const MarketplaceConfig& c) {
  const auto& d = c.dataset;
  if (d.kind == DatasetKind::synthetic) {
    require(d.classes >= 2, "dataset.classes", "must be at least 2");
    require(d.dim >= d.classes, "dataset.dim", "must be at least dataset.classes");
    require(d.train_samples >= 10 * d.classes, "dataset.train_samples",
            "must be at least 10 per class");
    require(d.test_samples >= 10 * d.classes, "dataset.test_samples",
            "must be at least 10 per class");
  } else {
    require(!d.train_images.empty(), "dataset.train_images", "is required");
    require(!d.train_labels.empty(), "dataset.train_labels", "is required");
    require(!d.test_images.empty(), "dataset.test_images", "is required");
    require(!d.test_labels.empty(), "dataset.test_labels", "is required");
  }

  require(c.num_sellers >= 1, "num_sellers", "must be positive");
  require(c.num_rounds >= 1, "num_rounds", "must be positive");
  require(c.sample_fraction > 0.0 && c.sample_fraction <= 1.0, "sample_fraction",
          "must lie in (0, 1]");
  require(c.local_epochs >= 1, "local_epochs", "must be positive");
  require(c.batch_size >= 1, "batch_size", "must be positive");
  require(std::isfinite(c.local_lr) && c.local_lr > 0.0, "local_lr",
          "must be positive");
  require(c.buyer_root_fraction > 0.0 && c.buyer_root_fraction < 1.0,
          "buyer_root_fraction", "must lie in (0, 1)");
  require(std::isfinite(c.buyer_bias.alpha) && c.buyer_bias.alpha > 0.0,
          "buyer_bias.alpha", "must be positive");
  require(std::isfinite(c.seller_noise) && c.seller_noise >= 0.0, "seller_noise",
          "must be non-negative");
  require(c.aggregator.mask_steps >= 0, "aggregator.mask_steps",
          "must be non-negative");
  require(std::isfinite(c.aggregator.mask_lr) && c.aggregator.mask_lr > 0.0,
          "aggregator.mask_lr", "must be positive");

  const auto& a = c.attack;
  // Strictly below 1 so floor(fraction * N) leaves at least one benign seller.
  require(a.adversary_fraction >= 0.0 && a.adversary_fraction < 1.0,
          "attack.adversary_fraction", "must lie in [0, 1)");
  require(a.poison_rate >= 0.0 && a.poison_rate <= 1.0, "attack.poison_rate",
          "must lie in [0, 1]");
  require(a.flip_fraction >= 0.0 && a.flip_fraction <= 1.0, "attack.flip_fraction",
          "must lie in [0, 1]");
  require(a.mimicry_lambda >= 0.0 && a.mimicry_lambda <= 1.0,
          "attack.mimicry_lambda", "must lie in [0, 1]");
  require(a.target_label >= 0, "attack.target_label", "must be non-negative");
  if (d.kind == DatasetKind::synthetic &&
      (a.kind == AttackKind::backdoor || a.kind == AttackKind::sybil_backdoor ||
       a.kind == AttackKind::label_flip)) {
    require(a.target_label < d.classes, "attack.target_label",
            "must be below dataset.classes");
  }
  require(a.trigger.patch_side >= 0, "attack.trigger.patch_side",
          "must be non-negative");
  require(a.trigger.offset_dims >= 0, "attack.trigger.offset_dims",
          "must be non-negative");
  require(std::isfinite(a.trigger.value), "attack.trigger.value", "must be finite");
  if (d.kind == DatasetKind::synthetic) {
    require(a.trigger.offset_dims <= d.dim, "attack.trigger.offset_dims",
            "must not exceed dataset.dim");
  }

  for (std::size_t i = 0; i < c.milestones.size(); ++i) {
    const std::string field = "milestones[" + std::to_string(i) + "]";
    require(c.milestones[i] > 0.0 && c.milestones[i] < 1.0, field,
            "must lie in (0, 1)");
    if (i > 0) {
      require(c.milestones[i] > c.milestones[i - 1], field,
              "milestones must be strictly increasing");
    }
  }
  require(c.repeats >= 1, "repeats", "must be positive");
}

// ---- overrides ---------------------------------------------------------------

void apply_override(YAML::Node root, const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ValidationError("override '" + assignment + "': expected key.path=value");
  }
  const std::string path = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);

  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = path.find('.', start);
    if (dot == std::string::npos) {
      parts.push_back(path.substr(start));
      break;
    }
    parts.push_back(path.substr(start, dot - start));
    start = dot + 1;
  }
  for (const auto& p : parts) {
    if (p.empty()) {
      throw ValidationError("override '" + assignment + "': empty path segment");
    }
  }

  YAML::Node parsed;
  try {
    parsed = YAML::Load(value);
  } catch (const YAML::Exception&) {
    throw ValidationError("override '" + assignment + "': malformed value");
  }

  // Walk to the parent map, creating intermediate maps as needed. YAML::Node
  // has reference semantics, so mutations land in `root`.
  YAML::Node cursor;
  cursor.reset(root);
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    YAML::Node next = cursor[parts[i]];
    if (next.IsDefined() && !next.IsNull() && !next.IsMap()) {
      throw ValidationError("override '" + assignment + "': '" + parts[i] +
                            "' is not a section");
    }
    cursor.reset(next);
  }
  cursor[parts.back()] = parsed;
}

// ---- serialisation -----------------------------------------------------------

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '\\' || c == '"') out += '\\';
    out += c;
  }
  out += '"';
  return out;
}

}  // namespace

std::string_view to_string(DatasetKind k) {
  return k == DatasetKind::synthetic ? "synthetic" : "idx-images";
}
std::string_view to_string(BuyerBiasKind k) {
  return k == BuyerBiasKind::unbiased ? "unbiased" : "dirichlet";
}
std::string_view to_string(AggregatorKind k) {
  switch (k) {
    case AggregatorKind::fedavg: return "fedavg";
    case AggregatorKind::fltrust: return "fltrust";
    case AggregatorKind::martfl: return "martfl";
    case AggregatorKind::skymask: return "skymask";
  }
  return "fedavg";
}
std::string_view to_string(AttackKind k) {
  switch (k) {
    case AttackKind::none: return "none";
    case AttackKind::backdoor: return "backdoor";
    case AttackKind::label_flip: return "label_flip";
    case AttackKind::sybil_backdoor: return "sybil_backdoor";
  }
  return "none";
}
std::string_view to_string(TriggerLocation k) {
  switch (k) {
    case TriggerLocation::bottom_right: return "bottom-right";
    case TriggerLocation::bottom_left: return "bottom-left";
    case TriggerLocation::top_right: return "top-right";
    case TriggerLocation::top_left: return "top-left";
  }
  return "bottom-right";
}

std::string format_double(double value) {
  std::array<char, 32> buf;
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  return std::string(buf.data(), ptr);
}

MarketplaceConfig load_config(const std::string& text,
                              std::span<const std::string> overrides) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ParseError(std::string("config parse failure: ") + e.what());
  }
  if (root.IsDefined() && !root.IsNull() && !root.IsMap()) {
    throw ParseError("config document must be a mapping");
  }
  if (!root.IsDefined() || root.IsNull()) root = YAML::Node(YAML::NodeType::Map);

  for (const auto& assignment : overrides) apply_override(root, assignment);

  check_keys(root, "",
             {"dataset", "num_sellers", "num_rounds", "sample_fraction",
              "local_epochs", "batch_size", "local_lr", "buyer_root_fraction",
              "buyer_bias", "seller_noise", "aggregator", "attack", "milestones",
              "repeats", "seed"});

  MarketplaceConfig c;
  c.dataset = parse_dataset(root["dataset"]);
  c.num_sellers = get_int(root["num_sellers"], "num_sellers", c.num_sellers);
  c.num_rounds = get_int(root["num_rounds"], "num_rounds", c.num_rounds);
  c.sample_fraction =
      get_double(root["sample_fraction"], "sample_fraction", c.sample_fraction);
  c.local_epochs = get_int(root["local_epochs"], "local_epochs", c.local_epochs);
  c.batch_size = get_int(root["batch_size"], "batch_size", c.batch_size);
  c.local_lr = get_double(root["local_lr"], "local_lr", c.local_lr);
  c.buyer_root_fraction = get_double(root["buyer_root_fraction"],
                                     "buyer_root_fraction", c.buyer_root_fraction);

  const YAML::Node bias = root["buyer_bias"];
  if (bias.IsDefined() && !bias.IsNull()) {
    check_keys(bias, "buyer_bias.", {"kind", "alpha"});
    c.buyer_bias.kind =
        get_enum(bias["kind"], "buyer_bias.kind", c.buyer_bias.kind, kBiasKinds);
    c.buyer_bias.alpha =
        get_double(bias["alpha"], "buyer_bias.alpha", c.buyer_bias.alpha);
  }

  c.seller_noise = get_double(root["seller_noise"], "seller_noise", c.seller_noise);

  const YAML::Node agg = root["aggregator"];
  if (agg.IsDefined() && !agg.IsNull()) {
    check_keys(agg, "aggregator.", {"kind", "mask_steps", "mask_lr"});
    c.aggregator.kind =
        get_enum(agg["kind"], "aggregator.kind", c.aggregator.kind, kAggKinds);
    c.aggregator.mask_steps =
        get_int(agg["mask_steps"], "aggregator.mask_steps", c.aggregator.mask_steps);
    c.aggregator.mask_lr =
        get_double(agg["mask_lr"], "aggregator.mask_lr", c.aggregator.mask_lr);
  }

  c.attack = parse_attack(root["attack"]);

  const YAML::Node ms = root["milestones"];
  if (ms.IsDefined() && !ms.IsNull()) {
    if (!ms.IsSequence()) fail("milestones", "expected a list of numbers");
    c.milestones.clear();
    for (std::size_t i = 0; i < ms.size(); ++i) {
      c.milestones.push_back(
          get_double(ms[i], "milestones[" + std::to_string(i) + "]", 0.0));
    }
  }

  c.repeats = get_int(root["repeats"], "repeats", c.repeats);
  c.seed = get_u64(root["seed"], "seed", c.seed);

  validate(c);
  return c;
}

MarketplaceConfig load_config_file(const std::string& path,
                                   std::span<const std::string> overrides) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return load_config(buf.str(), overrides);
}

std::string serialize_config(const MarketplaceConfig& c) {
  std::ostringstream out;
  out << "dataset:\n";
  out << "  kind: " << to_string(c.dataset.kind) << "\n";
  if (c.dataset.kind == DatasetKind::synthetic) {
    out << "  classes: " << c.dataset.classes << "\n";
    out << "  dim: " << c.dataset.dim << "\n";
    out << "  train_samples: " << c.dataset.train_samples << "\n";
    out << "  test_samples: " << c.dataset.test_samples << "\n";
    if (!c.dataset.cache.empty()) out << "  cache: " << quote(c.dataset.cache) << "\n";
  } else {
    out << "  train_images: " << quote(c.dataset.train_images) << "\n";
    out << "  train_labels: " << quote(c.dataset.train_labels) << "\n";
    out << "  test_images: " << quote(c.dataset.test_images) << "\n";
    out << "  test_labels: " << quote(c.dataset.test_labels) << "\n";
  }
  out << "num_sellers: " << c.num_sellers << "\n";
  out << "num_rounds: " << c.num_rounds << "\n";
  out << "sample_fraction: " << format_double(c.sample_fraction) << "\n";
  out << "local_epochs: " << c.local_epochs << "\n";
  out << "batch_size: " << c.batch_size << "\n";
  out << "local_lr: " << format_double(c.local_lr) << "\n";
  out << "buyer_root_fraction: " << format_double(c.buyer_root_fraction) << "\n";
  out << "buyer_bias:\n";
  out << "  kind: " << to_string(c.buyer_bias.kind) << "\n";
  out << "  alpha: " << format_double(c.buyer_bias.alpha) << "\n";
  out << "seller_noise: " << format_double(c.seller_noise) << "\n";
  out << "aggregator:\n";
  out << "  kind: " << to_string(c.aggregator.kind) << "\n";
  out << "  mask_steps: " << c.aggregator.mask_steps << "\n";
  out << "  mask_lr: " << format_double(c.aggregator.mask_lr) << "\n";
  out << "attack:\n";
  out << "  kind: " << to_string(c.attack.kind) << "\n";
  out << "  adversary_fraction: " << format_double(c.attack.adversary_fraction) << "\n";
  out << "  poison_rate: " << format_double(c.attack.poison_rate) << "\n";
  out << "  flip_fraction: " << format_double(c.attack.flip_fraction) << "\n";
  out << "  target_label: " << c.attack.target_label << "\n";
  out << "  mimicry_lambda: " << format_double(c.attack.mimicry_lambda) << "\n";
  out << "  trigger:\n";
  out << "    patch_side: " << c.attack.trigger.patch_side << "\n";
  out << "    value: " << format_double(c.attack.trigger.value) << "\n";
  out << "    location: " << to_string(c.attack.trigger.location) << "\n";
  out << "    offset_dims: " << c.attack.trigger.offset_dims << "\n";
  out << "milestones: [";
  for (std::size_t i = 0; i < c.milestones.size(); ++i) {
    if (i) out << ", ";
    out << format_double(c.milestones[i]);
  }
  out << "]\n";
  out << "repeats: " << c.repeats << "\n";
  out << "seed: " << c.seed << "\n";
  return out.str();
}

std::uint64_t config_hash(const MarketplaceConfig& c) {
  return fnv1a64(serialize_config(c));
}

std::string config_hash_hex(const MarketplaceConfig& c) {
  const std::uint64_t h = config_hash(c);
  std::string out(16, '0');
  static const char digits[] = "0123456789abcdef";
  for (int i = 0; i < 16; ++i) {
    out[15 - i] = digits[(h >> (4 * i)) & 0xf];
  }
  return out;
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view label,
                          std::uint64_t index) {
  return splitmix64(splitmix64(seed ^ fnv1a64(label)) ^ index);
}

}  // namespace gradmarket
