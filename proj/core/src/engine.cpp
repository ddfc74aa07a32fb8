#include "gradmarket/engine.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "gradmarket/metrics.hpp"
#include "gradmarket/parallel.hpp"
#include "gradmarket/rng.hpp"

namespace gradmarket {

namespace {

constexpr int kMlpHidden = 32;

std::uint64_t synthetic_cache_tag(const DatasetConfig& d, std::uint64_t gen_seed) {
  const std::string key = "synthetic:" + std::to_string(d.classes) + ":" +
                          std::to_string(d.dim) + ":" +
                          std::to_string(d.train_samples) + ":" +
                          std::to_string(d.test_samples) + ":" +
                          std::to_string(gen_seed);
  return fnv1a64(key);
}

}  // namespace

std::pair<Dataset, Dataset> build_dataset(const MarketplaceConfig& config) {
  const auto& d = config.dataset;
  if (d.kind == DatasetKind::idx_images) {
    return {load_idx(d.train_images, d.train_labels),
            load_idx(d.test_images, d.test_labels)};
  }
  // Synthetic data is a function of the config seed only, so repeats share
  // one dataset the way they would share a fixed benchmark corpus.
  const std::uint64_t gen_seed = derive_seed(config.seed, "dataset", 0);
  Dataset train, test;
  if (!d.cache.empty()) {
    const std::uint64_t tag = synthetic_cache_tag(d, gen_seed);
    if (load_dataset_cache(d.cache, train, test, tag)) return {train, test};
    train = make_synthetic(d.classes, d.dim, d.train_samples,
                           derive_seed(gen_seed, "train", 0));
    test = make_synthetic(d.classes, d.dim, d.test_samples,
                          derive_seed(gen_seed, "test", 0));
    save_dataset_cache(d.cache, train, test, tag);
    return {train, test};
  }
  train = make_synthetic(d.classes, d.dim, d.train_samples,
                         derive_seed(gen_seed, "train", 0));
  test = make_synthetic(d.classes, d.dim, d.test_samples,
                        derive_seed(gen_seed, "test", 0));
  return {train, test};
}

ExperimentState init_experiment(const MarketplaceConfig& config,
                                const Dataset& train, const Dataset& test,
                                std::uint64_t run_seed) {
  if (config.attack.kind != AttackKind::none &&
      config.attack.target_label >= train.num_classes) {
    throw std::invalid_argument(
        "attack.target_label: no such class in the dataset");
  }

  ExperimentState state;
  state.config = config;
  state.run_seed = run_seed;
  state.partition =
      split_market(train, test, config, derive_seed(run_seed, "split", 0));
  state.roles =
      assign_roles(config.num_sellers, config.attack, derive_seed(run_seed, "roles", 0));
  for (const auto& role : state.roles) {
    if (!role.malicious) continue;
    auto& shard = state.partition.sellers[static_cast<std::size_t>(role.id)];
    shard = poison_dataset(shard, config.attack,
                           derive_seed(run_seed, "poison",
                                       static_cast<std::uint64_t>(role.id)));
  }

  const ModelArch arch = config.dataset.kind == DatasetKind::synthetic
                             ? ModelArch::mlp
                             : ModelArch::logreg;
  state.model = init_model(arch, train.dim, train.num_classes,
                           arch == ModelArch::mlp ? kMlpHidden : 0,
                           derive_seed(run_seed, "init", 0));
  state.aggregator = RoundAggregator(config.aggregator);
  state.prev_round_delta = GradientVector::zeros(state.model.size());
  return state;
}

RoundLedger run_round(ExperimentState& state, int t, ThreadPool* pool) {
  const auto& cfg = state.config;
  const int n = cfg.num_sellers;
  const auto sample_count = static_cast<std::size_t>(
      std::ceil(cfg.sample_fraction * static_cast<double>(n)));
  Rng sampler(derive_seed(state.run_seed, "round-sample",
                          static_cast<std::uint64_t>(t)));
  const auto picked = sampler.sample_indices(static_cast<std::size_t>(n), sample_count);

  std::vector<Submission> subs(picked.size());
  auto train_one = [&](std::size_t j) {
    const int id = static_cast<int>(picked[j]);
    const auto& shard = state.partition.sellers[static_cast<std::size_t>(id)];
    const std::uint64_t seed =
        derive_seed(state.run_seed, "seller-local",
                    static_cast<std::uint64_t>(t) * static_cast<std::uint64_t>(n) +
                        static_cast<std::uint64_t>(id));
    subs[j] = Submission{id, shard.size(),
                         local_train(state.model, shard, cfg.local_epochs,
                                     cfg.batch_size, cfg.local_lr, seed)};
  };
  if (pool != nullptr && picked.size() > 1) {
    pool->parallel_for(picked.size(), train_one);
  } else {
    for (std::size_t j = 0; j < picked.size(); ++j) train_one(j);
  }

  // Coordinated sellers blend toward last round's public global delta.
  if (cfg.attack.kind == AttackKind::sybil_backdoor) {
    for (auto& sub : subs) {
      if (state.roles[static_cast<std::size_t>(sub.seller_id)].malicious) {
        sub.delta = sybil_blend(sub.delta, state.prev_round_delta,
                                cfg.attack.mimicry_lambda);
      }
    }
  }

  const GradientVector buyer_delta =
      local_train(state.model, state.partition.buyer_root, cfg.local_epochs,
                  cfg.batch_size, cfg.local_lr,
                  derive_seed(state.run_seed, "buyer-local",
                              static_cast<std::uint64_t>(t)));

  RoundLedger ledger;
  ledger.round = t;
  ledger.sampled.reserve(picked.size());
  for (std::size_t id : picked) ledger.sampled.push_back(static_cast<int>(id));
  ledger.divergence.reserve(subs.size());
  for (const auto& sub : subs) {
    ledger.divergence.push_back(l2_distance(sub.delta, buyer_delta));
  }

  AggregationResult res = state.aggregator.run(subs, buyer_delta, state.model,
                                               state.partition.buyer_root);
  ledger.selected = res.selected;
  ledger.weights = res.weights;
  ledger.scores = std::move(res.scores);
  ledger.cost = static_cast<int>(ledger.selected.size());
  ledger.payments.reserve(ledger.sampled.size());
  for (int id : ledger.sampled) {
    const bool paid = std::binary_search(ledger.selected.begin(),
                                         ledger.selected.end(), id);
    ledger.payments.push_back(paid ? 1 : 0);
  }

  for (std::size_t i = 0; i < state.model.size(); ++i) {
    state.model.values[i] += res.aggregate[i];
  }
  state.prev_round_delta = std::move(res.aggregate);

  ledger.accuracy = accuracy(state.model, state.partition.test_clean);
  if (state.partition.test_triggered.size() > 0) {
    ledger.asr = attack_success_rate(state.model, state.partition.test_triggered,
                                     cfg.attack.target_label);
  }
  return ledger;
}

RunTrace run_experiment(const MarketplaceConfig& config, const Dataset& train,
                        const Dataset& test, std::uint64_t run_seed,
                        ThreadPool* pool) {
  ExperimentState state = init_experiment(config, train, test, run_seed);
  RunTrace trace;
  trace.config_hash = config_hash_hex(config);
  trace.run_seed = run_seed;
  trace.num_sellers = config.num_sellers;
  trace.num_rounds = config.num_rounds;
  trace.roles = state.roles;
  trace.rounds.reserve(static_cast<std::size_t>(std::max(config.num_rounds, 0)));
  for (int t = 1; t <= config.num_rounds; ++t) {
    trace.rounds.push_back(run_round(state, t, pool));
  }
  trace.final_model = std::move(state.model);
  return trace;
}

RunTrace run_experiment(const MarketplaceConfig& config, std::uint64_t run_seed,
                        ThreadPool* pool) {
  const auto [train, test] = build_dataset(config);
  return run_experiment(config, train, test, run_seed, pool);
}

std::vector<long long> settle(const RunTrace& trace) {
  std::vector<long long> payments(static_cast<std::size_t>(trace.num_sellers), 0);
  for (const auto& round : trace.rounds) {
    for (int id : round.selected) {
      payments.at(static_cast<std::size_t>(id)) += 1;
    }
  }
  return payments;
}

}  // namespace gradmarket
