#include "gradmarket/aggregate.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace gradmarket {

namespace {

void check_round(std::span<const Submission> subs) {
  if (subs.empty()) throw std::invalid_argument("aggregate: empty round");
  const std::size_t p = subs.front().delta.size();
  for (const auto& s : subs) {
    if (s.delta.size() != p) {
      throw std::invalid_argument("aggregate: submission dimension mismatch");
    }
  }
}

double cosine(const GradientVector& a, const GradientVector& b) {
  const double na = l2_norm(a), nb = l2_norm(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot(a, b) / (na * nb);
}

struct Pick {
  int seller_id;
  double weight;
  std::vector<double> vec;  // the vector the weight applies to
};

// Order the picks by seller id and fold them into a result. Summation in id
// order makes the aggregate independent of submission order, bit for bit.
AggregationResult assemble(std::size_t dim, std::vector<Pick> picks,
                           std::vector<double> scores) {
  std::sort(picks.begin(), picks.end(),
            [](const Pick& a, const Pick& b) { return a.seller_id < b.seller_id; });
  AggregationResult out;
  out.scores = std::move(scores);
  std::vector<double> sum(dim, 0.0);
  for (const auto& pick : picks) {
    out.selected.push_back(pick.seller_id);
    out.weights.push_back(pick.weight);
    for (std::size_t i = 0; i < dim; ++i) sum[i] += pick.weight * pick.vec[i];
  }
  out.aggregate = GradientVector(std::move(sum));
  return out;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

std::size_t two_means_low_count(const std::vector<double>& sorted_values) {
  const std::size_t n = sorted_values.size();
  if (n < 2) throw std::invalid_argument("two_means_low_count: need >= 2 values");
  std::vector<double> s1(n + 1, 0.0), s2(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    s1[i + 1] = s1[i] + sorted_values[i];
    s2[i + 1] = s2[i] + sorted_values[i] * sorted_values[i];
  }
  auto sse = [&](std::size_t lo, std::size_t hi) {  // [lo, hi)
    const double len = static_cast<double>(hi - lo);
    const double sum = s1[hi] - s1[lo];
    return (s2[hi] - s2[lo]) - sum * sum / len;
  };
  std::size_t best_k = 1;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = 1; k < n; ++k) {
    const double cost = sse(0, k) + sse(k, n);
    if (cost < best) {
      best = cost;
      best_k = k;
    }
  }
  return best_k;
}

AggregationResult fedavg(std::span<const Submission> subs) {
  check_round(subs);
  double total = 0.0;
  for (const auto& s : subs) total += static_cast<double>(s.num_samples);
  if (total <= 0.0) throw std::invalid_argument("fedavg: zero total sample count");

  std::vector<double> scores;
  std::vector<Pick> picks;
  for (const auto& s : subs) {
    const double w = static_cast<double>(s.num_samples) / total;
    scores.push_back(w);
    picks.push_back({s.seller_id, w, s.delta.values()});
  }
  return assemble(subs.front().delta.size(), std::move(picks), std::move(scores));
}

AggregationResult fltrust(std::span<const Submission> subs,
                          const GradientVector& buyer_delta) {
  check_round(subs);
  const double buyer_norm = l2_norm(buyer_delta);
  if (buyer_norm == 0.0) {
    throw std::invalid_argument("fltrust: zero-norm buyer reference");
  }

  std::vector<double> trust(subs.size());
  double trust_sum = 0.0;
  for (std::size_t i = 0; i < subs.size(); ++i) {
    trust[i] = std::max(0.0, cosine(subs[i].delta, buyer_delta));
    trust_sum += trust[i];
  }

  std::vector<Pick> picks;
  if (trust_sum > 0.0) {
    for (std::size_t i = 0; i < subs.size(); ++i) {
      if (trust[i] <= 0.0) continue;
      // Renormalise the submission to the buyer gradient's magnitude.
      const double scale = buyer_norm / l2_norm(subs[i].delta);
      std::vector<double> vec = subs[i].delta.values();
      for (double& v : vec) v *= scale;
      picks.push_back({subs[i].seller_id, trust[i] / trust_sum, std::move(vec)});
    }
  }
  return assemble(subs.front().delta.size(), std::move(picks), std::move(trust));
}

MartflOutcome martfl(std::span<const Submission> subs,
                     const GradientVector& reference) {
  check_round(subs);
  if (l2_norm(reference) == 0.0) {
    throw std::invalid_argument("martfl: zero-norm reference");
  }

  std::vector<double> scores(subs.size(), 0.0);
  std::vector<std::size_t> live;
  for (std::size_t i = 0; i < subs.size(); ++i) {
    if (l2_norm(subs[i].delta) > 0.0) {
      scores[i] = cosine(subs[i].delta, reference);
      live.push_back(i);
    }
  }

  std::vector<std::size_t> chosen;
  if (!live.empty()) {
    double lo = scores[live.front()], hi = lo;
    for (std::size_t i : live) {
      lo = std::min(lo, scores[i]);
      hi = std::max(hi, scores[i]);
    }
    if (lo == hi || live.size() == 1) {
      chosen = live;  // degenerate clustering: no exclusion
    } else {
      // Sort by (score, id) so boundary ties resolve by seller id and the
      // outcome is independent of submission order.
      std::vector<std::size_t> order = live;
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] < scores[b];
        return subs[a].seller_id < subs[b].seller_id;
      });
      std::vector<double> sorted_scores;
      sorted_scores.reserve(order.size());
      for (std::size_t i : order) sorted_scores.push_back(scores[i]);
      const std::size_t low = two_means_low_count(sorted_scores);
      chosen.assign(order.begin() + static_cast<std::ptrdiff_t>(low), order.end());
    }
  }

  double weight_sum = 0.0;
  for (std::size_t i : chosen) weight_sum += std::max(0.0, scores[i]);

  std::vector<Pick> picks;
  for (std::size_t i : chosen) {
    const double w = weight_sum > 0.0
                         ? std::max(0.0, scores[i]) / weight_sum
                         : 1.0 / static_cast<double>(chosen.size());
    picks.push_back({subs[i].seller_id, w, subs[i].delta.values()});
  }

  MartflOutcome out;
  out.result = assemble(subs.front().delta.size(), std::move(picks), std::move(scores));
  out.next_reference =
      l2_norm(out.result.aggregate) > 0.0 ? out.result.aggregate : reference;
  return out;
}

std::pair<double, std::vector<double>> mask_loss_gradient(
    const ModelParams& global, const GradientVector& delta,
    const std::vector<double>& mask_logits, const Dataset& data) {
  const std::size_t p = global.size();
  if (delta.size() != p || mask_logits.size() != p) {
    throw std::invalid_argument("mask_loss_gradient: length mismatch");
  }
  if (data.size() == 0) {
    throw std::invalid_argument("mask_loss_gradient: empty dataset");
  }
  std::vector<double> masked(p);
  std::vector<double> sig(p);
  for (std::size_t i = 0; i < p; ++i) {
    sig[i] = sigmoid(mask_logits[i]);
    masked[i] = global.values[i] + sig[i] * delta[i];
  }
  const ModelParams masked_params = unflatten(global, masked);
  std::vector<std::size_t> rows(data.size());
  std::iota(rows.begin(), rows.end(), 0);
  const double loss = forward_loss(masked_params, data, rows).loss;
  const GradientVector gw = backward(masked_params, data, rows);
  std::vector<double> dz(p);
  for (std::size_t i = 0; i < p; ++i) {
    dz[i] = gw[i] * delta[i] * sig[i] * (1.0 - sig[i]);
  }
  return {loss, std::move(dz)};
}

AggregationResult skymask(std::span<const Submission> subs,
                          const ModelParams& global, const Dataset& buyer_root,
                          int mask_steps, double mask_lr) {
  check_round(subs);
  if (buyer_root.size() == 0) {
    throw std::invalid_argument("skymask: empty buyer root");
  }
  if (mask_steps < 0 || !(mask_lr > 0.0)) {
    throw std::invalid_argument("skymask: bad mask schedule");
  }
  const std::size_t p = subs.front().delta.size();
  if (p != global.size()) {
    throw std::invalid_argument("skymask: submission/model shape mismatch");
  }

  std::vector<double> scores(subs.size(), 0.0);
  std::vector<std::size_t> live;
  for (std::size_t i = 0; i < subs.size(); ++i) {
    if (l2_norm(subs[i].delta) > 0.0) live.push_back(i);
  }
  if (live.empty()) {
    AggregationResult out;
    out.aggregate = GradientVector::zeros(p);
    out.scores = std::move(scores);
    return out;
  }

  // Train one sigmoid mask per live submission on the buyer root.
  std::vector<std::vector<double>> feature(live.size());
  for (std::size_t k = 0; k < live.size(); ++k) {
    std::vector<double> z(p, 0.0);
    for (int step = 0; step < mask_steps; ++step) {
      const auto [loss, dz] =
          mask_loss_gradient(global, subs[live[k]].delta, z, buyer_root);
      (void)loss;
      for (std::size_t i = 0; i < p; ++i) z[i] -= mask_lr * dz[i];
    }
    feature[k].resize(p);
    for (std::size_t i = 0; i < p; ++i) feature[k][i] = sigmoid(z[i]);
  }

  auto dist2 = [&](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double d = a[i] - b[i];
      s += d * d;
    }
    return s;
  };

  // 2-means over mask vectors, deterministic farthest-pair init.
  std::vector<int> assign(live.size(), 0);
  std::vector<std::vector<double>> centroid;
  double max_d2 = 0.0;
  std::size_t init_a = 0, init_b = 0;
  for (std::size_t i = 0; i < live.size(); ++i) {
    for (std::size_t j = i + 1; j < live.size(); ++j) {
      const double d2 = dist2(feature[i], feature[j]);
      if (d2 > max_d2) {
        max_d2 = d2;
        init_a = i;
        init_b = j;
      }
    }
  }

  if (max_d2 == 0.0) {
    // All masks identical: one effective cluster, everyone selected.
    centroid.push_back(feature[0]);
  } else {
    centroid = {feature[init_a], feature[init_b]};
    for (int iter = 0; iter < 100; ++iter) {
      std::vector<int> next(live.size());
      for (std::size_t k = 0; k < live.size(); ++k) {
        next[k] = dist2(feature[k], centroid[1]) < dist2(feature[k], centroid[0])
                      ? 1
                      : 0;
      }
      std::array<std::size_t, 2> count{0, 0};
      for (int a : next) count[static_cast<std::size_t>(a)] += 1;
      if (count[0] == 0 || count[1] == 0) break;  // keep the previous split
      const bool stable = next == assign;
      assign = std::move(next);
      for (int c = 0; c < 2; ++c) {
        std::vector<double> mean(p, 0.0);
        for (std::size_t k = 0; k < live.size(); ++k) {
          if (assign[k] != c) continue;
          for (std::size_t i = 0; i < p; ++i) mean[i] += feature[k][i];
        }
        for (double& v : mean) v /= static_cast<double>(count[static_cast<std::size_t>(c)]);
        centroid[static_cast<std::size_t>(c)] = std::move(mean);
      }
      if (stable) break;
    }
  }

  // Pick the winning cluster: larger wins; equal sizes go to the cluster
  // whose size-weighted average delta fits the buyer root better.
  std::vector<std::size_t> chosen;
  if (centroid.size() == 1) {
    chosen = live;
  } else {
    std::array<std::vector<std::size_t>, 2> groups;
    for (std::size_t k = 0; k < live.size(); ++k) {
      groups[static_cast<std::size_t>(assign[k])].push_back(k);
    }
    int winner;
    if (groups[0].size() != groups[1].size()) {
      winner = groups[0].size() > groups[1].size() ? 0 : 1;
    } else {
      std::array<double, 2> loss{0.0, 0.0};
      for (int c = 0; c < 2; ++c) {
        std::vector<double> avg(p, 0.0);
        double total = 0.0;
        for (std::size_t k : groups[static_cast<std::size_t>(c)]) {
          total += static_cast<double>(subs[live[k]].num_samples);
        }
        for (std::size_t k : groups[static_cast<std::size_t>(c)]) {
          const double w =
              total > 0.0
                  ? static_cast<double>(subs[live[k]].num_samples) / total
                  : 1.0 / static_cast<double>(groups[static_cast<std::size_t>(c)].size());
          const auto& vals = subs[live[k]].delta.values();
          for (std::size_t i = 0; i < p; ++i) avg[i] += w * vals[i];
        }
        std::vector<double> w_next(p);
        for (std::size_t i = 0; i < p; ++i) w_next[i] = global.values[i] + avg[i];
        std::vector<std::size_t> rows(buyer_root.size());
        std::iota(rows.begin(), rows.end(), 0);
        loss[static_cast<std::size_t>(c)] =
            forward_loss(unflatten(global, w_next), buyer_root, rows).loss;
      }
      winner = loss[1] < loss[0] ? 1 : 0;
    }
    for (std::size_t k = 0; k < live.size(); ++k) {
      if (assign[k] == winner) chosen.push_back(k);
    }
  }

  // Scores: negated distance to the own-cluster centroid (zero-norm
  // submissions keep score 0 and stay unselected).
  for (std::size_t k = 0; k < live.size(); ++k) {
    const auto& own =
        centroid.size() == 1 ? centroid[0] : centroid[static_cast<std::size_t>(assign[k])];
    scores[live[k]] = -std::sqrt(dist2(feature[k], own));
  }

  std::vector<Pick> picks;
  for (std::size_t k : chosen) {
    picks.push_back({subs[live[k]].seller_id,
                     1.0 / static_cast<double>(chosen.size()),
                     subs[live[k]].delta.values()});
  }
  return assemble(p, std::move(picks), std::move(scores));
}

AggregationResult RoundAggregator::run(std::span<const Submission> subs,
                                       const GradientVector& buyer_delta,
                                       const ModelParams& global,
                                       const Dataset& buyer_root) {
  switch (config_.kind) {
    case AggregatorKind::fedavg:
      return fedavg(subs);
    case AggregatorKind::fltrust:
      return fltrust(subs, buyer_delta);
    case AggregatorKind::martfl: {
      if (!reference_) reference_ = buyer_delta;  // r_1 = first buyer gradient
      auto out = martfl(subs, *reference_);
      reference_ = std::move(out.next_reference);
      return std::move(out.result);
    }
    case AggregatorKind::skymask:
      return skymask(subs, global, buyer_root, config_.mask_steps, config_.mask_lr);
  }
  throw std::logic_error("RoundAggregator: unknown aggregator kind");
}

}  // namespace gradmarket
