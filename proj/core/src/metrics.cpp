#include "gradmarket/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace gradmarket {

namespace {

using ordered_json = nlohmann::ordered_json;

// 0/1 membership table for a set of seller ids.
std::vector<char> id_mask(std::span<const int> ids, int num_sellers) {
  std::vector<char> mask(static_cast<std::size_t>(num_sellers), 0);
  for (int id : ids) {
    if (id < 0 || id >= num_sellers) {
      throw std::invalid_argument("seller id out of range: " + std::to_string(id));
    }
    mask[static_cast<std::size_t>(id)] = 1;
  }
  return mask;
}

std::vector<int> malicious_ids(const RunTrace& trace) {
  std::vector<int> out;
  for (const auto& role : trace.roles) {
    if (role.malicious) out.push_back(role.id);
  }
  return out;
}

std::vector<int> benign_ids(const RunTrace& trace) {
  std::vector<int> out;
  for (const auto& role : trace.roles) {
    if (!role.malicious) out.push_back(role.id);
  }
  return out;
}

}  // namespace

std::optional<CocResult> cost_of_convergence(std::span<const double> accuracy,
                                             std::span<const int> cost,
                                             double milestone) {
  if (accuracy.size() != cost.size()) {
    throw std::invalid_argument("cost_of_convergence: series length mismatch");
  }
  long long spent = 0;
  for (std::size_t t = 0; t < accuracy.size(); ++t) {
    spent += cost[t];
    if (accuracy[t] >= milestone) {
      return CocResult{static_cast<int>(t) + 1, spent};
    }
  }
  return std::nullopt;
}

std::optional<double> malicious_selection_rate(const RunTrace& trace) {
  const auto mask = id_mask(malicious_ids(trace), trace.num_sellers);
  long long selected = 0;
  long long malicious = 0;
  for (const auto& round : trace.rounds) {
    selected += static_cast<long long>(round.selected.size());
    for (int id : round.selected) {
      malicious += mask[static_cast<std::size_t>(id)];
    }
  }
  if (selected == 0) return std::nullopt;
  return static_cast<double>(malicious) / static_cast<double>(selected);
}

double per_seller_selection_rate(const RunTrace& trace, std::span<const int> sellers) {
  if (sellers.empty()) {
    throw std::invalid_argument("per_seller_selection_rate: empty seller set");
  }
  if (trace.rounds.empty()) {
    throw std::invalid_argument("per_seller_selection_rate: trace has no rounds");
  }
  const auto mask = id_mask(sellers, trace.num_sellers);
  long long hits = 0;
  for (const auto& round : trace.rounds) {
    for (int id : round.selected) {
      hits += mask[static_cast<std::size_t>(id)];
    }
  }
  return static_cast<double>(hits) /
         (static_cast<double>(trace.rounds.size()) * static_cast<double>(sellers.size()));
}

std::optional<double> divergence_selection_correlation(const RunTrace& trace) {
  std::vector<double> x;  // divergence
  std::vector<double> y;  // 0/1 selected
  for (const auto& round : trace.rounds) {
    if (round.divergence.size() != round.sampled.size() ||
        round.payments.size() != round.sampled.size()) {
      throw std::invalid_argument("divergence_selection_correlation: ragged ledger");
    }
    for (std::size_t k = 0; k < round.sampled.size(); ++k) {
      x.push_back(round.divergence[k]);
      y.push_back(static_cast<double>(round.payments[k]));
    }
  }
  const std::size_t n = x.size();
  if (n < 2) return std::nullopt;

  double mx = 0.0, my = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    mx += x[k];
    my += y[k];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);

  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double dx = x[k] - mx;
    const double dy = y[k] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

double payment_gini(std::span<const long long> payments) {
  if (payments.empty()) {
    throw std::invalid_argument("payment_gini: empty payment vector");
  }
  const std::size_t n = payments.size();
  long long total = 0;
  for (long long p : payments) {
    if (p < 0) throw std::invalid_argument("payment_gini: negative payment");
    total += p;
  }
  if (total == 0) return 0.0;
  long long abs_diff = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      abs_diff += std::llabs(payments[i] - payments[j]);
    }
  }
  // sum |xi-xj| / (2 n^2 mu), mu = total / n
  return static_cast<double>(abs_diff) /
         (2.0 * static_cast<double>(n) * static_cast<double>(total));
}

std::pair<double, double> selection_diversity(const RunTrace& trace) {
  std::vector<long long> counts(static_cast<std::size_t>(trace.num_sellers), 0);
  long long total = 0;
  for (const auto& round : trace.rounds) {
    for (int id : round.selected) {
      counts.at(static_cast<std::size_t>(id)) += 1;
      total += 1;
    }
  }
  if (total == 0) {
    throw std::invalid_argument("selection_diversity: no selections in trace");
  }
  double bits = 0.0;
  for (long long c : counts) {
    if (c == 0) continue;  // 0 log 0 = 0
    const double p = static_cast<double>(c) / static_cast<double>(total);
    bits -= p * std::log2(p);
  }
  const double norm =
      trace.num_sellers > 1 ? bits / std::log2(static_cast<double>(trace.num_sellers)) : 0.0;
  return {bits, norm};
}

double selection_stability(const RunTrace& trace) {
  if (trace.rounds.size() < 2) {
    throw std::invalid_argument("selection_stability: needs at least two rounds");
  }
  double sum = 0.0;
  for (std::size_t t = 0; t + 1 < trace.rounds.size(); ++t) {
    const auto& a = trace.rounds[t].selected;
    const auto& b = trace.rounds[t + 1].selected;
    if (a.empty() && b.empty()) {
      sum += 1.0;
      continue;
    }
    if (a.empty() || b.empty()) continue;  // Jaccard 0
    std::vector<int> inter;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(),
                          std::back_inserter(inter));
    const double uni = static_cast<double>(a.size() + b.size() - inter.size());
    sum += static_cast<double>(inter.size()) / uni;
  }
  return sum / static_cast<double>(trace.rounds.size() - 1);
}

double attack_success_rate(const ModelParams& model, const Dataset& triggered,
                           int target_label) {
  if (triggered.size() == 0) {
    throw std::invalid_argument("attack_success_rate: empty triggered set");
  }
  const auto labels = predict(model, triggered);
  long long hits = 0;
  for (int label : labels) {
    if (label == target_label) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

std::pair<double, double> cost_composition(const RunTrace& trace) {
  if (trace.rounds.empty()) {
    throw std::invalid_argument("cost_composition: trace has no rounds");
  }
  const auto mask = id_mask(malicious_ids(trace), trace.num_sellers);
  long long benign = 0;
  long long malicious = 0;
  for (const auto& round : trace.rounds) {
    for (int id : round.selected) {
      if (mask[static_cast<std::size_t>(id)]) {
        ++malicious;
      } else {
        ++benign;
      }
    }
  }
  const double rounds = static_cast<double>(trace.rounds.size());
  return {static_cast<double>(benign) / rounds, static_cast<double>(malicious) / rounds};
}

MetricsReport build_report(const RunTrace& trace, std::span<const double> milestones) {
  if (trace.rounds.empty()) {
    throw std::invalid_argument("build_report: trace has no rounds");
  }
  MetricsReport report;

  const auto malicious = malicious_ids(trace);
  const auto benign = benign_ids(trace);
  const auto mal_mask = id_mask(malicious, trace.num_sellers);

  long long total_selected = 0;
  for (const auto& round : trace.rounds) {
    report.cost.push_back(round.cost);
    report.accuracy.push_back(round.accuracy);
    report.asr.push_back(round.asr);
    if (round.selected.empty()) {
      report.msr.push_back(std::nullopt);
    } else {
      long long bad = 0;
      for (int id : round.selected) bad += mal_mask[static_cast<std::size_t>(id)];
      report.msr.push_back(static_cast<double>(bad) /
                           static_cast<double>(round.selected.size()));
    }
    total_selected += static_cast<long long>(round.selected.size());
    report.total_cost += round.cost;
  }

  for (double target : milestones) {
    MilestoneResult m;
    m.target = target;
    m.reached = cost_of_convergence(report.accuracy, report.cost, target);
    report.milestones.push_back(m);
  }

  report.msr_fraction = malicious_selection_rate(trace);
  if (!malicious.empty()) {
    report.msr_rate = per_seller_selection_rate(trace, malicious);
  }
  if (!benign.empty()) {
    report.bsr_rate = per_seller_selection_rate(trace, benign);
  }
  report.divergence_selection_r = divergence_selection_correlation(trace);

  report.payments = settle(trace);
  if (!benign.empty()) {
    std::vector<long long> benign_pay;
    for (int id : benign) benign_pay.push_back(report.payments.at(static_cast<std::size_t>(id)));
    report.payment_gini_benign = payment_gini(benign_pay);
  }

  if (total_selected > 0) {
    const auto [bits, norm] = selection_diversity(trace);
    report.entropy_bits = bits;
    report.entropy_normalized = norm;
  }
  if (trace.rounds.size() >= 2) {
    report.jaccard_stability = selection_stability(trace);
  }

  const auto [benign_cost, malicious_cost] = cost_composition(trace);
  report.benign_cost_per_round = benign_cost;
  report.malicious_cost_per_round = malicious_cost;

  report.final_accuracy = trace.rounds.back().accuracy;
  report.final_asr = trace.rounds.back().asr;
  return report;
}

void write_metrics_csv(std::ostream& out, std::span<const RunTrace> traces) {
  out << "repeat,round,cost,accuracy,asr,msr_fraction,selected_ids\n";
  for (std::size_t r = 0; r < traces.size(); ++r) {
    const auto& trace = traces[r];
    const auto mask = id_mask(malicious_ids(trace), trace.num_sellers);
    for (const auto& round : trace.rounds) {
      out << r << ',' << round.round << ',' << round.cost << ','
          << format_double(round.accuracy) << ',';
      if (round.asr) out << format_double(*round.asr);
      out << ',';
      if (!round.selected.empty()) {
        long long bad = 0;
        for (int id : round.selected) bad += mask[static_cast<std::size_t>(id)];
        out << format_double(static_cast<double>(bad) /
                             static_cast<double>(round.selected.size()));
      }
      out << ',';
      for (std::size_t k = 0; k < round.selected.size(); ++k) {
        if (k > 0) out << ';';
        out << round.selected[k];
      }
      out << '\n';
    }
  }
}

namespace {

// Mean/std accumulation over repeats where a metric is present.
class Agg {
 public:
  void add(const std::optional<double>& v) {
    if (v) values_.push_back(*v);
  }
  void add(double v) { values_.push_back(v); }

  ordered_json mean() const {
    if (values_.empty()) return nullptr;
    double s = 0.0;
    for (double v : values_) s += v;
    return s / static_cast<double>(values_.size());
  }

  ordered_json stddev() const {
    if (values_.empty()) return nullptr;
    if (values_.size() == 1) return 0.0;
    double s = 0.0;
    for (double v : values_) s += v;
    const double m = s / static_cast<double>(values_.size());
    double ss = 0.0;
    for (double v : values_) ss += (v - m) * (v - m);
    return std::sqrt(ss / static_cast<double>(values_.size() - 1));
  }

 private:
  std::vector<double> values_;
};

ordered_json opt_json(const std::optional<double>& v) {
  if (v) return *v;
  return nullptr;
}

ordered_json milestone_json(const MilestoneResult& m) {
  ordered_json j;
  j["target"] = m.target;
  j["reached"] = m.reached.has_value();
  if (m.reached) {
    j["t_star"] = m.reached->t_star;
    j["coc"] = m.reached->coc;
  } else {
    j["t_star"] = nullptr;
    j["coc"] = nullptr;
  }
  return j;
}

}  // namespace

std::string summary_json(const MarketplaceConfig& config,
                         std::span<const RunTrace> traces,
                         std::span<const MetricsReport> reports) {
  if (traces.size() != reports.size()) {
    throw std::invalid_argument("summary_json: traces/reports length mismatch");
  }
  if (traces.empty()) {
    throw std::invalid_argument("summary_json: no repeats");
  }

  ordered_json root;
  root["config_hash"] = config_hash_hex(config);
  root["seed"] = config.seed;
  root["repeats"] = traces.size();
  root["num_sellers"] = config.num_sellers;
  root["num_rounds"] = config.num_rounds;
  root["aggregator"] = to_string(config.aggregator.kind);
  root["attack"] = to_string(config.attack.kind);
  root["adversary_fraction"] = config.attack.adversary_fraction;
  root["malicious_count"] = malicious_count(config.num_sellers, config.attack.adversary_fraction);
  root["milestones"] = config.milestones;

  ordered_json per_repeat = ordered_json::array();
  for (std::size_t r = 0; r < reports.size(); ++r) {
    const auto& rep = reports[r];
    ordered_json j;
    j["repeat"] = r;
    j["run_seed"] = traces[r].run_seed;
    j["final_accuracy"] = rep.final_accuracy;
    j["final_asr"] = opt_json(rep.final_asr);
    j["total_cost"] = rep.total_cost;
    j["msr_fraction"] = opt_json(rep.msr_fraction);
    j["msr_rate"] = opt_json(rep.msr_rate);
    j["bsr_rate"] = opt_json(rep.bsr_rate);
    j["divergence_selection_r"] = opt_json(rep.divergence_selection_r);
    j["payment_gini_benign"] = opt_json(rep.payment_gini_benign);
    j["entropy_bits"] = opt_json(rep.entropy_bits);
    j["entropy_normalized"] = opt_json(rep.entropy_normalized);
    j["jaccard_stability"] = opt_json(rep.jaccard_stability);
    j["benign_cost_per_round"] = rep.benign_cost_per_round;
    j["malicious_cost_per_round"] = rep.malicious_cost_per_round;
    ordered_json ms = ordered_json::array();
    for (const auto& m : rep.milestones) ms.push_back(milestone_json(m));
    j["milestones"] = ms;
    j["payments"] = rep.payments;
    per_repeat.push_back(std::move(j));
  }
  root["per_repeat"] = per_repeat;

  // Scalar aggregation. Optionals aggregate over the repeats where they are
  // present; a metric absent everywhere renders as null.
  struct Named {
    const char* name;
    Agg agg;
  };
  std::vector<Named> scalars;
  auto collect = [&](const char* name, auto getter) {
    Named n{name, Agg{}};
    for (const auto& rep : reports) n.agg.add(getter(rep));
    scalars.push_back(std::move(n));
  };
  collect("final_accuracy", [](const MetricsReport& r) { return r.final_accuracy; });
  collect("final_asr", [](const MetricsReport& r) { return r.final_asr; });
  collect("total_cost", [](const MetricsReport& r) { return static_cast<double>(r.total_cost); });
  collect("msr_fraction", [](const MetricsReport& r) { return r.msr_fraction; });
  collect("msr_rate", [](const MetricsReport& r) { return r.msr_rate; });
  collect("bsr_rate", [](const MetricsReport& r) { return r.bsr_rate; });
  collect("divergence_selection_r",
          [](const MetricsReport& r) { return r.divergence_selection_r; });
  collect("payment_gini_benign",
          [](const MetricsReport& r) { return r.payment_gini_benign; });
  collect("entropy_bits", [](const MetricsReport& r) { return r.entropy_bits; });
  collect("entropy_normalized", [](const MetricsReport& r) { return r.entropy_normalized; });
  collect("jaccard_stability", [](const MetricsReport& r) { return r.jaccard_stability; });
  collect("benign_cost_per_round",
          [](const MetricsReport& r) { return r.benign_cost_per_round; });
  collect("malicious_cost_per_round",
          [](const MetricsReport& r) { return r.malicious_cost_per_round; });

  ordered_json mean, stddev;
  for (const auto& s : scalars) {
    mean[s.name] = s.agg.mean();
    stddev[s.name] = s.agg.stddev();
  }

  // Milestones aggregate over the repeats that reached them.
  ordered_json mean_milestones = ordered_json::array();
  for (std::size_t k = 0; k < config.milestones.size(); ++k) {
    Agg tstar, coc;
    int reached = 0;
    for (const auto& rep : reports) {
      const auto& m = rep.milestones.at(k);
      if (m.reached) {
        ++reached;
        tstar.add(static_cast<double>(m.reached->t_star));
        coc.add(static_cast<double>(m.reached->coc));
      }
    }
    ordered_json j;
    j["target"] = config.milestones[k];
    j["reached_count"] = reached;
    j["t_star"] = tstar.mean();
    j["coc"] = coc.mean();
    mean_milestones.push_back(std::move(j));
  }
  mean["milestones"] = mean_milestones;
  root["mean"] = mean;
  root["std"] = stddev;

  // Mean per-round series across repeats (every repeat has the same length).
  const std::size_t rounds = reports.front().cost.size();
  for (const auto& rep : reports) {
    if (rep.cost.size() != rounds) {
      throw std::invalid_argument("summary_json: repeats disagree on round count");
    }
  }
  ordered_json series;
  std::vector<double> acc(rounds, 0.0), cost(rounds, 0.0);
  for (const auto& rep : reports) {
    for (std::size_t t = 0; t < rounds; ++t) {
      acc[t] += rep.accuracy[t];
      cost[t] += static_cast<double>(rep.cost[t]);
    }
  }
  const double n = static_cast<double>(reports.size());
  for (std::size_t t = 0; t < rounds; ++t) {
    acc[t] /= n;
    cost[t] /= n;
  }
  series["accuracy"] = acc;
  series["cost"] = cost;
  ordered_json asr_series = ordered_json::array();
  for (std::size_t t = 0; t < rounds; ++t) {
    Agg a;
    for (const auto& rep : reports) a.add(rep.asr[t]);
    asr_series.push_back(a.mean());
  }
  series["asr"] = asr_series;
  root["mean_series"] = series;

  return root.dump(2) + "\n";
}

}  // namespace gradmarket
