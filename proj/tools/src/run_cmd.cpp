#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gradmarket/engine.hpp"
#include "gradmarket/metrics.hpp"
#include "gradmarket/parallel.hpp"

#include "commands.hpp"
#include "execute.hpp"

namespace gradmarket::cli {

namespace {

std::string trace_filename(int repeat) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "trace_r%03d.jsonl", repeat);
  return buf;
}

}  // namespace

std::vector<MetricsReport> execute_experiment(const MarketplaceConfig& config,
                                              const std::filesystem::path& out,
                                              int jobs) {
  std::filesystem::create_directories(out);
  write_file_atomic(out / "config.yaml", serialize_config(config));

  const auto [train, test] = build_dataset(config);

  std::vector<RunTrace> traces(static_cast<std::size_t>(config.repeats));
  auto one_repeat = [&](std::size_t r, ThreadPool* pool) {
    const std::uint64_t run_seed = derive_seed(config.seed, "repeat", r);
    traces[r] = run_experiment(config, train, test, run_seed, pool);
    write_trace((out / trace_filename(static_cast<int>(r))).string(), traces[r]);
  };

  if (jobs > 1 && config.repeats > 1) {
    ThreadPool pool(static_cast<std::size_t>(jobs));
    pool.parallel_for(traces.size(), [&](std::size_t r) { one_repeat(r, nullptr); });
  } else if (jobs > 1) {
    ThreadPool pool(static_cast<std::size_t>(jobs));
    one_repeat(0, &pool);
  } else {
    for (std::size_t r = 0; r < traces.size(); ++r) one_repeat(r, nullptr);
  }

  std::vector<MetricsReport> reports;
  reports.reserve(traces.size());
  for (const auto& trace : traces) {
    reports.push_back(build_report(trace, config.milestones));
  }

  std::ostringstream csv;
  write_metrics_csv(csv, traces);
  write_file_atomic(out / "metrics.csv", csv.str());
  write_file_atomic(out / "summary.json", summary_json(config, traces, reports));
  return reports;
}

int cmd_run(const std::string& config_path, const CommonOptions& opts) {
  MarketplaceConfig config;
  try {
    config = load_config_file(config_path, opts.overrides);
    if (opts.seed) config.seed = *opts.seed;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfigError;
  }

  std::vector<MetricsReport> reports;
  try {
    reports = execute_experiment(config, opts.out_dir, opts.jobs);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "run failed: %s\n", e.what());
    return kExitRuntimeError;
  }

  double acc = 0.0, asr = 0.0, cost = 0.0;
  int asr_n = 0;
  for (const auto& rep : reports) {
    acc += rep.final_accuracy;
    cost += static_cast<double>(rep.total_cost);
    if (rep.final_asr) {
      asr += *rep.final_asr;
      ++asr_n;
    }
  }
  const double n = static_cast<double>(reports.size());
  std::printf("final_accuracy=%s final_asr=%s total_cost=%s\n",
              format_double(acc / n).c_str(),
              asr_n > 0 ? format_double(asr / asr_n).c_str() : "-",
              format_double(cost / n).c_str());
  return kExitOk;
}

}  // namespace gradmarket::cli
