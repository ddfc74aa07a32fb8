#include <algorithm>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>
#include <yaml-cpp/yaml.h>

#include "gradmarket/metrics.hpp"
#include "gradmarket/parallel.hpp"

#include "commands.hpp"
#include "execute.hpp"

namespace gradmarket::cli {

namespace {

using nlohmann::json;

struct SweepAxis {
  std::string field;
  std::vector<std::string> values;  // YAML scalar text, ready for --set
};

struct SweepSpec {
  std::string base_path;
  std::optional<std::string> out_dir;
  int cap = 256;
  std::vector<SweepAxis> axes;
};

struct Cell {
  std::string name;                     // cell_000, ...
  MarketplaceConfig config;
  std::vector<std::string> axis_values; // aligned with spec.axes
  std::string status;                   // ok | cached | failed
  std::string error;
};

SweepSpec parse_spec(const std::string& path) {
  YAML::Node root;
  try {
    root = YAML::LoadFile(path);
  } catch (const YAML::Exception& e) {
    throw ParseError("sweep spec: " + std::string(e.what()));
  }
  if (!root.IsMap()) throw ParseError("sweep spec: expected a mapping");

  SweepSpec spec;
  for (const auto& entry : root) {
    const std::string key = entry.first.as<std::string>();
    if (key != "base" && key != "out" && key != "cap" && key != "axes") {
      throw ValidationError("sweep spec: unknown key '" + key + "'");
    }
  }
  if (!root["base"]) throw ValidationError("sweep spec: 'base' is required");
  spec.base_path = root["base"].as<std::string>();
  // Relative base paths resolve against the spec file's directory.
  const auto spec_dir = std::filesystem::path(path).parent_path();
  if (!spec_dir.empty() && std::filesystem::path(spec.base_path).is_relative()) {
    spec.base_path = (spec_dir / spec.base_path).string();
  }
  if (root["out"]) spec.out_dir = root["out"].as<std::string>();
  if (root["cap"]) {
    spec.cap = root["cap"].as<int>();
    if (spec.cap < 1) throw ValidationError("sweep spec: cap must be positive");
  }
  if (root["axes"]) {
    if (!root["axes"].IsSequence()) {
      throw ValidationError("sweep spec: axes must be a list");
    }
    for (const auto& node : root["axes"]) {
      if (!node.IsMap() || !node["field"] || !node["values"]) {
        throw ValidationError("sweep spec: each axis needs 'field' and 'values'");
      }
      SweepAxis axis;
      axis.field = node["field"].as<std::string>();
      if (!node["values"].IsSequence() || node["values"].size() == 0) {
        throw ValidationError("sweep spec: axis '" + axis.field +
                              "' needs a non-empty value list");
      }
      for (const auto& value : node["values"]) {
        if (!value.IsScalar()) {
          throw ValidationError("sweep spec: axis '" + axis.field +
                                "' values must be scalars");
        }
        axis.values.push_back(YAML::Dump(value));
      }
      spec.axes.push_back(std::move(axis));
    }
  }
  return spec;
}

// Cross product in row-major order: the last axis varies fastest.
std::vector<std::vector<std::size_t>> cross_product(const std::vector<SweepAxis>& axes) {
  std::vector<std::vector<std::size_t>> combos{{}};
  for (const auto& axis : axes) {
    std::vector<std::vector<std::size_t>> next;
    next.reserve(combos.size() * axis.values.size());
    for (const auto& combo : combos) {
      for (std::size_t v = 0; v < axis.values.size(); ++v) {
        auto extended = combo;
        extended.push_back(v);
        next.push_back(std::move(extended));
      }
    }
    combos = std::move(next);
  }
  return combos;
}

std::string csv_field(const std::string& raw) {
  if (raw.find_first_of(",\"\n") == std::string::npos) return raw;
  std::string quoted = "\"";
  for (char c : raw) {
    if (c == '"') quoted += '"';
    quoted += c;
  }
  quoted += '"';
  return quoted;
}

std::string json_number_field(const json& j) {
  if (j.is_null()) return "";
  return format_double(j.get<double>());
}

// The scalar metric columns carried per row, in order. Milestone columns are
// appended per configured milestone.
const std::vector<std::string>& metric_columns() {
  static const std::vector<std::string> cols = {
      "final_accuracy",      "final_asr",
      "total_cost",          "msr_fraction",
      "msr_rate",            "bsr_rate",
      "divergence_selection_r", "payment_gini_benign",
      "entropy_bits",        "entropy_normalized",
      "jaccard_stability",   "benign_cost_per_round",
      "malicious_cost_per_round"};
  return cols;
}

}  // namespace

int cmd_sweep(const std::string& spec_path, const CommonOptions& opts) {
  SweepSpec spec;
  std::string base_text;
  std::vector<Cell> cells;
  std::vector<double> base_milestones;
  std::filesystem::path out_dir;
  try {
    spec = parse_spec(spec_path);
    // An explicit --out beats the spec file's `out`, which beats the
    // environment/default carried in opts.out_dir.
    out_dir = opts.out_given ? opts.out_dir : spec.out_dir.value_or(opts.out_dir);

    std::ifstream in(spec.base_path, std::ios::binary);
    if (!in) throw IoError("cannot open base config: " + spec.base_path);
    std::ostringstream buf;
    buf << in.rdbuf();
    base_text = buf.str();

    const auto combos = cross_product(spec.axes);
    if (static_cast<int>(combos.size()) > spec.cap) {
      throw ValidationError("sweep spec: " + std::to_string(combos.size()) +
                            " cells exceed the cap of " + std::to_string(spec.cap));
    }

    // Build every cell config up front: an unresolvable field path or invalid
    // value is a spec error, not a runtime failure.
    for (std::size_t c = 0; c < combos.size(); ++c) {
      Cell cell;
      char name[32];
      std::snprintf(name, sizeof(name), "cell_%03zu", c);
      cell.name = name;

      std::vector<std::string> overrides = opts.overrides;
      if (opts.seed) overrides.push_back("seed=" + std::to_string(*opts.seed));
      for (std::size_t a = 0; a < spec.axes.size(); ++a) {
        const std::string& value = spec.axes[a].values[combos[c][a]];
        overrides.push_back(spec.axes[a].field + "=" + value);
        cell.axis_values.push_back(value);
      }
      cell.config = load_config(base_text, overrides);
      cells.push_back(std::move(cell));
    }
    base_milestones = cells.empty() ? std::vector<double>{} : cells.front().config.milestones;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfigError;
  }

  // Execute (or resume) each cell. Failures are recorded, not fatal.
  std::mutex log_mutex;
  auto run_cell = [&](std::size_t c, int cell_jobs) {
    Cell& cell = cells[c];
    const auto cell_dir = out_dir / "cells" / cell.name;
    try {
      const std::string expect_hash = config_hash_hex(cell.config);
      const auto summary_path = cell_dir / "summary.json";
      if (std::filesystem::exists(summary_path)) {
        std::ifstream in(summary_path, std::ios::binary);
        json summary;
        try {
          summary = json::parse(in);
        } catch (const json::exception&) {
          summary = json::object();
        }
        if (summary.value("config_hash", "") == expect_hash) {
          cell.status = "cached";
          return;
        }
      }
      execute_experiment(cell.config, cell_dir, cell_jobs);
      cell.status = "ok";
    } catch (const std::exception& e) {
      cell.status = "failed";
      cell.error = e.what();
      std::lock_guard<std::mutex> lock(log_mutex);
      std::fprintf(stderr, "%s failed: %s\n", cell.name.c_str(), e.what());
    }
  };

  if (opts.jobs > 1 && cells.size() > 1) {
    ThreadPool pool(static_cast<std::size_t>(opts.jobs));
    pool.parallel_for(cells.size(), [&](std::size_t c) { run_cell(c, 1); });
  } else {
    for (std::size_t c = 0; c < cells.size(); ++c) run_cell(c, opts.jobs);
  }

  // Assemble grid.csv from the cells' summary files so fresh, cached and
  // re-run cells all flow through the same path.
  try {
    std::ostringstream grid;
    grid << "cell,repeat,status";
    for (const auto& axis : spec.axes) grid << ',' << csv_field(axis.field);
    for (const auto& col : metric_columns()) grid << ',' << col;
    for (double m : base_milestones) {
      grid << ",tstar_" << format_double(m) << ",coc_" << format_double(m);
    }
    for (const auto& col : metric_columns()) grid << ',' << col << "_std";
    grid << '\n';

    auto emit_axis_values = [&](const Cell& cell) {
      for (const auto& value : cell.axis_values) grid << ',' << csv_field(value);
    };

    for (const auto& cell : cells) {
      if (cell.status == "failed") {
        grid << cell.name << ",,failed";
        emit_axis_values(cell);
        const std::size_t blanks =
            metric_columns().size() * 2 + base_milestones.size() * 2;
        for (std::size_t k = 0; k < blanks; ++k) grid << ',';
        grid << '\n';
        continue;
      }
      std::ifstream in(out_dir / "cells" / cell.name / "summary.json",
                       std::ios::binary);
      const json summary = json::parse(in);

      for (const auto& rep : summary.at("per_repeat")) {
        grid << cell.name << ',' << rep.at("repeat").get<int>() << ',' << cell.status;
        emit_axis_values(cell);
        for (const auto& col : metric_columns()) {
          grid << ',' << json_number_field(rep.at(col));
        }
        const auto& milestones = rep.at("milestones");
        for (std::size_t m = 0; m < base_milestones.size(); ++m) {
          if (m < milestones.size()) {
            grid << ',' << json_number_field(milestones[m].at("t_star"));
            grid << ',' << json_number_field(milestones[m].at("coc"));
          } else {
            grid << ",,";
          }
        }
        for (std::size_t k = 0; k < metric_columns().size(); ++k) grid << ',';
        grid << '\n';
      }

      grid << cell.name << ",mean," << cell.status;
      emit_axis_values(cell);
      const auto& mean = summary.at("mean");
      for (const auto& col : metric_columns()) {
        grid << ',' << json_number_field(mean.at(col));
      }
      const auto& mean_milestones = mean.at("milestones");
      for (std::size_t m = 0; m < base_milestones.size(); ++m) {
        if (m < mean_milestones.size()) {
          grid << ',' << json_number_field(mean_milestones[m].at("t_star"));
          grid << ',' << json_number_field(mean_milestones[m].at("coc"));
        } else {
          grid << ",,";
        }
      }
      const auto& stddev = summary.at("std");
      for (const auto& col : metric_columns()) {
        grid << ',' << json_number_field(stddev.at(col));
      }
      grid << '\n';
    }

    write_file_atomic(out_dir / "grid.csv", grid.str());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "sweep failed: %s\n", e.what());
    return kExitRuntimeError;
  }

  for (const auto& cell : cells) {
    if (cell.status == "failed") return kExitCellFailure;
  }
  return kExitOk;
}

}  // namespace gradmarket::cli
