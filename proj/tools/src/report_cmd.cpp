#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gradmarket/config.hpp"

#include "commands.hpp"
#include "svg.hpp"

namespace gradmarket::cli {

namespace {

using nlohmann::json;

// ---- tiny quote-aware CSV reader --------------------------------------------

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else {
      field += c;
    }
  }
  fields.push_back(std::move(field));
  return fields;
}

struct Table {
  std::vector<std::string> headers;
  std::vector<std::vector<std::string>> rows;

  std::optional<std::size_t> column(const std::string& name) const {
    const auto it = std::find(headers.begin(), headers.end(), name);
    if (it == headers.end()) return std::nullopt;
    return static_cast<std::size_t>(it - headers.begin());
  }
};

Table parse_csv(const std::string& text, const std::string& path) {
  Table table;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (table.headers.empty()) {
      table.headers = std::move(fields);
    } else {
      fields.resize(table.headers.size());
      table.rows.push_back(std::move(fields));
    }
  }
  if (table.headers.empty()) throw IoError(path + ": empty CSV");
  return table;
}

std::optional<double> parse_number(const std::string& text) {
  if (text.empty()) return std::nullopt;
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (end == text.c_str() || *end != '\0') return std::nullopt;
  return v;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// ---- grid plotting -----------------------------------------------------------

// One aggregated (mean) grid row, keyed by column name.
struct MeanRow {
  std::string cell;
  std::string label;  // axis values joined, or the cell name
  std::map<std::string, std::string> fields;

  std::optional<double> number(const std::string& column) const {
    const auto it = fields.find(column);
    if (it == fields.end()) return std::nullopt;
    return parse_number(it->second);
  }
};

constexpr const char* kAdversaryColumn = "attack.adversary_fraction";
constexpr const char* kAggregatorColumn = "aggregator.kind";

std::vector<MeanRow> mean_rows(const Table& grid, const std::string& path) {
  const auto cell_col = grid.column("cell");
  const auto repeat_col = grid.column("repeat");
  const auto status_col = grid.column("status");
  if (!cell_col || !repeat_col || !status_col) {
    throw IoError(path + ": not a grid.csv (missing cell/repeat/status columns)");
  }
  // Axis columns sit between `status` and the first metric column.
  const auto first_metric = grid.column("final_accuracy");
  std::vector<std::size_t> axis_cols;
  for (std::size_t c = *status_col + 1; first_metric && c < *first_metric; ++c) {
    axis_cols.push_back(c);
  }

  std::vector<MeanRow> out;
  for (const auto& row : grid.rows) {
    if (row[*repeat_col] != "mean" || row[*status_col] == "failed") continue;
    MeanRow mean;
    mean.cell = row[*cell_col];
    for (std::size_t c = 0; c < grid.headers.size(); ++c) {
      mean.fields[grid.headers[c]] = row[c];
    }
    std::string label;
    for (std::size_t c : axis_cols) {
      if (!label.empty()) label += '/';
      label += row[c];
    }
    mean.label = label.empty() ? mean.cell : label;
    out.push_back(std::move(mean));
  }
  return out;
}

// Group rows by aggregator kind when that axis exists; otherwise one group.
std::vector<std::pair<std::string, std::vector<const MeanRow*>>> grouped(
    const std::vector<MeanRow>& rows) {
  std::vector<std::pair<std::string, std::vector<const MeanRow*>>> groups;
  for (const auto& row : rows) {
    const auto it = row.fields.find(kAggregatorColumn);
    const std::string key = it != row.fields.end() ? it->second : std::string();
    auto found = std::find_if(groups.begin(), groups.end(),
                              [&](const auto& g) { return g.first == key; });
    if (found == groups.end()) {
      groups.push_back({key, {}});
      found = groups.end() - 1;
    }
    found->second.push_back(&row);
  }
  return groups;
}

struct PlotSink {
  std::filesystem::path dir;

  void emit(const std::string& stem, const std::string& svg, const std::string& csv) const {
    write_file_atomic(dir / (stem + ".svg"), svg);
    write_file_atomic(dir / (stem + ".csv"), csv);
  }
};

// Lines of `metric` against adversary fraction (or cell ordinal), one series
// per aggregator group.
void metric_vs_adversary(const PlotSink& sink, const std::vector<MeanRow>& rows,
                         const std::string& stem, const std::string& title,
                         const std::vector<std::string>& metrics) {
  const bool have_x = !rows.empty() && rows.front().fields.count(kAdversaryColumn) > 0;
  std::vector<Series> series;
  std::optional<TickLabels> ticks;
  std::ostringstream csv;
  csv << "group,x";
  for (const auto& m : metrics) csv << ',' << m;
  csv << '\n';

  if (!have_x) {
    ticks = TickLabels{};
    for (std::size_t i = 0; i < rows.size(); ++i) {
      ticks->push_back({static_cast<double>(i), rows[i].label});
    }
  }

  for (const auto& [group, members] : grouped(rows)) {
    for (const auto& metric : metrics) {
      Series s;
      s.name = group.empty() ? metric : metric + " " + group;
      for (std::size_t i = 0; i < members.size(); ++i) {
        const auto y = members[i]->number(metric);
        if (!y) continue;
        const double x = have_x
                             ? members[i]->number(kAdversaryColumn).value_or(0.0)
                             : static_cast<double>(std::find_if(
                                   rows.begin(), rows.end(),
                                   [&](const MeanRow& r) { return &r == members[i]; }) -
                                                   rows.begin());
        s.points.push_back({x, *y});
      }
      std::sort(s.points.begin(), s.points.end());
      if (!s.points.empty()) series.push_back(std::move(s));
    }
    for (const MeanRow* row : members) {
      csv << (group.empty() ? row->cell : group) << ',';
      if (have_x) {
        csv << row->fields.at(kAdversaryColumn);
      } else {
        csv << row->cell;
      }
      for (const auto& m : metrics) {
        const auto it = row->fields.find(m);
        csv << ',' << (it != row->fields.end() ? it->second : "");
      }
      csv << '\n';
    }
  }
  const std::string x_label = have_x ? "adversary fraction" : "cell";
  sink.emit(stem, line_chart(title, x_label, metrics.front(), series, ticks), csv.str());
}

void bars_per_cell(const PlotSink& sink, const std::vector<MeanRow>& rows,
                   const std::string& stem, const std::string& title,
                   const std::vector<std::string>& metrics, bool stacked) {
  std::vector<BarGroup> groups;
  std::ostringstream csv;
  csv << "cell,label";
  for (const auto& m : metrics) csv << ',' << m;
  csv << '\n';
  for (const auto& row : rows) {
    BarGroup g;
    g.label = row.label;
    csv << row.cell << ',' << row.label;
    for (const auto& m : metrics) {
      g.values.push_back(row.number(m));
      const auto it = row.fields.find(m);
      csv << ',' << (it != row.fields.end() ? it->second : "");
    }
    csv << '\n';
    groups.push_back(std::move(g));
  }
  sink.emit(stem, bar_chart(title, metrics.front(), metrics, groups, stacked), csv.str());
}

void milestone_bars(const PlotSink& sink, const std::vector<MeanRow>& rows,
                    const Table& grid) {
  // Milestone columns look like coc_<target>.
  std::vector<std::string> coc_cols;
  for (const auto& h : grid.headers) {
    if (h.rfind("coc_", 0) == 0) coc_cols.push_back(h);
  }
  std::vector<std::string> names;
  names.reserve(coc_cols.size());
  for (const auto& c : coc_cols) names.push_back("coc@" + c.substr(4));

  std::vector<BarGroup> groups;
  std::ostringstream csv;
  csv << "cell,label,milestone,coc,tstar\n";
  for (const auto& row : rows) {
    BarGroup g;
    g.label = row.label;
    for (const auto& col : coc_cols) {
      g.values.push_back(row.number(col));
      const std::string target = col.substr(4);
      const auto coc = row.fields.find(col);
      const auto tstar = row.fields.find("tstar_" + target);
      csv << row.cell << ',' << row.label << ',' << target << ','
          << (coc != row.fields.end() ? coc->second : "") << ','
          << (tstar != row.fields.end() ? tstar->second : "") << '\n';
    }
    groups.push_back(std::move(g));
  }
  sink.emit("milestones",
            bar_chart("selected gradients to milestone", "gradients", names, groups,
                      /*stacked=*/false),
            csv.str());
}

void report_grid(const PlotSink& sink, const Table& grid, const std::string& path) {
  const auto rows = mean_rows(grid, path);
  metric_vs_adversary(sink, rows, "accuracy_asr_vs_adversary",
                      "final accuracy and attack success rate",
                      {"final_accuracy", "final_asr"});
  metric_vs_adversary(sink, rows, "gini_vs_adversary", "benign payment inequality",
                      {"payment_gini_benign"});
  bars_per_cell(sink, rows, "selection_rates", "per-seller selection rates",
                {"msr_rate", "bsr_rate"}, /*stacked=*/false);
  bars_per_cell(sink, rows, "cost_composition", "selections per round by group",
                {"benign_cost_per_round", "malicious_cost_per_round"},
                /*stacked=*/true);
  milestone_bars(sink, rows, grid);
}

void report_summary(const PlotSink& sink, const json& summary, int index) {
  const auto& series = summary.at("mean_series");
  const auto& acc = series.at("accuracy");
  const auto& asr = series.at("asr");

  Series acc_series{"accuracy", {}};
  Series asr_series{"asr", {}};
  std::ostringstream csv;
  csv << "round,accuracy,asr\n";
  for (std::size_t t = 0; t < acc.size(); ++t) {
    const double round = static_cast<double>(t + 1);
    acc_series.points.push_back({round, acc[t].get<double>()});
    csv << t + 1 << ',' << format_double(acc[t].get<double>()) << ',';
    if (t < asr.size() && !asr[t].is_null()) {
      asr_series.points.push_back({round, asr[t].get<double>()});
      csv << format_double(asr[t].get<double>());
    }
    csv << '\n';
  }
  std::vector<Series> all{acc_series};
  if (!asr_series.points.empty()) all.push_back(asr_series);

  char stem[32];
  std::snprintf(stem, sizeof(stem), "rounds_%03d", index);
  sink.emit(stem, line_chart("accuracy and attack success rate by round", "round",
                             "accuracy", all),
            csv.str());
}

}  // namespace

int cmd_report(const std::vector<std::string>& inputs, const std::string& out_dir) {
  try {
    const PlotSink sink{std::filesystem::path(out_dir) / "plots"};
    int summary_index = 0;
    for (const auto& path : inputs) {
      const std::string text = read_file(path);
      const auto first = text.find_first_not_of(" \t\r\n");
      if (first != std::string::npos && text[first] == '{') {
        json summary;
        try {
          summary = json::parse(text);
          report_summary(sink, summary, summary_index++);
        } catch (const json::exception& e) {
          throw IoError(path + ": malformed summary: " + e.what());
        }
      } else {
        report_grid(sink, parse_csv(text, path), path);
      }
    }
    return kExitOk;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "report failed: %s\n", e.what());
    return kExitConfigError;
  }
}

}  // namespace gradmarket::cli
