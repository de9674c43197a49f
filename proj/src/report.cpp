#include "aekick/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>

namespace aekick {

namespace {

std::string trimmed_decimal(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  std::string s(buf);
  while (s.back() == '0') s.pop_back();
  if (s.back() == '.') s.pop_back();
  return s;
}

std::size_t display_width(const std::string& s) {
  std::size_t n = 0;
  for (unsigned char c : s) n += (c & 0xC0) != 0x80;
  return n;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string steps_text(const std::optional<double>& v) {
  if (!v) return "not reached";
  return step_label(std::llround(*v));
}

}  // namespace

std::string step_label(long long step) {
  const auto mag = std::llabs(step);
  if (mag >= 1000000) return trimmed_decimal(static_cast<double>(step) / 1e6) + "M";
  if (mag >= 1000) return trimmed_decimal(static_cast<double>(step) / 1e3) + "k";
  return std::to_string(step);
}

std::string mean_std_cell(double mean, double std) {
  char buf[64];
  // values that round to zero print as 0.000, never -0.000
  const double m = std::abs(mean) < 5e-4 ? 0.0 : mean;
  std::snprintf(buf, sizeof(buf), "%.3f ± %.3f", m + 0.0, std + 0.0);
  return buf;
}

const MetricRow& row_at_checkpoint(const std::vector<MetricRow>& rows, long long checkpoint) {
  const MetricRow* best = nullptr;
  for (const auto& r : rows) {
    if (r.step <= checkpoint && (!best || r.step > best->step)) best = &r;
  }
  if (!best) {
    throw ContractError("checkpoint " + step_label(checkpoint) + " (" + std::to_string(checkpoint) +
                        ") precedes the first evaluation row");
  }
  return *best;
}

std::string ReportTable::to_csv() const {
  std::ostringstream os;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) os << (i ? "," : "") << csv_field(cells[i]);
    os << '\n';
  };
  line(header);
  for (const auto& r : rows) line(r);
  return os.str();
}

std::string ReportTable::to_text() const {
  std::vector<std::size_t> width(header.size(), 0);
  auto measure = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size() && i < width.size(); ++i) width[i] = std::max(width[i], display_width(cells[i]));
  };
  measure(header);
  for (const auto& r : rows) measure(r);
  std::ostringstream os;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) os << "  ";
      os << cells[i];
      if (i + 1 < cells.size()) os << std::string(width[i] - display_width(cells[i]), ' ');
    }
    os << '\n';
  };
  line(header);
  for (const auto& r : rows) line(r);
  return os.str();
}

ReportTable report_table(const std::vector<RunRecord>& records, const std::vector<long long>& checkpoints) {
  if (records.empty()) throw ContractError("report_table: no run records");
  if (checkpoints.empty()) throw ContractError("report_table: no checkpoints");
  std::vector<std::pair<std::string, std::string>> order;
  std::map<std::pair<std::string, std::string>, std::vector<const RunRecord*>> groups;
  for (const auto& r : records) {
    auto key = std::make_pair(r.env_id, r.config.agent_label());
    if (!groups.count(key)) order.push_back(key);
    groups[key].push_back(&r);
  }
  ReportTable table;
  table.header = {"env", "agent", "seeds"};
  for (long long c : checkpoints) table.header.push_back(step_label(c));
  for (const auto& key : order) {
    const auto& group = groups.at(key);
    std::vector<std::string> row = {key.first, key.second, std::to_string(group.size())};
    for (long long c : checkpoints) {
      std::vector<double> means;
      for (const auto* rec : group) {
        if (rec->rows.empty()) throw ContractError("report_table: run without metric rows");
        if (c > rec->rows.back().step) {
          throw ContractError("checkpoint " + step_label(c) + " lies beyond the run horizon (" +
                              std::to_string(rec->rows.back().step) + " steps)");
        }
        means.push_back(row_at_checkpoint(rec->rows, c).mean_return);
      }
      double m = 0.0;
      for (double v : means) m += v;
      m /= static_cast<double>(means.size());
      row.push_back(mean_std_cell(m, sample_std(means)));
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::optional<long long> steps_to_threshold(const std::vector<MetricRow>& rows, double threshold) {
  for (const auto& r : rows) {
    if (r.mean_return >= threshold) return r.step;
  }
  return std::nullopt;
}

std::optional<double> median_steps(const std::vector<std::optional<long long>>& steps) {
  if (steps.empty()) return std::nullopt;
  std::vector<double> v;
  for (const auto& s : steps) v.push_back(s ? static_cast<double>(*s) : std::numeric_limits<double>::infinity());
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  const double m = n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  if (std::isinf(m)) return std::nullopt;
  return m;
}

std::string Comparison::speedup_text() const {
  if (!speedup) return baseline_median && treatment_median ? "undefined" : "not reached";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f%%", *speedup * 100.0 + 0.0);
  return buf;
}

std::string Comparison::to_text() const {
  std::ostringstream os;
  auto seeds = [](const std::vector<std::optional<long long>>& s) {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i) out += ", ";
      out += s[i] ? step_label(*s[i]) : "not reached";
    }
    return out;
  };
  os << "threshold: " << threshold << '\n';
  os << "baseline median steps: " << steps_text(baseline_median) << " [" << seeds(baseline_steps) << "]\n";
  os << "treatment median steps: " << steps_text(treatment_median) << " [" << seeds(treatment_steps) << "]\n";
  os << "speedup: " << speedup_text() << '\n';
  return os.str();
}

Comparison compare_runs(const std::vector<RunRecord>& baseline, const std::vector<RunRecord>& treatment,
                        double threshold) {
  if (!(threshold > 0.0)) throw ConfigError("compare_runs: threshold must be > 0");
  if (baseline.empty() || treatment.empty()) throw ConfigError("compare_runs: both groups need at least one run");
  const std::string& env = baseline.front().env_id;
  for (const auto* group : {&baseline, &treatment}) {
    for (const auto& r : *group) {
      if (r.env_id != env) throw ConfigError("compare_runs: runs span environments '" + env + "' and '" + r.env_id + "'");
    }
  }
  Comparison c;
  c.threshold = threshold;
  for (const auto& r : baseline) c.baseline_steps.push_back(steps_to_threshold(r.rows, threshold));
  for (const auto& r : treatment) c.treatment_steps.push_back(steps_to_threshold(r.rows, threshold));
  c.baseline_median = median_steps(c.baseline_steps);
  c.treatment_median = median_steps(c.treatment_steps);
  if (c.baseline_median && c.treatment_median) {
    if (*c.baseline_median > 0.0) c.speedup = 1.0 - *c.treatment_median / *c.baseline_median;
    else if (*c.treatment_median == 0.0) c.speedup = 0.0;
  }
  return c;
}

std::vector<std::filesystem::path> find_run_dirs(const std::filesystem::path& root) {
  if (!std::filesystem::exists(root)) throw ConfigError("no such run directory: " + root.string());
  if (std::filesystem::exists(root / "run.json")) return {root};
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
    if (e.is_regular_file() && e.path().filename() == "run.json") out.push_back(e.path().parent_path());
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) throw ConfigError("no runs found below " + root.string());
  return out;
}

}  // namespace aekick
