#pragma once

// Aggregation across seeds: checkpoint tables and steps-to-threshold
// comparisons.

#include <optional>
#include <string>
#include <vector>

#include "aekick/harness.hpp"

namespace aekick {

/// "500k", "1M", "1.2M", "750", ...
std::string step_label(long long step);

/// "m ± s" with three decimals.
std::string mean_std_cell(double mean, double std);

/// Row at or before `checkpoint` with the largest step; throws ContractError
/// naming the checkpoint when every row is later.
const MetricRow& row_at_checkpoint(const std::vector<MetricRow>& rows, long long checkpoint);

struct ReportTable {
  std::vector<std::string> header;             // "env", "agent", "seeds", then one per checkpoint
  std::vector<std::vector<std::string>> rows;  // one per (env, agent) group

  std::string to_csv() const;
  std::string to_text() const;  // columns aligned by display width
};

/// Groups records by (env id, agent label) in first-seen order. Each cell is
/// mean ± sample std over the per-seed mean returns at the checkpoint.
ReportTable report_table(const std::vector<RunRecord>& records, const std::vector<long long>& checkpoints);

/// First row step with mean_return >= threshold.
std::optional<long long> steps_to_threshold(const std::vector<MetricRow>& rows, double threshold);

struct Comparison {
  double threshold = 0.0;
  std::vector<std::optional<long long>> baseline_steps;   // per seed
  std::vector<std::optional<long long>> treatment_steps;
  std::optional<double> baseline_median;                  // empty: not reached
  std::optional<double> treatment_median;
  std::optional<double> speedup;                          // 1 - treatment / baseline

  std::string speedup_text() const;  // "37.5%" or "not reached"
  std::string to_text() const;
};

/// Seeds that never cross count as +inf inside the median.
std::optional<double> median_steps(const std::vector<std::optional<long long>>& steps);

/// Throws ConfigError when threshold <= 0, either group is empty, or the
/// groups were run on different environments.
Comparison compare_runs(const std::vector<RunRecord>& baseline, const std::vector<RunRecord>& treatment,
                        double threshold);

/// Every run directory below `root` (a run dir itself, or any ancestor).
std::vector<std::filesystem::path> find_run_dirs(const std::filesystem::path& root);

}  // namespace aekick
