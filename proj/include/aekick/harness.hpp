#pragma once

// Training loop, evaluation, multi-seed orchestration and run artifacts.
//
// A run directory `<out_dir>/<env id>/<label>/seed<k>/` holds metrics.csv,
// run.json (config echo plus every metric row), policy.jsonl and
// encoder.jsonl.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aekick/agents.hpp"
#include "aekick/config.hpp"
#include "aekick/demonstrations.hpp"
#include "aekick/encoders.hpp"
#include "aekick/environments.hpp"
#include "aekick/retrieval.hpp"

namespace aekick {

inline constexpr const char* kMetricsHeader =
    "step,mean_return,std_return,success_rate,epsilon,loss_td,loss_ae,loss_distill,loss_actor,wall_secs";

struct MetricRow {
  long long step = 0;
  double mean_return = 0.0;
  double std_return = 0.0;
  double success_rate = 0.0;
  std::optional<double> epsilon;
  // Means over the gradient steps since the previous row.
  std::optional<double> loss_td;
  std::optional<double> loss_ae;
  std::optional<double> loss_distill;
  std::optional<double> loss_actor;
  std::optional<double> wall_secs;

  bool operator==(const MetricRow&) const = default;
};

struct RunRecord {
  RunConfig config;
  std::string env_id;
  std::string encoder_id;
  std::vector<MetricRow> rows;
  long long gradient_steps = 0;          // online phase
  long long offline_gradient_steps = 0;  // QDagger distill / AWAC offline
  long long teacher_gradient_steps = 0;  // QDagger's BC teacher
  std::filesystem::path run_dir;         // empty when nothing was written
  std::filesystem::path snapshot;
};

struct EvalResult {
  double mean_return = 0.0;
  double std_return = 0.0;  // sample std, 0 for a single episode
  double success_rate = 0.0;
  std::vector<double> returns;
};

/// Observation -> action.
using Policy = std::function<int(std::span<const double> obs)>;

/// Runs `n_episodes` fresh episodes, episode i reset with derive_seed(seed, i).
EvalResult evaluate(const Policy& policy, const GridWorld& env, int n_episodes, std::uint64_t seed);

double sample_std(std::span<const double> xs);

/// Greedy policy of an agent behind an encoder.
Policy greedy_policy(const Agent& agent, const Encoder& enc);

/// Read-only inputs shared by every seed of an experiment.
struct RunInputs {
  std::shared_ptr<const Encoder> encoder;
  std::shared_ptr<const DemoStore> demos;   // null when the agent needs none
  std::shared_ptr<const LatentIndex> index; // cdql-ae only
};

/// Loads or fits the encoder, loads the demo store and builds the index.
RunInputs prepare_inputs(const RunConfig& cfg);

/// Encoder resolution alone (identity, standardize fit, or file).
Encoder make_encoder(const EncoderConfig& cfg, const GridWorld& env);

/// One complete run. With `write_files` the artifacts are written below
/// cfg.out_dir. Errors raised mid-run are rethrown naming the step.
RunRecord train_run(const RunConfig& cfg, const RunInputs& inputs, bool write_files = true);
RunRecord train_run(const RunConfig& cfg, bool write_files = true);

/// Runs one seed per entry on up to `parallelism` worker threads; records
/// come back in seed order.
std::vector<RunRecord> train_seeds(const RunConfig& base, const std::vector<std::uint64_t>& seeds,
                                   int parallelism, bool write_files = true);

std::string format_metrics_csv(const std::vector<MetricRow>& rows);
std::filesystem::path run_directory(const RunConfig& cfg, const std::string& env_id);

/// Reads a run directory written by train_run.
RunRecord load_run(const std::filesystem::path& run_dir);

/// Interactively loaded policy snapshot plus its encoder.
struct PolicySnapshot {
  DenseNet net;
  Encoder encoder;
  std::string agent;
  std::string env_id;
};

void save_policy_snapshot(const std::filesystem::path& path, const DenseNet& net, const Encoder& enc,
                          AgentKind kind, const std::string& env_id);
PolicySnapshot load_policy_snapshot(const std::filesystem::path& path);

}  // namespace aekick
