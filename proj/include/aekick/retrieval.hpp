#pragma once

// Exact latent similarity search over the demonstration store, the
// search-based expert policy, its Dirichlet belief update, and the expert
// value estimate used by the adversarial penalty.

#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "aekick/demonstrations.hpp"
#include "aekick/encoders.hpp"
#include "aekick/numerics.hpp"

namespace aekick {

enum class DistanceMetric { kSquaredL2, kCosine };

DistanceMetric distance_metric_from_string(const std::string& s);

struct LatentIndex {
  Matrix latents;                 // N x d
  std::vector<int> actions;       // N
  std::vector<double> rewards;    // N, diagnostics only
  std::vector<std::pair<std::size_t, int>> provenance;  // (trajectory, t)
  std::string encoder_id;
  std::string env_id;
  int action_count = 0;
  DistanceMetric metric = DistanceMetric::kSquaredL2;

  std::size_t size() const { return actions.size(); }
};

struct QueryResult {
  std::vector<std::size_t> indices;  // ascending distance, ties by row
  std::vector<double> distances;
};

LatentIndex build_index(const DemoStore& store, const Encoder& enc,
                        DistanceMetric metric = DistanceMetric::kSquaredL2);

/// Squared L2, or 1 - cosine similarity (1 when either vector is zero).
double latent_distance(std::span<const double> a, std::span<const double> b, DistanceMetric metric);

/// Exhaustive search for the min(k, N) nearest rows.
QueryResult knn(const LatentIndex& index, std::span<const double> query, std::size_t k);

/// Maps (latent, action) to a target-network value.
using QEvaluator = std::function<double(std::span<const double> latent, int action)>;

/// Mean over neighbours of Q(latent_i, action_i).
double expert_estimate(const LatentIndex& index, const QueryResult& result, const QEvaluator& q_target);

/// Same mean, reading precomputed per-row values (see `target_values`).
double expert_estimate(const QueryResult& result, std::span<const double> row_values);

/// row_values[i] = Q(latents_i)[actions_i] under `q_target`, batched.
std::vector<double> target_values(const LatentIndex& index, const DenseNet& q_target);

struct DirichletBelief {
  std::vector<double> alpha;  // all > 0

  static DirichletBelief uniform(int k, double alpha0 = 1.0);
  std::vector<double> mean() const;
};

/// alpha <- alpha + counts. Throws ContractError on negative counts or a
/// length mismatch.
DirichletBelief posterior_update(const DirichletBelief& belief, std::span<const long long> counts);

struct SearchPolicy {
  std::vector<double> distribution;   // length K, sums to 1
  std::vector<long long> counts;      // neighbour action occurrences
};

SearchPolicy search_policy(const LatentIndex& index, std::span<const double> query, std::size_t k);
SearchPolicy search_policy_from(const LatentIndex& index, const QueryResult& result);

/// Evaluation-time action fusion for value-based agents: the prior is
/// softmax(Q) at temperature 1, updated with the neighbour counts; returns
/// the posterior mean.
std::vector<double> boa_fuse(std::span<const double> q_values, std::span<const long long> counts);

}  // namespace aekick
