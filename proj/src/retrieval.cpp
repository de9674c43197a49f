#include "aekick/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace aekick {

DistanceMetric distance_metric_from_string(const std::string& s) {
  if (s == "l2" || s == "squared-l2") return DistanceMetric::kSquaredL2;
  if (s == "cosine") return DistanceMetric::kCosine;
  throw ConfigError("unknown distance metric '" + s + "'");
}

LatentIndex build_index(const DemoStore& store, const Encoder& enc, DistanceMetric metric) {
  if (store.obs_dim != enc.input_dim()) {
    throw ShapeError("build_index: store observations have " + std::to_string(store.obs_dim) +
                     " dims, encoder expects " + std::to_string(enc.input_dim()));
  }
  LatentIndex index;
  index.encoder_id = enc.id();
  index.env_id = store.env_id;
  index.action_count = store.action_count;
  index.metric = metric;
  const std::size_t n = store.transition_count();
  Matrix obs(n, store.obs_dim);
  std::size_t row = 0;
  for (std::size_t ti = 0; ti < store.trajectories.size(); ++ti) {
    for (const auto& t : store.trajectories[ti].transitions) {
      std::copy(t.obs.begin(), t.obs.end(), obs.row(row).begin());
      index.actions.push_back(t.action);
      index.rewards.push_back(t.reward);
      index.provenance.emplace_back(ti, t.t);
      ++row;
    }
  }
  index.latents = n > 0 ? encode_batch(enc, obs) : Matrix(0, enc.latent_dim());
  if (!all_finite(index.latents.data)) throw NumericError("build_index: non-finite latent");
  return index;
}

double latent_distance(std::span<const double> a, std::span<const double> b, DistanceMetric metric) {
  if (metric == DistanceMetric::kSquaredL2) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double d = a[i] - b[i];
      s += d * d;
    }
    return s;
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 1.0;
  return 1.0 - dot / (std::sqrt(na) * std::sqrt(nb));
}

QueryResult knn(const LatentIndex& index, std::span<const double> query, std::size_t k) {
  if (index.size() == 0) throw ContractError("knn: empty index");
  if (k < 1) throw ContractError("knn: k must be >= 1");
  if (query.size() != index.latents.cols) {
    throw ShapeError("knn: query has " + std::to_string(query.size()) + " dims, index has " +
                     std::to_string(index.latents.cols));
  }
  const std::size_t n = index.size();
  std::vector<std::pair<double, std::size_t>> scored(n);
  for (std::size_t i = 0; i < n; ++i) scored[i] = {latent_distance(index.latents.row(i), query, index.metric), i};
  const std::size_t m = std::min(k, n);
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(m), scored.end());
  QueryResult r;
  r.indices.reserve(m);
  r.distances.reserve(m);
  for (std::size_t i = 0; i < m; ++i) {
    r.distances.push_back(scored[i].first);
    r.indices.push_back(scored[i].second);
  }
  return r;
}

double expert_estimate(const LatentIndex& index, const QueryResult& result, const QEvaluator& q_target) {
  if (result.indices.empty()) throw ContractError("expert_estimate: empty neighbour set");
  double s = 0.0;
  for (std::size_t i : result.indices) s += q_target(index.latents.row(i), index.actions[i]);
  return s / static_cast<double>(result.indices.size());
}

double expert_estimate(const QueryResult& result, std::span<const double> row_values) {
  if (result.indices.empty()) throw ContractError("expert_estimate: empty neighbour set");
  double s = 0.0;
  for (std::size_t i : result.indices) s += row_values[i];
  return s / static_cast<double>(result.indices.size());
}

std::vector<double> target_values(const LatentIndex& index, const DenseNet& q_target) {
  std::vector<double> values(index.size());
  if (index.size() == 0) return values;
  const Matrix q = forward(q_target, index.latents).output();
  for (std::size_t i = 0; i < index.size(); ++i) values[i] = q(i, static_cast<std::size_t>(index.actions[i]));
  return values;
}

DirichletBelief DirichletBelief::uniform(int k, double alpha0) {
  if (k < 1 || !(alpha0 > 0.0)) throw ContractError("DirichletBelief: need k >= 1 and alpha > 0");
  return {std::vector<double>(static_cast<std::size_t>(k), alpha0)};
}

std::vector<double> DirichletBelief::mean() const {
  const double total = std::accumulate(alpha.begin(), alpha.end(), 0.0);
  std::vector<double> m(alpha.size());
  for (std::size_t i = 0; i < alpha.size(); ++i) m[i] = alpha[i] / total;
  return m;
}

DirichletBelief posterior_update(const DirichletBelief& belief, std::span<const long long> counts) {
  if (counts.size() != belief.alpha.size()) throw ContractError("posterior_update: counts length must equal K");
  DirichletBelief post = belief;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (counts[i] < 0) throw ContractError("posterior_update: negative count");
    post.alpha[i] += static_cast<double>(counts[i]);
  }
  return post;
}

SearchPolicy search_policy_from(const LatentIndex& index, const QueryResult& result) {
  if (result.indices.empty()) throw ContractError("search_policy: empty neighbour set");
  SearchPolicy p;
  p.counts.assign(static_cast<std::size_t>(index.action_count), 0);
  for (std::size_t i : result.indices) p.counts[static_cast<std::size_t>(index.actions[i])] += 1;
  p.distribution.resize(p.counts.size());
  const double n = static_cast<double>(result.indices.size());
  for (std::size_t a = 0; a < p.counts.size(); ++a) p.distribution[a] = static_cast<double>(p.counts[a]) / n;
  return p;
}

SearchPolicy search_policy(const LatentIndex& index, std::span<const double> query, std::size_t k) {
  return search_policy_from(index, knn(index, query, k));
}

std::vector<double> boa_fuse(std::span<const double> q_values, std::span<const long long> counts) {
  if (q_values.empty()) throw ContractError("boa_fuse: no actions");
  const double mx = *std::max_element(q_values.begin(), q_values.end());
  DirichletBelief prior;
  double z = 0.0;
  for (double q : q_values) {
    prior.alpha.push_back(std::max(std::exp(q - mx), 1e-300));
    z += prior.alpha.back();
  }
  for (double& a : prior.alpha) a /= z;
  return posterior_update(prior, counts).mean();
}

}  // namespace aekick
