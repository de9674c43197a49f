#include <algorithm>
#include <numeric>

#include "aekick/retrieval.hpp"
#include "gtest/gtest.h"
#include "oracles.hpp"

using namespace aekick;

namespace {

LatentIndex hand_index(const std::vector<std::vector<double>>& rows, const std::vector<int>& actions, int k = 4) {
  LatentIndex idx;
  idx.latents = Matrix::from_rows(rows);
  idx.actions = actions;
  idx.rewards.assign(actions.size(), 0.0);
  for (std::size_t i = 0; i < actions.size(); ++i) idx.provenance.emplace_back(0, static_cast<int>(i));
  idx.action_count = k;
  return idx;
}

std::vector<double> random_query(std::size_t d, Rng& rng) {
  std::vector<double> q(d);
  for (double& v : q) v = uniform01(rng) * 2.0 - 1.0;
  return q;
}

}  // namespace

TEST(Knn, HandGeometry) {
  const auto idx = hand_index({{0, 0}, {1, 0}, {5, 5}}, {0, 1, 2});
  const auto r = knn(idx, std::vector<double>{0.9, 0.0}, 2);
  EXPECT_EQ(r.indices, (std::vector<std::size_t>{1, 0}));
  EXPECT_NEAR(r.distances[0], 0.01, 1e-15);
  EXPECT_NEAR(r.distances[1], 0.81, 1e-15);
}

TEST(Knn, StoredPointIsItsOwnNearest) {
  const auto idx = hand_index({{0, 0}, {1, 0}, {5, 5}}, {0, 1, 2});
  const auto r = knn(idx, std::vector<double>{5, 5}, 1);
  EXPECT_EQ(r.indices, (std::vector<std::size_t>{2}));
  EXPECT_EQ(r.distances, (std::vector<double>{0.0}));
}

TEST(Knn, KLargerThanIndexReturnsAllRows) {
  const auto idx = hand_index({{0, 0}, {1, 0}, {5, 5}}, {0, 1, 2});
  EXPECT_EQ(knn(idx, std::vector<double>{0, 0}, 10).indices.size(), 3u);
}

TEST(Knn, TiesGoToLowestRow) {
  const auto idx = hand_index({{1, 0}, {-1, 0}, {0, 1}, {0, -1}, {1, 0}}, {0, 1, 2, 3, 0});
  const auto r = knn(idx, std::vector<double>{0, 0}, 3);
  EXPECT_EQ(r.indices, (std::vector<std::size_t>{0, 1, 2}));
  const auto dup = knn(idx, std::vector<double>{1, 0}, 2);
  EXPECT_EQ(dup.indices, (std::vector<std::size_t>{0, 4}));
}

TEST(Knn, MatchesBruteForceOracle) {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const bool grid = trial % 2 == 1;  // integer grids create many exact ties
    const auto idx = oracle::random_index(1000, 3, 4, rng, grid);
    for (std::size_t k : {1u, 4u, 8u, 32u}) {
      std::vector<double> q = random_query(3, rng);
      if (grid) for (double& v : q) v = std::round(v * 2.0);
      const auto got = knn(idx, q, k);
      const auto want = oracle::brute_force_knn(idx, q, k);
      EXPECT_EQ(got.indices, want.indices);
      EXPECT_EQ(got.distances, want.distances);
    }
  }
}

TEST(Knn, ErrorsOnEmptyIndexZeroKAndBadDimension) {
  LatentIndex empty;
  empty.latents = Matrix(0, 2);
  EXPECT_THROW(knn(empty, std::vector<double>{0, 0}, 1), ContractError);
  const auto idx = hand_index({{0, 0}}, {0});
  EXPECT_THROW(knn(idx, std::vector<double>{0, 0}, 0), ContractError);
  EXPECT_THROW(knn(idx, std::vector<double>{0, 0, 0}, 1), ShapeError);
}

TEST(Knn, CosineMetricRanksByAngle) {
  auto idx = hand_index({{10, 0}, {1, 1}, {0, 3}, {0, 0}}, {0, 1, 2, 3});
  idx.metric = DistanceMetric::kCosine;
  const auto r = knn(idx, std::vector<double>{1, 0.1}, 4);
  EXPECT_EQ(r.indices, (std::vector<std::size_t>{0, 1, 2, 3}));
  EXPECT_NEAR(latent_distance(std::vector<double>{1, 0}, std::vector<double>{0, 2}, DistanceMetric::kCosine), 1.0,
              1e-15);
  EXPECT_NEAR(latent_distance(std::vector<double>{1, 1}, std::vector<double>{2, 2}, DistanceMetric::kCosine), 0.0,
              1e-15);
  EXPECT_EQ(latent_distance(std::vector<double>{0, 0}, std::vector<double>{2, 2}, DistanceMetric::kCosine), 1.0);
  EXPECT_EQ(distance_metric_from_string("cosine"), DistanceMetric::kCosine);
  EXPECT_THROW(distance_metric_from_string("manhattan"), ConfigError);
}

TEST(BuildIndex, IdentityEncoderKeepsObservationsInStoreOrder) {
  const auto env = make_named_env("room-nav");
  const auto store = generate_demos(env, 0.1, 3, 2);
  const auto idx = build_index(store, Encoder::identity(env.obs_dim()));
  ASSERT_EQ(idx.size(), store.transition_count());
  const auto flat = store.transitions();
  for (std::size_t i = 0; i < flat.size(); ++i) {
    EXPECT_TRUE(std::equal(flat[i]->obs.begin(), flat[i]->obs.end(), idx.latents.row(i).begin()));
    EXPECT_EQ(idx.actions[i], flat[i]->action);
    EXPECT_EQ(idx.rewards[i], flat[i]->reward);
  }
  EXPECT_EQ(idx.provenance.front(), (std::pair<std::size_t, int>{0, 0}));
  EXPECT_EQ(idx.encoder_id, "identity");
  EXPECT_EQ(idx.env_id, env.id());

  const auto again = build_index(store, Encoder::identity(env.obs_dim()));
  EXPECT_EQ(again.latents, idx.latents);
  EXPECT_THROW(build_index(store, Encoder::identity(3)), ShapeError);
}

TEST(ExpertEstimate, MeanOfNeighbourValues) {
  const auto idx = hand_index({{0.0}, {1.0}, {9.0}}, {0, 1, 0}, 2);
  // Q(latent, action) = 0.2 + 0.2 * latent * (action + 1) gives 0.2 and 0.6.
  const QEvaluator q = [](std::span<const double> z, int a) { return 0.2 + 0.2 * z[0] * (a + 1); };
  const auto two = knn(idx, std::vector<double>{0.4}, 2);
  EXPECT_NEAR(expert_estimate(idx, two, q), 0.4, 1e-15);
  const auto one = knn(idx, std::vector<double>{0.0}, 1);
  EXPECT_NEAR(expert_estimate(idx, one, q), 0.2, 1e-15);
  const QEvaluator fixed = [](std::span<const double> z, int) { return z[0] == 0.0 ? 0.2 : 0.4; };
  EXPECT_NEAR(expert_estimate(idx, two, fixed), 0.3, 1e-15);
  EXPECT_THROW(expert_estimate(idx, QueryResult{}, q), ContractError);
}

TEST(ExpertEstimate, MatchesDirectLoopAndPrecomputedRows) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto idx = oracle::random_index(200, 5, 4, rng);
    const auto net = DenseNet::make(5, {8}, 4, Activation::kLinear, rng);
    const auto values = target_values(idx, net);
    const QEvaluator q = [&](std::span<const double> z, int a) { return predict(net, z)[static_cast<std::size_t>(a)]; };
    const auto r = knn(idx, random_query(5, rng), 8);
    double direct = 0.0;
    for (std::size_t i : r.indices) direct += predict(net, idx.latents.row(i))[static_cast<std::size_t>(idx.actions[i])];
    direct /= 8.0;
    EXPECT_NEAR(expert_estimate(idx, r, q), direct, 1e-12);
    EXPECT_NEAR(expert_estimate(r, values), direct, 1e-12);

    QueryResult shuffled = r;
    std::reverse(shuffled.indices.begin(), shuffled.indices.end());
    EXPECT_NEAR(expert_estimate(shuffled, values), direct, 1e-12);
  }
}

TEST(Dirichlet, PosteriorAddsCounts) {
  const auto prior = DirichletBelief::uniform(3);
  const std::vector<long long> c = {2, 0, 1};
  const auto post = posterior_update(prior, c);
  EXPECT_EQ(post.alpha, (std::vector<double>{3, 1, 2}));
  const auto m = post.mean();
  EXPECT_NEAR(m[0], 0.5, 1e-15);
  EXPECT_NEAR(m[1], 1.0 / 6.0, 1e-15);
  EXPECT_NEAR(m[2], 1.0 / 3.0, 1e-15);
  const std::vector<long long> zero = {0, 0, 0};
  EXPECT_EQ(posterior_update(prior, zero).alpha, prior.alpha);
}

TEST(Dirichlet, UpdatesCommuteWithCountAddition) {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    DirichletBelief b{{0.1 + uniform01(rng), 0.1 + uniform01(rng), 0.1 + uniform01(rng), 0.1 + uniform01(rng)}};
    std::vector<long long> c1(4), c2(4), sum(4);
    for (std::size_t i = 0; i < 4; ++i) {
      c1[i] = uniform_int(rng, 0, 5);
      c2[i] = uniform_int(rng, 0, 5);
      sum[i] = c1[i] + c2[i];
    }
    const auto stepwise = posterior_update(posterior_update(b, c1), c2);
    const auto once = posterior_update(b, sum);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(stepwise.alpha[i], once.alpha[i], 1e-12);
    const auto m = once.mean();
    EXPECT_NEAR(std::accumulate(m.begin(), m.end(), 0.0), 1.0, 1e-12);
  }
}

TEST(Dirichlet, RejectsBadInput) {
  const auto prior = DirichletBelief::uniform(3);
  EXPECT_THROW(posterior_update(prior, std::vector<long long>{1, -1, 0}), ContractError);
  EXPECT_THROW(posterior_update(prior, std::vector<long long>{1, 1}), ContractError);
  EXPECT_THROW(DirichletBelief::uniform(0), ContractError);
  EXPECT_THROW(DirichletBelief::uniform(2, 0.0), ContractError);
}

TEST(SearchPolicy, EmpiricalNeighbourFrequencies) {
  const auto idx = hand_index({{0}, {1}, {2}, {3}, {50}}, {2, 2, 3, 2, 0});
  const auto p = search_policy(idx, std::vector<double>{1.5}, 4);
  EXPECT_EQ(p.counts, (std::vector<long long>{0, 0, 3, 1}));
  EXPECT_EQ(p.distribution, (std::vector<double>{0, 0, 0.75, 0.25}));

  const auto unanimous = search_policy(idx, std::vector<double>{0.5}, 2);
  EXPECT_EQ(unanimous.distribution, (std::vector<double>{0, 0, 1, 0}));

  const auto all = search_policy(idx, std::vector<double>{0}, idx.size());
  EXPECT_EQ(all.counts, (std::vector<long long>{1, 0, 3, 1}));

  LatentIndex empty;
  empty.latents = Matrix(0, 1);
  EXPECT_THROW(search_policy(empty, std::vector<double>{0}, 1), ContractError);
}

TEST(SearchPolicy, SumsToOneOnRandomQueries) {
  Rng rng(5);
  const auto idx = oracle::random_index(300, 4, 4, rng);
  for (int i = 0; i < 100; ++i) {
    const auto p = search_policy(idx, random_query(4, rng), 8);
    EXPECT_NEAR(std::accumulate(p.distribution.begin(), p.distribution.end(), 0.0), 1.0, 1e-12);
    EXPECT_EQ(std::accumulate(p.counts.begin(), p.counts.end(), 0LL), 8);
  }
}

TEST(BoaFuse, PosteriorMeanOfSoftmaxPriorPlusCounts) {
  const std::vector<double> q = {1.0, 0.0, -1.0, 2.0};
  const std::vector<long long> c = {0, 3, 0, 1};
  const auto fused = boa_fuse(q, c);
  // Independent: prior alpha_i = e^{q_i} / sum e^{q_j}, whose total is 1.
  double z = 0.0;
  for (double v : q) z += std::exp(v);
  double sum = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    const double expect = (std::exp(q[i]) / z + static_cast<double>(c[i])) / (1.0 + 4.0);
    EXPECT_NEAR(fused[i], expect, 1e-12);
    sum += fused[i];
  }
  EXPECT_NEAR(sum, 1.0, 1e-12);
  const std::vector<long long> none = {0, 0, 0, 0};
  const auto prior_only = boa_fuse(q, none);
  EXPECT_NEAR(prior_only[3], std::exp(2.0) / z, 1e-12);
}
