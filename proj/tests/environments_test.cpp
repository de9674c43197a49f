#include <array>
#include <cstdlib>
#include <queue>

#include "aekick/environments.hpp"
#include "gtest/gtest.h"

using namespace aekick;

namespace {

// Independent BFS over the spec alone: shortest path length from `from` to
// the nearest goal, avoiding walls and hazards.
int bfs_oracle(const GridWorldSpec& s, Cell from) {
  auto blocked = [&](Cell c) {
    return c.x < 0 || c.y < 0 || c.x >= s.width || c.y >= s.height || s.walls.count(c) || s.hazards.count(c);
  };
  std::vector<int> dist(static_cast<std::size_t>(s.width * s.height), -1);
  std::queue<Cell> q;
  dist[static_cast<std::size_t>(from.y * s.width + from.x)] = 0;
  q.push(from);
  while (!q.empty()) {
    const Cell c = q.front();
    q.pop();
    const int d = dist[static_cast<std::size_t>(c.y * s.width + c.x)];
    if (s.goals.count(c)) return d;
    for (Cell n : {Cell{c.x, c.y - 1}, Cell{c.x, c.y + 1}, Cell{c.x - 1, c.y}, Cell{c.x + 1, c.y}}) {
      if (blocked(n)) continue;
      auto& dn = dist[static_cast<std::size_t>(n.y * s.width + n.x)];
      if (dn < 0) {
        dn = d + 1;
        q.push(n);
      }
    }
  }
  return -1;
}

// Chi-square statistic of observed counts against a uniform expectation.
double chi_square(const std::vector<int>& counts, int n) {
  const double e = static_cast<double>(n) / static_cast<double>(counts.size());
  double x2 = 0.0;
  for (int c : counts) x2 += (c - e) * (c - e) / e;
  return x2;
}

// Upper 1% points of the chi-square distribution.
double chi_square_critical(std::size_t df) { return df == 3 ? 11.345 : 13.277; }

struct Episode {
  std::vector<StepResult> steps;
  EnvState final_state;
};

Episode run_expert(const GridWorld& env, std::uint64_t seed, double noise) {
  auto [state, obs] = reset(env, seed);
  Rng rng(seed + 99);
  Episode ep;
  while (!state.done) ep.steps.push_back(step(env, state, scripted_expert(state, env, noise, rng)));
  ep.final_state = state;
  return ep;
}

}  // namespace

TEST(Reset, DeterministicAndOnFreeStartCells) {
  for (const auto& env : {make_named_env("room-nav"), make_named_env("four-rooms-nav"), make_named_env("corridor-nav"),
                          make_named_env("collect-grid")}) {
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
      const auto [a, obs_a] = reset(env, seed);
      const auto [b, obs_b] = reset(env, seed);
      EXPECT_EQ(a, b);
      EXPECT_EQ(obs_a, obs_b);
      EXPECT_FALSE(env.is_wall(a.agent));
      EXPECT_FALSE(env.is_goal(a.agent));
      EXPECT_FALSE(env.is_hazard(a.agent));
      EXPECT_EQ(obs_a.size(), env.obs_dim());
      EXPECT_EQ(a.t, 0);
      EXPECT_EQ(a.items, env.spec().items);
    }
  }
}

TEST(Reset, DifferentSeedsReachDifferentStarts) {
  const auto env = make_named_env("room-nav");
  std::set<Cell> starts;
  for (std::uint64_t seed = 0; seed < 100; ++seed) starts.insert(reset(env, seed).first.agent);
  EXPECT_GT(starts.size(), 20u);
}

TEST(DeskDefaults, Dimensions) {
  const auto room = make_named_env("room-nav");
  EXPECT_EQ(room.spec().width, 8);
  EXPECT_EQ(room.spec().max_steps, 60);
  EXPECT_EQ(room.action_count(), 4);
  EXPECT_EQ(room.obs_dim(), 128u);
  const auto rooms = make_named_env("four-rooms-nav");
  EXPECT_EQ(rooms.spec().width, 11);
  EXPECT_EQ(rooms.spec().max_steps, 120);
  const auto corridor = make_named_env("corridor-nav");
  EXPECT_EQ(corridor.spec().height, 3);
  EXPECT_EQ(corridor.spec().width, 12);
  EXPECT_EQ(corridor.spec().max_steps, 50);
  const auto collect = make_named_env("collect-grid");
  EXPECT_EQ(collect.spec().items.size(), 5u);
  EXPECT_EQ(collect.spec().max_steps, 80);
  EXPECT_EQ(collect.action_count(), 5);
  EXPECT_THROW(make_named_env("nowhere"), ConfigError);
}

TEST(Step, EnteringGoalAtTimeZeroPaysOne) {
  GridWorldSpec s;
  s.width = 3;
  s.height = 1;
  s.goals = {{2, 0}};
  s.max_steps = 10;
  const GridWorld env(s);
  EnvState st;
  st.agent = {1, 0};
  const auto r = step(env, st, kRight);
  EXPECT_EQ(r.reward, 1.0);
  EXPECT_TRUE(r.terminated);
  EXPECT_FALSE(r.truncated);
  EXPECT_THROW(step(env, st, kLeft), ContractError);
}

TEST(Step, SuccessRewardDecaysWithTime) {
  GridWorldSpec s;
  s.width = 5;
  s.height = 1;
  s.goals = {{4, 0}};
  s.max_steps = 10;
  const GridWorld env(s);
  EnvState st;
  st.agent = {0, 0};
  StepResult r;
  for (int i = 0; i < 4; ++i) r = step(env, st, kRight);
  EXPECT_DOUBLE_EQ(r.reward, 1.0 - 0.2 * 3.0 / 10.0);
  EXPECT_TRUE(r.terminated);
}

TEST(Step, SuccessExactlyAtHorizonIsTerminatedNotTruncated) {
  GridWorldSpec s;
  s.width = 4;
  s.height = 1;
  s.goals = {{3, 0}};
  s.max_steps = 3;
  const GridWorld env(s);
  EnvState st;
  st.agent = {0, 0};
  step(env, st, kRight);
  step(env, st, kRight);
  const auto r = step(env, st, kRight);
  EXPECT_TRUE(r.terminated);
  EXPECT_FALSE(r.truncated);
  EXPECT_DOUBLE_EQ(r.reward, 1.0 - 0.2 * 2.0 / 3.0);
}

TEST(Step, HorizonWithoutSuccessTruncatesWithZeroReturn) {
  const auto env = make_named_env("room-nav");
  auto [st, obs] = reset(env, 4);
  double total = 0.0;
  int n = 0;
  StepResult r;
  // Bumping into the top wall or oscillating never reaches the corner goal.
  while (!st.done) {
    r = step(env, st, n % 2 ? kUp : kLeft);
    total += r.reward;
    ++n;
  }
  EXPECT_EQ(n, 60);
  EXPECT_EQ(total, 0.0);
  EXPECT_TRUE(r.truncated);
  EXPECT_FALSE(r.terminated);
}

TEST(Step, WallIsPositionNoOp) {
  const auto env = make_named_env("four-rooms-nav");
  EnvState st;
  st.agent = {4, 1};  // next to the vertical wall at x = 5
  ASSERT_TRUE(env.is_wall({5, 1}));
  step(env, st, kRight);
  EXPECT_EQ(st.agent, (Cell{4, 1}));
  EXPECT_EQ(st.t, 1);
  st.agent = {0, 0};
  step(env, st, kUp);
  EXPECT_EQ(st.agent, (Cell{0, 0}));
}

TEST(Step, PickupInvalidOutsideCollect) {
  const auto env = make_named_env("room-nav");
  auto [st, obs] = reset(env, 0);
  EXPECT_THROW(step(env, st, kPickup), ContractError);
  EXPECT_THROW(step(env, st, -1), ContractError);
}

TEST(Step, CorridorHazardTerminatesWithZero) {
  const auto env = make_named_env("corridor-nav");
  EnvState st;
  st.agent = {3, 1};
  ASSERT_TRUE(env.is_hazard({3, 2}));
  const auto r = step(env, st, kDown);
  EXPECT_TRUE(r.terminated);
  EXPECT_EQ(r.reward, 0.0);
  EXPECT_FALSE(episode_success(env, st, r));
}

TEST(Step, CollectIdlePolicyScoresMinusTwo) {
  const auto env = make_named_env("collect-grid");
  auto [st, obs] = reset(env, 3);
  double total = 0.0;
  int n = 0;
  while (!st.done) {
    total += step(env, st, kUp).reward;
    ++n;
  }
  EXPECT_EQ(n, 80);
  EXPECT_NEAR(total, -2.0, 1e-12);
}

TEST(Step, CollectPickupRemovesItem) {
  const auto env = make_named_env("collect-grid");
  auto [st, obs] = reset(env, 0);
  const Cell item = *env.spec().items.begin();
  st.agent = item;
  const auto r = step(env, st, kPickup);
  EXPECT_NEAR(r.reward, 1.0 - 2.0 / 80.0, 1e-15);
  EXPECT_FALSE(st.items.contains(item));
  const auto again = step(env, st, kPickup);
  EXPECT_NEAR(again.reward, -2.0 / 80.0, 1e-15);
}

TEST(Step, TransitionIsDeterministic) {
  const auto env = make_named_env("four-rooms-nav");
  Rng rng(5);
  for (int i = 0; i < 300; ++i) {
    auto [a, obs] = reset(env, static_cast<std::uint64_t>(i));
    EnvState b = a;
    const int action = uniform_int(rng, 0, 3);
    const auto ra = step(env, a, action);
    const auto rb = step(env, b, action);
    EXPECT_EQ(a, b);
    EXPECT_EQ(ra.observation, rb.observation);
    EXPECT_EQ(ra.reward, rb.reward);
  }
}

TEST(Expert, NoiselessEpisodeLengthIsManhattanInEmptyRoom) {
  const auto env = make_named_env("room-nav");
  const Cell goal = *env.spec().goals.begin();
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const Cell start = reset(env, seed).first.agent;
    const auto ep = run_expert(env, seed, 0.0);
    EXPECT_EQ(static_cast<int>(ep.steps.size()), std::abs(goal.x - start.x) + std::abs(goal.y - start.y));
    EXPECT_TRUE(ep.steps.back().terminated);
  }
}

TEST(Expert, NoiselessEpisodeLengthMatchesBfsOracle) {
  for (const auto& env :
       {make_named_env("four-rooms-nav"), make_named_env("maze-nav", 3), make_named_env("corridor-nav")}) {
    for (std::uint64_t seed = 0; seed < 60; ++seed) {
      const Cell start = reset(env, seed).first.agent;
      const auto ep = run_expert(env, seed, 0.0);
      EXPECT_EQ(static_cast<int>(ep.steps.size()), bfs_oracle(env.spec(), start)) << env.id() << " seed " << seed;
    }
  }
}

TEST(Expert, FullNoiseIsUniform) {
  for (const auto& env : {make_named_env("room-nav"), make_named_env("collect-grid")}) {
    auto [st, obs] = reset(env, 1);
    Rng rng(77);
    const int n = 10000;
    std::vector<int> counts(static_cast<std::size_t>(env.action_count()), 0);
    for (int i = 0; i < n; ++i) counts[static_cast<std::size_t>(scripted_expert(st, env, 1.0, rng))] += 1;
    EXPECT_LT(chi_square(counts, n), chi_square_critical(counts.size() - 1)) << env.id();
  }
}

TEST(Expert, PicksUpWhenStandingOnItem) {
  const auto env = make_named_env("collect-grid");
  auto [st, obs] = reset(env, 0);
  Rng rng(1);
  for (Cell item : env.spec().items) {
    st.agent = item;
    EXPECT_EQ(scripted_expert(st, env, 0.0, rng), kPickup);
  }
}

TEST(Expert, NoiselessCollectorGathersEverything) {
  const auto env = make_named_env("collect-grid");
  const auto ep = run_expert(env, 2, 0.0);
  EXPECT_TRUE(ep.final_state.items.empty());
  EXPECT_EQ(ep.final_state.items_collected, 5);
  EXPECT_TRUE(episode_success(env, ep.final_state, ep.steps.back()));
}

TEST(Invariants, SparseRewardOnlyOnFinalSuccessStepAndLengthBounded) {
  for (const auto& env : {make_named_env("room-nav"), make_named_env("four-rooms-nav"), make_named_env("corridor-nav")}) {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      const auto ep = run_expert(env, seed, 0.5);
      ASSERT_LE(static_cast<int>(ep.steps.size()), env.spec().max_steps);
      for (std::size_t i = 0; i + 1 < ep.steps.size(); ++i) {
        EXPECT_EQ(ep.steps[i].reward, 0.0);
        EXPECT_FALSE(ep.steps[i].terminated || ep.steps[i].truncated);
      }
      const auto& last = ep.steps.back();
      if (last.reward != 0.0) {
        EXPECT_TRUE(last.terminated);
        EXPECT_TRUE(episode_success(env, ep.final_state, last));
      }
      EXPECT_FALSE(last.terminated && last.truncated);
    }
  }
}

TEST(Construction, FourRoomsHasFourRoomsAndDoorways) {
  const auto env = make_named_env("four-rooms-nav");
  const auto& s = env.spec();
  EXPECT_EQ(s.doorways.size(), 4u);
  for (Cell d : s.doorways) EXPECT_FALSE(env.is_wall(d));
  // Blocking the doorways must leave exactly four connected rooms.
  GridWorldSpec blocked = s;
  for (Cell d : s.doorways) blocked.walls.insert(d);
  std::set<Cell> seen;
  int rooms = 0;
  for (int y = 0; y < s.height; ++y) {
    for (int x = 0; x < s.width; ++x) {
      const Cell c{x, y};
      if (blocked.walls.count(c) || seen.count(c)) continue;
      ++rooms;
      std::queue<Cell> q;
      q.push(c);
      seen.insert(c);
      while (!q.empty()) {
        const Cell u = q.front();
        q.pop();
        for (Cell n : {Cell{u.x, u.y - 1}, Cell{u.x, u.y + 1}, Cell{u.x - 1, u.y}, Cell{u.x + 1, u.y}}) {
          if (n.x < 0 || n.y < 0 || n.x >= s.width || n.y >= s.height) continue;
          if (blocked.walls.count(n) || seen.count(n)) continue;
          seen.insert(n);
          q.push(n);
        }
      }
    }
  }
  EXPECT_EQ(rooms, 4);
}

TEST(Construction, MazeDoorwaysDependOnSeed) {
  std::set<std::set<Cell>> layouts;
  for (std::uint64_t seed = 0; seed < 10; ++seed) layouts.insert(make_named_env("maze-nav", seed).spec().doorways);
  EXPECT_GT(layouts.size(), 1u);
  EXPECT_EQ(make_named_env("maze-nav", 4).spec().doorways, make_named_env("maze-nav", 4).spec().doorways);
}

TEST(Construction, RejectsUnreachableGoalAndBadCells) {
  GridWorldSpec s;
  s.width = 3;
  s.height = 3;
  s.goals = {{2, 2}};
  s.walls = {{1, 2}, {2, 1}};
  EXPECT_THROW(GridWorld{s}, ContractError);
  s.walls = {{2, 2}};
  EXPECT_THROW(GridWorld{s}, ContractError);
  s.walls = {{5, 5}};
  EXPECT_THROW(GridWorld{s}, ContractError);
  s.walls.clear();
  s.max_steps = 0;
  EXPECT_THROW(GridWorld{s}, ContractError);
}

TEST(Observation, FullViewEncoding) {
  const auto env = make_named_env("room-nav");
  auto [st, obs] = reset(env, 5);
  const std::size_t n = static_cast<std::size_t>(env.cell_count());
  ASSERT_EQ(obs.size(), 2 * n);
  double agent_mass = 0.0;
  for (std::size_t i = 0; i < n; ++i) agent_mass += obs[i];
  EXPECT_EQ(agent_mass, 1.0);
  EXPECT_EQ(obs[static_cast<std::size_t>(env.index(st.agent))], 1.0);
  EXPECT_EQ(obs[n + static_cast<std::size_t>(env.index(*env.spec().goals.begin()))], 1.0);
}

TEST(Observation, PartialViewWindow) {
  GridWorldSpec s = make_named_env("corridor-nav").spec();
  s.view_radius = 1;
  const GridWorld env(s);
  EXPECT_EQ(env.obs_dim(), 36u);
  EnvState st;
  st.agent = {0, 1};
  const auto obs = observe(env, st);
  ASSERT_EQ(obs.size(), 36u);
  // Window cell (dx=-1, dy=0) lies off the grid and reads as blocked.
  EXPECT_EQ(obs[static_cast<std::size_t>((1 * 3 + 0) * 4 + 0)], 1.0);
  // Window cell (dx=0, dy=+1) is the hazard row.
  EXPECT_EQ(obs[static_cast<std::size_t>((2 * 3 + 1) * 4 + 3)], 1.0);
}

TEST(RandomObservations, RowsMatchObservationSpace) {
  const auto env = make_named_env("room-nav");
  const Matrix m = random_policy_observations(env, 5, 1);
  EXPECT_GT(m.rows, 5u);
  EXPECT_EQ(m.cols, env.obs_dim());
  EXPECT_EQ(m, random_policy_observations(env, 5, 1));
}
