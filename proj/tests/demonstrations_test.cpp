#include <cmath>
#include <filesystem>
#include <fstream>

#include "aekick/demonstrations.hpp"
#include "json.hpp"
#include "gtest/gtest.h"

using namespace aekick;

namespace {

class DemoFiles : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() /
           ("aekick_demos_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    std::filesystem::create_directories(dir_);
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }

  std::filesystem::path path(const std::string& name) const { return dir_ / name; }

  static std::vector<std::string> read_lines(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::vector<std::string> out;
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
  }

  static void write_lines(const std::filesystem::path& p, const std::vector<std::string>& lines) {
    std::ofstream out(p);
    for (const auto& l : lines) out << l << '\n';
  }

  // Expects load_demos to throw a FormatError mentioning "line <n>".
  static void expect_format_error(const std::filesystem::path& p, int line) {
    try {
      load_demos(p);
      FAIL() << "no FormatError";
    } catch (const FormatError& e) {
      EXPECT_NE(std::string(e.what()).find("line " + std::to_string(line)), std::string::npos) << e.what();
    }
  }

  std::filesystem::path dir_;
};

}  // namespace

TEST(GenerateDemos, CountAndShape) {
  const auto env = make_named_env("room-nav");
  const auto store = generate_demos(env, 0.1, 3, 7);
  ASSERT_EQ(store.trajectories.size(), 3u);
  EXPECT_EQ(store.env_id, env.id());
  EXPECT_EQ(store.obs_dim, env.obs_dim());
  EXPECT_EQ(store.action_count, 4);
  std::size_t total = 0;
  for (const auto& tr : store.trajectories) {
    ASSERT_FALSE(tr.transitions.empty());
    double ret = 0.0;
    for (std::size_t i = 0; i < tr.transitions.size(); ++i) {
      const auto& t = tr.transitions[i];
      EXPECT_EQ(t.t, static_cast<int>(i));
      EXPECT_EQ(t.obs.size(), env.obs_dim());
      if (i + 1 < tr.transitions.size()) {
        EXPECT_FALSE(t.terminated || t.truncated);
        EXPECT_EQ(t.next_obs, tr.transitions[i + 1].obs);
      }
      ret += t.reward;
    }
    EXPECT_TRUE(tr.transitions.back().terminated || tr.transitions.back().truncated);
    EXPECT_DOUBLE_EQ(tr.episode_return, ret);
    total += tr.transitions.size();
  }
  EXPECT_EQ(store.transition_count(), total);
  EXPECT_EQ(store.transitions().size(), total);
}

TEST(GenerateDemos, DeterministicAndSeedSensitive) {
  const auto env = make_named_env("four-rooms-nav");
  EXPECT_EQ(generate_demos(env, 0.1, 5, 11), generate_demos(env, 0.1, 5, 11));
  EXPECT_NE(generate_demos(env, 0.1, 5, 11), generate_demos(env, 0.1, 5, 12));
  EXPECT_THROW(generate_demos(env, 0.1, 0, 1), ContractError);
}

TEST(GenerateDemos, EpisodeSeedsFollowDerivation) {
  const auto env = make_named_env("room-nav");
  const auto store = generate_demos(env, 0.0, 4, 21);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(store.trajectories[i].seed, derive_seed(21, i));
    EXPECT_EQ(store.trajectories[i].transitions.front().obs, reset(env, derive_seed(21, i)).second);
  }
}

TEST(GenerateDemos, TwentyQuickTrajectoriesNearBudget) {
  // Twenty trajectories of roughly 75 steps land near the 1500 budget on the
  // larger layout; on every layout the budget generator meets the target.
  for (const auto& name : {"room-nav", "four-rooms-nav", "corridor-nav", "collect-grid"}) {
    const auto env = make_named_env(name);
    const auto store = generate_demos_for_budget(env, 0.1, kDemoBudget, 0);
    EXPECT_GE(store.transition_count(), kDemoBudget) << name;
    const auto last = store.trajectories.back().transitions.size();
    EXPECT_LT(store.transition_count() - last, kDemoBudget) << name;
    EXPECT_FALSE(budget_warning(store).has_value()) << name;
  }
}

TEST(BudgetWarning, OnlyOutsideHalfToDouble) {
  DemoStore store;
  Trajectory tr;
  tr.transitions.resize(700);
  store.trajectories = {tr};
  EXPECT_TRUE(budget_warning(store).has_value());
  store.trajectories[0].transitions.resize(750);
  EXPECT_FALSE(budget_warning(store).has_value());
  store.trajectories[0].transitions.resize(3000);
  EXPECT_FALSE(budget_warning(store).has_value());
  store.trajectories[0].transitions.resize(3001);
  EXPECT_TRUE(budget_warning(store).has_value());
}

TEST_F(DemoFiles, RoundTripIsIdentity) {
  const auto env = make_named_env("collect-grid");
  const auto store = generate_demos(env, 0.3, 4, 5);
  save_demos(store, path("a.demos.jsonl"));
  EXPECT_EQ(load_demos(path("a.demos.jsonl")), store);
}

TEST_F(DemoFiles, RoundTripPreservesAwkwardDoubles) {
  DemoStore store;
  store.env_id = "hand";
  store.obs_dim = 2;
  store.action_count = 3;
  Trajectory tr;
  tr.seed = 0xffffffffffffffffULL;
  tr.transitions.push_back({{0.1, 1.0 / 3.0}, 2, -2.0 / 80.0, {1e-300, -0.0}, false, true, 0});
  tr.episode_return = -2.0 / 80.0;
  store.trajectories = {tr};
  save_demos(store, path("b.demos.jsonl"));
  const auto back = load_demos(path("b.demos.jsonl"));
  EXPECT_EQ(back, store);
  EXPECT_TRUE(std::signbit(back.trajectories[0].transitions[0].next_obs[1]));
}

TEST_F(DemoFiles, EmptyStoreIsHeaderOnly) {
  DemoStore store;
  store.env_id = "room-nav-8x8-T60";
  store.obs_dim = 128;
  store.action_count = 4;
  save_demos(store, path("e.demos.jsonl"));
  EXPECT_EQ(read_lines(path("e.demos.jsonl")).size(), 1u);
  const auto back = load_demos(path("e.demos.jsonl"));
  EXPECT_EQ(back, store);
  EXPECT_EQ(back.transition_count(), 0u);
}

TEST_F(DemoFiles, LineFormat) {
  const auto store = generate_demos(make_named_env("room-nav"), 0.1, 2, 3);
  save_demos(store, path("f.demos.jsonl"));
  const auto lines = read_lines(path("f.demos.jsonl"));
  ASSERT_EQ(lines.size(), 1 + store.transition_count());
  const auto header = nlohmann::json::parse(lines[0]);
  for (const char* k : {"format_version", "env_id", "encoder_id", "obs_dim", "action_count"}) {
    EXPECT_TRUE(header.contains(k)) << k;
  }
  EXPECT_EQ(header["format_version"], kDemoFormatVersion);
  const auto first = nlohmann::json::parse(lines[1]);
  for (const char* k : {"traj", "t", "obs", "action", "reward", "next_obs", "terminated", "truncated"}) {
    EXPECT_TRUE(first.contains(k)) << k;
  }
  EXPECT_EQ(first.size(), 8u);
}

TEST_F(DemoFiles, TruncatedFileIsRejected) {
  const auto store = generate_demos(make_named_env("room-nav"), 0.1, 2, 3);
  save_demos(store, path("t.demos.jsonl"));
  auto lines = read_lines(path("t.demos.jsonl"));
  write_lines(path("header_only.demos.jsonl"), {lines[0]});
  EXPECT_THROW(load_demos(path("header_only.demos.jsonl")), FormatError);
  lines.pop_back();
  write_lines(path("short.demos.jsonl"), lines);
  EXPECT_THROW(load_demos(path("short.demos.jsonl")), FormatError);
}

TEST_F(DemoFiles, FieldErrorsNameTheLine) {
  const auto store = generate_demos(make_named_env("room-nav"), 0.1, 1, 3);
  save_demos(store, path("g.demos.jsonl"));
  const auto lines = read_lines(path("g.demos.jsonl"));
  ASSERT_GE(lines.size(), 3u);

  auto edit = [&](std::size_t idx, auto fn, const std::string& name) {
    auto copy = lines;
    auto j = nlohmann::ordered_json::parse(copy[idx]);
    fn(j);
    copy[idx] = j.dump();
    write_lines(path(name), copy);
    expect_format_error(path(name), static_cast<int>(idx + 1));
  };
  edit(2, [](auto& j) { j["extra"] = 1; }, "extra.jsonl");
  edit(2, [](auto& j) { j.erase("reward"); }, "missing.jsonl");
  edit(2, [](auto& j) { j["obs"].push_back(0.0); }, "dim.jsonl");
  edit(2, [](auto& j) { j["action"] = 9; }, "action.jsonl");
  edit(0, [](auto& j) { j["format_version"] = 99; }, "version.jsonl");
  edit(0, [](auto& j) { j.erase("env_id"); }, "header.jsonl");

  auto copy = lines;
  copy[1] = "{not json";
  write_lines(path("garbage.jsonl"), copy);
  expect_format_error(path("garbage.jsonl"), 2);
  EXPECT_THROW(load_demos(path("absent.jsonl")), FormatError);
}
