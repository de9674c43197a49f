#include "aekick/demonstrations.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace aekick {

using nlohmann::ordered_json;

std::size_t DemoStore::transition_count() const {
  std::size_t n = 0;
  for (const auto& tr : trajectories) n += tr.transitions.size();
  return n;
}

std::vector<const Transition*> DemoStore::transitions() const {
  std::vector<const Transition*> out;
  out.reserve(transition_count());
  for (const auto& tr : trajectories) {
    for (const auto& t : tr.transitions) out.push_back(&t);
  }
  return out;
}

namespace {

Trajectory run_expert_episode(const GridWorld& env, double noise, std::uint64_t episode_seed) {
  Trajectory traj;
  traj.seed = episode_seed;
  auto [state, obs] = reset(env, episode_seed);
  Rng rng(derive_seed(episode_seed, 1));
  while (!state.done) {
    const int t = state.t;
    const int action = scripted_expert(state, env, noise, rng);
    auto r = step(env, state, action);
    traj.episode_return += r.reward;
    traj.transitions.push_back({obs, action, r.reward, r.observation, r.terminated, r.truncated, t});
    obs = std::move(r.observation);
  }
  return traj;
}

DemoStore empty_store(const GridWorld& env) {
  DemoStore store;
  store.env_id = env.id();
  store.obs_dim = env.obs_dim();
  store.action_count = env.action_count();
  return store;
}

}  // namespace

DemoStore generate_demos(const GridWorld& env, double expert_noise, int n_traj, std::uint64_t seed) {
  if (n_traj < 1) throw ContractError("generate_demos: n_traj must be >= 1");
  DemoStore store = empty_store(env);
  for (int i = 0; i < n_traj; ++i) {
    store.trajectories.push_back(run_expert_episode(env, expert_noise, derive_seed(seed, static_cast<std::uint64_t>(i))));
  }
  return store;
}

DemoStore generate_demos_for_budget(const GridWorld& env, double expert_noise, std::size_t budget,
                                    std::uint64_t seed) {
  DemoStore store = empty_store(env);
  std::size_t count = 0;
  for (std::uint64_t i = 0; count < budget || store.trajectories.empty(); ++i) {
    store.trajectories.push_back(run_expert_episode(env, expert_noise, derive_seed(seed, i)));
    count += store.trajectories.back().transitions.size();
  }
  return store;
}

void save_demos(const DemoStore& store, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  ordered_json header = ordered_json::object();
  header["format_version"] = kDemoFormatVersion;
  header["env_id"] = store.env_id;
  header["encoder_id"] = store.encoder_id;
  header["obs_dim"] = store.obs_dim;
  header["action_count"] = store.action_count;
  header["transition_count"] = store.transition_count();
  ordered_json seeds = ordered_json::array();
  for (const auto& tr : store.trajectories) seeds.push_back(tr.seed);
  header["trajectory_seeds"] = seeds;
  out << header.dump() << '\n';
  for (std::size_t i = 0; i < store.trajectories.size(); ++i) {
    for (const auto& t : store.trajectories[i].transitions) {
      ordered_json line = ordered_json::object();
      line["traj"] = i;
      line["t"] = t.t;
      line["obs"] = t.obs;
      line["action"] = t.action;
      line["reward"] = t.reward;
      line["next_obs"] = t.next_obs;
      line["terminated"] = t.terminated;
      line["truncated"] = t.truncated;
      out << line.dump() << '\n';
    }
  }
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

DemoStore load_demos(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open demo store '" + path.string() + "'");
  std::size_t line_no = 0;
  auto fail = [&](const std::string& why) -> void {
    throw FormatError(path.string() + ": line " + std::to_string(line_no) + ": " + why);
  };
  auto require_keys = [&](const ordered_json& j, std::initializer_list<const char*> keys) {
    if (!j.is_object()) fail("expected a JSON object");
    for (const char* k : keys) {
      if (!j.contains(k)) fail(std::string("missing field '") + k + "'");
    }
    if (j.size() != keys.size()) {
      for (const auto& [k, v] : j.items()) {
        bool known = false;
        for (const char* want : keys) known |= (k == want);
        if (!known) fail("unexpected field '" + k + "'");
      }
    }
  };

  std::string line;
  line_no = 1;
  if (!std::getline(in, line)) fail("missing header");
  DemoStore store;
  std::size_t declared = 0;
  std::vector<std::uint64_t> seeds;
  try {
    const auto h = ordered_json::parse(line);
    require_keys(h, {"format_version", "env_id", "encoder_id", "obs_dim", "action_count",
                     "transition_count", "trajectory_seeds"});
    if (h.at("format_version").get<int>() != kDemoFormatVersion) {
      fail("format_version " + h.at("format_version").dump() + " is not supported");
    }
    store.env_id = h.at("env_id").get<std::string>();
    store.encoder_id = h.at("encoder_id").get<std::string>();
    store.obs_dim = h.at("obs_dim").get<std::size_t>();
    store.action_count = h.at("action_count").get<int>();
    declared = h.at("transition_count").get<std::size_t>();
    seeds = h.at("trajectory_seeds").get<std::vector<std::uint64_t>>();
  } catch (const nlohmann::json::exception& e) {
    fail(std::string("bad header: ") + e.what());
  }
  if (store.action_count < 1) fail("action_count must be >= 1");
  store.trajectories.resize(seeds.size());
  for (std::size_t i = 0; i < seeds.size(); ++i) store.trajectories[i].seed = seeds[i];

  std::size_t count = 0;
  long long current = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) fail("blank line");
    Transition t;
    long long traj = 0;
    try {
      const auto j = ordered_json::parse(line);
      require_keys(j, {"traj", "t", "obs", "action", "reward", "next_obs", "terminated", "truncated"});
      traj = j.at("traj").get<long long>();
      t.t = j.at("t").get<int>();
      t.obs = j.at("obs").get<std::vector<double>>();
      t.action = j.at("action").get<int>();
      t.reward = j.at("reward").get<double>();
      t.next_obs = j.at("next_obs").get<std::vector<double>>();
      t.terminated = j.at("terminated").get<bool>();
      t.truncated = j.at("truncated").get<bool>();
    } catch (const nlohmann::json::exception& e) {
      fail(std::string("bad transition: ") + e.what());
    }
    if (t.obs.size() != store.obs_dim || t.next_obs.size() != store.obs_dim) {
      fail("observation dimension does not match obs_dim " + std::to_string(store.obs_dim));
    }
    if (t.action < 0 || t.action >= store.action_count) fail("action out of range");
    if (traj < 0 || static_cast<std::size_t>(traj) >= seeds.size()) fail("traj index out of range");
    if (traj != current) {
      if (traj != current + 1) fail("trajectories must appear in order");
      current = traj;
    }
    auto& dest = store.trajectories[static_cast<std::size_t>(traj)];
    if (t.t != static_cast<int>(dest.transitions.size())) fail("step index t out of sequence");
    if (!dest.transitions.empty()) {
      const auto& prev = dest.transitions.back();
      if (prev.terminated || prev.truncated) fail("transition follows an episode end");
    }
    dest.episode_return += t.reward;
    dest.transitions.push_back(std::move(t));
    ++count;
  }
  if (count != declared) {
    fail("header declares " + std::to_string(declared) + " transitions but file holds " +
         std::to_string(count));
  }
  for (std::size_t i = 0; i < store.trajectories.size(); ++i) {
    if (store.trajectories[i].transitions.empty()) {
      fail("trajectory " + std::to_string(i) + " has no transitions");
    }
  }
  return store;
}

std::optional<std::string> budget_warning(const DemoStore& store, std::size_t budget) {
  const std::size_t n = store.transition_count();
  if (2 * n < budget || n > 2 * budget) {
    std::ostringstream os;
    os << "demo store holds " << n << " transitions, outside [" << budget / 2 << ", " << 2 * budget
       << "] around the " << budget << "-transition budget";
    return os.str();
  }
  return std::nullopt;
}

}  // namespace aekick
