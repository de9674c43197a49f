#pragma once

// Expert trajectories (the demonstration dataset) and their JSON-lines
// persistence.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "aekick/environments.hpp"

namespace aekick {

struct Transition {
  std::vector<double> obs;
  int action = 0;
  double reward = 0.0;
  std::vector<double> next_obs;
  bool terminated = false;
  bool truncated = false;
  int t = 0;

  bool operator==(const Transition&) const = default;
};

struct Trajectory {
  std::vector<Transition> transitions;
  double episode_return = 0.0;  // undiscounted
  std::uint64_t seed = 0;

  bool operator==(const Trajectory&) const = default;
};

struct DemoStore {
  std::string env_id;
  std::string encoder_id = "raw";  // observations are stored unencoded
  std::size_t obs_dim = 0;
  int action_count = 0;
  std::vector<Trajectory> trajectories;

  std::size_t transition_count() const;
  /// Flattened view in store order.
  std::vector<const Transition*> transitions() const;
  bool operator==(const DemoStore&) const = default;
};

inline constexpr int kDemoFormatVersion = 1;
inline constexpr std::size_t kDemoBudget = 1500;
inline constexpr double kDefaultExpertNoise = 0.1;

/// Runs the scripted expert for `n_traj` episodes. Episode i resets with
/// derive_seed(seed, i); deterministic in all arguments.
DemoStore generate_demos(const GridWorld& env, double expert_noise, int n_traj, std::uint64_t seed);

/// Keeps adding episodes (same seeding rule) until at least `budget`
/// transitions are stored.
DemoStore generate_demos_for_budget(const GridWorld& env, double expert_noise, std::size_t budget,
                                    std::uint64_t seed);

/// Line 1: {format_version, env_id, encoder_id, obs_dim, action_count,
/// transition_count, trajectory_seeds}; then one
/// {traj, t, obs, action, reward, next_obs, terminated, truncated} per line.
void save_demos(const DemoStore& store, const std::filesystem::path& path);

/// Throws FormatError naming the offending line.
DemoStore load_demos(const std::filesystem::path& path);

/// A message when the store holds fewer than half or more than twice the
/// transition budget; never an error.
std::optional<std::string> budget_warning(const DemoStore& store, std::size_t budget = kDemoBudget);

}  // namespace aekick
