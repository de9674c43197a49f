#pragma once

// Grid worlds with sparse, success-only rewards and a scripted expert.

#include <compare>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "aekick/common.hpp"
#include "aekick/numerics.hpp"

namespace aekick {

enum class GridKind { kRoomNav, kFourRoomsNav, kCorridorNav, kCollectGrid };
enum class RewardMode { kSparseSuccess, kCollect };

std::string to_string(GridKind k);
GridKind grid_kind_from_string(const std::string& s);

enum Action : int { kUp = 0, kDown = 1, kLeft = 2, kRight = 3, kPickup = 4 };

struct Cell {
  int x = 0;
  int y = 0;
  auto operator<=>(const Cell&) const = default;
};

struct GridWorldSpec {
  GridKind kind = GridKind::kRoomNav;
  int width = 8;
  int height = 8;
  std::set<Cell> walls;
  std::set<Cell> goals;
  std::set<Cell> items;
  std::set<Cell> hazards;
  std::set<Cell> doorways;  // four-rooms only
  int max_steps = 60;
  RewardMode reward_mode = RewardMode::kSparseSuccess;
  int view_radius = -1;  // < 0: full view; otherwise egocentric (2v+1)^2 window
};

/// A validated grid world. Construction checks every invariant, including
/// reachability of each goal (or item) from every start cell.
class GridWorld {
 public:
  explicit GridWorld(GridWorldSpec spec);

  // Desk-scale defaults.
  static GridWorld room_nav(int width = 8, int height = 8, int max_steps = 60);
  /// 11x11 by default: a wall cross splitting four rooms joined by one-cell
  /// doorways. With `doorway_seed` the doorway positions are randomized.
  static GridWorld four_rooms(int size = 11, int max_steps = 120,
                              std::optional<std::uint64_t> doorway_seed = std::nullopt);
  /// Height x width strip; the bottom row is hazard, the goal sits at the
  /// far end of the middle row.
  static GridWorld corridor(int height = 3, int width = 12, int max_steps = 50);
  static GridWorld collect(int width = 8, int height = 8, int n_items = 5, int max_steps = 80,
                           std::uint64_t item_seed = 7);

  const GridWorldSpec& spec() const { return spec_; }
  const std::string& id() const { return id_; }
  int action_count() const;
  std::size_t obs_dim() const;
  int cell_count() const { return spec_.width * spec_.height; }
  int index(Cell c) const { return c.y * spec_.width + c.x; }
  bool in_bounds(Cell c) const;
  bool is_wall(Cell c) const;
  bool is_hazard(Cell c) const;
  bool is_goal(Cell c) const;
  const std::vector<Cell>& start_cells() const { return starts_; }

  /// Breadth-first distances (over non-wall, non-hazard cells) to the
  /// nearest of `targets`; -1 where unreachable.
  std::vector<int> distance_field(const std::set<Cell>& targets) const;

 private:
  void validate() const;
  GridWorldSpec spec_;
  std::string id_;
  std::vector<char> wall_mask_;
  std::vector<char> hazard_mask_;
  std::vector<char> goal_mask_;
  std::vector<Cell> starts_;
};

struct EnvState {
  Cell agent;
  std::set<Cell> items;  // remaining
  int t = 0;
  bool done = false;
  std::uint64_t seed = 0;
  int items_collected = 0;

  bool operator==(const EnvState&) const = default;
};

struct StepResult {
  std::vector<double> observation;
  double reward = 0.0;
  bool terminated = false;
  bool truncated = false;
};

/// Agent starts on a seeded-uniform start cell (free, non-goal, non-hazard).
std::pair<EnvState, std::vector<double>> reset(const GridWorld& env, std::uint64_t seed);

/// Sparse mode pays 1 - 0.2 * t / T on entering a goal (t before the step);
/// corridor hazards terminate with 0; collect mode pays +1 per pickup on an
/// item and -2/T every step. Throws ContractError on a finished episode or an
/// invalid action.
StepResult step(const GridWorld& env, EnvState& state, int action);

std::vector<double> observe(const GridWorld& env, const EnvState& state);

/// Shortest-path action toward the nearest goal (or remaining item, with
/// pickup when standing on one); uniform random action with probability
/// `noise`. Always consumes exactly one uniform draw before deciding.
int scripted_expert(const EnvState& state, const GridWorld& env, double noise, Rng& rng);

/// True when the episode ended the way the task intends: goal reached, or
/// every item collected in collect mode.
bool episode_success(const GridWorld& env, const EnvState& state, const StepResult& last);

/// Observations gathered by a uniform-random policy, one row per visited state.
Matrix random_policy_observations(const GridWorld& env, int n_trajectories, std::uint64_t seed);

/// Named desk defaults: room-nav, four-rooms-nav, maze-nav, corridor-nav, collect-grid.
GridWorld make_named_env(const std::string& name, std::uint64_t seed = 0);

}  // namespace aekick
