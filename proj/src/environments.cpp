#include "aekick/environments.hpp"

#include <algorithm>
#include <deque>
#include <sstream>

namespace aekick {

namespace {

constexpr int kDx[4] = {0, 0, -1, 1};
constexpr int kDy[4] = {-1, 1, 0, 0};

Cell moved(Cell c, int action) { return {c.x + kDx[action], c.y + kDy[action]}; }

}  // namespace

std::string to_string(GridKind k) {
  switch (k) {
    case GridKind::kRoomNav: return "room-nav";
    case GridKind::kFourRoomsNav: return "four-rooms-nav";
    case GridKind::kCorridorNav: return "corridor-nav";
    case GridKind::kCollectGrid: return "collect-grid";
  }
  return "room-nav";
}

GridKind grid_kind_from_string(const std::string& s) {
  if (s == "room-nav") return GridKind::kRoomNav;
  if (s == "four-rooms-nav") return GridKind::kFourRoomsNav;
  if (s == "corridor-nav") return GridKind::kCorridorNav;
  if (s == "collect-grid") return GridKind::kCollectGrid;
  throw ConfigError("unknown environment kind '" + s + "'");
}

GridWorld::GridWorld(GridWorldSpec spec) : spec_(std::move(spec)) {
  if (spec_.width < 1 || spec_.height < 1) throw ContractError("grid: width and height must be >= 1");
  const int n = cell_count();
  wall_mask_.assign(n, 0);
  hazard_mask_.assign(n, 0);
  goal_mask_.assign(n, 0);
  auto mark = [&](const std::set<Cell>& cells, std::vector<char>& mask, const char* what) {
    for (Cell c : cells) {
      if (!in_bounds(c)) throw ContractError(std::string("grid: ") + what + " cell out of bounds");
      mask[index(c)] = 1;
    }
  };
  mark(spec_.walls, wall_mask_, "wall");
  mark(spec_.hazards, hazard_mask_, "hazard");
  mark(spec_.goals, goal_mask_, "goal");
  for (int y = 0; y < spec_.height; ++y) {
    for (int x = 0; x < spec_.width; ++x) {
      const Cell c{x, y};
      const int i = index(c);
      if (!wall_mask_[i] && !hazard_mask_[i] && !goal_mask_[i] && !spec_.items.contains(c)) {
        starts_.push_back(c);
      }
    }
  }
  validate();
  std::ostringstream os;
  os << to_string(spec_.kind) << "-" << spec_.width << "x" << spec_.height << "-T" << spec_.max_steps;
  if (spec_.kind == GridKind::kCollectGrid) os << "-i" << spec_.items.size();
  if (spec_.view_radius >= 0) os << "-v" << spec_.view_radius;
  id_ = os.str();
}

bool GridWorld::in_bounds(Cell c) const {
  return c.x >= 0 && c.y >= 0 && c.x < spec_.width && c.y < spec_.height;
}
bool GridWorld::is_wall(Cell c) const { return !in_bounds(c) || wall_mask_[index(c)]; }
bool GridWorld::is_hazard(Cell c) const { return in_bounds(c) && hazard_mask_[index(c)]; }
bool GridWorld::is_goal(Cell c) const { return in_bounds(c) && goal_mask_[index(c)]; }

int GridWorld::action_count() const { return spec_.reward_mode == RewardMode::kCollect ? 5 : 4; }

std::size_t GridWorld::obs_dim() const {
  if (spec_.view_radius >= 0) {
    const std::size_t side = 2 * spec_.view_radius + 1;
    return side * side * 4;
  }
  // agent one-hot plus goal bitmap (navigation) or item bitmap (collect)
  return 2 * static_cast<std::size_t>(cell_count());
}

std::vector<int> GridWorld::distance_field(const std::set<Cell>& targets) const {
  std::vector<int> dist(cell_count(), -1);
  std::deque<Cell> frontier;
  for (Cell t : targets) {
    if (!in_bounds(t) || is_wall(t)) continue;
    dist[index(t)] = 0;
    frontier.push_back(t);
  }
  while (!frontier.empty()) {
    const Cell c = frontier.front();
    frontier.pop_front();
    for (int a = 0; a < 4; ++a) {
      const Cell nb = moved(c, a);
      if (is_wall(nb) || is_hazard(nb) || dist[index(nb)] >= 0) continue;
      dist[index(nb)] = dist[index(c)] + 1;
      frontier.push_back(nb);
    }
  }
  return dist;
}

void GridWorld::validate() const {
  if (spec_.max_steps < 1) throw ContractError("grid: max_steps must be >= 1");
  const bool collect = spec_.reward_mode == RewardMode::kCollect;
  if (collect != (spec_.kind == GridKind::kCollectGrid)) {
    throw ContractError("grid: collect reward mode is exclusive to collect-grid");
  }
  for (Cell c : spec_.goals) {
    if (is_wall(c) || is_hazard(c)) throw ContractError("grid: goal on a wall or hazard");
  }
  for (Cell c : spec_.items) {
    if (!in_bounds(c) || is_wall(c) || is_hazard(c) || is_goal(c)) {
      throw ContractError("grid: item not on a free cell");
    }
  }
  if (collect ? spec_.items.empty() : spec_.goals.empty()) {
    throw ContractError(collect ? "grid: collect-grid needs items" : "grid: navigation needs a goal");
  }
  if (starts_.empty()) throw ContractError("grid: no free start cell");
  if (spec_.view_radius >= 0 && spec_.view_radius > std::max(spec_.width, spec_.height)) {
    throw ContractError("grid: view radius larger than the grid");
  }

  const auto& targets = collect ? spec_.items : spec_.goals;
  for (Cell t : targets) {
    const auto dist = distance_field({t});
    for (Cell s : starts_) {
      if (dist[index(s)] < 0) throw ContractError("grid: target unreachable from some start cell");
    }
  }

  if (spec_.kind == GridKind::kFourRoomsNav) {
    // Blocking the doorways must leave exactly four connected rooms.
    std::vector<char> seen(cell_count(), 0);
    int components = 0;
    for (int y = 0; y < spec_.height; ++y) {
      for (int x = 0; x < spec_.width; ++x) {
        const Cell c{x, y};
        if (is_wall(c) || spec_.doorways.contains(c) || seen[index(c)]) continue;
        ++components;
        std::deque<Cell> q{c};
        seen[index(c)] = 1;
        while (!q.empty()) {
          const Cell u = q.front();
          q.pop_front();
          for (int a = 0; a < 4; ++a) {
            const Cell nb = moved(u, a);
            if (is_wall(nb) || spec_.doorways.contains(nb) || seen[index(nb)]) continue;
            seen[index(nb)] = 1;
            q.push_back(nb);
          }
        }
      }
    }
    if (components != 4) throw ContractError("grid: four-rooms walls must form exactly four rooms");
    for (Cell d : spec_.doorways) {
      if (is_wall(d)) throw ContractError("grid: doorway on a wall");
    }
  }
}

GridWorld GridWorld::room_nav(int width, int height, int max_steps) {
  GridWorldSpec s;
  s.kind = GridKind::kRoomNav;
  s.width = width;
  s.height = height;
  s.max_steps = max_steps;
  s.goals = {{width - 1, height - 1}};
  return GridWorld(std::move(s));
}

GridWorld GridWorld::four_rooms(int size, int max_steps, std::optional<std::uint64_t> doorway_seed) {
  if (size < 5) throw ContractError("four_rooms: size must be >= 5");
  GridWorldSpec s;
  s.kind = GridKind::kFourRoomsNav;
  s.width = size;
  s.height = size;
  s.max_steps = max_steps;
  const int mid = size / 2;
  for (int i = 0; i < size; ++i) {
    s.walls.insert({mid, i});
    s.walls.insert({i, mid});
  }
  // One doorway per wall segment: upper/lower half of the vertical wall,
  // left/right half of the horizontal wall.
  int upper = mid / 2, lower = mid + 1 + (size - mid - 1) / 2;
  int left = mid / 2, right = mid + 1 + (size - mid - 1) / 2;
  if (doorway_seed) {
    Rng rng(derive_seed(*doorway_seed, 0xd00d));
    upper = uniform_int(rng, 0, mid - 1);
    lower = uniform_int(rng, mid + 1, size - 1);
    left = uniform_int(rng, 0, mid - 1);
    right = uniform_int(rng, mid + 1, size - 1);
  }
  s.doorways = {{mid, upper}, {mid, lower}, {left, mid}, {right, mid}};
  for (Cell d : s.doorways) s.walls.erase(d);
  s.goals = {{size - 1, size - 1}};
  return GridWorld(std::move(s));
}

GridWorld GridWorld::corridor(int height, int width, int max_steps) {
  if (height < 2) throw ContractError("corridor: height must be >= 2");
  GridWorldSpec s;
  s.kind = GridKind::kCorridorNav;
  s.width = width;
  s.height = height;
  s.max_steps = max_steps;
  for (int x = 0; x < width; ++x) s.hazards.insert({x, height - 1});
  s.goals = {{width - 1, (height - 1) / 2}};
  return GridWorld(std::move(s));
}

GridWorld GridWorld::collect(int width, int height, int n_items, int max_steps, std::uint64_t item_seed) {
  if (n_items < 1 || n_items >= width * height) throw ContractError("collect: bad item count");
  GridWorldSpec s;
  s.kind = GridKind::kCollectGrid;
  s.reward_mode = RewardMode::kCollect;
  s.width = width;
  s.height = height;
  s.max_steps = max_steps;
  std::vector<Cell> cells;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) cells.push_back({x, y});
  }
  Rng rng(derive_seed(item_seed, 0x17e5));
  std::shuffle(cells.begin(), cells.end(), rng);
  s.items.insert(cells.begin(), cells.begin() + n_items);
  return GridWorld(std::move(s));
}

GridWorld make_named_env(const std::string& name, std::uint64_t seed) {
  if (name == "room-nav") return GridWorld::room_nav();
  if (name == "four-rooms-nav") return GridWorld::four_rooms();
  if (name == "maze-nav") return GridWorld::four_rooms(11, 120, seed);
  if (name == "corridor-nav") return GridWorld::corridor();
  if (name == "collect-grid") return GridWorld::collect();
  throw ConfigError("unknown environment '" + name + "'");
}

std::vector<double> observe(const GridWorld& env, const EnvState& state) {
  const auto& s = env.spec();
  const bool collect = s.reward_mode == RewardMode::kCollect;
  if (s.view_radius < 0) {
    const std::size_t n = env.cell_count();
    std::vector<double> obs(2 * n, 0.0);
    obs[env.index(state.agent)] = 1.0;
    if (collect) {
      for (Cell c : state.items) obs[n + env.index(c)] = 1.0;
    } else {
      for (Cell c : s.goals) obs[n + env.index(c)] = 1.0;
    }
    return obs;
  }
  const int v = s.view_radius;
  const int side = 2 * v + 1;
  std::vector<double> obs(static_cast<std::size_t>(side * side * 4), 0.0);
  for (int dy = -v; dy <= v; ++dy) {
    for (int dx = -v; dx <= v; ++dx) {
      const Cell c{state.agent.x + dx, state.agent.y + dy};
      const std::size_t base = static_cast<std::size_t>(((dy + v) * side + (dx + v)) * 4);
      obs[base + 0] = env.is_wall(c) ? 1.0 : 0.0;
      obs[base + 1] = env.is_goal(c) ? 1.0 : 0.0;
      obs[base + 2] = state.items.contains(c) ? 1.0 : 0.0;
      obs[base + 3] = env.is_hazard(c) ? 1.0 : 0.0;
    }
  }
  return obs;
}

std::pair<EnvState, std::vector<double>> reset(const GridWorld& env, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x5e7));
  const auto& starts = env.start_cells();
  EnvState st;
  st.agent = starts[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(starts.size()) - 1))];
  st.items = env.spec().items;
  st.t = 0;
  st.done = false;
  st.seed = seed;
  auto obs = observe(env, st);
  return {std::move(st), std::move(obs)};
}

StepResult step(const GridWorld& env, EnvState& state, int action) {
  if (state.done) throw ContractError("step: episode already finished");
  if (action < 0 || action >= env.action_count()) {
    throw ContractError("step: action " + std::to_string(action) + " invalid for " + env.id());
  }
  const auto& s = env.spec();
  StepResult r;
  if (action == kPickup) {
    if (state.items.erase(state.agent) > 0) {
      r.reward += 1.0;
      state.items_collected += 1;
    }
  } else {
    const Cell next = moved(state.agent, action);
    if (!env.is_wall(next)) state.agent = next;
  }
  if (s.reward_mode == RewardMode::kCollect) {
    r.reward += -2.0 / static_cast<double>(s.max_steps);
  } else if (env.is_goal(state.agent)) {
    r.reward = 1.0 - 0.2 * (static_cast<double>(state.t) / static_cast<double>(s.max_steps));
    r.terminated = true;
  } else if (env.is_hazard(state.agent)) {
    r.reward = 0.0;
    r.terminated = true;
  }
  state.t += 1;
  if (!r.terminated && state.t >= s.max_steps) r.truncated = true;
  state.done = r.terminated || r.truncated;
  r.observation = observe(env, state);
  return r;
}

int scripted_expert(const EnvState& state, const GridWorld& env, double noise, Rng& rng) {
  const double coin = uniform01(rng);
  if (coin < noise) return uniform_int(rng, 0, env.action_count() - 1);
  const bool collect = env.spec().reward_mode == RewardMode::kCollect;
  if (collect) {
    if (state.items.contains(state.agent)) return kPickup;
    if (state.items.empty()) return kUp;
  }
  const auto dist = env.distance_field(collect ? state.items : env.spec().goals);
  const int here = dist[env.index(state.agent)];
  if (here < 0) throw ContractError("scripted_expert: no reachable target");
  for (int a = 0; a < 4; ++a) {
    const Cell nb = moved(state.agent, a);
    if (env.is_wall(nb) || env.is_hazard(nb)) continue;
    if (dist[env.index(nb)] == here - 1) return a;
  }
  throw ContractError("scripted_expert: distance field inconsistent");
}

bool episode_success(const GridWorld& env, const EnvState& state, const StepResult& last) {
  if (env.spec().reward_mode == RewardMode::kCollect) return state.items.empty();
  return last.terminated && env.is_goal(state.agent);
}

Matrix random_policy_observations(const GridWorld& env, int n_trajectories, std::uint64_t seed) {
  std::vector<std::vector<double>> rows;
  for (int e = 0; e < n_trajectories; ++e) {
    const auto episode_seed = derive_seed(seed, static_cast<std::uint64_t>(e));
    auto [state, obs] = reset(env, episode_seed);
    Rng rng(derive_seed(episode_seed, 1));
    rows.push_back(obs);
    while (!state.done) {
      auto r = step(env, state, uniform_int(rng, 0, env.action_count() - 1));
      rows.push_back(std::move(r.observation));
    }
  }
  return Matrix::from_rows(rows);
}

}  // namespace aekick
