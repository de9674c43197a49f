#pragma once

// Run configuration and its INI-style file format:
//
//   [run]     total_steps, eval_every, eval_episodes, seed, out_dir, demos, label, wall_clock
//   [env]     name, layout_seed, view_radius, max_steps
//   [agent]   kind, co_scale, and every Hyperparams field
//   [encoder] kind (identity | standardize | file), path, fit_episodes, fit_seed
//
// Unknown sections or keys are errors. Relative paths resolve against the
// directory holding the config file.

#include <cstdint>
#include <filesystem>
#include <istream>
#include <optional>
#include <string>

#include "aekick/agents.hpp"
#include "aekick/environments.hpp"
#include "json.hpp"

namespace aekick {

struct EnvConfig {
  std::string name = "room-nav";
  std::uint64_t layout_seed = 0;
  int view_radius = -1;
  std::optional<int> max_steps;
};

GridWorld build_env(const EnvConfig& cfg);

enum class EncoderKind { kIdentity, kStandardize, kFile };

struct EncoderConfig {
  EncoderKind kind = EncoderKind::kIdentity;
  std::filesystem::path path;  // kFile only
  int fit_episodes = 50;        // kStandardize: random-policy corpus size
  std::uint64_t fit_seed = 0;
};

struct RunConfig {
  EnvConfig env;
  AgentKind agent = AgentKind::kCdql;
  Hyperparams hp;  // effective values (co-scaling already applied)
  EncoderConfig encoder;
  std::filesystem::path demos;
  long long total_steps = 100000;
  long long eval_every = 0;  // 0: total_steps / 100
  int eval_episodes = 10;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "runs";
  std::string label;  // output directory name for the agent; defaults to the kind
  bool wall_clock = false;

  long long eval_cadence() const;
  std::string agent_label() const;
  /// Value checks only; paths are checked when inputs are loaded.
  void validate() const;
};

/// Parses the INI text. `base_dir` anchors relative paths and `source` names
/// the input in error messages.
RunConfig parse_config(std::istream& in, const std::filesystem::path& base_dir,
                       const std::string& source = "<config>");
RunConfig load_config(const std::filesystem::path& path);

nlohmann::ordered_json config_to_json(const RunConfig& cfg);
RunConfig config_from_json(const nlohmann::ordered_json& j);

}  // namespace aekick
