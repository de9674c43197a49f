#include "aekick/config.hpp"

#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace aekick {

using nlohmann::ordered_json;

namespace {

std::string metric_name(DistanceMetric m) { return m == DistanceMetric::kCosine ? "cosine" : "l2"; }

std::string encoder_kind_name(EncoderKind k) {
  switch (k) {
    case EncoderKind::kIdentity: return "identity";
    case EncoderKind::kStandardize: return "standardize";
    case EncoderKind::kFile: return "file";
  }
  return "identity";
}

EncoderKind encoder_kind_from(const std::string& s) {
  if (s == "identity") return EncoderKind::kIdentity;
  if (s == "standardize") return EncoderKind::kStandardize;
  if (s == "file") return EncoderKind::kFile;
  throw ConfigError("unknown encoder kind '" + s + "'");
}

ordered_json hp_to_json(const Hyperparams& hp) {
  ordered_json j = ordered_json::object();
  j["gamma"] = hp.gamma;
  j["learning_rate"] = hp.learning_rate;
  j["tau"] = hp.tau;
  j["buffer_capacity"] = hp.buffer_capacity;
  j["batch_size"] = hp.batch_size;
  j["eps_start"] = hp.eps_start;
  j["eps_end"] = hp.eps_end;
  j["exploration_fraction"] = hp.exploration_fraction;
  j["target_period"] = hp.target_period;
  j["train_frequency"] = hp.train_frequency;
  j["hidden"] = hp.hidden;
  j["twin_critic"] = hp.twin_critic;
  j["ae_lambda"] = hp.ae_lambda;
  j["ae_mode"] = to_string(hp.ae_mode);
  j["k_neighbors"] = hp.k_neighbors;
  j["metric"] = metric_name(hp.metric);
  j["qdagger_lambda"] = hp.qdagger_lambda;
  j["teacher_steps"] = hp.teacher_steps;
  j["qdagger_offline_steps"] = hp.qdagger_offline_steps;
  j["distill_temperature"] = hp.distill_temperature;
  j["teacher_eval_episodes"] = hp.teacher_eval_episodes;
  j["awac_lambda"] = hp.awac_lambda;
  j["awac_offline_steps"] = hp.awac_offline_steps;
  j["awac_weight_cap"] = hp.awac_weight_cap;
  j["her_extra"] = hp.her_extra;
  j["bc_steps"] = hp.bc_steps;
  j["bc_eval_period"] = hp.bc_eval_period;
  j["bc_learning_rate"] = hp.bc_learning_rate;
  return j;
}

Hyperparams hp_from_json(const ordered_json& j) {
  Hyperparams hp;
  hp.gamma = j.at("gamma").get<double>();
  hp.learning_rate = j.at("learning_rate").get<double>();
  hp.tau = j.at("tau").get<double>();
  hp.buffer_capacity = j.at("buffer_capacity").get<std::size_t>();
  hp.batch_size = j.at("batch_size").get<std::size_t>();
  hp.eps_start = j.at("eps_start").get<double>();
  hp.eps_end = j.at("eps_end").get<double>();
  hp.exploration_fraction = j.at("exploration_fraction").get<double>();
  hp.target_period = j.at("target_period").get<long long>();
  hp.train_frequency = j.at("train_frequency").get<long long>();
  hp.hidden = j.at("hidden").get<std::vector<std::size_t>>();
  hp.twin_critic = j.at("twin_critic").get<bool>();
  hp.ae_lambda = j.at("ae_lambda").get<double>();
  hp.ae_mode = ae_mode_from_string(j.at("ae_mode").get<std::string>());
  hp.k_neighbors = j.at("k_neighbors").get<std::size_t>();
  hp.metric = distance_metric_from_string(j.at("metric").get<std::string>());
  hp.qdagger_lambda = j.at("qdagger_lambda").get<double>();
  hp.teacher_steps = j.at("teacher_steps").get<long long>();
  hp.qdagger_offline_steps = j.at("qdagger_offline_steps").get<long long>();
  hp.distill_temperature = j.at("distill_temperature").get<double>();
  hp.teacher_eval_episodes = j.at("teacher_eval_episodes").get<int>();
  hp.awac_lambda = j.at("awac_lambda").get<double>();
  hp.awac_offline_steps = j.at("awac_offline_steps").get<long long>();
  hp.awac_weight_cap = j.at("awac_weight_cap").get<double>();
  hp.her_extra = j.at("her_extra").get<std::size_t>();
  hp.bc_steps = j.at("bc_steps").get<long long>();
  hp.bc_eval_period = j.at("bc_eval_period").get<long long>();
  hp.bc_learning_rate = j.at("bc_learning_rate").get<double>();
  return hp;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

struct Entry {
  std::string value;
  std::size_t line = 0;
};

class Reader {
 public:
  Reader(std::map<std::string, std::map<std::string, Entry>> sections, std::string source)
      : sections_(std::move(sections)), source_(std::move(source)) {}

  std::optional<Entry> take(const std::string& section, const std::string& key) {
    auto s = sections_.find(section);
    if (s == sections_.end()) return std::nullopt;
    auto k = s->second.find(key);
    if (k == s->second.end()) return std::nullopt;
    Entry e = k->second;
    s->second.erase(k);
    return e;
  }

  [[noreturn]] void fail(const Entry& e, const std::string& why) const {
    throw ConfigError(source_ + ":" + std::to_string(e.line) + ": " + why);
  }

  long long integer(const Entry& e) const {
    try {
      std::size_t used = 0;
      const long long v = std::stoll(e.value, &used);
      if (used == e.value.size()) return v;
    } catch (const std::exception&) {
    }
    fail(e, "expected an integer, got '" + e.value + "'");
  }

  double real(const Entry& e) const {
    try {
      std::size_t used = 0;
      const double v = std::stod(e.value, &used);
      if (used == e.value.size()) return v;
    } catch (const std::exception&) {
    }
    fail(e, "expected a number, got '" + e.value + "'");
  }

  bool boolean(const Entry& e) const {
    const std::string& v = e.value;
    if (v == "true" || v == "on" || v == "yes" || v == "1") return true;
    if (v == "false" || v == "off" || v == "no" || v == "0") return false;
    fail(e, "expected a boolean, got '" + v + "'");
  }

  /// Typed conversion guided by the JSON type of the current value.
  ordered_json as_json_like(const Entry& e, const ordered_json& like) const {
    if (like.is_boolean()) return boolean(e);
    if (like.is_number_float()) return real(e);
    if (like.is_number_unsigned()) {
      const long long v = integer(e);
      if (v < 0) fail(e, "expected a non-negative integer");
      return static_cast<std::uint64_t>(v);
    }
    if (like.is_number_integer()) return integer(e);
    if (like.is_array()) {
      ordered_json arr = ordered_json::array();
      std::stringstream ss(e.value);
      std::string item;
      while (std::getline(ss, item, ',')) {
        Entry sub{trim(item), e.line};
        const long long v = integer(sub);
        if (v < 1) fail(e, "layer widths must be >= 1");
        arr.push_back(static_cast<std::uint64_t>(v));
      }
      return arr;
    }
    return e.value;
  }

  void reject_leftovers() const {
    for (const auto& [section, keys] : sections_) {
      for (const auto& [key, entry] : keys) fail(entry, "unknown key '" + key + "' in [" + section + "]");
    }
  }

 private:
  std::map<std::string, std::map<std::string, Entry>> sections_;
  std::string source_;
};

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

}  // namespace

GridWorld build_env(const EnvConfig& cfg) {
  GridWorld env = make_named_env(cfg.name, cfg.layout_seed);
  if (cfg.view_radius < 0 && !cfg.max_steps) return env;
  GridWorldSpec spec = env.spec();
  spec.view_radius = cfg.view_radius;
  if (cfg.max_steps) spec.max_steps = *cfg.max_steps;
  try {
    return GridWorld(std::move(spec));
  } catch (const ContractError& e) {
    throw ConfigError(std::string("[env] ") + e.what());
  }
}

long long RunConfig::eval_cadence() const {
  return eval_every > 0 ? eval_every : std::max<long long>(1, total_steps / 100);
}

std::string RunConfig::agent_label() const { return label.empty() ? to_string(agent) : label; }

void RunConfig::validate() const {
  hp.validate();
  if (total_steps < 1) throw ConfigError("total_steps must be >= 1");
  if (eval_every < 0) throw ConfigError("eval_every must be >= 0");
  if (eval_episodes < 1) throw ConfigError("eval_episodes must be >= 1");
  if (requires_demos(agent) && demos.empty()) {
    throw ConfigError("agent '" + to_string(agent) + "' requires a demo store (set [run] demos)");
  }
  if (encoder.kind == EncoderKind::kFile && encoder.path.empty()) {
    throw ConfigError("encoder kind 'file' requires [encoder] path");
  }
  if (encoder.fit_episodes < 1) throw ConfigError("fit_episodes must be >= 1");
  if (label.find('/') != std::string::npos) throw ConfigError("label must not contain '/'");
}

RunConfig parse_config(std::istream& in, const std::filesystem::path& base_dir, const std::string& source) {
  static const std::set<std::string> known_sections = {"run", "env", "agent", "encoder"};
  std::map<std::string, std::map<std::string, Entry>> sections;
  std::string raw;
  std::string section;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& why) {
    throw ConfigError(source + ":" + std::to_string(line_no) + ": " + why);
  };
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail("malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      if (!known_sections.count(section)) fail("unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail("expected 'key = value'");
    if (section.empty()) fail("key outside any section");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) fail("empty key");
    if (!sections[section].emplace(key, Entry{value, line_no}).second) {
      fail("duplicate key '" + key + "' in [" + section + "]");
    }
  }

  Reader r(std::move(sections), source);
  RunConfig cfg;
  if (auto e = r.take("run", "total_steps")) cfg.total_steps = r.integer(*e);
  if (auto e = r.take("run", "eval_every")) cfg.eval_every = r.integer(*e);
  if (auto e = r.take("run", "eval_episodes")) cfg.eval_episodes = static_cast<int>(r.integer(*e));
  if (auto e = r.take("run", "seed")) {
    const long long s = r.integer(*e);
    if (s < 0) r.fail(*e, "seed must be >= 0");
    cfg.seed = static_cast<std::uint64_t>(s);
  }
  if (auto e = r.take("run", "out_dir")) cfg.out_dir = resolve(base_dir, e->value);
  else cfg.out_dir = base_dir / cfg.out_dir;
  if (auto e = r.take("run", "demos")) cfg.demos = resolve(base_dir, e->value);
  if (auto e = r.take("run", "label")) cfg.label = e->value;
  if (auto e = r.take("run", "wall_clock")) cfg.wall_clock = r.boolean(*e);

  if (auto e = r.take("env", "name")) cfg.env.name = e->value;
  if (auto e = r.take("env", "layout_seed")) cfg.env.layout_seed = static_cast<std::uint64_t>(r.integer(*e));
  if (auto e = r.take("env", "view_radius")) cfg.env.view_radius = static_cast<int>(r.integer(*e));
  if (auto e = r.take("env", "max_steps")) cfg.env.max_steps = static_cast<int>(r.integer(*e));
  try {
    build_env(cfg.env);
  } catch (const ConfigError& err) {
    throw ConfigError(source + ": " + err.what());
  }

  if (auto e = r.take("encoder", "kind")) {
    try {
      cfg.encoder.kind = encoder_kind_from(e->value);
    } catch (const ConfigError& err) {
      r.fail(*e, err.what());
    }
  }
  if (auto e = r.take("encoder", "path")) cfg.encoder.path = resolve(base_dir, e->value);
  if (auto e = r.take("encoder", "fit_episodes")) cfg.encoder.fit_episodes = static_cast<int>(r.integer(*e));
  if (auto e = r.take("encoder", "fit_seed")) cfg.encoder.fit_seed = static_cast<std::uint64_t>(r.integer(*e));

  if (auto e = r.take("agent", "kind")) {
    try {
      cfg.agent = agent_kind_from_string(e->value);
    } catch (const ConfigError& err) {
      r.fail(*e, err.what());
    }
  }
  bool co_scale = true;
  if (auto e = r.take("agent", "co_scale")) co_scale = r.boolean(*e);
  if (cfg.total_steps < 1) throw ConfigError(source + ": total_steps must be >= 1");
  Hyperparams defaults;
  if (co_scale) defaults = co_scaled(defaults, cfg.total_steps);
  ordered_json hp = hp_to_json(defaults);
  for (auto& [key, value] : hp.items()) {
    if (auto e = r.take("agent", key)) {
      ordered_json typed = r.as_json_like(*e, value);
      if (key == "ae_mode" || key == "metric") {
        try {
          if (key == "ae_mode") ae_mode_from_string(typed.get<std::string>());
          else distance_metric_from_string(typed.get<std::string>());
        } catch (const ConfigError& err) {
          r.fail(*e, err.what());
        }
      }
      value = std::move(typed);
    }
  }
  r.reject_leftovers();
  cfg.hp = hp_from_json(hp);
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  return parse_config(in, path.parent_path(), path.string());
}

ordered_json config_to_json(const RunConfig& cfg) {
  ordered_json j = ordered_json::object();
  j["run"] = {{"total_steps", cfg.total_steps},
              {"eval_every", cfg.eval_cadence()},
              {"eval_episodes", cfg.eval_episodes},
              {"seed", cfg.seed},
              {"out_dir", cfg.out_dir.string()},
              {"demos", cfg.demos.string()},
              {"label", cfg.agent_label()},
              {"wall_clock", cfg.wall_clock}};
  ordered_json env = {{"name", cfg.env.name}, {"layout_seed", cfg.env.layout_seed}, {"view_radius", cfg.env.view_radius}};
  env["max_steps"] = cfg.env.max_steps ? ordered_json(*cfg.env.max_steps) : ordered_json(nullptr);
  j["env"] = env;
  ordered_json agent = {{"kind", to_string(cfg.agent)}};
  const ordered_json hp = hp_to_json(cfg.hp);
  for (const auto& [k, v] : hp.items()) agent[k] = v;
  j["agent"] = agent;
  j["encoder"] = {{"kind", encoder_kind_name(cfg.encoder.kind)},
                  {"path", cfg.encoder.path.string()},
                  {"fit_episodes", cfg.encoder.fit_episodes},
                  {"fit_seed", cfg.encoder.fit_seed}};
  return j;
}

RunConfig config_from_json(const ordered_json& j) {
  RunConfig cfg;
  try {
    const auto& run = j.at("run");
    cfg.total_steps = run.at("total_steps").get<long long>();
    cfg.eval_every = run.at("eval_every").get<long long>();
    cfg.eval_episodes = run.at("eval_episodes").get<int>();
    cfg.seed = run.at("seed").get<std::uint64_t>();
    cfg.out_dir = run.at("out_dir").get<std::string>();
    cfg.demos = run.at("demos").get<std::string>();
    cfg.label = run.at("label").get<std::string>();
    cfg.wall_clock = run.at("wall_clock").get<bool>();
    const auto& env = j.at("env");
    cfg.env.name = env.at("name").get<std::string>();
    cfg.env.layout_seed = env.at("layout_seed").get<std::uint64_t>();
    cfg.env.view_radius = env.at("view_radius").get<int>();
    if (!env.at("max_steps").is_null()) cfg.env.max_steps = env.at("max_steps").get<int>();
    const auto& agent = j.at("agent");
    cfg.agent = agent_kind_from_string(agent.at("kind").get<std::string>());
    cfg.hp = hp_from_json(agent);
    const auto& enc = j.at("encoder");
    cfg.encoder.kind = encoder_kind_from(enc.at("kind").get<std::string>());
    cfg.encoder.path = enc.at("path").get<std::string>();
    cfg.encoder.fit_episodes = enc.at("fit_episodes").get<int>();
    cfg.encoder.fit_seed = enc.at("fit_seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("run config echo: ") + e.what());
  }
  return cfg;
}

}  // namespace aekick
