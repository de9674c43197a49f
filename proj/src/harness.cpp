#include "aekick/harness.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <charconv>
#include <chrono>
#include <exception>
#include <fstream>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "aekick/snapshot.hpp"

namespace aekick {

using nlohmann::ordered_json;

namespace {

// Independent rng streams of one run.
enum Stream : std::uint64_t {
  kInitStream = 1,
  kActStream = 2,
  kSampleStream = 3,
  kEpisodeStream = 4,
  kEvalStream = 5,
  kTeacherInitStream = 6,
  kTeacherSampleStream = 7,
  kTeacherEpisodeStream = 8,
};

std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string format_optional(const std::optional<double>& v) { return v ? format_number(*v) : ""; }

ordered_json optional_json(const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); }

std::optional<double> optional_from(const ordered_json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

class LossAccumulator {
 public:
  void add(const LossBreakdown& l) {
    add_one(0, l.td);
    add_one(1, l.ae);
    add_one(2, l.distill);
    add_one(3, l.actor);
  }

  void flush(MetricRow& row) {
    row.loss_td = mean(0);
    row.loss_ae = mean(1);
    row.loss_distill = mean(2);
    row.loss_actor = mean(3);
    sums_.fill(0.0);
    counts_.fill(0);
  }

 private:
  void add_one(int i, const std::optional<double>& v) {
    if (!v) return;
    sums_[static_cast<std::size_t>(i)] += *v;
    counts_[static_cast<std::size_t>(i)] += 1;
  }
  std::optional<double> mean(int i) const {
    const auto n = counts_[static_cast<std::size_t>(i)];
    if (n == 0) return std::nullopt;
    return sums_[static_cast<std::size_t>(i)] / static_cast<double>(n);
  }
  std::array<double, 4> sums_{};
  std::array<long long, 4> counts_{};
};

/// An environment stream that restarts itself when an episode ends.
class Interaction {
 public:
  Interaction(const GridWorld& env, std::uint64_t stream) : env_(env), stream_(stream) { begin(); }

  const std::vector<double>& obs() const { return obs_; }

  Transition step(int action) {
    const int t = state_.t;
    auto r = aekick::step(env_, state_, action);
    Transition tr{obs_, action, r.reward, r.observation, r.terminated, r.truncated, t};
    obs_ = std::move(r.observation);
    if (state_.done) begin();
    return tr;
  }

 private:
  void begin() {
    auto [s, o] = reset(env_, derive_seed(stream_, episodes_++));
    state_ = std::move(s);
    obs_ = std::move(o);
  }

  const GridWorld& env_;
  std::uint64_t stream_;
  std::uint64_t episodes_ = 0;
  EnvState state_;
  std::vector<double> obs_;
};

/// Demo transitions pre-encoded for repeated minibatch draws.
struct EncodedDemos {
  Matrix latents;
  Matrix next_latents;
  std::vector<int> actions;
  std::vector<double> rewards;
  std::vector<char> terminated;

  EncodedDemos(const DemoStore& store, const Encoder& enc) {
    std::vector<Transition> flat;
    for (const auto* t : store.transitions()) flat.push_back(*t);
    if (flat.empty()) throw ContractError("demo store is empty");
    Batch b = make_batch(flat, enc);
    latents = std::move(b.latents);
    next_latents = std::move(b.next_latents);
    actions = std::move(b.actions);
    rewards = std::move(b.rewards);
    terminated = std::move(b.terminated);
  }

  Batch sample(std::size_t n, Rng& rng) const {
    Batch b;
    b.latents = Matrix(n, latents.cols);
    b.next_latents = Matrix(n, next_latents.cols);
    for (std::size_t i = 0; i < n; ++i) {
      const auto j = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(actions.size()) - 1));
      std::copy(latents.row(j).begin(), latents.row(j).end(), b.latents.row(i).begin());
      std::copy(next_latents.row(j).begin(), next_latents.row(j).end(), b.next_latents.row(i).begin());
      b.actions.push_back(actions[j]);
      b.rewards.push_back(rewards[j]);
      b.terminated.push_back(terminated[j]);
    }
    return b;
  }
};

class RunState {
 public:
  RunState(const RunConfig& cfg, const GridWorld& env, const Encoder& enc)
      : cfg_(cfg), env_(env), enc_(enc), start_(std::chrono::steady_clock::now()) {}

  EvalResult eval(const Agent& agent, int episodes) const {
    return evaluate(greedy_policy(agent, enc_), env_, episodes, derive_seed(cfg_.seed, kEvalStream));
  }

  void emit(long long step, const Agent& agent, std::optional<double> eps) {
    const auto e = eval(agent, cfg_.eval_episodes);
    MetricRow row;
    row.step = step;
    row.mean_return = e.mean_return;
    row.std_return = e.std_return;
    row.success_rate = e.success_rate;
    row.epsilon = eps;
    losses.flush(row);
    if (cfg_.wall_clock) {
      row.wall_secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }
    rows.push_back(std::move(row));
  }

  bool due(long long step) const { return step % cfg_.eval_cadence() == 0 || step == cfg_.total_steps; }

  std::vector<MetricRow> rows;
  LossAccumulator losses;

 private:
  const RunConfig& cfg_;
  const GridWorld& env_;
  const Encoder& enc_;
  std::chrono::steady_clock::time_point start_;
};

/// Behavioral cloning on the demo store with best-snapshot retention.
/// `on_step(step, agent)` runs after each gradient step (and once at 0).
std::unique_ptr<BcAgent> train_bc(const EncodedDemos& demos, const Encoder& enc, const GridWorld& env,
                                  const Hyperparams& hp, long long steps, std::size_t latent_dim, int n_actions,
                                  Rng& init_rng, Rng& sample_rng, std::uint64_t eval_seed,
                                  const std::function<void(long long, BcAgent&, const LossBreakdown*)>& on_step) {
  auto agent = std::make_unique<BcAgent>(latent_dim, n_actions, hp, init_rng);
  auto score = [&]() {
    return evaluate(greedy_policy(*agent, enc), env, hp.teacher_eval_episodes, eval_seed).mean_return;
  };
  DenseNet best = agent->policy_net();
  double best_score = score();
  if (on_step) on_step(0, *agent, nullptr);
  for (long long s = 1; s <= steps; ++s) {
    const auto loss = agent->update(demos.sample(hp.batch_size, sample_rng));
    if (s % hp.bc_eval_period == 0 || s == steps) {
      const double m = score();
      if (m > best_score) {
        best_score = m;
        best = agent->policy_net();
      }
    }
    if (on_step) on_step(s, *agent, &loss);
  }
  agent->set_policy(std::move(best));
  return agent;
}

[[noreturn]] void rethrow_at(const std::string& where) {
  try {
    throw;
  } catch (const ConfigError& e) {
    throw ConfigError(where + ": " + e.what());
  } catch (const std::exception& e) {
    throw std::runtime_error(where + ": " + e.what());
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

ordered_json row_to_json(const MetricRow& r) {
  ordered_json j = ordered_json::object();
  j["step"] = r.step;
  j["mean_return"] = r.mean_return;
  j["std_return"] = r.std_return;
  j["success_rate"] = r.success_rate;
  j["epsilon"] = optional_json(r.epsilon);
  j["loss_td"] = optional_json(r.loss_td);
  j["loss_ae"] = optional_json(r.loss_ae);
  j["loss_distill"] = optional_json(r.loss_distill);
  j["loss_actor"] = optional_json(r.loss_actor);
  j["wall_secs"] = optional_json(r.wall_secs);
  return j;
}

MetricRow row_from_json(const ordered_json& j) {
  MetricRow r;
  r.step = j.at("step").get<long long>();
  r.mean_return = j.at("mean_return").get<double>();
  r.std_return = j.at("std_return").get<double>();
  r.success_rate = j.at("success_rate").get<double>();
  r.epsilon = optional_from(j.at("epsilon"));
  r.loss_td = optional_from(j.at("loss_td"));
  r.loss_ae = optional_from(j.at("loss_ae"));
  r.loss_distill = optional_from(j.at("loss_distill"));
  r.loss_actor = optional_from(j.at("loss_actor"));
  r.wall_secs = optional_from(j.at("wall_secs"));
  return r;
}

}  // namespace

double sample_std(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double m = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

EvalResult evaluate(const Policy& policy, const GridWorld& env, int n_episodes, std::uint64_t seed) {
  if (n_episodes < 1) throw ContractError("evaluate: n_episodes must be >= 1");
  EvalResult res;
  int successes = 0;
  for (int i = 0; i < n_episodes; ++i) {
    auto [state, obs] = reset(env, derive_seed(seed, static_cast<std::uint64_t>(i)));
    double ret = 0.0;
    StepResult last;
    while (!state.done) {
      last = step(env, state, policy(obs));
      ret += last.reward;
      obs = last.observation;
    }
    successes += episode_success(env, state, last) ? 1 : 0;
    res.returns.push_back(ret);
  }
  res.mean_return = std::accumulate(res.returns.begin(), res.returns.end(), 0.0) / n_episodes;
  res.std_return = sample_std(res.returns);
  res.success_rate = static_cast<double>(successes) / n_episodes;
  return res;
}

Policy greedy_policy(const Agent& agent, const Encoder& enc) {
  return [&agent, &enc](std::span<const double> obs) { return agent.greedy_action(encode(enc, obs)); };
}

Encoder make_encoder(const EncoderConfig& cfg, const GridWorld& env) {
  switch (cfg.kind) {
    case EncoderKind::kIdentity:
      return Encoder::identity(env.obs_dim());
    case EncoderKind::kStandardize:
      return Encoder::standardize(random_policy_observations(env, cfg.fit_episodes, cfg.fit_seed),
                                  "standardize-" + env.id() + "-s" + std::to_string(cfg.fit_seed));
    case EncoderKind::kFile: {
      if (!std::filesystem::exists(cfg.path)) throw ConfigError("encoder file not found: " + cfg.path.string());
      Encoder enc = load_encoder(cfg.path);
      if (enc.input_dim() != env.obs_dim()) {
        throw ConfigError("encoder expects " + std::to_string(enc.input_dim()) + " inputs, environment emits " +
                          std::to_string(env.obs_dim()));
      }
      return enc;
    }
  }
  throw ConfigError("unknown encoder kind");
}

RunInputs prepare_inputs(const RunConfig& cfg) {
  cfg.validate();
  const GridWorld env = build_env(cfg.env);
  RunInputs in;
  in.encoder = std::make_shared<const Encoder>(make_encoder(cfg.encoder, env));
  if (requires_demos(cfg.agent)) {
    if (!std::filesystem::exists(cfg.demos)) throw ConfigError("demo store not found: " + cfg.demos.string());
    auto store = std::make_shared<DemoStore>(load_demos(cfg.demos));
    if (store->env_id != env.id()) {
      throw ConfigError("demo store was recorded on '" + store->env_id + "', run uses '" + env.id() + "'");
    }
    in.demos = std::move(store);
    if (cfg.agent == AgentKind::kCdqlAe) {
      in.index = std::make_shared<const LatentIndex>(build_index(*in.demos, *in.encoder, cfg.hp.metric));
    }
  }
  return in;
}

std::filesystem::path run_directory(const RunConfig& cfg, const std::string& env_id) {
  return cfg.out_dir / env_id / cfg.agent_label() / ("seed" + std::to_string(cfg.seed));
}

std::string format_metrics_csv(const std::vector<MetricRow>& rows) {
  std::ostringstream os;
  os << kMetricsHeader << '\n';
  for (const auto& r : rows) {
    os << r.step << ',' << format_number(r.mean_return) << ',' << format_number(r.std_return) << ','
       << format_number(r.success_rate) << ',' << format_optional(r.epsilon) << ',' << format_optional(r.loss_td)
       << ',' << format_optional(r.loss_ae) << ',' << format_optional(r.loss_distill) << ','
       << format_optional(r.loss_actor) << ',' << format_optional(r.wall_secs) << '\n';
  }
  return os.str();
}

RunRecord train_run(const RunConfig& cfg, const RunInputs& inputs, bool write_files) {
  cfg.validate();
  const GridWorld env = build_env(cfg.env);
  if (!inputs.encoder) throw ContractError("train_run: no encoder");
  const Encoder& enc = *inputs.encoder;
  if (enc.input_dim() != env.obs_dim()) throw ConfigError("encoder input dimension does not match the environment");
  if (requires_demos(cfg.agent) && !inputs.demos) {
    throw ConfigError("agent '" + to_string(cfg.agent) + "' requires a demo store");
  }
  const Hyperparams& hp = cfg.hp;
  const std::size_t latent_dim = enc.latent_dim();
  const int n_actions = env.action_count();

  Rng init_rng(derive_seed(cfg.seed, kInitStream));
  Rng act_rng(derive_seed(cfg.seed, kActStream));
  Rng sample_rng(derive_seed(cfg.seed, kSampleStream));

  RunRecord rec;
  rec.config = cfg;
  rec.env_id = env.id();
  rec.encoder_id = enc.id();
  RunState run(cfg, env, enc);
  std::unique_ptr<Agent> agent;
  std::string phase = "setup";

  try {
    std::optional<EncodedDemos> demos;
    if (inputs.demos) demos.emplace(*inputs.demos, enc);

    if (cfg.agent == AgentKind::kBc) {
      phase = "bc";
      auto bc = train_bc(*demos, enc, env, hp, cfg.total_steps, latent_dim, n_actions, init_rng, sample_rng,
                         derive_seed(cfg.seed, kEvalStream), [&](long long s, BcAgent& a, const LossBreakdown* l) {
                           if (l) run.losses.add(*l);
                           if (s == 0 || run.due(s)) run.emit(s, a, std::nullopt);
                         });
      rec.gradient_steps = bc->gradient_steps();
      agent = std::move(bc);
    } else {
      ReplayBuffer buffer(hp.buffer_capacity);
      switch (cfg.agent) {
        case AgentKind::kCdql:
        case AgentKind::kHer: {
          auto a = std::make_unique<CdqlAgent>(latent_dim, n_actions, hp, init_rng);
          a->set_kind(cfg.agent);
          agent = std::move(a);
          break;
        }
        case AgentKind::kCdqlAe: {
          auto index = inputs.index ? inputs.index
                                    : std::make_shared<const LatentIndex>(build_index(*inputs.demos, enc, hp.metric));
          agent = std::make_unique<AeAgent>(latent_dim, n_actions, hp, init_rng, std::move(index));
          break;
        }
        case AgentKind::kQdagger: {
          phase = "qdagger teacher";
          Rng t_init(derive_seed(cfg.seed, kTeacherInitStream));
          Rng t_sample(derive_seed(cfg.seed, kTeacherSampleStream));
          std::shared_ptr<const BcAgent> teacher = train_bc(*demos, enc, env, hp, hp.bc_steps, latent_dim, n_actions,
                                                            t_init, t_sample, derive_seed(cfg.seed, kEvalStream), {});
          rec.teacher_gradient_steps = teacher->gradient_steps();
          phase = "qdagger teacher-collect";
          Interaction collect(env, derive_seed(cfg.seed, kTeacherEpisodeStream));
          for (long long s = 0; s < hp.teacher_steps; ++s) {
            buffer.push(collect.step(teacher->greedy_action(encode(enc, collect.obs()))));
          }
          auto student = std::make_unique<QdaggerAgent>(latent_dim, n_actions, hp, init_rng, teacher);
          phase = "qdagger offline-distill";
          if (hp.qdagger_offline_steps > 0 && buffer.empty()) throw ContractError("teacher collected no transitions");
          for (long long g = 1; g <= hp.qdagger_offline_steps; ++g) {
            student->update(make_batch(buffer.sample(hp.batch_size, sample_rng), enc));
            if (g % hp.target_period == 0) student->sync_target();
          }
          rec.offline_gradient_steps = hp.qdagger_offline_steps;
          agent = std::move(student);
          break;
        }
        case AgentKind::kAwac: {
          auto a = std::make_unique<AwacAgent>(latent_dim, n_actions, hp, init_rng);
          for (const auto* t : inputs.demos->transitions()) buffer.push(*t);
          phase = "awac offline";
          for (long long g = 1; g <= hp.awac_offline_steps; ++g) {
            a->update(demos->sample(hp.batch_size, sample_rng));
            if (g % hp.target_period == 0) a->sync_target();
          }
          rec.offline_gradient_steps = hp.awac_offline_steps;
          agent = std::move(a);
          break;
        }
        case AgentKind::kBc:
          break;
      }
      const long long offline_before = agent->gradient_steps();

      phase = "online";
      auto eps_for = [&](long long t) -> std::optional<double> {
        if (!agent->uses_epsilon()) return std::nullopt;
        return eps_at(t, cfg.total_steps, hp);
      };
      run.emit(0, *agent, eps_for(0));
      const auto preload = static_cast<long long>(buffer.size());
      const long long warmup = std::max<long long>(0, static_cast<long long>(hp.batch_size) - preload);
      Interaction interaction(env, derive_seed(cfg.seed, kEpisodeStream));
      for (long long t = 1; t <= cfg.total_steps; ++t) {
        try {
          const auto latent = encode(enc, interaction.obs());
          const int action = agent->explore_action(latent, eps_for(t - 1).value_or(0.0), act_rng);
          buffer.push(interaction.step(action));
          if (t > warmup && (t - warmup) % hp.train_frequency == 0) {
            auto sampled = buffer.sample(hp.batch_size, sample_rng);
            if (cfg.agent == AgentKind::kHer) sampled = her_augment(std::move(sampled), buffer, hp.her_extra, sample_rng);
            run.losses.add(agent->update(make_batch(sampled, enc)));
          }
          if (t % hp.target_period == 0) agent->sync_target();
          if (run.due(t)) run.emit(t, *agent, eps_for(t));
        } catch (...) {
          rethrow_at("step " + std::to_string(t));
        }
      }
      rec.gradient_steps = agent->gradient_steps() - offline_before;
    }
  } catch (...) {
    rethrow_at(to_string(cfg.agent) + " run (seed " + std::to_string(cfg.seed) + ", " + phase + ")");
  }
  rec.rows = std::move(run.rows);

  if (write_files) {
    rec.run_dir = run_directory(cfg, rec.env_id);
    std::filesystem::create_directories(rec.run_dir);
    write_text(rec.run_dir / "metrics.csv", format_metrics_csv(rec.rows));
    save_encoder(enc, rec.run_dir / "encoder.jsonl");
    rec.snapshot = rec.run_dir / "policy.jsonl";
    save_policy_snapshot(rec.snapshot, agent->policy_net(), enc, cfg.agent, rec.env_id);
    ordered_json j = ordered_json::object();
    j["config"] = config_to_json(cfg);
    j["env_id"] = rec.env_id;
    j["encoder_id"] = rec.encoder_id;
    j["gradient_steps"] = rec.gradient_steps;
    j["offline_gradient_steps"] = rec.offline_gradient_steps;
    j["teacher_gradient_steps"] = rec.teacher_gradient_steps;
    j["snapshot"] = "policy.jsonl";
    ordered_json rows = ordered_json::array();
    for (const auto& r : rec.rows) rows.push_back(row_to_json(r));
    j["rows"] = std::move(rows);
    write_text(rec.run_dir / "run.json", j.dump(2) + "\n");
  }
  return rec;
}

RunRecord train_run(const RunConfig& cfg, bool write_files) { return train_run(cfg, prepare_inputs(cfg), write_files); }

std::vector<RunRecord> train_seeds(const RunConfig& base, const std::vector<std::uint64_t>& seeds, int parallelism,
                                   bool write_files) {
  if (seeds.empty()) throw ConfigError("no seeds given");
  const RunInputs inputs = prepare_inputs(base);
  std::vector<RunRecord> records(seeds.size());
  std::vector<std::exception_ptr> errors(seeds.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next++; i < seeds.size(); i = next++) {
      try {
        RunConfig cfg = base;
        cfg.seed = seeds[i];
        records[i] = train_run(cfg, inputs, write_files);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t n_workers = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(1, parallelism)), 1, seeds.size());
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < n_workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return records;
}

RunRecord load_run(const std::filesystem::path& run_dir) {
  const auto path = run_dir / "run.json";
  std::ifstream in(path);
  if (!in) throw FormatError("no run.json in '" + run_dir.string() + "'");
  RunRecord rec;
  try {
    const auto j = ordered_json::parse(in);
    rec.config = config_from_json(j.at("config"));
    rec.env_id = j.at("env_id").get<std::string>();
    rec.encoder_id = j.at("encoder_id").get<std::string>();
    rec.gradient_steps = j.at("gradient_steps").get<long long>();
    rec.offline_gradient_steps = j.at("offline_gradient_steps").get<long long>();
    rec.teacher_gradient_steps = j.at("teacher_gradient_steps").get<long long>();
    rec.snapshot = run_dir / j.at("snapshot").get<std::string>();
    for (const auto& r : j.at("rows")) rec.rows.push_back(row_from_json(r));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  rec.run_dir = run_dir;
  return rec;
}

void save_policy_snapshot(const std::filesystem::path& path, const DenseNet& net, const Encoder& enc, AgentKind kind,
                          const std::string& env_id) {
  ArrayBundle bundle;
  bundle.meta["kind"] = "policy";
  bundle.meta["agent"] = to_string(kind);
  bundle.meta["env_id"] = env_id;
  bundle.meta["encoder_id"] = enc.id();
  bundle.meta["encoder_file"] = "encoder.jsonl";
  append_net(bundle, "policy", net);
  save_bundle(bundle, path);
}

PolicySnapshot load_policy_snapshot(const std::filesystem::path& path) {
  const auto bundle = load_bundle(path);
  try {
    if (bundle.meta.at("kind").get<std::string>() != "policy") throw FormatError(path.string() + ": not a policy snapshot");
    const auto enc_path = path.parent_path() / bundle.meta.at("encoder_file").get<std::string>();
    return {extract_net(bundle, "policy"), load_encoder(enc_path), bundle.meta.at("agent").get<std::string>(),
            bundle.meta.at("env_id").get<std::string>()};
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": bad snapshot header: " + e.what());
  }
}

}  // namespace aekick
