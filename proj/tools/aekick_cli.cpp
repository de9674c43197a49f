// aekick: demonstrations, encoders, training runs and reports from the shell.
//
// Exit codes: 0 success, 1 configuration error, 2 runtime error.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "aekick/config.hpp"
#include "aekick/demonstrations.hpp"
#include "aekick/encoders.hpp"
#include "aekick/harness.hpp"
#include "aekick/report.hpp"

namespace {

using namespace aekick;

struct EnvArgs {
  std::string name = "room-nav";
  std::uint64_t layout_seed = 0;
  int view_radius = -1;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--env", name, "room-nav, four-rooms-nav, maze-nav, corridor-nav or collect-grid")
        ->capture_default_str();
    cmd->add_option("--layout-seed", layout_seed, "doorway/item layout seed")->capture_default_str();
    cmd->add_option("--view-radius", view_radius, "egocentric view radius (-1: full view)")->capture_default_str();
  }
  EnvConfig config() const { return {name, layout_seed, view_radius, std::nullopt}; }
};

int collect_demos(const EnvArgs& env_args, int n_traj, std::size_t budget, double noise, std::uint64_t seed,
                  const std::string& out) {
  const GridWorld env = build_env(env_args.config());
  const DemoStore store = n_traj > 0 ? generate_demos(env, noise, n_traj, seed)
                                     : generate_demos_for_budget(env, noise, budget, seed);
  save_demos(store, out);
  if (auto w = budget_warning(store, budget)) std::cerr << "warning: " << *w << '\n';
  std::cout << "wrote " << store.trajectories.size() << " trajectories (" << store.transition_count()
            << " transitions) to " << out << '\n';
  return 0;
}

struct EncoderArgs {
  std::string kind = "vae";
  std::size_t latent_dim = 16;
  std::vector<std::size_t> hidden = {64};
  int corpus_episodes = 50;
  std::uint64_t seed = 0;
  VaeTrainConfig vae;
};

int train_encoder(const EnvArgs& env_args, const EncoderArgs& a, const std::string& out) {
  const GridWorld env = build_env(env_args.config());
  const Matrix corpus = random_policy_observations(env, a.corpus_episodes, a.seed);
  if (a.kind == "standardize") {
    save_encoder(Encoder::standardize(corpus, "standardize-" + env.id() + "-s" + std::to_string(a.seed)), out);
    std::cout << "standardize encoder fitted on " << corpus.rows << " observations -> " << out << '\n';
    return 0;
  }
  if (a.kind != "vae") throw ConfigError("unknown encoder kind '" + a.kind + "' (vae or standardize)");
  a.vae.validate();
  Rng rng(a.seed);
  VaeEncoder model = make_vae(env.obs_dim(), a.latent_dim, a.hidden, rng);
  const auto log = train_vae(model, corpus, a.vae, rng);
  for (const auto& e : log) {
    std::printf("epoch %3d  beta %.3g  recon %.6f  kl %.4f\n", e.epoch, e.beta, e.mean_loss.reconstruction,
                e.mean_loss.kl);
  }
  save_encoder(Encoder::vae(std::move(model), "vae-" + env.id() + "-d" + std::to_string(a.latent_dim) + "-s" +
                                                  std::to_string(a.seed)),
               out);
  std::cout << "wrote " << out << '\n';
  return 0;
}

int train(const std::string& config_path, const std::vector<std::uint64_t>& seeds, int parallel) {
  const RunConfig cfg = load_config(config_path);
  std::vector<std::uint64_t> run_seeds = seeds.empty() ? std::vector<std::uint64_t>{cfg.seed} : seeds;
  if (requires_demos(cfg.agent) && std::filesystem::exists(cfg.demos)) {
    if (auto w = budget_warning(load_demos(cfg.demos))) std::cerr << "warning: " << *w << '\n';
  }
  const auto records = train_seeds(cfg, run_seeds, parallel);
  for (const auto& r : records) {
    const auto& last = r.rows.back();
    std::printf("%s  final mean return %.3f  success %.2f  gradient steps %lld\n", r.run_dir.string().c_str(),
                last.mean_return, last.success_rate, r.gradient_steps);
  }
  return 0;
}

int evaluate_snapshot(const std::string& snapshot, const EnvArgs& env_args, int episodes, std::uint64_t seed) {
  const PolicySnapshot snap = load_policy_snapshot(snapshot);
  const GridWorld env = build_env(env_args.config());
  if (snap.env_id != env.id()) {
    throw ConfigError("snapshot was trained on '" + snap.env_id + "', not '" + env.id() + "'");
  }
  const auto policy = [&](std::span<const double> obs) { return argmax(predict(snap.net, encode(snap.encoder, obs))); };
  const EvalResult e = evaluate(policy, env, episodes, seed);
  std::printf("%s on %s: mean return %.3f ± %.3f over %d episodes, success rate %.2f\n", snap.agent.c_str(),
              env.id().c_str(), e.mean_return, e.std_return, episodes, e.success_rate);
  return 0;
}

std::vector<RunRecord> load_runs(const std::vector<std::string>& roots) {
  std::vector<RunRecord> out;
  for (const auto& root : roots) {
    for (const auto& dir : find_run_dirs(root)) out.push_back(load_run(dir));
  }
  return out;
}

int report(const std::vector<std::string>& runs, const std::vector<long long>& checkpoints, const std::string& csv) {
  const ReportTable table = report_table(load_runs(runs), checkpoints);
  std::cout << table.to_text();
  if (!csv.empty()) {
    std::ofstream out(csv);
    if (!out) throw std::runtime_error("cannot write '" + csv + "'");
    out << table.to_csv();
  }
  return 0;
}

int compare(const std::string& baseline, const std::string& treatment, double threshold) {
  const Comparison c = compare_runs(load_runs({baseline}), load_runs({treatment}), threshold);
  std::cout << c.to_text();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Demonstration-kickstarted off-policy RL on grid worlds"};
  app.require_subcommand(1);

  EnvArgs demo_env;
  int n_traj = 0;
  std::size_t budget = kDemoBudget;
  double noise = kDefaultExpertNoise;
  std::uint64_t demo_seed = 0;
  std::string demo_out;
  auto* demos = app.add_subcommand("collect-demos", "record scripted-expert trajectories");
  demo_env.add_to(demos);
  demos->add_option("--n-traj", n_traj, "episodes to record (0: fill the transition budget)")->capture_default_str();
  demos->add_option("--budget", budget, "transition budget when --n-traj is 0")->capture_default_str();
  demos->add_option("--noise", noise, "expert noise epsilon_e")->capture_default_str();
  demos->add_option("--seed", demo_seed)->capture_default_str();
  demos->add_option("--out", demo_out)->required();

  EnvArgs enc_env;
  EncoderArgs enc;
  std::string enc_out;
  auto* encoder = app.add_subcommand("train-encoder", "fit a feature extractor on random-policy observations");
  enc_env.add_to(encoder);
  encoder->add_option("--kind", enc.kind, "vae or standardize")->capture_default_str();
  encoder->add_option("--latent-dim", enc.latent_dim)->capture_default_str();
  encoder->add_option("--hidden", enc.hidden, "hidden widths")->delimiter(',');
  encoder->add_option("--corpus-episodes", enc.corpus_episodes)->capture_default_str();
  encoder->add_option("--epochs", enc.vae.epochs)->capture_default_str();
  encoder->add_option("--batch-size", enc.vae.batch_size)->capture_default_str();
  encoder->add_option("--lr", enc.vae.learning_rate)->capture_default_str();
  encoder->add_option("--beta-max", enc.vae.beta_max)->capture_default_str();
  encoder->add_option("--ramp-start", enc.vae.ramp_start)->capture_default_str();
  encoder->add_option("--ramp-end", enc.vae.ramp_end)->capture_default_str();
  encoder->add_option("--seed", enc.seed)->capture_default_str();
  encoder->add_option("--out", enc_out)->required();

  std::string config_path;
  std::vector<std::uint64_t> seeds;
  int parallel = 1;
  auto* trainer = app.add_subcommand("train", "train one run per seed");
  trainer->add_option("--config", config_path)->required();
  trainer->add_option("--seeds", seeds, "comma-separated seeds (default: the config's seed)")->delimiter(',');
  trainer->add_option("--parallel", parallel, "worker threads")->capture_default_str();

  std::string snapshot;
  EnvArgs eval_env;
  int episodes = 10;
  std::uint64_t eval_seed = 0;
  auto* evaluator = app.add_subcommand("evaluate", "greedy evaluation of a policy snapshot");
  evaluator->add_option("--snapshot", snapshot)->required();
  eval_env.add_to(evaluator);
  evaluator->add_option("--episodes", episodes)->capture_default_str();
  evaluator->add_option("--seed", eval_seed)->capture_default_str();

  std::vector<std::string> run_dirs;
  std::vector<long long> checkpoints;
  std::string csv_out;
  auto* reporter = app.add_subcommand("report", "mean ± std table at checkpoints");
  reporter->add_option("--runs", run_dirs, "run directories or their ancestors")->required();
  reporter->add_option("--checkpoints", checkpoints)->required()->delimiter(',');
  reporter->add_option("--csv", csv_out, "also write the table as CSV");

  std::string baseline, treatment;
  double threshold = 0.8;
  auto* comparer = app.add_subcommand("compare", "median steps-to-threshold speedup");
  comparer->add_option("--baseline", baseline)->required();
  comparer->add_option("--treatment", treatment)->required();
  comparer->add_option("--threshold", threshold)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*demos) return collect_demos(demo_env, n_traj, budget, noise, demo_seed, demo_out);
    if (*encoder) return train_encoder(enc_env, enc, enc_out);
    if (*trainer) return train(config_path, seeds, parallel);
    if (*evaluator) return evaluate_snapshot(snapshot, eval_env, episodes, eval_seed);
    if (*reporter) return report(run_dirs, checkpoints, csv_out);
    if (*comparer) return compare(baseline, treatment, threshold);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
