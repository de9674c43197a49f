#pragma once

// Losses, updates and agent variants: clipped double-Q learning, the
// adversarial-estimate penalty (three couplings), QDagger distillation,
// discrete AWAC, HER-style relabeling and behavioral cloning.

#include <cmath>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "aekick/encoders.hpp"
#include "aekick/numerics.hpp"
#include "aekick/replay_buffer.hpp"
#include "aekick/retrieval.hpp"

namespace aekick {

enum class AgentKind { kCdql, kCdqlAe, kQdagger, kAwac, kHer, kBc };
enum class AeMode { kTargetShaping, kQRegression, kKlPenalty };

std::string to_string(AgentKind k);
AgentKind agent_kind_from_string(const std::string& s);
std::string to_string(AeMode m);
AeMode ae_mode_from_string(const std::string& s);

bool requires_demos(AgentKind k);

/// Step budgets are expressed at a 2.5M-step reference scale; see co_scaled().
inline constexpr long long kReferenceTotalSteps = 2'500'000;

struct Hyperparams {
  double gamma = 0.99;
  double learning_rate = 1e-4;
  double tau = 1.0;
  std::size_t buffer_capacity = 250000;
  std::size_t batch_size = 32;
  double eps_start = 1.0;
  double eps_end = 0.05;
  double exploration_fraction = 0.1;
  long long target_period = 1000;
  long long train_frequency = 4;
  std::vector<std::size_t> hidden = {256, 256};
  bool twin_critic = false;

  // adversarial estimates
  double ae_lambda = 1.0;
  AeMode ae_mode = AeMode::kTargetShaping;
  std::size_t k_neighbors = 8;
  DistanceMetric metric = DistanceMetric::kSquaredL2;

  // QDagger
  double qdagger_lambda = 1.0;
  long long teacher_steps = 125000;
  long long qdagger_offline_steps = 125000;
  double distill_temperature = 1.0;
  int teacher_eval_episodes = 10;

  // AWAC
  double awac_lambda = 0.3;
  long long awac_offline_steps = 100000;
  double awac_weight_cap = std::exp(20.0);

  // HER
  std::size_t her_extra = 16;

  // behavioral cloning (also the QDagger teacher)
  long long bc_steps = 5000;
  long long bc_eval_period = 500;
  double bc_learning_rate = 1e-3;

  void validate() const;
};

/// Scales buffer capacity and the teacher/offline budgets by
/// total_steps / 2.5M; the target period stays fixed.
Hyperparams co_scaled(Hyperparams hp, long long total_steps);

/// Components absent for a kind stay empty. `total` is td + ae + distill +
/// actor over the present components, except that in target-shaping mode
/// `ae` reports the batch-mean Z and does not enter the total (the penalty
/// already lives in the TD targets).
struct LossBreakdown {
  std::optional<double> td;
  std::optional<double> ae;
  std::optional<double> distill;
  std::optional<double> actor;
  double total = 0.0;
};

struct Batch {
  Matrix latents;
  Matrix next_latents;
  std::vector<int> actions;
  std::vector<double> rewards;
  std::vector<char> terminated;

  std::size_t size() const { return actions.size(); }
};

Batch make_batch(std::span<const Transition> transitions, const Encoder& enc);

/// A scalar loss over network outputs with its per-sample output gradient
/// (row b is d loss_b / d output_b, where loss = mean_b loss_b).
struct OutputLoss {
  double value = 0.0;
  Matrix output_grad;
};

/// Forward `net` on `inputs`, evaluate `loss` on the outputs, backprop.
LossAndGrad net_loss(const DenseNet& net, const Matrix& inputs,
                     const std::function<OutputLoss(const Matrix&)>& loss);

Matrix softmax_rows(const Matrix& logits, double temperature = 1.0);
int argmax(std::span<const double> values);  // ties -> lowest index

double eps_at(long long t, long long total_steps, const Hyperparams& hp);

int act_eps_greedy(const DenseNet& q, std::span<const double> latent, double eps, Rng& rng);

/// min(Q_theta(s', a*), Q_phi(s', a*)) with a* = argmax_a Q_theta(s', a).
std::vector<double> clipped_bootstrap(const Matrix& next_latents, const DenseNet& q_theta,
                                      const DenseNet& q_phi);

/// y = r + gamma * clipped bootstrap * (1 - terminated).
std::vector<double> clipped_target(const Batch& batch, const DenseNet& q_theta, const DenseNet& q_phi,
                                   double gamma);

/// mean_b (y_b - Q(s_b, a_b))^2 on a Q output matrix.
OutputLoss td_loss(const Matrix& q_out, std::span<const int> actions, std::span<const double> y);

LossBreakdown td_step(DenseNet& q, AdamState& opt, const Batch& batch, std::span<const double> y);

/// Z = mean over the k nearest demo transitions of Q_phi(s', a') minus the
/// transition's observed reward.
double adversarial_estimate(std::span<const double> obs, double reward, const LatentIndex& index,
                            const QEvaluator& q_target, const Encoder& enc, std::size_t k);

struct AeInputs {
  std::vector<double> z;              // per batch row
  std::vector<double> expert_values;  // neighbour-mean Q_phi
  Matrix expert_policy;               // per row search-policy distribution
};

struct AeApplication {
  std::vector<double> targets;
  std::optional<OutputLoss> auxiliary;  // q-regression / kl-penalty
};

/// target-shaping: y' = (r - lambda * Z) + gamma * bootstrap * (1 - terminated).
/// q-regression: clipped targets plus lambda * mean((Q(s,a) - expert)^2).
/// kl-penalty: clipped targets plus lambda * mean KL(softmax Q(s) || pi_E).
AeApplication ae_apply(const Batch& batch, const AeInputs& inputs, double lambda, AeMode mode,
                       const DenseNet& q_theta, const DenseNet& q_phi, double gamma);

OutputLoss q_regression_loss(const Matrix& q_out, std::span<const int> actions,
                             std::span<const double> expert_values, double lambda);

/// Forward KL(softmax(q) || expert), expert floored at 1e-12.
OutputLoss kl_penalty_loss(const Matrix& q_out, const Matrix& expert_policy, double lambda);

/// KL(p || softmax(logits / temperature)) averaged over rows; student
/// probabilities are floored at 1e-12.
OutputLoss distill_loss(const Matrix& teacher_probs, const Matrix& student_logits, double temperature);

enum class QdaggerPhase { kTeacherCollect, kOfflineDistill, kOnline };
std::string to_string(QdaggerPhase p);

/// Phase for a lifecycle step counting teacher-collected transitions, then
/// offline gradient steps, then online steps.
QdaggerPhase qdagger_schedule(long long step, const Hyperparams& hp);

/// min(exp(A / lambda), cap); NaN or +inf advantages map to the cap.
double awac_weight(double advantage, double lambda, double cap);

/// -mean_b log pi(a_b|s_b) * w_b with A = Q(s,a) - sum_a pi(a|s) Q(s,a);
/// the weights are treated as constants.
OutputLoss awac_actor_loss(const Matrix& actor_logits, const Matrix& critic_q, std::span<const int> actions,
                           double lambda, double cap);

/// Appends n_extra uniformly sampled buffer transitions relabeled to reward 1
/// and terminated.
std::vector<Transition> her_augment(std::vector<Transition> batch, const ReplayBuffer& buffer,
                                    std::size_t n_extra, Rng& rng);

/// Mean cross-entropy of softmax(logits) against the demo actions.
OutputLoss bc_loss(const Matrix& logits, std::span<const int> actions);

double discounted_return(std::span<const double> rewards, double gamma);

// ---------------------------------------------------------------------------
// Agents

class Agent {
 public:
  virtual ~Agent() = default;
  virtual AgentKind kind() const = 0;
  virtual int explore_action(std::span<const double> latent, double eps, Rng& rng) = 0;
  virtual int greedy_action(std::span<const double> latent) const;
  virtual LossBreakdown update(const Batch& batch) = 0;
  virtual void sync_target() {}
  virtual bool uses_epsilon() const { return true; }
  /// Network whose argmax is the greedy policy (Q-values or logits).
  virtual const DenseNet& policy_net() const = 0;
  long long gradient_steps() const { return gradient_steps_; }

 protected:
  long long gradient_steps_ = 0;
};

class CdqlAgent : public Agent {
 public:
  CdqlAgent(std::size_t latent_dim, int n_actions, const Hyperparams& hp, Rng& init_rng);

  AgentKind kind() const override { return kind_; }
  void set_kind(AgentKind k) { kind_ = k; }
  int explore_action(std::span<const double> latent, double eps, Rng& rng) override;
  LossBreakdown update(const Batch& batch) override;
  void sync_target() override;
  const DenseNet& policy_net() const override { return online_; }

  const DenseNet& online() const { return online_; }
  const DenseNet& target() const { return target_; }
  const Hyperparams& hyperparams() const { return hp_; }

 protected:
  /// Net pair used for bootstrap targets: (theta, phi), or the two target
  /// critics in twin mode.
  std::pair<const DenseNet*, const DenseNet*> bootstrap_pair() const;
  /// Applies one Adam step on the online critic(s) for targets `y` plus an
  /// optional auxiliary loss on the first critic's outputs.
  LossBreakdown apply_update(const Batch& batch, std::span<const double> y,
                             const std::optional<OutputLoss>& auxiliary);

  Hyperparams hp_;
  AgentKind kind_ = AgentKind::kCdql;
  DenseNet online_;
  DenseNet target_;
  AdamState opt_;
  std::optional<DenseNet> online2_;
  std::optional<DenseNet> target2_;
  std::optional<AdamState> opt2_;
};

/// cDQL with the adversarial-estimate penalty. Neighbour sets are memoized
/// per latent (the index is immutable); Q_phi values of every index row are
/// refreshed whenever the target network changes.
class AeAgent : public CdqlAgent {
 public:
  AeAgent(std::size_t latent_dim, int n_actions, const Hyperparams& hp, Rng& init_rng,
          std::shared_ptr<const LatentIndex> index);

  LossBreakdown update(const Batch& batch) override;
  void sync_target() override;

  AeInputs compute_inputs(const Batch& batch);
  const std::vector<double>& row_values() const { return row_values_; }

 private:
  struct Neighbours {
    QueryResult result;
    std::vector<double> policy;
  };
  const Neighbours& neighbours(std::span<const double> latent);

  std::shared_ptr<const LatentIndex> index_;
  std::vector<double> row_values_;
  std::unordered_map<std::string, Neighbours> cache_;
};

class BcAgent : public Agent {
 public:
  BcAgent(std::size_t latent_dim, int n_actions, const Hyperparams& hp, Rng& init_rng);

  AgentKind kind() const override { return AgentKind::kBc; }
  int explore_action(std::span<const double> latent, double eps, Rng& rng) override;
  LossBreakdown update(const Batch& batch) override;
  bool uses_epsilon() const override { return false; }
  const DenseNet& policy_net() const override { return policy_; }
  void set_policy(DenseNet net) { policy_ = std::move(net); }

  /// softmax(logits / temperature) on a batch of latents.
  Matrix action_probs(const Matrix& latents, double temperature = 1.0) const;

 private:
  DenseNet policy_;
  AdamState opt_;
};

/// cDQL student distilled toward a frozen BC teacher.
class QdaggerAgent : public CdqlAgent {
 public:
  QdaggerAgent(std::size_t latent_dim, int n_actions, const Hyperparams& hp, Rng& init_rng,
               std::shared_ptr<const BcAgent> teacher);
  LossBreakdown update(const Batch& batch) override;
  const BcAgent& teacher() const { return *teacher_; }

 private:
  std::shared_ptr<const BcAgent> teacher_;
};

/// Discrete advantage-weighted actor-critic. Exploration samples the actor.
class AwacAgent : public Agent {
 public:
  AwacAgent(std::size_t latent_dim, int n_actions, const Hyperparams& hp, Rng& init_rng);

  AgentKind kind() const override { return AgentKind::kAwac; }
  int explore_action(std::span<const double> latent, double eps, Rng& rng) override;
  LossBreakdown update(const Batch& batch) override;
  void sync_target() override;
  bool uses_epsilon() const override { return false; }
  const DenseNet& policy_net() const override { return actor_; }
  const DenseNet& critic() const { return critic_; }

 private:
  Hyperparams hp_;
  DenseNet actor_;
  DenseNet critic_;
  DenseNet critic_target_;
  AdamState actor_opt_;
  AdamState critic_opt_;
};

}  // namespace aekick
