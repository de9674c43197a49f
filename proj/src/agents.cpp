#include "aekick/agents.hpp"

#include <algorithm>
#include <cstring>

namespace aekick {

namespace {

constexpr double kProbFloor = 1e-12;

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw NumericError(std::string(what) + ": non-finite loss");
}

Matrix row_matrix(std::span<const double> x) {
  Matrix m(1, x.size());
  std::copy(x.begin(), x.end(), m.data.begin());
  return m;
}

}  // namespace

std::string to_string(AgentKind k) {
  switch (k) {
    case AgentKind::kCdql: return "cdql";
    case AgentKind::kCdqlAe: return "cdql-ae";
    case AgentKind::kQdagger: return "qdagger";
    case AgentKind::kAwac: return "awac";
    case AgentKind::kHer: return "her";
    case AgentKind::kBc: return "bc";
  }
  return "cdql";
}

AgentKind agent_kind_from_string(const std::string& s) {
  if (s == "cdql") return AgentKind::kCdql;
  if (s == "cdql-ae") return AgentKind::kCdqlAe;
  if (s == "qdagger") return AgentKind::kQdagger;
  if (s == "awac") return AgentKind::kAwac;
  if (s == "her") return AgentKind::kHer;
  if (s == "bc") return AgentKind::kBc;
  throw ConfigError("unknown agent kind '" + s + "'");
}

std::string to_string(AeMode m) {
  switch (m) {
    case AeMode::kTargetShaping: return "target-shaping";
    case AeMode::kQRegression: return "q-regression";
    case AeMode::kKlPenalty: return "kl-penalty";
  }
  return "target-shaping";
}

AeMode ae_mode_from_string(const std::string& s) {
  if (s == "target-shaping") return AeMode::kTargetShaping;
  if (s == "q-regression") return AeMode::kQRegression;
  if (s == "kl-penalty") return AeMode::kKlPenalty;
  throw ConfigError("unknown ae_mode '" + s + "'");
}

bool requires_demos(AgentKind k) {
  return k == AgentKind::kCdqlAe || k == AgentKind::kQdagger || k == AgentKind::kAwac || k == AgentKind::kBc;
}

std::string to_string(QdaggerPhase p) {
  switch (p) {
    case QdaggerPhase::kTeacherCollect: return "teacher-collect";
    case QdaggerPhase::kOfflineDistill: return "offline-distill";
    case QdaggerPhase::kOnline: return "online";
  }
  return "online";
}

void Hyperparams::validate() const {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in [0, 1)");
  if (!(ae_lambda >= 0.0) || !(awac_lambda > 0.0) || !(qdagger_lambda >= 0.0)) {
    throw ConfigError("lambda values must be >= 0 (AWAC's must be > 0)");
  }
  if (!(tau >= 0.0 && tau <= 1.0)) throw ConfigError("tau must lie in [0, 1]");
  auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!unit(eps_start) || !unit(eps_end) || !unit(exploration_fraction)) {
    throw ConfigError("epsilon endpoints and exploration fraction must lie in [0, 1]");
  }
  if (buffer_capacity < 1 || batch_size < 1 || target_period < 1 || train_frequency < 1 ||
      k_neighbors < 1 || teacher_eval_episodes < 1 || bc_eval_period < 1) {
    throw ConfigError("counts must be >= 1");
  }
  if (teacher_steps < 0 || qdagger_offline_steps < 0 || awac_offline_steps < 0 || bc_steps < 0) {
    throw ConfigError("step budgets must be >= 0");
  }
  if (!(learning_rate > 0.0) || !(bc_learning_rate > 0.0)) throw ConfigError("learning rates must be > 0");
  if (!(distill_temperature > 0.0)) throw ConfigError("distill temperature must be > 0");
  if (!(awac_weight_cap > 0.0)) throw ConfigError("AWAC weight cap must be > 0");
}

Hyperparams co_scaled(Hyperparams hp, long long total_steps) {
  const double f = static_cast<double>(total_steps) / static_cast<double>(kReferenceTotalSteps);
  auto scale = [f](long long v) { return std::max<long long>(1, std::llround(static_cast<double>(v) * f)); };
  hp.buffer_capacity = static_cast<std::size_t>(
      std::max<long long>(static_cast<long long>(hp.batch_size), scale(static_cast<long long>(hp.buffer_capacity))));
  hp.teacher_steps = scale(hp.teacher_steps);
  hp.qdagger_offline_steps = scale(hp.qdagger_offline_steps);
  hp.awac_offline_steps = scale(hp.awac_offline_steps);
  return hp;
}

Batch make_batch(std::span<const Transition> transitions, const Encoder& enc) {
  const std::size_t n = transitions.size();
  const std::size_t in = enc.input_dim();
  Matrix obs(n, in), next(n, in);
  Batch b;
  b.actions.reserve(n);
  b.rewards.reserve(n);
  b.terminated.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& t = transitions[i];
    if (t.obs.size() != in || t.next_obs.size() != in) throw ShapeError("make_batch: observation dimension mismatch");
    std::copy(t.obs.begin(), t.obs.end(), obs.row(i).begin());
    std::copy(t.next_obs.begin(), t.next_obs.end(), next.row(i).begin());
    b.actions.push_back(t.action);
    b.rewards.push_back(t.reward);
    b.terminated.push_back(t.terminated ? 1 : 0);
  }
  b.latents = encode_batch(enc, obs);
  b.next_latents = encode_batch(enc, next);
  return b;
}

LossAndGrad net_loss(const DenseNet& net, const Matrix& inputs,
                     const std::function<OutputLoss(const Matrix&)>& loss) {
  const auto acts = forward(net, inputs);
  auto l = loss(acts.output());
  return {l.value, backward(net, acts, l.output_grad)};
}

Matrix softmax_rows(const Matrix& logits, double temperature) {
  Matrix p(logits.rows, logits.cols);
  for (std::size_t r = 0; r < logits.rows; ++r) {
    const auto z = logits.row(r);
    const double mx = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (std::size_t j = 0; j < z.size(); ++j) {
      p(r, j) = std::exp((z[j] - mx) / temperature);
      s += p(r, j);
    }
    for (double& v : p.row(r)) v /= s;
  }
  return p;
}

int argmax(std::span<const double> values) {
  int best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  }
  return best;
}

double eps_at(long long t, long long total_steps, const Hyperparams& hp) {
  const double window = hp.exploration_fraction * static_cast<double>(total_steps);
  const double td = static_cast<double>(t);
  if (!(window > 0.0) || td >= window) return hp.eps_end;
  return hp.eps_start + (hp.eps_end - hp.eps_start) * (td / window);
}

int act_eps_greedy(const DenseNet& q, std::span<const double> latent, double eps, Rng& rng) {
  const double coin = uniform01(rng);
  if (coin < eps) return uniform_int(rng, 0, static_cast<int>(q.output_dim()) - 1);
  return argmax(predict(q, latent));
}

std::vector<double> clipped_bootstrap(const Matrix& next_latents, const DenseNet& q_theta,
                                      const DenseNet& q_phi) {
  const Matrix qt = forward(q_theta, next_latents).output();
  const Matrix qp = forward(q_phi, next_latents).output();
  std::vector<double> boot(next_latents.rows);
  for (std::size_t b = 0; b < next_latents.rows; ++b) {
    const auto a = static_cast<std::size_t>(argmax(qt.row(b)));
    boot[b] = std::min(qt(b, a), qp(b, a));
  }
  return boot;
}

std::vector<double> clipped_target(const Batch& batch, const DenseNet& q_theta, const DenseNet& q_phi,
                                   double gamma) {
  if (batch.size() == 0) throw ContractError("clipped_target: empty batch");
  const auto boot = clipped_bootstrap(batch.next_latents, q_theta, q_phi);
  std::vector<double> y(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const double mask = batch.terminated[b] ? 0.0 : 1.0;
    y[b] = batch.rewards[b] + gamma * boot[b] * mask;
  }
  return y;
}

OutputLoss td_loss(const Matrix& q_out, std::span<const int> actions, std::span<const double> y) {
  if (actions.size() != q_out.rows || y.size() != q_out.rows) throw ShapeError("td_loss: targets misaligned with batch");
  OutputLoss l;
  l.output_grad = Matrix(q_out.rows, q_out.cols);
  for (std::size_t b = 0; b < q_out.rows; ++b) {
    const auto a = static_cast<std::size_t>(actions[b]);
    const double diff = q_out(b, a) - y[b];
    l.value += diff * diff;
    l.output_grad(b, a) = 2.0 * diff;
  }
  l.value /= static_cast<double>(q_out.rows);
  return l;
}

LossBreakdown td_step(DenseNet& q, AdamState& opt, const Batch& batch, std::span<const double> y) {
  const auto acts = forward(q, batch.latents);
  const auto l = td_loss(acts.output(), batch.actions, y);
  require_finite(l.value, "td_step");
  adam_step(q, backward(q, acts, l.output_grad), opt);
  LossBreakdown out;
  out.td = l.value;
  out.total = l.value;
  return out;
}

double adversarial_estimate(std::span<const double> obs, double reward, const LatentIndex& index,
                            const QEvaluator& q_target, const Encoder& enc, std::size_t k) {
  const auto latent = encode(enc, obs);
  return expert_estimate(index, knn(index, latent, k), q_target) - reward;
}

OutputLoss q_regression_loss(const Matrix& q_out, std::span<const int> actions,
                             std::span<const double> expert_values, double lambda) {
  OutputLoss l;
  l.output_grad = Matrix(q_out.rows, q_out.cols);
  for (std::size_t b = 0; b < q_out.rows; ++b) {
    const auto a = static_cast<std::size_t>(actions[b]);
    const double diff = q_out(b, a) - expert_values[b];
    l.value += diff * diff;
    l.output_grad(b, a) = lambda * 2.0 * diff;
  }
  l.value = lambda * l.value / static_cast<double>(q_out.rows);
  return l;
}

OutputLoss kl_penalty_loss(const Matrix& q_out, const Matrix& expert_policy, double lambda) {
  if (expert_policy.rows != q_out.rows || expert_policy.cols != q_out.cols) {
    throw ShapeError("kl_penalty_loss: expert policy shape mismatch");
  }
  const Matrix p = softmax_rows(q_out);
  OutputLoss l;
  l.output_grad = Matrix(q_out.rows, q_out.cols);
  for (std::size_t b = 0; b < q_out.rows; ++b) {
    double kl = 0.0;
    std::vector<double> log_ratio(q_out.cols);
    for (std::size_t j = 0; j < q_out.cols; ++j) {
      const double pj = p(b, j);
      log_ratio[j] = std::log(std::max(pj, kProbFloor)) - std::log(std::max(expert_policy(b, j), kProbFloor));
      kl += pj * log_ratio[j];
    }
    l.value += kl;
    // d/dq_j sum_i p_i (log p_i - log e_i) = p_j (log p_j - log e_j - KL)
    for (std::size_t j = 0; j < q_out.cols; ++j) {
      l.output_grad(b, j) = lambda * p(b, j) * (log_ratio[j] - kl);
    }
  }
  l.value = lambda * l.value / static_cast<double>(q_out.rows);
  return l;
}

AeApplication ae_apply(const Batch& batch, const AeInputs& inputs, double lambda, AeMode mode,
                       const DenseNet& q_theta, const DenseNet& q_phi, double gamma) {
  if (inputs.z.size() != batch.size()) throw ShapeError("ae_apply: Z misaligned with batch");
  AeApplication out;
  switch (mode) {
    case AeMode::kTargetShaping: {
      const auto boot = clipped_bootstrap(batch.next_latents, q_theta, q_phi);
      out.targets.resize(batch.size());
      for (std::size_t b = 0; b < batch.size(); ++b) {
        const double mask = batch.terminated[b] ? 0.0 : 1.0;
        const double shaped = batch.rewards[b] - lambda * inputs.z[b];
        out.targets[b] = shaped + gamma * boot[b] * mask;
      }
      return out;
    }
    case AeMode::kQRegression: {
      out.targets = clipped_target(batch, q_theta, q_phi, gamma);
      const Matrix q = forward(q_theta, batch.latents).output();
      out.auxiliary = q_regression_loss(q, batch.actions, inputs.expert_values, lambda);
      return out;
    }
    case AeMode::kKlPenalty: {
      out.targets = clipped_target(batch, q_theta, q_phi, gamma);
      const Matrix q = forward(q_theta, batch.latents).output();
      out.auxiliary = kl_penalty_loss(q, inputs.expert_policy, lambda);
      return out;
    }
  }
  throw ConfigError("ae_apply: unknown mode");
}

OutputLoss distill_loss(const Matrix& teacher_probs, const Matrix& student_logits, double temperature) {
  if (!(temperature > 0.0)) throw ContractError("distill_loss: temperature must be > 0");
  if (teacher_probs.rows != student_logits.rows || teacher_probs.cols != student_logits.cols) {
    throw ShapeError("distill_loss: teacher/student shape mismatch");
  }
  const Matrix q = softmax_rows(student_logits, temperature);
  OutputLoss l;
  l.output_grad = Matrix(q.rows, q.cols);
  for (std::size_t b = 0; b < q.rows; ++b) {
    double kl = 0.0;
    double mass = 0.0;  // teacher mass on unfloored student entries
    for (std::size_t j = 0; j < q.cols; ++j) {
      const double p = teacher_probs(b, j);
      if (p > 0.0) kl += p * (std::log(p) - std::log(std::max(q(b, j), kProbFloor)));
      if (q(b, j) > kProbFloor) mass += p;
    }
    l.value += kl;
    for (std::size_t j = 0; j < q.cols; ++j) {
      const double active = q(b, j) > kProbFloor ? teacher_probs(b, j) : 0.0;
      l.output_grad(b, j) = (q(b, j) * mass - active) / temperature;
    }
  }
  l.value /= static_cast<double>(q.rows);
  return l;
}

QdaggerPhase qdagger_schedule(long long step, const Hyperparams& hp) {
  if (step < hp.teacher_steps) return QdaggerPhase::kTeacherCollect;
  if (step < hp.teacher_steps + hp.qdagger_offline_steps) return QdaggerPhase::kOfflineDistill;
  return QdaggerPhase::kOnline;
}

double awac_weight(double advantage, double lambda, double cap) {
  if (std::isnan(advantage)) return cap;
  const double w = std::exp(advantage / lambda);
  if (!std::isfinite(w)) return cap;
  return std::min(w, cap);
}

OutputLoss awac_actor_loss(const Matrix& actor_logits, const Matrix& critic_q, std::span<const int> actions,
                           double lambda, double cap) {
  if (critic_q.rows != actor_logits.rows || critic_q.cols != actor_logits.cols) {
    throw ShapeError("awac_actor_loss: actor/critic shape mismatch");
  }
  const Matrix pi = softmax_rows(actor_logits);
  OutputLoss l;
  l.output_grad = Matrix(pi.rows, pi.cols);
  for (std::size_t b = 0; b < pi.rows; ++b) {
    const auto a = static_cast<std::size_t>(actions[b]);
    double v = 0.0;
    for (std::size_t j = 0; j < pi.cols; ++j) v += pi(b, j) * critic_q(b, j);
    const double w = awac_weight(critic_q(b, a) - v, lambda, cap);
    // log-softmax directly from logits for accuracy
    const auto z = actor_logits.row(b);
    const double mx = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (double zj : z) s += std::exp(zj - mx);
    const double log_pi = z[a] - mx - std::log(s);
    l.value += -log_pi * w;
    for (std::size_t j = 0; j < pi.cols; ++j) {
      l.output_grad(b, j) = w * (pi(b, j) - (j == a ? 1.0 : 0.0));
    }
  }
  l.value /= static_cast<double>(pi.rows);
  return l;
}

std::vector<Transition> her_augment(std::vector<Transition> batch, const ReplayBuffer& buffer,
                                    std::size_t n_extra, Rng& rng) {
  if (n_extra == 0) return batch;
  auto extra = buffer.sample(n_extra, rng);
  for (auto& t : extra) {
    t.reward = 1.0;
    t.terminated = true;
    batch.push_back(std::move(t));
  }
  return batch;
}

OutputLoss bc_loss(const Matrix& logits, std::span<const int> actions) {
  if (actions.size() != logits.rows) throw ShapeError("bc_loss: actions misaligned with batch");
  if (logits.rows == 0) throw ContractError("bc_loss: empty batch");
  const Matrix p = softmax_rows(logits);
  OutputLoss l;
  l.output_grad = p;
  for (std::size_t b = 0; b < logits.rows; ++b) {
    const auto a = static_cast<std::size_t>(actions[b]);
    const auto z = logits.row(b);
    const double mx = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (double zj : z) s += std::exp(zj - mx);
    l.value += -(z[a] - mx - std::log(s));
    l.output_grad(b, a) -= 1.0;
  }
  l.value /= static_cast<double>(logits.rows);
  return l;
}

double discounted_return(std::span<const double> rewards, double gamma) {
  double total = 0.0;
  double discount = 1.0;
  for (double r : rewards) {
    total += discount * r;
    discount *= gamma;
  }
  return total;
}

// ---------------------------------------------------------------------------

int Agent::greedy_action(std::span<const double> latent) const { return argmax(predict(policy_net(), latent)); }

CdqlAgent::CdqlAgent(std::size_t latent_dim, int n_actions, const Hyperparams& hp, Rng& init_rng) : hp_(hp) {
  hp_.validate();
  online_ = DenseNet::make(latent_dim, hp_.hidden, static_cast<std::size_t>(n_actions), Activation::kLinear, init_rng);
  target_ = online_;
  opt_ = AdamState::for_net(online_, hp_.learning_rate);
  if (hp_.twin_critic) {
    online2_ = DenseNet::make(latent_dim, hp_.hidden, static_cast<std::size_t>(n_actions), Activation::kLinear, init_rng);
    target2_ = *online2_;
    opt2_ = AdamState::for_net(*online2_, hp_.learning_rate);
  }
}

int CdqlAgent::explore_action(std::span<const double> latent, double eps, Rng& rng) {
  return act_eps_greedy(online_, latent, eps, rng);
}

std::pair<const DenseNet*, const DenseNet*> CdqlAgent::bootstrap_pair() const {
  if (hp_.twin_critic) return {&target_, &*target2_};
  return {&online_, &target_};
}

LossBreakdown CdqlAgent::apply_update(const Batch& batch, std::span<const double> y,
                                      const std::optional<OutputLoss>& auxiliary) {
  const auto acts = forward(online_, batch.latents);
  auto l = td_loss(acts.output(), batch.actions, y);
  require_finite(l.value, "cdql update");
  LossBreakdown out;
  out.td = l.value;
  out.total = l.value;
  if (auxiliary) {
    require_finite(auxiliary->value, "auxiliary penalty");
    for (std::size_t i = 0; i < l.output_grad.data.size(); ++i) l.output_grad.data[i] += auxiliary->output_grad.data[i];
    out.ae = auxiliary->value;
    out.total += auxiliary->value;
  }
  adam_step(online_, backward(online_, acts, l.output_grad), opt_);
  if (hp_.twin_critic) {
    const auto acts2 = forward(*online2_, batch.latents);
    const auto l2 = td_loss(acts2.output(), batch.actions, y);
    require_finite(l2.value, "cdql twin update");
    adam_step(*online2_, backward(*online2_, acts2, l2.output_grad), *opt2_);
    out.td = 0.5 * (l.value + l2.value);
    out.total = *out.td + out.ae.value_or(0.0);
  }
  ++gradient_steps_;
  return out;
}

LossBreakdown CdqlAgent::update(const Batch& batch) {
  const auto [qa, qb] = bootstrap_pair();
  const auto y = clipped_target(batch, *qa, *qb, hp_.gamma);
  return apply_update(batch, y, std::nullopt);
}

void CdqlAgent::sync_target() {
  soft_update(target_, online_, hp_.tau);
  if (hp_.twin_critic) soft_update(*target2_, *online2_, hp_.tau);
}

AeAgent::AeAgent(std::size_t latent_dim, int n_actions, const Hyperparams& hp, Rng& init_rng,
                 std::shared_ptr<const LatentIndex> index)
    : CdqlAgent(latent_dim, n_actions, hp, init_rng), index_(std::move(index)) {
  kind_ = AgentKind::kCdqlAe;
  if (!index_ || index_->size() == 0) throw ContractError("cdql-ae requires a non-empty latent index");
  if (index_->latents.cols != latent_dim) throw ShapeError("cdql-ae: index latent dimension mismatch");
  if (index_->action_count != n_actions) throw ShapeError("cdql-ae: index action count mismatch");
  row_values_ = target_values(*index_, target_);
}

const AeAgent::Neighbours& AeAgent::neighbours(std::span<const double> latent) {
  std::string key(reinterpret_cast<const char*>(latent.data()), latent.size_bytes());
  auto it = cache_.find(key);
  if (it != cache_.end()) return it->second;
  Neighbours n;
  n.result = knn(*index_, latent, hp_.k_neighbors);
  n.policy = search_policy_from(*index_, n.result).distribution;
  return cache_.emplace(std::move(key), std::move(n)).first->second;
}

AeInputs AeAgent::compute_inputs(const Batch& batch) {
  AeInputs in;
  in.z.resize(batch.size());
  in.expert_values.resize(batch.size());
  in.expert_policy = Matrix(batch.size(), static_cast<std::size_t>(index_->action_count));
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& n = neighbours(batch.latents.row(b));
    in.expert_values[b] = expert_estimate(n.result, row_values_);
    in.z[b] = in.expert_values[b] - batch.rewards[b];
    std::copy(n.policy.begin(), n.policy.end(), in.expert_policy.row(b).begin());
  }
  return in;
}

LossBreakdown AeAgent::update(const Batch& batch) {
  const auto inputs = compute_inputs(batch);
  const auto [qa, qb] = bootstrap_pair();
  const auto app = ae_apply(batch, inputs, hp_.ae_lambda, hp_.ae_mode, *qa, *qb, hp_.gamma);
  auto out = apply_update(batch, app.targets, app.auxiliary);
  if (hp_.ae_lambda == 0.0) {
    // The penalty is disabled: report exactly what vanilla cDQL reports.
    out.ae.reset();
    out.total = *out.td;
  } else if (hp_.ae_mode == AeMode::kTargetShaping) {
    double zbar = 0.0;
    for (double z : inputs.z) zbar += z;
    out.ae = zbar / static_cast<double>(inputs.z.size());
  }
  return out;
}

void AeAgent::sync_target() {
  CdqlAgent::sync_target();
  row_values_ = target_values(*index_, target_);
}

BcAgent::BcAgent(std::size_t latent_dim, int n_actions, const Hyperparams& hp, Rng& init_rng) {
  hp.validate();
  policy_ = DenseNet::make(latent_dim, hp.hidden, static_cast<std::size_t>(n_actions), Activation::kLinear, init_rng);
  opt_ = AdamState::for_net(policy_, hp.bc_learning_rate);
}

int BcAgent::explore_action(std::span<const double> latent, double, Rng&) { return greedy_action(latent); }

LossBreakdown BcAgent::update(const Batch& batch) {
  if (batch.size() == 0) throw ContractError("bc_update: empty batch");
  const auto acts = forward(policy_, batch.latents);
  const auto l = bc_loss(acts.output(), batch.actions);
  require_finite(l.value, "bc_update");
  adam_step(policy_, backward(policy_, acts, l.output_grad), opt_);
  ++gradient_steps_;
  LossBreakdown out;
  out.actor = l.value;
  out.total = l.value;
  return out;
}

Matrix BcAgent::action_probs(const Matrix& latents, double temperature) const {
  return softmax_rows(forward(policy_, latents).output(), temperature);
}

QdaggerAgent::QdaggerAgent(std::size_t latent_dim, int n_actions, const Hyperparams& hp, Rng& init_rng,
                           std::shared_ptr<const BcAgent> teacher)
    : CdqlAgent(latent_dim, n_actions, hp, init_rng), teacher_(std::move(teacher)) {
  kind_ = AgentKind::kQdagger;
  if (!teacher_) throw ContractError("qdagger requires a teacher policy");
}

LossBreakdown QdaggerAgent::update(const Batch& batch) {
  const auto [qa, qb] = bootstrap_pair();
  const auto y = clipped_target(batch, *qa, *qb, hp_.gamma);
  const Matrix teacher_p = teacher_->action_probs(batch.latents, 1.0);
  const auto acts = forward(online_, batch.latents);
  auto l = td_loss(acts.output(), batch.actions, y);
  auto d = distill_loss(teacher_p, acts.output(), hp_.distill_temperature);
  require_finite(l.value, "qdagger td");
  require_finite(d.value, "qdagger distill");
  const double lambda = hp_.qdagger_lambda;
  for (std::size_t i = 0; i < l.output_grad.data.size(); ++i) l.output_grad.data[i] += lambda * d.output_grad.data[i];
  adam_step(online_, backward(online_, acts, l.output_grad), opt_);
  if (hp_.twin_critic) {
    const auto acts2 = forward(*online2_, batch.latents);
    const auto l2 = td_loss(acts2.output(), batch.actions, y);
    adam_step(*online2_, backward(*online2_, acts2, l2.output_grad), *opt2_);
  }
  ++gradient_steps_;
  LossBreakdown out;
  out.td = l.value;
  out.distill = d.value;
  out.total = l.value + lambda * d.value;
  return out;
}

AwacAgent::AwacAgent(std::size_t latent_dim, int n_actions, const Hyperparams& hp, Rng& init_rng) : hp_(hp) {
  hp_.validate();
  const auto k = static_cast<std::size_t>(n_actions);
  actor_ = DenseNet::make(latent_dim, hp_.hidden, k, Activation::kLinear, init_rng);
  critic_ = DenseNet::make(latent_dim, hp_.hidden, k, Activation::kLinear, init_rng);
  critic_target_ = critic_;
  actor_opt_ = AdamState::for_net(actor_, hp_.learning_rate);
  critic_opt_ = AdamState::for_net(critic_, hp_.learning_rate);
}

int AwacAgent::explore_action(std::span<const double> latent, double, Rng& rng) {
  const Matrix p = softmax_rows(row_matrix(predict(actor_, latent)));
  const double u = uniform01(rng);
  double c = 0.0;
  for (std::size_t j = 0; j < p.cols; ++j) {
    c += p(0, j);
    if (u < c) return static_cast<int>(j);
  }
  return static_cast<int>(p.cols) - 1;
}

LossBreakdown AwacAgent::update(const Batch& batch) {
  const Matrix q_now = forward(critic_, batch.latents).output();
  const auto y = clipped_target(batch, critic_, critic_target_, hp_.gamma);
  auto critic_out = td_step(critic_, critic_opt_, batch, y);

  const auto acts = forward(actor_, batch.latents);
  const auto l = awac_actor_loss(acts.output(), q_now, batch.actions, hp_.awac_lambda, hp_.awac_weight_cap);
  require_finite(l.value, "awac actor");
  adam_step(actor_, backward(actor_, acts, l.output_grad), actor_opt_);
  ++gradient_steps_;
  LossBreakdown out;
  out.td = critic_out.td;
  out.actor = l.value;
  out.total = *out.td + l.value;
  return out;
}

void AwacAgent::sync_target() { soft_update(critic_target_, critic_, hp_.tau); }

}  // namespace aekick
