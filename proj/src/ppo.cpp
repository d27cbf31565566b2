#include "explore_go/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace explore_go {

PpoConfig PpoConfig::from(const KeyValueConfig& cfg) {
  PpoConfig c;
  c.total_timesteps = cfg.get_long("total_timesteps", c.total_timesteps);
  c.n_envs = cfg.get_int("n_envs", c.n_envs);
  c.rollout_len = cfg.get_int("ppo.rollout_len", c.rollout_len);
  c.epochs = cfg.get_int("ppo.epochs", c.epochs);
  c.minibatches = cfg.get_int("ppo.minibatches", c.minibatches);
  c.gamma = cfg.get_double("ppo.gamma", c.gamma);
  c.gae_lambda = cfg.get_double("ppo.gae_lambda", c.gae_lambda);
  c.entropy_coef = cfg.get_double("ppo.entropy_coef", c.entropy_coef);
  c.clip_eps = cfg.get_double("ppo.clip_eps", c.clip_eps);
  c.value_coef = cfg.get_double("ppo.value_coef", c.value_coef);
  c.reward_normalisation = cfg.get_bool("ppo.reward_normalisation", c.reward_normalisation);
  c.normalize_advantages = cfg.get_bool("ppo.normalize_advantages", c.normalize_advantages);
  c.max_grad_norm = cfg.get_double("ppo.max_grad_norm", c.max_grad_norm);
  if (cfg.get_bool("ppo.shared_networks", false)) {
    throw ConfigError("ppo.shared_networks = true is not supported");
  }
  if (auto h = cfg.get_doubles("ppo.hidden"); !h.empty()) {
    c.hidden.assign(h.begin(), h.end());
  }
  c.adam.learning_rate = cfg.get_double("adam.learning_rate", c.adam.learning_rate);
  c.adam.epsilon = cfg.get_double("adam.epsilon", c.adam.epsilon);
  c.adam.beta1 = cfg.get_double("adam.beta1", c.adam.beta1);
  c.adam.beta2 = cfg.get_double("adam.beta2", c.adam.beta2);
  c.validate();
  return c;
}

void PpoConfig::validate() const {
  if (rollout_len <= 0 || n_envs <= 0 || epochs <= 0 || minibatches <= 0) {
    throw ConfigError("ppo: rollout_len, n_envs, epochs and minibatches must be positive");
  }
  if ((rollout_len * n_envs) % minibatches != 0) {
    throw ConfigError("ppo: rollout_len * n_envs must be divisible by minibatches");
  }
  for (double v : {gamma, gae_lambda, clip_eps, entropy_coef, value_coef, max_grad_norm,
                   adam.learning_rate, adam.epsilon}) {
    if (!(v >= 0.0)) throw ConfigError("ppo: coefficients must be non-negative");
  }
  if (gamma > 1.0 || gae_lambda > 1.0) throw ConfigError("ppo: gamma and lambda must be <= 1");
  if (reward_normalisation) throw ConfigError("ppo.reward_normalisation is not supported");
  if (total_timesteps < 0) throw ConfigError("total_timesteps must be non-negative");
  for (int h : hidden) {
    if (h <= 0) throw ConfigError("ppo.hidden sizes must be positive");
  }
}

void RolloutBuffer::add(StepRecord record) {
  if (record.phase != phase_) throw UsageError("RolloutBuffer: transition from the wrong phase");
  if (record.env_index < 0 || record.env_index >= n_envs()) {
    throw UsageError("RolloutBuffer: env index out of range");
  }
  per_env_[record.env_index].push_back(std::move(record));
}

std::size_t RolloutBuffer::size() const {
  std::size_t n = 0;
  for (const auto& seq : per_env_) n += seq.size();
  return n;
}

GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values,
                      const std::vector<bool>& dones, const std::vector<bool>& truncated,
                      std::span<const double> bootstrap_values, double gamma, double lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n || dones.size() != n || truncated.size() != n ||
      bootstrap_values.size() != n) {
    throw std::invalid_argument("compute_gae: sequence lengths differ");
  }
  GaeResult out;
  out.advantages.assign(n, 0.0);
  out.returns.assign(n, 0.0);
  double next_adv = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    const bool terminated = dones[k] && !truncated[k];
    const double delta =
        rewards[k] + (terminated ? 0.0 : gamma * bootstrap_values[k]) - values[k];
    const double adv = delta + (dones[k] ? 0.0 : gamma * lambda * next_adv);
    out.advantages[k] = adv;
    out.returns[k] = adv + values[k];
    next_adv = adv;
  }
  return out;
}

void compute_advantages(RolloutBuffer& buffer, double gamma, double lambda, RewardSource source) {
  for (int e = 0; e < buffer.n_envs(); ++e) {
    auto& seq = buffer.env(e);
    const std::size_t n = seq.size();
    std::vector<double> rewards(n), values(n), boot(n);
    std::vector<bool> dones(n), truncated(n);
    for (std::size_t t = 0; t < n; ++t) {
      rewards[t] = source == RewardSource::Extrinsic ? seq[t].reward : seq[t].intrinsic_reward;
      values[t] = seq[t].value;
      boot[t] = seq[t].next_value;
      dones[t] = seq[t].done;
      truncated[t] = seq[t].truncated;
    }
    const GaeResult gae = compute_gae(rewards, values, dones, truncated, boot, gamma, lambda);
    for (std::size_t t = 0; t < n; ++t) {
      seq[t].advantage = gae.advantages[t];
      seq[t].ret = gae.returns[t];
    }
  }
}

void normalize_advantages(Eigen::VectorXd& advantages) {
  const Eigen::Index n = advantages.size();
  if (n < 2) return;
  const double mean = advantages.mean();
  const double std = std::sqrt((advantages.array() - mean).square().sum() / double(n - 1));
  advantages = (advantages.array() - mean) / (std + 1e-8);
}

ActorCritic::ActorCritic(int obs_size, int num_actions, const std::vector<int>& hidden,
                         const nn::AdamOptions& adam, Rng& init_rng) {
  std::vector<int> actor_sizes{obs_size};
  actor_sizes.insert(actor_sizes.end(), hidden.begin(), hidden.end());
  std::vector<int> critic_sizes = actor_sizes;
  actor_sizes.push_back(num_actions);
  critic_sizes.push_back(1);
  actor = nn::Mlpd(actor_sizes);
  critic = nn::Mlpd(critic_sizes);
  nn::init_orthogonal(actor, init_rng, std::sqrt(2.0), 0.01);
  nn::init_orthogonal(critic, init_rng, std::sqrt(2.0), 1.0);
  actor_opt = nn::AdamState<double>(actor.num_params(), adam);
  critic_opt = nn::AdamState<double>(critic.num_params(), adam);
}

nn::Categorical<double> ActorCritic::policy(const Eigen::VectorXd& obs) const {
  return nn::Categorical<double>(actor.forward_one(obs));
}

ActOutput ActorCritic::act(const Eigen::VectorXd& obs, Rng& rng) {
  const auto dist = policy(obs);
  ActOutput out;
  out.action = dist.sample(rng);
  out.log_prob = dist.log_prob(out.action);
  out.value = value(obs);
  return out;
}

double ActorCritic::value(const Eigen::VectorXd& obs) const {
  return critic.forward_one(obs)[0];
}

int ActorCritic::greedy_action(const Eigen::VectorXd& obs) const { return policy(obs).mode(); }

double clipped_surrogate(double ratio, double advantage, double clip_eps) {
  const double clipped = std::clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps);
  return std::min(ratio * advantage, clipped * advantage);
}

LossResult ppo_loss(const PpoBatch& batch, const nn::Mlpd& actor, const nn::Mlpd& critic,
                    const PpoConfig& config) {
  const Eigen::Index n = batch.size();
  if (n == 0) throw std::invalid_argument("ppo_loss: empty batch");
  nn::MlpCache<double> actor_cache, critic_cache;
  const Eigen::MatrixXd logits = actor.forward(batch.obs, &actor_cache);
  const Eigen::MatrixXd values = critic.forward(batch.obs, &critic_cache);

  LossResult out;
  Eigen::MatrixXd d_logits(logits.rows(), n);
  Eigen::MatrixXd d_values(1, n);
  const double inv_n = 1.0 / static_cast<double>(n);
  int clipped = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const nn::Categorical<double> dist(logits.col(i));
    const int a = batch.actions[i];
    const double log_ratio = dist.log_prob(a) - batch.old_log_probs[i];
    const double ratio = std::exp(log_ratio);
    if (!std::isfinite(ratio)) throw nn::NonFiniteError("ppo_loss: non-finite probability ratio");
    const double adv = batch.advantages[i];
    const double unclipped = ratio * adv;
    const double surrogate = clipped_surrogate(ratio, adv, config.clip_eps);
    if (std::abs(ratio - 1.0) > config.clip_eps) ++clipped;
    out.policy_loss -= surrogate * inv_n;
    out.approx_kl += ((ratio - 1.0) - log_ratio) * inv_n;

    const double h = dist.entropy();
    out.entropy += h * inv_n;

    // The clipped branch carries no gradient.
    const double d_logp = unclipped <= surrogate ? -ratio * adv * inv_n : 0.0;
    const Eigen::VectorXd p = dist.probs();
    Eigen::VectorXd g = -d_logp * p;
    g[a] += d_logp;
    g += config.entropy_coef * inv_n *
         (p.array() * (dist.log_probs().array() + h)).matrix();
    d_logits.col(i) = g;

    const double err = values(0, i) - batch.returns[i];
    out.value_loss += err * err * inv_n;
    d_values(0, i) = 2.0 * config.value_coef * err * inv_n;
  }
  out.clip_fraction = static_cast<double>(clipped) * inv_n;
  out.loss = out.policy_loss + config.value_coef * out.value_loss -
             config.entropy_coef * out.entropy;
  out.actor_grad = actor.backward(actor_cache, d_logits);
  out.critic_grad = critic.backward(critic_cache, d_values);
  return out;
}

PpoBatch make_batch(const RolloutBuffer& buffer) {
  PpoBatch batch;
  const auto n = static_cast<Eigen::Index>(buffer.size());
  Eigen::Index dim = 0;
  buffer.for_each([&](const StepRecord& r) { dim = r.obs.size(); });
  batch.obs.resize(dim, n);
  batch.actions.reserve(n);
  batch.old_log_probs.resize(n);
  batch.advantages.resize(n);
  batch.returns.resize(n);
  Eigen::Index i = 0;
  buffer.for_each([&](const StepRecord& r) {
    batch.obs.col(i) = r.obs;
    batch.actions.push_back(r.action);
    batch.old_log_probs[i] = r.log_prob;
    batch.advantages[i] = r.advantage;
    batch.returns[i] = r.ret;
    ++i;
  });
  return batch;
}

namespace {

PpoBatch select(const PpoBatch& b, std::span<const Eigen::Index> idx) {
  PpoBatch out;
  const auto n = static_cast<Eigen::Index>(idx.size());
  out.obs.resize(b.obs.rows(), n);
  out.old_log_probs.resize(n);
  out.advantages.resize(n);
  out.returns.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const Eigen::Index i = idx[j];
    out.obs.col(j) = b.obs.col(i);
    out.actions.push_back(b.actions[i]);
    out.old_log_probs[j] = b.old_log_probs[i];
    out.advantages[j] = b.advantages[i];
    out.returns[j] = b.returns[i];
  }
  return out;
}

}  // namespace

UpdateStats ppo_update(ActorCritic& net, const RolloutBuffer& buffer, const PpoConfig& config,
                       Rng& minibatch_rng, Phase expected) {
  UpdateStats stats;
  if (buffer.phase() != expected) throw UsageError("ppo_update: buffer holds the wrong phase");
  buffer.for_each([&](const StepRecord& r) {
    if (r.phase != expected) throw UsageError("ppo_update: transition from the wrong phase");
  });
  stats.samples = buffer.size();
  if (buffer.empty()) {
    stats.skipped = true;
    return stats;
  }

  PpoBatch batch = make_batch(buffer);
  if (config.normalize_advantages) normalize_advantages(batch.advantages);

  const Eigen::Index n = batch.size();
  std::vector<Eigen::Index> order(n);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::shuffle(order.begin(), order.end(), minibatch_rng);
    Eigen::Index begin = 0;
    for (int m = 0; m < config.minibatches; ++m) {
      const Eigen::Index len = n / config.minibatches + (m < n % config.minibatches ? 1 : 0);
      if (len == 0) continue;
      const PpoBatch mb = select(batch, std::span(order).subspan(begin, len));
      begin += len;

      LossResult loss = ppo_loss(mb, net.actor, net.critic, config);
      if (!std::isfinite(loss.loss)) throw nn::NonFiniteError("ppo_update: non-finite loss");
      const double norm =
          nn::clip_global_norm(config.max_grad_norm, loss.actor_grad, loss.critic_grad);
      nn::adam_step(net.actor, loss.actor_grad, net.actor_opt);
      nn::adam_step(net.critic, loss.critic_grad, net.critic_opt);

      if (stats.minibatch_updates == 0) stats.first_clip_fraction = loss.clip_fraction;
      ++stats.minibatch_updates;
      stats.policy_loss += loss.policy_loss;
      stats.value_loss += loss.value_loss;
      stats.entropy += loss.entropy;
      stats.clip_fraction += loss.clip_fraction;
      stats.approx_kl += loss.approx_kl;
      stats.grad_norm += norm;
    }
  }
  const double k = stats.minibatch_updates;
  stats.policy_loss /= k;
  stats.value_loss /= k;
  stats.entropy /= k;
  stats.clip_fraction /= k;
  stats.approx_kl /= k;
  stats.grad_norm /= k;
  return stats;
}

VecEnv::VecEnv(const ContextualEnv& env, std::vector<Task> tasks, int n, Rng task_rng)
    : env_(env), tasks_(std::move(tasks)), rng_(std::move(task_rng)) {
  if (tasks_.empty()) throw ConfigError("VecEnv: no tasks");
  if (n <= 0) throw ConfigError("VecEnv: need at least one environment");
  states_.resize(n);
  obs_.resize(n);
  returns_.assign(n, 0.0);
  for (int i = 0; i < n; ++i) reset(i);
}

void VecEnv::reset(int i) {
  std::uniform_int_distribution<std::size_t> pick(0, tasks_.size() - 1);
  states_[i] = env_.reset(tasks_[pick(rng_)]);
  obs_[i] = env_.render(states_[i]);
  returns_[i] = 0.0;
}

VecEnv::StepResult VecEnv::step(int i, int action) {
  StepResult res;
  res.transition = env_.step(states_[i], action);
  const EnvState& next = res.transition.next_state;
  returns_[i] += res.transition.reward;
  if (!next.terminal) res.next_obs = env_.render(next);
  if (res.transition.done) {
    EpisodeSummary s;
    s.ret = returns_[i];
    s.length = next.steps_elapsed;
    s.task_id = next.task.id;
    s.reached_goal = next.terminal;
    res.finished = s;
    finished_.push_back(s);
    reset(i);
  } else {
    states_[i] = next;
    obs_[i] = res.next_obs;
  }
  return res;
}

std::vector<EpisodeSummary> VecEnv::drain_finished() {
  std::vector<EpisodeSummary> out;
  out.swap(finished_);
  return out;
}

RolloutBuffer collect_rollout(VecEnv& envs, Agent& agent, int rollout_len, Rng& action_rng) {
  RolloutBuffer buffer(envs.size(), Phase::Main);
  for (int t = 0; t < rollout_len; ++t) {
    for (int i = 0; i < envs.size(); ++i) {
      StepRecord r;
      const EnvState state = envs.state(i);
      r.obs = envs.observation(i);
      const ActOutput out = agent.act(r.obs, action_rng);
      auto res = envs.step(i, out.action);
      r.action = out.action;
      r.log_prob = out.log_prob;
      r.value = out.value;
      r.reward = res.transition.reward;
      r.done = res.transition.done;
      r.truncated = res.transition.truncated;
      r.episode_end = res.transition.done;
      r.next_obs = std::move(res.next_obs);
      r.next_value = r.next_obs.size() ? agent.value(r.next_obs) : 0.0;
      r.phase = Phase::Main;
      r.episode_start = state.steps_elapsed == 0;
      r.env_index = i;
      r.rollout_step = t;
      r.episode_step = state.steps_elapsed;
      r.position = state.position;
      r.task_id = state.task.id;
      buffer.add(std::move(r));
    }
  }
  return buffer;
}

}  // namespace explore_go
