// Proximal policy optimisation with separate actor and critic MLPs:
// vectorised rollout collection, generalised advantage estimation and the
// clipped-surrogate update.
#pragma once

#include "explore_go/config.hpp"
#include "explore_go/env.hpp"
#include "explore_go/nn.hpp"
#include "explore_go/rng.hpp"

#include <optional>
#include <span>
#include <vector>

namespace explore_go {

struct PpoConfig {
  double gamma = 0.9;
  double gae_lambda = 0.95;
  double clip_eps = 0.2;
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  int rollout_len = 10;
  int n_envs = 4;
  int epochs = 3;
  int minibatches = 8;
  bool reward_normalisation = false;
  bool normalize_advantages = true;
  double max_grad_norm = 0.5;
  long total_timesteps = 50000;
  std::vector<int> hidden{128, 64, 32};
  nn::AdamOptions adam;

  // Reads `total_timesteps`, `n_envs`, `ppo.*` and `adam.*`.
  static PpoConfig from(const KeyValueConfig& cfg);
  void validate() const;
};

// Which agent generated a transition. Buffers only accept their own phase.
enum class Phase : std::uint8_t { Main, PureExploration };

struct StepRecord {
  Eigen::VectorXd obs;
  // Empty when the successor is terminal.
  Eigen::VectorXd next_obs;
  int action = 0;
  double log_prob = 0.0;
  double value = 0.0;
  double reward = 0.0;
  double intrinsic_reward = 0.0;
  // Value of the successor under the collecting agent; 0 when terminal.
  double next_value = 0.0;
  // Advantage flow stops after this step.
  bool done = false;
  // The segment ended without termination: bootstrap from next_value.
  bool truncated = false;
  // The environment episode ended here (goal or timeout).
  bool episode_end = false;
  Phase phase = Phase::Main;
  // First main-phase step of an episode (its effective start state).
  bool episode_start = false;
  int env_index = 0;
  // Step index within the rollout that produced this record.
  int rollout_step = 0;
  int episode_step = 0;
  GridPos position;
  int task_id = 0;

  double advantage = 0.0;
  double ret = 0.0;
};

class RolloutBuffer {
 public:
  explicit RolloutBuffer(int n_envs = 0, Phase phase = Phase::Main)
      : per_env_(n_envs), phase_(phase) {}

  void add(StepRecord record);

  Phase phase() const { return phase_; }
  int n_envs() const { return static_cast<int>(per_env_.size()); }
  std::size_t size() const;
  bool empty() const { return size() == 0; }

  const std::vector<StepRecord>& env(int i) const { return per_env_[i]; }
  std::vector<StepRecord>& env(int i) { return per_env_[i]; }

  template <typename F>
  void for_each(F&& f) const {
    for (const auto& seq : per_env_) {
      for (const auto& r : seq) f(r);
    }
  }
  template <typename F>
  void for_each(F&& f) {
    for (auto& seq : per_env_) {
      for (auto& r : seq) f(r);
    }
  }

 private:
  std::vector<std::vector<StepRecord>> per_env_;
  Phase phase_;
};

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

// delta_t = r_t + gamma * bootstrap_t * [not terminated_t] - V_t
// A_t     = delta_t + gamma * lambda * [not done_t] * A_{t+1}
// where terminated_t = done_t and not truncated_t, and bootstrap_t is the
// value of the successor state.
GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values,
                      const std::vector<bool>& dones, const std::vector<bool>& truncated,
                      std::span<const double> bootstrap_values, double gamma, double lambda);

enum class RewardSource { Extrinsic, Intrinsic };

// Fills advantage and ret for every record, per environment sequence.
void compute_advantages(RolloutBuffer& buffer, double gamma, double lambda,
                        RewardSource source = RewardSource::Extrinsic);

// In place: mean 0, sample std 1 (unchanged when fewer than two entries).
void normalize_advantages(Eigen::VectorXd& advantages);

struct ActOutput {
  int action = 0;
  double log_prob = 0.0;
  double value = 0.0;
};

class Agent {
 public:
  virtual ~Agent() = default;
  virtual ActOutput act(const Eigen::VectorXd& obs, Rng& rng) = 0;
  virtual double value(const Eigen::VectorXd& obs) const = 0;
};

class ActorCritic : public Agent {
 public:
  ActorCritic(int obs_size, int num_actions, const std::vector<int>& hidden,
              const nn::AdamOptions& adam, Rng& init_rng);

  ActOutput act(const Eigen::VectorXd& obs, Rng& rng) override;
  double value(const Eigen::VectorXd& obs) const override;

  nn::Categorical<double> policy(const Eigen::VectorXd& obs) const;
  int greedy_action(const Eigen::VectorXd& obs) const;

  nn::Mlpd actor;
  nn::Mlpd critic;
  nn::AdamState<double> actor_opt;
  nn::AdamState<double> critic_opt;
};

struct PpoBatch {
  Eigen::MatrixXd obs;  // obs_size x n
  std::vector<int> actions;
  Eigen::VectorXd old_log_probs;
  Eigen::VectorXd advantages;
  Eigen::VectorXd returns;

  Eigen::Index size() const { return obs.cols(); }
};

// Per-sample min(ratio * A, clip(ratio, 1-eps, 1+eps) * A).
double clipped_surrogate(double ratio, double advantage, double clip_eps);

struct LossResult {
  double loss = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
  Eigen::VectorXd actor_grad;
  Eigen::VectorXd critic_grad;
};

// loss = -mean(clipped surrogate) + value_coef * mean((V - R)^2)
//        - entropy_coef * mean(H). Throws nn::NonFiniteError on a
// non-finite ratio.
LossResult ppo_loss(const PpoBatch& batch, const nn::Mlpd& actor, const nn::Mlpd& critic,
                    const PpoConfig& config);

struct UpdateStats {
  bool skipped = false;
  std::size_t samples = 0;
  int minibatch_updates = 0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
  double grad_norm = 0.0;
  // Clip fraction of the very first minibatch, before any parameter change.
  double first_clip_fraction = 0.0;
};

// Multi-epoch minibatch update. Advantages must already be computed; all
// records must carry `expected` as their phase. An empty buffer is skipped.
UpdateStats ppo_update(ActorCritic& net, const RolloutBuffer& buffer, const PpoConfig& config,
                       Rng& minibatch_rng, Phase expected = Phase::Main);

struct EpisodeSummary {
  double ret = 0.0;
  int length = 0;
  int task_id = 0;
  bool reached_goal = false;
};

// A fixed number of environment copies stepped in lockstep; each resets to
// a uniformly drawn task from `tasks` whenever its episode ends.
class VecEnv {
 public:
  VecEnv(const ContextualEnv& env, std::vector<Task> tasks, int n, Rng task_rng);

  struct StepResult {
    Transition transition;
    // Rendered successor; empty when terminal.
    Eigen::VectorXd next_obs;
    std::optional<EpisodeSummary> finished;
  };

  int size() const { return static_cast<int>(states_.size()); }
  const ContextualEnv& env() const { return env_; }
  const EnvState& state(int i) const { return states_[i]; }
  const Eigen::VectorXd& observation(int i) const { return obs_[i]; }

  StepResult step(int i, int action);

  std::vector<EpisodeSummary> drain_finished();

 private:
  void reset(int i);

  const ContextualEnv& env_;
  std::vector<Task> tasks_;
  Rng rng_;
  std::vector<EnvState> states_;
  std::vector<Eigen::VectorXd> obs_;
  std::vector<double> returns_;
  std::vector<EpisodeSummary> finished_;
};

// Exactly rollout_len steps in every environment with `agent`.
RolloutBuffer collect_rollout(VecEnv& envs, Agent& agent, int rollout_len, Rng& action_rng);

// Flattens a buffer (advantages must be computed) into one batch.
PpoBatch make_batch(const RolloutBuffer& buffer);

}  // namespace explore_go
