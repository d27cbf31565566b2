// Pure-exploration policies: uniform random actions, and a PPO agent that
// maximises a random-network-distillation novelty bonus and ignores the
// environment reward.
#pragma once

#include "explore_go/config.hpp"
#include "explore_go/nn.hpp"
#include "explore_go/ppo.hpp"

#include <optional>

namespace explore_go {

struct RndConfig {
  int embedding_dim = 32;
  std::vector<int> hidden{64, 64};
  double learning_rate = 1e-4;
  double std_floor = 1e-8;

  // Reads `rnd.*`.
  static RndConfig from(const KeyValueConfig& cfg);
};

int uniform_random_action(Rng& rng, int num_actions);

enum class PeUpdateStatus { Updated, SkippedEmpty, NotTrainable };

struct PeUpdate {
  PeUpdateStatus status = PeUpdateStatus::NotTrainable;
  UpdateStats ppo;
  double mean_raw_intrinsic = 0.0;
  double predictor_loss = 0.0;
};

class ExplorationAgent : public Agent {
 public:
  virtual bool trainable() const = 0;
  virtual PeUpdate update(RolloutBuffer& pe_buffer) = 0;
};

class UniformRandomAgent final : public ExplorationAgent {
 public:
  explicit UniformRandomAgent(int num_actions);

  ActOutput act(const Eigen::VectorXd& obs, Rng& rng) override;
  double value(const Eigen::VectorXd&) const override { return 0.0; }
  bool trainable() const override { return false; }
  PeUpdate update(RolloutBuffer&) override { return {}; }

 private:
  int num_actions_;
};

// Streaming (Welford) mean and unbiased variance; std() never drops below
// the floor.
class RunningStd {
 public:
  explicit RunningStd(double floor = 1e-8) : floor_(floor) {}

  void update(double x);
  long count() const { return count_; }
  double mean() const { return mean_; }
  double variance() const { return count_ > 1 ? m2_ / double(count_ - 1) : 0.0; }
  double std() const;

 private:
  double floor_;
  long count_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

class RndNetworks {
 public:
  // With predictor_copies_target the predictor starts identical to the
  // target, otherwise both are independently initialised.
  RndNetworks(int obs_size, const RndConfig& config, Rng& init_rng,
              bool predictor_copies_target = false);

  const nn::Mlpd& target() const { return target_; }
  const nn::Mlpd& predictor() const { return predictor_; }

  // ||predictor(x) - target(x)||^2 per column.
  Eigen::VectorXd raw_rewards(const Eigen::MatrixXd& observations) const;
  double raw_reward(const Eigen::VectorXd& observation) const;

  // One Adam step on mean squared prediction error; returns the loss before
  // the step. An empty batch is a no-op returning 0.
  double update_predictor(const Eigen::MatrixXd& observations);

 private:
  nn::Mlpd target_;
  nn::Mlpd predictor_;
  nn::AdamState<double> opt_;
};

// Raw squared error on next_obs; updates `running` with it, then divides.
double intrinsic_reward(const RndNetworks& rnd, const Eigen::VectorXd& next_obs,
                        RunningStd& running);

class RndPpoAgent final : public ExplorationAgent {
 public:
  RndPpoAgent(int obs_size, int num_actions, const PpoConfig& ppo, const RndConfig& rnd,
              Rng& init_rng, Rng minibatch_rng);

  ActOutput act(const Eigen::VectorXd& obs, Rng& rng) override { return net_.act(obs, rng); }
  double value(const Eigen::VectorXd& obs) const override { return net_.value(obs); }
  bool trainable() const override { return true; }

  // Intrinsic rewards for every record (0 into terminal states, which have
  // no observation), PPO on them, then predictor steps on the visited
  // successor observations.
  PeUpdate update(RolloutBuffer& pe_buffer) override;

  const ActorCritic& policy() const { return net_; }
  const RndNetworks& rnd() const { return rnd_; }
  const RunningStd& running_std() const { return running_; }

 private:
  PpoConfig ppo_;
  ActorCritic net_;
  RndNetworks rnd_;
  RunningStd running_;
  Rng minibatch_rng_;
};

}  // namespace explore_go
