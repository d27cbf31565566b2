#include "explore_go/exploration.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace explore_go {

RndConfig RndConfig::from(const KeyValueConfig& cfg) {
  RndConfig c;
  c.embedding_dim = cfg.get_int("rnd.embedding_dim", c.embedding_dim);
  c.learning_rate = cfg.get_double("rnd.learning_rate", c.learning_rate);
  c.std_floor = cfg.get_double("rnd.std_floor", c.std_floor);
  if (auto h = cfg.get_doubles("rnd.hidden"); !h.empty()) c.hidden.assign(h.begin(), h.end());
  if (c.embedding_dim <= 0) throw ConfigError("rnd.embedding_dim must be positive");
  if (!(c.std_floor > 0.0)) throw ConfigError("rnd.std_floor must be positive");
  if (!(c.learning_rate >= 0.0)) throw ConfigError("rnd.learning_rate must be non-negative");
  return c;
}

int uniform_random_action(Rng& rng, int num_actions) {
  if (num_actions < 1) throw UsageError("uniform_random_action: need at least one action");
  std::uniform_int_distribution<int> pick(0, num_actions - 1);
  return pick(rng);
}

UniformRandomAgent::UniformRandomAgent(int num_actions) : num_actions_(num_actions) {
  if (num_actions < 1) throw UsageError("UniformRandomAgent: need at least one action");
}

ActOutput UniformRandomAgent::act(const Eigen::VectorXd&, Rng& rng) {
  ActOutput out;
  out.action = uniform_random_action(rng, num_actions_);
  out.log_prob = -std::log(static_cast<double>(num_actions_));
  return out;
}

void RunningStd::update(double x) {
  ++count_;
  const double delta = x - mean_;
  mean_ += delta / double(count_);
  m2_ += delta * (x - mean_);
}

double RunningStd::std() const { return std::max(std::sqrt(variance()), floor_); }

RndNetworks::RndNetworks(int obs_size, const RndConfig& config, Rng& init_rng,
                         bool predictor_copies_target) {
  std::vector<int> sizes{obs_size};
  sizes.insert(sizes.end(), config.hidden.begin(), config.hidden.end());
  sizes.push_back(config.embedding_dim);
  target_ = nn::Mlpd(sizes);
  nn::init_orthogonal(target_, init_rng, std::sqrt(2.0), 1.0);
  if (predictor_copies_target) {
    predictor_ = target_;
  } else {
    predictor_ = nn::Mlpd(sizes);
    nn::init_orthogonal(predictor_, init_rng, std::sqrt(2.0), 1.0);
  }
  nn::AdamOptions adam;
  adam.learning_rate = config.learning_rate;
  opt_ = nn::AdamState<double>(predictor_.num_params(), adam);
}

Eigen::VectorXd RndNetworks::raw_rewards(const Eigen::MatrixXd& observations) const {
  const Eigen::MatrixXd diff = predictor_.forward(observations) - target_.forward(observations);
  return diff.colwise().squaredNorm().transpose();
}

double RndNetworks::raw_reward(const Eigen::VectorXd& observation) const {
  return raw_rewards(observation)[0];
}

double RndNetworks::update_predictor(const Eigen::MatrixXd& observations) {
  if (observations.cols() == 0) return 0.0;
  nn::MlpCache<double> cache;
  const Eigen::MatrixXd diff =
      predictor_.forward(observations, &cache) - target_.forward(observations);
  const double n = static_cast<double>(observations.cols());
  const double loss = diff.colwise().squaredNorm().sum() / n;
  Eigen::VectorXd grad = predictor_.backward(cache, (2.0 / n) * diff);
  nn::adam_step(predictor_, grad, opt_);
  return loss;
}

double intrinsic_reward(const RndNetworks& rnd, const Eigen::VectorXd& next_obs,
                        RunningStd& running) {
  const double raw = rnd.raw_reward(next_obs);
  running.update(raw);
  return raw / running.std();
}

RndPpoAgent::RndPpoAgent(int obs_size, int num_actions, const PpoConfig& ppo,
                         const RndConfig& rnd, Rng& init_rng, Rng minibatch_rng)
    : ppo_(ppo),
      net_(obs_size, num_actions, ppo.hidden, ppo.adam, init_rng),
      rnd_(obs_size, rnd, init_rng),
      running_(rnd.std_floor),
      minibatch_rng_(std::move(minibatch_rng)) {}

PeUpdate RndPpoAgent::update(RolloutBuffer& pe_buffer) {
  PeUpdate out;
  if (pe_buffer.empty()) {
    out.status = PeUpdateStatus::SkippedEmpty;
    return out;
  }
  if (pe_buffer.phase() != Phase::PureExploration) {
    throw UsageError("RndPpoAgent::update: expected a pure-exploration buffer");
  }

  // Raw novelty of every non-terminal successor, then normalise with the
  // running std after folding the whole batch in.
  std::vector<StepRecord*> with_obs;
  pe_buffer.for_each([&](StepRecord& r) {
    r.intrinsic_reward = 0.0;
    if (r.next_obs.size()) with_obs.push_back(&r);
  });
  Eigen::MatrixXd next(with_obs.empty() ? 0 : with_obs.front()->next_obs.size(),
                       static_cast<Eigen::Index>(with_obs.size()));
  for (std::size_t j = 0; j < with_obs.size(); ++j) next.col(j) = with_obs[j]->next_obs;
  const Eigen::VectorXd raw =
      with_obs.empty() ? Eigen::VectorXd() : rnd_.raw_rewards(next);
  for (Eigen::Index j = 0; j < raw.size(); ++j) running_.update(raw[j]);
  const double scale = running_.std();
  for (std::size_t j = 0; j < with_obs.size(); ++j) {
    with_obs[j]->intrinsic_reward = raw[j] / scale;
  }
  out.mean_raw_intrinsic = raw.size() ? raw.mean() : 0.0;

  compute_advantages(pe_buffer, ppo_.gamma, ppo_.gae_lambda, RewardSource::Intrinsic);
  out.ppo = ppo_update(net_, pe_buffer, ppo_, minibatch_rng_, Phase::PureExploration);

  // Predictor: same epoch/minibatch schedule as the policy update.
  if (next.cols() > 0) {
    std::vector<Eigen::Index> order(next.cols());
    double loss_sum = 0.0;
    int steps = 0;
    for (int epoch = 0; epoch < ppo_.epochs; ++epoch) {
      std::iota(order.begin(), order.end(), Eigen::Index{0});
      std::shuffle(order.begin(), order.end(), minibatch_rng_);
      Eigen::Index begin = 0;
      const auto n = static_cast<Eigen::Index>(order.size());
      for (int m = 0; m < ppo_.minibatches; ++m) {
        const Eigen::Index len = n / ppo_.minibatches + (m < n % ppo_.minibatches ? 1 : 0);
        if (len == 0) continue;
        Eigen::MatrixXd mb(next.rows(), len);
        for (Eigen::Index j = 0; j < len; ++j) mb.col(j) = next.col(order[begin + j]);
        begin += len;
        loss_sum += rnd_.update_predictor(mb);
        ++steps;
      }
    }
    out.predictor_loss = loss_sum / steps;
  }
  out.status = PeUpdateStatus::Updated;
  return out;
}

}  // namespace explore_go
