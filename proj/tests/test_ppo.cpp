#include "explore_go/cross_env.hpp"
#include "explore_go/ppo.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace explore_go;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// A_t = sum_k (gamma lambda)^k delta_{t+k}, summed until the segment ends.
std::vector<double> direct_advantages(const std::vector<double>& r, const std::vector<double>& v,
                                      const std::vector<bool>& done,
                                      const std::vector<bool>& truncated,
                                      const std::vector<double>& boot, double gamma,
                                      double lambda) {
  const std::size_t n = r.size();
  std::vector<double> delta(n);
  for (std::size_t t = 0; t < n; ++t) {
    const bool terminated = done[t] && !truncated[t];
    delta[t] = r[t] + (terminated ? 0.0 : gamma * boot[t]) - v[t];
  }
  std::vector<double> adv(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    double weight = 1.0;
    for (std::size_t k = t; k < n; ++k) {
      adv[t] += weight * delta[k];
      if (done[k]) break;
      weight *= gamma * lambda;
    }
  }
  return adv;
}

PpoConfig small_config() {
  PpoConfig c;
  c.hidden = {16};
  c.n_envs = 4;
  c.rollout_len = 10;
  return c;
}

PpoBatch random_batch(const ActorCritic& net, int obs_size, int n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> jitter(-0.4, 0.4);
  PpoBatch b;
  b.obs = MatrixXd::NullaryExpr(obs_size, n, [&] { return normal(rng); });
  b.old_log_probs.resize(n);
  b.advantages.resize(n);
  b.returns.resize(n);
  for (int i = 0; i < n; ++i) {
    const auto dist = net.policy(b.obs.col(i));
    const int a = i % dist.size();
    b.actions.push_back(a);
    // Old policy differs so some samples sit in the clipped region.
    b.old_log_probs[i] = dist.log_prob(a) + jitter(rng);
    b.advantages[i] = normal(rng);
    b.returns[i] = normal(rng);
  }
  return b;
}

double loss_at(const PpoBatch& b, const nn::Mlpd& actor, const nn::Mlpd& critic,
               const PpoConfig& c) {
  return ppo_loss(b, actor, critic, c).loss;
}

}  // namespace

TEST_CASE("gae examples") {
  SUBCASE("single terminal step") {
    const std::vector<double> r{1.0}, v{0.0}, boot{0.0};
    const auto g = compute_gae(r, v, {true}, {false}, boot, 0.9, 0.95);
    CHECK(g.advantages[0] == 1.0);
    CHECK(g.returns[0] == 1.0);
  }
  SUBCASE("self-consistent constant values") {
    const int n = 12;
    const std::vector<double> r(n, 0.0), v(n, 0.7), boot(n, 0.7);
    const auto g = compute_gae(r, v, std::vector<bool>(n, false), std::vector<bool>(n, false),
                               boot, 1.0, 1.0);
    for (double a : g.advantages) CHECK(a == 0.0);
  }
  SUBCASE("random sequences match direct summation") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::bernoulli_distribution flip(0.25);
    for (int trial = 0; trial < 200; ++trial) {
      const int n = 10;
      std::vector<double> r(n), v(n), boot(n);
      std::vector<bool> done(n), truncated(n);
      for (int t = 0; t < n; ++t) {
        r[t] = u(rng);
        v[t] = u(rng);
        boot[t] = u(rng);
        done[t] = flip(rng);
        truncated[t] = done[t] && flip(rng);
      }
      const double gamma = 0.9, lambda = 0.95;
      const auto g = compute_gae(r, v, done, truncated, boot, gamma, lambda);
      const auto oracle = direct_advantages(r, v, done, truncated, boot, gamma, lambda);
      for (int t = 0; t < n; ++t) {
        CHECK(std::abs(g.advantages[t] - oracle[t]) < 1e-9);
        CHECK(std::abs(g.returns[t] - (oracle[t] + v[t])) < 1e-9);
      }
    }
  }
  SUBCASE("length mismatch") {
    const std::vector<double> r{1.0, 2.0}, v{0.0};
    CHECK_THROWS(compute_gae(r, v, {true}, {false}, v, 0.9, 0.95));
  }
}

TEST_CASE("clipped surrogate hand cases") {
  CHECK(clipped_surrogate(2.0, 1.0, 0.2) == doctest::Approx(1.2).epsilon(1e-15));
  CHECK(clipped_surrogate(0.5, -1.0, 0.2) == doctest::Approx(-0.8).epsilon(1e-15));
  CHECK(clipped_surrogate(1.0, 0.3, 0.2) == 0.3);
  CHECK(clipped_surrogate(0.5, 1.0, 0.2) == 0.5);
  CHECK(clipped_surrogate(2.0, -1.0, 0.2) == -2.0);
}

TEST_CASE("advantage normalisation") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> normal(3.0, 5.0);
  VectorXd a = VectorXd::NullaryExpr(40, [&] { return normal(rng); });
  normalize_advantages(a);
  CHECK(std::abs(a.mean()) < 1e-9);
  const double sd = std::sqrt((a.array() - a.mean()).square().sum() / 39.0);
  CHECK(std::abs(sd - 1.0) < 1e-6);

  VectorXd one = VectorXd::Constant(1, 4.0);
  normalize_advantages(one);
  CHECK(one[0] == 4.0);
}

TEST_CASE("ppo loss gradients match finite differences") {
  std::mt19937_64 rng(21);
  Rng init(5);
  PpoConfig c = small_config();
  c.hidden = {8};
  ActorCritic net(6, 3, c.hidden, c.adam, init);
  // Larger output weights so the policy is far from uniform.
  for (Eigen::Index i = 0; i < net.actor.num_params(); ++i) net.actor.mutable_params()[i] *= 20.0;
  const PpoBatch batch = random_batch(net, 6, 16, rng);

  const LossResult res = ppo_loss(batch, net.actor, net.critic, c);
  CHECK(res.clip_fraction > 0.0);
  CHECK(res.clip_fraction < 1.0);
  const double h = 1e-6;
  auto check = [&](nn::Mlpd& target, const VectorXd& analytic) {
    for (Eigen::Index i = 0; i < target.num_params(); ++i) {
      const double orig = target.params()[i];
      target.mutable_params()[i] = orig + h;
      const double plus = loss_at(batch, net.actor, net.critic, c);
      target.mutable_params()[i] = orig - h;
      const double minus = loss_at(batch, net.actor, net.critic, c);
      target.mutable_params()[i] = orig;
      const double numeric = (plus - minus) / (2 * h);
      const double scale = std::max(std::abs(numeric), std::abs(analytic[i]));
      if (scale <= 1e-6) continue;
      CHECK(std::abs(numeric - analytic[i]) / scale < 1e-4);
    }
  };
  check(net.actor, res.actor_grad);
  check(net.critic, res.critic_grad);
}

TEST_CASE("identity ratio gives minus the mean advantage") {
  std::mt19937_64 rng(2);
  Rng init(2);
  PpoConfig c = small_config();
  c.entropy_coef = 0.0;
  ActorCritic net(5, 4, c.hidden, c.adam, init);
  PpoBatch b = random_batch(net, 5, 10, rng);
  for (int i = 0; i < 10; ++i) b.old_log_probs[i] = net.policy(b.obs.col(i)).log_prob(b.actions[i]);
  const LossResult res = ppo_loss(b, net.actor, net.critic, c);
  CHECK(res.policy_loss == doctest::Approx(-b.advantages.mean()).epsilon(1e-12));
  CHECK(res.clip_fraction == 0.0);
}

TEST_CASE("non-finite ratio is rejected") {
  std::mt19937_64 rng(2);
  Rng init(2);
  const PpoConfig c = small_config();
  ActorCritic net(5, 4, c.hidden, c.adam, init);
  PpoBatch b = random_batch(net, 5, 4, rng);
  b.old_log_probs[0] = -1e6;
  CHECK_THROWS_AS(ppo_loss(b, net.actor, net.critic, c), nn::NonFiniteError);
}

TEST_CASE("rollout collection on the cross") {
  const CrossEnv env;
  const PpoConfig c = small_config();
  Rng init(1);
  ActorCritic net(env.observation_size(), env.num_actions(), c.hidden, c.adam, init);
  VecEnv envs(env, env.train_tasks(), c.n_envs, Rng(2));
  Rng actions(3);
  const RolloutBuffer buffer = collect_rollout(envs, net, c.rollout_len, actions);

  CHECK(buffer.size() == 40);
  for (int e = 0; e < 4; ++e) {
    const auto& seq = buffer.env(e);
    REQUIRE(seq.size() == 10);
    for (std::size_t t = 0; t < seq.size(); ++t) {
      const auto& r = seq[t];
      CHECK(r.phase == Phase::Main);
      CHECK(r.env_index == e);
      CHECK(r.rollout_step == static_cast<int>(t));
      CHECK(r.log_prob == doctest::Approx(net.policy(r.obs).log_prob(r.action)).epsilon(1e-14));
      CHECK(r.value == doctest::Approx(net.value(r.obs)).epsilon(1e-14));
      CHECK(r.episode_start == (r.episode_step == 0));
      if (r.next_obs.size() == 0) CHECK(r.next_value == 0.0);
      if (t > 0) {
        const auto& prev = seq[t - 1];
        if (prev.done) {
          CHECK(r.episode_step == 0);
        } else {
          CHECK(r.obs == prev.next_obs);
          CHECK(r.episode_step == prev.episode_step + 1);
        }
      }
    }
  }

  // Same seeds, same buffer.
  Rng init2(1);
  ActorCritic net2(env.observation_size(), env.num_actions(), c.hidden, c.adam, init2);
  VecEnv envs2(env, env.train_tasks(), c.n_envs, Rng(2));
  Rng actions2(3);
  const RolloutBuffer again = collect_rollout(envs2, net2, c.rollout_len, actions2);
  for (int e = 0; e < 4; ++e) {
    for (std::size_t t = 0; t < 10; ++t) {
      CHECK(again.env(e)[t].action == buffer.env(e)[t].action);
      CHECK(again.env(e)[t].obs == buffer.env(e)[t].obs);
    }
  }
}

TEST_CASE("vector env resets to uniformly drawn training tasks") {
  const CrossEnv env;
  VecEnv envs(env, env.train_tasks(), 1, Rng(9));
  std::vector<int> counts(8, 0);
  const int episodes = 8000;
  ++counts[envs.state(0).task.id];
  int seen = 1;
  while (seen < episodes) {
    // Down finishes the north and west episodes at the goal or by
    // teleport; the rest end at the timeout.
    const auto res = envs.step(0, static_cast<int>(Action::Down));
    if (res.finished) {
      ++counts[envs.state(0).task.id];
      ++seen;
    }
  }
  for (int t = 0; t < 4; ++t) {
    const double p = 0.25, sigma = std::sqrt(episodes * p * (1 - p));
    CHECK(std::abs(counts[t] - episodes * p) < 4 * sigma);
  }
  for (int t = 4; t < 8; ++t) CHECK(counts[t] == 0);
}

TEST_CASE("buffer phase purity") {
  RolloutBuffer main(2, Phase::Main);
  StepRecord r;
  r.phase = Phase::PureExploration;
  CHECK_THROWS_AS(main.add(r), UsageError);
  r.phase = Phase::Main;
  r.env_index = 2;
  CHECK_THROWS_AS(main.add(r), UsageError);

  Rng init(1), mb(2);
  const PpoConfig c = small_config();
  ActorCritic net(3, 2, c.hidden, c.adam, init);
  RolloutBuffer pe(2, Phase::PureExploration);
  CHECK_THROWS_AS(ppo_update(net, pe, c, mb, Phase::Main), UsageError);
  const UpdateStats skipped = ppo_update(net, main, c, mb);
  CHECK(skipped.skipped);
}

TEST_CASE("ppo update") {
  const CrossEnv env;
  PpoConfig c = small_config();
  auto make = [&](std::uint64_t seed) {
    Rng init(seed);
    return ActorCritic(env.observation_size(), env.num_actions(), c.hidden, c.adam, init);
  };
  ActorCritic collector = make(1);
  VecEnv envs(env, env.train_tasks(), c.n_envs, Rng(2));
  Rng actions(3);
  RolloutBuffer buffer = collect_rollout(envs, collector, 20, actions);
  compute_advantages(buffer, c.gamma, c.gae_lambda);

  SUBCASE("deterministic") {
    ActorCritic a = make(1), b = make(1);
    Rng ra(7), rb(7);
    ppo_update(a, buffer, c, ra);
    ppo_update(b, buffer, c, rb);
    CHECK(a.actor.params() == b.actor.params());
    CHECK(a.critic.params() == b.critic.params());
  }
  SUBCASE("zero learning rate leaves parameters unchanged") {
    c.adam.learning_rate = 0.0;
    ActorCritic a = make(1);
    a.actor_opt.options.learning_rate = 0.0;
    a.critic_opt.options.learning_rate = 0.0;
    const VectorXd actor = a.actor.params(), critic = a.critic.params();
    Rng r(7);
    const UpdateStats s = ppo_update(a, buffer, c, r);
    CHECK(s.minibatch_updates == c.epochs * c.minibatches);
    CHECK(a.actor.params() == actor);
    CHECK(a.critic.params() == critic);
  }
  SUBCASE("first minibatch is unclipped") {
    ActorCritic a = make(1);
    Rng r(7);
    const UpdateStats s = ppo_update(a, buffer, c, r);
    CHECK(s.first_clip_fraction == 0.0);
    CHECK(s.clip_fraction >= 0.0);
    CHECK(s.clip_fraction <= 1.0);
    CHECK(s.samples == 80);
    CHECK(a.actor.params() != collector.actor.params());
  }
}

TEST_CASE("ppo learns a three-state bandit") {
  const auto env = explore_go::testing::bandit_env();
  PpoConfig c;
  c.hidden = {16};
  c.n_envs = 4;
  c.rollout_len = 10;
  Rng init(1), actions(2), mb(3);
  ActorCritic net(env.observation_size(), env.num_actions(), c.hidden, c.adam, init);
  const std::vector<Task> tasks(env.tasks().begin(), env.tasks().end());
  VecEnv envs(env, tasks, c.n_envs, Rng(4));
  for (int update = 0; update < 500; ++update) {
    RolloutBuffer buffer = collect_rollout(envs, net, c.rollout_len, actions);
    compute_advantages(buffer, c.gamma, c.gae_lambda);
    ppo_update(net, buffer, c, mb);
  }
  for (const auto& task : env.tasks()) {
    const VectorXd obs = env.render(env.reset(task));
    CHECK(net.greedy_action(obs) == task.start.col % 2);
    CHECK(net.policy(obs).probs()[task.start.col % 2] > 0.9);
  }
}

TEST_CASE("config parsing") {
  auto cfg = KeyValueConfig::parse(
      "total_timesteps = 1000\nppo.gamma = 0.5\nppo.hidden = 8, 4\nadam.learning_rate = 3e-4\n");
  const PpoConfig c = PpoConfig::from(cfg);
  CHECK(c.total_timesteps == 1000);
  CHECK(c.gamma == 0.5);
  CHECK(c.hidden == std::vector<int>{8, 4});
  CHECK(c.adam.learning_rate == 3e-4);
  CHECK_NOTHROW(cfg.check_all_consumed());

  CHECK_THROWS_AS(PpoConfig::from(KeyValueConfig::parse("ppo.minibatches = 7\n")), ConfigError);
  CHECK_THROWS_AS(PpoConfig::from(KeyValueConfig::parse("ppo.reward_normalisation = true\n")),
                  ConfigError);
  CHECK_THROWS_AS(PpoConfig::from(KeyValueConfig::parse("ppo.gamma = abc\n")), ConfigError);
}
