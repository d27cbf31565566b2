#include "explore_go/cross_env.hpp"
#include "explore_go/exploration.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace explore_go;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

VectorXd cross_obs(const CrossEnv& env, int task, GridPos p) {
  EnvState s = env.reset(env.tasks()[task]);
  s.position = p;
  return env.render(s);
}

}  // namespace

TEST_CASE("uniform random actions") {
  Rng rng(1);
  std::vector<long> counts(4, 0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) ++counts[uniform_random_action(rng, 4)];
  const double sigma = std::sqrt(n * 0.25 * 0.75);
  for (long c : counts) CHECK(std::abs(c - n * 0.25) < 3 * sigma);
  for (int i = 0; i < 100; ++i) CHECK(uniform_random_action(rng, 1) == 0);
  CHECK_THROWS_AS(uniform_random_action(rng, 0), UsageError);

  UniformRandomAgent agent(4);
  const ActOutput out = agent.act(VectorXd::Zero(75), rng);
  CHECK(out.log_prob == doctest::Approx(-std::log(4.0)));
  CHECK(agent.value(VectorXd::Zero(75)) == 0.0);
}

TEST_CASE("running std") {
  RunningStd rs(1e-8);
  CHECK(rs.std() == 1e-8);
  rs.update(3.0);
  CHECK(rs.count() == 1);
  CHECK(rs.std() == 1e-8);

  std::mt19937_64 rng(2);
  std::gamma_distribution<double> g(2.0, 1.5);
  std::vector<double> xs{3.0};
  for (int i = 0; i < 500; ++i) {
    xs.push_back(g(rng));
    rs.update(xs.back());
  }
  double mean = 0.0;
  for (double x : xs) mean += x / xs.size();
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  CHECK(rs.count() == 501);
  CHECK(rs.mean() == doctest::Approx(mean).epsilon(1e-12));
  CHECK(rs.variance() == doctest::Approx(ss / (xs.size() - 1)).epsilon(1e-10));
  CHECK(rs.std() == doctest::Approx(std::sqrt(ss / (xs.size() - 1))).epsilon(1e-10));
}

TEST_CASE("rnd networks") {
  const CrossEnv env;
  const RndConfig cfg;

  SUBCASE("predictor copied from the target gives zero bonus") {
    Rng init(1);
    const RndNetworks rnd(env.observation_size(), cfg, init, true);
    CHECK(rnd.raw_reward(cross_obs(env, 0, {1, 2})) == 0.0);
  }

  SUBCASE("architecture") {
    Rng init(1);
    const RndNetworks rnd(env.observation_size(), cfg, init);
    CHECK(rnd.target().sizes() == std::vector<int>{75, 64, 64, 32});
    CHECK(rnd.predictor().sizes() == rnd.target().sizes());
    CHECK(rnd.predictor().params() != rnd.target().params());
  }

  SUBCASE("bonus is non-negative") {
    Rng init(2);
    const RndNetworks rnd(env.observation_size(), cfg, init);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const MatrixXd obs = MatrixXd::NullaryExpr(75, 200, [&] { return u(rng); });
    const VectorXd raw = rnd.raw_rewards(obs);
    CHECK(raw.minCoeff() >= 0.0);
    CHECK(rnd.raw_reward(obs.col(7)) == doctest::Approx(raw[7]).epsilon(1e-14));
  }

  SUBCASE("training on one observation lowers its bonus every step") {
    Rng init(4);
    RndNetworks rnd(env.observation_size(), cfg, init);
    const VectorXd x = cross_obs(env, 1, kEastEnd);
    double prev = rnd.raw_reward(x);
    bool strictly_decreasing = true;
    for (int i = 0; i < 100; ++i) {
      const double loss = rnd.update_predictor(x);
      CHECK(loss == doctest::Approx(prev).epsilon(1e-12));
      const double now = rnd.raw_reward(x);
      strictly_decreasing &= now < prev;
      prev = now;
    }
    CHECK(strictly_decreasing);
  }

  SUBCASE("trained observations are less novel than unseen ones") {
    Rng init(5);
    RndNetworks rnd(env.observation_size(), cfg, init);
    const VectorXd seen = cross_obs(env, 0, kNorthEnd);
    const VectorXd unseen = cross_obs(env, 4, kSouthEnd);
    for (int i = 0; i < 300; ++i) rnd.update_predictor(seen);
    CHECK(rnd.raw_reward(seen) < rnd.raw_reward(unseen));
  }

  SUBCASE("target stays frozen") {
    Rng init(6);
    RndNetworks rnd(env.observation_size(), cfg, init);
    const VectorXd before = rnd.target().params();
    MatrixXd batch(75, 3);
    batch << cross_obs(env, 0, kNorthEnd), cross_obs(env, 1, {2, 3}), cross_obs(env, 2, {3, 2});
    for (int i = 0; i < 20; ++i) rnd.update_predictor(batch);
    CHECK(rnd.target().params() == before);
  }

  SUBCASE("zero learning rate and empty batch leave the predictor unchanged") {
    RndConfig frozen = cfg;
    frozen.learning_rate = 0.0;
    Rng init(7);
    RndNetworks rnd(env.observation_size(), frozen, init);
    const VectorXd before = rnd.predictor().params();
    rnd.update_predictor(cross_obs(env, 0, kNorthEnd));
    CHECK(rnd.predictor().params() == before);
    CHECK(rnd.update_predictor(MatrixXd(75, 0)) == 0.0);
    CHECK(rnd.predictor().params() == before);
  }

  SUBCASE("a step lowers the batch loss in most trials") {
    int lowered = 0;
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
      Rng init(100 + trial);
      RndNetworks rnd(env.observation_size(), cfg, init);
      const MatrixXd batch = MatrixXd::NullaryExpr(75, 8, [&] { return u(rng); });
      const double before = rnd.update_predictor(batch);
      const double after = rnd.raw_rewards(batch).mean();
      lowered += after <= before ? 1 : 0;
    }
    CHECK(lowered > 25);
  }
}

TEST_CASE("intrinsic reward divides by the running std") {
  const CrossEnv env;
  Rng init(9);
  const RndNetworks rnd(env.observation_size(), RndConfig{}, init);
  RunningStd running;
  const VectorXd a = cross_obs(env, 0, kNorthEnd), b = cross_obs(env, 1, kEastEnd);
  const double first = intrinsic_reward(rnd, a, running);
  CHECK(running.count() == 1);
  // A single sample has no spread yet, so the floor applies.
  CHECK(first == doctest::Approx(rnd.raw_reward(a) / 1e-8));
  const double second = intrinsic_reward(rnd, b, running);
  CHECK(second == doctest::Approx(rnd.raw_reward(b) / running.std()).epsilon(1e-14));
  CHECK(running.std() == doctest::Approx(std::abs(rnd.raw_reward(a) - rnd.raw_reward(b)) /
                                         std::sqrt(2.0)));
}

TEST_CASE("rnd-ppo agent ignores extrinsic reward") {
  const CrossEnv env;
  PpoConfig ppo;
  ppo.hidden = {16};

  auto make_buffer = [&](bool with_reward) {
    RolloutBuffer buf(2, Phase::PureExploration);
    Rng rng(11);
    for (int e = 0; e < 2; ++e) {
      for (int t = 0; t < 8; ++t) {
        StepRecord r;
        r.phase = Phase::PureExploration;
        r.env_index = e;
        r.rollout_step = t;
        r.obs = cross_obs(env, e, t % 2 ? kNorthEnd : GridPos{1, 2});
        r.action = uniform_random_action(rng, 4);
        r.log_prob = -std::log(4.0);
        const bool terminal = t == 7 && e == 0;
        if (!terminal) r.next_obs = cross_obs(env, e, {3, 2});
        r.done = t == 7;
        r.episode_end = t == 7;
        r.reward = with_reward && terminal ? 1.0 : 0.0;
        buf.add(r);
      }
    }
    return buf;
  };

  auto run = [&](bool with_reward) {
    Rng init(12);
    RndPpoAgent agent(env.observation_size(), 4, ppo, RndConfig{}, init, Rng(13));
    RolloutBuffer buf = make_buffer(with_reward);
    const PeUpdate u = agent.update(buf);
    CHECK(u.status == PeUpdateStatus::Updated);
    CHECK(agent.running_std().count() == 15);
    buf.for_each([](const StepRecord& r) {
      if (r.next_obs.size() == 0) CHECK(r.intrinsic_reward == 0.0);
    });
    return agent.policy().actor.params();
  };
  CHECK(run(true) == run(false));

  Rng init(12);
  RndPpoAgent agent(env.observation_size(), 4, ppo, RndConfig{}, init, Rng(13));
  RolloutBuffer wrong(2, Phase::Main);
  StepRecord r;
  r.obs = cross_obs(env, 0, kNorthEnd);
  wrong.add(r);
  CHECK_THROWS_AS(agent.update(wrong), UsageError);
}
