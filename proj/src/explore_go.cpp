#include "explore_go/explore_go.hpp"

namespace explore_go {

const char* to_string(PeAgentKind kind) {
  return kind == PeAgentKind::UniformRandom ? "uniform" : "rnd";
}

ExploreGoConfig ExploreGoConfig::from(const KeyValueConfig& cfg) {
  ExploreGoConfig c;
  c.enabled = cfg.get_bool("explore_go.enabled", c.enabled);
  c.max_explore_steps = cfg.get_int("explore_go.K", c.max_explore_steps);
  const std::string kind = cfg.get_string("explore_go.pe_agent", to_string(c.pe_agent));
  if (kind == "uniform") {
    c.pe_agent = PeAgentKind::UniformRandom;
  } else if (kind == "rnd") {
    c.pe_agent = PeAgentKind::RndPpo;
  } else {
    throw ConfigError("explore_go.pe_agent must be 'uniform' or 'rnd', got '" + kind + "'");
  }
  if (c.max_explore_steps < 0) throw ConfigError("explore_go.K must be >= 0");
  return c;
}

int sample_k(Rng& rng, int max_explore_steps) {
  if (max_explore_steps < 0) throw UsageError("sample_k: K must be >= 0");
  std::uniform_int_distribution<int> k(0, max_explore_steps);
  return k(rng);
}

ExploreGoCollector::ExploreGoCollector(int n_envs, int max_explore_steps, Rng k_rng)
    : max_explore_steps_(max_explore_steps), k_rng_(std::move(k_rng)), phases_(n_envs) {
  if (max_explore_steps < 0) throw UsageError("ExploreGoCollector: K must be >= 0");
  for (auto& p : phases_) {
    p.k = sample_k(k_rng_, max_explore_steps_);
    k_history_.push_back(p.k);
  }
}

ExploreGoRollout ExploreGoCollector::collect(VecEnv& envs, Agent& main, Agent& explorer,
                                             int rollout_len, Rng& main_rng, Rng& explorer_rng) {
  if (envs.size() != static_cast<int>(phases_.size())) {
    throw UsageError("ExploreGoCollector: environment count changed");
  }
  ExploreGoRollout out{RolloutBuffer(envs.size(), Phase::Main),
                       RolloutBuffer(envs.size(), Phase::PureExploration)};
  for (int t = 0; t < rollout_len; ++t) {
    for (int e = 0; e < envs.size(); ++e) {
      EpisodePhase& phase = phases_[e];
      const bool exploring = phase.exploring();
      Agent& agent = exploring ? explorer : main;
      Rng& rng = exploring ? explorer_rng : main_rng;

      StepRecord r;
      const EnvState state = envs.state(e);
      r.obs = envs.observation(e);
      const ActOutput act = agent.act(r.obs, rng);
      auto res = envs.step(e, act.action);
      r.action = act.action;
      r.log_prob = act.log_prob;
      r.value = act.value;
      r.reward = res.transition.reward;
      r.episode_end = res.transition.done;
      r.done = res.transition.done;
      r.truncated = res.transition.truncated;
      r.next_obs = std::move(res.next_obs);
      r.env_index = e;
      r.rollout_step = t;
      r.episode_step = state.steps_elapsed;
      r.position = state.position;
      r.task_id = state.task.id;
      r.phase = exploring ? Phase::PureExploration : Phase::Main;
      r.episode_start = !exploring && phase.i == phase.k;

      ++phase.i;
      // The exploration segment ends when the main agent takes over: cut
      // the advantage flow there and bootstrap from the hand-over state.
      if (exploring && !r.episode_end && !phase.exploring()) {
        r.done = true;
        r.truncated = true;
      }
      r.next_value = r.next_obs.size() ? agent.value(r.next_obs) : 0.0;

      if (exploring) {
        out.pure_exploration.add(std::move(r));
      } else {
        out.main.add(std::move(r));
      }

      if (res.transition.done) {
        phase.k = sample_k(k_rng_, max_explore_steps_);
        phase.i = 0;
        k_history_.push_back(phase.k);
      }
    }
  }
  return out;
}

PeUpdate update_pe_agent(RolloutBuffer& pure_exploration, ExplorationAgent& explorer) {
  if (!explorer.trainable()) return PeUpdate{PeUpdateStatus::NotTrainable, {}, 0.0, 0.0};
  if (pure_exploration.empty()) return PeUpdate{PeUpdateStatus::SkippedEmpty, {}, 0.0, 0.0};
  return explorer.update(pure_exploration);
}

std::unique_ptr<ExplorationAgent> make_exploration_agent(PeAgentKind kind, int obs_size,
                                                         int num_actions, const PpoConfig& ppo,
                                                         const RndConfig& rnd, Rng& init_rng,
                                                         Rng minibatch_rng) {
  if (kind == PeAgentKind::UniformRandom) {
    return std::make_unique<UniformRandomAgent>(num_actions);
  }
  return std::make_unique<RndPpoAgent>(obs_size, num_actions, ppo, rnd, init_rng,
                                       std::move(minibatch_rng));
}

}  // namespace explore_go
