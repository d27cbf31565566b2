// Explore-Go rollout collection. Each episode begins with k ~ U{0..K} steps
// taken by a pure-exploration agent; the state it leaves the environment in
// becomes the effective start state for the main agent, which acts for the
// rest of the episode. Exploration steps go to their own buffer and never
// reach the main agent's update.
#pragma once

#include "explore_go/config.hpp"
#include "explore_go/exploration.hpp"
#include "explore_go/ppo.hpp"

#include <memory>
#include <vector>

namespace explore_go {

enum class PeAgentKind { UniformRandom, RndPpo };

const char* to_string(PeAgentKind kind);

struct ExploreGoConfig {
  bool enabled = true;
  // K: longest exploration phase. 8 for the cross gridworld.
  int max_explore_steps = 8;
  PeAgentKind pe_agent = PeAgentKind::UniformRandom;

  // Reads `explore_go.enabled`, `explore_go.K`, `explore_go.pe_agent`
  // (uniform | rnd).
  static ExploreGoConfig from(const KeyValueConfig& cfg);
};

struct EpisodePhase {
  int k = 0;  // exploration steps drawn for this episode
  int i = 0;  // steps taken so far in this episode

  bool exploring() const { return i < k; }
};

// Uniform over {0, ..., K}, both ends included.
int sample_k(Rng& rng, int max_explore_steps);

struct ExploreGoRollout {
  RolloutBuffer main;               // D_PPO
  RolloutBuffer pure_exploration;   // D_PE
};

class ExploreGoCollector {
 public:
  // Draws the first episode's k for every environment.
  ExploreGoCollector(int n_envs, int max_explore_steps, Rng k_rng);

  // rollout_len steps in every environment; phases persist across calls.
  ExploreGoRollout collect(VecEnv& envs, Agent& main, Agent& explorer, int rollout_len,
                           Rng& main_rng, Rng& explorer_rng);

  const std::vector<EpisodePhase>& phases() const { return phases_; }
  // Every k drawn so far, in draw order.
  const std::vector<int>& k_history() const { return k_history_; }

 private:
  int max_explore_steps_;
  Rng k_rng_;
  std::vector<EpisodePhase> phases_;
  std::vector<int> k_history_;
};

// The optional exploration-agent update on D_PE. A uniform-random agent
// reports NotTrainable, an empty buffer SkippedEmpty.
PeUpdate update_pe_agent(RolloutBuffer& pure_exploration, ExplorationAgent& explorer);

std::unique_ptr<ExplorationAgent> make_exploration_agent(PeAgentKind kind, int obs_size,
                                                         int num_actions, const PpoConfig& ppo,
                                                         const RndConfig& rnd, Rng& init_rng,
                                                         Rng minibatch_rng);

}  // namespace explore_go
