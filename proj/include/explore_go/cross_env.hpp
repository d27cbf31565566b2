// Cross-shaped 5x5 gridworld. The nine walkable cells are the middle row and
// the middle column; the four arm tips are joined in a cycle by extra moves
// (N-Right -> E, E-Down -> S, S-Left -> W, W-Up -> N and their reverses).
// Entering the goal pays 1 and ends the episode; everything else pays 0.
#pragma once

#include "explore_go/config.hpp"
#include "explore_go/env.hpp"

#include <array>
#include <optional>
#include <vector>

namespace explore_go {

inline constexpr GridPos kNorthEnd{0, 2};
inline constexpr GridPos kEastEnd{2, 4};
inline constexpr GridPos kSouthEnd{4, 2};
inline constexpr GridPos kWestEnd{2, 0};

inline const Eigen::Vector3d kGoalColor{0.0, 0.5, 0.0};
inline const Eigen::Vector3d kAgentColor{0.5, 0.0, 0.0};

struct CrossEnvConfig {
  GridPos goal{2, 2};
  int timeout = 20;
  std::vector<Task> train_tasks;
  std::vector<Task> test_tasks;

  // Blue/green/red/magenta at N/E/S/W for training; white at every endpoint
  // for testing.
  static CrossEnvConfig defaults();

  // Reads `env.*` keys; missing keys keep their defaults. A task list given
  // in the file replaces the default list entirely.
  static CrossEnvConfig from(const KeyValueConfig& cfg);

  void validate() const;
};

std::vector<Task> training_tasks();
std::vector<Task> testing_tasks();

class CrossEnv final : public ContextualEnv {
 public:
  explicit CrossEnv(CrossEnvConfig config = CrossEnvConfig::defaults());

  int num_actions() const override { return kNumCardinalActions; }
  int timeout() const override { return config_.timeout; }
  int rows() const override { return 5; }
  int cols() const override { return 5; }
  bool walkable(GridPos p) const override;
  bool is_goal(GridPos p) const override { return p == config_.goal; }
  Outcome dynamics(GridPos from, const Task& task, int action) const override;
  ImageShape observation_shape() const override { return {3, 5, 5}; }
  Eigen::VectorXd render(const EnvState& state) const override;
  const std::vector<Task>& tasks() const override { return all_tasks_; }
  std::string action_name(int action) const override;

  const CrossEnvConfig& config() const { return config_; }
  const std::vector<Task>& train_tasks() const { return config_.train_tasks; }
  const std::vector<Task>& test_tasks() const { return config_.test_tasks; }

  // Endpoint reached by the cycle move, if `action` at `endpoint` is one.
  static std::optional<GridPos> teleport(GridPos endpoint, Action action);
  static bool is_endpoint(GridPos p);

 private:
  CrossEnvConfig config_;
  std::vector<Task> all_tasks_;
};

}  // namespace explore_go
