// Contextual-MDP abstraction shared by the environment, the analysis tools
// and the trainers. A state is an underlying grid position paired with an
// immutable task (context) that only determines the start cell and the
// background colour.
#pragma once

#include <Eigen/Core>

#include <compare>
#include <stdexcept>
#include <string>
#include <vector>

namespace explore_go {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct UsageError : std::logic_error {
  using std::logic_error::logic_error;
};

struct GridPos {
  int row = 0;
  int col = 0;

  auto operator<=>(const GridPos&) const = default;
};

std::string to_string(GridPos p);

struct Task {
  int id = 0;
  Eigen::Vector3d background = Eigen::Vector3d::Zero();
  GridPos start;
};

// Tasks are identified by id; colour and start cell are attributes.
inline bool operator==(const Task& a, const Task& b) { return a.id == b.id; }

enum class Action : int { Up = 0, Down = 1, Left = 2, Right = 3 };
inline constexpr int kNumCardinalActions = 4;

const char* to_string(Action a);
GridPos apply(Action a, GridPos p);

struct EnvState {
  GridPos position;
  Task task;
  int steps_elapsed = 0;
  bool terminal = false;
};

struct Transition {
  EnvState state;
  int action = 0;
  double reward = 0.0;
  EnvState next_state;
  bool done = false;
  // Timeout only; goal termination leaves this false so the critic can
  // bootstrap on truncation but not on termination.
  bool truncated = false;
};

// Result of the time-independent dynamics for one (position, action).
struct Outcome {
  GridPos position;
  double reward = 0.0;
  bool terminal = false;
};

// Channel-major image layout used to flatten observations.
struct ImageShape {
  int channels = 3;
  int rows = 5;
  int cols = 5;

  int size() const { return channels * rows * cols; }
  int index(int c, int r, int k) const { return (c * rows + r) * cols + k; }
};

class ContextualEnv {
 public:
  virtual ~ContextualEnv() = default;

  virtual int num_actions() const = 0;
  virtual int timeout() const = 0;
  virtual int rows() const = 0;
  virtual int cols() const = 0;
  virtual bool walkable(GridPos p) const = 0;
  virtual bool is_goal(GridPos p) const = 0;
  virtual Outcome dynamics(GridPos from, const Task& task, int action) const = 0;
  virtual ImageShape observation_shape() const = 0;
  virtual Eigen::VectorXd render(const EnvState& state) const = 0;

  // Every task this environment accepts in reset(), training and testing.
  virtual const std::vector<Task>& tasks() const = 0;

  virtual std::string action_name(int action) const;
  virtual bool tabular() const { return true; }

  int observation_size() const { return observation_shape().size(); }

  EnvState reset(const Task& task) const;
  Transition step(const EnvState& state, int action) const;
};

}  // namespace explore_go
