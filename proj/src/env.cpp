#include "explore_go/env.hpp"

#include <algorithm>

namespace explore_go {

std::string to_string(GridPos p) {
  return "(" + std::to_string(p.row) + "," + std::to_string(p.col) + ")";
}

const char* to_string(Action a) {
  switch (a) {
    case Action::Up: return "Up";
    case Action::Down: return "Down";
    case Action::Left: return "Left";
    case Action::Right: return "Right";
  }
  return "?";
}

GridPos apply(Action a, GridPos p) {
  switch (a) {
    case Action::Up: return {p.row - 1, p.col};
    case Action::Down: return {p.row + 1, p.col};
    case Action::Left: return {p.row, p.col - 1};
    case Action::Right: return {p.row, p.col + 1};
  }
  return p;
}

std::string ContextualEnv::action_name(int action) const {
  return "a" + std::to_string(action);
}

EnvState ContextualEnv::reset(const Task& task) const {
  const auto& known = tasks();
  auto it = std::find(known.begin(), known.end(), task);
  if (it == known.end()) {
    throw ConfigError("reset: unknown task id " + std::to_string(task.id));
  }
  EnvState s;
  s.task = *it;
  s.position = it->start;
  return s;
}

Transition ContextualEnv::step(const EnvState& state, int action) const {
  if (state.terminal) throw UsageError("step: state is terminal");
  if (state.steps_elapsed >= timeout()) throw UsageError("step: episode already timed out");
  if (action < 0 || action >= num_actions()) {
    throw UsageError("step: action " + std::to_string(action) + " out of range");
  }

  const Outcome out = dynamics(state.position, state.task, action);
  Transition t;
  t.state = state;
  t.action = action;
  t.reward = out.reward;
  t.next_state = state;
  t.next_state.position = out.position;
  t.next_state.steps_elapsed = state.steps_elapsed + 1;
  t.next_state.terminal = out.terminal;
  t.truncated = !out.terminal && t.next_state.steps_elapsed >= timeout();
  t.done = out.terminal || t.truncated;
  return t;
}

}  // namespace explore_go
