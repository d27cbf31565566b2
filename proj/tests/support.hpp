// Small tabular environments and oracles shared by the unit tests.
#pragma once

#include "explore_go/env.hpp"
#include "explore_go/reachability.hpp"

#include <random>
#include <set>
#include <vector>

namespace explore_go::testing {

// Cells 0..n-1 laid out on one row; dynamics given by an explicit outcome
// table. Observation is the one-hot cell index.
class TableEnv final : public ContextualEnv {
 public:
  TableEnv(int cells, int actions, std::vector<std::vector<Outcome>> table,
           std::set<int> terminal, std::vector<Task> tasks, int timeout)
      : cells_(cells),
        actions_(actions),
        table_(std::move(table)),
        terminal_(std::move(terminal)),
        tasks_(std::move(tasks)),
        timeout_(timeout) {}

  int num_actions() const override { return actions_; }
  int timeout() const override { return timeout_; }
  int rows() const override { return 1; }
  int cols() const override { return cells_; }
  bool walkable(GridPos p) const override { return p.row == 0 && p.col >= 0 && p.col < cells_; }
  bool is_goal(GridPos p) const override { return terminal_.count(p.col) != 0; }
  Outcome dynamics(GridPos from, const Task&, int action) const override {
    return table_[from.col][action];
  }
  ImageShape observation_shape() const override { return {1, 1, cells_}; }
  Eigen::VectorXd render(const EnvState& s) const override {
    Eigen::VectorXd obs = Eigen::VectorXd::Zero(cells_);
    obs[s.position.col] = 1.0;
    return obs;
  }
  const std::vector<Task>& tasks() const override { return tasks_; }

 private:
  int cells_;
  int actions_;
  std::vector<std::vector<Outcome>> table_;
  std::set<int> terminal_;
  std::vector<Task> tasks_;
  int timeout_;
};

inline Task cell_task(int id, int cell) {
  Task t;
  t.id = id;
  t.start = GridPos{0, cell};
  t.background = Eigen::Vector3d::Constant(0.1 * id);
  return t;
}

// Random deterministic graph; cell n-1 is the rewarding terminal.
inline TableEnv random_table_env(std::mt19937_64& rng, int cells, int actions, int num_tasks) {
  std::uniform_int_distribution<int> pick(0, cells - 1);
  std::vector<std::vector<Outcome>> table(cells, std::vector<Outcome>(actions));
  const int goal = cells - 1;
  for (int c = 0; c < cells; ++c) {
    for (int a = 0; a < actions; ++a) {
      const int next = pick(rng);
      table[c][a] = Outcome{GridPos{0, next}, next == goal ? 1.0 : 0.0, next == goal};
    }
  }
  std::vector<Task> tasks;
  std::uniform_int_distribution<int> start(0, cells - 2);
  for (int t = 0; t < num_tasks; ++t) tasks.push_back(cell_task(t, start(rng)));
  return TableEnv(cells, actions, std::move(table), {goal}, std::move(tasks), 4 * cells);
}

// Three one-step decision states; the paying action is (cell % 2). Every
// action ends the episode in the sink cell 3.
inline TableEnv bandit_env() {
  std::vector<std::vector<Outcome>> table(4, std::vector<Outcome>(2));
  for (int c = 0; c < 3; ++c) {
    for (int a = 0; a < 2; ++a) table[c][a] = Outcome{GridPos{0, 3}, a == c % 2 ? 1.0 : 0.0, true};
  }
  table[3] = {Outcome{GridPos{0, 3}, 0.0, true}, Outcome{GridPos{0, 3}, 0.0, true}};
  return TableEnv(4, 2, std::move(table), {3}, {cell_task(0, 0), cell_task(1, 1), cell_task(2, 2)},
                  1);
}

// Every state visited by some action sequence of length <= depth from the
// tasks' start states, enumerated sequence by sequence without memoisation.
inline std::set<StateKey> all_sequence_states(const ContextualEnv& env,
                                              const std::vector<Task>& tasks, int depth) {
  std::set<StateKey> seen;
  for (const auto& task : tasks) {
    std::vector<int> seq(depth, 0);
    // Odometer over num_actions^depth sequences.
    for (;;) {
      GridPos p = task.start;
      seen.insert({p, task.id});
      for (int k = 0; k < depth && !env.is_goal(p); ++k) {
        p = env.dynamics(p, task, seq[k]).position;
        seen.insert({p, task.id});
      }
      int k = 0;
      while (k < depth && ++seq[k] == env.num_actions()) seq[k++] = 0;
      if (k == depth) break;
    }
  }
  return seen;
}

}  // namespace explore_go::testing
