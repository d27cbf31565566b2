// Tabular analysis of a contextual MDP: which (position, task) pairs can be
// reached from the training start states, what the optimal policy does on
// them, and how the reachable states group under the optimal-action
// abstraction.
#pragma once

#include "explore_go/env.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace explore_go {

struct StateKey {
  GridPos position;
  int task_id = 0;

  auto operator<=>(const StateKey&) const = default;
};

class ReachableSet {
 public:
  ReachableSet() = default;
  ReachableSet(std::set<StateKey> states, std::vector<Task> origin)
      : states_(std::move(states)), origin_(std::move(origin)) {}

  bool contains(const StateKey& s) const { return states_.count(s) != 0; }
  std::size_t size() const { return states_.size(); }
  const std::set<StateKey>& states() const { return states_; }
  const std::vector<Task>& origin_tasks() const { return origin_; }

  friend bool operator==(const ReachableSet& a, const ReachableSet& b) {
    return a.states_ == b.states_;
  }

 private:
  std::set<StateKey> states_;
  std::vector<Task> origin_;
};

// Breadth-first closure under every action from every training start state.
// Terminal (goal) states are included but not expanded.
ReachableSet compute_reachable_set(const ContextualEnv& env, std::span<const Task> train_tasks);

// One more expansion of `set`; equals `set` at the fixpoint.
std::set<StateKey> expand_once(const ContextualEnv& env, const ReachableSet& set);

enum class Reachability { Reachable, Unreachable };
const char* to_string(Reachability r);

Reachability classify_task(const Task& task, const ReachableSet& reachable);

// Bit i set iff action i is optimal.
using ActionMask = std::uint32_t;

struct OptimalPolicy {
  std::map<StateKey, ActionMask> actions;
  std::map<StateKey, double> values;
  int iterations = 0;

  ActionMask at(const StateKey& s) const;
};

struct ValueIterationOptions {
  double gamma = 0.9;
  double tolerance = 1e-10;
  // Actions whose Q is within this of the max are kept as ties.
  double tie_tolerance = 1e-9;
  // Iteration cap is horizon_factor * timeout.
  int horizon_factor = 10;
};

// Value iteration over the non-terminal states of `states`. Every successor
// must itself be in `states`.
OptimalPolicy optimal_policy(const ContextualEnv& env, const ReachableSet& states,
                             const ValueIterationOptions& options = {});

struct AbstractionTable {
  std::vector<Task> rows;
  // One column per distinct optimal-action set, ordered by mask.
  std::vector<ActionMask> columns;
  // cells[row][column] -> positions
  std::vector<std::vector<std::vector<GridPos>>> cells;
  // States whose optimal action set has more than one element.
  std::vector<StateKey> ties;

  std::size_t state_count() const;
  // Distinct background colours per column.
  std::vector<int> column_color_spread() const;
  int column_of(ActionMask mask) const;
  int row_of(int task_id) const;
};

struct AbstractionTables {
  AbstractionTable full;
  // Only the states visited by following optimal actions from each training
  // start state.
  AbstractionTable on_policy;
};

AbstractionTables abstraction_table(const ContextualEnv& env, const ReachableSet& reachable,
                                    const OptimalPolicy& policy);

std::string action_mask_name(const ContextualEnv& env, ActionMask mask);

// rows=tasks, columns=action sets, cells=quoted ';'-separated position lists.
void write_table_csv(std::ostream& out, const ContextualEnv& env, const AbstractionTable& table);

}  // namespace explore_go
