#include "explore_go/reachability.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <deque>
#include <limits>
#include <ostream>

namespace explore_go {
namespace {

const Task& task_by_id(const ContextualEnv& env, int id) {
  for (const auto& t : env.tasks()) {
    if (t.id == id) return t;
  }
  throw ConfigError("unknown task id " + std::to_string(id));
}

void require_tabular(const ContextualEnv& env) {
  if (!env.tabular()) throw UsageError("reachability analysis needs a tabular environment");
}

AbstractionTable build_table(const ContextualEnv& env, std::span<const Task> tasks,
                             const std::set<StateKey>& states, const OptimalPolicy& policy) {
  AbstractionTable table;
  table.rows.assign(tasks.begin(), tasks.end());

  std::set<ActionMask> masks;
  for (const auto& s : states) {
    if (env.is_goal(s.position)) continue;
    masks.insert(policy.at(s));
  }
  table.columns.assign(masks.begin(), masks.end());
  table.cells.assign(table.rows.size(),
                     std::vector<std::vector<GridPos>>(table.columns.size()));

  for (const auto& s : states) {
    if (env.is_goal(s.position)) continue;
    const ActionMask mask = policy.at(s);
    const int row = table.row_of(s.task_id);
    if (row < 0) continue;
    table.cells[row][table.column_of(mask)].push_back(s.position);
    if (std::popcount(mask) > 1) table.ties.push_back(s);
  }
  return table;
}

}  // namespace

ReachableSet compute_reachable_set(const ContextualEnv& env, std::span<const Task> train_tasks) {
  require_tabular(env);
  std::set<StateKey> seen;
  std::deque<StateKey> frontier;
  for (const auto& task : train_tasks) {
    const EnvState start = env.reset(task);
    StateKey key{start.position, task.id};
    if (seen.insert(key).second) frontier.push_back(key);
  }
  while (!frontier.empty()) {
    const StateKey s = frontier.front();
    frontier.pop_front();
    if (env.is_goal(s.position)) continue;
    const Task& task = task_by_id(env, s.task_id);
    for (int a = 0; a < env.num_actions(); ++a) {
      const Outcome out = env.dynamics(s.position, task, a);
      StateKey next{out.position, s.task_id};
      if (seen.insert(next).second) frontier.push_back(next);
    }
  }
  return ReachableSet(std::move(seen), {train_tasks.begin(), train_tasks.end()});
}

std::set<StateKey> expand_once(const ContextualEnv& env, const ReachableSet& set) {
  std::set<StateKey> out = set.states();
  for (const auto& s : set.states()) {
    if (env.is_goal(s.position)) continue;
    const Task& task = task_by_id(env, s.task_id);
    for (int a = 0; a < env.num_actions(); ++a) {
      out.insert(StateKey{env.dynamics(s.position, task, a).position, s.task_id});
    }
  }
  return out;
}

const char* to_string(Reachability r) {
  return r == Reachability::Reachable ? "reachable" : "unreachable";
}

Reachability classify_task(const Task& task, const ReachableSet& reachable) {
  return reachable.contains(StateKey{task.start, task.id}) ? Reachability::Reachable
                                                           : Reachability::Unreachable;
}

ActionMask OptimalPolicy::at(const StateKey& s) const {
  auto it = actions.find(s);
  if (it == actions.end()) {
    throw UsageError("optimal policy undefined at " + to_string(s.position) + " task " +
                     std::to_string(s.task_id));
  }
  return it->second;
}

OptimalPolicy optimal_policy(const ContextualEnv& env, const ReachableSet& states,
                             const ValueIterationOptions& options) {
  require_tabular(env);
  if (env.num_actions() > 32) throw UsageError("optimal_policy: at most 32 actions supported");

  struct Edge {
    std::size_t next;  // index into keys, or npos for terminal
    double reward;
  };
  constexpr auto npos = std::numeric_limits<std::size_t>::max();

  std::vector<StateKey> keys;
  std::map<StateKey, std::size_t> index;
  for (const auto& s : states.states()) {
    if (env.is_goal(s.position)) continue;
    index[s] = keys.size();
    keys.push_back(s);
  }

  const int na = env.num_actions();
  std::vector<Edge> edges(keys.size() * na);
  for (std::size_t i = 0; i < keys.size(); ++i) {
    const Task& task = task_by_id(env, keys[i].task_id);
    for (int a = 0; a < na; ++a) {
      const Outcome out = env.dynamics(keys[i].position, task, a);
      Edge e{npos, out.reward};
      if (!out.terminal) {
        auto it = index.find(StateKey{out.position, keys[i].task_id});
        if (it == index.end()) {
          throw UsageError("optimal_policy: state set is not closed under the dynamics");
        }
        e.next = it->second;
      }
      edges[i * na + a] = e;
    }
  }

  auto q_value = [&](const Eigen::VectorXd& v, std::size_t i, int a) {
    const Edge& e = edges[i * na + a];
    return e.reward + (e.next == npos ? 0.0 : options.gamma * v[e.next]);
  };

  Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(keys.size()));
  OptimalPolicy policy;
  const int cap = options.horizon_factor * env.timeout();
  for (policy.iterations = 0; policy.iterations < cap;) {
    Eigen::VectorXd next(v.size());
    for (std::size_t i = 0; i < keys.size(); ++i) {
      double best = -std::numeric_limits<double>::infinity();
      for (int a = 0; a < na; ++a) best = std::max(best, q_value(v, i, a));
      next[i] = best;
    }
    ++policy.iterations;
    const double delta = keys.empty() ? 0.0 : (next - v).cwiseAbs().maxCoeff();
    v = std::move(next);
    if (delta < options.tolerance) break;
  }

  for (std::size_t i = 0; i < keys.size(); ++i) {
    double best = -std::numeric_limits<double>::infinity();
    for (int a = 0; a < na; ++a) best = std::max(best, q_value(v, i, a));
    ActionMask mask = 0;
    for (int a = 0; a < na; ++a) {
      if (q_value(v, i, a) >= best - options.tie_tolerance) mask |= ActionMask{1} << a;
    }
    policy.actions[keys[i]] = mask;
    policy.values[keys[i]] = v[i];
  }
  return policy;
}

std::size_t AbstractionTable::state_count() const {
  std::size_t n = 0;
  for (const auto& row : cells) {
    for (const auto& cell : row) n += cell.size();
  }
  return n;
}

std::vector<int> AbstractionTable::column_color_spread() const {
  std::vector<int> spread(columns.size(), 0);
  for (std::size_t c = 0; c < columns.size(); ++c) {
    std::set<std::array<double, 3>> colors;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (cells[r][c].empty()) continue;
      const auto& bg = rows[r].background;
      colors.insert({bg[0], bg[1], bg[2]});
    }
    spread[c] = static_cast<int>(colors.size());
  }
  return spread;
}

int AbstractionTable::column_of(ActionMask mask) const {
  auto it = std::find(columns.begin(), columns.end(), mask);
  return it == columns.end() ? -1 : static_cast<int>(it - columns.begin());
}

int AbstractionTable::row_of(int task_id) const {
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].id == task_id) return static_cast<int>(r);
  }
  return -1;
}

AbstractionTables abstraction_table(const ContextualEnv& env, const ReachableSet& reachable,
                                    const OptimalPolicy& policy) {
  const auto& tasks = reachable.origin_tasks();
  AbstractionTables out;
  out.full = build_table(env, tasks, reachable.states(), policy);

  // Follow every optimal action (ties branch) from each start state.
  std::set<StateKey> on_path;
  std::deque<StateKey> frontier;
  for (const auto& task : tasks) {
    StateKey s{task.start, task.id};
    if (on_path.insert(s).second) frontier.push_back(s);
  }
  while (!frontier.empty()) {
    const StateKey s = frontier.front();
    frontier.pop_front();
    if (env.is_goal(s.position)) continue;
    const Task& task = task_by_id(env, s.task_id);
    const ActionMask mask = policy.at(s);
    for (int a = 0; a < env.num_actions(); ++a) {
      if (!(mask & (ActionMask{1} << a))) continue;
      const Outcome o = env.dynamics(s.position, task, a);
      StateKey next{o.position, s.task_id};
      if (on_path.insert(next).second) frontier.push_back(next);
    }
  }
  out.on_policy = build_table(env, tasks, on_path, policy);
  return out;
}

std::string action_mask_name(const ContextualEnv& env, ActionMask mask) {
  std::string name;
  for (int a = 0; a < env.num_actions(); ++a) {
    if (!(mask & (ActionMask{1} << a))) continue;
    if (!name.empty()) name += "|";
    name += env.action_name(a);
  }
  return name.empty() ? "none" : name;
}

void write_table_csv(std::ostream& out, const ContextualEnv& env, const AbstractionTable& table) {
  out << "task";
  for (ActionMask m : table.columns) out << "," << action_mask_name(env, m);
  out << "\n";
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    out << table.rows[r].id;
    for (std::size_t c = 0; c < table.columns.size(); ++c) {
      auto cell = table.cells[r][c];
      std::sort(cell.begin(), cell.end());
      out << ",\"";
      for (std::size_t i = 0; i < cell.size(); ++i) {
        if (i) out << ";";
        out << to_string(cell[i]);
      }
      out << "\"";
    }
    out << "\n";
  }
}

}  // namespace explore_go
