#include "explore_go/cross_env.hpp"

#include <algorithm>
#include <set>

namespace explore_go {
namespace {

Task make_task(int id, double r, double g, double b, GridPos start) {
  Task t;
  t.id = id;
  t.background = Eigen::Vector3d(r, g, b);
  t.start = start;
  return t;
}

// `r g b row col`
Task parse_task(const KeyValueConfig& cfg, const std::string& key, int id) {
  auto v = cfg.get_doubles(key);
  if (v.size() != 5) {
    throw ConfigError("config key '" + key + "': expected 'r g b row col', got " +
                      std::to_string(v.size()) + " values");
  }
  return make_task(id, v[0], v[1], v[2],
                   GridPos{static_cast<int>(v[3]), static_cast<int>(v[4])});
}

std::vector<Task> parse_task_list(const KeyValueConfig& cfg, const std::string& prefix,
                                  int first_id) {
  std::vector<std::pair<int, std::string>> keyed;
  for (const auto& key : cfg.keys_with_prefix(prefix)) {
    const std::string suffix = key.substr(prefix.size() + 1);
    try {
      keyed.emplace_back(std::stoi(suffix), key);
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "': task index must be an integer");
    }
  }
  std::sort(keyed.begin(), keyed.end());
  std::vector<Task> out;
  for (const auto& [index, key] : keyed) {
    out.push_back(parse_task(cfg, key, first_id + static_cast<int>(out.size())));
  }
  return out;
}

}  // namespace

CrossEnvConfig CrossEnvConfig::defaults() {
  CrossEnvConfig c;
  c.train_tasks = {
      make_task(0, 0, 0, 1, kNorthEnd),
      make_task(1, 0, 1, 0, kEastEnd),
      make_task(2, 1, 0, 0, kSouthEnd),
      make_task(3, 1, 0, 1, kWestEnd),
  };
  c.test_tasks = {
      make_task(4, 1, 1, 1, kNorthEnd),
      make_task(5, 1, 1, 1, kEastEnd),
      make_task(6, 1, 1, 1, kSouthEnd),
      make_task(7, 1, 1, 1, kWestEnd),
  };
  return c;
}

CrossEnvConfig CrossEnvConfig::from(const KeyValueConfig& cfg) {
  CrossEnvConfig c = defaults();
  if (auto goal = cfg.get_doubles("env.goal"); !goal.empty()) {
    if (goal.size() != 2) throw ConfigError("config key 'env.goal': expected 'row col'");
    c.goal = GridPos{static_cast<int>(goal[0]), static_cast<int>(goal[1])};
  }
  c.timeout = cfg.get_int("env.timeout", c.timeout);
  auto train = parse_task_list(cfg, "env.train_task", 0);
  if (!train.empty()) c.train_tasks = std::move(train);
  auto test = parse_task_list(cfg, "env.test_task", static_cast<int>(c.train_tasks.size()));
  if (!test.empty()) {
    c.test_tasks = std::move(test);
  } else {
    for (std::size_t i = 0; i < c.test_tasks.size(); ++i) {
      c.test_tasks[i].id = static_cast<int>(c.train_tasks.size() + i);
    }
  }
  c.validate();
  return c;
}

void CrossEnvConfig::validate() const {
  if (timeout <= 0) throw ConfigError("env.timeout must be positive");
  if (train_tasks.empty()) throw ConfigError("at least one training task is required");
  const bool goal_on_cross = (goal.row == 2 && goal.col >= 0 && goal.col < 5) ||
                             (goal.col == 2 && goal.row >= 0 && goal.row < 5);
  if (!goal_on_cross) throw ConfigError("env.goal " + to_string(goal) + " is not on the cross");
  std::set<int> ids;
  auto check = [&](const Task& t) {
    if (!ids.insert(t.id).second) throw ConfigError("duplicate task id " + std::to_string(t.id));
    for (int ch = 0; ch < 3; ++ch) {
      if (!(t.background[ch] >= 0.0 && t.background[ch] <= 1.0)) {
        throw ConfigError("task " + std::to_string(t.id) + ": colour outside [0,1]");
      }
    }
    const bool on_cross = (t.start.row == 2 && t.start.col >= 0 && t.start.col < 5) ||
                          (t.start.col == 2 && t.start.row >= 0 && t.start.row < 5);
    if (!on_cross || t.start == goal) {
      throw ConfigError("task " + std::to_string(t.id) + ": start " + to_string(t.start) +
                        " is not a walkable non-goal cell");
    }
  };
  for (const auto& t : train_tasks) check(t);
  for (const auto& t : test_tasks) check(t);
}

std::vector<Task> training_tasks() { return CrossEnvConfig::defaults().train_tasks; }
std::vector<Task> testing_tasks() { return CrossEnvConfig::defaults().test_tasks; }

CrossEnv::CrossEnv(CrossEnvConfig config) : config_(std::move(config)) {
  config_.validate();
  all_tasks_ = config_.train_tasks;
  all_tasks_.insert(all_tasks_.end(), config_.test_tasks.begin(), config_.test_tasks.end());
}

bool CrossEnv::walkable(GridPos p) const {
  if (p.row < 0 || p.row >= 5 || p.col < 0 || p.col >= 5) return false;
  return p.row == 2 || p.col == 2;
}

bool CrossEnv::is_endpoint(GridPos p) {
  return p == kNorthEnd || p == kEastEnd || p == kSouthEnd || p == kWestEnd;
}

std::optional<GridPos> CrossEnv::teleport(GridPos endpoint, Action action) {
  if (endpoint == kNorthEnd) {
    if (action == Action::Right) return kEastEnd;
    if (action == Action::Left) return kWestEnd;
  } else if (endpoint == kEastEnd) {
    if (action == Action::Up) return kNorthEnd;
    if (action == Action::Down) return kSouthEnd;
  } else if (endpoint == kSouthEnd) {
    if (action == Action::Right) return kEastEnd;
    if (action == Action::Left) return kWestEnd;
  } else if (endpoint == kWestEnd) {
    if (action == Action::Up) return kNorthEnd;
    if (action == Action::Down) return kSouthEnd;
  }
  return std::nullopt;
}

Outcome CrossEnv::dynamics(GridPos from, const Task& /*task*/, int action) const {
  if (action < 0 || action >= kNumCardinalActions) {
    throw UsageError("CrossEnv: action out of range");
  }
  const auto a = static_cast<Action>(action);
  GridPos next = apply(a, from);
  if (!walkable(next)) {
    next = teleport(from, a).value_or(from);
  }
  Outcome out;
  out.position = next;
  out.terminal = is_goal(next);
  out.reward = out.terminal ? 1.0 : 0.0;
  return out;
}

Eigen::VectorXd CrossEnv::render(const EnvState& state) const {
  if (state.terminal) throw UsageError("render: terminal states have no observation");
  const ImageShape shape = observation_shape();
  Eigen::VectorXd obs(shape.size());
  for (int c = 0; c < 3; ++c) {
    obs.segment(c * 25, 25).setConstant(state.task.background[c]);
    obs[shape.index(c, config_.goal.row, config_.goal.col)] = kGoalColor[c];
    obs[shape.index(c, state.position.row, state.position.col)] = kAgentColor[c];
  }
  return obs;
}

std::string CrossEnv::action_name(int action) const {
  if (action < 0 || action >= kNumCardinalActions) return ContextualEnv::action_name(action);
  return to_string(static_cast<Action>(action));
}

}  // namespace explore_go
