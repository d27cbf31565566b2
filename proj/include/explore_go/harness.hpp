// Multi-seed experiments on the cross gridworld: PPO baseline versus PPO
// with Explore-Go, periodic evaluation on training and unreachable testing
// tasks, visitation diagnostics, aggregation and CSV/SVG output.
#pragma once

#include "explore_go/cross_env.hpp"
#include "explore_go/explore_go.hpp"
#include "explore_go/ppo.hpp"
#include "explore_go/reachability.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace explore_go {

enum class Algorithm { Ppo, ExploreGo };

const char* to_string(Algorithm a);
Algorithm parse_algorithm(const std::string& name);

// "a..b" (inclusive), "a,b,c" or a single number.
std::vector<std::uint64_t> parse_seed_range(const std::string& spec);

struct ExperimentConfig {
  Algorithm algorithm = Algorithm::Ppo;
  std::vector<std::uint64_t> seeds = parse_seed_range("0..19");
  int eval_every = 1000;
  int eval_episodes = 10;
  bool greedy_eval = false;
  // 0 means one per hardware thread.
  int threads = 0;

  CrossEnvConfig env = CrossEnvConfig::defaults();
  PpoConfig ppo;
  ExploreGoConfig explore_go;
  RndConfig rnd;

  // Reads `harness.*` plus every section the components read; unknown keys
  // are an error.
  static ExperimentConfig from(const KeyValueConfig& cfg);
  static ExperimentConfig load(const std::filesystem::path& path);
  void validate() const;

  bool uses_explore_go() const {
    return algorithm == Algorithm::ExploreGo && explore_go.enabled;
  }
};

// Empirical (position, task) visitation counts.
class VisitTable {
 public:
  void add(const StateKey& s, long count = 1);
  void add(const RolloutBuffer& buffer);
  void clear() { counts_.clear(), total_ = 0; }

  long total() const { return total_; }
  const std::map<StateKey, long>& counts() const { return counts_; }
  std::map<StateKey, double> frequencies() const;
  // |support within the reachable set| / |reachable set|.
  double coverage(const ReachableSet& reachable) const;
  // Shannon entropy in nats; 0 for an empty table.
  double entropy() const;

 private:
  std::map<StateKey, long> counts_;
  long total_ = 0;
};

VisitTable visit_diagnostics(std::span<const RolloutBuffer> main_stream);

// Mean undiscounted return over tasks x episodes_per_task. `policy` is
// called as policy(const EnvState&, const Eigen::VectorXd& obs, Rng&) -> int.
template <typename Policy>
double evaluate(const ContextualEnv& env, std::span<const Task> tasks, int episodes_per_task,
                Rng& rng, Policy&& policy) {
  if (tasks.empty() || episodes_per_task <= 0) return 0.0;
  double total = 0.0;
  for (const auto& task : tasks) {
    for (int ep = 0; ep < episodes_per_task; ++ep) {
      EnvState s = env.reset(task);
      for (;;) {
        const Eigen::VectorXd obs = env.render(s);
        const Transition t = env.step(s, policy(s, obs, rng));
        total += t.reward;
        if (t.done) break;
        s = t.next_state;
      }
    }
  }
  return total / (static_cast<double>(tasks.size()) * episodes_per_task);
}

double evaluate(const ActorCritic& net, const ContextualEnv& env, std::span<const Task> tasks,
                int episodes_per_task, Rng& rng, bool greedy = false);

struct EvalPoint {
  long step = 0;
  double train_return = 0.0;
  double test_return = 0.0;
  long d_ppo_transitions = 0;
  // Over main-agent training data since the previous evaluation point.
  double coverage = 0.0;
  double entropy = 0.0;

  bool operator==(const EvalPoint&) const = default;
};

struct SeedRecord {
  std::uint64_t seed = 0;
  std::vector<EvalPoint> points;
  bool failed = false;
  std::string failure;
  bool resumed = false;
};

struct ExperimentRecord {
  Algorithm algorithm = Algorithm::Ppo;
  std::vector<SeedRecord> seeds;
};

// One full training run. With an output directory, writes
// metrics_seed<N>.csv and train_stats_seed<N>.csv on success (or
// failed_seed<N>.txt), and returns the stored record without training if
// metrics_seed<N>.csv already exists.
SeedRecord run_seed(const ExperimentConfig& config, std::uint64_t seed,
                    const std::optional<std::filesystem::path>& out_dir = std::nullopt);

// All seeds, possibly on several threads; results in seed order.
ExperimentRecord run_experiment(const ExperimentConfig& config,
                                const std::optional<std::filesystem::path>& out_dir = std::nullopt);

struct MeanCi {
  double mean = 0.0;
  // Normal-approximation half-width; absent with fewer than two values.
  std::optional<double> half_width;
  int n = 0;
};

MeanCi mean_ci(std::span<const double> values, double confidence = 0.95);

struct AggregateRow {
  long step = 0;
  MeanCi train;
  MeanCi test;
};

// Per evaluation step across non-failed seeds.
std::vector<AggregateRow> aggregate(std::span<const SeedRecord> records, double confidence = 0.95);

void write_metrics_csv(const std::filesystem::path& path, const std::vector<EvalPoint>& points);
std::vector<EvalPoint> read_metrics_csv(const std::filesystem::path& path);

// Reads every metrics_seed<N>.csv in `dir`.
std::vector<SeedRecord> read_seed_records(const std::filesystem::path& dir);

struct LabeledAggregate {
  std::string label;
  std::vector<AggregateRow> rows;
};

void write_aggregate_csv(const std::filesystem::path& path, std::span<const LabeledAggregate> series);

// Two panels (training and testing return), one line with a shaded
// confidence band per series.
void write_curves_svg(const std::filesystem::path& path, std::span<const LabeledAggregate> series);

struct AnalysisReport {
  ReachableSet reachable;
  std::vector<std::pair<Task, Reachability>> classification;
  OptimalPolicy policy;
  AbstractionTables tables;
};

AnalysisReport analyze(const CrossEnv& env, double gamma);

// abstraction_table.csv, abstraction_table_on_policy.csv and
// reachability.csv under `out_dir`.
void write_analysis(const CrossEnv& env, const AnalysisReport& report,
                    const std::filesystem::path& out_dir);

}  // namespace explore_go
