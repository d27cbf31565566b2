// explore-go: train, analyze and aggregate subcommands.
#include "explore_go/harness.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace fs = std::filesystem;
using namespace explore_go;

namespace {

ExperimentConfig load_config(const std::string& path) {
  return path.empty() ? ExperimentConfig{} : ExperimentConfig::load(path);
}

int train(const std::string& config_path, const std::string& algo, const std::string& seeds,
          const std::string& out, int threads) {
  ExperimentConfig config = load_config(config_path);
  config.algorithm = parse_algorithm(algo);
  if (!seeds.empty()) config.seeds = parse_seed_range(seeds);
  if (threads > 0) config.threads = threads;
  config.validate();

  const auto record = run_experiment(config, fs::path(out));
  int failures = 0;
  for (const auto& s : record.seeds) failures += s.failed ? 1 : 0;
  const auto rows = aggregate(record.seeds);
  if (!rows.empty()) {
    const auto& last = rows.back();
    std::cout << to_string(config.algorithm) << ": " << record.seeds.size() - failures
              << " seeds, step " << last.step << ", train " << last.train.mean << ", test "
              << last.test.mean << "\n";
  }
  if (failures) std::cout << failures << " seed(s) failed; see failed_seed*.txt\n";
  return failures ? 2 : 0;
}

int analyze_cmd(const std::string& config_path, const std::string& out) {
  const ExperimentConfig config = load_config(config_path);
  const CrossEnv env(config.env);
  const AnalysisReport report = analyze(env, config.ppo.gamma);
  std::cout << "reachable states: " << report.reachable.size() << "\n";
  for (const auto& [task, c] : report.classification) {
    std::cout << "task " << task.id << " colour (" << task.background.transpose() << ") start "
              << to_string(task.start) << ": " << to_string(c) << "\n";
  }
  std::cout << "abstraction table (full): " << report.tables.full.state_count() << " states, "
            << report.tables.full.columns.size() << " columns, "
            << report.tables.full.ties.size() << " ties\n";
  std::cout << "abstraction table (optimal trajectories): "
            << report.tables.on_policy.state_count() << " states\n";
  write_table_csv(std::cout, env, report.tables.full);
  write_analysis(env, report, out);
  return 0;
}

int aggregate_cmd(const std::vector<std::string>& inputs, const std::string& out) {
  std::vector<LabeledAggregate> series;
  for (const auto& dir : inputs) {
    const auto records = read_seed_records(dir);
    if (records.empty()) throw std::runtime_error("no metrics_seed*.csv files in " + dir);
    std::string label = fs::path(dir).lexically_normal().filename().string();
    if (label.empty()) label = fs::path(dir).lexically_normal().parent_path().filename().string();
    series.push_back({label, aggregate(records)});
    std::cout << label << ": " << records.size() << " seeds\n";
  }
  const fs::path out_path(out);
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  write_aggregate_csv(out_path, series);
  write_curves_svg(out_path.parent_path() / "curves.svg", series);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Explore-Go gridworld laboratory"};
  app.require_subcommand(1);

  std::string config_path, algo = "ppo", seeds, out;
  int threads = 0;
  auto* train_cmd = app.add_subcommand("train", "Train PPO or PPO+Explore-Go over seeds");
  train_cmd->add_option("--config", config_path, "Key-value config file");
  train_cmd->add_option("--algo", algo, "ppo | explore-go")
      ->check(CLI::IsMember({"ppo", "explore-go"}));
  train_cmd->add_option("--seeds", seeds, "Seed range a..b or list a,b,c");
  train_cmd->add_option("--out", out, "Output directory")->required();
  train_cmd->add_option("--threads", threads, "Parallel seeds (0 = hardware threads)");

  std::string analyze_config, analyze_out;
  auto* analyze = app.add_subcommand("analyze", "Reachability and abstraction tables");
  analyze->add_option("--config", analyze_config, "Key-value config file");
  analyze->add_option("--out", analyze_out, "Output directory")->required();

  std::vector<std::string> agg_in;
  std::string agg_out;
  auto* agg = app.add_subcommand("aggregate", "Mean and 95% CI over seeds, plus curves.svg");
  agg->add_option("--in", agg_in, "Training output directory (repeatable)")->required();
  agg->add_option("--out", agg_out, "Aggregate CSV path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) return train(config_path, algo, seeds, out, threads);
    if (*analyze) return analyze_cmd(analyze_config, analyze_out);
    if (*agg) return aggregate_cmd(agg_in, agg_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
