#include "explore_go/harness.hpp"

#include <boost/math/distributions/normal.hpp>

#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <regex>
#include <sstream>
#include <thread>

namespace explore_go {
namespace fs = std::filesystem;

const char* to_string(Algorithm a) { return a == Algorithm::Ppo ? "ppo" : "explore-go"; }

Algorithm parse_algorithm(const std::string& name) {
  if (name == "ppo") return Algorithm::Ppo;
  if (name == "explore-go" || name == "explore_go") return Algorithm::ExploreGo;
  throw ConfigError("unknown algorithm '" + name + "' (expected ppo or explore-go)");
}

std::vector<std::uint64_t> parse_seed_range(const std::string& spec) {
  auto number = [&](const std::string& s) -> std::uint64_t {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw ConfigError("bad seed specification '" + spec + "'");
    }
  };
  std::vector<std::uint64_t> out;
  if (auto dots = spec.find(".."); dots != std::string::npos) {
    const auto a = number(spec.substr(0, dots));
    const auto b = number(spec.substr(dots + 2));
    if (b < a) throw ConfigError("empty seed range '" + spec + "'");
    for (auto s = a; s <= b; ++s) out.push_back(s);
    return out;
  }
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(number(item));
  if (out.empty()) throw ConfigError("no seeds in '" + spec + "'");
  return out;
}

ExperimentConfig ExperimentConfig::from(const KeyValueConfig& cfg) {
  ExperimentConfig c;
  c.algorithm = parse_algorithm(cfg.get_string("harness.algorithm", to_string(c.algorithm)));
  if (auto s = cfg.raw("harness.seeds")) c.seeds = parse_seed_range(*s);
  c.eval_every = cfg.get_int("harness.eval_every", c.eval_every);
  c.eval_episodes = cfg.get_int("harness.eval_episodes", c.eval_episodes);
  c.greedy_eval = cfg.get_bool("harness.greedy_eval", c.greedy_eval);
  c.threads = cfg.get_int("harness.threads", c.threads);
  c.env = CrossEnvConfig::from(cfg);
  c.ppo = PpoConfig::from(cfg);
  c.explore_go = ExploreGoConfig::from(cfg);
  c.rnd = RndConfig::from(cfg);
  cfg.check_all_consumed();
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
  return from(KeyValueConfig::load(path));
}

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw ConfigError("harness: no seeds");
  std::set<std::uint64_t> distinct(seeds.begin(), seeds.end());
  if (distinct.size() != seeds.size()) throw ConfigError("harness: seeds must be distinct");
  if (eval_every <= 0) throw ConfigError("harness.eval_every must be positive");
  if (eval_episodes <= 0) throw ConfigError("harness.eval_episodes must be positive");
  if (threads < 0) throw ConfigError("harness.threads must be >= 0");
  env.validate();
  ppo.validate();
}

void VisitTable::add(const StateKey& s, long count) {
  counts_[s] += count;
  total_ += count;
}

void VisitTable::add(const RolloutBuffer& buffer) {
  buffer.for_each([&](const StepRecord& r) { add(StateKey{r.position, r.task_id}); });
}

std::map<StateKey, double> VisitTable::frequencies() const {
  std::map<StateKey, double> out;
  for (const auto& [k, c] : counts_) out[k] = static_cast<double>(c) / static_cast<double>(total_);
  return out;
}

double VisitTable::coverage(const ReachableSet& reachable) const {
  if (reachable.size() == 0) return 0.0;
  std::size_t hit = 0;
  for (const auto& [k, c] : counts_) {
    if (c > 0 && reachable.contains(k)) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(reachable.size());
}

double VisitTable::entropy() const {
  double h = 0.0;
  for (const auto& [k, c] : counts_) {
    if (c <= 0) continue;
    const double p = static_cast<double>(c) / static_cast<double>(total_);
    h -= p * std::log(p);
  }
  return h;
}

VisitTable visit_diagnostics(std::span<const RolloutBuffer> main_stream) {
  VisitTable table;
  for (const auto& b : main_stream) table.add(b);
  return table;
}

double evaluate(const ActorCritic& net, const ContextualEnv& env, std::span<const Task> tasks,
                int episodes_per_task, Rng& rng, bool greedy) {
  return evaluate(env, tasks, episodes_per_task, rng,
                  [&](const EnvState&, const Eigen::VectorXd& obs, Rng& r) {
                    const auto dist = net.policy(obs);
                    return greedy ? dist.mode() : dist.sample(r);
                  });
}

namespace {

std::ofstream open_csv(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.imbue(std::locale::classic());
  out << std::fixed << std::setprecision(8);
  return out;
}

void commit(const fs::path& tmp, const fs::path& final_path) { fs::rename(tmp, final_path); }

fs::path seed_file(const fs::path& dir, const std::string& stem, std::uint64_t seed,
                   const std::string& ext) {
  return dir / (stem + std::to_string(seed) + ext);
}

struct TrainRow {
  long step;
  std::optional<double> train_return;
  UpdateStats stats;
  std::size_t d_ppo;
  std::size_t d_pe;
};

void write_train_stats(const fs::path& path, const std::vector<TrainRow>& rows) {
  auto out = open_csv(path);
  out << "step,train_return,entropy,policy_loss,value_loss,clip_fraction,d_ppo,d_pe\n";
  for (const auto& r : rows) {
    out << r.step << ",";
    if (r.train_return) out << *r.train_return;
    out << "," << r.stats.entropy << "," << r.stats.policy_loss << "," << r.stats.value_loss
        << "," << r.stats.clip_fraction << "," << r.d_ppo << "," << r.d_pe << "\n";
  }
}

}  // namespace

SeedRecord run_seed(const ExperimentConfig& config, std::uint64_t seed,
                    const std::optional<fs::path>& out_dir) {
  SeedRecord record;
  record.seed = seed;
  if (out_dir) {
    const auto metrics = seed_file(*out_dir, "metrics_seed", seed, ".csv");
    if (fs::exists(metrics)) {
      record.points = read_metrics_csv(metrics);
      record.resumed = true;
      return record;
    }
  }

  const CrossEnv env(config.env);
  const PpoConfig& ppo = config.ppo;
  Rng init_rng = make_stream(seed, Stream::NetworkInit);
  Rng action_rng = make_stream(seed, Stream::PolicyActions);
  Rng minibatch_rng = make_stream(seed, Stream::Minibatches);
  Rng eval_rng = make_stream(seed, Stream::Evaluation);
  Rng explore_rng = make_stream(seed, Stream::ExploreActions);
  Rng explore_init_rng = make_stream(seed, Stream::ExploreInit);

  ActorCritic net(env.observation_size(), env.num_actions(), ppo.hidden, ppo.adam, init_rng);
  VecEnv envs(env, env.train_tasks(), ppo.n_envs, make_stream(seed, Stream::EnvTasks));
  const ReachableSet reachable = compute_reachable_set(env, env.train_tasks());

  const bool explore_go = config.uses_explore_go();
  std::optional<ExploreGoCollector> collector;
  std::unique_ptr<ExplorationAgent> explorer;
  if (explore_go) {
    collector.emplace(ppo.n_envs, config.explore_go.max_explore_steps,
                      make_stream(seed, Stream::ExploreLength));
    explorer = make_exploration_agent(config.explore_go.pe_agent, env.observation_size(),
                                      env.num_actions(), ppo, config.rnd, explore_init_rng,
                                      make_stream(seed, Stream::ExploreMinibatches));
  }

  VisitTable window;
  long steps = 0;
  long d_ppo_total = 0;
  std::vector<TrainRow> train_rows;

  auto evaluate_now = [&] {
    EvalPoint p;
    p.step = steps;
    p.train_return = evaluate(net, env, env.train_tasks(), config.eval_episodes, eval_rng,
                              config.greedy_eval);
    p.test_return = evaluate(net, env, env.test_tasks(), config.eval_episodes, eval_rng,
                             config.greedy_eval);
    p.d_ppo_transitions = d_ppo_total;
    p.coverage = window.coverage(reachable);
    p.entropy = window.entropy();
    window.clear();
    record.points.push_back(p);
  };

  try {
    evaluate_now();
    long next_eval = config.eval_every;
    while (steps < ppo.total_timesteps) {
      RolloutBuffer main;
      RolloutBuffer pure_exploration(ppo.n_envs, Phase::PureExploration);
      if (explore_go) {
        auto r = collector->collect(envs, net, *explorer, ppo.rollout_len, action_rng,
                                    explore_rng);
        main = std::move(r.main);
        pure_exploration = std::move(r.pure_exploration);
      } else {
        main = collect_rollout(envs, net, ppo.rollout_len, action_rng);
      }
      steps += static_cast<long>(ppo.n_envs) * ppo.rollout_len;
      d_ppo_total += static_cast<long>(main.size());
      window.add(main);

      compute_advantages(main, ppo.gamma, ppo.gae_lambda);
      TrainRow row{steps, std::nullopt, ppo_update(net, main, ppo, minibatch_rng), main.size(),
                   pure_exploration.size()};
      if (explore_go) update_pe_agent(pure_exploration, *explorer);

      const auto finished = envs.drain_finished();
      if (!finished.empty()) {
        double sum = 0.0;
        for (const auto& f : finished) sum += f.ret;
        row.train_return = sum / static_cast<double>(finished.size());
      }
      train_rows.push_back(row);

      if (steps >= next_eval || steps >= ppo.total_timesteps) {
        evaluate_now();
        while (next_eval <= steps) next_eval += config.eval_every;
      }
    }
  } catch (const nn::NonFiniteError& e) {
    record.failed = true;
    record.failure = e.what();
  }

  if (out_dir) {
    fs::create_directories(*out_dir);
    if (record.failed) {
      std::ofstream(seed_file(*out_dir, "failed_seed", seed, ".txt"))
          << "seed " << seed << " aborted at step " << steps << ": " << record.failure << "\n";
    } else {
      const auto stats = seed_file(*out_dir, "train_stats_seed", seed, ".csv");
      write_train_stats(stats.string() + ".tmp", train_rows);
      commit(stats.string() + ".tmp", stats);
      const auto metrics = seed_file(*out_dir, "metrics_seed", seed, ".csv");
      write_metrics_csv(metrics.string() + ".tmp", record.points);
      commit(metrics.string() + ".tmp", metrics);
    }
  }
  return record;
}

ExperimentRecord run_experiment(const ExperimentConfig& config,
                                const std::optional<fs::path>& out_dir) {
  config.validate();
  if (out_dir) fs::create_directories(*out_dir);
  ExperimentRecord record;
  record.algorithm = config.algorithm;
  record.seeds.resize(config.seeds.size());

  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const unsigned workers = std::min<unsigned>(
      config.threads > 0 ? static_cast<unsigned>(config.threads) : hw,
      static_cast<unsigned>(config.seeds.size()));

  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  std::exception_ptr error;
  auto work = [&] {
    for (std::size_t i = next++; i < config.seeds.size(); i = next++) {
      try {
        record.seeds[i] = run_seed(config, config.seeds[i], out_dir);
      } catch (...) {
        std::lock_guard lock(log_mutex);
        if (!error) error = std::current_exception();
        return;
      }
      std::lock_guard lock(log_mutex);
      const auto& s = record.seeds[i];
      std::clog << to_string(config.algorithm) << " seed " << s.seed
                << (s.failed ? " FAILED: " + s.failure : s.resumed ? " (resumed)" : " done");
      if (!s.failed && !s.points.empty()) {
        std::clog << "  train " << s.points.back().train_return << "  test "
                  << s.points.back().test_return;
      }
      std::clog << "\n";
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  if (error) std::rethrow_exception(error);
  return record;
}

MeanCi mean_ci(std::span<const double> values, double confidence) {
  MeanCi out;
  out.n = static_cast<int>(values.size());
  if (values.empty()) return out;
  double sum = 0.0;
  for (double v : values) sum += v;
  out.mean = sum / out.n;
  if (out.n < 2) return out;
  double ss = 0.0;
  for (double v : values) ss += (v - out.mean) * (v - out.mean);
  const double stderr_ = std::sqrt(ss / (out.n - 1)) / std::sqrt(double(out.n));
  const double z = boost::math::quantile(boost::math::normal(), 0.5 + confidence / 2.0);
  out.half_width = z * stderr_;
  return out;
}

std::vector<AggregateRow> aggregate(std::span<const SeedRecord> records, double confidence) {
  std::map<long, std::pair<std::vector<double>, std::vector<double>>> by_step;
  for (const auto& r : records) {
    if (r.failed) continue;
    for (const auto& p : r.points) {
      by_step[p.step].first.push_back(p.train_return);
      by_step[p.step].second.push_back(p.test_return);
    }
  }
  std::vector<AggregateRow> rows;
  for (const auto& [step, v] : by_step) {
    rows.push_back(AggregateRow{step, mean_ci(v.first, confidence), mean_ci(v.second, confidence)});
  }
  return rows;
}

void write_metrics_csv(const fs::path& path, const std::vector<EvalPoint>& points) {
  auto out = open_csv(path);
  out << "step,train_return,test_return,d_ppo_transitions,coverage,entropy\n";
  for (const auto& p : points) {
    out << p.step << "," << p.train_return << "," << p.test_return << "," << p.d_ppo_transitions
        << "," << p.coverage << "," << p.entropy << "\n";
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<EvalPoint> read_metrics_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  in.imbue(std::locale::classic());
  std::string line;
  std::getline(in, line);
  if (line.rfind("step,train_return,test_return", 0) != 0) {
    throw std::runtime_error(path.string() + ": unexpected header");
  }
  std::vector<EvalPoint> points;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream row(line);
    row.imbue(std::locale::classic());
    EvalPoint p;
    row >> p.step >> p.train_return >> p.test_return >> p.d_ppo_transitions >> p.coverage >>
        p.entropy;
    if (!row) throw std::runtime_error(path.string() + ": malformed row '" + line + "'");
    points.push_back(p);
  }
  return points;
}

std::vector<SeedRecord> read_seed_records(const fs::path& dir) {
  static const std::regex name(R"(metrics_seed(\d+)\.csv)");
  std::vector<SeedRecord> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::smatch m;
    const std::string file = entry.path().filename().string();
    if (!std::regex_match(file, m, name)) continue;
    SeedRecord r;
    r.seed = std::stoull(m[1].str());
    r.points = read_metrics_csv(entry.path());
    out.push_back(std::move(r));
  }
  std::sort(out.begin(), out.end(),
            [](const SeedRecord& a, const SeedRecord& b) { return a.seed < b.seed; });
  return out;
}

void write_aggregate_csv(const fs::path& path, std::span<const LabeledAggregate> series) {
  auto out = open_csv(path);
  out << "label,step,n_seeds,train_mean,train_ci,test_mean,test_ci\n";
  for (const auto& s : series) {
    for (const auto& r : s.rows) {
      out << s.label << "," << r.step << "," << r.train.n << "," << r.train.mean << ",";
      if (r.train.half_width) out << *r.train.half_width;
      out << "," << r.test.mean << ",";
      if (r.test.half_width) out << *r.test.half_width;
      out << "\n";
    }
  }
}

AnalysisReport analyze(const CrossEnv& env, double gamma) {
  AnalysisReport report;
  report.reachable = compute_reachable_set(env, env.train_tasks());
  for (const auto& t : env.tasks()) {
    report.classification.emplace_back(t, classify_task(t, report.reachable));
  }
  ValueIterationOptions vi;
  vi.gamma = gamma;
  report.policy = optimal_policy(env, report.reachable, vi);
  report.tables = abstraction_table(env, report.reachable, report.policy);
  return report;
}

void write_analysis(const CrossEnv& env, const AnalysisReport& report, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  {
    auto out = open_csv(out_dir / "abstraction_table.csv");
    write_table_csv(out, env, report.tables.full);
  }
  {
    auto out = open_csv(out_dir / "abstraction_table_on_policy.csv");
    write_table_csv(out, env, report.tables.on_policy);
  }
  {
    auto out = open_csv(out_dir / "reachability.csv");
    out << std::setprecision(2);
    out << "task_id,red,green,blue,start_row,start_col,classification\n";
    for (const auto& [t, c] : report.classification) {
      out << t.id << "," << t.background[0] << "," << t.background[1] << "," << t.background[2]
          << "," << t.start.row << "," << t.start.col << "," << to_string(c) << "\n";
    }
  }
  {
    auto out = open_csv(out_dir / "reachable_set.csv");
    out << "task_id,row,col,terminal,optimal_actions\n";
    for (const auto& s : report.reachable.states()) {
      const bool terminal = env.is_goal(s.position);
      out << s.task_id << "," << s.position.row << "," << s.position.col << ","
          << (terminal ? 1 : 0) << ",";
      if (!terminal) out << action_mask_name(env, report.policy.at(s));
      out << "\n";
    }
  }
}

}  // namespace explore_go
