// Command-line front end: train / bench / search-threshold / eval / report.
// Exit codes: 0 success, 2 config error, 3 numerical failure, 4 criterion not
// met (threshold search found no passing candidate).

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include <CLI11.hpp>

#include "ecrl/metrics.hpp"
#include "ecrl/reports.hpp"
#include "ecrl/train.hpp"

namespace fs = std::filesystem;
using namespace ecrl;
using harness::ExperimentConfig;

namespace {

struct CliError {
  int code;
  std::string message;
};

std::string run_dir(const std::string& out, const std::string& algo, std::uint64_t seed) {
  return out + "/" + algo + "/seed_" + std::to_string(seed);
}

// Runs jobs[i]() across `jobs` worker threads in index order; rethrows the
// first failure.
void run_parallel(const std::vector<std::function<void()>>& tasks, int jobs) {
  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr first_error;
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      try {
        tasks[i]();
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  const int n = std::max(1, jobs);
  for (int i = 0; i < n; ++i) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

int cmd_train(const std::string& config_path, const std::string& algo, std::uint64_t seed,
              const std::string& out) {
  ExperimentConfig cfg = harness::load_config(config_path);
  if (!algo.empty()) cfg = cfg.with_algorithm(algo);
  fs::create_directories(out);
  checkpoint::save_file(out + "/config.resolved.json", harness::config_to_json(cfg));
  const auto result = harness::train(cfg, seed, out);
  std::cout << "trained " << result.record.algorithm << " seed " << seed << " for "
            << result.record.rows.size() << " iterations -> " << out << "\n";
  return 0;
}

int cmd_bench(const std::string& config_path, const std::vector<std::string>& algos,
              const std::vector<std::uint64_t>& seeds, int jobs, const std::string& out) {
  const ExperimentConfig base = harness::load_config(config_path);
  const auto seed_list = seeds.empty() ? base.seeds : seeds;
  if (algos.empty()) throw harness::ConfigError("bench: no algorithms given");

  fs::create_directories(out);
  checkpoint::save_file(out + "/config.resolved.json", harness::config_to_json(base));

  std::vector<std::function<void()>> tasks;
  for (const auto& algo : algos)
    for (const auto seed : seed_list)
      tasks.push_back([&, algo, seed] {
        const ExperimentConfig cfg = base.with_algorithm(algo);
        harness::train(cfg, seed, run_dir(out, algo, seed));
      });
  run_parallel(tasks, jobs);

  std::vector<harness::RunRecord> records;
  for (const auto& algo : algos)
    for (const auto seed : seed_list) {
      auto rec = harness::read_metrics_csv(run_dir(out, algo, seed) + "/metrics.csv");
      rec.algorithm = algo;  // benched under the variant name
      records.push_back(std::move(rec));
    }
  harness::emit_reports(records, base, out);
  std::cout << "bench complete: " << records.size() << " runs -> " << out << "\n";
  return 0;
}

int cmd_search(const std::string& config_path, std::vector<double> grid, std::uint64_t seed,
               bool watts, int jobs, const std::string& out) {
  ExperimentConfig cfg = harness::load_config(config_path);
  if (cfg.constraints.empty())
    throw harness::ConfigError("search-threshold: config has no constraints");
  if (grid.empty()) throw harness::ConfigError("search-threshold: empty grid");
  if (watts) {
    const auto& spec = cfg.constraints.front();
    if (spec.kind != cmdp::ConstraintKind::DiscountedSum || !(spec.gamma_c < 1.0))
      throw harness::ConfigError("--watts needs a discounted-sum constraint with gamma_c < 1");
    for (double& g : grid) g /= (1.0 - spec.gamma_c);
  }
  std::sort(grid.begin(), grid.end());
  fs::create_directories(out);

  // Train every candidate (parallelizable), then select via the search rule.
  std::vector<char> pass(grid.size(), 0);
  std::vector<std::function<void()>> tasks;
  for (std::size_t i = 0; i < grid.size(); ++i)
    tasks.push_back([&, i] {
      const std::string dir = out + "/candidate_" + std::to_string(i);
      pass[i] = harness::stability_run_passes(cfg, grid[i], seed, dir) ? 1 : 0;
    });
  run_parallel(tasks, jobs);

  const auto result = harness::threshold_search(
      grid, [&](double b) {
        for (std::size_t i = 0; i < grid.size(); ++i)
          if (grid[i] == b) return pass[i] != 0;
        return false;
      });

  std::ofstream sweep(out + "/sweep.csv", std::ios::binary);
  sweep << "threshold,passes\n";
  for (const auto& [b, ok] : result.sweep) sweep << b << ',' << (ok ? 1 : 0) << '\n';

  if (!result.chosen) {
    std::cout << "no candidate met the stability criterion\n";
    return 4;
  }
  std::cout << "chosen threshold: " << *result.chosen << "\n";
  return 0;
}

int cmd_eval(const std::string& config_path, const std::string& ckpt_path, int episodes,
             std::uint64_t seed, bool randomize, const std::string& dump_path) {
  const ExperimentConfig cfg = harness::load_config(config_path);
  const auto ckpt = checkpoint::policy_from_json(checkpoint::load_file(ckpt_path));
  std::ofstream dump;
  std::ostream* dump_os = nullptr;
  if (!dump_path.empty()) {
    dump.open(dump_path, std::ios::binary);
    if (!dump) throw std::runtime_error("cannot write " + dump_path);
    dump_os = &dump;
  }
  const auto summary = harness::evaluate(cfg, ckpt, episodes, seed, randomize, dump_os);
  std::cout << "episodes: " << summary.episodes << "\n"
            << "mean speed (m/s): " << summary.mean_speed << "\n"
            << "mean power (W): " << summary.mean_power_w << "\n"
            << "mean episode length (s): " << summary.mean_episode_s << "\n"
            << "mean mirror cost: " << summary.mean_mirror_cost << "\n"
            << "mean tracking error (m/s): " << summary.mean_tracking_error << "\n";
  return 0;
}

int cmd_report(const std::string& in_dir, const std::string& out_dir,
               const std::string& config_path) {
  const ExperimentConfig cfg = harness::load_config(config_path);
  std::vector<harness::RunRecord> records;
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(in_dir))
    if (entry.is_regular_file() && entry.path().filename() == "metrics.csv")
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) records.push_back(harness::read_metrics_csv(f.string()));
  if (records.empty()) throw harness::ConfigError("report: no metrics.csv under " + in_dir);
  harness::emit_reports(records, cfg, out_dir.empty() ? in_dir : out_dir);
  std::cout << "report written from " << records.size() << " runs\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Constrained-RL locomotion benchmark"};
  app.require_subcommand(1);

  std::string config_path, out = "runs", algo, ckpt_path, dump_path, in_dir;
  std::vector<std::string> algos;
  std::vector<std::uint64_t> seeds;
  std::vector<double> grid;
  std::uint64_t seed = 1;
  int episodes = 10;
  int jobs = 2;
  bool watts = false, randomize = false;

  auto* train_cmd = app.add_subcommand("train", "train one algorithm on one seed");
  train_cmd->add_option("--config", config_path)->required();
  train_cmd->add_option("--algo", algo, "algorithm or named variant from the config");
  train_cmd->add_option("--seed", seed);
  train_cmd->add_option("--out", out);

  auto* bench_cmd = app.add_subcommand("bench", "multi-algorithm multi-seed comparison");
  bench_cmd->add_option("--config", config_path)->required();
  bench_cmd->add_option("--algos", algos)->required()->delimiter(',');
  bench_cmd->add_option("--seeds", seeds)->delimiter(',');
  bench_cmd->add_option("--jobs", jobs);
  bench_cmd->add_option("--out", out);

  auto* search_cmd = app.add_subcommand("search-threshold", "linear energy-threshold search");
  search_cmd->add_option("--config", config_path)->required();
  search_cmd->add_option("--grid", grid)->required()->delimiter(',');
  search_cmd->add_option("--seed", seed);
  search_cmd->add_flag("--watts", watts, "grid given in mean watts, not raw units");
  search_cmd->add_option("--jobs", jobs);
  search_cmd->add_option("--out", out);

  auto* eval_cmd = app.add_subcommand("eval", "deterministic evaluation of a checkpoint");
  eval_cmd->add_option("--config", config_path)->required();
  eval_cmd->add_option("--checkpoint", ckpt_path)->required();
  eval_cmd->add_option("--episodes", episodes);
  eval_cmd->add_option("--seed", seed);
  eval_cmd->add_flag("--randomize", randomize);
  eval_cmd->add_option("--dump", dump_path, "write evaluation trajectories as CSV");

  auto* report_cmd = app.add_subcommand("report", "summary CSV and SVG plots from run dirs");
  report_cmd->add_option("--in", in_dir)->required();
  report_cmd->add_option("--config", config_path)->required();
  report_cmd->add_option("--out", out);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) return cmd_train(config_path, algo, seed, out);
    if (*bench_cmd) return cmd_bench(config_path, algos, seeds, jobs, out);
    if (*search_cmd) return cmd_search(config_path, grid, seed, watts, jobs, out);
    if (*eval_cmd) return cmd_eval(config_path, ckpt_path, episodes, seed, randomize, dump_path);
    if (*report_cmd) return cmd_report(in_dir, out, config_path);
  } catch (const harness::ConfigError& ex) {
    std::cerr << "config error: " << ex.what() << "\n";
    return 2;
  } catch (const optimizers::NumericalError& ex) {
    std::cerr << "numerical failure: " << ex.what() << "\n";
    return 3;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  }
  return 0;
}
