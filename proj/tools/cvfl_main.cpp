// Command-line front end: scenario presets, experiment execution with
// JSONL/CSV export, RB/model-size sweeps, and the oracle verification
// suites.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "cvfl/config.hpp"
#include "cvfl/orchestrator.hpp"
#include "cvfl/verify.hpp"

namespace {

struct RunOptions {
  std::string target;
  std::string preset_name;
  std::string config_path;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  std::optional<int> rounds;
  std::optional<int> total_rbs;
  std::optional<double> model_size_bits;
  bool baseline = false;
};

cvfl::ExperimentConfig resolve_config(const RunOptions& opt) {
  cvfl::ExperimentConfig cfg;
  if (!opt.preset_name.empty()) {
    cfg = cvfl::preset(opt.preset_name);
  } else if (!opt.config_path.empty()) {
    cfg = cvfl::load_config_file(opt.config_path);
  } else if (!opt.target.empty()) {
    if (opt.target == "freeway" || opt.target == "parking-lot" || opt.target == "parking_lot")
      cfg = cvfl::preset(opt.target);
    else
      cfg = cvfl::load_config_file(opt.target);
  } else {
    throw cvfl::ConfigError("no preset or config given (try `run freeway`)");
  }
  if (opt.seed) cfg.seeds = cvfl::seeds_from_master(*opt.seed);
  if (opt.rounds) {
    cfg.rounds = *opt.rounds;
    if (cfg.clustering_round > cfg.rounds) cfg.clustering_round = 0;
  }
  if (opt.total_rbs) cfg.radio.total_rbs = *opt.total_rbs;
  if (opt.model_size_bits) cfg.radio.model_size_bits = *opt.model_size_bits;
  cfg.validate();
  return cfg;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw cvfl::ConfigError("cannot write " + path.string());
  out << text;
}

void write_run_outputs(const std::filesystem::path& dir, const std::string& stem,
                       const cvfl::ExperimentResult& result) {
  std::string jsonl;
  std::string csv = cvfl::summary_csv_header() + "\n";
  for (const auto& report : result.reports) {
    jsonl += cvfl::report_json(report).dump() + "\n";
    csv += cvfl::summary_csv_row(report) + "\n";
  }
  write_text(dir / (stem + ".jsonl"), jsonl);
  write_text(dir / (stem == "rounds" ? "summary.csv" : "summary_baseline.csv"), csv);
}

int cmd_run(const RunOptions& opt) {
  const auto cfg = resolve_config(opt);
  const std::filesystem::path dir(opt.out_dir);
  std::filesystem::create_directories(dir);

  write_text(dir / "config.json", cvfl::config_json(cfg).dump(2) + "\n");

  const auto result = cvfl::run_experiment(cfg);
  write_run_outputs(dir, "rounds", result);
  for (const auto& model : result.models)
    cvfl::save_params((dir / ("model_v" + std::to_string(model.version) + ".bin")).string(),
                      model);

  if (opt.baseline) {
    const auto base = cvfl::run_vanilla_baseline(cfg);
    write_run_outputs(dir, "rounds_baseline", base);
  }

  std::cout << "wrote " << result.reports.size() << " rounds to "
            << (dir / "rounds.jsonl").string() << (opt.baseline ? " (+ baseline)" : "") << "\n";
  return 0;
}

struct SweepOptions {
  RunOptions run;
  std::vector<int> total_rbs = {2, 3, 4};
  std::vector<double> model_size_bits = {160e3, 320e3, 640e3};
  int repeats = 10;
};

int cmd_sweep(const SweepOptions& opt) {
  auto base_cfg = resolve_config(opt.run);
  // Scheduling metrics only: heads/participants do not depend on the actual
  // SGD, so the sweep runs with training and the clustering step disabled.
  base_cfg.train_enabled = false;
  base_cfg.clustering_round = 0;

  const std::filesystem::path dir(opt.run.out_dir);
  std::filesystem::create_directories(dir);

  const std::uint64_t master = opt.run.seed.value_or(1);
  std::string csv =
      "total_rbs,model_size_bits,repeats,rounds,heads_mean,heads_std,participants_mean,"
      "participants_std\n";
  for (int rbs : opt.total_rbs) {
    for (double bits : opt.model_size_bits) {
      std::vector<double> heads_per_round, parts_per_round;
      for (int rep = 0; rep < opt.repeats; ++rep) {
        auto cfg = base_cfg;
        cfg.radio.total_rbs = rbs;
        cfg.radio.model_size_bits = bits;
        cfg.seeds = cvfl::seeds_from_master(cvfl::derive_seed(master, 7777, rep));
        cfg.validate();
        double heads = 0.0, parts = 0.0;
        const auto result = cvfl::run_experiment(cfg);
        for (const auto& r : result.reports) {
          heads += static_cast<double>(r.head_ids.size());
          parts += r.participants;
        }
        heads_per_round.push_back(heads / cfg.rounds);
        parts_per_round.push_back(parts / cfg.rounds);
      }
      auto stats = [](const std::vector<double>& xs) {
        double mean = 0.0;
        for (double x : xs) mean += x;
        mean /= xs.size();
        double var = 0.0;
        for (double x : xs) var += (x - mean) * (x - mean);
        return std::pair{mean, std::sqrt(var / xs.size())};
      };
      const auto [hm, hs] = stats(heads_per_round);
      const auto [pm, ps] = stats(parts_per_round);
      csv += std::to_string(rbs) + "," + cvfl::detail::format_double(bits) + "," +
             std::to_string(opt.repeats) + "," + std::to_string(base_cfg.rounds) + "," +
             cvfl::detail::format_double(hm) + "," + cvfl::detail::format_double(hs) + "," +
             cvfl::detail::format_double(pm) + "," + cvfl::detail::format_double(ps) + "\n";
    }
  }
  write_text(dir / "sweep.csv", csv);
  std::cout << "wrote " << (dir / "sweep.csv").string() << "\n";
  return 0;
}

int cmd_verify(const std::vector<std::string>& suites, std::uint64_t seed) {
  const auto results = cvfl::verify::run_suites(suites, seed);
  if (results.empty()) {
    std::cerr << "no such suite (expected: knapsack, matching, gradients, clustering)\n";
    return 2;
  }
  bool all_ok = true;
  for (const auto& r : results) {
    std::cout << (r.passed ? "[pass] " : "[FAIL] ") << r.name
              << (r.detail.empty() ? "" : ": " + r.detail) << "\n";
    all_ok = all_ok && r.passed;
  }
  return all_ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Clustered vehicular federated learning simulator"};
  app.require_subcommand(1);

  RunOptions run_opt;
  auto* run = app.add_subcommand("run", "Run an experiment and export metrics");
  run->add_option("target", run_opt.target, "preset name (freeway, parking-lot) or config file");
  run->add_option("--preset", run_opt.preset_name, "preset name");
  run->add_option("--config", run_opt.config_path, "config file path");
  run->add_option("--seed", run_opt.seed, "master seed (derives the four stream seeds)");
  run->add_option("--rounds", run_opt.rounds, "override the number of rounds");
  run->add_option("--total-rbs", run_opt.total_rbs, "override the RB pool size");
  run->add_option("--model-size-bits", run_opt.model_size_bits, "override the model size");
  run->add_flag("--baseline", run_opt.baseline, "also run the vanilla-FL baseline");
  run->add_option("--out", run_opt.out_dir, "output directory");

  SweepOptions sweep_opt;
  auto* sweep = app.add_subcommand("sweep", "Sweep RB counts and model sizes");
  sweep->add_option("target", sweep_opt.run.target, "preset name or config file");
  sweep->add_option("--preset", sweep_opt.run.preset_name, "preset name");
  sweep->add_option("--config", sweep_opt.run.config_path, "config file path");
  sweep->add_option("--seed", sweep_opt.run.seed, "master seed");
  sweep->add_option("--rounds", sweep_opt.run.rounds, "rounds per run");
  sweep->add_option("--total-rbs", sweep_opt.total_rbs, "RB counts to sweep")->delimiter(',');
  sweep->add_option("--model-size-bits", sweep_opt.model_size_bits, "model sizes to sweep")
      ->delimiter(',');
  sweep->add_option("--repeats", sweep_opt.repeats, "independent repeats per cell");
  sweep->add_option("--out", sweep_opt.run.out_dir, "output directory");

  std::vector<std::string> verify_suites;
  std::uint64_t verify_seed = 1;
  auto* verify = app.add_subcommand("verify", "Run the brute-force oracle suites");
  verify->add_option("suites", verify_suites,
                     "subset of: knapsack, matching, gradients, clustering");
  verify->add_option("--seed", verify_seed, "suite seed");

  std::string preset_name;
  auto* preset_cmd = app.add_subcommand("preset", "Print a preset config as JSON");
  preset_cmd->add_option("name", preset_name, "freeway or parking-lot")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand(run)) return cmd_run(run_opt);
    if (app.got_subcommand(sweep)) return cmd_sweep(sweep_opt);
    if (app.got_subcommand(verify)) return cmd_verify(verify_suites, verify_seed);
    if (app.got_subcommand(preset_cmd)) {
      std::cout << cvfl::config_json(cvfl::preset(preset_name)).dump(2) << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
