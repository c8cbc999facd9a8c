#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "cvfl/config.hpp"
#include "cvfl/learner.hpp"

namespace fs = std::filesystem;

namespace {

struct CliResult {
  int exit_code = -1;
  std::string output;  // stdout + stderr
};

CliResult run_cli(const std::string& args) {
  const fs::path log = fs::temp_directory_path() / "cvfl_cli_out.txt";
  const std::string cmd = std::string(CVFL_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  CliResult res;
  res.exit_code = WEXITSTATUS(status);
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  res.output = ss.str();
  return res;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int count_lines(const std::string& text) {
  int n = 0;
  for (char c : text) n += (c == '\n');
  return n;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("run twice with the same seed produces identical outputs", "[cli]") {
  const auto dir_a = fresh_dir("cvfl_cli_a");
  const auto dir_b = fresh_dir("cvfl_cli_b");
  REQUIRE(run_cli("run freeway --seed 1 --rounds 6 --out " + dir_a.string()).exit_code == 0);
  REQUIRE(run_cli("run freeway --seed 1 --rounds 6 --out " + dir_b.string()).exit_code == 0);

  CHECK(read_file(dir_a / "rounds.jsonl") == read_file(dir_b / "rounds.jsonl"));
  CHECK(read_file(dir_a / "summary.csv") == read_file(dir_b / "summary.csv"));
  CHECK(read_file(dir_a / "config.json") == read_file(dir_b / "config.json"));

  const auto dir_c = fresh_dir("cvfl_cli_c");
  REQUIRE(run_cli("run freeway --seed 2 --rounds 6 --out " + dir_c.string()).exit_code == 0);
  CHECK(read_file(dir_a / "rounds.jsonl") != read_file(dir_c / "rounds.jsonl"));
}

TEST_CASE("summary carries one row per round", "[cli]") {
  const auto dir = fresh_dir("cvfl_cli_rows");
  REQUIRE(run_cli("run parking-lot --rounds 5 --out " + dir.string()).exit_code == 0);
  const auto csv = read_file(dir / "summary.csv");
  CHECK(count_lines(csv) == 6);  // header + 5 rounds
  CHECK(csv.rfind("round,heads,participants", 0) == 0);
  CHECK(count_lines(read_file(dir / "rounds.jsonl")) == 5);
}

TEST_CASE("config echo reparses to the identical config", "[cli]") {
  const auto dir = fresh_dir("cvfl_cli_echo");
  REQUIRE(run_cli("run freeway --seed 3 --rounds 4 --out " + dir.string()).exit_code == 0);
  const auto echoed = read_file(dir / "config.json");
  const auto cfg = cvfl::load_config_file((dir / "config.json").string());
  CHECK(cvfl::config_json(cfg).dump(2) + "\n" == echoed);
}

TEST_CASE("final models are valid checkpoints", "[cli]") {
  const auto dir = fresh_dir("cvfl_cli_ckpt");
  REQUIRE(run_cli("run parking-lot --rounds 3 --out " + dir.string()).exit_code == 0);
  const auto model = cvfl::load_params((dir / "model_v0.bin").string());
  CHECK(model.version == 0);
  CHECK(model.theta.size() == model.arch.param_count());
}

TEST_CASE("usage errors exit nonzero", "[cli]") {
  CHECK(run_cli("run freeway --such-flag 1").exit_code != 0);
  CHECK(run_cli("run").exit_code != 0);
  CHECK(run_cli("run no-such-preset.json").exit_code != 0);
  CHECK(run_cli("").exit_code != 0);

  const fs::path bad = fs::temp_directory_path() / "cvfl_bad_config.json";
  std::ofstream(bad) << "{\"rounds\": -3}";
  CHECK(run_cli("run " + bad.string()).exit_code != 0);
  std::ofstream(bad) << "{not json";
  const auto res = run_cli("run " + bad.string());
  CHECK(res.exit_code != 0);
  CHECK(res.output.find("error:") != std::string::npos);
  fs::remove(bad);
}

TEST_CASE("sweep emits one row per grid cell", "[cli]") {
  const auto dir = fresh_dir("cvfl_cli_sweep");
  REQUIRE(run_cli("sweep freeway --total-rbs 2,3 --model-size-bits 160000 --repeats 2 "
                  "--rounds 4 --seed 5 --out " +
                  dir.string())
              .exit_code == 0);
  const auto csv = read_file(dir / "sweep.csv");
  CHECK(count_lines(csv) == 3);  // header + 2 cells
  CHECK(csv.rfind("total_rbs,model_size_bits", 0) == 0);
}

TEST_CASE("verify runs the oracle suites", "[cli]") {
  const auto all = run_cli("verify");
  CHECK(all.exit_code == 0);
  CHECK(all.output.find("[pass] knapsack") != std::string::npos);
  CHECK(all.output.find("[pass] matching") != std::string::npos);
  CHECK(all.output.find("[pass] gradients") != std::string::npos);
  CHECK(all.output.find("[pass] clustering") != std::string::npos);

  const auto only = run_cli("verify gradients");
  CHECK(only.exit_code == 0);
  CHECK(only.output.find("gradients") != std::string::npos);
  CHECK(only.output.find("knapsack") == std::string::npos);

  CHECK(run_cli("verify no-such-suite").exit_code != 0);
}

TEST_CASE("preset dump is valid json with the published values", "[cli]") {
  const auto res = run_cli("preset freeway");
  REQUIRE(res.exit_code == 0);
  const auto j = nlohmann::json::parse(res.output);
  CHECK(j.at("radio").at("rb_bandwidth_hz").get<double>() == 180e3);
  CHECK(j.at("radio").at("transmit_power_w").get<double>() == 0.1);
  CHECK(j.at("radio").at("noise_dbm").get<double>() == -114.0);
  CHECK(j.at("radio").at("total_rbs").get<int>() == 4);
  CHECK(j.at("radio").at("model_size_bits").get<double>() == 160e3);
  CHECK(j.at("radio").at("delta_s").get<double>() == 2.0);
  CHECK(j.at("n_max").get<int>() == 2);
  CHECK(j.at("num_vehicles").get<int>() == 30);
  CHECK(j.at("mobility").at("coverage_diameter_m").get<double>() == 2000.0);
  CHECK(j.at("mobility").at("lanes").size() == 6);
}
