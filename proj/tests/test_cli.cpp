#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "kolsim/cli.hpp"

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("kolsim_cli_" + std::to_string(::getpid()) + "_" +
                                        std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_json(const std::string& file, const Json& j) {
  std::ofstream out(file);
  out << j.dump(2) << "\n";
}

std::string slurp(const std::string& file) {
  std::ifstream in(file, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.push_back("kolsim");
  for (const auto& a : args) argv.push_back(a.c_str());
  return kolsim::cli_run(static_cast<int>(argv.size()), argv.data());
}

Json base_sir_config(std::uint64_t seed) {
  Json cfg;
  cfg["schema"] = 1;
  cfg["model"] = {{"name", "sir"},
                  {"params",
                   {{"a", 1.0},
                    {"b1", 1.0},
                    {"b2", 1.0},
                    {"incidence", {{"type", "linear"}, {"c1", 0.5}, {"c2", 0.5}}},
                    {"r", 1.0},
                    {"sigma", {{1.0, 0.0}, {0.0, 1.0}}}}}};
  cfg["sim"] = {{"seed", seed}, {"horizon", 200.0}, {"replicates", 2}};
  return cfg;
}

Json base_lv_config(std::uint64_t seed) {
  Json cfg;
  cfg["schema"] = 1;
  cfg["model"] = {{"name", "competitive_lv"},
                  {"params",
                   {{"a", {2.0, 1.5}},
                    {"b", {{1.0, 0.0}, {0.5, 1.0}}},
                    {"b_hat", {{0.0, 0.0}, {1.5, 0.0}}},
                    {"r", 1.0},
                    {"sigma", {{2.0, 0.0}, {0.0, 1.0}}}}}};
  cfg["sim"] = {{"seed", seed}, {"horizon", 150.0}, {"replicates", 2}};
  return cfg;
}

}  // namespace

TEST_CASE("cli: closed-form invasion report") {
  TempDir dir;
  Json cfg = base_sir_config(42);
  cfg["task"] = {{"face", {"S"}}, {"species", "I"}};
  cfg["output"] = {{"report_json", dir.file("report.json")}};
  write_json(dir.file("cfg.json"), cfg);
  int code = run({"invasion", "--config", dir.file("cfg.json"), "--closed-form"});
  CHECK(code == 0);
  Json report = Json::parse(slurp(dir.file("report.json")));
  CHECK(report["result"]["lambda"].get<double>() == -0.5);
  CHECK(report["result"]["method"] == "closed-form");
  CHECK(report["result"]["se"].get<double>() == 0.0);
}

TEST_CASE("cli: simulate on the empty face writes all-zero rows") {
  TempDir dir;
  Json cfg = base_lv_config(7);
  cfg["sim"]["horizon"] = 5.0;
  cfg["task"] = {{"face", Json::array()}};
  cfg["output"] = {{"report_json", dir.file("report.json")},
                   {"trajectory_csv", dir.file("traj.csv")}};
  write_json(dir.file("cfg.json"), cfg);
  CHECK(run({"simulate", "--config", dir.file("cfg.json")}) == 0);
  std::string csv = slurp(dir.file("traj.csv"));
  CHECK(csv.rfind("t,x1,x2\n", 0) == 0);
  std::istringstream lines(csv);
  std::string line;
  std::getline(lines, line);  // header
  int rows = 0;
  while (std::getline(lines, line)) {
    ++rows;
    CHECK(line.substr(line.find(',')) == ",0,0");
  }
  CHECK(rows == 5 * 64 + 1);
}

TEST_CASE("cli: strict schema rejects unknown keys") {
  TempDir dir;
  Json cfg = base_lv_config(1);
  cfg["task"] = {{"face", {"1"}}, {"species", "2"}, {"extra_knob", 3}};
  write_json(dir.file("cfg.json"), cfg);
  CHECK(run({"invasion", "--config", dir.file("cfg.json")}) == 2);

  Json cfg2 = base_lv_config(1);
  cfg2["model"]["params"]["typo"] = 1;
  cfg2["task"] = {{"face", {"1"}}, {"species", "2"}};
  write_json(dir.file("cfg2.json"), cfg2);
  CHECK(run({"invasion", "--config", dir.file("cfg2.json")}) == 2);
}

TEST_CASE("cli: seeds are mandatory") {
  TempDir dir;
  Json cfg = base_lv_config(1);
  cfg["sim"].erase("seed");
  cfg["task"] = {{"face", {"1"}}, {"species", "2"}};
  write_json(dir.file("cfg.json"), cfg);
  CHECK(run({"invasion", "--config", dir.file("cfg.json")}) == 2);
}

TEST_CASE("cli: config errors and aborts map to distinct exit codes") {
  TempDir dir;
  SUBCASE("unreadable config") { CHECK(run({"simulate", "--config", dir.file("missing.json")}) == 2); }
  SUBCASE("bad schema number") {
    Json cfg = base_lv_config(1);
    cfg["schema"] = 2;
    write_json(dir.file("cfg.json"), cfg);
    CHECK(run({"simulate", "--config", dir.file("cfg.json")}) == 2);
  }
  SUBCASE("divergence exits 3") {
    Json cfg = base_lv_config(1);
    cfg["model"]["params"]["a"] = {60.0, 1.5};
    cfg["sim"]["divergence_ceiling_log"] = 1.5;
    cfg["sim"]["horizon"] = 50.0;
    cfg["output"] = {{"report_json", dir.file("r.json")}};
    write_json(dir.file("cfg.json"), cfg);
    CHECK(run({"simulate", "--config", dir.file("cfg.json")}) == 3);
  }
  SUBCASE("closed form unavailable exits 2") {
    Json cfg = base_lv_config(1);
    cfg["task"] = {{"face", {"1", "2"}}, {"species", "2"}};
    write_json(dir.file("cfg.json"), cfg);
    CHECK(run({"invasion", "--config", dir.file("cfg.json"), "--closed-form"}) == 2);
  }
}

TEST_CASE("cli: strict flag turns inconclusive classification into exit 4") {
  TempDir dir;
  Json cfg = base_lv_config(3);
  // lambda_i(pi_j) = 0 exactly: the tree must refuse to classify
  cfg["model"]["params"]["a"] = {2.0, 2.0};
  cfg["model"]["params"]["b"] = {{1.0, 1.0}, {1.0, 1.0}};
  cfg["model"]["params"]["b_hat"] = {{0.0, 0.0}, {0.0, 0.0}};
  cfg["model"]["params"]["sigma"] = {{2.0, 0.0}, {0.0, 2.0}};
  cfg["sim"]["horizon"] = 30.0;
  cfg["sim"]["replicates"] = 2;
  cfg["task"] = {{"basins", false}};
  cfg["output"] = {{"report_json", dir.file("r.json")}};
  write_json(dir.file("cfg.json"), cfg);
  CHECK(run({"classify", "--config", dir.file("cfg.json"), "--strict"}) == 4);
  CHECK(run({"classify", "--config", dir.file("cfg.json")}) == 0);
  Json report = Json::parse(slurp(dir.file("r.json")));
  CHECK(report["result"]["regime"] == "inconclusive");
}

TEST_CASE("cli: artifacts are byte-identical across reruns") {
  TempDir dir;
  Json cfg = base_lv_config(20240809);
  cfg["task"] = {{"face", {"1"}}, {"species", "2"}};
  cfg["output"] = {{"report_json", dir.file("a.json")}};
  write_json(dir.file("cfg.json"), cfg);
  REQUIRE(run({"invasion", "--config", dir.file("cfg.json")}) == 0);
  std::string first = slurp(dir.file("a.json"));
  REQUIRE(run({"invasion", "--config", dir.file("cfg.json")}) == 0);
  CHECK(first == slurp(dir.file("a.json")));

  Json sim = base_lv_config(99);
  sim["sim"]["horizon"] = 20.0;
  sim["output"] = {{"report_json", dir.file("s.json")}, {"trajectory_csv", dir.file("s.csv")}};
  write_json(dir.file("sim.json"), sim);
  REQUIRE(run({"simulate", "--config", dir.file("sim.json")}) == 0);
  std::string sim_report = slurp(dir.file("s.json"));
  std::string sim_csv = slurp(dir.file("s.csv"));
  REQUIRE(run({"simulate", "--config", dir.file("sim.json")}) == 0);
  CHECK(sim_report == slurp(dir.file("s.json")));
  CHECK(sim_csv == slurp(dir.file("s.csv")));
}

TEST_CASE("cli: artifacts do not depend on the thread count") {
  TempDir dir;
  Json cfg = base_lv_config(606);
  cfg["sim"]["replicates"] = 4;
  cfg["task"] = {{"face", {"1"}}, {"species", "2"}};
  cfg["output"] = {{"report_json", dir.file("a.json")}};
  write_json(dir.file("cfg.json"), cfg);
  REQUIRE(run({"invasion", "--config", dir.file("cfg.json"), "--threads", "1"}) == 0);
  std::string serial = slurp(dir.file("a.json"));
  REQUIRE(run({"invasion", "--config", dir.file("cfg.json"), "--threads", "4"}) == 0);
  CHECK(serial == slurp(dir.file("a.json")));
}

TEST_CASE("cli: the config echo reproduces the artifacts byte for byte") {
  TempDir dir;
  Json cfg = base_sir_config(555);
  cfg["task"] = {{"face", {"S"}}, {"species", "I"}};
  cfg["output"] = {{"report_json", dir.file("a.json")}};
  write_json(dir.file("cfg.json"), cfg);
  REQUIRE(run({"invasion", "--config", dir.file("cfg.json")}) == 0);
  std::string first = slurp(dir.file("a.json"));

  Json echoed = Json::parse(first).at("config");
  write_json(dir.file("echo.json"), echoed);
  REQUIRE(run({"invasion", "--config", dir.file("echo.json")}) == 0);
  CHECK(first == slurp(dir.file("a.json")));
}

TEST_CASE("cli: classify writes regime and basin tables") {
  TempDir dir;
  Json cfg = base_lv_config(31);
  cfg["model"]["params"]["a"] = {2.0, 2.0};
  cfg["model"]["params"]["b"] = {{1.0, 2.0}, {2.0, 1.0}};
  cfg["model"]["params"]["sigma"] = {{2.0, 0.0}, {0.0, 2.0}};
  cfg["model"]["params"]["b_hat"] = {{0.0, 0.0}, {0.0, 0.0}};
  cfg["sim"]["horizon"] = 300.0;
  cfg["sim"]["replicates"] = 30;
  cfg["output"] = {{"report_json", dir.file("r.json")}};
  write_json(dir.file("cfg.json"), cfg);
  CHECK(run({"classify", "--config", dir.file("cfg.json")}) == 0);
  Json report = Json::parse(slurp(dir.file("r.json")));
  CHECK(report["result"]["regime"] == "bistable");
  CHECK(report["result"]["total_runs"].get<int>() == 30);
  CHECK(report["result"]["lambda_table"].size() >= 4);
}

TEST_CASE("cli: audit subcommand with grid search") {
  TempDir dir;
  Json cfg = base_lv_config(8);
  cfg["task"] = {{"grid_search", true},
                 {"checks", {"drift", "growth", "nondegeneracy"}},
                 {"sampler", {{"count", 400}, {"seed", 12}, {"radius_grid", {1.0, 10.0, 50.0}}}}};
  cfg["output"] = {{"report_json", dir.file("audit.json")}};
  write_json(dir.file("cfg.json"), cfg);
  CHECK(run({"audit", "--config", dir.file("cfg.json")}) == 0);
  Json report = Json::parse(slurp(dir.file("audit.json")));
  REQUIRE(report["audits"].size() == 3);
  CHECK(report["audits"][0]["violations"].get<int>() == 0);
  CHECK(report["audits"][1]["violations"].get<int>() == 0);
  CHECK(report["audits"][2]["violations"].get<int>() == 0);
  CHECK(report.contains("certificate"));
}

TEST_CASE("cli: replicator and chemostat configs parse end to end") {
  TempDir dir;
  Json cfg;
  cfg["schema"] = 1;
  cfg["model"] = {{"name", "replicator"},
                  {"params",
                   {{"total", 1.0},
                    {"payoff", {{1.0, 0.2}, {0.6, 0.9}}},
                    {"sigma", {0.3, 0.3}},
                    {"r", 0.5}}}};
  cfg["sim"] = {{"seed", 5}, {"horizon", 50.0}, {"replicates", 2}};
  cfg["task"] = {{"basins", false}};
  cfg["output"] = {{"report_json", dir.file("rep.json")}};
  write_json(dir.file("rep_cfg.json"), cfg);
  CHECK(run({"classify", "--config", dir.file("rep_cfg.json")}) == 0);
  CHECK(Json::parse(slurp(dir.file("rep.json")))["result"]["regime"] == "bistable");

  Json chem;
  chem["schema"] = 1;
  chem["model"] = {{"name", "chemostat"},
                   {"params",
                    {{"a", 0.25},
                     {"uptake", Json::array({{{"type", "monod"}, {"m", 2.0}, {"k", 0.5}}})},
                     {"r", 1.0},
                     {"sigma", {{0.1, 0.0}, {0.0, 0.1}}}}}};
  chem["sim"] = {{"seed", 6}, {"horizon", 400.0}, {"replicates", 4}};
  chem["task"] = {{"basins", false}};
  chem["output"] = {{"report_json", dir.file("chem.json")}};
  write_json(dir.file("chem_cfg.json"), chem);
  CHECK(run({"classify", "--config", dir.file("chem_cfg.json")}) == 0);
  CHECK(Json::parse(slurp(dir.file("chem.json")))["result"]["regime"] == "persistent");
}
