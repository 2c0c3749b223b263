#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "sbd/commands.hpp"
#include "sbd/config.hpp"
#include "sbd/errors.hpp"
#include "sbd/persistence.hpp"
#include "sbd/warehouse.hpp"

using namespace sbd;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() / ("sbd_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str(const std::string& leaf = "") const { return (leaf.empty() ? path : path / leaf).string(); }
};

std::string write_config(const TempDir& t, const std::string& name, const json& j) {
  const std::string p = t.str(name);
  std::ofstream(p) << j.dump();
  return p;
}

long count_rows(const std::string& text) {
  long n = 0;
  for (char ch : text) n += ch == '\n';
  return n - 1;
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

}  // namespace

TEST_CASE("configuration parsing") {
  const RunConfig w = config_from_json({{"problem", "warehouse"}, {"seed", 1}});
  CHECK(w.engine.mode == SurrogateMode::regression);
  CHECK(w.engine.active_params);
  CHECK(w.engine.active_actions);
  CHECK(w.engine.rounds == 12);
  CHECK(w.engine.batch == 8);
  CHECK(w.grid == 256);
  const RunConfig d = config_from_json({{"problem", "deer"}});
  CHECK(d.engine.rounds == 16);
  CHECK(d.engine.batch == 128);
  CHECK(d.grid == 64);

  try {
    config_from_json({{"problem", "warehouse"}, {"foo", 1}});
    FAIL("unknown key accepted");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("foo") != std::string::npos);
  }
  try {
    config_from_json({{"problem", "warehouse"}, {"epsilon", 1.5}});
    FAIL("epsilon out of range accepted");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("epsilon") != std::string::npos);
  }
  CHECK_THROWS_AS(config_from_json({{"seed", 1}}), ConfigError);
  CHECK_THROWS_AS(config_from_json({{"problem", "warehouse"}, {"rounds", "many"}}), ConfigError);
  CHECK_THROWS_AS(config_from_json({{"problem", "warehouse"}, {"convergence", {{"bogus", 1}}}}), ConfigError);

  json full = {{"problem", "deer"},
               {"mode", "cde"},
               {"seed", 9},
               {"epsilon", 0.25},
               {"economics", {{"cost", 80}}},
               {"convergence", {{"stop_early", false}, {"patience", 4}}},
               {"baseline", {{"reduced_budget", true}, {"generations", 3}}}};
  CHECK_THROWS_AS(config_from_json(full), ConfigError);  // economics belongs to the warehouse
  full.erase("economics");
  const json echo = config_to_json(config_from_json(full));
  CHECK(config_to_json(config_from_json(echo)) == echo);
  CHECK(echo.at("epsilon").get<double>() == 0.25);
}

TEST_CASE("number and trace round trips") {
  for (double v : {0.1, -1.0 / 3.0, 1e-300, 6.02214076e23, 0.0})
    CHECK(parse_double(format_double(v)) == v);
  CHECK(std::isnan(parse_double(format_double(std::nan("")))));
  CHECK(parse_double(format_double(-INFINITY)) == -INFINITY);

  RunTrace t;
  for (int i = 1; i <= 3; ++i) {
    RoundTrace r;
    r.round = i;
    r.cum_sims = 8 * i;
    r.a_star = Eigen::Vector2d(1.0 / i, 2.5 + i);
    r.spread = Eigen::Vector2d(0.1 * i, 0.2);
    r.entropy = i == 1 ? NAN : 1.0 / 7.0 * i;
    r.entropy_se = 0.01;
    t.rounds.push_back(r);
  }
  t.stop_round = 3;
  const std::string text = trace_csv(t, 2);
  const RunTrace back = parse_trace_csv(text);
  REQUIRE(back.rounds.size() == 3);
  CHECK(back.rounds[2].a_star == t.rounds[2].a_star);
  CHECK(back.rounds[1].entropy == t.rounds[1].entropy);
  CHECK(trace_csv(back, 2) == text);
}

TEST_CASE("atomic writes and run locks") {
  TempDir t;
  write_file_atomic(t.str("a.txt"), "first");
  write_file_atomic(t.str("a.txt"), "second");
  CHECK(read_file(t.str("a.txt")) == "second");
  CHECK(std::distance(fs::directory_iterator(t.path), fs::directory_iterator()) == 1);
  {
    RunDirLock lock(t.str());
    CHECK_THROWS(RunDirLock(t.str()));
  }
  CHECK_NOTHROW(RunDirLock(t.str()));
  CHECK_THROWS(read_file(t.str("missing.txt")));
}

TEST_CASE("warehouse command pipeline") {
  TempDir t;
  const std::string run_dir = t.str("run");
  const std::string cfg = write_config(t, "w.json", {{"problem", "warehouse"}, {"seed", 3}, {"output_dir", run_dir}});
  std::ostringstream out, err;
  REQUIRE(cmd_run(cfg, out, err) == kExitOk);
  for (const char* f : {"config.json", "trace.csv", "surface.csv", "summary.json", "posterior.json", "records.csv"})
    CHECK_MESSAGE(fs::exists(run_dir + "/" + f), f);
  for (const auto& e : fs::directory_iterator(run_dir)) CHECK(e.path().filename().string().find(".tmp") == std::string::npos);

  const std::string trace = read_file(run_dir + "/trace.csv");
  const RunTrace parsed = parse_trace_csv(trace);
  const WarehouseProblem p;
  const double oracle = warehouse_oracle(p.observed(), p.economics(), p.prior()).action;
  CHECK(parsed.rounds.back().cum_sims <= 96);
  CHECK(std::abs(parsed.rounds.back().a_star(0) - oracle) <= 0.01 * oracle);

  // rerun into a second directory: byte-identical trace
  const std::string cfg2 = write_config(t, "w2.json", {{"problem", "warehouse"}, {"seed", 3}, {"output_dir", t.str("run2")}});
  REQUIRE(cmd_run(cfg2, out, err) == kExitOk);
  CHECK(read_file(t.str("run2") + "/trace.csv") == trace);
  CHECK(read_file(t.str("run2") + "/surface.csv") == read_file(run_dir + "/surface.csv"));

  // the config echo alone reproduces the run
  json echo = json::parse(read_file(run_dir + "/config.json"));
  echo["output_dir"] = t.str("run3");
  REQUIRE(cmd_run(write_config(t, "echo.json", echo), out, err) == kExitOk);
  CHECK(read_file(t.str("run3") + "/trace.csv") == trace);

  // report
  REQUIRE(cmd_report(run_dir, out, err) == kExitOk);
  const std::string surface = read_file(run_dir + "/report/surface.csv");
  CHECK(count_rows(surface) == 256);
  CHECK(count_rows(read_file(run_dir + "/report/action_posterior.csv")) == 256);
  CHECK(count_rows(read_file(run_dir + "/report/entropy.csv")) == long(parsed.rounds.size()));
  const std::string action_trace = read_file(run_dir + "/report/action_trace.csv");
  REQUIRE(cmd_report(run_dir, out, err) == kExitOk);
  CHECK(read_file(run_dir + "/report/surface.csv") == surface);
  CHECK(read_file(run_dir + "/report/action_trace.csv") == action_trace);

  // baseline rows
  const std::string bcfg = write_config(
      t, "b.json",
      {{"problem", "warehouse"}, {"seed", 3}, {"baseline", {{"generations", 4}, {"n_mc", 10}, {"reduced_budget", true}}}});
  std::ostringstream bout;
  REQUIRE(cmd_baseline(bcfg, run_dir, bout, err) == kExitOk);
  const auto rows = lines(read_file(run_dir + "/comparison.csv"));
  REQUIRE(rows.size() == 3);
  CHECK(rows[0] == "method,a_star_1,total_calls,ratio,reduced_budget");
  CHECK(rows[1].rfind("sbd,", 0) == 0);
  CHECK(rows[2].rfind("monte_carlo,", 0) == 0);
  CHECK(rows[2].substr(rows[2].size() - 5) == ",true");
  const json summary = json::parse(read_file(run_dir + "/summary.json"));
  const long sbd_calls = summary.at("simulator_calls").get<long>();
  const long mc_calls = 10L * (16 + 2 * 16 * 3);
  CHECK(rows[2].find("," + std::to_string(mc_calls) + "," + format_double(double(mc_calls) / double(sbd_calls)) + ",") !=
        std::string::npos);
  REQUIRE(cmd_baseline(bcfg, run_dir, bout, err) == kExitOk);
  CHECK(lines(read_file(run_dir + "/comparison.csv")).size() == 4);
}

TEST_CASE("exit codes") {
  TempDir t;
  std::ostringstream out, err;
  CHECK(cmd_run(t.str("nope.json"), out, err) == kExitIo);
  CHECK(cmd_run(write_config(t, "bad.json", {{"problem", "warehouse"}, {"foo", 1}}), out, err) == kExitConfig);
  CHECK(err.str().find("foo") != std::string::npos);
  std::ofstream(t.str("broken.json")) << "{\"problem\": ";
  CHECK(cmd_run(t.str("broken.json"), out, err) != kExitOk);
  CHECK(cmd_report(t.str("missing"), out, err) == kExitIo);
  fs::create_directories(t.str("empty"));
  std::ostringstream rerr;
  CHECK(cmd_report(t.str("empty"), out, rerr) == kExitIo);
  CHECK(rerr.str().find("trace.csv") != std::string::npos);
  CHECK(rerr.str().find("summary.json") != std::string::npos);
  const std::string cfg = write_config(t, "w.json", {{"problem", "warehouse"}});
  CHECK(cmd_baseline(cfg, t.str("missing"), out, err) == kExitIo);
  // output path blocked by a regular file
  std::ofstream(t.str("blocker")) << "x";
  CHECK(cmd_run(write_config(t, "blocked.json", {{"problem", "warehouse"}, {"output_dir", t.str("blocker")}}), out, err) ==
        kExitIo);
}

TEST_CASE("deer reduced-budget run is reproducible") {
  TempDir t;
  std::ostringstream out, err;
  auto cfg = [&](const std::string& dir) {
    return write_config(t, dir + ".json",
                        {{"problem", "deer"}, {"seed", 2}, {"rounds", 2}, {"batch", 16}, {"output_dir", t.str(dir)}});
  };
  REQUIRE(cmd_run(cfg("a"), out, err) == kExitOk);
  REQUIRE(cmd_run(cfg("b"), out, err) == kExitOk);
  CHECK(read_file(t.str("a") + "/trace.csv") == read_file(t.str("b") + "/trace.csv"));
  REQUIRE(cmd_report(t.str("a"), out, err) == kExitOk);
  CHECK(count_rows(read_file(t.str("a") + "/report/surface.csv")) == 4096);
}
