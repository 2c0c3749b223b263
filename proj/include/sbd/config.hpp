#pragma once

#include <memory>
#include <string>

#include "json.hpp"

#include "sbd/baseline.hpp"
#include "sbd/engine.hpp"
#include "sbd/lotka_volterra.hpp"
#include "sbd/warehouse.hpp"

namespace sbd {

struct BaselineSettings {
  int n_mc = 100;
  DeConfig de;
  bool reduced_budget = false;
};

struct RunConfig {
  std::string problem;
  EngineConfig engine;
  int grid = 0;  // per-dimension resolution
  WarehouseEconomics economics;
  LvConfig lotka_volterra;
  int compression_sims = 5000;
  BaselineSettings baseline;
  std::string output_dir;
};

// Strict parse: unknown keys, wrong types and out-of-range values raise
// ConfigError naming the key. Defaults depend on the problem.
RunConfig config_from_json(const nlohmann::json& j);
RunConfig parse_config(const std::string& path);
// Fully resolved configuration; config_from_json(config_to_json(c)) == c.
nlohmann::json config_to_json(const RunConfig& c);

std::unique_ptr<Problem> make_problem(const RunConfig& c);

}  // namespace sbd
