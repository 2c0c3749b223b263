#include "sbd/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "sbd/errors.hpp"

namespace sbd {

using nlohmann::json;

namespace {

class Reader {
 public:
  Reader(const json& j, std::string prefix) : j_(j), prefix_(std::move(prefix)) {
    if (!j_.is_object()) throw ConfigError(where("") + "must be an object");
  }

  void allow(std::initializer_list<const char*> keys) {
    std::set<std::string> ok(keys.begin(), keys.end());
    for (const auto& item : j_.items()) {
      if (!ok.count(item.key())) throw ConfigError(where(item.key()) + "unknown key");
    }
  }

  bool has(const char* key) const { return j_.contains(key); }

  template <class T>
  void get(const char* key, T& out) const {
    if (!j_.contains(key)) return;
    const json& v = j_.at(key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(where(key) + "must be a boolean");
      out = v.get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError(where(key) + "must be an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.is_number_unsigned() || v.get<long long>() >= 0) out = v.get<T>();
        else throw ConfigError(where(key) + "must be >= 0");
      } else {
        out = v.get<T>();
      }
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(where(key) + "must be a number");
      out = v.get<T>();
    } else {
      if (!v.is_string()) throw ConfigError(where(key) + "must be a string");
      out = v.get<std::string>();
    }
  }

  Reader child(const char* key) const { return Reader(j_.at(key), prefix_ + key + "."); }

  std::string where(const std::string& key) const { return "config key '" + prefix_ + key + "': "; }

 private:
  const json& j_;
  std::string prefix_;
};

void require(bool ok, const std::string& key, const std::string& constraint) {
  if (!ok) throw ConfigError("config key '" + key + "': " + constraint);
}

}  // namespace

RunConfig config_from_json(const json& j) {
  Reader r(j, "");
  r.allow({"problem", "mode", "active_params", "active_actions", "rounds", "batch", "seed", "epsilon", "grid",
           "thompson_draws", "gp_restarts", "gp_max_iterations", "gp_max_fit_points", "entropy_draws", "threads",
           "output_dir", "convergence", "posterior_training", "economics", "lotka_volterra", "baseline"});
  RunConfig c;
  if (!r.has("problem")) throw ConfigError("config key 'problem': required");
  r.get("problem", c.problem);
  require(c.problem == "warehouse" || c.problem == "deer", "problem", "must be 'warehouse' or 'deer'");
  const bool deer = c.problem == "deer";

  EngineConfig& e = c.engine;
  e.rounds = deer ? 16 : 12;
  e.batch = deer ? 128 : 8;
  c.grid = deer ? 64 : 256;
  c.baseline.n_mc = deer ? 1000 : 100;
  c.baseline.de.population = deer ? 32 : 16;
  c.baseline.de.generations = deer ? 30 : 50;

  std::string mode = "regression";
  r.get("mode", mode);
  require(mode == "regression" || mode == "cde", "mode", "must be 'regression' or 'cde'");
  e.mode = surrogate_mode_from_string(mode);
  r.get("active_params", e.active_params);
  r.get("active_actions", e.active_actions);
  r.get("rounds", e.rounds);
  require(e.rounds >= 1, "rounds", "must be >= 1");
  r.get("batch", e.batch);
  require(e.batch >= 1, "batch", "must be >= 1");
  require(long(e.rounds) * e.batch >= 16, "rounds", "rounds * batch must be >= 16");
  r.get("seed", e.seed);
  r.get("epsilon", e.epsilon);
  require(e.epsilon >= 0.0 && e.epsilon <= 1.0, "epsilon", "must lie in [0, 1]");
  r.get("grid", c.grid);
  require(c.grid >= 16, "grid", "must be >= 16");
  r.get("thompson_draws", e.thompson_draws);
  require(e.thompson_draws >= 1, "thompson_draws", "must be >= 1");
  r.get("gp_restarts", e.gp_restarts);
  require(e.gp_restarts >= 1, "gp_restarts", "must be >= 1");
  r.get("gp_max_iterations", e.gp_max_iterations);
  require(e.gp_max_iterations >= 1, "gp_max_iterations", "must be >= 1");
  r.get("gp_max_fit_points", e.gp_max_fit_points);
  require(e.gp_max_fit_points >= 2, "gp_max_fit_points", "must be >= 2");
  r.get("entropy_draws", e.entropy_draws);
  require(e.entropy_draws >= 100, "entropy_draws", "must be >= 100");
  r.get("threads", e.threads);
  require(e.threads >= 1, "threads", "must be >= 1");
  c.output_dir = c.problem + "-seed" + std::to_string(e.seed);
  r.get("output_dir", c.output_dir);
  require(!c.output_dir.empty(), "output_dir", "must not be empty");

  if (r.has("convergence")) {
    Reader s = r.child("convergence");
    s.allow({"rel_tol", "patience", "min_rounds", "stop_early"});
    if (s.has("rel_tol")) {
      s.get("rel_tol", e.convergence.rel_tol);
      require(e.convergence.rel_tol > 0.0, "convergence.rel_tol", "must be > 0");
    }
    s.get("patience", e.convergence.patience);
    require(e.convergence.patience >= 1, "convergence.patience", "must be >= 1");
    s.get("min_rounds", e.convergence.min_rounds);
    require(e.convergence.min_rounds >= 0, "convergence.min_rounds", "must be >= 0");
    s.get("stop_early", e.convergence.stop_early);
  }
  if (e.convergence.rel_tol == 0.0) e.convergence.rel_tol = deer ? 0.05 : 0.01;

  if (r.has("posterior_training")) {
    Reader s = r.child("posterior_training");
    s.allow({"learning_rate", "batch_size", "max_epochs", "patience", "validation_fraction"});
    TrainingConfig& t = e.posterior_training;
    s.get("learning_rate", t.learning_rate);
    require(t.learning_rate > 0.0, "posterior_training.learning_rate", "must be > 0");
    s.get("batch_size", t.batch_size);
    require(t.batch_size >= 1, "posterior_training.batch_size", "must be >= 1");
    s.get("max_epochs", t.max_epochs);
    require(t.max_epochs >= 1, "posterior_training.max_epochs", "must be >= 1");
    s.get("patience", t.patience);
    require(t.patience >= 1, "posterior_training.patience", "must be >= 1");
    s.get("validation_fraction", t.validation_fraction);
    require(t.validation_fraction > 0.0 && t.validation_fraction <= 0.5, "posterior_training.validation_fraction",
            "must lie in (0, 0.5]");
  }

  if (r.has("economics")) {
    require(!deer, "economics", "only valid for the warehouse problem");
    Reader s = r.child("economics");
    s.allow({"cost", "value", "penalty"});
    s.get("cost", c.economics.cost);
    s.get("value", c.economics.value);
    s.get("penalty", c.economics.penalty);
    require(c.economics.cost >= 0 && c.economics.value >= 0 && c.economics.penalty >= 0, "economics",
            "all values must be >= 0");
  }

  if (r.has("lotka_volterra")) {
    require(deer, "lotka_volterra", "only valid for the deer problem");
    Reader s = r.child("lotka_volterra");
    s.allow({"prose_literal_rates", "excess_only", "cull_cost", "compression_sims", "event_budget",
             "population_cap"});
    LvConfig& lv = c.lotka_volterra;
    s.get("prose_literal_rates", lv.prose_literal_rates);
    s.get("excess_only", lv.excess_only);
    std::string cost = "duration";
    s.get("cull_cost", cost);
    require(cost == "duration" || cost == "flat", "lotka_volterra.cull_cost", "must be 'duration' or 'flat'");
    lv.cull_cost_duration = cost == "duration";
    s.get("compression_sims", c.compression_sims);
    require(c.compression_sims >= 5000, "lotka_volterra.compression_sims", "must be >= 5000");
    s.get("event_budget", lv.event_budget);
    require(lv.event_budget >= 1, "lotka_volterra.event_budget", "must be >= 1");
    s.get("population_cap", lv.population_cap);
    require(lv.population_cap >= 1, "lotka_volterra.population_cap", "must be >= 1");
  }

  if (r.has("baseline")) {
    Reader s = r.child("baseline");
    s.allow({"n_mc", "population", "generations", "F", "CR", "tolerance", "reevaluate_parents", "reduced_budget"});
    BaselineSettings& b = c.baseline;
    s.get("n_mc", b.n_mc);
    require(b.n_mc >= 1, "baseline.n_mc", "must be >= 1");
    s.get("population", b.de.population);
    require(b.de.population >= 8, "baseline.population", "must be >= 8");
    s.get("generations", b.de.generations);
    require(b.de.generations >= 1, "baseline.generations", "must be >= 1");
    s.get("F", b.de.F);
    require(b.de.F > 0.0 && b.de.F <= 2.0, "baseline.F", "must lie in (0, 2]");
    s.get("CR", b.de.CR);
    require(b.de.CR >= 0.0 && b.de.CR <= 1.0, "baseline.CR", "must lie in [0, 1]");
    s.get("tolerance", b.de.tolerance);
    require(b.de.tolerance >= 0.0, "baseline.tolerance", "must be >= 0");
    s.get("reevaluate_parents", b.de.reevaluate_parents);
    s.get("reduced_budget", b.reduced_budget);
  }
  c.baseline.de.seed = derive_stream(e.seed, "baseline");
  c.baseline.de.threads = e.threads;
  return c;
}

RunConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return config_from_json(j);
}

json config_to_json(const RunConfig& c) {
  const EngineConfig& e = c.engine;
  json j;
  j["problem"] = c.problem;
  j["mode"] = to_string(e.mode);
  j["active_params"] = e.active_params;
  j["active_actions"] = e.active_actions;
  j["rounds"] = e.rounds;
  j["batch"] = e.batch;
  j["seed"] = e.seed;
  j["epsilon"] = e.epsilon;
  j["grid"] = c.grid;
  j["thompson_draws"] = e.thompson_draws;
  j["gp_restarts"] = e.gp_restarts;
  j["gp_max_iterations"] = e.gp_max_iterations;
  j["gp_max_fit_points"] = e.gp_max_fit_points;
  j["entropy_draws"] = e.entropy_draws;
  j["threads"] = e.threads;
  j["output_dir"] = c.output_dir;
  j["convergence"] = {{"rel_tol", e.convergence.rel_tol},
                      {"patience", e.convergence.patience},
                      {"min_rounds", e.convergence.min_rounds},
                      {"stop_early", e.convergence.stop_early}};
  const TrainingConfig& t = e.posterior_training;
  j["posterior_training"] = {{"learning_rate", t.learning_rate},
                             {"batch_size", t.batch_size},
                             {"max_epochs", t.max_epochs},
                             {"patience", t.patience},
                             {"validation_fraction", t.validation_fraction}};
  if (c.problem == "warehouse") {
    j["economics"] = {{"cost", c.economics.cost}, {"value", c.economics.value}, {"penalty", c.economics.penalty}};
  } else {
    const LvConfig& lv = c.lotka_volterra;
    j["lotka_volterra"] = {{"prose_literal_rates", lv.prose_literal_rates},
                           {"excess_only", lv.excess_only},
                           {"cull_cost", lv.cull_cost_duration ? "duration" : "flat"},
                           {"compression_sims", c.compression_sims},
                           {"event_budget", lv.event_budget},
                           {"population_cap", lv.population_cap}};
  }
  const BaselineSettings& b = c.baseline;
  j["baseline"] = {{"n_mc", b.n_mc},
                   {"population", b.de.population},
                   {"generations", b.de.generations},
                   {"F", b.de.F},
                   {"CR", b.de.CR},
                   {"tolerance", b.de.tolerance},
                   {"reevaluate_parents", b.de.reevaluate_parents},
                   {"reduced_budget", b.reduced_budget}};
  return j;
}

std::unique_ptr<Problem> make_problem(const RunConfig& c) {
  if (c.problem == "warehouse") return std::make_unique<WarehouseProblem>(c.economics, c.grid);
  if (c.problem == "deer") return std::make_unique<DeerProblem>(c.lotka_volterra, c.grid);
  throw ConfigError("config key 'problem': unknown problem '" + c.problem + "'");
}

}  // namespace sbd
