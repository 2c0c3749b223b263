#pragma once

#include <iosfwd>
#include <string>

#include "sbd/config.hpp"
#include "sbd/persistence.hpp"

namespace sbd {

enum ExitCode { kExitOk = 0, kExitConfig = 1, kExitEngine = 2, kExitIo = 3 };

// Trains the compression network for the deer problem from prior
// simulations derived from `seed`.
Compressor train_deer_compressor(const LvConfig& lv, int sims, std::uint64_t seed, int threads);

// Builds the problem for `c`, including the deer compression network.
std::unique_ptr<Problem> prepare_problem(const RunConfig& c);

void write_run_artifacts(const std::string& dir, const RunConfig& c, const Problem& problem, const RunResult& r);

int cmd_run(const std::string& config_path, std::ostream& out, std::ostream& err);
int cmd_baseline(const std::string& config_path, const std::string& run_dir, std::ostream& out, std::ostream& err);
int cmd_report(const std::string& run_dir, std::ostream& out, std::ostream& err);
// Warehouse: quadrature oracle on the fixture. Deer: full-budget baseline
// on the posterior of `run_dir`. Writes the reference to `out_path`
// (default: <output root>/oracle/<problem>_reference.json).
int cmd_oracle(const std::string& problem, const std::string& run_dir, const std::string& out_path,
               std::ostream& out, std::ostream& err);
// Regenerates the observed-data fixtures into `data_dir`.
int cmd_fixtures(const std::string& data_dir, std::ostream& out, std::ostream& err);

}  // namespace sbd
