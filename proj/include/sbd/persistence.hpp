#pragma once

#include <string>
#include <vector>

#include "json.hpp"

#include "sbd/engine.hpp"
#include "sbd/lotka_volterra.hpp"

namespace sbd {

// 17 significant digits; "nan", "inf", "-inf" for non-finite values.
std::string format_double(double v);
double parse_double(const std::string& s);

std::string read_file(const std::string& path);
// Writes to a temporary sibling and renames it over `path`.
void write_file_atomic(const std::string& path, const std::string& content);

// Exclusive lock file inside a run directory, removed on destruction.
class RunDirLock {
 public:
  explicit RunDirLock(const std::string& dir);
  ~RunDirLock();
  RunDirLock(const RunDirLock&) = delete;
  RunDirLock& operator=(const RunDirLock&) = delete;

 private:
  std::string path_;
};

// Output root: $SBD_OUTPUT_ROOT, else "runs" relative to the working directory.
std::string output_root();
std::string resolve_output_dir(const std::string& dir);

std::string trace_csv(const RunTrace& trace, Eigen::Index action_dim);
RunTrace parse_trace_csv(const std::string& text);

std::string surface_csv(const SurfaceDump& surface);
std::string records_csv(const std::vector<WeightedSimulationRecord>& records);

nlohmann::json mlp_to_json(const Mlp& net);
Mlp mlp_from_json(const nlohmann::json& j);
nlohmann::json standardizer_to_json(const Standardizer& s);
Standardizer standardizer_from_json(const nlohmann::json& j);
nlohmann::json vector_to_json(const Eigen::VectorXd& v);
Eigen::VectorXd vector_from_json(const nlohmann::json& j);

nlohmann::json mdn_to_json(const MdnParameters& p);
MdnParameters mdn_from_json(const nlohmann::json& j);
nlohmann::json gp_to_json(const GpSurrogate& gp);
GpSurrogate gp_from_json(const nlohmann::json& j);
nlohmann::json mixture_to_json(const MixtureDensity& m);
nlohmann::json proposal_to_json(const ProposalMixture& q);
nlohmann::json compressor_to_json(const Compressor& c);
Compressor compressor_from_json(const nlohmann::json& j);

nlohmann::json summary_to_json(const RunResult& r, const std::string& problem, int compression_sims);

}  // namespace sbd
