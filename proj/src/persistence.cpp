#include "sbd/persistence.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sbd/errors.hpp"

namespace sbd {

using nlohmann::json;
namespace fs = std::filesystem;

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return INFINITY;
  if (s == "-inf") return -INFINITY;
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw IoError("not a number: '" + s + "'");
  }
  if (used != s.size()) throw IoError("not a number: '" + s + "'");
  return v;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp);
    out << content;
    out.flush();
    if (!out) throw IoError("write failed for " + tmp);
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw IoError("cannot rename " + tmp + " to " + path + ": " + ec.message());
  }
}

RunDirLock::RunDirLock(const std::string& dir) : path_(dir + "/.lock") {
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    if (errno == EEXIST) throw IoError("run directory " + dir + " is locked by another process (" + path_ + ")");
    throw IoError("cannot create lock " + path_ + ": " + std::strerror(errno));
  }
  const std::string pid = std::to_string(::getpid()) + "\n";
  if (::write(fd, pid.data(), pid.size()) < 0) {
    // the lock is the file's existence; its content is informational
  }
  ::close(fd);
}

RunDirLock::~RunDirLock() { ::unlink(path_.c_str()); }

std::string output_root() {
  if (const char* root = std::getenv("SBD_OUTPUT_ROOT"); root && *root) return root;
  return "runs";
}

std::string resolve_output_dir(const std::string& dir) {
  if (fs::path(dir).is_absolute()) return dir;
  return (fs::path(output_root()) / dir).string();
}

std::string trace_csv(const RunTrace& trace, Eigen::Index action_dim) {
  std::ostringstream out;
  out << "round,cum_sims";
  for (Eigen::Index d = 1; d <= action_dim; ++d) out << ",a_star_" << d;
  for (Eigen::Index d = 1; d <= action_dim; ++d) out << ",spread_" << d;
  out << ",entropy,entropy_se\n";
  for (const RoundTrace& r : trace.rounds) {
    out << r.round << ',' << r.cum_sims;
    for (Eigen::Index d = 0; d < action_dim; ++d)
      out << ',' << format_double(d < r.a_star.size() ? r.a_star(d) : std::nan(""));
    for (Eigen::Index d = 0; d < action_dim; ++d)
      out << ',' << format_double(d < r.spread.size() ? r.spread(d) : std::nan(""));
    out << ',' << format_double(r.entropy) << ',' << format_double(r.entropy_se) << '\n';
  }
  return out.str();
}

namespace {

std::vector<std::string> split(const std::string& line, char sep = ',') {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, sep)) cells.push_back(cell);
  if (!line.empty() && line.back() == sep) cells.emplace_back();
  return cells;
}

}  // namespace

RunTrace parse_trace_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw IoError("trace is empty");
  const auto header = split(line);
  if (header.size() < 4 || header[0] != "round" || header[1] != "cum_sims" || (header.size() - 4) % 2 != 0) {
    throw IoError("trace header is malformed");
  }
  const auto dim = Eigen::Index((header.size() - 4) / 2);
  RunTrace trace;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != header.size()) throw IoError("trace row has " + std::to_string(cells.size()) + " cells");
    RoundTrace r;
    r.round = std::stoi(cells[0]);
    r.cum_sims = std::stol(cells[1]);
    r.a_star.resize(dim);
    r.spread.resize(dim);
    for (Eigen::Index d = 0; d < dim; ++d) {
      r.a_star(d) = parse_double(cells[std::size_t(2 + d)]);
      r.spread(d) = parse_double(cells[std::size_t(2 + dim + d)]);
    }
    r.entropy = parse_double(cells[std::size_t(2 + 2 * dim)]);
    r.entropy_se = parse_double(cells[std::size_t(3 + 2 * dim)]);
    trace.rounds.push_back(r);
  }
  return trace;
}

std::string surface_csv(const SurfaceDump& s) {
  std::ostringstream out;
  const Eigen::Index d = s.candidates.cols();
  for (Eigen::Index k = 1; k <= d; ++k) out << 'a' << k << ',';
  out << "u_mean,u_sd,action_posterior_prob\n";
  for (Eigen::Index i = 0; i < s.candidates.rows(); ++i) {
    for (Eigen::Index k = 0; k < d; ++k) out << format_double(s.candidates(i, k)) << ',';
    out << format_double(s.u_mean(i)) << ',' << format_double(s.u_sd(i)) << ',' << format_double(s.probability(i))
        << '\n';
  }
  return out.str();
}

std::string records_csv(const std::vector<WeightedSimulationRecord>& records) {
  std::ostringstream out;
  if (records.empty()) return "round\n";
  const auto& f = records.front();
  out << "round";
  for (Eigen::Index k = 1; k <= f.theta.size(); ++k) out << ",theta_" << k;
  for (Eigen::Index k = 1; k <= f.summary.size(); ++k) out << ",s_" << k;
  for (Eigen::Index k = 1; k <= f.action.size(); ++k) out << ",a_" << k;
  out << ",utility,flagged\n";
  for (const auto& r : records) {
    out << r.round;
    for (Eigen::Index k = 0; k < r.theta.size(); ++k) out << ',' << format_double(r.theta(k));
    for (Eigen::Index k = 0; k < r.summary.size(); ++k) out << ',' << format_double(r.summary(k));
    for (Eigen::Index k = 0; k < r.action.size(); ++k) out << ',' << format_double(r.action(k));
    out << ',' << format_double(r.utility) << ',' << (r.flagged ? 1 : 0) << '\n';
  }
  return out.str();
}

json vector_to_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Eigen::VectorXd vector_from_json(const json& j) {
  Eigen::VectorXd v(Eigen::Index(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(Eigen::Index(i)) = j[i].get<double>();
  return v;
}

namespace {

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(vector_to_json(m.row(i).transpose()));
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  if (j.empty()) return Eigen::MatrixXd(0, 0);
  Eigen::MatrixXd m(Eigen::Index(j.size()), Eigen::Index(j[0].size()));
  for (std::size_t i = 0; i < j.size(); ++i) m.row(Eigen::Index(i)) = vector_from_json(j[i]).transpose();
  return m;
}

json hyper_to_json(const KernelHyper& h) {
  return {{"amplitude", h.amplitude}, {"lengthscales", vector_to_json(h.lengthscales)},
          {"noise_variance", h.noise_variance}};
}

KernelHyper hyper_from_json(const json& j) {
  KernelHyper h;
  h.amplitude = j.at("amplitude").get<double>();
  h.lengthscales = vector_from_json(j.at("lengthscales"));
  h.noise_variance = j.at("noise_variance").get<double>();
  return h;
}

}  // namespace

json mlp_to_json(const Mlp& net) {
  json layers = json::array();
  for (const DenseLayer& l : net.layers()) {
    layers.push_back({{"activation", to_string(l.activation)}, {"weight", matrix_to_json(l.weight)},
                      {"bias", vector_to_json(l.bias)}});
  }
  return {{"layers", layers}};
}

Mlp mlp_from_json(const json& j) {
  std::vector<DenseLayer> layers;
  for (const json& l : j.at("layers")) {
    DenseLayer d;
    d.activation = activation_from_string(l.at("activation").get<std::string>());
    d.weight = matrix_from_json(l.at("weight"));
    d.bias = vector_from_json(l.at("bias"));
    layers.push_back(std::move(d));
  }
  return Mlp(std::move(layers));
}

json standardizer_to_json(const Standardizer& s) {
  return {{"shift", vector_to_json(s.shift)}, {"scale", vector_to_json(s.scale)}};
}

Standardizer standardizer_from_json(const json& j) {
  Standardizer s;
  s.shift = vector_from_json(j.at("shift"));
  s.scale = vector_from_json(j.at("scale"));
  return s;
}

json mdn_to_json(const MdnParameters& p) {
  json hidden = json::array();
  for (int h : p.arch.hidden) hidden.push_back(h);
  return {{"architecture",
           {{"input_dim", p.arch.input_dim},
            {"target_dim", p.arch.target_dim},
            {"n_components", p.arch.n_components},
            {"hidden", hidden},
            {"activation", to_string(p.arch.activation)}}},
          {"network", mlp_to_json(p.network)},
          {"standardized", p.standardized},
          {"conditioner_scaling", standardizer_to_json(p.conditioner_scaling)},
          {"target_scaling", standardizer_to_json(p.target_scaling)}};
}

MdnParameters mdn_from_json(const json& j) {
  MdnParameters p;
  const json& a = j.at("architecture");
  p.arch.input_dim = a.at("input_dim").get<int>();
  p.arch.target_dim = a.at("target_dim").get<int>();
  p.arch.n_components = a.at("n_components").get<int>();
  p.arch.hidden = a.at("hidden").get<std::vector<int>>();
  p.arch.activation = activation_from_string(a.at("activation").get<std::string>());
  p.network = mlp_from_json(j.at("network"));
  p.standardized = j.at("standardized").get<bool>();
  p.conditioner_scaling = standardizer_from_json(j.at("conditioner_scaling"));
  p.target_scaling = standardizer_from_json(j.at("target_scaling"));
  if (p.network.input_dim() != p.arch.input_dim || p.network.output_dim() != p.arch.output_size()) {
    throw IoError("posterior network does not match its architecture");
  }
  return p;
}

json gp_to_json(const GpSurrogate& gp) {
  const GaussianProcessState& s = gp.state();
  return {{"hyper", hyper_to_json(s.hyper())},
          {"input_scaling", standardizer_to_json(gp.input_scaling())},
          {"target_shift", gp.target_shift()},
          {"target_scale", gp.target_scale()},
          {"lognormal", gp.lognormal()},
          {"prior_mean", s.prior_mean()},
          {"jitter", s.jitter()},
          {"inputs", matrix_to_json(s.inputs())},
          {"targets", vector_to_json(s.targets())},
          {"weights", vector_to_json(s.weights())}};
}

GpSurrogate gp_from_json(const json& j) {
  GaussianProcessState state(hyper_from_json(j.at("hyper")), matrix_from_json(j.at("inputs")),
                             vector_from_json(j.at("targets")), vector_from_json(j.at("weights")),
                             j.at("prior_mean").get<double>());
  return GpSurrogate(standardizer_from_json(j.at("input_scaling")), j.at("target_shift").get<double>(),
                     j.at("target_scale").get<double>(), j.at("lognormal").get<bool>(), std::move(state));
}

json mixture_to_json(const MixtureDensity& m) {
  json comps = json::array();
  for (Eigen::Index k = 0; k < m.n_components(); ++k) {
    comps.push_back({{"weight", m.weights(k)},
                     {"mean", vector_to_json(m.means[std::size_t(k)])},
                     {"cholesky", matrix_to_json(m.cholesky[std::size_t(k)])}});
  }
  return comps;
}

json proposal_to_json(const ProposalMixture& q) {
  json prior = json::array();
  for (const ParameterPrior& p : q.prior().parameters()) {
    const char* kind = p.kind == ParameterPrior::Kind::normal    ? "normal"
                       : p.kind == ParameterPrior::Kind::uniform ? "uniform"
                                                                 : "log_uniform";
    prior.push_back({{"kind", kind}, {"a", p.a}, {"b", p.b}});
  }
  json comps = json::array();
  for (std::size_t j = 0; j < q.size(); ++j) {
    const ProposalComponent& c = q.component(j);
    if (std::holds_alternative<PriorSpec>(c.density)) {
      comps.push_back({{"type", "prior"}, {"support_mass", c.support_mass}});
    } else {
      comps.push_back({{"type", "mixture"},
                       {"support_mass", c.support_mass},
                       {"components", mixture_to_json(std::get<MixtureDensity>(c.density))}});
    }
  }
  return {{"prior", prior}, {"components", comps}};
}

json compressor_to_json(const Compressor& c) {
  return {{"network", mlp_to_json(c.network)},
          {"input_scaling", standardizer_to_json(c.input_scaling)},
          {"output_scaling", standardizer_to_json(c.output_scaling)}};
}

Compressor compressor_from_json(const json& j) {
  Compressor c;
  c.network = mlp_from_json(j.at("network"));
  c.input_scaling = standardizer_from_json(j.at("input_scaling"));
  c.output_scaling = standardizer_from_json(j.at("output_scaling"));
  return c;
}

json summary_to_json(const RunResult& r, const std::string& problem, int compression_sims) {
  json rounds = json::array();
  for (const RoundTrace& t : r.trace.rounds) {
    rounds.push_back({{"round", t.round},
                      {"cum_sims", t.cum_sims},
                      {"expected_utility", format_double(t.expected_utility)},
                      {"non_identifiable", t.non_identifiable},
                      {"posterior_trained", t.posterior_trained},
                      {"posterior_best_epoch", t.posterior_best_epoch},
                      {"posterior_validation_loss", format_double(t.posterior_validation_loss)},
                      {"effective_sample_size", t.effective_sample_size},
                      {"quarantined", t.quarantined},
                      {"flagged", t.flagged},
                      {"gp_hyper", t.gp_hyper.lengthscales.size() ? hyper_to_json(t.gp_hyper) : json(nullptr)},
                      {"gp_jitter", t.gp_jitter}});
  }
  json a = json::array(), s = json::array();
  for (Eigen::Index d = 0; d < r.a_star.size(); ++d) {
    a.push_back(format_double(r.a_star(d)));
    s.push_back(format_double(r.spread(d)));
  }
  return {{"problem", problem},
          {"a_star", a},
          {"spread", s},
          {"non_identifiable", r.non_identifiable},
          {"simulator_calls", r.simulator_calls},
          {"compression_sims", compression_sims},
          {"rounds_run", r.trace.rounds.size()},
          {"stop_round", r.trace.stop_round},
          {"x_star", vector_to_json(r.x_star)},
          {"aborted", r.aborted},
          {"error", r.error},
          {"diagnostics", rounds}};
}

}  // namespace sbd
