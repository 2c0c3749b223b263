#include "sbd/commands.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "sbd/errors.hpp"

namespace sbd {

using nlohmann::json;
namespace fs = std::filesystem;

Compressor train_deer_compressor(const LvConfig& lv, int sims, std::uint64_t seed, int threads) {
  const CompressionSet set = lv_prior_simulations(lv, sims, derive_stream(seed, "compression-sims"), threads);
  CompressorTrainingConfig tc;
  tc.seed = derive_stream(seed, "compression-train");
  return train_compression_net(set.summaries, set.log_theta, tc).compressor;
}

std::unique_ptr<Problem> prepare_problem(const RunConfig& c) {
  std::unique_ptr<Problem> p = make_problem(c);
  if (auto* deer = dynamic_cast<DeerProblem*>(p.get())) {
    deer->set_compressor(train_deer_compressor(c.lotka_volterra, c.compression_sims, c.engine.seed, c.engine.threads));
  }
  return p;
}

void write_run_artifacts(const std::string& dir, const RunConfig& c, const Problem& problem, const RunResult& r) {
  const int compression = c.problem == "deer" ? c.compression_sims : 0;
  write_file_atomic(dir + "/trace.csv", trace_csv(r.trace, problem.actions().dim()));
  write_file_atomic(dir + "/records.csv", records_csv(r.records));
  if (r.surface.candidates.rows() > 0) write_file_atomic(dir + "/surface.csv", surface_csv(r.surface));
  if (r.posterior) write_file_atomic(dir + "/posterior.json", mdn_to_json(*r.posterior).dump(1) + "\n");
  if (r.surrogate) write_file_atomic(dir + "/surrogate.json", gp_to_json(*r.surrogate).dump(1) + "\n");
  if (r.utility_model) write_file_atomic(dir + "/utility_model.json", mdn_to_json(*r.utility_model).dump(1) + "\n");
  write_file_atomic(dir + "/proposal.json", proposal_to_json(r.proposal).dump(1) + "\n");
  if (const auto* deer = dynamic_cast<const DeerProblem*>(&problem); deer && deer->has_compressor()) {
    write_file_atomic(dir + "/compressor.json", compressor_to_json(deer->compressor()).dump(1) + "\n");
  }
  // summary last: its presence marks a complete artifact set
  write_file_atomic(dir + "/summary.json", summary_to_json(r, c.problem, compression).dump(1) + "\n");
}

namespace {

void prepare_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir + ": " + ec.message());
  const std::string probe = dir + "/.probe";
  {
    std::ofstream f(probe);
    if (!f) throw IoError("output directory " + dir + " is not writable");
  }
  fs::remove(probe, ec);
}

json read_json(const std::string& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw IoError("malformed JSON in " + path + ": " + e.what());
  }
}

template <class F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitEngine;
  }
}

std::string join_actions(const Eigen::VectorXd& a) {
  std::string s;
  for (Eigen::Index d = 0; d < a.size(); ++d) s += (d ? "," : "") + format_double(a(d));
  return s;
}

}  // namespace

int cmd_run(const std::string& config_path, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const RunConfig c = parse_config(config_path);
    const std::string dir = resolve_output_dir(c.output_dir);
    prepare_dir(dir);
    RunDirLock lock(dir);
    write_file_atomic(dir + "/config.json", config_to_json(c).dump(1) + "\n");
    std::unique_ptr<Problem> problem = prepare_problem(c);
    problem->reset_simulator_calls();
    const RunResult r = run_sbd(*problem, c.engine);
    write_run_artifacts(dir, c, *problem, r);
    if (r.aborted) {
      err << "engine aborted: " << r.error << "\n";
      return int(kExitEngine);
    }
    out << "a_star " << join_actions(r.a_star) << "\n"
        << "spread " << join_actions(r.spread) << "\n"
        << "simulator_calls " << r.simulator_calls << "\n"
        << "rounds " << r.trace.rounds.size() << " stop_round " << r.trace.stop_round << "\n"
        << "run_dir " << dir << "\n";
    return int(kExitOk);
  });
}

int cmd_baseline(const std::string& config_path, const std::string& run_dir, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const RunConfig c = parse_config(config_path);
    if (!fs::is_directory(run_dir)) throw IoError("run directory " + run_dir + " does not exist");
    const json summary = read_json(run_dir + "/summary.json");
    if (summary.at("problem").get<std::string>() != c.problem) {
      throw ConfigError("config key 'problem': run directory holds a '" + summary.at("problem").get<std::string>() +
                        "' run");
    }
    if (!fs::exists(run_dir + "/posterior.json")) {
      throw IoError("run directory " + run_dir + " has no trained posterior (posterior.json)");
    }
    const MdnParameters posterior = mdn_from_json(read_json(run_dir + "/posterior.json"));
    const Eigen::VectorXd x_star = vector_from_json(summary.at("x_star"));
    std::unique_ptr<Problem> problem = make_problem(c);
    RunDirLock lock(run_dir);
    const PosteriorSampler sampler = amortized_posterior_sampler(posterior, x_star, problem->prior());
    const BaselineResult b = run_baseline(*problem, sampler, c.baseline.n_mc, c.baseline.de);

    const long sbd_calls = summary.at("simulator_calls").get<long>();
    const std::string table = run_dir + "/comparison.csv";
    std::string text;
    const Eigen::Index d = problem->actions().dim();
    if (fs::exists(table)) {
      text = read_file(table);
    } else {
      text = "method";
      for (Eigen::Index k = 1; k <= d; ++k) text += ",a_star_" + std::to_string(k);
      text += ",total_calls,ratio,reduced_budget\nsbd";
      for (const auto& v : summary.at("a_star")) text += "," + v.get<std::string>();
      text += "," + std::to_string(sbd_calls) + "," + format_double(1.0) + ",false\n";
    }
    const double ratio = double(b.total_calls) / double(sbd_calls);
    text += "monte_carlo," + join_actions(b.a_star) + "," + std::to_string(b.total_calls) + "," +
            format_double(ratio) + "," + (c.baseline.reduced_budget ? "true" : "false") + "\n";
    write_file_atomic(table, text);
    out << "a_star " << join_actions(b.a_star) << "\n"
        << "total_calls " << b.total_calls << "\n"
        << "ratio " << format_double(ratio) << "\n";
    return int(kExitOk);
  });
}

int cmd_report(const std::string& run_dir, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    std::vector<std::string> missing;
    for (const char* f : {"trace.csv", "surface.csv", "summary.json"})
      if (!fs::exists(run_dir + "/" + f)) missing.push_back(f);
    if (!missing.empty()) {
      std::string list;
      for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
      throw IoError("run directory " + run_dir + " is missing: " + list);
    }
    const RunTrace trace = parse_trace_csv(read_file(run_dir + "/trace.csv"));
    const std::string surface_text = read_file(run_dir + "/surface.csv");
    const std::string dir = run_dir + "/report";
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir + ": " + ec.message());

    std::ostringstream a;
    a << "round,cum_sims,dim,a_star,lower,upper\n";
    for (const RoundTrace& r : trace.rounds) {
      for (Eigen::Index k = 0; k < r.a_star.size(); ++k) {
        a << r.round << ',' << r.cum_sims << ',' << (k + 1) << ',' << format_double(r.a_star(k)) << ','
          << format_double(r.a_star(k) - r.spread(k)) << ',' << format_double(r.a_star(k) + r.spread(k)) << '\n';
      }
    }
    write_file_atomic(dir + "/action_trace.csv", a.str());

    std::ostringstream e;
    e << "round,cum_sims,entropy,lower,upper\n";
    for (const RoundTrace& r : trace.rounds) {
      e << r.round << ',' << r.cum_sims << ',' << format_double(r.entropy) << ','
        << format_double(r.entropy - r.entropy_se) << ',' << format_double(r.entropy + r.entropy_se) << '\n';
    }
    write_file_atomic(dir + "/entropy.csv", e.str());

    // surface: a_1..a_d,u_mean,u_sd,action_posterior_prob
    std::istringstream in(surface_text);
    std::string line;
    std::getline(in, line);
    std::vector<std::string> header;
    {
      std::stringstream ss(line);
      std::string cell;
      while (std::getline(ss, cell, ',')) header.push_back(cell);
    }
    if (header.size() < 4) throw IoError("surface.csv header is malformed");
    const std::size_t d = header.size() - 3;
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::vector<double> row;
      std::stringstream ss(line);
      std::string cell;
      while (std::getline(ss, cell, ',')) row.push_back(parse_double(cell));
      if (row.size() != header.size()) throw IoError("surface.csv row is malformed");
      rows.push_back(std::move(row));
    }
    // cell area from the grid spacing in each dimension
    double cell_area = 1.0;
    for (std::size_t k = 0; k < d; ++k) {
      std::vector<double> vals;
      for (const auto& r : rows) vals.push_back(r[k]);
      std::sort(vals.begin(), vals.end());
      vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
      if (vals.size() > 1) cell_area *= vals[1] - vals[0];
    }
    std::ostringstream s, p;
    for (std::size_t k = 0; k < d; ++k) {
      s << header[k] << ',';
      p << header[k] << ',';
    }
    s << "u_mean,u_sd,u_lower,u_upper\n";
    p << "probability,density\n";
    for (const auto& r : rows) {
      for (std::size_t k = 0; k < d; ++k) {
        s << format_double(r[k]) << ',';
        p << format_double(r[k]) << ',';
      }
      s << format_double(r[d]) << ',' << format_double(r[d + 1]) << ',' << format_double(r[d] - r[d + 1]) << ','
        << format_double(r[d] + r[d + 1]) << '\n';
      p << format_double(r[d + 2]) << ',' << format_double(r[d + 2] / cell_area) << '\n';
    }
    write_file_atomic(dir + "/surface.csv", s.str());
    write_file_atomic(dir + "/action_posterior.csv", p.str());
    out << "report " << dir << "\n";
    return int(kExitOk);
  });
}

int cmd_oracle(const std::string& problem, const std::string& run_dir, const std::string& out_path,
               std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    std::string target = out_path;
    if (target.empty()) {
      const std::string dir = output_root() + "/oracle";
      std::error_code ec;
      fs::create_directories(dir, ec);
      if (ec) throw IoError("cannot create " + dir + ": " + ec.message());
      target = dir + "/" + problem + "_reference.json";
    }
    json ref;
    if (problem == "warehouse") {
      const WarehouseProblem p;
      const WarehouseOracleResult r = warehouse_oracle(p.observed(), p.economics(), p.prior());
      ref = {{"problem", "warehouse"},
             {"a_star", json::array({r.action})},
             {"expected_utility", r.expected_utility},
             {"non_identifiable", r.non_identifiable},
             {"method", "posterior quadrature"}};
    } else if (problem == "deer") {
      if (run_dir.empty()) throw ConfigError("oracle deer needs --run-dir with a trained posterior");
      const json cfg = read_json(run_dir + "/config.json");
      RunConfig c = config_from_json(cfg);
      c.baseline.n_mc = 1000;
      c.baseline.de.population = 32;
      c.baseline.de.generations = 30;
      const json summary = read_json(run_dir + "/summary.json");
      const MdnParameters posterior = mdn_from_json(read_json(run_dir + "/posterior.json"));
      std::unique_ptr<Problem> p = make_problem(c);
      const PosteriorSampler sampler =
          amortized_posterior_sampler(posterior, vector_from_json(summary.at("x_star")), p->prior());
      const BaselineResult b = run_baseline(*p, sampler, c.baseline.n_mc, c.baseline.de);
      ref = {{"problem", "deer"},
             {"a_star", vector_to_json(b.a_star)},
             {"expected_utility", b.value},
             {"total_calls", b.total_calls},
             {"n_mc", c.baseline.n_mc},
             {"population", c.baseline.de.population},
             {"generations", c.baseline.de.generations},
             {"method", "monte carlo + differential evolution"}};
    } else {
      throw ConfigError("unknown problem '" + problem + "'");
    }
    write_file_atomic(target, ref.dump(1) + "\n");
    out << ref.dump() << "\n";
    return int(kExitOk);
  });
}

int cmd_fixtures(const std::string& data_dir, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    std::error_code ec;
    fs::create_directories(data_dir, ec);
    if (ec) throw IoError("cannot create " + data_dir + ": " + ec.message());
    const Eigen::VectorXd w = warehouse_fixture();
    std::ostringstream ws;
    ws << "month,demand\n";
    for (Eigen::Index i = 0; i < w.size(); ++i) ws << (i + 1) << ',' << format_double(w(i)) << '\n';
    write_file_atomic(data_dir + "/warehouse_observed.csv", ws.str());

    const LvConfig lv;
    const Eigen::VectorXd x = lv_fixture(lv);
    std::ostringstream ds;
    ds << "week,deer,wolves\n";
    for (int i = 0; i < lv.history_weeks; ++i) ds << (i + 1) << ',' << x(i) << ',' << x(lv.history_weeks + i) << '\n';
    write_file_atomic(data_dir + "/deer_observed.csv", ds.str());
    out << "fixtures written to " << data_dir << "\n";
    return int(kExitOk);
  });
}

}  // namespace sbd
