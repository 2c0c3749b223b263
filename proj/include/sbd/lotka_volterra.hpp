#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "sbd/mlp.hpp"
#include "sbd/linalg.hpp"
#include "sbd/problem.hpp"

namespace sbd {

inline constexpr std::uint64_t kDeerFixtureSeed = 20240828;
inline constexpr int kLvSummaryCount = 9;

// Time unit is one week; 1 month = 4 weeks, 1 week = 7 days.
struct LvConfig {
  double cull_effectiveness = 0.02;  // r
  double hunter_day_cost = 1.0;      // P
  double crop_day_cost = 50.0;       // C
  double threshold = 120.0;          // T
  int initial_deer = 100;
  int initial_wolves = 50;
  int history_weeks = 80;
  int future_weeks = 48;
  int population_cap = 5000;
  long event_budget = 250000;
  // wolf birth alpha*W, predation beta*W*D, wolf death delta*W, deer birth gamma*D
  bool prose_literal_rates = false;
  // crop cost on (y - T) instead of y while above threshold
  bool excess_only = false;
  // charge hunters per cull day; false charges a flat a1*P
  bool cull_cost_duration = true;

  void validate() const;
};

struct LvTrajectory {
  std::vector<int> deer;    // one entry per observed week
  std::vector<int> wolves;
  long events = 0;
  bool capped = false;
  bool budget_exhausted = false;
};

// Exact jump-process simulation from (deer0, wolves0) at time t0, observed at
// t0+1, ..., t0+weeks. Culling with round(hunters) hunters is active on
// [cull_start, cull_end).
LvTrajectory lv_trajectory(const Eigen::VectorXd& theta, int deer0, int wolves0, double t0, int weeks,
                           int hunters, double cull_start, double cull_end, const LvConfig& cfg, Rng& rng);

double lv_utility(const Eigen::VectorXd& future_deer, const Eigen::VectorXd& action, const LvConfig& cfg);

// mean_D, mean_W, var_D, var_W, ac1_D, ac2_D, ac1_W, ac2_W, corr(D, W).
// `history` is [D_1..D_n, W_1..W_n]. Zero-variance series give 0 for the
// correlation terms and set *degenerate.
Eigen::VectorXd lv_summaries(const Eigen::VectorXd& history, bool* degenerate = nullptr);

PriorSpec lv_prior();
ActionSpace lv_action_space(int resolution = 64);
Eigen::VectorXd lv_true_parameters();

// Observed history from the true parameters with the fixture seed.
Eigen::VectorXd lv_fixture(const LvConfig& cfg = {}, std::uint64_t seed = kDeerFixtureSeed);

// Maps nine summaries to estimates of the four log-parameters.
struct Compressor {
  Mlp network;
  Standardizer input_scaling;
  Standardizer output_scaling;

  Eigen::VectorXd compress(const Eigen::VectorXd& summaries) const;
};

struct CompressorTrainingConfig {
  double learning_rate = 1e-3;
  int batch_size = 128;
  int max_epochs = 300;
  int patience = 20;
  double validation_fraction = 0.1;
  std::uint64_t seed = 0;
};

struct CompressorTrainingResult {
  Compressor compressor;
  std::vector<double> train_loss;
  std::vector<double> validation_loss;
  int best_epoch = 0;
};

// summaries: n x 9, log_theta: n x 4. Requires n >= 5000.
CompressorTrainingResult train_compression_net(const Eigen::MatrixXd& summaries, const Eigen::MatrixXd& log_theta,
                                               const CompressorTrainingConfig& cfg);

struct CompressionSet {
  Eigen::MatrixXd summaries;  // n x 9
  Eigen::MatrixXd log_theta;  // n x 4
};

// History-only prior simulations, one stream per index; `threads` only
// affects speed.
CompressionSet lv_prior_simulations(const LvConfig& cfg, int n, std::uint64_t seed, int threads = 1);

class DeerProblem final : public Problem {
 public:
  DeerProblem(LvConfig cfg, Eigen::VectorXd observed, int resolution = 64);
  // Observed data from the bundled fixture file.
  explicit DeerProblem(LvConfig cfg = {}, int resolution = 64);

  std::string name() const override { return "deer"; }
  const PriorSpec& prior() const override { return prior_; }
  const ActionSpace& actions() const override { return space_; }
  const Eigen::VectorXd& observed() const override { return observed_; }
  Eigen::VectorXd features(const Eigen::VectorXd& history) const override;
  bool lognormal_utility() const override { return true; }
  double convergence_tolerance() const override { return 0.05; }
  int posterior_components() const override { return 6; }

  const LvConfig& config() const { return cfg_; }
  void set_compressor(Compressor c) { compressor_ = std::move(c); }
  bool has_compressor() const { return compressor_.has_value(); }
  const Compressor& compressor() const;

 protected:
  SimulationResult do_simulate(const Eigen::VectorXd& theta, const Eigen::VectorXd& action,
                               Rng& rng) const override;
  SimulationResult do_simulate_outcome(const Eigen::VectorXd& theta, const Eigen::VectorXd& action,
                                       Rng& rng) const override;

 private:
  LvConfig cfg_;
  PriorSpec prior_;
  ActionSpace space_;
  Eigen::VectorXd observed_;
  std::optional<Compressor> compressor_;
};

Eigen::VectorXd read_deer_fixture(const std::string& path);

}  // namespace sbd
