#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "sbd/linalg.hpp"
#include "sbd/mlp.hpp"
#include "sbd/random.hpp"

namespace sbd {

// Gaussian mixture with full covariances Sigma_k = L_k L_k^T.
struct MixtureDensity {
  Eigen::VectorXd weights;
  std::vector<Eigen::VectorXd> means;
  std::vector<Eigen::MatrixXd> cholesky;

  Eigen::Index n_components() const { return weights.size(); }
  Eigen::Index dim() const { return means.empty() ? 0 : means.front().size(); }
  // Checks simplex weights and positive Cholesky diagonals.
  void validate() const;
};

double mixture_log_prob(const MixtureDensity& mix, const Eigen::VectorXd& target);
Eigen::VectorXd mixture_sample(const MixtureDensity& mix, Rng& rng);
Eigen::VectorXd mixture_mean(const MixtureDensity& mix);

// Returns the mixture of y = shift + scale .* x for x ~ mix.
MixtureDensity affine_transform(const MixtureDensity& mix, const Eigen::VectorXd& shift,
                                const Eigen::VectorXd& scale);

struct EntropyEstimate {
  double value = 0.0;
  double std_error = 0.0;
};

EntropyEstimate mixture_entropy_mc(const MixtureDensity& mix, int n, Rng& rng);

struct MdnArchitecture {
  int input_dim = 1;
  int target_dim = 1;
  int n_components = 1;
  std::vector<int> hidden{64, 64};
  Activation activation = Activation::tanh;

  int component_size() const { return 1 + target_dim + target_dim * (target_dim + 1) / 2; }
  int output_size() const { return n_components * component_size(); }
};

// Network weights plus the standardization applied to conditioners and
// targets. Standardization is fitted on the first training call and then
// kept frozen (`standardized` == true).
struct MdnParameters {
  MdnArchitecture arch;
  Mlp network;
  Standardizer conditioner_scaling;
  Standardizer target_scaling;
  bool standardized = false;
};

enum class HeadInit {
  // Small random head weights and zero biases: the mixture starts near the
  // standardized origin but the components can separate.
  random,
  // Zero output head: uniform component weights and identical components.
  // Gradient training can never separate the components from here.
  zero,
};

MdnParameters mdn_init(const MdnArchitecture& arch, std::uint64_t seed, HeadInit head = HeadInit::random);

// Conditional mixture in target units.
MixtureDensity mdn_forward(const MdnParameters& params, const Eigen::VectorXd& conditioner);

struct TrainingConfig {
  double learning_rate = 1e-3;
  int batch_size = 128;
  int full_batch_below = 512;
  int max_epochs = 2000;
  int patience = 20;
  double validation_fraction = 0.1;
  std::uint64_t seed = 0;
  // When set, record i is held out iff its own draw from this stream falls
  // below validation_fraction. Membership then survives appending records,
  // so a warm-started model is never validated on its old training data.
  std::optional<std::uint64_t> split_seed;

  void validate() const;
};

struct WeightedDataset {
  Eigen::MatrixXd conditioners;  // n x input_dim
  Eigen::MatrixXd targets;       // n x target_dim
  Eigen::VectorXd weights;       // n, positive

  Eigen::Index size() const { return conditioners.rows(); }
};

struct TrainingResult {
  MdnParameters params;
  std::vector<double> train_loss;
  std::vector<double> validation_loss;
  int best_epoch = 0;
};

// Importance-weighted maximum likelihood by mini-batch Adam with early
// stopping on a held-out split. Starts from `init` (warm start).
TrainingResult mdn_train_weighted(const WeightedDataset& data, MdnParameters init,
                                  const TrainingConfig& config);

// Weighted mean negative log-likelihood sum_i w_i nll_i / sum_i w_i in the
// standardized target space, with optional flat gradient over network
// parameters.
double mdn_weighted_nll(const MdnParameters& params, const WeightedDataset& data,
                        Eigen::VectorXd* gradient = nullptr);

}  // namespace sbd
