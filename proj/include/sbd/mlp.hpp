#pragma once

#include <vector>

#include <Eigen/Dense>

#include "sbd/random.hpp"

namespace sbd {

enum class Activation { identity, tanh, leaky_relu };

const char* to_string(Activation a);
Activation activation_from_string(const std::string& s);

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;
  Activation activation = Activation::identity;
};

// Fully-connected network operating on column batches (one sample per column).
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<DenseLayer> layers);

  // Glorot-normal weights, zero biases; the last layer is linear and can be
  // zero-initialized.
  static Mlp create(int input_dim, const std::vector<int>& hidden, int output_dim,
                    Activation hidden_activation, Rng& rng, bool zero_output_head);

  int input_dim() const;
  int output_dim() const;
  const std::vector<DenseLayer>& layers() const { return layers_; }

  struct Tape {
    std::vector<Eigen::MatrixXd> outputs;  // outputs[0] = input, outputs[l+1] = layer l output
  };

  // Throws NumericalError naming the first layer that produced a non-finite value.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& batch) const;
  Eigen::MatrixXd forward(const Eigen::MatrixXd& batch, Tape& tape) const;
  // Flat gradient (same layout as parameters()) given dLoss/dOutput.
  Eigen::VectorXd backward(const Tape& tape, const Eigen::MatrixXd& output_grad) const;

  Eigen::Index parameter_count() const;
  Eigen::VectorXd parameters() const;
  void set_parameters(const Eigen::VectorXd& flat);

 private:
  std::vector<DenseLayer> layers_;
};

class Adam {
 public:
  Adam(Eigen::Index n, double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
       double epsilon = 1e-8);
  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad);

 private:
  double lr_, b1_, b2_, eps_;
  Eigen::VectorXd m_, v_;
  long t_ = 0;
};

}  // namespace sbd
