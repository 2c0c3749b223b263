#include "sbd/mlp.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "sbd/errors.hpp"

namespace sbd {

namespace {

constexpr double kLeakySlope = 0.01;

void activate(Eigen::MatrixXd& m, Activation a) {
  switch (a) {
    case Activation::identity:
      break;
    case Activation::tanh:
      m = m.array().tanh().matrix();
      break;
    case Activation::leaky_relu:
      m = m.unaryExpr([](double v) { return v > 0.0 ? v : kLeakySlope * v; });
      break;
  }
}

// derivative expressed through the activation output
Eigen::MatrixXd activation_derivative(const Eigen::MatrixXd& out, Activation a) {
  switch (a) {
    case Activation::identity:
      return Eigen::MatrixXd::Ones(out.rows(), out.cols());
    case Activation::tanh:
      return (1.0 - out.array().square()).matrix();
    case Activation::leaky_relu:
      return out.unaryExpr([](double v) { return v > 0.0 ? 1.0 : kLeakySlope; });
  }
  return {};
}

}  // namespace

const char* to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::tanh: return "tanh";
    case Activation::leaky_relu: return "leaky_relu";
  }
  return "identity";
}

Activation activation_from_string(const std::string& s) {
  if (s == "identity") return Activation::identity;
  if (s == "tanh") return Activation::tanh;
  if (s == "leaky_relu") return Activation::leaky_relu;
  throw std::invalid_argument("unknown activation '" + s + "'");
}

Mlp::Mlp(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  for (std::size_t l = 1; l < layers_.size(); ++l) {
    if (layers_[l].weight.cols() != layers_[l - 1].weight.rows()) {
      throw std::invalid_argument("Mlp: inconsistent layer shapes");
    }
  }
}

Mlp Mlp::create(int input_dim, const std::vector<int>& hidden, int output_dim,
                Activation hidden_activation, Rng& rng, bool zero_output_head) {
  std::vector<DenseLayer> layers;
  int fan_in = input_dim;
  std::vector<int> widths = hidden;
  widths.push_back(output_dim);
  for (std::size_t l = 0; l < widths.size(); ++l) {
    const int fan_out = widths[l];
    const bool last = l + 1 == widths.size();
    DenseLayer layer;
    layer.weight.resize(fan_out, fan_in);
    layer.bias = Eigen::VectorXd::Zero(fan_out);
    layer.activation = last ? Activation::identity : hidden_activation;
    if (last && zero_output_head) {
      layer.weight.setZero();
    } else {
      const double sd = std::sqrt(2.0 / double(fan_in + fan_out));
      for (Eigen::Index j = 0; j < layer.weight.cols(); ++j)
        for (Eigen::Index i = 0; i < layer.weight.rows(); ++i) layer.weight(i, j) = sd * standard_normal(rng);
    }
    layers.push_back(std::move(layer));
    fan_in = fan_out;
  }
  return Mlp(std::move(layers));
}

int Mlp::input_dim() const { return layers_.empty() ? 0 : int(layers_.front().weight.cols()); }
int Mlp::output_dim() const { return layers_.empty() ? 0 : int(layers_.back().weight.rows()); }

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& batch) const {
  Tape tape;
  return forward(batch, tape);
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& batch, Tape& tape) const {
  if (batch.rows() != input_dim()) throw std::invalid_argument("Mlp: input dimension mismatch");
  tape.outputs.clear();
  tape.outputs.reserve(layers_.size() + 1);
  tape.outputs.push_back(batch);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Eigen::MatrixXd z = layers_[l].weight * tape.outputs.back();
    z.colwise() += layers_[l].bias;
    activate(z, layers_[l].activation);
    if (!z.allFinite()) {
      throw NumericalError("non-finite network output at layer " + std::to_string(l));
    }
    tape.outputs.push_back(std::move(z));
  }
  return tape.outputs.back();
}

Eigen::VectorXd Mlp::backward(const Tape& tape, const Eigen::MatrixXd& output_grad) const {
  Eigen::VectorXd grad(parameter_count());
  Eigen::MatrixXd delta = output_grad;
  Eigen::Index offset = grad.size();
  for (std::size_t li = layers_.size(); li-- > 0;) {
    const DenseLayer& layer = layers_[li];
    const Eigen::MatrixXd dz = delta.cwiseProduct(activation_derivative(tape.outputs[li + 1], layer.activation));
    const Eigen::Index nb = layer.bias.size();
    const Eigen::Index nw = layer.weight.size();
    offset -= nb;
    grad.segment(offset, nb) = dz.rowwise().sum();
    offset -= nw;
    Eigen::MatrixXd gw = dz * tape.outputs[li].transpose();
    grad.segment(offset, nw) = Eigen::Map<const Eigen::VectorXd>(gw.data(), nw);
    if (li > 0) delta = layer.weight.transpose() * dz;
  }
  return grad;
}

Eigen::Index Mlp::parameter_count() const {
  Eigen::Index n = 0;
  for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
  return n;
}

Eigen::VectorXd Mlp::parameters() const {
  Eigen::VectorXd flat(parameter_count());
  Eigen::Index o = 0;
  for (const auto& l : layers_) {
    flat.segment(o, l.weight.size()) = Eigen::Map<const Eigen::VectorXd>(l.weight.data(), l.weight.size());
    o += l.weight.size();
    flat.segment(o, l.bias.size()) = l.bias;
    o += l.bias.size();
  }
  return flat;
}

void Mlp::set_parameters(const Eigen::VectorXd& flat) {
  if (flat.size() != parameter_count()) throw std::invalid_argument("Mlp: parameter count mismatch");
  Eigen::Index o = 0;
  for (auto& l : layers_) {
    Eigen::Map<Eigen::VectorXd>(l.weight.data(), l.weight.size()) = flat.segment(o, l.weight.size());
    o += l.weight.size();
    l.bias = flat.segment(o, l.bias.size());
    o += l.bias.size();
  }
}

Adam::Adam(Eigen::Index n, double learning_rate, double beta1, double beta2, double epsilon)
    : lr_(learning_rate), b1_(beta1), b2_(beta2), eps_(epsilon),
      m_(Eigen::VectorXd::Zero(n)), v_(Eigen::VectorXd::Zero(n)) {}

void Adam::step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
  ++t_;
  m_ = b1_ * m_ + (1.0 - b1_) * grad;
  v_ = b2_ * v_ + (1.0 - b2_) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(b1_, double(t_));
  const double c2 = 1.0 - std::pow(b2_, double(t_));
  params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
}

}  // namespace sbd
