#pragma once

// Minimal feedforward network engine: sigmoid MLPs trained by per-example
// SGD on squared-error loss. Sub-networks can be chained and trained
// end-to-end with any of them frozen.

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "segilm/random.hpp"

namespace segilm::net {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct Layer {
  Matrix weights;  // fan_out x fan_in
  Vector bias;     // fan_out

  bool operator==(const Layer& other) const;
};

enum class InitScheme {
  fan_in_uniform,  // U(-1/sqrt(fan_in), 1/sqrt(fan_in))
  glorot_uniform,  // U(-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out)))
};

class Mlp {
 public:
  Mlp() = default;

  /// Network with the given layer sizes and all parameters zero.
  explicit Mlp(std::vector<std::size_t> layer_sizes);

  /// Uniform random weights per `scheme`, biases zero.
  static Mlp init(std::vector<std::size_t> layer_sizes, RandomStream& rng,
                  InitScheme scheme = InitScheme::fan_in_uniform);

  [[nodiscard]] const std::vector<std::size_t>& layer_sizes() const { return sizes_; }
  [[nodiscard]] std::size_t input_size() const { return sizes_.front(); }
  [[nodiscard]] std::size_t output_size() const { return sizes_.back(); }
  [[nodiscard]] std::size_t parameter_count() const;

  [[nodiscard]] std::vector<Layer>& layers() { return layers_; }
  [[nodiscard]] const std::vector<Layer>& layers() const { return layers_; }

  [[nodiscard]] Vector forward(const Vector& x) const;

  [[nodiscard]] bool all_finite() const;

  bool operator==(const Mlp& other) const = default;

 private:
  std::vector<std::size_t> sizes_;
  std::vector<Layer> layers_;
};

double sigmoid(double z);

enum class LossNormalization {
  mean,  // mean over output components
  sum,   // sum over output components
};

struct TrainConfig {
  double eta = 15.0;
  LossNormalization normalization = LossNormalization::mean;
};

double loss(const Vector& output, const Vector& target, LossNormalization normalization);

/// Ordered list of non-owning references to sub-networks, each flagged
/// trainable or frozen. The referenced networks must outlive the chain.
class Chain {
 public:
  Chain() = default;

  Chain& add(Mlp& net, bool trainable = true);

  [[nodiscard]] std::size_t size() const { return nets_.size(); }
  [[nodiscard]] Mlp& net(std::size_t i) const { return *nets_[i]; }
  [[nodiscard]] bool trainable(std::size_t i) const { return trainable_[i]; }
  [[nodiscard]] std::size_t input_size() const;
  [[nodiscard]] std::size_t output_size() const;

  [[nodiscard]] Vector forward(const Vector& x) const;

 private:
  std::vector<Mlp*> nets_;
  std::vector<bool> trainable_;
};

/// Gradient of the loss with respect to every parameter, laid out like the
/// chain: one vector of layers per sub-network (frozen ones included).
using Gradients = std::vector<std::vector<Layer>>;

Gradients chain_gradients(const Chain& chain, const Vector& x, const Vector& target,
                          LossNormalization normalization);

/// One SGD step on a single example. Backpropagates through the whole chain
/// and updates only trainable sub-networks. Returns the pre-update loss.
/// Throws DivergenceError if the loss is not finite.
double train_step(Chain& chain, const Vector& x, const Vector& target, const TrainConfig& cfg);

using GradientFn =
    std::function<Gradients(const Chain&, const Vector&, const Vector&, LossNormalization)>;

/// Largest relative error between an analytic gradient and central
/// differences with step h, over every parameter of every sub-network:
/// |analytic - numeric| / max(1e-8, |numeric|). The numeric side is evaluated
/// in long double; the chain is not modified.
double grad_check(const Chain& chain, const Vector& x, const Vector& target, double h,
                  LossNormalization normalization = LossNormalization::mean,
                  const GradientFn& analytic = chain_gradients);

/// Versioned binary encoding: layer sizes, then row-major float64 weights and
/// biases per layer.
void write_mlp(std::ostream& out, const Mlp& net);
Mlp read_mlp(std::istream& in);

}  // namespace segilm::net
