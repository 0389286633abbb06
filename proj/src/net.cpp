#include "segilm/net.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <string>

#include "segilm/binio.hpp"
#include "segilm/error.hpp"

namespace segilm::net {

namespace {

constexpr std::uint32_t kMlpMagic = 0x504C4D53;  // "SMLP"
constexpr std::uint32_t kMlpVersion = 1;
constexpr std::uint64_t kMaxLayerWidth = 1u << 20;

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void sigmoid_inplace(Vector& z) { z = (1.0 + (-z.array()).exp()).inverse().matrix(); }

// sigmoid(W a + b), accumulated column by column. Zero inputs are skipped;
// image inputs are mostly background, so this saves most of the first layer.
Vector affine_sigmoid(const Layer& layer, const Vector& a) {
  Vector z = layer.bias;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (a[i] != 0.0) {
      z.noalias() += a[i] * layer.weights.col(i);
    }
  }
  sigmoid_inplace(z);
  return z;
}

void check_sizes(const std::vector<std::size_t>& sizes) {
  if (sizes.size() < 2) {
    throw InvalidArgument("an MLP needs at least two layer sizes");
  }
  for (auto s : sizes) {
    if (s == 0) {
      throw InvalidArgument("MLP layer sizes must be at least 1");
    }
  }
}

// Per-chain forward record: the input followed by every layer's activation.
struct Trace {
  std::vector<Vector> activations;
  // (net index, layer index) of the layer producing activations[k + 1].
  std::vector<std::pair<std::size_t, std::size_t>> producers;
};

Trace forward_trace(const Chain& chain, const Vector& x) {
  if (static_cast<std::size_t>(x.size()) != chain.input_size()) {
    throw DimensionError("chain input has length " + std::to_string(x.size()) + ", expected " +
                         std::to_string(chain.input_size()));
  }
  Trace trace;
  trace.activations.push_back(x);
  for (std::size_t n = 0; n < chain.size(); ++n) {
    const auto& layers = chain.net(n).layers();
    for (std::size_t l = 0; l < layers.size(); ++l) {
      trace.activations.push_back(affine_sigmoid(layers[l], trace.activations.back()));
      trace.producers.emplace_back(n, l);
    }
  }
  return trace;
}

Vector output_delta(const Vector& y, const Vector& target, LossNormalization normalization) {
  const double scale =
      normalization == LossNormalization::mean ? 2.0 / static_cast<double>(y.size()) : 2.0;
  return (scale * (y - target).array() * y.array() * (1.0 - y.array())).matrix();
}

// Walks the layers from output to input. For each layer, `visit` receives the
// layer, its pre-activation delta and its input activation, and is called
// after the next delta has been computed from the unmodified weights.
template <typename Visit>
void backpropagate(const Chain& chain, Trace& trace, Vector delta, Visit&& visit) {
  for (std::size_t k = trace.producers.size(); k-- > 0;) {
    const auto [n, l] = trace.producers[k];
    Layer& layer = chain.net(n).layers()[l];
    const Vector& input = trace.activations[k];
    Vector next;
    if (k > 0) {
      next.noalias() = layer.weights.transpose() * delta;
      next.array() *= input.array() * (1.0 - input.array());
    }
    visit(n, l, layer, delta, input);
    delta = std::move(next);
  }
}

}  // namespace

bool Layer::operator==(const Layer& other) const {
  return weights.rows() == other.weights.rows() && weights.cols() == other.weights.cols() &&
         weights == other.weights && bias.size() == other.bias.size() && bias == other.bias;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

Mlp::Mlp(std::vector<std::size_t> layer_sizes) : sizes_(std::move(layer_sizes)) {
  check_sizes(sizes_);
  for (std::size_t i = 0; i + 1 < sizes_.size(); ++i) {
    const auto fan_in = static_cast<Eigen::Index>(sizes_[i]);
    const auto fan_out = static_cast<Eigen::Index>(sizes_[i + 1]);
    layers_.push_back({Matrix::Zero(fan_out, fan_in), Vector::Zero(fan_out)});
  }
}

Mlp Mlp::init(std::vector<std::size_t> layer_sizes, RandomStream& rng, InitScheme scheme) {
  Mlp net(std::move(layer_sizes));
  for (auto& layer : net.layers_) {
    const auto fan_in = static_cast<double>(layer.weights.cols());
    const auto fan_out = static_cast<double>(layer.weights.rows());
    const double bound = scheme == InitScheme::glorot_uniform
                             ? std::sqrt(6.0 / (fan_in + fan_out))
                             : 1.0 / std::sqrt(fan_in);
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) {
        layer.weights(r, c) = bound * (2.0 * rng.uniform() - 1.0);
      }
    }
  }
  return net;
}

std::size_t Mlp::parameter_count() const {
  std::size_t count = 0;
  for (const auto& layer : layers_) {
    count += static_cast<std::size_t>(layer.weights.size() + layer.bias.size());
  }
  return count;
}

Vector Mlp::forward(const Vector& x) const {
  if (static_cast<std::size_t>(x.size()) != input_size()) {
    throw DimensionError("MLP input has length " + std::to_string(x.size()) + ", expected " +
                         std::to_string(input_size()));
  }
  Vector a = x;
  for (const auto& layer : layers_) {
    a = affine_sigmoid(layer, a);
  }
  return a;
}

bool Mlp::all_finite() const {
  for (const auto& layer : layers_) {
    if (!layer.weights.allFinite() || !layer.bias.allFinite()) {
      return false;
    }
  }
  return true;
}

double loss(const Vector& output, const Vector& target, LossNormalization normalization) {
  if (output.size() != target.size()) {
    throw DimensionError("target has length " + std::to_string(target.size()) + ", expected " +
                         std::to_string(output.size()));
  }
  const double sum = (output - target).squaredNorm();
  return normalization == LossNormalization::mean ? sum / static_cast<double>(output.size())
                                                  : sum;
}

Chain& Chain::add(Mlp& net, bool trainable) {
  if (!nets_.empty() && nets_.back()->output_size() != net.input_size()) {
    throw DimensionError("chain link mismatch: output " +
                         std::to_string(nets_.back()->output_size()) + " feeds input " +
                         std::to_string(net.input_size()));
  }
  nets_.push_back(&net);
  trainable_.push_back(trainable);
  return *this;
}

std::size_t Chain::input_size() const {
  if (nets_.empty()) {
    throw InvalidArgument("empty chain");
  }
  return nets_.front()->input_size();
}

std::size_t Chain::output_size() const {
  if (nets_.empty()) {
    throw InvalidArgument("empty chain");
  }
  return nets_.back()->output_size();
}

Vector Chain::forward(const Vector& x) const {
  if (static_cast<std::size_t>(x.size()) != input_size()) {
    throw DimensionError("chain input has length " + std::to_string(x.size()) + ", expected " +
                         std::to_string(input_size()));
  }
  Vector a = x;
  for (const auto* net : nets_) {
    a = net->forward(a);
  }
  return a;
}

Gradients chain_gradients(const Chain& chain, const Vector& x, const Vector& target,
                          LossNormalization normalization) {
  Trace trace = forward_trace(chain, x);
  const Vector& y = trace.activations.back();
  if (y.size() != target.size()) {
    throw DimensionError("target has length " + std::to_string(target.size()) + ", expected " +
                         std::to_string(y.size()));
  }
  Gradients grads(chain.size());
  for (std::size_t n = 0; n < chain.size(); ++n) {
    grads[n].resize(chain.net(n).layers().size());
  }
  backpropagate(chain, trace, output_delta(y, target, normalization),
                [&](std::size_t n, std::size_t l, const Layer&, const Vector& delta,
                    const Vector& input) {
                  grads[n][l].weights = delta * input.transpose();
                  grads[n][l].bias = delta;
                });
  return grads;
}

double train_step(Chain& chain, const Vector& x, const Vector& target, const TrainConfig& cfg) {
  Trace trace = forward_trace(chain, x);
  const Vector& y = trace.activations.back();
  const double value = loss(y, target, cfg.normalization);
  if (!std::isfinite(value)) {
    throw DivergenceError("non-finite loss");
  }
  // Fused backward pass: each weight column is read once to propagate the
  // delta and, if the sub-network is trainable, updated in the same sweep.
  Vector delta = output_delta(y, target, cfg.normalization);
  for (std::size_t k = trace.producers.size(); k-- > 0;) {
    const auto [n, l] = trace.producers[k];
    Layer& layer = chain.net(n).layers()[l];
    const Vector& input = trace.activations[k];
    const bool update = chain.trainable(n);
    const bool propagate = k > 0;
    const Vector step = cfg.eta * delta;
    Vector next(propagate ? input.size() : 0);
    for (Eigen::Index i = 0; i < input.size(); ++i) {
      auto column = layer.weights.col(i);
      if (propagate) {
        next[i] = column.dot(delta);
      }
      if (update && input[i] != 0.0) {
        column.noalias() -= input[i] * step;
      }
    }
    if (update) {
      layer.bias -= step;
    }
    if (propagate) {
      next.array() *= input.array() * (1.0 - input.array());
    }
    delta = std::move(next);
  }
  return value;
}

namespace {

// Which parameter to move, and by how much, in extended_loss. col < 0 selects
// the bias.
struct Perturbation {
  std::size_t net = 0;
  std::size_t layer = 0;
  Eigen::Index row = 0;
  Eigen::Index col = -1;
  long double delta = 0.0L;
};

// Loss of the chain evaluated in long double with one parameter moved. The
// central difference subtracts two nearly equal losses; at double precision
// that cancellation alone costs ~1e-12 absolute, which swamps the relative
// error of gradients near 1e-8.
long double extended_loss(const Chain& chain, const Vector& x, const Vector& target,
                          LossNormalization normalization, const Perturbation& p) {
  std::vector<long double> a(x.data(), x.data() + x.size());
  for (std::size_t n = 0; n < chain.size(); ++n) {
    const auto& layers = chain.net(n).layers();
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto& w = layers[l].weights;
      const bool here = n == p.net && l == p.layer;
      std::vector<long double> z(static_cast<std::size_t>(w.rows()));
      for (Eigen::Index r = 0; r < w.rows(); ++r) {
        long double acc = layers[l].bias[r];
        if (here && r == p.row && p.col < 0) {
          acc += p.delta;
        }
        for (Eigen::Index c = 0; c < w.cols(); ++c) {
          long double weight = w(r, c);
          if (here && r == p.row && c == p.col) {
            weight += p.delta;
          }
          acc += weight * a[static_cast<std::size_t>(c)];
        }
        z[static_cast<std::size_t>(r)] = 1.0L / (1.0L + std::exp(-acc));
      }
      a = std::move(z);
    }
  }
  long double total = 0.0L;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const long double d = a[i] - static_cast<long double>(target[static_cast<Eigen::Index>(i)]);
    total += d * d;
  }
  return normalization == LossNormalization::mean ? total / static_cast<long double>(a.size())
                                                  : total;
}

}  // namespace

double grad_check(const Chain& chain, const Vector& x, const Vector& target, double h,
                  LossNormalization normalization, const GradientFn& analytic) {
  if (!(h > 0.0)) {
    throw InvalidArgument("finite-difference step must be positive");
  }
  if (static_cast<std::size_t>(target.size()) != chain.output_size()) {
    throw DimensionError("target has length " + std::to_string(target.size()) + ", expected " +
                         std::to_string(chain.output_size()));
  }
  const Gradients grads = analytic(chain, x, target, normalization);

  double worst = 0.0;
  auto compare = [&](Perturbation p, double analytic_value) {
    p.delta = h;
    const long double up = extended_loss(chain, x, target, normalization, p);
    p.delta = -h;
    const long double down = extended_loss(chain, x, target, normalization, p);
    const auto numeric = static_cast<double>((up - down) / (2.0L * h));
    const double err = std::abs(analytic_value - numeric) / std::max(1e-8, std::abs(numeric));
    worst = std::max(worst, err);
  };

  for (std::size_t n = 0; n < chain.size(); ++n) {
    const auto& layers = chain.net(n).layers();
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto& w = layers[l].weights;
      for (Eigen::Index r = 0; r < w.rows(); ++r) {
        for (Eigen::Index c = 0; c < w.cols(); ++c) {
          compare({n, l, r, c}, grads[n][l].weights(r, c));
        }
        compare({n, l, r, -1}, grads[n][l].bias(r));
      }
    }
  }
  return worst;
}

void write_mlp(std::ostream& out, const Mlp& net) {
  binio::Writer w(out);
  w.value(kMlpMagic);
  w.value(kMlpVersion);
  w.value(static_cast<std::uint32_t>(net.layer_sizes().size()));
  for (auto s : net.layer_sizes()) {
    w.value(static_cast<std::uint64_t>(s));
  }
  for (const auto& layer : net.layers()) {
    // Row-major on disk regardless of the in-memory layout.
    const RowMatrix rows = layer.weights;
    w.values(std::span<const double>(rows.data(), rows.size()));
    w.values(std::span<const double>(layer.bias.data(), layer.bias.size()));
  }
}

Mlp read_mlp(std::istream& in) {
  binio::Reader r(in);
  if (r.value<std::uint32_t>() != kMlpMagic) {
    throw VersionError("not a network stream (bad magic)");
  }
  if (const auto version = r.value<std::uint32_t>(); version != kMlpVersion) {
    throw VersionError("unsupported network format version " + std::to_string(version));
  }
  const auto count = r.value<std::uint32_t>();
  if (count < 2 || count > 64) {
    throw FormatError("implausible layer count " + std::to_string(count));
  }
  std::vector<std::size_t> sizes(count);
  for (auto& s : sizes) {
    const auto v = r.value<std::uint64_t>();
    if (v == 0 || v > kMaxLayerWidth) {
      throw FormatError("implausible layer width " + std::to_string(v));
    }
    s = static_cast<std::size_t>(v);
  }
  Mlp net(std::move(sizes));
  for (auto& layer : net.layers()) {
    RowMatrix rows(layer.weights.rows(), layer.weights.cols());
    r.values(std::span<double>(rows.data(), rows.size()));
    layer.weights = rows;
    r.values(std::span<double>(layer.bias.data(), layer.bias.size()));
  }
  return net;
}

}  // namespace segilm::net
