#pragma once

// A small fully connected embedding network with a cosine (AAM) classification
// head, trained by SGD with momentum. Stands in for a deep speaker-embedding
// extractor at desk scale.
//
//   x -> [dense -> act] * H -> dense -> L2 normalize -> e
//   cos_j = <w_j, e>, w_j unit rows of the class-weight matrix
//   loss = combined loss over aam_transform(cos, label)

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "jeffreys/dataset.hpp"
#include "jeffreys/errors.hpp"
#include "jeffreys/loss_core.hpp"
#include "jeffreys/rng.hpp"

namespace jeffreys {

enum class Activation { relu, tanh };

inline std::string_view to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

inline std::optional<Activation> parse_activation(std::string_view s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  return std::nullopt;
}

struct NetworkSpec {
  int input_dim = 20;
  std::vector<int> hidden_dims{64};
  int embed_dim = 16;
  int num_classes = 50;
  Activation activation = Activation::relu;

  void validate() const {
    if (input_dim < 1 || embed_dim < 1) throw DomainError("network dims must be >= 1");
    for (int h : hidden_dims) {
      if (h < 1) throw DomainError("hidden dims must be >= 1");
    }
    if (num_classes < 3) throw DomainError("num_classes must be >= 3");
  }

  bool operator==(const NetworkSpec&) const = default;
};

struct DenseLayer {
  Matrix weight;  // out x in
  Vector bias;    // out
};

struct NetworkParams {
  NetworkSpec spec;
  std::vector<DenseLayer> layers;  // hidden layers, then the embedding projection
  Matrix class_weights;            // num_classes x embed_dim, unit rows

  // Zero tensors shaped like `like`.
  static NetworkParams zeros_like(const NetworkParams& like) {
    NetworkParams z;
    z.spec = like.spec;
    for (const auto& l : like.layers) {
      z.layers.push_back({Matrix::Zero(l.weight.rows(), l.weight.cols()), Vector::Zero(l.bias.size())});
    }
    z.class_weights = Matrix::Zero(like.class_weights.rows(), like.class_weights.cols());
    return z;
  }

  // Flat views over every tensor, in serialization order.
  std::vector<Eigen::Map<Vector>> blocks() {
    std::vector<Eigen::Map<Vector>> out;
    for (auto& l : layers) {
      out.emplace_back(l.weight.data(), l.weight.size());
      out.emplace_back(l.bias.data(), l.bias.size());
    }
    out.emplace_back(class_weights.data(), class_weights.size());
    return out;
  }
  std::vector<Eigen::Map<const Vector>> blocks() const {
    std::vector<Eigen::Map<const Vector>> out;
    for (const auto& l : layers) {
      out.emplace_back(l.weight.data(), l.weight.size());
      out.emplace_back(l.bias.data(), l.bias.size());
    }
    out.emplace_back(class_weights.data(), class_weights.size());
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& b : blocks()) n += static_cast<std::size_t>(b.size());
    return n;
  }

  bool operator==(const NetworkParams& o) const {
    if (!(spec == o.spec) || layers.size() != o.layers.size()) return false;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      if (layers[i].weight != o.layers[i].weight || layers[i].bias != o.layers[i].bias) return false;
    }
    return class_weights == o.class_weights;
  }
};

inline void normalize_class_weights(NetworkParams& params) {
  for (Eigen::Index r = 0; r < params.class_weights.rows(); ++r) {
    const double n = params.class_weights.row(r).norm();
    if (n > 0.0) params.class_weights.row(r) /= n;
  }
}

// Uniform(-b, b) weights with b = sqrt(6 / (fan_in + fan_out)), zero biases,
// class weights drawn the same way and normalized to unit rows.
inline NetworkParams init_params(const NetworkSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng = make_rng(seed, stream::kInit);
  auto fill = [&rng](Matrix& m, int fan_in, int fan_out) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  };

  NetworkParams p;
  p.spec = spec;
  int in = spec.input_dim;
  std::vector<int> outs = spec.hidden_dims;
  outs.push_back(spec.embed_dim);
  for (int out : outs) {
    DenseLayer l{Matrix(out, in), Vector::Zero(out)};
    fill(l.weight, in, out);
    p.layers.push_back(std::move(l));
    in = out;
  }
  p.class_weights = Matrix(spec.num_classes, spec.embed_dim);
  fill(p.class_weights, spec.embed_dim, spec.num_classes);
  normalize_class_weights(p);
  return p;
}

// Pre-normalization embeddings below this norm get a nudge on coordinate 0.
inline constexpr double kZeroEmbedGuard = 1e-9;

struct ForwardCache {
  std::vector<Matrix> pre;  // pre-activation of every layer (last = raw embedding)
  std::vector<Matrix> act;  // act[0] = input, act[l+1] = activation of hidden layer l
  Vector norms;             // norm of each raw embedding row after the guard
  Matrix embed;             // unit-norm embeddings
};

namespace detail {

inline Matrix activate(const Matrix& x, Activation a) {
  if (a == Activation::relu) return x.cwiseMax(0.0);
  return x.array().tanh().matrix();
}

inline Matrix activation_grad(const Matrix& pre, Activation a) {
  if (a == Activation::relu) return (pre.array() > 0.0).cast<double>().matrix();
  return (1.0 - pre.array().tanh().square()).matrix();
}

}  // namespace detail

inline ForwardCache forward(const NetworkParams& params, const Matrix& inputs) {
  if (inputs.cols() != params.spec.input_dim) {
    throw DimensionMismatch("input has " + std::to_string(inputs.cols()) + " columns, network expects " +
                            std::to_string(params.spec.input_dim));
  }
  ForwardCache c;
  c.act.push_back(inputs);
  const std::size_t n_layers = params.layers.size();
  for (std::size_t l = 0; l < n_layers; ++l) {
    const DenseLayer& layer = params.layers[l];
    Matrix z = c.act.back() * layer.weight.transpose();
    z.rowwise() += layer.bias.transpose();
    c.pre.push_back(std::move(z));
    if (l + 1 < n_layers) c.act.push_back(detail::activate(c.pre.back(), params.spec.activation));
  }
  Matrix& raw = c.pre.back();
  c.norms.resize(raw.rows());
  c.embed.resize(raw.rows(), raw.cols());
  for (Eigen::Index i = 0; i < raw.rows(); ++i) {
    double n = raw.row(i).norm();
    if (n < kZeroEmbedGuard) {
      raw(i, 0) += kZeroEmbedGuard;
      n = raw.row(i).norm();
    }
    c.norms(i) = n;
    c.embed.row(i) = raw.row(i) / n;
  }
  return c;
}

// Unit-norm embeddings, one row per input row.
inline Matrix forward_embed(const NetworkParams& params, const Matrix& inputs) {
  return forward(params, inputs).embed;
}

inline Matrix forward_cosines(const NetworkParams& params, const Matrix& embeddings) {
  if (embeddings.cols() != params.spec.embed_dim) throw DimensionMismatch("embedding width mismatch");
  return embeddings * params.class_weights.transpose();
}

// Softmax over the training classes of scale * cos (no margin), one posterior
// per row. The designated target is the arg-max class.
inline std::vector<PosteriorDistribution> class_posteriors(const NetworkParams& params,
                                                           const Matrix& inputs, double scale) {
  const Matrix cos = forward_cosines(params, forward_embed(params, inputs));
  std::vector<PosteriorDistribution> out;
  out.reserve(static_cast<std::size_t>(cos.rows()));
  std::vector<double> z(static_cast<std::size_t>(cos.cols()));
  for (Eigen::Index i = 0; i < cos.rows(); ++i) {
    Eigen::Index arg = 0;
    cos.row(i).maxCoeff(&arg);
    for (Eigen::Index j = 0; j < cos.cols(); ++j) z[static_cast<std::size_t>(j)] = scale * cos(i, j);
    out.push_back(softmax(z, static_cast<std::size_t>(arg)));
  }
  return out;
}

inline double accuracy(const NetworkParams& params, const LabeledSet& data) {
  if (data.size() == 0) return 0.0;
  const Matrix cos = forward_cosines(params, forward_embed(params, data.features));
  std::size_t hits = 0;
  for (Eigen::Index i = 0; i < cos.rows(); ++i) {
    Eigen::Index arg = 0;
    cos.row(i).maxCoeff(&arg);
    hits += arg == data.labels[static_cast<std::size_t>(i)];
  }
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

struct LrSchedule {
  enum class Kind { constant, step_decay };
  Kind kind = Kind::step_decay;
  double factor = 0.5;
  int every_n_epochs = 10;

  double at(double base, int epoch) const {
    if (kind == Kind::constant || every_n_epochs <= 0) return base;
    return base * std::pow(factor, epoch / every_n_epochs);
  }
};

struct OptimizerSettings {
  double learning_rate = 0.05;
  double momentum = 0.9;
  double weight_decay = 2e-4;
  bool weight_decay_enabled = false;
};

struct OptimizerState {
  double learning_rate = 0.05;
  double momentum = 0.9;
  double weight_decay = 2e-4;
  bool weight_decay_enabled = false;
  NetworkParams velocity;

  static OptimizerState create(const NetworkParams& params, const OptimizerSettings& s) {
    if (!(s.learning_rate >= 0.0) || !(s.momentum >= 0.0 && s.momentum < 1.0) || !(s.weight_decay >= 0.0)) {
      throw DomainError("invalid optimizer settings");
    }
    return {s.learning_rate, s.momentum, s.weight_decay, s.weight_decay_enabled,
            NetworkParams::zeros_like(params)};
  }
};

struct TrainConfig {
  LossKind loss_kind = LossKind::ce_jeffreys;
  LossWeights weights;
  AamConfig aam;
  int epochs = 30;
  int batch_size = 64;
  std::uint64_t seed = 1;
  LrSchedule lr_schedule;
  OptimizerSettings optimizer;
};

struct Gradients {
  NetworkParams grad;
  LossBreakdown mean_loss;
};

// Mean loss over the batch and its gradient with respect to every parameter.
inline Gradients compute_gradients(const NetworkParams& params, const Matrix& inputs,
                                   std::span<const int> labels, const TrainConfig& cfg) {
  const auto n = inputs.rows();
  if (static_cast<std::size_t>(n) != labels.size()) throw DimensionMismatch("label count mismatch");
  if (n == 0) throw DimensionMismatch("empty batch");

  const ForwardCache c = forward(params, inputs);
  const Matrix cos = forward_cosines(params, c.embed);
  if (!cos.allFinite()) throw NonFiniteLoss("non-finite cosine");
  const LossWeights w = effective_weights(cfg.loss_kind, cfg.weights);
  const Penalty penalty = penalty_for(cfg.loss_kind);
  const double inv_n = 1.0 / static_cast<double>(n);
  const auto k = cos.cols();

  Gradients out;
  out.grad = NetworkParams::zeros_like(params);
  Matrix d_cos(n, k);
  std::vector<double> row(static_cast<std::size_t>(k));
  for (Eigen::Index i = 0; i < n; ++i) {
    const int label = labels[static_cast<std::size_t>(i)];
    if (label < 0 || label >= k) throw DomainError("label outside [0, num_classes)");
    for (Eigen::Index j = 0; j < k; ++j) row[static_cast<std::size_t>(j)] = cos(i, j);
    LossAndGrad lg = combined_loss_and_grad(row, static_cast<std::size_t>(label), w, cfg.aam, penalty);
    if (!lg.loss.finite()) throw NonFiniteLoss("non-finite loss in batch");
    out.mean_loss += lg.loss;
    for (Eigen::Index j = 0; j < k; ++j) d_cos(i, j) = lg.grad[static_cast<std::size_t>(j)] * inv_n;
  }
  out.mean_loss /= static_cast<double>(n);

  out.grad.class_weights = d_cos.transpose() * c.embed;
  const Matrix d_embed = d_cos * params.class_weights;

  // Through e = r / |r|: dr = (de - e <e, de>) / |r|.
  Matrix d_pre(n, d_embed.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const double proj = c.embed.row(i).dot(d_embed.row(i));
    d_pre.row(i) = (d_embed.row(i) - proj * c.embed.row(i)) / c.norms(i);
  }

  for (std::size_t l = params.layers.size(); l-- > 0;) {
    out.grad.layers[l].weight = d_pre.transpose() * c.act[l];
    out.grad.layers[l].bias = d_pre.colwise().sum().transpose();
    if (l > 0) {
      Matrix d_act = d_pre * params.layers[l].weight;
      d_pre = d_act.cwiseProduct(detail::activation_grad(c.pre[l - 1], params.spec.activation));
    }
  }

  for (const auto& b : out.grad.blocks()) {
    if (!b.allFinite()) throw NonFiniteLoss("non-finite gradient");
  }
  return out;
}

// v <- momentum v + g (+ wd theta); theta <- theta - lr v; class rows renormalized.
inline void apply_update(NetworkParams& params, OptimizerState& opt, const NetworkParams& grad) {
  auto theta = params.blocks();
  auto vel = opt.velocity.blocks();
  const auto g = grad.blocks();
  for (std::size_t b = 0; b < theta.size(); ++b) {
    vel[b] = opt.momentum * vel[b] + g[b];
    if (opt.weight_decay_enabled) vel[b] += opt.weight_decay * theta[b];
    theta[b] -= opt.learning_rate * vel[b];
  }
  if (opt.learning_rate != 0.0) normalize_class_weights(params);
}

inline LossBreakdown train_step(NetworkParams& params, OptimizerState& opt, const Matrix& inputs,
                                std::span<const int> labels, const TrainConfig& cfg) {
  Gradients g = compute_gradients(params, inputs, labels, cfg);
  apply_update(params, opt, g.grad);
  return g.mean_loss;
}

struct EpochLoss {
  int epoch = 0;
  LossBreakdown loss;
};

struct FitResult {
  NetworkParams params;
  std::vector<EpochLoss> history;
};

// Per-epoch shuffle order, keyed only by (seed, epoch).
inline std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng = make_rng(mix_seed(seed, static_cast<std::uint64_t>(epoch)), stream::kShuffle);
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

inline FitResult fit(const NetworkSpec& spec, const LabeledSet& train, const TrainConfig& cfg) {
  spec.validate();
  cfg.weights.validate();
  cfg.aam.validate();
  if (train.dim() != spec.input_dim) throw DimensionMismatch("training features do not match input_dim");
  for (int label : train.labels) {
    if (label < 0 || label >= spec.num_classes) throw DomainError("training label outside [0, num_classes)");
  }
  if (cfg.batch_size < 1) throw DomainError("batch_size must be >= 1");

  FitResult out{init_params(spec, cfg.seed), {}};
  OptimizerState opt = OptimizerState::create(out.params, cfg.optimizer);
  const std::size_t n = train.size();
  const auto bs = static_cast<std::size_t>(cfg.batch_size);

  Matrix batch;
  std::vector<int> labels;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    opt.learning_rate = cfg.lr_schedule.at(cfg.optimizer.learning_rate, epoch);
    const std::vector<std::size_t> order = epoch_order(n, cfg.seed, epoch);
    LossBreakdown sum;
    for (std::size_t start = 0; start < n; start += bs) {
      const std::size_t m = std::min(bs, n - start);
      batch.resize(static_cast<Eigen::Index>(m), train.features.cols());
      labels.resize(m);
      for (std::size_t i = 0; i < m; ++i) {
        batch.row(static_cast<Eigen::Index>(i)) = train.features.row(static_cast<Eigen::Index>(order[start + i]));
        labels[i] = train.labels[order[start + i]];
      }
      LossBreakdown l = train_step(out.params, opt, batch, labels, cfg);
      l *= static_cast<double>(m);
      sum += l;
    }
    if (n > 0) sum /= static_cast<double>(n);
    out.history.push_back({epoch + 1, sum});
  }
  return out;
}

}  // namespace jeffreys
