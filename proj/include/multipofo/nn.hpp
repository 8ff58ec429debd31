#pragma once

// Minimal dense network engine: fully connected layers with ReLU/identity
// activations, hand-written backpropagation, summed/mean squared error and
// Adam. Batches are stored column-wise (one sample per column).

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "multipofo/errors.hpp"

namespace multipofo::nn {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatrixXd = Matrix<double>;
using VectorXd = Vector<double>;

enum class Activation { relu, identity };

inline const char* to_string(Activation a) {
  return a == Activation::relu ? "relu" : "identity";
}

template <typename Scalar>
struct DenseLayer {
  std::string name;
  Matrix<Scalar> weights;  // outputs x inputs
  Vector<Scalar> bias;     // outputs
  Activation activation = Activation::identity;
  bool frozen = false;

  DenseLayer() = default;
  DenseLayer(std::string layer_name, Eigen::Index in, Eigen::Index out,
             Activation act)
      : name(std::move(layer_name)),
        weights(Matrix<Scalar>::Zero(out, in)),
        bias(Vector<Scalar>::Zero(out)),
        activation(act) {}

  Eigen::Index inputs() const { return weights.cols(); }
  Eigen::Index outputs() const { return weights.rows(); }
};

// Per-layer scratch for one optimizer step: the forward activations needed by
// backward, and the parameter gradients backward produces.
template <typename Scalar>
struct LayerTape {
  Matrix<Scalar> input;
  Matrix<Scalar> pre_activation;
  Matrix<Scalar> weight_grad;
  Vector<Scalar> bias_grad;
  bool has_activations = false;
  bool has_gradients = false;

  void clear() {
    input.resize(0, 0);
    pre_activation.resize(0, 0);
    weight_grad.resize(0, 0);
    bias_grad.resize(0);
    has_activations = false;
    has_gradients = false;
  }
};

namespace detail {

inline std::string dims(Eigen::Index r, Eigen::Index c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

template <typename Scalar, typename Derived>
void check_input(const DenseLayer<Scalar>& layer,
                 const Eigen::MatrixBase<Derived>& input) {
  if (input.rows() != layer.inputs()) {
    throw ShapeError("layer '" + layer.name + "': input has " +
                     std::to_string(input.rows()) +
                     " rows but weights have " +
                     std::to_string(layer.inputs()) + " columns");
  }
  if (layer.bias.size() != layer.outputs()) {
    throw ShapeError("layer '" + layer.name + "': bias length " +
                     std::to_string(layer.bias.size()) +
                     " does not match weights " +
                     dims(layer.weights.rows(), layer.weights.cols()));
  }
}

template <typename Scalar>
Matrix<Scalar> activate(Activation act, const Matrix<Scalar>& pre) {
  if (act == Activation::relu) return pre.cwiseMax(Scalar(0));
  return pre;
}

}  // namespace detail

/// Applies activation(W x + b) to every column of `input`.
template <typename Scalar, typename Derived>
Matrix<Scalar> forward(const DenseLayer<Scalar>& layer,
                       const Eigen::MatrixBase<Derived>& input) {
  detail::check_input(layer, input);
  Matrix<Scalar> pre = layer.weights * input;
  pre.colwise() += layer.bias;
  return detail::activate(layer.activation, pre);
}

/// Same as forward(), additionally caching what backward() needs on `tape`.
template <typename Scalar, typename Derived>
Matrix<Scalar> forward(const DenseLayer<Scalar>& layer,
                       const Eigen::MatrixBase<Derived>& input,
                       LayerTape<Scalar>& tape) {
  detail::check_input(layer, input);
  tape.input = input;
  tape.pre_activation = layer.weights * input;
  tape.pre_activation.colwise() += layer.bias;
  tape.has_activations = true;
  tape.has_gradients = false;
  return detail::activate(layer.activation, tape.pre_activation);
}

/// Backpropagates `upstream` (dLoss/dOutput, one column per sample) through
/// the layer. Parameter gradients are summed over the batch columns and
/// stored on the tape; the returned matrix is dLoss/dInput.
///
/// The ReLU derivative is taken as 0 where the pre-activation is <= 0,
/// including the tie at exactly 0.
template <typename Scalar, typename Derived>
Matrix<Scalar> backward(const DenseLayer<Scalar>& layer,
                        const Eigen::MatrixBase<Derived>& upstream,
                        LayerTape<Scalar>& tape) {
  if (!tape.has_activations) {
    throw StateError("layer '" + layer.name +
                     "': backward called without cached forward activations");
  }
  if (upstream.rows() != tape.pre_activation.rows() ||
      upstream.cols() != tape.pre_activation.cols()) {
    throw ShapeError("layer '" + layer.name + "': upstream gradient is " +
                     detail::dims(upstream.rows(), upstream.cols()) +
                     " but layer output is " +
                     detail::dims(tape.pre_activation.rows(),
                                  tape.pre_activation.cols()));
  }
  Matrix<Scalar> delta = upstream;
  if (layer.activation == Activation::relu) {
    delta.array() *=
        (tape.pre_activation.array() > Scalar(0)).template cast<Scalar>();
  }
  tape.weight_grad.noalias() = delta * tape.input.transpose();
  tape.bias_grad = delta.rowwise().sum();
  tape.has_gradients = true;
  return layer.weights.transpose() * delta;
}

template <typename Scalar>
struct Loss {
  Scalar value;
  Matrix<Scalar> grad;  // dLoss/dPred, same shape as pred
};

/// Summed squared error ||pred - target||^2 with gradient 2 (pred - target).
template <typename Scalar, typename DerivedP, typename DerivedT>
Loss<Scalar> mse_loss(const Eigen::MatrixBase<DerivedP>& pred,
                      const Eigen::MatrixBase<DerivedT>& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw ShapeError("mse_loss: prediction is " +
                     detail::dims(pred.rows(), pred.cols()) +
                     " but target is " +
                     detail::dims(target.rows(), target.cols()));
  }
  Matrix<Scalar> diff = pred - target;
  return {diff.squaredNorm(), Scalar(2) * diff};
}

/// Batch loss: summed squared error per column, averaged over columns.
/// With a mask (same shape, entries 0/1) only masked-in entries contribute.
template <typename Scalar>
Loss<Scalar> batch_mse_loss(const Matrix<Scalar>& pred,
                            const Matrix<Scalar>& target,
                            const Matrix<Scalar>* mask = nullptr) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw ShapeError("batch_mse_loss: prediction is " +
                     detail::dims(pred.rows(), pred.cols()) +
                     " but target is " +
                     detail::dims(target.rows(), target.cols()));
  }
  if (pred.cols() == 0) throw ShapeError("batch_mse_loss: empty batch");
  Matrix<Scalar> diff = pred - target;
  if (mask != nullptr) {
    if (mask->rows() != diff.rows() || mask->cols() != diff.cols()) {
      throw ShapeError("batch_mse_loss: mask shape mismatch");
    }
    diff.array() *= mask->array();
  }
  const Scalar scale = Scalar(1) / static_cast<Scalar>(pred.cols());
  return {diff.squaredNorm() * scale, Scalar(2) * scale * diff};
}

template <typename Scalar>
struct AdamHyper {
  Scalar learning_rate = Scalar(1e-3);
  Scalar beta1 = Scalar(0.9);
  Scalar beta2 = Scalar(0.999);
  Scalar epsilon = Scalar(1e-8);
};

template <typename Scalar>
struct AdamMoments {
  Matrix<Scalar> m_weights, v_weights;
  Vector<Scalar> m_bias, v_bias;
};

template <typename Scalar>
struct AdamState {
  std::vector<AdamMoments<Scalar>> moments;  // one per layer, lazily sized
  std::int64_t step = 0;
};

/// One bias-corrected Adam update over `layers` using the gradients on the
/// matching tapes. Frozen layers are skipped entirely. All gradients are
/// checked for finiteness before any parameter is touched.
template <typename Scalar>
void adam_step(std::span<DenseLayer<Scalar>* const> layers,
               std::span<const LayerTape<Scalar>* const> grads,
               AdamState<Scalar>& state, const AdamHyper<Scalar>& hyper) {
  if (layers.size() != grads.size()) {
    throw ShapeError("adam_step: " + std::to_string(layers.size()) +
                     " layers but " + std::to_string(grads.size()) +
                     " gradient tapes");
  }
  if (state.moments.empty()) {
    state.moments.resize(layers.size());
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& l = *layers[i];
      auto& m = state.moments[i];
      m.m_weights = Matrix<Scalar>::Zero(l.outputs(), l.inputs());
      m.v_weights = m.m_weights;
      m.m_bias = Vector<Scalar>::Zero(l.outputs());
      m.v_bias = m.m_bias;
    }
  } else if (state.moments.size() != layers.size()) {
    throw ShapeError("adam_step: optimizer state sized for " +
                     std::to_string(state.moments.size()) + " layers, got " +
                     std::to_string(layers.size()));
  }

  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = *layers[i];
    if (l.frozen) continue;
    const auto& g = *grads[i];
    if (!g.has_gradients) {
      throw StateError("adam_step: no gradients recorded for layer '" +
                       l.name + "'");
    }
    if (g.weight_grad.rows() != l.outputs() ||
        g.weight_grad.cols() != l.inputs() ||
        g.bias_grad.size() != l.outputs() ||
        state.moments[i].m_weights.rows() != l.outputs() ||
        state.moments[i].m_weights.cols() != l.inputs()) {
      throw ShapeError("adam_step: gradient/state shape mismatch for layer '" +
                       l.name + "'");
    }
    if (!g.weight_grad.allFinite() || !g.bias_grad.allFinite()) {
      throw TrainingError("non-finite gradient in layer '" + l.name + "'");
    }
  }

  ++state.step;
  const auto t = static_cast<Scalar>(state.step);
  const Scalar correction1 = Scalar(1) - std::pow(hyper.beta1, t);
  const Scalar correction2 = Scalar(1) - std::pow(hyper.beta2, t);

  auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
    m = hyper.beta1 * m + (Scalar(1) - hyper.beta1) * g;
    v = hyper.beta2 * v + (Scalar(1) - hyper.beta2) * g.cwiseProduct(g);
    param.array() -= hyper.learning_rate * (m.array() / correction1) /
                     ((v.array() / correction2).sqrt() + hyper.epsilon);
  };

  for (std::size_t i = 0; i < layers.size(); ++i) {
    auto& l = *layers[i];
    if (l.frozen) continue;
    auto& m = state.moments[i];
    update(l.weights, m.m_weights, m.v_weights, grads[i]->weight_grad);
    update(l.bias, m.m_bias, m.v_bias, grads[i]->bias_grad);
  }
}

using Rng = std::mt19937_64;

/// All initialization and shuffling draws from generators created here.
inline Rng seed_rng(std::uint64_t seed) { return Rng(seed); }

/// He-uniform weights, zero bias. Used for ReLU layers.
template <typename Scalar>
void init_he_uniform(DenseLayer<Scalar>& layer, Rng& rng) {
  const Scalar limit = std::sqrt(Scalar(6) / static_cast<Scalar>(layer.inputs()));
  std::uniform_real_distribution<Scalar> dist(-limit, limit);
  for (Eigen::Index c = 0; c < layer.weights.cols(); ++c)
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
      layer.weights(r, c) = dist(rng);
  layer.bias.setZero();
}

/// Glorot-uniform weights, zero bias. Used for identity-activated layers.
template <typename Scalar>
void init_glorot_uniform(DenseLayer<Scalar>& layer, Rng& rng) {
  const Scalar limit = std::sqrt(
      Scalar(6) / static_cast<Scalar>(layer.inputs() + layer.outputs()));
  std::uniform_real_distribution<Scalar> dist(-limit, limit);
  for (Eigen::Index c = 0; c < layer.weights.cols(); ++c)
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
      layer.weights(r, c) = dist(rng);
  layer.bias.setZero();
}

template <typename Scalar>
void initialize(DenseLayer<Scalar>& layer, Rng& rng) {
  if (layer.activation == Activation::relu)
    init_he_uniform(layer, rng);
  else
    init_glorot_uniform(layer, rng);
}

}  // namespace multipofo::nn
