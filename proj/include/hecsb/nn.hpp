// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "hecsb/core.hpp"

#include <cmath>
#include <new>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace hecsb {

enum class Activation : std::uint8_t { identity = 0, relu = 1 };

template <typename Scalar>
struct DenseLayer {
  Matrix<Scalar> weight;  // out x in
  Vector<Scalar> bias;    // out
  Activation activation = Activation::identity;

  Index input_dim() const { return weight.cols(); }
  Index output_dim() const { return weight.rows(); }
};

/// A named view onto a parameter tensor owned by some model. Vectors are
/// viewed as single-column matrices so that every parameter has the same type.
template <typename Scalar>
struct Parameter {
  std::string name;
  Eigen::Map<Matrix<Scalar>> value;

  Parameter(std::string n, Eigen::Map<Matrix<Scalar>> v) : name(std::move(n)), value(v) {}
  Parameter(const Parameter&) = default;
  // Assigning a Map copies coefficients; a Parameter must rebind instead, or
  // container operations would overwrite the model it points into.
  Parameter& operator=(const Parameter& other) {
    name = other.name;
    new (&value) Eigen::Map<Matrix<Scalar>>(const_cast<Scalar*>(other.value.data()), other.value.rows(),
                                             other.value.cols());
    return *this;
  }
};

template <typename Scalar>
using GradientList = std::vector<Matrix<Scalar>>;

template <typename Scalar>
Parameter<Scalar> make_parameter(std::string name, Matrix<Scalar>& m) {
  return {std::move(name), Eigen::Map<Matrix<Scalar>>(m.data(), m.rows(), m.cols())};
}

template <typename Scalar>
Parameter<Scalar> make_parameter(std::string name, Vector<Scalar>& v) {
  return {std::move(name), Eigen::Map<Matrix<Scalar>>(v.data(), v.size(), 1)};
}

template <typename Scalar>
struct MlpGradients {
  std::vector<Matrix<Scalar>> weight;
  std::vector<Vector<Scalar>> bias;

  /// Flattened in the same order as `Mlp::parameters()`.
  GradientList<Scalar> flatten() const {
    GradientList<Scalar> out;
    out.reserve(weight.size() * 2);
    for (std::size_t i = 0; i < weight.size(); ++i) {
      out.push_back(weight[i]);
      out.push_back(bias[i]);
    }
    return out;
  }
};

template <typename Scalar>
struct MlpBackward {
  MlpGradients<Scalar> gradients;
  Matrix<Scalar> input_gradient;
};

template <typename Scalar>
void apply_activation(Activation a, Matrix<Scalar>& z) {
  if (a == Activation::relu) z = z.cwiseMax(Scalar(0));
}

/// Multilayer perceptron over column batches. `forward` caches what
/// `backward` needs; `predict` is the const, cache-free inference path.
template <typename Scalar>
class Mlp {
 public:
  Mlp() = default;

  explicit Mlp(std::vector<DenseLayer<Scalar>> layers) : layers_(std::move(layers)) {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const auto& l = layers_[i];
      if (l.bias.size() != l.weight.rows())
        throw DimensionError("layer " + std::to_string(i) + ": bias length " +
                             std::to_string(l.bias.size()) + " != weight rows " +
                             std::to_string(l.weight.rows()));
      if (i > 0 && layers_[i - 1].output_dim() != l.input_dim())
        throw DimensionError("layer " + std::to_string(i) + " input " +
                             std::to_string(l.input_dim()) + " does not chain with " +
                             std::to_string(layers_[i - 1].output_dim()));
    }
  }

  /// Builds a network with the given widths (input first). Hidden layers use
  /// `hidden`, the last layer uses `output`. Weights are uniform in
  /// +-sqrt(gain / fan_in), gain 6 for relu layers and 3 otherwise; biases zero.
  static Mlp make(std::span<const Index> widths, Activation hidden, Activation output,
                  Rng& rng) {
    if (widths.size() < 2) throw ArgumentError("an Mlp needs at least two widths");
    std::vector<DenseLayer<Scalar>> layers;
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
      if (widths[i] <= 0 || widths[i + 1] <= 0) throw ArgumentError("non-positive layer width");
      DenseLayer<Scalar> l;
      l.activation = (i + 2 == widths.size()) ? output : hidden;
      const double gain = l.activation == Activation::relu ? 6.0 : 3.0;
      const double bound = std::sqrt(gain / static_cast<double>(widths[i]));
      std::uniform_real_distribution<double> u(-bound, bound);
      l.weight.resize(widths[i + 1], widths[i]);
      for (Index c = 0; c < l.weight.cols(); ++c)
        for (Index r = 0; r < l.weight.rows(); ++r) l.weight(r, c) = static_cast<Scalar>(u(rng));
      l.bias = Vector<Scalar>::Zero(widths[i + 1]);
      layers.push_back(std::move(l));
    }
    return Mlp(std::move(layers));
  }

  static Mlp make(std::initializer_list<Index> widths, Activation hidden, Activation output,
                  Rng& rng) {
    std::vector<Index> w(widths);
    return make(std::span<const Index>(w), hidden, output, rng);
  }

  bool empty() const { return layers_.empty(); }
  Index input_dim() const { return layers_.empty() ? 0 : layers_.front().input_dim(); }
  Index output_dim() const { return layers_.empty() ? 0 : layers_.back().output_dim(); }
  std::size_t depth() const { return layers_.size(); }
  const std::vector<DenseLayer<Scalar>>& layers() const { return layers_; }
  std::vector<DenseLayer<Scalar>>& layers() { return layers_; }

  Matrix<Scalar> predict(const Matrix<Scalar>& x) const {
    check_input(x);
    Matrix<Scalar> a = x;
    for (const auto& l : layers_) {
      Matrix<Scalar> z = l.weight * a;
      z.colwise() += l.bias;
      apply_activation(l.activation, z);
      a = std::move(z);
    }
    return a;
  }

  /// Column-at-a-time inference. Matrix products take different kernels for
  /// different batch widths, so only this path gives every column the same
  /// bits whatever batch it arrives in.
  Matrix<Scalar> predict_each(const Matrix<Scalar>& x) const {
    check_input(x);
    Matrix<Scalar> out(output_dim(), x.cols());
    for (Index c = 0; c < x.cols(); ++c) {
      Vector<Scalar> a = x.col(c);
      for (const auto& l : layers_) {
        Vector<Scalar> z = l.weight * a + l.bias;
        if (l.activation == Activation::relu) z = z.cwiseMax(Scalar(0));
        a = std::move(z);
      }
      out.col(c) = a;
    }
    return out;
  }

  Matrix<Scalar> forward(const Matrix<Scalar>& x) {
    check_input(x);
    inputs_.assign(layers_.size(), Matrix<Scalar>());
    preacts_.assign(layers_.size(), Matrix<Scalar>());
    Matrix<Scalar> a = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const auto& l = layers_[i];
      inputs_[i] = a;
      Matrix<Scalar> z = l.weight * a;
      z.colwise() += l.bias;
      preacts_[i] = z;
      apply_activation(l.activation, z);
      a = std::move(z);
    }
    cached_ = true;
    return a;
  }

  MlpBackward<Scalar> backward(const Matrix<Scalar>& upstream) const {
    if (!cached_) throw StateError("Mlp::backward called without a preceding forward");
    const auto& last = preacts_.back();
    if (upstream.rows() != last.rows() || upstream.cols() != last.cols())
      throw DimensionError("upstream gradient " + shape_string(upstream.rows(), upstream.cols()) +
                           " does not match output " + shape_string(last.rows(), last.cols()));
    MlpBackward<Scalar> out;
    out.gradients.weight.resize(layers_.size());
    out.gradients.bias.resize(layers_.size());
    Matrix<Scalar> g = upstream;
    for (std::size_t k = layers_.size(); k-- > 0;) {
      const auto& l = layers_[k];
      // relu'(z) is taken as 0 at z == 0.
      if (l.activation == Activation::relu)
        g = (preacts_[k].array() > Scalar(0)).select(g, Scalar(0));
      out.gradients.weight[k].noalias() = g * inputs_[k].transpose();
      out.gradients.bias[k] = g.rowwise().sum();
      Matrix<Scalar> next = l.weight.transpose() * g;
      g = std::move(next);
    }
    out.input_gradient = std::move(g);
    return out;
  }

  void clear_cache() {
    inputs_.clear();
    preacts_.clear();
    cached_ = false;
  }

  std::vector<Parameter<Scalar>> parameters(const std::string& prefix) {
    std::vector<Parameter<Scalar>> out;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const std::string base = prefix + "." + std::to_string(i);
      out.push_back(make_parameter(base + ".weight", layers_[i].weight));
      out.push_back(make_parameter(base + ".bias", layers_[i].bias));
    }
    return out;
  }

  template <typename Other>
  Mlp<Other> cast() const {
    std::vector<DenseLayer<Other>> ls;
    for (const auto& l : layers_)
      ls.push_back({l.weight.template cast<Other>(), l.bias.template cast<Other>(), l.activation});
    return Mlp<Other>(std::move(ls));
  }

  bool parameters_finite() const {
    for (const auto& l : layers_)
      if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
    return true;
  }

 private:
  void check_input(const Matrix<Scalar>& x) const {
    if (layers_.empty()) throw StateError("Mlp has no layers");
    if (x.rows() != input_dim())
      throw DimensionError("Mlp input has " + std::to_string(x.rows()) + " rows, expected " +
                           std::to_string(input_dim()));
  }

  std::vector<DenseLayer<Scalar>> layers_;
  std::vector<Matrix<Scalar>> inputs_;
  std::vector<Matrix<Scalar>> preacts_;
  bool cached_ = false;
};

template <typename Scalar>
struct AdamState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::int64_t step = 0;
  std::vector<Matrix<Scalar>> first_moment;
  std::vector<Matrix<Scalar>> second_moment;
};

/// One bias-corrected adaptive-moment update. Moments are created lazily on
/// the first call and must keep the same parameter order afterwards.
template <typename Scalar>
void adam_step(std::span<Parameter<Scalar>> params, std::span<const Matrix<Scalar>> grads,
               AdamState<Scalar>& state) {
  if (params.size() != grads.size())
    throw DimensionError("adam_step: " + std::to_string(params.size()) + " parameters but " +
                         std::to_string(grads.size()) + " gradients");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i].value;
    if (p.rows() != grads[i].rows() || p.cols() != grads[i].cols())
      throw DimensionError("adam_step: gradient shape mismatch for " + params[i].name);
    if (!grads[i].allFinite()) throw TrainingError("non-finite gradient for " + params[i].name);
  }
  if (state.first_moment.empty()) {
    for (const auto& g : grads) {
      state.first_moment.push_back(Matrix<Scalar>::Zero(g.rows(), g.cols()));
      state.second_moment.push_back(Matrix<Scalar>::Zero(g.rows(), g.cols()));
    }
  }
  if (state.first_moment.size() != params.size())
    throw StateError("adam_step: parameter count changed between steps");

  ++state.step;
  const double t = static_cast<double>(state.step);
  const auto b1 = static_cast<Scalar>(state.beta1);
  const auto b2 = static_cast<Scalar>(state.beta2);
  const auto c1 = static_cast<Scalar>(1.0 - std::pow(state.beta1, t));
  const auto c2 = static_cast<Scalar>(1.0 - std::pow(state.beta2, t));
  const auto lr = static_cast<Scalar>(state.learning_rate);
  const auto eps = static_cast<Scalar>(state.epsilon);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    m = b1 * m + (Scalar(1) - b1) * grads[i];
    v = b2 * v + (Scalar(1) - b2) * grads[i].cwiseAbs2();
    params[i].value.array() -=
        lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  }
}

/// Deterministic shuffled minibatch order for one epoch.
inline std::vector<Index> shuffled_indices(Index n, Rng& rng) {
  std::vector<Index> idx(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  for (Index i = n - 1; i > 0; --i) {
    std::uniform_int_distribution<Index> pick(0, i);
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(pick(rng))]);
  }
  return idx;
}

template <typename Scalar>
Matrix<Scalar> gather_columns(const Matrix<Scalar>& src, std::span<const Index> cols) {
  Matrix<Scalar> out(src.rows(), static_cast<Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) out.col(static_cast<Index>(j)) = src.col(cols[j]);
  return out;
}

}  // namespace hecsb
