// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "hecsb/core.hpp"
#include "hecsb/nn.hpp"
#include "hecsb/sensing.hpp"

#include <cmath>
#include <filesystem>
#include <vector>

namespace hecsb {

/// Learned linear measurement W (m x n) and an MLP decoder predicting the
/// mean of x given y = W x + noise_std * xi.
template <typename Scalar>
struct HecsaModel {
  Matrix<Scalar> measurement;
  Mlp<Scalar> decoder;
  Scalar noise_std = 0;
  Scalar frobenius_bound = 0;

  Index measurements() const { return measurement.rows(); }
  Index signal_dim() const { return measurement.cols(); }

  std::vector<Parameter<Scalar>> parameters() {
    auto p = decoder.parameters("decoder");
    p.insert(p.begin(), make_parameter("measurement", measurement));
    return p;
  }
};

template <typename Scalar>
struct HecsaLoss {
  double value = 0.0;  // mean over the batch of 0.5 ||x - decoder(y)||^2
  Matrix<Scalar> d_measurement;
  MlpGradients<Scalar> d_decoder;

  /// Flattened in the same order as `HecsaModel::parameters()`.
  GradientList<Scalar> flatten() const {
    auto g = d_decoder.flatten();
    g.insert(g.begin(), d_measurement);
    return g;
  }
};

/// Negative Gaussian log-likelihood (unit variance, constants dropped) of a
/// batch given an explicit standard-normal noise draw, so y = W x + sigma xi
/// is a deterministic function of the parameters.
template <typename Scalar>
HecsaLoss<Scalar> hecsa_loss_with_noise(HecsaModel<Scalar>& model, const Matrix<Scalar>& batch,
                                        const Matrix<Scalar>& noise) {
  if (batch.cols() == 0) throw ArgumentError("hecsa_loss: empty batch");
  if (model.noise_std < 0) throw ArgumentError("hecsa_loss: negative noise level");
  if (batch.rows() != model.signal_dim())
    throw DimensionError("hecsa_loss: batch rows " + std::to_string(batch.rows()) + " != " +
                         std::to_string(model.signal_dim()));
  if (noise.rows() != model.measurements() || noise.cols() != batch.cols())
    throw DimensionError("hecsa_loss: noise shape mismatch");
  const Matrix<Scalar> y = model.measurement * batch + model.noise_std * noise;
  const Matrix<Scalar> out = model.decoder.forward(y);
  const Matrix<Scalar> diff = out - batch;
  const auto n = static_cast<double>(batch.cols());
  HecsaLoss<Scalar> loss;
  loss.value = 0.5 * diff.template cast<double>().squaredNorm() / n;
  auto back = model.decoder.backward(diff / static_cast<Scalar>(n));
  loss.d_measurement.noalias() = back.input_gradient * batch.transpose();
  loss.d_decoder = std::move(back.gradients);
  return loss;
}

/// Monte-Carlo estimate with one fresh reparameterized noise draw per sample.
template <typename Scalar>
HecsaLoss<Scalar> hecsa_loss(HecsaModel<Scalar>& model, const Matrix<Scalar>& batch, Rng& rng) {
  if (batch.cols() == 0) throw ArgumentError("hecsa_loss: empty batch");
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix<Scalar> noise(model.measurements(), batch.cols());
  for (Index c = 0; c < noise.cols(); ++c)
    for (Index r = 0; r < noise.rows(); ++r) noise(r, c) = static_cast<Scalar>(normal(rng));
  return hecsa_loss_with_noise(model, batch, noise);
}

/// Decoder mean for each column of y, clamped to [0, 1].
template <typename Scalar>
Matrix<Scalar> hecsa_reconstruct(const HecsaModel<Scalar>& model, const Matrix<Scalar>& y) {
  if (y.rows() != model.measurements())
    throw ArgumentError("hecsa_reconstruct: measurement length " + std::to_string(y.rows()) +
                        " != " + std::to_string(model.measurements()));
  return clamp_unit<Scalar>(model.decoder.predict(y));
}

/// The trained model's measurement as an operator with the model's noise level.
template <typename Scalar>
MeasurementOperator<Scalar> measurement_operator(const HecsaModel<Scalar>& model) {
  MeasurementOperator<Scalar> op;
  op.weights = model.measurement;
  op.noise_std = model.noise_std;
  return op;
}

struct HecsaConfig {
  Index measurements = 25;
  double noise_std = 0.1;
  double frobenius_bound = 0.0;  // <= 0 selects the Frobenius norm of a matching Gaussian operator
  int epochs = 20;
  Index batch_size = 128;
  std::vector<Index> hidden = {600, 600};
  double learning_rate = 1e-3;
  double initial_multiplier = 1e-3;
  /// Scale applied to the decoder's first-layer initialization.
  double input_gain = 0.1;
  std::uint64_t seed = 1;
};

struct TrainLog {
  std::vector<double> loss;
  std::vector<double> frobenius;
  std::vector<double> multiplier;
};

struct HecsaTraining {
  HecsaModel<float> model;
  TrainLog log;
};

/// Trains W and the decoder on the columns of `data` under ||W||_F <= k. The
/// penalty multiplier on (||W||_F^2 - k^2) is doubled while the bound is
/// exceeded and halved once the norm falls below 95% of it; W is projected
/// back onto the ball after every epoch.
HecsaTraining train_hecsa(const MatrixF& data, const HecsaConfig& config);

void write_train_log_csv(const std::filesystem::path& path, const TrainLog& log);

void save_hecsa(const std::filesystem::path& path, const HecsaModel<float>& model);
HecsaModel<float> load_hecsa(const std::filesystem::path& path);

}  // namespace hecsb
