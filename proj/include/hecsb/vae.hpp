// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "hecsb/core.hpp"
#include "hecsb/nn.hpp"
#include "hecsb/sensing.hpp"

#include <filesystem>
#include <vector>

namespace hecsb {

/// Gaussian-posterior, Gaussian-decoder variational autoencoder. The encoder
/// emits [mean; log variance] of q(z|x); the decoder G maps z to the mean of
/// p(x|z) with fixed standard deviation `decoder_std`.
struct VaeModel {
  Mlp<float> encoder;
  Mlp<float> decoder;
  Index latent_dim = 0;
  float decoder_std = 0.1f;
  bool trained = false;
};

/// Bound on the encoder's log variance; the gradient is zero where it binds.
inline constexpr double kLogVarianceLimit = 12.0;

template <typename Scalar>
struct VaeLoss {
  double value = 0.0;  // batch mean negative ELBO, constants dropped
  MlpGradients<Scalar> d_encoder;
  MlpGradients<Scalar> d_decoder;

  /// Encoder gradients first, then decoder.
  GradientList<Scalar> flatten() const {
    auto g = d_encoder.flatten();
    for (auto& d : d_decoder.flatten()) g.push_back(std::move(d));
    return g;
  }
};

/// Negative ELBO of a batch for an explicit standard-normal draw `eps`
/// (latent x batch), reparameterized as z = mu + exp(logvar / 2) eps.
template <typename Scalar>
VaeLoss<Scalar> vae_loss_with_noise(Mlp<Scalar>& encoder, Mlp<Scalar>& decoder, const Matrix<Scalar>& x,
                                    const Matrix<Scalar>& eps, double decoder_std) {
  const Index k = eps.rows();
  const Index b = x.cols();
  if (b == 0) throw ArgumentError("vae_loss: empty batch");
  if (encoder.output_dim() != 2 * k || decoder.input_dim() != k || eps.cols() != b)
    throw DimensionError("vae_loss: encoder, decoder and noise shapes disagree");
  const auto lim = static_cast<Scalar>(kLogVarianceLimit);
  const Matrix<Scalar> stats = encoder.forward(x);
  const Matrix<Scalar> mu = stats.topRows(k);
  const Matrix<Scalar> raw_log_var = stats.bottomRows(k);
  const Matrix<Scalar> log_var = raw_log_var.cwiseMax(-lim).cwiseMin(lim);
  const Matrix<Scalar> std_dev = (Scalar(0.5) * log_var.array()).exp().matrix();
  const Matrix<Scalar> z = mu + std_dev.cwiseProduct(eps);
  const Matrix<Scalar> diff = decoder.forward(z) - x;

  const double inv_var = 1.0 / (decoder_std * decoder_std);
  const double recon = 0.5 * inv_var * diff.template cast<double>().squaredNorm();
  const double kl = 0.5 * (log_var.array().exp() + mu.array().square() - Scalar(1) - log_var.array())
                              .template cast<double>()
                              .sum();
  VaeLoss<Scalar> out;
  const auto scale = static_cast<Scalar>(1.0 / static_cast<double>(b));
  out.value = (recon + kl) / static_cast<double>(b);

  auto dec_back = decoder.backward(diff * static_cast<Scalar>(inv_var) * scale);
  const Matrix<Scalar>& dz = dec_back.input_gradient;
  Matrix<Scalar> d_stats(2 * k, b);
  d_stats.topRows(k) = dz + mu * scale;
  Matrix<Scalar> d_log_var = dz.cwiseProduct(eps).cwiseProduct(std_dev) * Scalar(0.5) +
                             ((log_var.array().exp() - Scalar(1)) * Scalar(0.5) * scale).matrix();
  d_stats.bottomRows(k) = (raw_log_var.array().abs() < lim).select(d_log_var, Scalar(0));
  out.d_encoder = encoder.backward(d_stats).gradients;
  out.d_decoder = std::move(dec_back.gradients);
  return out;
}

template <typename Scalar>
struct LatentObjective {
  Vector<double> value;   // per column
  Matrix<Scalar> d_latent;
};

/// ||target - W G(z)||^2 + penalty ||z||^2 per column, and its gradient in z.
template <typename Scalar>
LatentObjective<Scalar> latent_objective(Mlp<Scalar>& generator, const Matrix<Scalar>& w,
                                         const Matrix<Scalar>& target, const Matrix<Scalar>& z,
                                         double penalty) {
  const Matrix<Scalar> residual = w * generator.forward(z) - target;
  LatentObjective<Scalar> out;
  out.value = residual.template cast<double>().colwise().squaredNorm().transpose() +
              penalty * z.template cast<double>().colwise().squaredNorm().transpose();
  out.d_latent = generator.backward(Scalar(2) * (w.transpose() * residual)).input_gradient +
                 static_cast<Scalar>(2.0 * penalty) * z;
  return out;
}

struct VaeConfig {
  Index latent_dim = 20;
  std::vector<Index> hidden = {600, 600};
  double decoder_std = 0.1;
  int epochs = 30;
  Index batch_size = 128;
  double learning_rate = 1e-3;
  std::uint64_t seed = 2;
};

struct VaeTraining {
  VaeModel model;
  std::vector<double> loss;  // per-epoch mean negative ELBO (nats, constants dropped)
};

VaeTraining train_vae(const MatrixF& data, const VaeConfig& config);

struct LatentSearchOptions {
  int steps = 200;
  int restarts = 10;
  /// Weight of ||z||^2 added to ||y - W G(z)||^2; 0 gives the plain
  /// measurement-matching objective.
  double latent_penalty = 0.1;
  double initial_step = 0.05;
  std::uint64_t seed = 3;
};

struct LatentSearchResult {
  MatrixF reconstruction;           // G(z*) clamped to [0, 1], one column per measurement
  MatrixF latent;                   // z*
  std::vector<double> objective;    // best objective per column
  /// Objective of every accepted step for the first restart of column 0.
  std::vector<double> trace;
};

/// x_hat = G(argmin_z ||y - W G(z)||^2 + penalty ||z||^2), minimized by
/// gradient descent with a per-chain adaptive step that only accepts
/// non-increasing moves, from `restarts` random starts per column.
LatentSearchResult vae_reconstruct(const VaeModel& vae, const MeasurementOperator<float>& op,
                                   const MatrixF& y, const LatentSearchOptions& options);

void save_vae(const std::filesystem::path& path, const VaeModel& vae);
VaeModel load_vae(const std::filesystem::path& path);

}  // namespace hecsb
