// SPDX-License-Identifier: Apache-2.0
#include "hecsb/vae.hpp"

#include "hecsb/checkpoint.hpp"

#include <cmath>
#include <limits>

namespace hecsb {
namespace {

MatrixF standard_normal(Index rows, Index cols, Rng& rng) {
  std::normal_distribution<float> normal(0.0f, 1.0f);
  MatrixF out(rows, cols);
  for (Index c = 0; c < cols; ++c)
    for (Index r = 0; r < rows; ++r) out(r, c) = normal(rng);
  return out;
}

}  // namespace

VaeTraining train_vae(const MatrixF& data, const VaeConfig& config) {
  if (data.cols() == 0) throw ArgumentError("train_vae: empty dataset");
  if (config.latent_dim <= 0) throw ArgumentError("train_vae: latent dimension must be positive");
  const Index n = data.rows();
  const Index k = config.latent_dim;
  Rng rng(config.seed);

  VaeTraining out;
  auto& vae = out.model;
  vae.latent_dim = k;
  vae.decoder_std = static_cast<float>(config.decoder_std);
  std::vector<Index> enc{n};
  enc.insert(enc.end(), config.hidden.begin(), config.hidden.end());
  enc.push_back(2 * k);
  std::vector<Index> dec{k};
  dec.insert(dec.end(), config.hidden.rbegin(), config.hidden.rend());
  dec.push_back(n);
  vae.encoder = Mlp<float>::make(enc, Activation::relu, Activation::identity, rng);
  vae.decoder = Mlp<float>::make(dec, Activation::relu, Activation::identity, rng);

  AdamState<float> adam_enc, adam_dec;
  adam_enc.learning_rate = adam_dec.learning_rate = config.learning_rate;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto order = shuffled_indices(data.cols(), rng);
    double total = 0.0;
    for (Index start = 0; start < data.cols(); start += config.batch_size) {
      const Index b = std::min(config.batch_size, data.cols() - start);
      const MatrixF x = gather_columns(
          data, std::span<const Index>(order).subspan(static_cast<std::size_t>(start),
                                                      static_cast<std::size_t>(b)));
      const MatrixF eps = standard_normal(k, b, rng);
      auto loss = vae_loss_with_noise(vae.encoder, vae.decoder, x, eps, config.decoder_std);
      if (!std::isfinite(loss.value))
        throw TrainingError("train_vae: non-finite loss at epoch " + std::to_string(epoch));
      total += loss.value * static_cast<double>(b);

      auto dec_params = vae.decoder.parameters("decoder");
      auto enc_params = vae.encoder.parameters("encoder");
      const auto dec_grads = loss.d_decoder.flatten();
      const auto enc_grads = loss.d_encoder.flatten();
      adam_step<float>(dec_params, dec_grads, adam_dec);
      adam_step<float>(enc_params, enc_grads, adam_enc);
    }
    out.loss.push_back(total / static_cast<double>(data.cols()));
  }
  vae.encoder.clear_cache();
  vae.decoder.clear_cache();
  vae.trained = true;
  return out;
}

LatentSearchResult vae_reconstruct(const VaeModel& vae, const MeasurementOperator<float>& op,
                                   const MatrixF& y, const LatentSearchOptions& options) {
  if (!vae.trained) throw StateError("vae_reconstruct: generator has not been trained");
  if (!op.identity_acquisition()) throw ArgumentError("vae_reconstruct requires identity acquisition");
  if (op.weights.cols() != vae.decoder.output_dim())
    throw DimensionError("vae_reconstruct: operator width does not match generator output");
  if (y.rows() != op.measurements()) throw ArgumentError("vae_reconstruct: measurement length mismatch");
  if (options.restarts < 1 || options.steps < 0) throw ArgumentError("vae_reconstruct: bad schedule");

  const Index k = vae.latent_dim;
  const Index cols = y.cols();
  const Index restarts = options.restarts;
  const Index chains = cols * restarts;
  const MatrixF& w = op.weights;
  Rng rng(options.seed);
  Mlp<float> gen = vae.decoder;

  MatrixF target(y.rows(), chains);
  for (Index c = 0; c < cols; ++c)
    for (Index r = 0; r < restarts; ++r) target.col(c * restarts + r) = y.col(c);

  MatrixF z = standard_normal(k, chains, rng);
  auto evaluate = [&](const MatrixF& latent, Eigen::VectorXd& value, MatrixF& grad) {
    auto obj = latent_objective(gen, w, target, latent, options.latent_penalty);
    value = std::move(obj.value);
    grad = std::move(obj.d_latent);
  };

  Eigen::VectorXd f;
  MatrixF grad;
  evaluate(z, f, grad);
  Eigen::VectorXd step = Eigen::VectorXd::Constant(chains, options.initial_step);
  LatentSearchResult res;
  res.trace.push_back(f(0));
  Eigen::VectorXd f_next;
  MatrixF grad_next;
  for (int s = 0; s < options.steps; ++s) {
    MatrixF candidate = z;
    for (Index c = 0; c < chains; ++c) candidate.col(c) -= static_cast<float>(step(c)) * grad.col(c);
    evaluate(candidate, f_next, grad_next);
    for (Index c = 0; c < chains; ++c) {
      if (std::isfinite(f_next(c)) && f_next(c) <= f(c)) {
        z.col(c) = candidate.col(c);
        grad.col(c) = grad_next.col(c);
        f(c) = f_next(c);
        step(c) *= 1.5;
        if (c == 0) res.trace.push_back(f(c));
      } else {
        step(c) *= 0.5;
      }
    }
  }

  res.latent.resize(k, cols);
  res.objective.resize(static_cast<std::size_t>(cols));
  for (Index c = 0; c < cols; ++c) {
    Index best = c * restarts;
    for (Index r = 1; r < restarts; ++r)
      if (f(c * restarts + r) < f(best)) best = c * restarts + r;
    res.latent.col(c) = z.col(best);
    res.objective[static_cast<std::size_t>(c)] = f(best);
  }
  res.reconstruction = clamp_unit<float>(vae.decoder.predict(res.latent));
  return res;
}

void save_vae(const std::filesystem::path& path, const VaeModel& vae) {
  if (!vae.trained) throw StateError("save_vae: model has not been trained");
  std::vector<TensorRecord> recs;
  recs.push_back({"latent_dim", {1}, {static_cast<float>(vae.latent_dim)}});
  recs.push_back({"decoder_std", {1}, {vae.decoder_std}});
  append_mlp(recs, "encoder", vae.encoder);
  append_mlp(recs, "decoder", vae.decoder);
  save_checkpoint(path, recs);
}

VaeModel load_vae(const std::filesystem::path& path) {
  const auto recs = load_checkpoint(path);
  VaeModel vae;
  vae.latent_dim = static_cast<Index>(find_record(recs, "latent_dim").data.at(0));
  vae.decoder_std = find_record(recs, "decoder_std").data.at(0);
  vae.encoder = mlp_from_records(recs, "encoder");
  vae.decoder = mlp_from_records(recs, "decoder");
  if (vae.decoder.input_dim() != vae.latent_dim) throw DecodeError("vae checkpoint: latent width mismatch");
  vae.trained = true;
  return vae;
}

}  // namespace hecsb
