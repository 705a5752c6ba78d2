// SPDX-License-Identifier: Apache-2.0
#include "hecsb/hecsa.hpp"

#include "hecsb/checkpoint.hpp"

#include <fstream>
#include <iomanip>

namespace hecsb {

HecsaTraining train_hecsa(const MatrixF& data, const HecsaConfig& config) {
  const Index n = data.rows();
  const Index m = config.measurements;
  if (m <= 0 || m >= n) throw ArgumentError("train_hecsa needs 0 < m < n");
  if (data.cols() == 0) throw ArgumentError("train_hecsa: empty dataset");
  if (config.epochs < 1 || config.batch_size < 1) throw ArgumentError("train_hecsa: bad schedule");

  Rng rng(config.seed);
  HecsaTraining out;
  auto& model = out.model;
  model.noise_std = static_cast<float>(config.noise_std);
  // Start from a Gaussian operator; its norm is also the default bound.
  model.measurement = gaussian_operator<float>(m, n, config.seed ^ 0x9E3779B97F4A7C15ull).weights;
  const double bound =
      config.frobenius_bound > 0 ? config.frobenius_bound : static_cast<double>(model.measurement.norm());
  if (!(bound > 0)) throw ArgumentError("train_hecsa: Frobenius bound must be positive");
  model.frobenius_bound = static_cast<float>(bound);
  std::vector<Index> widths{m};
  widths.insert(widths.end(), config.hidden.begin(), config.hidden.end());
  widths.push_back(n);
  model.decoder = Mlp<float>::make(widths, Activation::relu, Activation::identity, rng);
  // Measurements are O(||x|| / sqrt(m)), far from unit scale. A small first
  // layer keeps early reconstructions near the bias; at full scale the first
  // Adam steps silence most relu units and training stalls at the mean image.
  if (!(config.input_gain > 0)) throw ArgumentError("train_hecsa: input gain must be positive");
  model.decoder.layers().front().weight *= static_cast<float>(config.input_gain);

  AdamState<float> adam;
  adam.learning_rate = config.learning_rate;
  double multiplier = config.initial_multiplier;
  const double bound_sq = bound * bound;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto order = shuffled_indices(data.cols(), rng);
    double loss_sum = 0.0;
    Index seen = 0;
    for (Index start = 0; start < data.cols(); start += config.batch_size) {
      const Index count = std::min(config.batch_size, data.cols() - start);
      const MatrixF batch = gather_columns(
          data, std::span<const Index>(order).subspan(static_cast<std::size_t>(start),
                                                      static_cast<std::size_t>(count)));
      auto loss = hecsa_loss(model, batch, rng);
      if (!std::isfinite(loss.value))
        throw TrainingError("train_hecsa: non-finite loss at epoch " + std::to_string(epoch));
      const double norm_sq = static_cast<double>(model.measurement.squaredNorm());
      if (norm_sq > bound_sq)
        loss.d_measurement += static_cast<float>(2.0 * multiplier) * model.measurement;
      auto grads = loss.flatten();
      auto params = model.parameters();
      adam_step<float>(params, grads, adam);
      loss_sum += loss.value * static_cast<double>(count);
      seen += count;
    }
    const double norm = static_cast<double>(model.measurement.norm());
    if (norm > bound)
      multiplier *= 2.0;
    else if (norm < 0.95 * bound)
      multiplier *= 0.5;
    if (norm > bound) model.measurement *= static_cast<float>(bound / norm);
    out.log.loss.push_back(loss_sum / static_cast<double>(seen));
    out.log.frobenius.push_back(static_cast<double>(model.measurement.norm()));
    out.log.multiplier.push_back(multiplier);
  }
  model.decoder.clear_cache();
  return out;
}

void write_train_log_csv(const std::filesystem::path& path, const TrainLog& log) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string());
  out << "epoch,loss,frobenius,lagrange\n" << std::setprecision(9);
  for (std::size_t i = 0; i < log.loss.size(); ++i)
    out << i << ',' << log.loss[i] << ',' << log.frobenius[i] << ',' << log.multiplier[i] << '\n';
}

void save_hecsa(const std::filesystem::path& path, const HecsaModel<float>& model) {
  std::vector<TensorRecord> recs;
  recs.push_back(to_record("measurement", model.measurement));
  recs.push_back({"noise_std", {1}, {model.noise_std}});
  recs.push_back({"frobenius_bound", {1}, {model.frobenius_bound}});
  append_mlp(recs, "decoder", model.decoder);
  save_checkpoint(path, recs);
}

HecsaModel<float> load_hecsa(const std::filesystem::path& path) {
  const auto recs = load_checkpoint(path);
  HecsaModel<float> model;
  model.measurement = matrix_from_record(find_record(recs, "measurement"));
  model.noise_std = find_record(recs, "noise_std").data.at(0);
  model.frobenius_bound = find_record(recs, "frobenius_bound").data.at(0);
  model.decoder = mlp_from_records(recs, "decoder");
  if (model.decoder.input_dim() != model.measurements() || model.decoder.output_dim() != model.signal_dim())
    throw DecodeError("hecsa checkpoint: decoder does not match measurement shape");
  return model;
}

}  // namespace hecsb
