// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "hecsb/core.hpp"
#include "hecsb/dataset.hpp"
#include "hecsb/entropy.hpp"
#include "hecsb/losses.hpp"
#include "hecsb/nn.hpp"
#include "hecsb/prior.hpp"

#include <cmath>
#include <filesystem>
#include <vector>

namespace hecsb {

/// Classifier split at its first hidden layer: h = front(x), logits = tail(h).
struct TeacherModel {
  Mlp<float> front;
  Mlp<float> tail;

  Index input_dim() const { return front.input_dim(); }
  Index feature_dim() const { return front.output_dim(); }
  Index classes() const { return tail.output_dim(); }

  MatrixF features(const MatrixF& x) const { return front.predict(x); }
  MatrixF logits(const MatrixF& x) const { return tail.predict(front.predict(x)); }
};

struct TeacherConfig {
  Index feature_dim = 256;
  std::vector<Index> tail_hidden = {256};
  int epochs = 8;
  Index batch_size = 128;
  double learning_rate = 1e-3;
  double accuracy_gate = 0.95;
  std::uint64_t seed = 11;
};

double top1(std::span<const int> predicted, std::span<const int> labels);

/// Trains on `train`, then checks top-1 on `test` against the gate and throws
/// TrainingError when it is not met.
TeacherModel train_teacher(const ImageDataset& train, const ImageDataset& test,
                           const TeacherConfig& config);

void save_teacher(const std::filesystem::path& path, const TeacherModel& teacher);
TeacherModel load_teacher(const std::filesystem::path& path);

/// Encoder f (input -> latent), decoder g (latent -> teacher feature) and the
/// factorized prior the rate is measured under.
template <typename Scalar>
struct BottleneckModel {
  Mlp<Scalar> encoder;
  Mlp<Scalar> decoder;
  FactorizedPrior<Scalar> prior;
  double beta = 0.01;

  Index latent_dim() const { return encoder.output_dim(); }

  std::vector<Parameter<Scalar>> parameters() {
    auto p = encoder.parameters("encoder");
    auto d = decoder.parameters("decoder");
    p.insert(p.end(), d.begin(), d.end());
    p.push_back(make_parameter("prior.location", prior.location));
    p.push_back(make_parameter("prior.log_scale", prior.log_scale));
    return p;
  }

  template <typename Other>
  BottleneckModel<Other> cast() const {
    return {encoder.template cast<Other>(), decoder.template cast<Other>(),
            prior.template cast<Other>(), beta};
  }
};

/// z~ = f(x) + u with u ~ U(-1/2, 1/2) drawn per entry.
template <typename Scalar>
Matrix<Scalar> uniform_noise(Index rows, Index cols, Rng& rng) {
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  Matrix<Scalar> out(rows, cols);
  for (Index c = 0; c < cols; ++c)
    for (Index r = 0; r < rows; ++r) out(r, c) = static_cast<Scalar>(u(rng));
  return out;
}

template <typename Scalar>
Matrix<Scalar> encode_train(const Mlp<Scalar>& encoder, const Matrix<Scalar>& x, Rng& rng) {
  Matrix<Scalar> z = encoder.predict(x);
  z += uniform_noise<Scalar>(z.rows(), z.cols(), rng);
  return z;
}

/// Round half to even. |round(z)| > support raises RangeError, as does a
/// non-finite entry.
QuantizedLatent quantize(const MatrixF& z, int support);

template <typename Scalar>
struct RdLoss {
  double value = 0.0;       // distortion + beta * rate, batch means
  double distortion = 0.0;  // 0.5 ||h - g(z~)||^2
  double rate = 0.0;        // continuous surrogate, nats per sample
  MlpGradients<Scalar> d_encoder;
  MlpGradients<Scalar> d_decoder;
  Vector<Scalar> d_location;
  Vector<Scalar> d_log_scale;

  /// Same order as `BottleneckModel::parameters()`.
  GradientList<Scalar> flatten() const {
    auto g = d_encoder.flatten();
    auto d = d_decoder.flatten();
    g.insert(g.end(), d.begin(), d.end());
    g.push_back(d_location);
    g.push_back(d_log_scale);
    return g;
  }
};

/// Rate-distortion loss with an explicit uniform noise draw `u`.
template <typename Scalar>
RdLoss<Scalar> rd_loss_with_noise(BottleneckModel<Scalar>& model, const Matrix<Scalar>& x,
                                  const Matrix<Scalar>& h, const Matrix<Scalar>& u) {
  if (x.cols() == 0) throw ArgumentError("rd_loss: empty batch");
  if (h.cols() != x.cols() || h.rows() != model.decoder.output_dim())
    throw DimensionError("rd_loss: target features have shape " + shape_string(h.rows(), h.cols()));
  const Matrix<Scalar> z = model.encoder.forward(x) + u;
  const Matrix<Scalar> diff = model.decoder.forward(z) - h;
  const auto n = static_cast<double>(x.cols());
  const auto inv_n = static_cast<Scalar>(1.0 / n);

  RdLoss<Scalar> out;
  out.distortion = 0.5 * diff.template cast<double>().squaredNorm() / n;
  auto dec = model.decoder.backward(diff * inv_n);
  Matrix<Scalar> dz = std::move(dec.input_gradient);
  out.d_decoder = std::move(dec.gradients);
  const auto w = static_cast<Scalar>(model.beta) * inv_n;
  const auto rate = continuous_rate(model.prior, z);
  out.rate = rate.nats / n;
  dz += w * rate.d_latent;
  out.d_location = w * rate.d_location;
  out.d_log_scale = w * rate.d_log_scale;
  out.d_encoder = model.encoder.backward(dz).gradients;
  out.value = out.distortion + model.beta * out.rate;
  if (!std::isfinite(out.value)) throw TrainingError("rd_loss: non-finite loss");
  return out;
}

template <typename Scalar>
RdLoss<Scalar> rd_loss(BottleneckModel<Scalar>& model, const Matrix<Scalar>& x,
                       const Matrix<Scalar>& h, Rng& rng) {
  const Matrix<Scalar> u = uniform_noise<Scalar>(model.latent_dim(), x.cols(), rng);
  return rd_loss_with_noise(model, x, h, u);
}

struct BottleneckConfig {
  Index latent_dim = 32;
  std::vector<Index> encoder_hidden = {128};
  std::vector<Index> decoder_hidden = {128};
  int support = 32;
  double beta = 0.01;
  int epochs = 10;
  Index batch_size = 128;
  double learning_rate = 1e-3;
  std::uint64_t seed = 21;
};

struct EpochStats {
  double loss = 0.0;
  double distortion = 0.0;
  double rate = 0.0;
};

struct Stage1Result {
  BottleneckModel<float> model;
  std::vector<EpochStats> log;
};

/// Fits encoder, decoder and prior so that g(f(x) + u) mimics the teacher
/// feature h = teacher.front(x) under the rate penalty.
Stage1Result train_bottleneck_stage1(const TeacherModel& teacher, const MatrixF& data,
                                     const BottleneckConfig& config);

/// Student classifier assembled from a bottleneck and a (copied) teacher tail.
struct Student {
  BottleneckModel<float> bottleneck;
  Mlp<float> tail;
};

struct Stage2Config {
  double alpha = 0.5;
  double tau = 4.0;
  int epochs = 5;
  Index batch_size = 128;
  double learning_rate = 1e-4;
  /// Epochs of rate-only prior refitting on the final encoder.
  int prior_epochs = 3;
  std::uint64_t seed = 31;
};

struct Stage2Result {
  Student student;
  std::vector<double> loss;  // per-epoch mean KD loss
};

/// KD fine-tuning of f -> g -> tail against the frozen teacher's logits. The
/// prior stays frozen during the KD epochs and is refit afterwards.
Stage2Result finetune_stage2(const TeacherModel& teacher, const BottleneckModel<float>& stage1,
                             const ImageDataset& data, const Stage2Config& config);

/// Maximizes the continuous likelihood of f(x) + u under the prior with
/// everything else frozen.
void refit_prior(FactorizedPrior<float>& prior, const Mlp<float>& encoder, const MatrixF& data,
                 int epochs, Index batch_size, double learning_rate, std::uint64_t seed);

struct SplitHead {
  Mlp<float> encoder;
  CdfTable table;
  int support = 32;
};

struct SplitTail {
  CdfTable table;
  Mlp<float> decoder;
  Mlp<float> classifier;
  Index latent_dim() const { return decoder.input_dim(); }
};

struct SplitModel {
  SplitHead head;
  SplitTail tail;
};

/// Freezes a trained student into head and tail halves sharing one table.
SplitModel assemble_split(const Student& student);

struct HeadOutput {
  QuantizedLatent latent;  // column-major: latent_dim entries per image
  Bitstream bits;
};

/// Quantizes and entropy-codes every column of x into one stream.
HeadOutput head_infer(const SplitHead& head, const MatrixF& x);

struct TailOutput {
  std::vector<int> labels;
  MatrixF logits;
};

/// Logits for already-decoded latents (latent_dim x images).
TailOutput tail_from_latent(const SplitTail& tail, std::span<const std::int32_t> latent);
TailOutput tail_infer(const SplitTail& tail, const Bitstream& bits);

/// The same network run in one process without the coder in between.
TailOutput monolithic_predict(const SplitModel& split, const MatrixF& x);

/// Writes head.ckpt, tail.ckpt and prior.cdf into `dir`.
void save_split(const std::filesystem::path& dir, const SplitModel& split);
SplitModel load_split(const std::filesystem::path& dir);
SplitHead load_head(const std::filesystem::path& dir);
SplitTail load_tail(const std::filesystem::path& dir);

}  // namespace hecsb
