// SPDX-License-Identifier: Apache-2.0
#include "hecsb/bottleneck.hpp"

#include "hecsb/checkpoint.hpp"

#include <cmath>

namespace hecsb {
namespace {

MatrixF batch_of(const MatrixF& data, const std::vector<Index>& order, Index start, Index count) {
  return gather_columns(data, std::span<const Index>(order).subspan(static_cast<std::size_t>(start),
                                                                    static_cast<std::size_t>(count)));
}

std::vector<int> labels_of(const ImageDataset& data, const std::vector<Index>& order, Index start,
                           Index count) {
  std::vector<int> out(static_cast<std::size_t>(count));
  for (Index i = 0; i < count; ++i)
    out[static_cast<std::size_t>(i)] = data.labels[static_cast<std::size_t>(order[static_cast<std::size_t>(start + i)])];
  return out;
}

std::vector<Index> widths(Index in, const std::vector<Index>& hidden, Index out) {
  std::vector<Index> w{in};
  w.insert(w.end(), hidden.begin(), hidden.end());
  w.push_back(out);
  return w;
}

template <typename T>
void append(std::vector<T>& a, std::vector<T> b) {
  a.insert(a.end(), std::make_move_iterator(b.begin()), std::make_move_iterator(b.end()));
}

MatrixF latent_matrix(std::span<const std::int32_t> latent, Index dims) {
  if (dims <= 0 || latent.size() % static_cast<std::size_t>(dims) != 0)
    throw DecodeError("latent of " + std::to_string(latent.size()) +
                      " symbols is not a whole number of " + std::to_string(dims) + "-vectors");
  MatrixF z(dims, static_cast<Index>(latent.size()) / dims);
  for (std::size_t i = 0; i < latent.size(); ++i) z.data()[i] = static_cast<float>(latent[i]);
  return z;
}

}  // namespace

double top1(std::span<const int> predicted, std::span<const int> labels) {
  if (predicted.size() != labels.size()) throw ArgumentError("top1: prediction/label count mismatch");
  if (predicted.empty()) throw ArgumentError("top1: no predictions");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hit += predicted[i] == labels[i];
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

TeacherModel train_teacher(const ImageDataset& train, const ImageDataset& test,
                           const TeacherConfig& config) {
  if (!train.labeled() || !test.labeled()) throw ArgumentError("train_teacher needs labeled data");
  Rng rng(config.seed);
  auto w = widths(train.pixels(), config.tail_hidden, 10);
  w.insert(w.begin() + 1, config.feature_dim);
  auto net = Mlp<float>::make(w, Activation::relu, Activation::identity, rng);
  AdamState<float> adam;
  adam.learning_rate = config.learning_rate;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto order = shuffled_indices(train.size(), rng);
    for (Index start = 0; start < train.size(); start += config.batch_size) {
      const Index b = std::min(config.batch_size, train.size() - start);
      const MatrixF x = batch_of(train.images, order, start, b);
      const auto y = labels_of(train, order, start, b);
      const MatrixF logits = net.forward(x);
      const auto loss = kd_loss_batch<float>(logits, logits, y, 0.0, 1.0);
      if (!std::isfinite(loss.value))
        throw TrainingError("train_teacher: non-finite loss at epoch " + std::to_string(epoch));
      const auto grads = net.backward(loss.gradient).gradients.flatten();
      auto params = net.parameters("teacher");
      adam_step<float>(params, grads, adam);
    }
  }
  net.clear_cache();

  TeacherModel teacher;
  const auto& layers = net.layers();
  teacher.front = Mlp<float>({layers.front()});
  teacher.tail = Mlp<float>(std::vector<DenseLayer<float>>(layers.begin() + 1, layers.end()));
  const double acc = top1(argmax_columns(teacher.logits(test.images)), test.labels);
  if (acc < config.accuracy_gate)
    throw TrainingError("teacher top-1 " + std::to_string(acc) + " below gate " +
                        std::to_string(config.accuracy_gate));
  return teacher;
}

void save_teacher(const std::filesystem::path& path, const TeacherModel& teacher) {
  std::vector<TensorRecord> recs;
  append_mlp(recs, "front", teacher.front);
  append_mlp(recs, "tail", teacher.tail);
  save_checkpoint(path, recs);
}

TeacherModel load_teacher(const std::filesystem::path& path) {
  const auto recs = load_checkpoint(path);
  TeacherModel t{mlp_from_records(recs, "front"), mlp_from_records(recs, "tail")};
  if (t.front.output_dim() != t.tail.input_dim())
    throw DecodeError("teacher checkpoint: front and tail do not chain");
  return t;
}

QuantizedLatent quantize(const MatrixF& z, int support) {
  QuantizedLatent out(static_cast<std::size_t>(z.size()));
  for (Index i = 0; i < z.size(); ++i) {
    const float v = z.data()[i];
    if (!std::isfinite(v)) throw RangeError("quantize: non-finite latent");
    // nearbyint honours the default round-to-nearest-even mode.
    const float r = std::nearbyint(v);
    if (std::fabs(r) > static_cast<float>(support))
      throw RangeError("quantize: latent " + std::to_string(v) + " outside support +-" +
                       std::to_string(support));
    out[static_cast<std::size_t>(i)] = static_cast<std::int32_t>(r);
  }
  return out;
}

Stage1Result train_bottleneck_stage1(const TeacherModel& teacher, const MatrixF& data,
                                     const BottleneckConfig& config) {
  if (data.rows() != teacher.input_dim())
    throw DimensionError("stage 1: data rows do not match teacher input");
  if (config.beta < 0) throw ArgumentError("stage 1: beta must be non-negative");
  Rng rng(config.seed);
  Stage1Result out;
  auto& model = out.model;
  model.beta = config.beta;
  const Index d = config.latent_dim;
  model.encoder = Mlp<float>::make(widths(data.rows(), config.encoder_hidden, d), Activation::relu,
                                   Activation::identity, rng);
  model.decoder = Mlp<float>::make(widths(d, config.decoder_hidden, teacher.feature_dim()),
                                   Activation::relu, Activation::identity, rng);
  model.prior = FactorizedPrior<float>(d, config.support);
  AdamState<float> adam;
  adam.learning_rate = config.learning_rate;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto order = shuffled_indices(data.cols(), rng);
    EpochStats stats;
    for (Index start = 0; start < data.cols(); start += config.batch_size) {
      const Index b = std::min(config.batch_size, data.cols() - start);
      const MatrixF x = batch_of(data, order, start, b);
      const MatrixF h = teacher.features(x);
      const auto loss = rd_loss(model, x, h, rng);
      const auto grads = loss.flatten();
      auto params = model.parameters();
      adam_step<float>(params, grads, adam);
      const auto wb = static_cast<double>(b);
      stats.loss += loss.value * wb;
      stats.distortion += loss.distortion * wb;
      stats.rate += loss.rate * wb;
    }
    const auto n = static_cast<double>(data.cols());
    out.log.push_back({stats.loss / n, stats.distortion / n, stats.rate / n});
  }
  model.encoder.clear_cache();
  model.decoder.clear_cache();
  return out;
}

Stage2Result finetune_stage2(const TeacherModel& teacher, const BottleneckModel<float>& stage1,
                             const ImageDataset& data, const Stage2Config& config) {
  if (!data.labeled()) throw ArgumentError("stage 2 needs labeled data");
  check_kd_args(config.alpha, config.tau);
  Rng rng(config.seed);
  Stage2Result out;
  auto& st = out.student;
  st.bottleneck = stage1;
  st.tail = teacher.tail;
  auto& enc = st.bottleneck.encoder;
  auto& dec = st.bottleneck.decoder;
  AdamState<float> adam;
  adam.learning_rate = config.learning_rate;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto order = shuffled_indices(data.size(), rng);
    double total = 0.0;
    for (Index start = 0; start < data.size(); start += config.batch_size) {
      const Index b = std::min(config.batch_size, data.size() - start);
      const MatrixF x = batch_of(data.images, order, start, b);
      const auto y = labels_of(data, order, start, b);
      const MatrixF z = enc.forward(x) + uniform_noise<float>(enc.output_dim(), b, rng);
      const MatrixF logits = st.tail.forward(dec.forward(z));
      const auto loss = kd_loss_batch<float>(logits, teacher.logits(x), y, config.alpha, config.tau);
      if (!std::isfinite(loss.value))
        throw TrainingError("stage 2: non-finite loss at epoch " + std::to_string(epoch));
      total += loss.value * static_cast<double>(b);

      auto tail_back = st.tail.backward(loss.gradient);
      auto dec_back = dec.backward(tail_back.input_gradient);
      auto enc_back = enc.backward(dec_back.input_gradient);
      auto grads = enc_back.gradients.flatten();
      append(grads, dec_back.gradients.flatten());
      append(grads, tail_back.gradients.flatten());
      auto params = enc.parameters("encoder");
      append(params, dec.parameters("decoder"));
      append(params, st.tail.parameters("tail"));
      adam_step<float>(params, grads, adam);
    }
    out.loss.push_back(total / static_cast<double>(data.size()));
  }
  enc.clear_cache();
  dec.clear_cache();
  st.tail.clear_cache();
  if (config.prior_epochs > 0)
    refit_prior(st.bottleneck.prior, enc, data.images, config.prior_epochs, config.batch_size, 1e-2,
                config.seed + 1);
  return out;
}

void refit_prior(FactorizedPrior<float>& prior, const Mlp<float>& encoder, const MatrixF& data,
                 int epochs, Index batch_size, double learning_rate, std::uint64_t seed) {
  Rng rng(seed);
  const MatrixF latent = encoder.predict(data);
  AdamState<float> adam;
  adam.learning_rate = learning_rate;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    const auto order = shuffled_indices(latent.cols(), rng);
    for (Index start = 0; start < latent.cols(); start += batch_size) {
      const Index b = std::min(batch_size, latent.cols() - start);
      MatrixF z = batch_of(latent, order, start, b);
      z += uniform_noise<float>(z.rows(), b, rng);
      const auto rate = continuous_rate(prior, z);
      const float inv = 1.0f / static_cast<float>(b);
      std::vector<Parameter<float>> params{make_parameter("prior.location", prior.location),
                                           make_parameter("prior.log_scale", prior.log_scale)};
      const std::vector<MatrixF> grads{rate.d_location * inv, rate.d_log_scale * inv};
      adam_step<float>(params, grads, adam);
    }
  }
}

SplitModel assemble_split(const Student& student) {
  SplitModel split;
  split.head.encoder = student.bottleneck.encoder;
  split.head.support = student.bottleneck.prior.support;
  split.head.table = build_cdf(student.bottleneck.prior);
  split.tail.table = split.head.table;
  split.tail.decoder = student.bottleneck.decoder;
  split.tail.classifier = student.tail;
  return split;
}

HeadOutput head_infer(const SplitHead& head, const MatrixF& x) {
  if (x.rows() != head.encoder.input_dim())
    throw DimensionError("head_infer: input has " + std::to_string(x.rows()) + " rows, expected " +
                         std::to_string(head.encoder.input_dim()));
  if (x.cols() == 0) throw ArgumentError("head_infer: no input columns");
  HeadOutput out;
  out.latent = quantize(head.encoder.predict_each(x), head.support);
  out.bits = encode(out.latent, head.table);
  return out;
}

TailOutput tail_from_latent(const SplitTail& tail, std::span<const std::int32_t> latent) {
  const MatrixF z = latent_matrix(latent, tail.latent_dim());
  TailOutput out;
  out.logits = tail.classifier.predict_each(tail.decoder.predict_each(z));
  out.labels = argmax_columns(out.logits);
  return out;
}

TailOutput tail_infer(const SplitTail& tail, const Bitstream& bits) {
  const auto latent = decode(bits, tail.table, bits.symbol_count);
  return tail_from_latent(tail, latent);
}

TailOutput monolithic_predict(const SplitModel& split, const MatrixF& x) {
  const auto latent = quantize(split.head.encoder.predict_each(x), split.head.support);
  return tail_from_latent(split.tail, latent);
}

void save_split(const std::filesystem::path& dir, const SplitModel& split) {
  if (!(split.head.table == split.tail.table))
    throw StateError("save_split: head and tail tables differ");
  std::filesystem::create_directories(dir);
  std::vector<TensorRecord> head;
  head.push_back({"support", {1}, {static_cast<float>(split.head.support)}});
  append_mlp(head, "encoder", split.head.encoder);
  save_checkpoint(dir / "head.ckpt", head);
  std::vector<TensorRecord> tail;
  append_mlp(tail, "decoder", split.tail.decoder);
  append_mlp(tail, "classifier", split.tail.classifier);
  save_checkpoint(dir / "tail.ckpt", tail);
  save_cdf_table(dir / "prior.cdf", split.head.table);
}

SplitHead load_head(const std::filesystem::path& dir) {
  const auto recs = load_checkpoint(dir / "head.ckpt");
  SplitHead head;
  head.support = static_cast<int>(find_record(recs, "support").data.at(0));
  head.encoder = mlp_from_records(recs, "encoder");
  head.table = load_cdf_table(dir / "prior.cdf");
  if (static_cast<Index>(head.table.dims()) != head.encoder.output_dim())
    throw DecodeError("head: prior table width does not match the encoder");
  return head;
}

SplitTail load_tail(const std::filesystem::path& dir) {
  const auto recs = load_checkpoint(dir / "tail.ckpt");
  SplitTail tail;
  tail.decoder = mlp_from_records(recs, "decoder");
  tail.classifier = mlp_from_records(recs, "classifier");
  tail.table = load_cdf_table(dir / "prior.cdf");
  if (static_cast<Index>(tail.table.dims()) != tail.latent_dim())
    throw DecodeError("tail: prior table width does not match the decoder");
  return tail;
}

SplitModel load_split(const std::filesystem::path& dir) { return {load_head(dir), load_tail(dir)}; }

}  // namespace hecsb
