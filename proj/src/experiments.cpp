// SPDX-License-Identifier: Apache-2.0
#include "hecsb/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace hecsb {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void note(const Logger& log, const std::string& msg) {
  if (log) log(msg);
}

std::ofstream open_csv(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << std::setprecision(9);
  return out;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::vector<Index> to_index(const std::vector<double>& v) {
  std::vector<Index> out;
  for (double d : v) {
    if (d <= 0 || d != std::floor(d)) throw ArgumentError("expected positive integers in list");
    out.push_back(static_cast<Index>(d));
  }
  return out;
}

// Measurement noise depends only on (seed, m), so every method sees the
// same draws for the same signals.
std::uint64_t noise_seed(std::uint64_t seed, Index m, std::uint64_t stream) {
  return seed * 1000003ull + static_cast<std::uint64_t>(m) * 131ull + stream;
}

}  // namespace

std::pair<double, double> mean_std(std::span<const double> values) {
  if (values.empty()) throw ArgumentError("mean_std: no values");
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / static_cast<double>(values.size()))};
}

double median(std::vector<double> values) {
  if (values.empty()) throw ArgumentError("median: no values");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

ReconConfig recon_config_from(const Config& cfg) {
  ReconConfig c;
  c.seed = cfg.get_u64("seed", c.seed);
  if (cfg.has("recon.methods")) c.methods = split_list(cfg.get("recon.methods", ""));
  if (cfg.has("recon.m")) c.measurements = to_index(cfg.get_list("recon.m", {}));
  c.test_images = cfg.get_int("recon.test_images", c.test_images);
  c.validation_images = cfg.get_int("recon.validation_images", c.validation_images);
  c.train_images = cfg.get_int("recon.train_images", c.train_images);
  c.noise_std = cfg.get_double("recon.noise_std", c.noise_std);
  c.lambdas = cfg.get_list("recon.lambdas", c.lambdas);
  c.ista.max_iterations = static_cast<int>(cfg.get_int("recon.ista_iterations", c.ista.max_iterations));
  c.hecsa.epochs = static_cast<int>(cfg.get_int("hecsa.epochs", c.hecsa.epochs));
  c.hecsa.batch_size = cfg.get_int("hecsa.batch_size", c.hecsa.batch_size);
  c.hecsa.frobenius_bound = cfg.get_double("hecsa.frobenius_bound", c.hecsa.frobenius_bound);
  c.hecsa.learning_rate = cfg.get_double("hecsa.learning_rate", c.hecsa.learning_rate);
  c.hecsa.input_gain = cfg.get_double("hecsa.input_gain", c.hecsa.input_gain);
  c.vae.epochs = static_cast<int>(cfg.get_int("vae.epochs", c.vae.epochs));
  c.vae.latent_dim = cfg.get_int("vae.latent_dim", c.vae.latent_dim);
  c.search.steps = static_cast<int>(cfg.get_int("vae.search_steps", c.search.steps));
  c.search.restarts = static_cast<int>(cfg.get_int("vae.restarts", c.search.restarts));
  c.search.latent_penalty = cfg.get_double("vae.latent_penalty", c.search.latent_penalty);
  for (const auto& m : c.methods)
    if (m != "lasso" && m != "vae" && m != "hecsa") throw ArgumentError("unknown recon method: " + m);
  if (c.test_images <= 0 || c.validation_images <= 0) throw ArgumentError("recon image counts must be positive");
  return c;
}

std::vector<ReconRow> run_recon_experiment(const ImageDataset& train, const ImageDataset& test,
                                           const ReconConfig& config,
                                           const std::filesystem::path& out, const Logger& log) {
  if (test.size() < config.test_images) throw ArgumentError("recon: test split too small");
  if (train.size() <= config.validation_images) throw ArgumentError("recon: training split too small");
  const Index n = train.pixels();
  const ImageDataset validation =
      train.slice(train.size() - config.validation_images, config.validation_images);
  const Index fit_count = config.train_images > 0
                              ? std::min(config.train_images, train.size() - config.validation_images)
                              : train.size() - config.validation_images;
  const MatrixF fit = train.images.leftCols(fit_count);
  const MatrixF x = test.images.leftCols(config.test_images);

  auto summary = open_csv(out / "recon.csv");
  auto images = open_csv(out / "recon_images.csv");
  std::ostringstream header;
  header << "# seed=" << config.seed << " test_images=" << config.test_images
         << " noise_std=" << config.noise_std << " hecsa_seed=" << config.hecsa.seed
         << " vae_seed=" << config.vae.seed << " search_seed=" << config.search.seed << '\n';
  summary << header.str() << "method,m,mean_error,std_error,seconds\n" << std::flush;
  images << header.str() << "method,m,image_index,error\n" << std::flush;

  std::vector<std::string> methods = config.methods;
  std::sort(methods.begin(), methods.end());
  std::vector<Index> ms = config.measurements;
  std::sort(ms.begin(), ms.end());

  std::vector<ReconRow> rows;
  std::string current = "setup";
  try {
    VaeModel vae;
    if (std::count(methods.begin(), methods.end(), "vae")) {
      current = "vae training";
      note(log, "training VAE generator");
      const auto t0 = Clock::now();
      vae = train_vae(fit, config.vae).model;
      const double s = seconds_since(t0);
      summary << "# vae_training_seconds=" << s << '\n' << std::flush;
    }
    for (const auto& method : methods) {
      for (Index m : ms) {
        current = method + " m=" + std::to_string(m);
        note(log, current);
        ReconRow row;
        row.method = method;
        row.m = m;
        const auto t0 = Clock::now();
        auto op = gaussian_operator<float>(m, n, config.seed * 7919ull + static_cast<std::uint64_t>(m));
        op.noise_std = static_cast<float>(config.noise_std);
        MatrixF estimate;
        if (method == "hecsa") {
          HecsaConfig hc = config.hecsa;
          hc.measurements = m;
          hc.noise_std = config.noise_std;
          const auto trained = train_hecsa(fit, hc);
          Rng rng(noise_seed(config.seed, m, 0));
          estimate = hecsa_reconstruct(trained.model, measure(measurement_operator(trained.model), x, rng));
        } else if (method == "lasso") {
          // Pick lambda on the validation images, then solve the test images.
          Rng vrng(noise_seed(config.seed, m, 1));
          const MatrixF yv = measure(op, validation.images, vrng);
          double best = std::numeric_limits<double>::infinity();
          for (double lambda : config.lambdas) {
            IstaOptions opts = config.ista;
            opts.lambda = lambda;
            const MatrixF xv = clamp_unit<float>(ista_lasso(op, yv, opts).estimate);
            double err = 0.0;
            for (Index c = 0; c < xv.cols(); ++c) err += recon_error(validation.images.col(c), xv.col(c));
            if (err < best) {
              best = err;
              row.lambda = lambda;
            }
          }
          IstaOptions opts = config.ista;
          opts.lambda = row.lambda;
          Rng rng(noise_seed(config.seed, m, 0));
          estimate = clamp_unit<float>(ista_lasso(op, measure(op, x, rng), opts).estimate);
        } else {
          Rng rng(noise_seed(config.seed, m, 0));
          estimate = vae_reconstruct(vae, op, measure(op, x, rng), config.search).reconstruction;
        }
        row.seconds = seconds_since(t0);
        for (Index c = 0; c < x.cols(); ++c) row.errors.push_back(recon_error(x.col(c), estimate.col(c)));
        std::tie(row.mean, row.std) = mean_std(row.errors);

        summary << method << ',' << m << ',' << row.mean << ',' << row.std << ',' << row.seconds << '\n';
        if (method == "lasso") summary << "# lasso m=" << m << " lambda=" << row.lambda << '\n';
        summary << std::flush;
        for (std::size_t i = 0; i < row.errors.size(); ++i)
          images << method << ',' << m << ',' << i << ',' << row.errors[i] << '\n';
        images << method << ',' << m << ",mean," << row.mean << '\n'
               << method << ',' << m << ",std," << row.std << '\n'
               << std::flush;
        note(log, "  mean error " + std::to_string(row.mean));
        rows.push_back(std::move(row));
      }
    }
  } catch (const std::exception& e) {
    summary << "# FAILED at " << current << ": " << e.what() << '\n';
    images << "# FAILED at " << current << ": " << e.what() << '\n';
    throw;
  }
  return rows;
}

RdConfig rd_config_from(const Config& cfg) {
  RdConfig c;
  const auto seed = cfg.get_u64("seed", 0);
  if (seed) {
    c.teacher.seed = seed + 10;
    c.bottleneck.seed = seed + 20;
    c.stage2.seed = seed + 30;
  }
  c.betas = cfg.get_list("rd.betas", c.betas);
  c.teacher.epochs = static_cast<int>(cfg.get_int("teacher.epochs", c.teacher.epochs));
  c.teacher.feature_dim = cfg.get_int("teacher.feature_dim", c.teacher.feature_dim);
  c.bottleneck.latent_dim = cfg.get_int("bottleneck.latent_dim", c.bottleneck.latent_dim);
  c.bottleneck.epochs = static_cast<int>(cfg.get_int("bottleneck.epochs", c.bottleneck.epochs));
  c.bottleneck.support = static_cast<int>(cfg.get_int("bottleneck.support", c.bottleneck.support));
  c.bottleneck.beta = cfg.get_double("bottleneck.beta", c.bottleneck.beta);
  c.stage2.alpha = cfg.get_double("stage2.alpha", c.stage2.alpha);
  c.stage2.tau = cfg.get_double("stage2.tau", c.stage2.tau);
  c.stage2.epochs = static_cast<int>(cfg.get_int("stage2.epochs", c.stage2.epochs));
  c.stage2.prior_epochs = static_cast<int>(cfg.get_int("stage2.prior_epochs", c.stage2.prior_epochs));
  return c;
}

double mean_payload_bytes(const SplitHead& head, const MatrixF& x) {
  if (x.cols() == 0) throw ArgumentError("mean_payload_bytes: no images");
  double total = 0.0;
  for (Index c = 0; c < x.cols(); ++c) total += static_cast<double>(serialize(head_infer(head, x.col(c)).bits).size());
  return total / static_cast<double>(x.cols());
}

std::vector<RdPoint> run_rd_sweep(const TeacherModel& teacher, const ImageDataset& train,
                                  const ImageDataset& test, const RdConfig& config, const Logger& log) {
  std::vector<RdPoint> points;
  for (double beta : config.betas) {
    RdPoint p;
    p.beta = beta;
    try {
      BottleneckConfig bc = config.bottleneck;
      bc.beta = beta;
      note(log, "beta " + std::to_string(beta) + ": stage 1");
      const auto s1 = train_bottleneck_stage1(teacher, train.images, bc);
      note(log, "beta " + std::to_string(beta) + ": stage 2");
      const auto s2 = finetune_stage2(teacher, s1.model, train, config.stage2);
      p.split = assemble_split(s2.student);
      p.top1 = top1(monolithic_predict(p.split, test.images).labels, test.labels);
      p.bytes = mean_payload_bytes(p.split.head, test.images);
      note(log, "  bytes " + std::to_string(p.bytes) + " top1 " + std::to_string(p.top1));
    } catch (const Error& e) {
      p.ok = false;
      p.failure = std::string(e.kind()) + ": " + e.what();
      note(log, "  failed: " + p.failure);
    }
    points.push_back(std::move(p));
  }
  return points;
}

void write_rd_csv(const std::filesystem::path& path, const RdResult& result, std::uint64_t seed) {
  auto out = open_csv(path);
  out << "# seed=" << seed << " teacher_top1=" << result.teacher_top1 << '\n' << "beta,bytes,top1\n";
  for (const auto& p : result.points) {
    if (p.ok)
      out << p.beta << ',' << p.bytes << ',' << p.top1 << '\n';
    else
      out << "# beta=" << p.beta << " failed: " << p.failure << '\n';
  }
}

std::vector<BaselinePayload> load_baseline_payloads(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open baseline payloads " + path.string());
  std::vector<BaselinePayload> out;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    if (header) {
      if (line != "codec,bytes") throw IngestError(path.string() + ": expected header codec,bytes");
      header = false;
      continue;
    }
    const auto comma = line.rfind(',');
    if (comma == std::string::npos) throw IngestError(path.string() + ": malformed row: " + line);
    BaselinePayload b;
    b.codec = line.substr(0, comma);
    try {
      b.bytes = std::stod(line.substr(comma + 1));
    } catch (const std::exception&) {
      throw IngestError(path.string() + ": bad byte count in row: " + line);
    }
    if (!(b.bytes >= 0)) throw IngestError(path.string() + ": negative byte count in row: " + line);
    out.push_back(b);
  }
  if (header) throw IngestError(path.string() + ": empty file");
  return out;
}

LatencyConfig latency_config_from(const Config& cfg) {
  LatencyConfig c;
  c.links = links_from_config(cfg.values());
  c.images = cfg.get_int("latency.images", c.images);
  c.host = cfg.get("latency.host", c.host);
  c.port = static_cast<std::uint16_t>(cfg.get_int("latency.port", c.port));
  c.baseline_csv = cfg.get("latency.baselines", "");
  if (c.images < 1) throw ArgumentError("latency.images must be positive");
  return c;
}

std::vector<LatencyRow> run_latency_experiment(const SplitModel& split, const TeacherModel& teacher,
                                               const ImageDataset& test, const LatencyConfig& config,
                                               const Logger& log) {
  if (test.size() < config.images) throw ArgumentError("latency: not enough test images");
  std::unique_ptr<TailServer> server;
  std::uint16_t port = config.port;
  if (port == 0) {
    server = std::make_unique<TailServer>(std::make_shared<const SplitTail>(split.tail), config.host, 0);
    port = server->port();
  }
  RemoteClient client(config.host, port);
  client.handshake(split.head.table);

  std::vector<LatencyRow> rows;
  for (const auto& link : config.links) {
    note(log, "link " + link.name);
    std::vector<double> transfer, total, bytes;
    std::vector<double> raw_transfer, raw_total, raw_bytes;
    for (Index i = 0; i < config.images; ++i) {
      const MatrixF x = test.images.col(i);
      const auto r = infer_remote(client, split.head, x, link);
      transfer.push_back(r.timing.transfer_ms);
      total.push_back(r.timing.total_ms);
      bytes.push_back(static_cast<double>(r.timing.payload_bytes));
      const auto head_start = Clock::now();
      const MatrixF h = teacher.features(x);
      const double head_ms = std::chrono::duration<double, std::milli>(Clock::now() - head_start).count();
      const auto raw = infer_raw(client, h, link);
      raw_transfer.push_back(raw.timing.transfer_ms);
      raw_total.push_back(raw.timing.total_ms + head_ms);
      raw_bytes.push_back(static_cast<double>(raw.timing.payload_bytes));
    }
    rows.push_back({link.name, "hecs-b", median(transfer), median(total), median(bytes), true});
    rows.push_back({link.name, "raw-float32", median(raw_transfer), median(raw_total), median(raw_bytes), true});
  }
  if (!config.baseline_csv.empty()) {
    for (const auto& b : load_baseline_payloads(config.baseline_csv)) {
      for (const auto& link : config.links) {
        const double t = latency_model(static_cast<std::uint64_t>(std::llround(b.bytes)), link);
        rows.push_back({link.name, b.codec, t, t, b.bytes, false});
      }
    }
  }
  if (server) server->stop();
  return rows;
}

void write_latency_csv(const std::filesystem::path& path, std::span<const LatencyRow> rows) {
  auto out = open_csv(path);
  out << "# hecs-b and raw-float32 rows are measured; other codecs are analytic with total = transfer\n";
  out << "link,codec,transfer_ms,total_ms,payload_bytes\n";
  for (const auto& r : rows) {
    if (!r.measured) continue;
    out << r.link << ',' << r.codec << ',' << r.transfer_ms << ',' << r.total_ms << ',' << r.payload_bytes << '\n';
  }
  for (const auto& r : rows) {
    if (r.measured) continue;
    out << r.link << ',' << r.codec << ',' << r.transfer_ms << ',' << r.total_ms << ',' << r.payload_bytes << '\n';
  }
}

}  // namespace hecsb
