// SPDX-License-Identifier: Apache-2.0
// End-to-end acceptance run on MNIST. Prints one PASS/FAIL line per
// criterion and exits nonzero if any fails.
#include "fd.hpp"
#include "hecsb/bottleneck.hpp"
#include "hecsb/experiments.hpp"
#include "hecsb/hecsa.hpp"
#include "hecsb/runtime.hpp"
#include "hecsb/sensing.hpp"
#include "hecsb/vae.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

namespace {

using namespace hecsb;
using Clock = std::chrono::steady_clock;

struct Verdict {
  bool pass = false;
  std::string detail;
};

double minutes_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count() / 60.0;
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s.precision(digits);
  s << v;
  return s.str();
}

void progress(const std::string& msg) { std::cerr << "[acceptance] " << msg << std::endl; }

struct Data {
  ImageDataset train;
  ImageDataset test;
};

std::optional<Data> load_data(const std::string& dir) {
  try {
    return Data{load_mnist(dir, "train"), load_mnist(dir, "t10k")};
  } catch (const Error& e) {
    progress(std::string("dataset unavailable: ") + e.what());
    return std::nullopt;
  }
}

// ---- 1 and 2: reconstruction curves ------------------------------------

struct ReconOutcome {
  std::map<std::string, std::map<Index, double>> mean;  // method -> m -> error
  double minutes = 0.0;
  std::string failure;
};

ReconOutcome run_recon(const Data& data, const std::filesystem::path& out) {
  ReconOutcome r;
  const auto start = Clock::now();
  try {
    const ReconConfig config;
    const auto rows = run_recon_experiment(data.train, data.test, config, out / "recon", progress);
    for (const auto& row : rows) r.mean[row.method][row.m] = row.mean;
  } catch (const Error& e) {
    r.failure = e.what();
  }
  r.minutes = minutes_since(start);
  return r;
}

Verdict ordering(const ReconOutcome& r) {
  if (!r.failure.empty()) return {false, "recon failed: " + r.failure};
  bool ok = r.minutes <= 30.0;
  std::string detail;
  for (const Index m : ReconConfig{}.measurements) {
    const double h = r.mean.at("hecsa").at(m), v = r.mean.at("vae").at(m), l = r.mean.at("lasso").at(m);
    const bool good = h < v && v < l;
    ok = ok && good;
    detail += " m=" + std::to_string(m) + (good ? " ok" : " BAD") + "(" + fmt(h, 3) + "<" + fmt(v, 3) + "<" +
              fmt(l, 3) + ")";
  }
  return {ok, "hecsa<vae<lasso:" + detail + "; " + fmt(r.minutes, 3) + " min (limit 30)"};
}

Verdict magnitudes(const ReconOutcome& r) {
  if (!r.failure.empty()) return {false, "recon failed: " + r.failure};
  struct Target {
    const char* method;
    Index m;
    double centre;
  };
  const Target targets[] = {{"lasso", 100, 0.12}, {"hecsa", 25, 0.08}, {"hecsa", 50, 0.05}};
  bool ok = true;
  std::string detail;
  for (const auto& t : targets) {
    const double v = r.mean.at(t.method).at(t.m);
    const bool good = std::abs(v - t.centre) <= 0.05;
    ok = ok && good;
    detail += std::string(" ") + t.method + "@" + std::to_string(t.m) + "=" + fmt(v, 3) + " (want " +
              fmt(t.centre, 2) + "+-0.05)" + (good ? "" : " BAD");
  }
  return {ok, detail.substr(1)};
}

// ---- 3 and 4: distillation and compression ----------------------------

struct RdOutcome {
  RdResult result;
  double minutes = 0.0;
  std::string failure;
};

RdOutcome run_rd(const Data& data) {
  RdOutcome o;
  const auto start = Clock::now();
  try {
    const RdConfig config;
    progress("training teacher");
    o.result.teacher = train_teacher(data.train, data.test, config.teacher);
    o.result.teacher_top1 = top1(argmax_columns(o.result.teacher.logits(data.test.images)), data.test.labels);
    o.result.points = run_rd_sweep(o.result.teacher, data.train, data.test, config, progress);
  } catch (const Error& e) {
    o.failure = e.what();
  }
  o.minutes = minutes_since(start);
  return o;
}

Verdict accuracy(const RdOutcome& o) {
  if (!o.failure.empty()) return {false, "rd sweep failed: " + o.failure};
  const double teacher = o.result.teacher_top1;
  bool ok = teacher >= 0.95 && o.minutes <= 20.0 && !o.result.points.empty();
  std::string detail = "teacher " + fmt(teacher) + ";";
  for (const auto& p : o.result.points) {
    const bool good = p.ok && p.top1 >= teacher - 0.02;
    ok = ok && good;
    detail += " beta=" + fmt(p.beta) + " top1 " + (p.ok ? fmt(p.top1) : "failed: " + p.failure) + (good ? "" : " BAD");
  }
  return {ok, detail + "; " + fmt(o.minutes, 3) + " min (limit 20)"};
}

Verdict compression(const RdOutcome& o) {
  if (!o.failure.empty()) return {false, "rd sweep failed: " + o.failure};
  const double raw = static_cast<double>(o.result.teacher.feature_dim()) * 4.0;
  bool ok = !o.result.points.empty();
  std::string detail = "raw features " + fmt(raw) + " B;";
  for (std::size_t i = 0; i < o.result.points.size(); ++i) {
    const auto& p = o.result.points[i];
    const bool accurate = p.ok && p.top1 >= o.result.teacher_top1 - 0.02;
    const bool small = p.bytes <= 0.25 * raw;
    const bool monotone = i == 0 || p.bytes <= o.result.points[i - 1].bytes;
    ok = ok && accurate && small && monotone;
    detail += " beta=" + fmt(p.beta) + " " + fmt(p.bytes) + " B (" + fmt(100.0 * p.bytes / raw, 3) +
              "%)" + (accurate && small && monotone ? "" : " BAD");
  }
  return {ok, detail};
}

// ---- 5: codec --------------------------------------------------------

CdfTable random_table(Rng& rng) {
  std::uniform_int_distribution<int> dims(1, 6), width(2, 65), lo(-32, 5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  CdfTable t;
  for (int d = dims(rng); d > 0; --d) {
    std::vector<double> pmf(static_cast<std::size_t>(width(rng)));
    const bool peaked = u(rng) < 0.3;
    for (auto& p : pmf) p = peaked ? std::pow(u(rng), 8.0) : u(rng);
    t.dimensions.push_back(cdf_from_pmf(pmf, lo(rng)));
  }
  return t;
}

std::vector<std::int32_t> random_symbols(const CdfTable& t, std::size_t n, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::int32_t> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& cdf = t.dimensions[i % t.dims()];
    if (u(rng) < 0.5) {
      const auto target = static_cast<std::uint32_t>(u(rng) * 65536.0);
      const auto it = std::upper_bound(cdf.cumulative.begin(), cdf.cumulative.end(), target);
      out[i] = cdf.min_symbol + static_cast<std::int32_t>(it - cdf.cumulative.begin() - 1);
    } else {
      out[i] = std::uniform_int_distribution<std::int32_t>(cdf.min_symbol, cdf.max_symbol())(rng);
    }
  }
  return out;
}

// Sum of ceil(-log2 p) from the table's integer frequencies.
double oracle_bits(const std::vector<std::int32_t>& symbols, const CdfTable& table) {
  double bits = 0.0;
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    const auto& cdf = table.dimensions[i % table.dims()];
    const auto k = static_cast<std::size_t>(symbols[i] - cdf.min_symbol);
    bits += std::ceil(-std::log2(static_cast<double>(cdf.cumulative[k + 1] - cdf.cumulative[k]) / 65536.0));
  }
  return bits;
}

Verdict codec() {
  Rng rng(5150);
  int lossy = 0;
  std::uniform_int_distribution<std::size_t> len(0, 1000);
  for (int trial = 0; trial < 10000; ++trial) {
    const auto table = random_table(rng);
    const auto v = random_symbols(table, len(rng), rng);
    const auto wire = serialize(encode(v, table));
    if (decode(parse_bitstream(wire), table, static_cast<std::uint32_t>(v.size())) != v) ++lossy;
  }
  int over = 0;
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto table = random_table(rng);
    const auto v = random_symbols(table, 1000, rng);
    const double bound = 1.02 * oracle_bits(v, table) + 64.0;
    const double got = static_cast<double>(encode(v, table).bit_length);
    worst = std::max(worst, got / bound);
    if (got > bound) ++over;
  }
  return {lossy == 0 && over == 0, std::to_string(lossy) + "/10000 lossy round trips, " + std::to_string(over) +
                                       "/1000 streams over 1.02*ideal+64 (largest length/bound " + fmt(worst) + ")"};
}

// ---- 6: split equivalence and frame integrity --------------------------

Verdict equivalence(const Data& data, const SplitModel& split) {
  TailServer server(std::make_shared<const SplitTail>(split.tail), "127.0.0.1", 0);
  RemoteClient client("127.0.0.1", server.port());
  client.handshake(split.head.table);
  const LinkProfile loopback{"loopback", 0.0, 0.0};
  int mismatched = 0;
  const Index images = 200;
  for (Index i = 0; i < images; ++i) {
    const MatrixF x = data.test.images.col(i);
    const auto local = tail_infer(split.tail, head_infer(split.head, x).bits);
    const auto remote = infer_remote(client, split.head, x, loopback);
    if (remote.labels != local.labels || remote.logits != local.logits) ++mismatched;
  }
  // Batched request against per-image local inference.
  const MatrixF batch = data.test.images.leftCols(images);
  const auto remote_batch = infer_remote(client, split.head, batch, loopback);
  const auto local_batch = monolithic_predict(split, batch);
  const bool batch_equal = remote_batch.logits == local_batch.logits;

  Rng rng(606);
  int silent = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Index first = std::uniform_int_distribution<Index>(0, data.test.size() - 4)(rng);
    const MatrixF x = data.test.images.middleCols(first, 1 + trial % 4);
    SplitFrame f;
    f.codec = Codec::entropy;
    f.shape = {static_cast<std::uint32_t>(x.cols()), static_cast<std::uint32_t>(split.head.encoder.output_dim())};
    f.payload = serialize(head_infer(split.head, x).bits);
    auto bytes = frame_encode(f);
    const std::size_t bit = std::uniform_int_distribution<std::size_t>(0, bytes.size() * 8 - 1)(rng);
    bytes[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
    try {
      frame_decode(bytes);
      ++silent;
    } catch (const ProtocolError&) {
    }
  }
  server.stop();
  return {mismatched == 0 && batch_equal && silent == 0,
          std::to_string(mismatched) + "/200 remote predictions differ from local, batched logits " +
              (batch_equal ? "identical" : "DIFFER") + ", " + std::to_string(silent) +
              "/1000 corrupted frames decoded silently"};
}

// ---- 7: pacing and the transfer ordering ------------------------------

Verdict latency(const Data& data, const SplitModel& split, const TeacherModel& teacher,
                const std::filesystem::path& baselines) {
  const auto start = Clock::now();
  TailServer server(std::make_shared<const SplitTail>(split.tail), "127.0.0.1", 0);
  RemoteClient client("127.0.0.1", server.port());
  client.handshake(split.head.table);

  bool ok = true;
  double worst = 0.0;
  for (const Index images : {4, 8, 16, 32}) {  // 4 KiB to 32 KiB of float32 features
    const MatrixF h = teacher.features(data.test.images.leftCols(images));
    for (const auto& link : default_links()) {
      for (int rep = 0; rep < 5; ++rep) {
        const auto r = infer_raw(client, h, link);
        const double model = latency_model(r.timing.payload_bytes, link);
        const double dev = std::abs(r.timing.transfer_ms - model) / model;
        worst = std::max(worst, dev);
        ok = ok && r.timing.payload_bytes >= 4096 && dev <= 0.10;
      }
    }
  }

  const LinkProfile g4 = default_links().front();
  std::vector<double> transfer;
  for (Index i = 0; i < 100; ++i)
    transfer.push_back(infer_remote(client, split.head, data.test.images.col(i), g4).timing.transfer_ms);
  server.stop();

  std::vector<std::pair<std::string, double>> rows = {{"HECS-B", median(transfer)}};
  for (const auto& b : load_baseline_payloads(baselines))
    rows.emplace_back(b.codec, latency_model(static_cast<std::uint64_t>(std::llround(b.bytes)), g4));
  const std::vector<std::string> expected = {"HECS-B", "SVB", "CR+BQ", "Neural Compression", "WebP", "PNG"};
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.second < b.second; });
  std::vector<std::string> order;
  std::string shown;
  for (const auto& [name, ms] : rows) {
    order.push_back(name);
    shown += (shown.empty() ? "" : " < ") + name + " " + fmt(ms) + "ms";
  }
  bool strict = true;
  for (std::size_t i = 1; i < rows.size(); ++i) strict = strict && rows[i - 1].second < rows[i].second;
  const double minutes = minutes_since(start);
  ok = ok && order == expected && strict && minutes <= 5.0;
  return {ok, "worst pacing deviation " + fmt(100.0 * worst, 3) + "% over 60 paced transfers; 4G order: " + shown +
                  "; " + fmt(minutes, 3) + " min (limit 5)"};
}

// ---- 8: gradients and ISTA ---------------------------------------------

using testing::random_matrix;

struct GradientReport {
  int checks = 0;
  int failed = 0;
  double worst = 0.0;
  int oversized = 0;
  void add(std::vector<Parameter<double>>& params, double err) {
    ++checks;
    if (testing::parameter_count(params) > 20) ++oversized;
    worst = std::max(worst, err);
    if (!(err < 1e-4)) ++failed;
  }
};

Verdict numerics(const std::optional<Data>& data) {
  GradientReport g;
  Rng rng(8080);
  for (int trial = 0; trial < 20; ++trial) {
    // Mlp parameters: 2 -> 3 -> 2 relu net, 17 parameters.
    auto net = Mlp<double>::make({2, 3, 2}, Activation::relu, Activation::identity, rng);
    for (auto& l : net.layers()) l.bias = random_matrix(l.bias.size(), 1, rng, 0.5);
    const MatrixD x = random_matrix(2, 3, rng), c = random_matrix(2, 3, rng);
    auto params = net.parameters("net");
    net.forward(x);
    const auto grads = net.backward(c).gradients.flatten();
    g.add(params, testing::fd_relative_error(params, grads, [&] { return net.predict(x).cwiseProduct(c).sum(); }));

    // Mlp input gradient.
    MatrixD xin = random_matrix(2, 3, rng);
    net.forward(xin);
    const MatrixD gin = net.backward(c).input_gradient;
    std::vector<Parameter<double>> inputs{make_parameter("x", xin)};
    g.add(inputs, testing::fd_relative_error(inputs, {gin}, [&] { return net.predict(xin).cwiseProduct(c).sum(); }));

    // Distillation loss over logits.
    MatrixD s = random_matrix(4, 3, rng, 2.0);
    const MatrixD t = random_matrix(4, 3, rng, 2.0);
    std::uniform_int_distribution<int> lab(0, 3);
    const std::vector<int> labels = {lab(rng), lab(rng), lab(rng)};
    const double alpha = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const double tau = std::uniform_real_distribution<double>(0.5, 5.0)(rng);
    std::vector<Parameter<double>> logits{make_parameter("logits", s)};
    const auto kd = kd_loss_batch<double>(s, t, labels, alpha, tau);
    g.add(logits, testing::fd_relative_error(logits, {kd.gradient},
                                             [&] { return kd_loss_batch<double>(s, t, labels, alpha, tau).value; }));

    // Sensing autoencoder: W (1x3) plus a 1 -> 2 -> 3 relu decoder, 16 parameters.
    HecsaModel<double> hm;
    hm.measurement = random_matrix(1, 3, rng);
    hm.decoder = Mlp<double>({{random_matrix(2, 1, rng), random_matrix(2, 1, rng), Activation::relu},
                              {random_matrix(3, 2, rng), random_matrix(3, 1, rng), Activation::identity}});
    hm.noise_std = 0.1;
    const MatrixD hb = random_matrix(3, 5, rng), hn = random_matrix(1, 5, rng);
    auto hp = hm.parameters();
    const auto hl = hecsa_loss_with_noise(hm, hb, hn);
    g.add(hp, testing::fd_relative_error(hp, hl.flatten(), [&] { return hecsa_loss_with_noise(hm, hb, hn).value; },
                                         1e-5));

    // Negative ELBO: 2 -> 2 encoder, 1 -> 2 decoder, 10 parameters.
    auto enc = Mlp<double>::make({2, 2}, Activation::relu, Activation::identity, rng);
    auto dec = Mlp<double>::make({1, 2}, Activation::relu, Activation::identity, rng);
    for (auto& l : enc.layers()) l.bias = random_matrix(l.bias.size(), 1, rng, 0.3);
    const MatrixD vx = random_matrix(2, 3, rng), eps = random_matrix(1, 3, rng);
    auto vp = enc.parameters("encoder");
    for (auto& p : dec.parameters("decoder")) vp.push_back(p);
    const auto vl = vae_loss_with_noise(enc, dec, vx, eps, 0.5);
    g.add(vp, testing::fd_relative_error(vp, vl.flatten(),
                                         [&] { return vae_loss_with_noise(enc, dec, vx, eps, 0.5).value; }, 1e-5));

    // Latent search objective over z (2 x 3).
    auto gen = Mlp<double>::make({2, 4, 3}, Activation::relu, Activation::identity, rng);
    const MatrixD w = random_matrix(2, 3, rng), target = random_matrix(2, 3, rng);
    MatrixD z = random_matrix(2, 3, rng);
    const double penalty = 0.1 * (trial % 3);
    std::vector<Parameter<double>> zp{make_parameter("z", z)};
    const auto lo = latent_objective(gen, w, target, z, penalty);
    g.add(zp, testing::fd_relative_error(
                  zp, {lo.d_latent}, [&] { return latent_objective(gen, w, target, z, penalty).value.sum(); }, 1e-5));

    // Prior rate over latents, locations and log scales: 12 parameters.
    FactorizedPrior<double> prior(3, 32);
    prior.location = random_matrix(3, 1, rng);
    prior.log_scale = random_matrix(3, 1, rng, 0.5);
    MatrixD pz = random_matrix(3, 2, rng, 2.0);
    const auto rate = continuous_rate(prior, pz);
    std::vector<Parameter<double>> pp = {make_parameter("z", pz), make_parameter("location", prior.location),
                                         make_parameter("log_scale", prior.log_scale)};
    g.add(pp, testing::fd_relative_error(pp, {rate.d_latent, rate.d_location, rate.d_log_scale},
                                         [&] { return continuous_rate(prior, pz).nats; }, 1e-5));

    // Rate-distortion loss: 10 parameters.
    BottleneckModel<double> bm;
    bm.encoder = Mlp<double>::make({3, 1}, Activation::relu, Activation::identity, rng);
    bm.decoder = Mlp<double>::make({1, 2}, Activation::relu, Activation::identity, rng);
    bm.encoder.layers()[0].bias = random_matrix(1, 1, rng);
    bm.decoder.layers()[0].bias = random_matrix(2, 1, rng);
    bm.prior = FactorizedPrior<double>(1, 32);
    bm.prior.location = random_matrix(1, 1, rng, 0.5);
    bm.prior.log_scale = random_matrix(1, 1, rng, 0.3);
    bm.beta = 0.05 + 0.1 * trial;
    const MatrixD bx = random_matrix(3, 4, rng), bh = random_matrix(2, 4, rng);
    const MatrixD bu = uniform_noise<double>(1, 4, rng);
    auto bp = bm.parameters();
    const auto rd = rd_loss_with_noise(bm, bx, bh, bu);
    g.add(bp, testing::fd_relative_error(bp, rd.flatten(), [&] { return rd_loss_with_noise(bm, bx, bh, bu).value; },
                                         1e-5));
  }

  // ISTA traces: random problems plus real measurements at every m.
  int runs = 0, increases = 0;
  auto check_traces = [&](const IstaResult<double>& res) {
    for (const auto& trace : res.objective) {
      ++runs;
      for (std::size_t i = 1; i < trace.size(); ++i)
        if (trace[i] > trace[i - 1]) {
          ++increases;
          break;
        }
    }
  };
  for (int trial = 0; trial < 20; ++trial) {
    MeasurementOperator<double> op;
    op.weights = random_matrix(10, 40, rng, 1.0 / std::sqrt(10.0));
    IstaOptions opts;
    opts.lambda = 0.005 * (trial + 1);
    try {
      check_traces(ista_lasso(op, random_matrix(10, 5, rng), opts));
    } catch (const StateError&) {
      ++runs;
      ++increases;
    }
  }
  if (data) {
    for (const Index m : ReconConfig{}.measurements) {
      auto op = gaussian_operator<double>(m, data->test.pixels(), 100 + static_cast<std::uint64_t>(m));
      op.noise_std = 0.1;
      const MatrixD x = data->test.images.leftCols(20).cast<double>();
      const MatrixD y = measure(op, x, rng);
      IstaOptions opts;
      opts.lambda = 1e-3;
      try {
        check_traces(ista_lasso(op, y, opts));
      } catch (const StateError&) {
        ++runs;
        ++increases;
      }
    }
  }
  return {g.failed == 0 && g.oversized == 0 && increases == 0,
          std::to_string(g.checks - g.failed) + "/" + std::to_string(g.checks) +
              " finite-difference checks under 1e-4 (worst " + fmt(g.worst, 3) + "), " + std::to_string(g.oversized) +
              " over 20 parameters; ISTA objective increased on " + std::to_string(increases) + "/" +
              std::to_string(runs) + " runs"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"End-to-end acceptance checks"};
  std::string dataset = "data/mnist";
  std::string out = "acceptance_out";
  std::string baselines = "data/baseline_payloads_4g.csv";
  std::vector<int> only;
  app.add_option("--dataset", dataset, "directory with MNIST IDX files");
  app.add_option("--out", out, "directory for experiment CSVs");
  app.add_option("--baselines", baselines, "4G baseline payload CSV");
  app.add_option("--only", only, "criteria to run (default: all)")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  const std::set<int> wanted = only.empty() ? std::set<int>{1, 2, 3, 4, 5, 6, 7, 8}
                                            : std::set<int>(only.begin(), only.end());
  const auto want = [&](std::initializer_list<int> ids) {
    return std::any_of(ids.begin(), ids.end(), [&](int id) { return wanted.count(id) != 0; });
  };
  std::filesystem::create_directories(out);

  std::map<int, Verdict> verdicts;
  const Verdict no_data{false, "MNIST not found in " + dataset + " (run scripts/fetch_mnist.sh)"};
  const auto data = want({1, 2, 3, 4, 6, 7, 8}) ? load_data(dataset) : std::nullopt;

  if (want({5})) {
    progress("criterion 5");
    verdicts[5] = codec();
  }
  if (want({8})) {
    progress("criterion 8");
    verdicts[8] = numerics(data);
  }
  if (want({3, 4, 6, 7})) {
    if (!data) {
      for (int id : {3, 4, 6, 7}) verdicts[id] = no_data;
    } else {
      progress("criteria 3 and 4");
      const auto rd = run_rd(*data);
      verdicts[3] = accuracy(rd);
      verdicts[4] = compression(rd);
      // The runtime checks use the middle rate weight.
      const RdPoint* point = nullptr;
      for (const auto& p : rd.result.points)
        if (p.ok && (!point || std::abs(p.beta - 0.01) < std::abs(point->beta - 0.01))) point = &p;
      for (int id : {6, 7}) {
        if (!want({id})) continue;
        progress("criterion " + std::to_string(id));
        if (!point) {
          verdicts[id] = {false, "no trained split model"};
          continue;
        }
        try {
          verdicts[id] = id == 6 ? equivalence(*data, point->split)
                                 : latency(*data, point->split, rd.result.teacher, baselines);
        } catch (const Error& e) {
          verdicts[id] = {false, std::string(e.kind()) + ": " + e.what()};
        }
      }
    }
  }
  if (want({1, 2})) {
    if (!data) {
      verdicts[1] = verdicts[2] = no_data;
    } else {
      progress("criteria 1 and 2");
      const auto recon = run_recon(*data, out);
      verdicts[1] = ordering(recon);
      verdicts[2] = magnitudes(recon);
    }
  }

  bool all = true;
  for (int id = 1; id <= 8; ++id) {
    if (!wanted.count(id)) continue;
    const auto& v = verdicts[id];
    all = all && v.pass;
    std::cout << "criterion " << id << ": " << (v.pass ? "PASS" : "FAIL") << " - " << v.detail << std::endl;
  }
  return all ? 0 : 1;
}
