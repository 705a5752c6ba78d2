// SPDX-License-Identifier: Apache-2.0
// Command-line driver: experiments, training and the split-inference pair.
#include "hecsb/bottleneck.hpp"
#include "hecsb/config.hpp"
#include "hecsb/dataset.hpp"
#include "hecsb/experiments.hpp"
#include "hecsb/runtime.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <cstdio>
#include <iostream>
#include <thread>

namespace {

using namespace hecsb;

struct Common {
  std::string config;
  std::uint64_t seed = 0;
  std::string out = "out";
  std::string dataset = "data/mnist";
  bool quiet = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "key=value settings file");
  cmd->add_option("--seed", c.seed, "base seed (overrides the config)");
  cmd->add_option("--out", c.out, "output directory");
  cmd->add_option("--dataset", c.dataset, "directory with MNIST IDX files");
  cmd->add_flag("--quiet", c.quiet, "no progress on stderr");
}

Config load_config(const Common& c) {
  Config cfg = c.config.empty() ? Config() : Config::load(c.config);
  if (c.seed) cfg.set("seed", std::to_string(c.seed));
  return cfg;
}

Logger logger(const Common& c) {
  if (c.quiet) return {};
  return [](const std::string& msg) { std::cerr << msg << '\n'; };
}

std::filesystem::path out_dir(const Common& c) {
  std::filesystem::create_directories(c.out);
  return c.out;
}

TeacherModel teacher_for(const Common& c, const Config& cfg, const RdConfig& rd, const ImageDataset& train,
                         const ImageDataset& test, const Logger& log) {
  const std::string path = cfg.get("teacher.checkpoint", "");
  if (!path.empty()) return load_teacher(path);
  if (log) log("training teacher");
  auto teacher = train_teacher(train, test, rd.teacher);
  save_teacher(out_dir(c) / "teacher.ckpt", teacher);
  return teacher;
}

volatile std::sig_atomic_t g_stop = 0;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Split-computing bottleneck experiments"};
  app.require_subcommand(1);
  Common common;

  auto* recon = app.add_subcommand("recon", "reconstruction error versus measurement count");
  auto* rd = app.add_subcommand("rd", "payload and accuracy across rate weights");
  auto* latency = app.add_subcommand("latency", "transfer and total time per link profile");
  auto* teach = app.add_subcommand("train-teacher", "train and save the teacher classifier");
  auto* bottleneck = app.add_subcommand("train-bottleneck", "train a split model for one rate weight");
  auto* serve = app.add_subcommand("serve", "serve a tail model over TCP");
  auto* infer = app.add_subcommand("infer", "classify test images through a remote tail");
  for (auto* cmd : {recon, rd, latency, teach, bottleneck, serve, infer}) add_common(cmd, common);

  std::string model_dir;
  std::string host = "127.0.0.1";
  std::uint16_t port = 5555;
  std::string link_name = "4G";
  int count = 10;
  std::string baselines;
  latency->add_option("--model", model_dir, "split model directory (trained on the fly if empty)");
  latency->add_option("--baselines", baselines, "CSV of codec,bytes for analytic rows");
  serve->add_option("--model", model_dir, "split model directory")->required();
  serve->add_option("--host", host);
  serve->add_option("--port", port);
  infer->add_option("--model", model_dir, "split model directory")->required();
  infer->add_option("--host", host);
  infer->add_option("--port", port);
  infer->add_option("--link", link_name, "link profile name");
  infer->add_option("--count", count, "number of test images");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    const Config cfg = load_config(common);
    const Logger log = logger(common);

    if (*recon) {
      const auto config = recon_config_from(cfg);
      const auto train = load_mnist(common.dataset, "train");
      const auto test = load_mnist(common.dataset, "t10k");
      run_recon_experiment(train, test, config, out_dir(common), log);
    } else if (*rd) {
      const auto config = rd_config_from(cfg);
      const auto train = load_mnist(common.dataset, "train");
      const auto test = load_mnist(common.dataset, "t10k");
      RdResult result;
      result.teacher = teacher_for(common, cfg, config, train, test, log);
      result.teacher_top1 = top1(argmax_columns(result.teacher.logits(test.images)), test.labels);
      result.points = run_rd_sweep(result.teacher, train, test, config, log);
      write_rd_csv(out_dir(common) / "rd.csv", result, cfg.get_u64("seed", 0));
    } else if (*teach) {
      const auto config = rd_config_from(cfg);
      const auto train = load_mnist(common.dataset, "train");
      const auto test = load_mnist(common.dataset, "t10k");
      const auto teacher = train_teacher(train, test, config.teacher);
      save_teacher(out_dir(common) / "teacher.ckpt", teacher);
      std::cout << "teacher top1 " << top1(argmax_columns(teacher.logits(test.images)), test.labels) << '\n';
    } else if (*bottleneck) {
      auto config = rd_config_from(cfg);
      const auto train = load_mnist(common.dataset, "train");
      const auto test = load_mnist(common.dataset, "t10k");
      const auto teacher = teacher_for(common, cfg, config, train, test, log);
      config.betas = {config.bottleneck.beta};
      auto points = run_rd_sweep(teacher, train, test, config, log);
      auto& p = points.front();
      if (!p.ok) throw TrainingError(p.failure);
      save_split(out_dir(common) / "split", p.split);
      std::cout << "beta " << p.beta << " bytes " << p.bytes << " top1 " << p.top1 << '\n';
    } else if (*latency) {
      auto config = latency_config_from(cfg);
      if (!baselines.empty()) config.baseline_csv = baselines;
      const auto train = load_mnist(common.dataset, "train");
      const auto test = load_mnist(common.dataset, "t10k");
      auto rdc = rd_config_from(cfg);
      const auto teacher = teacher_for(common, cfg, rdc, train, test, log);
      SplitModel split;
      if (!model_dir.empty()) {
        split = load_split(model_dir);
      } else {
        rdc.betas = {rdc.bottleneck.beta};
        auto points = run_rd_sweep(teacher, train, test, rdc, log);
        if (!points.front().ok) throw TrainingError(points.front().failure);
        split = std::move(points.front().split);
      }
      const auto rows = run_latency_experiment(split, teacher, test, config, log);
      write_latency_csv(out_dir(common) / "latency.csv", rows);
    } else if (*serve) {
      auto tail = std::make_shared<const SplitTail>(load_tail(model_dir));
      TailServer server(tail, host, port);
      std::signal(SIGINT, [](int) { g_stop = 1; });
      std::signal(SIGTERM, [](int) { g_stop = 1; });
      std::cout << "listening on " << host << ':' << server.port() << std::endl;
      while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
      server.stop();
    } else if (*infer) {
      const auto links = links_from_config(cfg.values());
      const auto it = std::find_if(links.begin(), links.end(), [&](const LinkProfile& l) { return l.name == link_name; });
      if (it == links.end()) throw ArgumentError("unknown link profile " + link_name);
      const auto head = load_head(model_dir);
      const auto test = load_mnist(common.dataset, "t10k");
      if (count < 1 || count > test.size()) throw ArgumentError("--count out of range");
      RemoteClient client(host, port);
      client.handshake(head.table);
      std::cout << "index,label,predicted,transfer_ms,total_ms,payload_bytes\n";
      for (Index i = 0; i < count; ++i) {
        const auto r = infer_remote(client, head, test.images.col(i), *it);
        std::cout << i << ',' << test.labels[static_cast<std::size_t>(i)] << ',' << r.labels.front() << ','
                  << r.timing.transfer_ms << ',' << r.timing.total_ms << ',' << r.timing.payload_bytes << '\n';
      }
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.kind() << ": " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
