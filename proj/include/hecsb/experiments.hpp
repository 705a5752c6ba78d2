// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "hecsb/bottleneck.hpp"
#include "hecsb/config.hpp"
#include "hecsb/dataset.hpp"
#include "hecsb/hecsa.hpp"
#include "hecsb/runtime.hpp"
#include "hecsb/vae.hpp"

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace hecsb {

/// Progress messages for long runs; may be empty.
using Logger = std::function<void(const std::string&)>;

struct ReconConfig {
  std::vector<std::string> methods = {"lasso", "vae", "hecsa"};
  std::vector<Index> measurements = {2, 5, 10, 25, 50, 100};
  Index test_images = 200;
  Index validation_images = 100;  // taken from the end of the training split
  Index train_images = 0;         // 0 uses the whole training split
  double noise_std = 0.1;
  std::vector<double> lambdas = {1e-4, 3.1622776601683795e-4, 1e-3, 3.1622776601683795e-3,
                                 1e-2, 3.1622776601683795e-2, 1e-1};
  IstaOptions ista;
  HecsaConfig hecsa;
  VaeConfig vae;
  LatentSearchOptions search;
  std::uint64_t seed = 1;
};

/// Applies `recon.*`, `hecsa.*`, `vae.*` and `seed` keys on top of the defaults.
ReconConfig recon_config_from(const Config& cfg);

struct ReconRow {
  std::string method;
  Index m = 0;
  std::vector<double> errors;  // per test image
  double mean = 0.0;
  double std = 0.0;
  double seconds = 0.0;
  double lambda = 0.0;  // LASSO only
};

/// Runs every (method, m) pair, sorted by method then m. Each finished row
/// is appended to `<out>/recon.csv` (`method,m,mean_error,std_error,seconds`)
/// and `<out>/recon_images.csv` (`method,m,image_index,error` plus `mean` and
/// `std` summary rows). A failure marks both files and rethrows.
std::vector<ReconRow> run_recon_experiment(const ImageDataset& train, const ImageDataset& test,
                                           const ReconConfig& config,
                                           const std::filesystem::path& out, const Logger& log = {});

/// Mean and population standard deviation.
std::pair<double, double> mean_std(std::span<const double> values);

struct RdConfig {
  std::vector<double> betas = {0.001, 0.01, 0.1};
  TeacherConfig teacher;
  BottleneckConfig bottleneck;
  Stage2Config stage2;
};

RdConfig rd_config_from(const Config& cfg);

struct RdPoint {
  double beta = 0.0;
  double bytes = 0.0;  // mean per-image bitstream payload
  double top1 = 0.0;
  bool ok = true;
  std::string failure;
  SplitModel split;
};

struct RdResult {
  TeacherModel teacher;
  double teacher_top1 = 0.0;
  std::vector<RdPoint> points;
};

/// Mean serialized bitstream size when each column of x is coded on its own.
double mean_payload_bytes(const SplitHead& head, const MatrixF& x);

/// Trains one split model per beta against `teacher` and evaluates it on the
/// test split. Divergence is recorded on the point and the sweep continues.
std::vector<RdPoint> run_rd_sweep(const TeacherModel& teacher, const ImageDataset& train,
                                  const ImageDataset& test, const RdConfig& config,
                                  const Logger& log = {});

/// `beta,bytes,top1`; failed points appear as `# beta=<b> failed: ...`.
void write_rd_csv(const std::filesystem::path& path, const RdResult& result, std::uint64_t seed);

struct BaselinePayload {
  std::string codec;
  double bytes = 0.0;
};

/// CSV with header `codec,bytes`.
std::vector<BaselinePayload> load_baseline_payloads(const std::filesystem::path& path);

struct LatencyConfig {
  std::vector<LinkProfile> links = default_links();
  Index images = 100;
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;  // 0: spawn a server on an ephemeral port
  std::filesystem::path baseline_csv;
};

LatencyConfig latency_config_from(const Config& cfg);

struct LatencyRow {
  std::string link;
  std::string codec;
  double transfer_ms = 0.0;
  double total_ms = 0.0;
  double payload_bytes = 0.0;
  bool measured = true;
};

double median(std::vector<double> values);

/// Median transfer and total time per link for the split model ("hecs-b")
/// and for uncompressed float32 features ("raw-float32"), then analytic
/// rows for each baseline payload. Spawns a loopback server when
/// `config.port` is 0.
std::vector<LatencyRow> run_latency_experiment(const SplitModel& split, const TeacherModel& teacher,
                                               const ImageDataset& test, const LatencyConfig& config,
                                               const Logger& log = {});

void write_latency_csv(const std::filesystem::path& path, std::span<const LatencyRow> rows);

}  // namespace hecsb
