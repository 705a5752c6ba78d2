// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "hecsb/bottleneck.hpp"
#include "hecsb/frame.hpp"

#include <atomic>
#include <chrono>
#include <cstdint>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace hecsb {

struct LinkProfile {
  std::string name;
  double rate_bps = 0.0;  // <= 0 disables pacing
  double rtt_ms = 0.0;

  bool throttled() const { return rate_bps > 0; }
};

/// 4G 12.0 Mbps, Wi-Fi 54.0 Mbps, 5G 66.9 Mbps, all with zero rtt.
std::vector<LinkProfile> default_links();

/// Reads `link.<name>.rate_bps` and `link.<name>.rtt_ms` entries; a name that
/// only sets rtt keeps its default rate. Profiles keep first-seen order.
std::vector<LinkProfile> links_from_config(const std::map<std::string, std::string>& kv);

/// Serialization delay plus round trip: bytes * 8 / rate * 1000 + rtt.
double latency_model(std::uint64_t payload_bytes, const LinkProfile& link);

struct TimingReport {
  double head_ms = 0.0;
  double transfer_ms = 0.0;  // paced upload plus the link's round-trip delay
  double tail_ms = 0.0;      // server decode and compute, reply delivery
  double total_ms = 0.0;
  std::uint64_t payload_bytes = 0;
};

/// Tail half served over TCP. One thread per connection; every frame gets
/// exactly one reply, in order. Malformed input is answered with error
/// frames and the stream is resynchronized on the next frame magic.
class TailServer {
 public:
  /// Binds and listens immediately; port 0 picks a free port. Throws
  /// TransportError when the address cannot be bound.
  TailServer(std::shared_ptr<const SplitTail> tail, const std::string& host, std::uint16_t port);
  ~TailServer();
  TailServer(const TailServer&) = delete;
  TailServer& operator=(const TailServer&) = delete;

  std::uint16_t port() const { return port_; }
  /// Checksum announced in handshakes.
  std::uint32_t model_checksum() const { return checksum_; }
  std::uint64_t frames_served() const { return served_.load(); }

  /// Stops accepting, closes live connections and joins all threads.
  void stop();

  /// Reply to one decoded frame; exposed for in-process testing.
  SplitFrame handle(const SplitFrame& request) const;

 private:
  void accept_loop();
  void serve_connection(int fd);

  std::shared_ptr<const SplitTail> tail_;
  std::uint32_t checksum_ = 0;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> stopping_{false};
  std::atomic<std::uint64_t> served_{0};
  std::thread acceptor_;
  std::mutex mutex_;
  std::list<std::thread> workers_;
  std::vector<int> client_fds_;
};

/// Checksum of the serialized prior table; head and tail must agree on it.
std::uint32_t table_checksum(const CdfTable& table);

/// Synchronous client for one connection.
class RemoteClient {
 public:
  RemoteClient(const std::string& host, std::uint16_t port,
               std::chrono::milliseconds timeout = std::chrono::milliseconds(10000));
  ~RemoteClient();
  RemoteClient(const RemoteClient&) = delete;
  RemoteClient& operator=(const RemoteClient&) = delete;

  /// Exchanges table checksums; throws HandshakeError on mismatch.
  void handshake(const CdfTable& table);

  /// Sends raw bytes unpaced (for tests that need malformed input).
  void send_bytes(std::span<const std::uint8_t> bytes);
  SplitFrame receive();

  struct Exchange {
    SplitFrame reply;
    double transfer_ms = 0.0;
    double wait_ms = 0.0;  // from end of upload to reply in hand
  };
  /// Sends one frame paced at link rate with rtt/2 delay each direction.
  Exchange request(const SplitFrame& frame, const LinkProfile& link);

 private:
  int fd_ = -1;
  std::vector<std::uint8_t> buffer_;
};

struct RemoteResult {
  std::vector<int> labels;
  MatrixF logits;
  TimingReport timing;
};

/// Head inference locally, tail inference on the server.
RemoteResult infer_remote(RemoteClient& client, const SplitHead& head, const MatrixF& x,
                          const LinkProfile& link);

/// Ships uncompressed float32 features (feature_dim x images) instead.
RemoteResult infer_raw(RemoteClient& client, const MatrixF& features, const LinkProfile& link);

/// Raises the typed error carried by an error frame, or DecodeError if the
/// reply is not a logits frame of the expected column count.
MatrixF logits_from_reply(const SplitFrame& reply, Index expected_cols);

/// Busy-waits the tail of a sleep so that pacing holds below scheduler
/// granularity.
void sleep_until(std::chrono::steady_clock::time_point deadline);

}  // namespace hecsb
