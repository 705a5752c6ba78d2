// SPDX-License-Identifier: Apache-2.0
#include "hecsb/runtime.hpp"

#include "hecsb/byte_io.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>

namespace hecsb {
namespace {

using Clock = std::chrono::steady_clock;

double ms_between(Clock::time_point a, Clock::time_point b) {
  return std::chrono::duration<double, std::milli>(b - a).count();
}

std::string errno_text() { return std::strerror(errno); }

sockaddr_in make_address(const std::string& host, std::uint16_t port) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  const std::string h = host == "localhost" ? "127.0.0.1" : host;
  if (inet_pton(AF_INET, h.c_str(), &addr.sin_addr) != 1)
    throw TransportError("not an IPv4 address: " + host);
  return addr;
}

void set_nodelay(int fd) {
  int one = 1;
  setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

/// false once the peer has gone away.
bool send_all(int fd, std::span<const std::uint8_t> bytes) {
  std::size_t sent = 0;
  while (sent < bytes.size()) {
    const ssize_t n = ::send(fd, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    sent += static_cast<std::size_t>(n);
  }
  return true;
}

/// Appends what the socket has; 0 on orderly close, -1 on error.
ssize_t recv_some(int fd, std::vector<std::uint8_t>& buf) {
  std::uint8_t tmp[65536];
  for (;;) {
    const ssize_t n = ::recv(fd, tmp, sizeof tmp, 0);
    if (n < 0 && errno == EINTR) continue;
    if (n > 0) buf.insert(buf.end(), tmp, tmp + n);
    return n;
  }
}

bool starts_with_magic(const std::vector<std::uint8_t>& buf) {
  return std::equal(std::begin(kFrameMagic), std::end(kFrameMagic), buf.begin(),
                    [](char a, std::uint8_t b) { return static_cast<std::uint8_t>(a) == b; });
}

/// Drops bytes up to the next possible frame start.
void skip_to_magic(std::vector<std::uint8_t>& buf) {
  const std::uint8_t m[4] = {'H', 'S', 'B', '1'};
  auto it = std::search(buf.begin() + 1, buf.end(), std::begin(m), std::end(m));
  if (it == buf.end()) {
    // Keep a tail that could be the start of a split magic.
    const std::size_t keep = std::min<std::size_t>(3, buf.size() - 1);
    it = buf.end() - static_cast<std::ptrdiff_t>(keep);
  }
  buf.erase(buf.begin(), it);
}

SplitFrame logits_frame(const MatrixF& logits) {
  SplitFrame f;
  f.codec = Codec::raw_float32;
  f.shape = {static_cast<std::uint32_t>(logits.cols()), static_cast<std::uint32_t>(logits.rows())};
  f.payload = pack_floats(std::span<const float>(logits.data(), static_cast<std::size_t>(logits.size())));
  return f;
}

[[noreturn]] void rethrow_remote(const std::string& text) {
  const auto colon = text.find(": ");
  const std::string kind = colon == std::string::npos ? "" : text.substr(0, colon);
  const std::string msg = "server: " + (colon == std::string::npos ? text : text.substr(colon + 2));
  if (kind == "decode") throw DecodeError(msg);
  if (kind == "dimension") throw DimensionError(msg);
  if (kind == "range") throw RangeError(msg);
  if (kind == "handshake") throw HandshakeError(msg);
  if (kind == "protocol") throw DecodeError(msg);
  throw TransportError(msg);
}

}  // namespace

std::vector<LinkProfile> default_links() {
  return {{"4G", 12.0e6, 0.0}, {"Wi-Fi", 54.0e6, 0.0}, {"5G", 66.9e6, 0.0}};
}

std::vector<LinkProfile> links_from_config(const std::map<std::string, std::string>& kv) {
  std::vector<LinkProfile> links = default_links();
  auto find = [&](const std::string& name) -> LinkProfile& {
    for (auto& l : links)
      if (l.name == name) return l;
    links.push_back({name, 0.0, 0.0});
    return links.back();
  };
  for (const auto& [key, value] : kv) {
    if (key.rfind("link.", 0) != 0) continue;
    const auto dot = key.rfind('.');
    if (dot <= 5) throw ArgumentError("malformed link key: " + key);
    const std::string name = key.substr(5, dot - 5);
    const std::string field = key.substr(dot + 1);
    double v = 0.0;
    try {
      std::size_t used = 0;
      v = std::stod(value, &used);
      if (used != value.size()) throw std::invalid_argument(value);
    } catch (const std::exception&) {
      throw ArgumentError("link value for " + key + " is not a number: " + value);
    }
    if (field == "rate_bps") {
      if (!(v > 0)) throw ArgumentError(key + " must be positive");
      find(name).rate_bps = v;
    } else if (field == "rtt_ms") {
      if (v < 0) throw ArgumentError(key + " must be non-negative");
      find(name).rtt_ms = v;
    } else {
      throw ArgumentError("unknown link field: " + key);
    }
  }
  for (const auto& l : links)
    if (!(l.rate_bps > 0)) throw ArgumentError("link " + l.name + " has no rate_bps");
  return links;
}

double latency_model(std::uint64_t payload_bytes, const LinkProfile& link) {
  if (!(link.rate_bps > 0) || link.rtt_ms < 0) throw ArgumentError("invalid link profile " + link.name);
  return static_cast<double>(payload_bytes) * 8.0 / link.rate_bps * 1000.0 + link.rtt_ms;
}

void sleep_until(Clock::time_point deadline) {
  constexpr auto slack = std::chrono::microseconds(1500);
  const auto now = Clock::now();
  if (deadline - now > slack) std::this_thread::sleep_for(deadline - now - slack);
  while (Clock::now() < deadline) {
  }
}

std::uint32_t table_checksum(const CdfTable& table) { return crc32_of(serialize(table)); }

TailServer::TailServer(std::shared_ptr<const SplitTail> tail, const std::string& host,
                       std::uint16_t port)
    : tail_(std::move(tail)) {
  if (!tail_) throw ArgumentError("TailServer needs a model");
  checksum_ = table_checksum(tail_->table);
  const sockaddr_in addr = make_address(host, port);
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw TransportError("socket: " + errno_text());
  int one = 1;
  setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  if (::bind(listen_fd_, reinterpret_cast<const sockaddr*>(&addr), sizeof addr) != 0 ||
      ::listen(listen_fd_, 64) != 0) {
    const std::string why = errno_text();
    ::close(listen_fd_);
    throw TransportError("cannot listen on " + host + ":" + std::to_string(port) + ": " + why);
  }
  sockaddr_in bound{};
  socklen_t len = sizeof bound;
  getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&bound), &len);
  port_ = ntohs(bound.sin_port);
  acceptor_ = std::thread([this] { accept_loop(); });
}

TailServer::~TailServer() { stop(); }

void TailServer::stop() {
  if (stopping_.exchange(true)) return;
  if (acceptor_.joinable()) acceptor_.join();
  ::close(listen_fd_);
  std::list<std::thread> workers;
  {
    std::lock_guard lock(mutex_);
    for (int fd : client_fds_) ::shutdown(fd, SHUT_RDWR);
    workers.swap(workers_);
  }
  for (auto& t : workers) t.join();
}

void TailServer::accept_loop() {
  pollfd p{listen_fd_, POLLIN, 0};
  while (!stopping_.load()) {
    const int ready = ::poll(&p, 1, 50);
    if (ready <= 0) continue;
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    set_nodelay(fd);
    std::lock_guard lock(mutex_);
    if (stopping_.load()) {
      ::close(fd);
      break;
    }
    client_fds_.push_back(fd);
    workers_.emplace_back([this, fd] { serve_connection(fd); });
  }
}

void TailServer::serve_connection(int fd) {
  std::vector<std::uint8_t> buf;
  bool resyncing = false;
  auto reply = [&](const SplitFrame& f) { return send_all(fd, frame_encode(f)); };
  bool open = true;
  while (open) {
    if (buf.size() >= 4 && !starts_with_magic(buf)) {
      if (!resyncing) {
        open = reply(error_frame("protocol", "bad_magic: skipping to next frame"));
        resyncing = true;
      }
      skip_to_magic(buf);
      continue;
    }
    std::optional<std::size_t> total;
    if (buf.size() >= 4) {
      try {
        total = frame_length(buf);
      } catch (const ProtocolError& e) {
        if (!resyncing) open = reply(error_frame("protocol", e.what()));
        resyncing = true;
        buf.erase(buf.begin());
        continue;
      }
    }
    if (!total || buf.size() < *total) {
      if (recv_some(fd, buf) <= 0) break;
      continue;
    }
    resyncing = false;
    SplitFrame response;
    try {
      response = handle(frame_decode(std::span<const std::uint8_t>(buf).first(*total)));
    } catch (const ProtocolError& e) {
      response = error_frame("protocol", e.what());
    }
    buf.erase(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(*total));
    // Count before replying so a client holding its reply sees the count.
    served_.fetch_add(1);
    open = reply(response);
  }
  std::lock_guard lock(mutex_);
  client_fds_.erase(std::remove(client_fds_.begin(), client_fds_.end(), fd), client_fds_.end());
  ::close(fd);
}

SplitFrame TailServer::handle(const SplitFrame& request) const {
  try {
    switch (request.codec) {
      case Codec::handshake: {
        if (request.payload.size() != 4) throw HandshakeError("handshake payload must be 4 bytes");
        if (get_be32(request.payload, 0) != checksum_)
          throw HandshakeError("prior table checksum mismatch");
        SplitFrame f;
        f.codec = Codec::handshake;
        put_be32(f.payload, checksum_);
        return f;
      }
      case Codec::entropy: {
        if (request.shape.size() != 2 || request.shape[1] != tail_->latent_dim())
          throw DimensionError("entropy frame shape must be (images, " +
                               std::to_string(tail_->latent_dim()) + ")");
        const Bitstream bits = parse_bitstream(request.payload);
        if (static_cast<std::uint64_t>(request.shape[0]) * request.shape[1] != bits.symbol_count)
          throw DecodeError("frame shape disagrees with bitstream symbol count");
        return logits_frame(tail_infer(*tail_, bits).logits);
      }
      case Codec::raw_float32: {
        const auto feature = static_cast<std::uint32_t>(tail_->decoder.output_dim());
        if (request.shape.size() != 2 || request.shape[1] != feature)
          throw DimensionError("raw frame shape must be (images, " + std::to_string(feature) + ")");
        const auto values = unpack_floats(request.payload);
        if (values.size() != std::size_t{request.shape[0]} * feature)
          throw DecodeError("raw payload does not match its shape");
        const MatrixF h = Eigen::Map<const MatrixF>(values.data(), feature, request.shape[0]);
        return logits_frame(tail_->classifier.predict_each(h));
      }
      case Codec::error:
        throw DecodeError("clients may not send error frames");
    }
    throw DecodeError("unknown codec");
  } catch (const Error& e) {
    return error_frame(std::string(e.kind()), e.what());
  } catch (const std::exception& e) {
    return error_frame("internal", e.what());
  }
}

RemoteClient::RemoteClient(const std::string& host, std::uint16_t port,
                           std::chrono::milliseconds timeout) {
  const sockaddr_in addr = make_address(host, port);
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) throw TransportError("socket: " + errno_text());
  timeval tv{};
  tv.tv_sec = static_cast<time_t>(timeout.count() / 1000);
  tv.tv_usec = static_cast<suseconds_t>((timeout.count() % 1000) * 1000);
  setsockopt(fd_, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
  setsockopt(fd_, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
  if (::connect(fd_, reinterpret_cast<const sockaddr*>(&addr), sizeof addr) != 0) {
    const std::string why = errno_text();
    ::close(fd_);
    throw TransportError("cannot connect to " + host + ":" + std::to_string(port) + ": " + why);
  }
  set_nodelay(fd_);
}

RemoteClient::~RemoteClient() {
  if (fd_ >= 0) ::close(fd_);
}

void RemoteClient::send_bytes(std::span<const std::uint8_t> bytes) {
  if (!send_all(fd_, bytes)) throw TransportError("send failed: " + errno_text());
}

SplitFrame RemoteClient::receive() {
  for (;;) {
    if (buffer_.size() >= 4) {
      const auto total = frame_length(buffer_);
      if (total && buffer_.size() >= *total) {
        auto frame = frame_decode(std::span<const std::uint8_t>(buffer_).first(*total));
        buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(*total));
        return frame;
      }
    }
    const ssize_t n = recv_some(fd_, buffer_);
    if (n == 0) throw TransportError("server closed the connection");
    if (n < 0) throw TransportError("receive failed: " + errno_text());
  }
}

void RemoteClient::handshake(const CdfTable& table) {
  SplitFrame hello;
  hello.codec = Codec::handshake;
  const std::uint32_t mine = table_checksum(table);
  put_be32(hello.payload, mine);
  send_bytes(frame_encode(hello));
  const SplitFrame reply = receive();
  if (reply.codec == Codec::error) {
    const std::string text(reply.payload.begin(), reply.payload.end());
    throw HandshakeError("server rejected handshake: " + text);
  }
  if (reply.codec != Codec::handshake || reply.payload.size() != 4 || get_be32(reply.payload, 0) != mine)
    throw HandshakeError("server announced a different model checksum");
}

RemoteClient::Exchange RemoteClient::request(const SplitFrame& frame, const LinkProfile& link) {
  const auto bytes = frame_encode(frame);
  const auto half_rtt = std::chrono::duration_cast<Clock::duration>(
      std::chrono::duration<double, std::milli>(link.rtt_ms / 2));
  Exchange ex;
  const auto t0 = Clock::now();
  if (link.rtt_ms > 0) sleep_until(t0 + half_rtt);
  if (link.throttled()) {
    // Token bucket refilled every millisecond: each chunk waits for its tokens.
    const double bytes_per_ms = link.rate_bps / 8.0 / 1000.0;
    const auto chunk = static_cast<std::size_t>(std::max(1.0, bytes_per_ms));
    const auto start = Clock::now();
    std::size_t sent = 0;
    while (sent < bytes.size()) {
      const std::size_t k = std::min(chunk, bytes.size() - sent);
      send_bytes(std::span<const std::uint8_t>(bytes).subspan(sent, k));
      sent += k;
      sleep_until(start + std::chrono::duration_cast<Clock::duration>(
                              std::chrono::duration<double, std::milli>(static_cast<double>(sent) / bytes_per_ms)));
    }
  } else {
    send_bytes(bytes);
  }
  const auto t1 = Clock::now();
  ex.reply = receive();
  const auto t2 = Clock::now();
  if (link.rtt_ms > 0) sleep_until(t2 + half_rtt);
  const auto t3 = Clock::now();
  ex.transfer_ms = ms_between(t0, t1) + ms_between(t2, t3);
  ex.wait_ms = ms_between(t1, t2);
  return ex;
}

MatrixF logits_from_reply(const SplitFrame& reply, Index expected_cols) {
  if (reply.codec == Codec::error) rethrow_remote(std::string(reply.payload.begin(), reply.payload.end()));
  if (reply.codec != Codec::raw_float32 || reply.shape.size() != 2 ||
      static_cast<Index>(reply.shape[0]) != expected_cols)
    throw DecodeError("unexpected reply frame");
  const auto values = unpack_floats(reply.payload);
  if (values.size() != std::size_t{reply.shape[0]} * reply.shape[1])
    throw DecodeError("reply payload does not match its shape");
  return Eigen::Map<const MatrixF>(values.data(), reply.shape[1], reply.shape[0]);
}

namespace {

RemoteResult finish(const RemoteClient::Exchange& ex, Index cols, Clock::time_point t0,
                    Clock::time_point t1, std::size_t payload) {
  RemoteResult out;
  out.logits = logits_from_reply(ex.reply, cols);
  out.labels = argmax_columns(out.logits);
  const auto t2 = Clock::now();
  auto& t = out.timing;
  t.head_ms = ms_between(t0, t1);
  t.transfer_ms = ex.transfer_ms;
  t.total_ms = ms_between(t0, t2);
  t.tail_ms = std::max(0.0, t.total_ms - t.head_ms - t.transfer_ms);
  t.payload_bytes = payload;
  return out;
}

}  // namespace

RemoteResult infer_remote(RemoteClient& client, const SplitHead& head, const MatrixF& x,
                          const LinkProfile& link) {
  const auto t0 = Clock::now();
  const HeadOutput h = head_infer(head, x);
  SplitFrame f;
  f.codec = Codec::entropy;
  f.shape = {static_cast<std::uint32_t>(x.cols()), static_cast<std::uint32_t>(head.encoder.output_dim())};
  f.payload = serialize(h.bits);
  const auto t1 = Clock::now();
  const auto ex = client.request(f, link);
  return finish(ex, x.cols(), t0, t1, f.payload.size());
}

RemoteResult infer_raw(RemoteClient& client, const MatrixF& features, const LinkProfile& link) {
  const auto t0 = Clock::now();
  SplitFrame f;
  f.codec = Codec::raw_float32;
  f.shape = {static_cast<std::uint32_t>(features.cols()), static_cast<std::uint32_t>(features.rows())};
  f.payload = pack_floats(std::span<const float>(features.data(), static_cast<std::size_t>(features.size())));
  const auto t1 = Clock::now();
  const auto ex = client.request(f, link);
  return finish(ex, features.cols(), t0, t1, f.payload.size());
}

}  // namespace hecsb
