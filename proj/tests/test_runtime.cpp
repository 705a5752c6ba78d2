// SPDX-License-Identifier: Apache-2.0
#include "hecsb/byte_io.hpp"
#include "hecsb/runtime.hpp"

#include <doctest.h>

#include <sys/socket.h>
#include <unistd.h>

using namespace hecsb;

namespace {

SplitModel toy_split(std::uint64_t seed) {
  Rng rng(seed);
  SplitModel s;
  s.head.encoder = Mlp<float>::make({8, 6, 3}, Activation::relu, Activation::identity, rng);
  for (auto& l : s.head.encoder.layers()) l.weight *= 4.0f;
  FactorizedPrior<float> prior(3, 32);
  prior.log_scale.setConstant(1.0f);
  s.head.table = build_cdf(prior);
  s.tail.table = s.head.table;
  s.tail.decoder = Mlp<float>::make({3, 6}, Activation::relu, Activation::relu, rng);
  s.tail.classifier = Mlp<float>::make({6, 5}, Activation::relu, Activation::identity, rng);
  return s;
}

MatrixF inputs(Index count, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  MatrixF x(8, count);
  for (Index i = 0; i < x.size(); ++i) x.data()[i] = u(rng);
  return x;
}

struct Served {
  SplitModel split = toy_split(1);
  TailServer server{std::make_shared<const SplitTail>(split.tail), "127.0.0.1", 0};
};

const LinkProfile kUnthrottled{"loopback", 0.0, 0.0};

}  // namespace

TEST_CASE("latency model arithmetic") {
  CHECK(latency_model(0, {"x", 1e6, 5.0}) == 5.0);
  CHECK(latency_model(16350, {"4G", 12.0e6, 0.0}) == doctest::Approx(10.9));
  const double slow = latency_model(5000, {"a", 10e6, 2.0}) - 2.0;
  const double fast = latency_model(5000, {"b", 20e6, 2.0}) - 2.0;
  CHECK(fast == doctest::Approx(slow / 2));
  CHECK_THROWS_AS(latency_model(1, {"bad", 0.0, 0.0}), ArgumentError);
}

TEST_CASE("link profiles come from defaults and config") {
  const auto d = default_links();
  REQUIRE(d.size() == 3);
  CHECK(d[0].name == "4G");
  CHECK(d[0].rate_bps == 12.0e6);
  CHECK(d[1].rate_bps == 54.0e6);
  CHECK(d[2].rate_bps == 66.9e6);
  for (const auto& l : d) CHECK(l.rtt_ms == 0.0);

  const auto l = links_from_config({{"link.4G.rtt_ms", "3"}, {"link.lab.rate_bps", "1e6"}, {"seed", "1"}});
  const auto find = [&](const std::string& n) {
    return *std::find_if(l.begin(), l.end(), [&](const LinkProfile& p) { return p.name == n; });
  };
  CHECK(find("4G").rtt_ms == 3.0);
  CHECK(find("4G").rate_bps == 12.0e6);
  CHECK(find("lab").rate_bps == 1e6);
  CHECK_THROWS_AS(links_from_config({{"link.x.rate_bps", "-1"}}), ArgumentError);
  CHECK_THROWS_AS(links_from_config({{"link.x.speed", "1"}}), ArgumentError);
  CHECK_THROWS_AS(links_from_config({{"link.x.rtt_ms", "1"}}), ArgumentError);
}

TEST_CASE("remote predictions equal local split predictions") {
  Served s;
  RemoteClient client("127.0.0.1", s.server.port());
  client.handshake(s.split.head.table);
  const MatrixF x = inputs(40, 2);
  const auto local = tail_infer(s.split.tail, head_infer(s.split.head, x).bits);
  for (Index i = 0; i < x.cols(); ++i) {
    const auto r = infer_remote(client, s.split.head, x.col(i), kUnthrottled);
    CHECK(r.labels.front() == local.labels[static_cast<std::size_t>(i)]);
    const auto a = pack_floats(std::span<const float>(r.logits.data(), 5));
    const MatrixF lc = local.logits.col(i);
    CHECK(a == pack_floats(std::span<const float>(lc.data(), 5)));
    CHECK(r.timing.payload_bytes > 8u);
    CHECK(std::abs(r.timing.total_ms - r.timing.head_ms - r.timing.transfer_ms - r.timing.tail_ms) <= 1.0);
  }
  // A batch in one frame gives the same logits.
  const auto batch = infer_remote(client, s.split.head, x, kUnthrottled);
  CHECK(batch.logits == local.logits);
}

TEST_CASE("the in-process handler matches the socket path for raw features") {
  Served s;
  const MatrixF features = s.split.tail.decoder.predict(MatrixF::Constant(3, 2, 1.0f));
  SplitFrame f;
  f.codec = Codec::raw_float32;
  f.shape = {2, 6};
  f.payload = pack_floats(std::span<const float>(features.data(), 12));
  const auto reply = s.server.handle(f);
  const MatrixF logits = logits_from_reply(reply, 2);
  CHECK(logits == s.split.tail.classifier.predict_each(features));
  RemoteClient client("127.0.0.1", s.server.port());
  CHECK(infer_raw(client, features, kUnthrottled).logits == logits);
}

TEST_CASE("garbage gets an error frame and the connection stays usable") {
  Served s;
  RemoteClient client("127.0.0.1", s.server.port());
  const std::vector<std::uint8_t> junk = {'n', 'o', 't', ' ', 'a', ' ', 'f', 'r', 'a', 'm', 'e', '!'};
  client.send_bytes(junk);
  const auto err = client.receive();
  CHECK(err.codec == Codec::error);
  CHECK(std::string(err.payload.begin(), err.payload.end()).rfind("protocol", 0) == 0);

  // A corrupted frame: one error reply, then normal service.
  SplitFrame ok;
  ok.codec = Codec::entropy;
  const MatrixF x = inputs(1, 3);
  ok.payload = serialize(head_infer(s.split.head, x).bits);
  ok.shape = {1, 3};
  auto bad = frame_encode(ok);
  bad.back() ^= 0x01;
  client.send_bytes(bad);
  CHECK(client.receive().codec == Codec::error);
  const auto r = infer_remote(client, s.split.head, x, kUnthrottled);
  CHECK(r.logits == tail_infer(s.split.tail, head_infer(s.split.head, x).bits).logits);

  // A well-formed frame with an undecodable payload is a typed remote error.
  SplitFrame broken = ok;
  broken.payload.resize(10);
  client.send_bytes(frame_encode(broken));
  CHECK_THROWS_AS(logits_from_reply(client.receive(), 1), DecodeError);
}

TEST_CASE("replies on one connection keep request order") {
  Served s;
  RemoteClient client("127.0.0.1", s.server.port());
  const MatrixF x = inputs(100, 4);
  // Pipeline all requests before reading any reply.
  for (Index i = 0; i < 100; ++i) {
    SplitFrame f;
    f.codec = Codec::entropy;
    f.shape = {1, 3};
    f.payload = serialize(head_infer(s.split.head, x.col(i)).bits);
    client.send_bytes(frame_encode(f));
  }
  const auto local = monolithic_predict(s.split, x);
  for (Index i = 0; i < 100; ++i) CHECK(logits_from_reply(client.receive(), 1).col(0) == local.logits.col(i));
  CHECK(s.server.frames_served() == 100u);
}

TEST_CASE("handshake rejects a different prior table") {
  Served s;
  RemoteClient client("127.0.0.1", s.server.port());
  FactorizedPrior<float> other(3, 32);
  CHECK_THROWS_AS(client.handshake(build_cdf(other)), HandshakeError);
  CHECK_NOTHROW(client.handshake(s.split.head.table));
  CHECK(s.server.model_checksum() == table_checksum(s.split.tail.table));
}

TEST_CASE("transport failures are typed") {
  std::uint16_t port = 0;
  {
    Served s;
    port = s.server.port();
    CHECK_THROWS_AS(TailServer(std::make_shared<const SplitTail>(s.split.tail), "127.0.0.1", port), TransportError);
  }
  CHECK_THROWS_AS(RemoteClient("127.0.0.1", port), TransportError);
  CHECK_THROWS_AS(RemoteClient("not-an-address", 1), TransportError);
}

TEST_CASE("the server survives clients that vanish") {
  Served s;
  for (int i = 0; i < 5; ++i) {
    RemoteClient c("127.0.0.1", s.server.port());
    SplitFrame f;
    f.codec = Codec::raw_float32;
    f.shape = {1, 6};
    f.payload = pack_floats(std::vector<float>(6, 0.5f));
    auto bytes = frame_encode(f);
    bytes.resize(bytes.size() / 2);  // leave mid-frame
    c.send_bytes(bytes);
  }
  RemoteClient client("127.0.0.1", s.server.port());
  const auto r = infer_remote(client, s.split.head, inputs(1, 5), kUnthrottled);
  CHECK(r.labels.size() == 1);
}

TEST_CASE("paced transfers follow the link rate") {
  Served s;
  RemoteClient client("127.0.0.1", s.server.port());
  // 2048 features: an 8 KiB payload plus the frame header.
  MatrixF features = MatrixF::Constant(6, 342, 0.25f);
  for (const auto& link : default_links()) {
    const auto r = infer_raw(client, features, link);
    const double expected = latency_model(r.timing.payload_bytes, link);
    CHECK(r.timing.transfer_ms == doctest::Approx(expected).epsilon(0.10));
  }
  const LinkProfile with_rtt{"rtt", 54.0e6, 4.0};
  const auto r = infer_raw(client, features, with_rtt);
  CHECK(r.timing.transfer_ms == doctest::Approx(latency_model(r.timing.payload_bytes, with_rtt)).epsilon(0.10));
}
