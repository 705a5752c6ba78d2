// SPDX-License-Identifier: Apache-2.0
#include "hecsb/frame.hpp"

#include <doctest.h>

#include <zlib.h>

using namespace hecsb;

namespace {

SplitFrame sample_frame() {
  SplitFrame f;
  f.codec = Codec::entropy;
  f.shape = {2, 3, 4};
  for (int i = 0; i < 37; ++i) f.payload.push_back(static_cast<std::uint8_t>(i * 7));
  return f;
}

FrameFault fault_of(const std::vector<std::uint8_t>& bytes) {
  try {
    frame_decode(bytes);
  } catch (const ProtocolError& e) {
    return e.fault();
  }
  FAIL("frame decoded without error");
  return FrameFault::bad_crc;
}

}  // namespace

TEST_CASE("frames round trip with the documented layout") {
  const auto f = sample_frame();
  const auto bytes = frame_encode(f);
  // magic, version, codec, rank, 3 extents, length, payload, crc
  REQUIRE(bytes.size() == 4 + 1 + 1 + 4 + 12 + 4 + 37 + 4);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "HSB1");
  CHECK(bytes[4] == 1);
  CHECK(bytes[5] == 1);
  CHECK(bytes[9] == 3);
  CHECK(bytes[13] == 2);
  CHECK(bytes[25] == 37);
  // CRC from zlib over everything before it, big-endian.
  const auto crc = static_cast<std::uint32_t>(::crc32(0L, bytes.data(), static_cast<uInt>(bytes.size() - 4)));
  const std::size_t n = bytes.size();
  CHECK(bytes[n - 4] == static_cast<std::uint8_t>(crc >> 24));
  CHECK(bytes[n - 1] == static_cast<std::uint8_t>(crc));
  CHECK(frame_decode(bytes) == f);
  CHECK(frame_length(bytes) == bytes.size());
  CHECK_FALSE(frame_length(std::span<const std::uint8_t>(bytes.data(), 12)).has_value());
}

TEST_CASE("empty and zero-rank frames round trip") {
  SplitFrame f;
  f.codec = Codec::handshake;
  CHECK(frame_decode(frame_encode(f)) == f);
  const auto e = error_frame("decode", "bad stream");
  CHECK(e.codec == Codec::error);
  CHECK(frame_decode(frame_encode(e)) == e);
  CHECK(std::string(e.payload.begin(), e.payload.end()) == "decode: bad stream");
}

TEST_CASE("header faults are distinguished") {
  const auto good = frame_encode(sample_frame());
  auto b = good;
  b[0] = 'X';
  CHECK(fault_of(b) == FrameFault::bad_magic);
  b = good;
  b[4] = 2;
  CHECK(fault_of(b) == FrameFault::bad_version);
  b = good;
  b[5] = 9;
  CHECK(fault_of(b) == FrameFault::bad_codec);
  b = good;
  b[9] = 9;
  CHECK(fault_of(b) == FrameFault::bad_rank);
  b = good;
  b[22] = 0x10;  // payload length 256 MiB + 37
  CHECK(fault_of(b) == FrameFault::oversize);
}

TEST_CASE("truncation is reported at every cut point") {
  const auto good = frame_encode(sample_frame());
  for (std::size_t len = 0; len < good.size(); ++len) {
    const std::vector<std::uint8_t> cut(good.begin(), good.begin() + static_cast<std::ptrdiff_t>(len));
    CHECK_THROWS_AS(frame_decode(cut), ProtocolError);
  }
  auto longer = good;
  longer.push_back(0);
  CHECK_THROWS_AS(frame_decode(longer), ProtocolError);
}

TEST_CASE("every single-bit flip is detected") {
  const auto good = frame_encode(sample_frame());
  for (std::size_t bit = 0; bit < good.size() * 8; ++bit) {
    auto b = good;
    b[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
    CHECK_THROWS_AS(frame_decode(b), ProtocolError);
  }
}

TEST_CASE("fuzzed frames never decode silently") {
  Rng rng(17);
  std::uniform_int_distribution<int> byte(0, 255), len(0, 200), rank(0, 4), ext(0, 50);
  int silent = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    SplitFrame f;
    f.codec = static_cast<Codec>(trial % 4);
    for (int r = rank(rng); r > 0; --r) f.shape.push_back(static_cast<std::uint32_t>(ext(rng)));
    f.payload.resize(static_cast<std::size_t>(len(rng)));
    for (auto& v : f.payload) v = static_cast<std::uint8_t>(byte(rng));
    auto bytes = frame_encode(f);
    REQUIRE(frame_decode(bytes) == f);
    std::uniform_int_distribution<std::size_t> pos(0, bytes.size() * 8 - 1);
    const std::size_t bit = pos(rng);
    bytes[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
    try {
      frame_decode(bytes);
      ++silent;
    } catch (const ProtocolError&) {
    }
  }
  CHECK(silent == 0);
}

TEST_CASE("floats pack big-endian") {
  const std::vector<float> v = {1.0f, -2.5f, 0.0f};
  const auto b = pack_floats(v);
  REQUIRE(b.size() == 12);
  CHECK(b[0] == 0x3F);
  CHECK(b[1] == 0x80);
  CHECK(b[4] == 0xC0);
  CHECK(unpack_floats(b) == v);
  CHECK_THROWS_AS(unpack_floats(std::span<const std::uint8_t>(b.data(), 5)), DecodeError);
}
