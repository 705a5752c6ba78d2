// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "hecsb/core.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hecsb {

enum class Codec : std::uint8_t {
  raw_float32 = 0,  // big-endian IEEE-754 values, row-major over `shape`
  entropy = 1,      // serialized Bitstream; shape is (images, latent_dim)
  error = 2,        // UTF-8 "kind: message", empty shape
  handshake = 3,    // u32 checksum of the prior table, empty shape
};

struct SplitFrame {
  Codec codec = Codec::raw_float32;
  std::vector<std::uint32_t> shape;
  std::vector<std::uint8_t> payload;

  friend bool operator==(const SplitFrame&, const SplitFrame&) = default;
};

inline constexpr char kFrameMagic[4] = {'H', 'S', 'B', '1'};
inline constexpr std::uint8_t kFrameVersion = 1;
inline constexpr std::uint32_t kMaxFrameRank = 8;
inline constexpr std::uint32_t kMaxFramePayload = 64u << 20;
/// magic, version, codec and rank: enough to learn the full header length.
inline constexpr std::size_t kFramePrefix = 10;

enum class FrameFault : std::uint8_t { bad_magic, bad_version, bad_codec, bad_rank, oversize, truncated, bad_crc };

const char* to_string(FrameFault fault);

class ProtocolError : public Error {
 public:
  ProtocolError(FrameFault fault, const std::string& what)
      : Error("protocol", std::string(to_string(fault)) + ": " + what), fault_(fault) {}
  FrameFault fault() const noexcept { return fault_; }

 private:
  FrameFault fault_;
};

/// Layout (multi-byte fields big-endian): "HSB1", u8 version, u8 codec,
/// u32 rank, rank x u32 extents, u32 payload length, payload, u32 CRC-32 of
/// everything before it.
std::vector<std::uint8_t> frame_encode(const SplitFrame& frame);

/// Validates and parses exactly one frame occupying all of `bytes`.
SplitFrame frame_decode(std::span<const std::uint8_t> bytes);

/// Total frame length implied by a header prefix, or nullopt when more bytes
/// are needed to tell. Throws ProtocolError on an invalid header.
std::optional<std::size_t> frame_length(std::span<const std::uint8_t> prefix);

SplitFrame error_frame(const std::string& kind, const std::string& message);

std::vector<std::uint8_t> pack_floats(std::span<const float> values);
std::vector<float> unpack_floats(std::span<const std::uint8_t> bytes);

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes);

}  // namespace hecsb
