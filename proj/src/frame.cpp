// SPDX-License-Identifier: Apache-2.0
#include "hecsb/frame.hpp"

#include "hecsb/byte_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cstring>

namespace hecsb {

const char* to_string(FrameFault fault) {
  switch (fault) {
    case FrameFault::bad_magic: return "bad_magic";
    case FrameFault::bad_version: return "bad_version";
    case FrameFault::bad_codec: return "bad_codec";
    case FrameFault::bad_rank: return "bad_rank";
    case FrameFault::oversize: return "oversize";
    case FrameFault::truncated: return "truncated";
    case FrameFault::bad_crc: return "bad_crc";
  }
  return "unknown";
}

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in bounded pieces.
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    const auto n = static_cast<uInt>(std::min<std::size_t>(bytes.size() - pos, 1u << 30));
    crc = crc32(crc, bytes.data() + pos, n);
    pos += n;
  }
  return static_cast<std::uint32_t>(crc);
}

std::vector<std::uint8_t> frame_encode(const SplitFrame& frame) {
  if (frame.shape.size() > kMaxFrameRank)
    throw ProtocolError(FrameFault::bad_rank, "rank " + std::to_string(frame.shape.size()));
  if (frame.payload.size() > kMaxFramePayload)
    throw ProtocolError(FrameFault::oversize, std::to_string(frame.payload.size()) + " payload bytes");
  std::vector<std::uint8_t> out(std::begin(kFrameMagic), std::end(kFrameMagic));
  out.reserve(kFramePrefix + 4 * frame.shape.size() + 8 + frame.payload.size());
  out.push_back(kFrameVersion);
  out.push_back(static_cast<std::uint8_t>(frame.codec));
  put_be32(out, static_cast<std::uint32_t>(frame.shape.size()));
  for (auto e : frame.shape) put_be32(out, e);
  put_be32(out, static_cast<std::uint32_t>(frame.payload.size()));
  out.insert(out.end(), frame.payload.begin(), frame.payload.end());
  put_be32(out, crc32_of(out));
  return out;
}

std::optional<std::size_t> frame_length(std::span<const std::uint8_t> prefix) {
  const std::size_t have = prefix.size();
  for (std::size_t i = 0; i < std::min<std::size_t>(have, 4); ++i)
    if (prefix[i] != static_cast<std::uint8_t>(kFrameMagic[i]))
      throw ProtocolError(FrameFault::bad_magic, "frame does not start with HSB1");
  if (have < kFramePrefix) return std::nullopt;
  if (prefix[4] != kFrameVersion)
    throw ProtocolError(FrameFault::bad_version, "version " + std::to_string(prefix[4]));
  if (prefix[5] > static_cast<std::uint8_t>(Codec::handshake))
    throw ProtocolError(FrameFault::bad_codec, "codec id " + std::to_string(prefix[5]));
  const std::uint32_t rank = get_be32(prefix, 6);
  if (rank > kMaxFrameRank) throw ProtocolError(FrameFault::bad_rank, "rank " + std::to_string(rank));
  const std::size_t header = kFramePrefix + 4 * std::size_t{rank} + 4;
  if (have < header) return std::nullopt;
  const std::uint32_t length = get_be32(prefix, header - 4);
  if (length > kMaxFramePayload)
    throw ProtocolError(FrameFault::oversize, std::to_string(length) + " payload bytes");
  return header + length + 4;
}

SplitFrame frame_decode(std::span<const std::uint8_t> bytes) {
  const auto total = frame_length(bytes);
  if (!total || bytes.size() < *total)
    throw ProtocolError(FrameFault::truncated, "have " + std::to_string(bytes.size()) + " bytes");
  if (bytes.size() > *total)
    throw ProtocolError(FrameFault::oversize, std::to_string(bytes.size() - *total) + " trailing bytes");
  const std::size_t body = *total - 4;
  if (crc32_of(bytes.first(body)) != get_be32(bytes, body))
    throw ProtocolError(FrameFault::bad_crc, "checksum mismatch");
  SplitFrame f;
  f.codec = static_cast<Codec>(bytes[5]);
  const std::uint32_t rank = get_be32(bytes, 6);
  for (std::uint32_t i = 0; i < rank; ++i) f.shape.push_back(get_be32(bytes, kFramePrefix + 4 * i));
  const std::size_t start = kFramePrefix + 4 * std::size_t{rank} + 4;
  f.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(start),
                   bytes.begin() + static_cast<std::ptrdiff_t>(body));
  return f;
}

SplitFrame error_frame(const std::string& kind, const std::string& message) {
  SplitFrame f;
  f.codec = Codec::error;
  const std::string text = kind + ": " + message;
  f.payload.assign(text.begin(), text.end());
  return f;
}

std::vector<std::uint8_t> pack_floats(std::span<const float> values) {
  std::vector<std::uint8_t> out;
  out.reserve(values.size() * 4);
  for (float v : values) put_be32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

std::vector<float> unpack_floats(std::span<const std::uint8_t> bytes) {
  if (bytes.size() % 4 != 0) throw DecodeError("float payload length is not a multiple of 4");
  std::vector<float> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::bit_cast<float>(get_be32(bytes, 4 * i));
  return out;
}

}  // namespace hecsb
