// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "hecsb/core.hpp"
#include "hecsb/prior.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

namespace hecsb {

using QuantizedLatent = std::vector<std::int32_t>;

inline constexpr int kCdfPrecision = 16;
inline constexpr std::uint32_t kCdfTotal = 1u << kCdfPrecision;

/// Cumulative frequencies of one dimension over [min_symbol, max_symbol()].
/// cumulative.front() == 0, cumulative.back() == kCdfTotal and every symbol
/// has frequency >= 1.
struct SymbolCdf {
  std::int32_t min_symbol = 0;
  std::vector<std::uint32_t> cumulative;

  std::int32_t symbol_count() const { return static_cast<std::int32_t>(cumulative.size()) - 1; }
  std::int32_t max_symbol() const { return min_symbol + symbol_count() - 1; }
  std::uint32_t frequency(std::int32_t symbol) const {
    const auto k = static_cast<std::size_t>(symbol - min_symbol);
    return cumulative[k + 1] - cumulative[k];
  }

  friend bool operator==(const SymbolCdf&, const SymbolCdf&) = default;
};

/// One SymbolCdf per latent dimension; symbol i of a stream is coded with
/// dimension i % dims().
struct CdfTable {
  std::vector<SymbolCdf> dimensions;

  std::size_t dims() const { return dimensions.size(); }
  friend bool operator==(const CdfTable&, const CdfTable&) = default;
};

/// Quantizes a pmf (not necessarily normalized) to 16-bit frequencies: round to
/// nearest, floor at 1, then settle the remainder on the most probable symbols.
SymbolCdf cdf_from_pmf(std::span<const double> pmf, std::int32_t min_symbol);

CdfTable build_cdf(const FactorizedPrior<float>& prior);

/// Checks the CdfTable invariants; throws ArgumentError naming the violation.
void validate(const CdfTable& table);

struct Bitstream {
  std::uint32_t symbol_count = 0;
  std::uint32_t bit_length = 0;
  std::vector<std::uint8_t> bytes;

  friend bool operator==(const Bitstream&, const Bitstream&) = default;
};

/// Range-codes `symbols` (32-bit state, byte-wise renormalization, carry
/// propagation). Out-of-support symbols raise RangeError.
Bitstream encode(std::span<const std::int32_t> symbols, const CdfTable& table);

/// Exact inverse of `encode`. Truncated, over-long or inconsistent streams and
/// a `count` that differs from the stream header raise DecodeError.
QuantizedLatent decode(const Bitstream& bits, const CdfTable& table, std::uint32_t count);

/// Sum over symbols of ceil(-log2 p) with p taken from the table frequencies.
double ideal_code_length_bits(std::span<const std::int32_t> symbols, const CdfTable& table);

/// Wire layout: u32 symbol count, u32 bit length, payload bytes (big-endian).
std::vector<std::uint8_t> serialize(const Bitstream& bits);
Bitstream parse_bitstream(std::span<const std::uint8_t> wire);

/// File layout: "HECSCDF1", u32 dimension count, then per dimension i32 min
/// symbol, u32 symbol count and the frequencies as u16 (all big-endian).
std::vector<std::uint8_t> serialize(const CdfTable& table);
CdfTable parse_cdf_table(std::span<const std::uint8_t> bytes);
void save_cdf_table(const std::filesystem::path& path, const CdfTable& table);
CdfTable load_cdf_table(const std::filesystem::path& path);

}  // namespace hecsb
