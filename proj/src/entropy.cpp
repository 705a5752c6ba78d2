// SPDX-License-Identifier: Apache-2.0
#include "hecsb/entropy.hpp"

#include "hecsb/byte_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

namespace hecsb {
namespace {

constexpr std::uint32_t kTop = 1u << 24;
constexpr char kCdfMagic[8] = {'H', 'E', 'C', 'S', 'C', 'D', 'F', '1'};

class RangeEncoder {
 public:
  void put(std::uint32_t cum, std::uint32_t freq) {
    const std::uint32_t r = range_ >> kCdfPrecision;
    low_ += static_cast<std::uint64_t>(r) * cum;
    range_ = r * freq;
    while (range_ < kTop) {
      range_ <<= 8;
      shift_low();
    }
  }

  std::vector<std::uint8_t> finish() {
    for (int i = 0; i < 5; ++i) shift_low();
    // The first emitted byte is the initial cache and is always zero.
    return std::vector<std::uint8_t>(out_.begin() + 1, out_.end());
  }

 private:
  void shift_low() {
    if (static_cast<std::uint32_t>(low_) < 0xFF000000u || (low_ >> 32) != 0) {
      const auto carry = static_cast<std::uint8_t>(low_ >> 32);
      std::uint8_t pending = cache_;
      do {
        out_.push_back(static_cast<std::uint8_t>(pending + carry));
        pending = 0xFF;
      } while (--cache_size_ != 0);
      cache_ = static_cast<std::uint8_t>(low_ >> 24);
    }
    ++cache_size_;
    low_ = (low_ & 0x00FFFFFFu) << 8;
  }

  std::uint64_t low_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
  std::uint8_t cache_ = 0;
  std::uint64_t cache_size_ = 1;
  std::vector<std::uint8_t> out_;
};

class RangeDecoder {
 public:
  explicit RangeDecoder(std::span<const std::uint8_t> in) : in_(in) {
    for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | next();
  }

  std::int32_t get(const SymbolCdf& cdf) {
    const std::uint32_t r = range_ >> kCdfPrecision;
    const std::uint32_t value = code_ / r;
    if (value >= kCdfTotal) throw DecodeError("range decoder: code outside the coding interval");
    // First cumulative entry strictly greater than value, minus one.
    const auto it = std::upper_bound(cdf.cumulative.begin(), cdf.cumulative.end(), value);
    const auto k = static_cast<std::size_t>(std::distance(cdf.cumulative.begin(), it)) - 1;
    code_ -= r * cdf.cumulative[k];
    range_ = r * (cdf.cumulative[k + 1] - cdf.cumulative[k]);
    while (range_ < kTop) {
      code_ = (code_ << 8) | next();
      range_ <<= 8;
    }
    return cdf.min_symbol + static_cast<std::int32_t>(k);
  }

  std::size_t consumed() const { return pos_; }

 private:
  std::uint32_t next() {
    if (pos_ >= in_.size()) throw DecodeError("range decoder: bitstream truncated");
    return in_[pos_++];
  }

  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
  std::uint32_t code_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
};

const SymbolCdf& cdf_for(const CdfTable& table, std::size_t i) {
  return table.dimensions[i % table.dimensions.size()];
}

}  // namespace

SymbolCdf cdf_from_pmf(std::span<const double> pmf, std::int32_t min_symbol) {
  if (pmf.size() < 2) throw ArgumentError("cdf_from_pmf needs at least two symbols");
  if (pmf.size() > kCdfTotal) throw ArgumentError("cdf_from_pmf: too many symbols for 16-bit precision");
  double mass = 0.0;
  for (double p : pmf) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw ArgumentError("cdf_from_pmf: invalid probability");
    mass += p;
  }
  if (!(mass > 0.0)) throw ArgumentError("cdf_from_pmf: zero total mass");

  std::vector<std::int64_t> freq(pmf.size());
  std::int64_t sum = 0;
  for (std::size_t k = 0; k < pmf.size(); ++k) {
    freq[k] = std::max<std::int64_t>(1, std::llround(pmf[k] / mass * kCdfTotal));
    sum += freq[k];
  }
  // Settle the rounding remainder one count at a time on the current largest
  // frequency (lowest index on ties).
  while (sum != static_cast<std::int64_t>(kCdfTotal)) {
    const auto it = std::max_element(freq.begin(), freq.end());
    if (sum < static_cast<std::int64_t>(kCdfTotal)) {
      const std::int64_t add = static_cast<std::int64_t>(kCdfTotal) - sum;
      *it += add;
      sum += add;
    } else {
      if (*it <= 1) throw ArgumentError("cdf_from_pmf: cannot normalize frequencies");
      --*it;
      --sum;
    }
  }
  SymbolCdf cdf;
  cdf.min_symbol = min_symbol;
  cdf.cumulative.resize(pmf.size() + 1, 0);
  for (std::size_t k = 0; k < pmf.size(); ++k)
    cdf.cumulative[k + 1] = cdf.cumulative[k] + static_cast<std::uint32_t>(freq[k]);
  return cdf;
}

CdfTable build_cdf(const FactorizedPrior<float>& prior) {
  CdfTable table;
  for (Index i = 0; i < prior.dims(); ++i) {
    const auto pmf = prior.pmf_table(i);
    table.dimensions.push_back(cdf_from_pmf(pmf, -prior.support));
  }
  return table;
}

void validate(const CdfTable& table) {
  if (table.dimensions.empty()) throw ArgumentError("cdf table has no dimensions");
  for (std::size_t d = 0; d < table.dimensions.size(); ++d) {
    const auto& c = table.dimensions[d].cumulative;
    const std::string where = "cdf dimension " + std::to_string(d);
    if (c.size() < 3) throw ArgumentError(where + ": fewer than two symbols");
    if (c.front() != 0 || c.back() != kCdfTotal) throw ArgumentError(where + ": bad end points");
    for (std::size_t k = 1; k < c.size(); ++k)
      if (c[k] <= c[k - 1]) throw ArgumentError(where + ": not strictly increasing");
  }
}

Bitstream encode(std::span<const std::int32_t> symbols, const CdfTable& table) {
  validate(table);
  RangeEncoder enc;
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    const auto& cdf = cdf_for(table, i);
    const std::int32_t s = symbols[i];
    if (s < cdf.min_symbol || s > cdf.max_symbol())
      throw RangeError("symbol " + std::to_string(s) + " at position " + std::to_string(i) +
                       " outside table support [" + std::to_string(cdf.min_symbol) + ", " +
                       std::to_string(cdf.max_symbol()) + "]");
    const auto k = static_cast<std::size_t>(s - cdf.min_symbol);
    enc.put(cdf.cumulative[k], cdf.cumulative[k + 1] - cdf.cumulative[k]);
  }
  Bitstream out;
  out.symbol_count = static_cast<std::uint32_t>(symbols.size());
  out.bytes = enc.finish();
  out.bit_length = static_cast<std::uint32_t>(out.bytes.size() * 8);
  return out;
}

QuantizedLatent decode(const Bitstream& bits, const CdfTable& table, std::uint32_t count) {
  validate(table);
  if (bits.symbol_count != count)
    throw DecodeError("bitstream holds " + std::to_string(bits.symbol_count) + " symbols, expected " +
                      std::to_string(count));
  if (bits.bit_length > bits.bytes.size() * 8 || bits.bit_length + 7 < bits.bytes.size() * 8)
    throw DecodeError("bitstream bit length inconsistent with payload size");
  RangeDecoder dec(bits.bytes);
  QuantizedLatent out(count);
  for (std::uint32_t i = 0; i < count; ++i) out[i] = dec.get(cdf_for(table, i));
  if (dec.consumed() != bits.bytes.size())
    throw DecodeError("bitstream has " + std::to_string(bits.bytes.size() - dec.consumed()) +
                      " unexpected trailing bytes");
  return out;
}

double ideal_code_length_bits(std::span<const std::int32_t> symbols, const CdfTable& table) {
  double bits = 0.0;
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    const auto& cdf = cdf_for(table, i);
    const double p = static_cast<double>(cdf.frequency(symbols[i])) / kCdfTotal;
    bits += std::ceil(-std::log2(p));
  }
  return bits;
}

std::vector<std::uint8_t> serialize(const Bitstream& bits) {
  std::vector<std::uint8_t> out;
  out.reserve(8 + bits.bytes.size());
  put_be32(out, bits.symbol_count);
  put_be32(out, bits.bit_length);
  out.insert(out.end(), bits.bytes.begin(), bits.bytes.end());
  return out;
}

Bitstream parse_bitstream(std::span<const std::uint8_t> wire) {
  if (wire.size() < 8) throw DecodeError("bitstream shorter than its 8-byte header");
  Bitstream b;
  b.symbol_count = get_be32(wire, 0);
  b.bit_length = get_be32(wire, 4);
  b.bytes.assign(wire.begin() + 8, wire.end());
  if (b.bit_length > b.bytes.size() * 8) throw DecodeError("bitstream truncated");
  return b;
}

std::vector<std::uint8_t> serialize(const CdfTable& table) {
  validate(table);
  std::vector<std::uint8_t> out(std::begin(kCdfMagic), std::end(kCdfMagic));
  put_be32(out, static_cast<std::uint32_t>(table.dimensions.size()));
  for (const auto& d : table.dimensions) {
    put_be32(out, static_cast<std::uint32_t>(d.min_symbol));
    put_be32(out, static_cast<std::uint32_t>(d.symbol_count()));
    for (std::int32_t k = 0; k < d.symbol_count(); ++k) {
      const std::uint32_t f = d.cumulative[static_cast<std::size_t>(k) + 1] - d.cumulative[static_cast<std::size_t>(k)];
      if (f > 0xFFFFu) throw ArgumentError("frequency does not fit 16 bits");
      put_be16(out, static_cast<std::uint16_t>(f));
    }
  }
  return out;
}

CdfTable parse_cdf_table(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kCdfMagic, sizeof(kCdfMagic)) != 0)
    throw DecodeError("cdf table: bad magic");
  std::size_t pos = 8;
  auto need = [&](std::size_t n) {
    if (bytes.size() - pos < n) throw DecodeError("cdf table: truncated");
  };
  const std::uint32_t dims = get_be32(bytes, pos);
  pos += 4;
  CdfTable table;
  for (std::uint32_t d = 0; d < dims; ++d) {
    need(8);
    SymbolCdf cdf;
    cdf.min_symbol = static_cast<std::int32_t>(get_be32(bytes, pos));
    const std::uint32_t n = get_be32(bytes, pos + 4);
    pos += 8;
    if (n > kCdfTotal) throw DecodeError("cdf table: implausible symbol count");
    need(2 * static_cast<std::size_t>(n));
    cdf.cumulative.assign(n + 1, 0);
    for (std::uint32_t k = 0; k < n; ++k) {
      cdf.cumulative[k + 1] = cdf.cumulative[k] + get_be16(bytes, pos);
      pos += 2;
    }
    table.dimensions.push_back(std::move(cdf));
  }
  if (pos != bytes.size()) throw DecodeError("cdf table: trailing bytes");
  try {
    validate(table);
  } catch (const ArgumentError& e) {
    throw DecodeError(std::string("cdf table: ") + e.what());
  }
  return table;
}

void save_cdf_table(const std::filesystem::path& path, const CdfTable& table) {
  const auto bytes = serialize(table);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

CdfTable load_cdf_table(const std::filesystem::path& path) {
  return parse_cdf_table(read_file_bytes(path));
}

}  // namespace hecsb
