// SPDX-License-Identifier: Apache-2.0
#include "hecsb/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace hecsb {
namespace {

constexpr char kMagic[6] = {'H', 'E', 'C', 'S', 'B', '1'};
constexpr std::uint32_t kMaxRank = 8;
constexpr std::uint32_t kMaxNameLength = 4096;

void put_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

bool get_u32(std::istream& in, std::uint32_t& v) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) return false;
  v = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
      (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  return true;
}

std::uint64_t element_count(const std::vector<std::uint32_t>& shape) {
  std::uint64_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

}  // namespace

void write_checkpoint(std::ostream& out, std::span<const TensorRecord> records) {
  out.write(kMagic, sizeof(kMagic));
  for (const auto& r : records) {
    if (element_count(r.shape) != r.data.size())
      throw DimensionError("checkpoint record " + r.name + ": data length does not match shape");
    put_u32(out, static_cast<std::uint32_t>(r.name.size()));
    out.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
    put_u32(out, static_cast<std::uint32_t>(r.shape.size()));
    for (auto e : r.shape) put_u32(out, e);
    for (float f : r.data) put_u32(out, std::bit_cast<std::uint32_t>(f));
  }
  if (!out) throw IoError("failed writing checkpoint");
}

std::vector<TensorRecord> read_checkpoint(std::istream& in) {
  char magic[sizeof(kMagic)];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw DecodeError("checkpoint: bad magic");
  std::vector<TensorRecord> out;
  std::uint32_t name_len = 0;
  while (get_u32(in, name_len)) {
    if (name_len > kMaxNameLength) throw DecodeError("checkpoint: implausible name length");
    TensorRecord r;
    r.name.resize(name_len);
    std::uint32_t rank = 0;
    if (!in.read(r.name.data(), name_len) || !get_u32(in, rank))
      throw DecodeError("checkpoint: truncated record header");
    if (rank > kMaxRank) throw DecodeError("checkpoint: rank too large in " + r.name);
    r.shape.resize(rank);
    for (auto& e : r.shape)
      if (!get_u32(in, e)) throw DecodeError("checkpoint: truncated extents in " + r.name);
    const std::uint64_t n = element_count(r.shape);
    if (n > (std::uint64_t{1} << 31)) throw DecodeError("checkpoint: tensor too large: " + r.name);
    r.data.resize(n);
    for (auto& f : r.data) {
      std::uint32_t bits = 0;
      if (!get_u32(in, bits)) throw DecodeError("checkpoint: truncated data in " + r.name);
      f = std::bit_cast<float>(bits);
    }
    out.push_back(std::move(r));
  }
  if (!in.eof()) throw DecodeError("checkpoint: read failure");
  return out;
}

void save_checkpoint(const std::filesystem::path& path, std::span<const TensorRecord> records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_checkpoint(out, records);
}

std::vector<TensorRecord> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_checkpoint(in);
}

TensorRecord to_record(std::string name, const MatrixF& m) {
  TensorRecord r{std::move(name),
                 {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())},
                 {}};
  r.data.reserve(static_cast<std::size_t>(m.size()));
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) r.data.push_back(m(i, j));
  return r;
}

TensorRecord to_record(std::string name, const VectorF& v) {
  return {std::move(name), {static_cast<std::uint32_t>(v.size())},
          std::vector<float>(v.data(), v.data() + v.size())};
}

MatrixF matrix_from_record(const TensorRecord& r) {
  if (r.shape.size() != 2) throw DimensionError(r.name + ": expected a rank-2 tensor");
  MatrixF m(r.shape[0], r.shape[1]);
  std::size_t k = 0;
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) m(i, j) = r.data[k++];
  return m;
}

VectorF vector_from_record(const TensorRecord& r) {
  if (r.shape.size() != 1) throw DimensionError(r.name + ": expected a rank-1 tensor");
  return Eigen::Map<const VectorF>(r.data.data(), static_cast<Index>(r.data.size()));
}

const TensorRecord& find_record(std::span<const TensorRecord> records, const std::string& name) {
  for (const auto& r : records)
    if (r.name == name) return r;
  throw DecodeError("checkpoint is missing tensor " + name);
}

void append_mlp(std::vector<TensorRecord>& out, const std::string& prefix, const Mlp<float>& net) {
  for (std::size_t i = 0; i < net.depth(); ++i) {
    const auto& l = net.layers()[i];
    const std::string base = prefix + "." + std::to_string(i);
    out.push_back(to_record(base + ".weight", l.weight));
    out.push_back(to_record(base + ".bias", l.bias));
    out.push_back({base + ".activation", {1}, {static_cast<float>(l.activation)}});
  }
}

Mlp<float> mlp_from_records(std::span<const TensorRecord> records, const std::string& prefix) {
  std::vector<DenseLayer<float>> layers;
  for (std::size_t i = 0;; ++i) {
    const std::string base = prefix + "." + std::to_string(i);
    const TensorRecord* w = nullptr;
    for (const auto& r : records)
      if (r.name == base + ".weight") w = &r;
    if (w == nullptr) break;
    DenseLayer<float> l;
    l.weight = matrix_from_record(*w);
    l.bias = vector_from_record(find_record(records, base + ".bias"));
    const auto& act = find_record(records, base + ".activation");
    if (act.data.size() != 1 || (act.data[0] != 0.0f && act.data[0] != 1.0f))
      throw DecodeError(base + ": unknown activation");
    l.activation = static_cast<Activation>(static_cast<int>(act.data[0]));
    layers.push_back(std::move(l));
  }
  if (layers.empty()) throw DecodeError("checkpoint has no layers under " + prefix);
  return Mlp<float>(std::move(layers));
}

}  // namespace hecsb
