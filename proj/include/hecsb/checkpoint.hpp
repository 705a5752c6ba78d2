// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "hecsb/core.hpp"
#include "hecsb/nn.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace hecsb {

/// One named tensor in a checkpoint container. Data is row-major float32.
struct TensorRecord {
  std::string name;
  std::vector<std::uint32_t> shape;
  std::vector<float> data;

  friend bool operator==(const TensorRecord&, const TensorRecord&) = default;
};

/// Container layout: the 6 magic bytes "HECSB1", then records until end of
/// stream. Each record is: u32 name length, name bytes, u32 rank, rank x u32
/// extents, then the float32 payload. All integers and reals little-endian.
void write_checkpoint(std::ostream& out, std::span<const TensorRecord> records);
std::vector<TensorRecord> read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, std::span<const TensorRecord> records);
std::vector<TensorRecord> load_checkpoint(const std::filesystem::path& path);

TensorRecord to_record(std::string name, const MatrixF& m);
TensorRecord to_record(std::string name, const VectorF& v);
MatrixF matrix_from_record(const TensorRecord& r);
VectorF vector_from_record(const TensorRecord& r);

const TensorRecord& find_record(std::span<const TensorRecord> records, const std::string& name);

/// Appends `<prefix>.<i>.weight`, `.bias` and `.activation` records.
void append_mlp(std::vector<TensorRecord>& out, const std::string& prefix, const Mlp<float>& net);
Mlp<float> mlp_from_records(std::span<const TensorRecord> records, const std::string& prefix);

}  // namespace hecsb
