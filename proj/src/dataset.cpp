// SPDX-License-Identifier: Apache-2.0
#include "hecsb/dataset.hpp"

#include "hecsb/byte_io.hpp"

#include <fstream>

namespace hecsb {
namespace {

constexpr std::uint32_t kImageMagic = 2051;
constexpr std::uint32_t kLabelMagic = 2049;

[[noreturn]] void fail(const std::filesystem::path& file, const std::string& why) {
  throw IngestError(file.string() + ": " + why);
}

std::vector<std::uint8_t> read_or_fail(const std::filesystem::path& file) {
  try {
    return read_file_bytes(file);
  } catch (const IoError&) {
    fail(file, "cannot open file");
  }
}

void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

ImageDataset ImageDataset::slice(Index begin, Index count) const {
  if (begin < 0 || count < 0 || begin + count > size())
    throw ArgumentError("dataset slice [" + std::to_string(begin) + ", +" + std::to_string(count) +
                        ") out of range for " + std::to_string(size()) + " images");
  ImageDataset out;
  out.images = images.middleCols(begin, count);
  if (labeled()) out.labels.assign(labels.begin() + begin, labels.begin() + begin + count);
  out.height = height;
  out.width = width;
  return out;
}

ImageDataset load_idx(const std::filesystem::path& images,
                      const std::optional<std::filesystem::path>& labels) {
  const auto raw = read_or_fail(images);
  if (raw.size() < 16) fail(images, "truncated header");
  if (get_be32(raw, 0) != kImageMagic)
    fail(images, "bad magic " + std::to_string(get_be32(raw, 0)) + " (expected 2051)");
  const std::uint32_t count = get_be32(raw, 4);
  const std::uint32_t rows = get_be32(raw, 8);
  const std::uint32_t cols = get_be32(raw, 12);
  const std::uint64_t pixels = static_cast<std::uint64_t>(rows) * cols;
  if (raw.size() - 16 != pixels * count)
    fail(images, "expected " + std::to_string(pixels * count) + " pixel bytes, found " +
                     std::to_string(raw.size() - 16));

  ImageDataset ds;
  ds.height = rows;
  ds.width = cols;
  ds.images.resize(static_cast<Index>(pixels), count);
  const std::uint8_t* p = raw.data() + 16;
  for (std::uint32_t i = 0; i < count; ++i)
    for (std::uint64_t k = 0; k < pixels; ++k)
      ds.images(static_cast<Index>(k), i) = static_cast<float>(*p++) / 255.0f;

  if (labels) {
    const auto lab = read_or_fail(*labels);
    if (lab.size() < 8) fail(*labels, "truncated header");
    if (get_be32(lab, 0) != kLabelMagic)
      fail(*labels, "bad magic " + std::to_string(get_be32(lab, 0)) + " (expected 2049)");
    const std::uint32_t n = get_be32(lab, 4);
    if (n != count)
      fail(*labels, std::to_string(n) + " labels for " + std::to_string(count) + " images");
    if (lab.size() - 8 != n) fail(*labels, "label payload length mismatch");
    ds.labels.assign(lab.begin() + 8, lab.end());
  }
  return ds;
}

ImageDataset load_mnist(const std::filesystem::path& dir, const std::string& split) {
  return load_idx(dir / (split + "-images-idx3-ubyte"), dir / (split + "-labels-idx1-ubyte"));
}

void write_idx_images(const std::filesystem::path& path, std::span<const std::uint8_t> pixels,
                      std::uint32_t count, std::uint32_t rows, std::uint32_t cols) {
  std::vector<std::uint8_t> out;
  put_be32(out, kImageMagic);
  put_be32(out, count);
  put_be32(out, rows);
  put_be32(out, cols);
  out.insert(out.end(), pixels.begin(), pixels.end());
  write_bytes(path, out);
}

void write_idx_labels(const std::filesystem::path& path, std::span<const std::uint8_t> labels) {
  std::vector<std::uint8_t> out;
  put_be32(out, kLabelMagic);
  put_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.insert(out.end(), labels.begin(), labels.end());
  write_bytes(path, out);
}

}  // namespace hecsb
