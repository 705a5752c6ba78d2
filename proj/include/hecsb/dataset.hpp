// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "hecsb/core.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hecsb {

/// Images stored one per column with pixels in [0, 1]. Labels are empty for
/// unlabeled collections.
struct ImageDataset {
  MatrixF images;
  std::vector<int> labels;
  Index height = 0;
  Index width = 0;

  Index size() const { return images.cols(); }
  Index pixels() const { return images.rows(); }
  bool labeled() const { return !labels.empty(); }

  ImageDataset slice(Index begin, Index count) const;
};

/// Reads an IDX image file (magic 2051) and optionally its IDX label file
/// (magic 2049). Pixels are rescaled from bytes to [0, 1].
ImageDataset load_idx(const std::filesystem::path& images,
                      const std::optional<std::filesystem::path>& labels);

/// Loads `<dir>/<split>-images-idx3-ubyte` and `<dir>/<split>-labels-idx1-ubyte`
/// with split "train" or "t10k".
ImageDataset load_mnist(const std::filesystem::path& dir, const std::string& split);

void write_idx_images(const std::filesystem::path& path, std::span<const std::uint8_t> pixels,
                      std::uint32_t count, std::uint32_t rows, std::uint32_t cols);
void write_idx_labels(const std::filesystem::path& path, std::span<const std::uint8_t> labels);

}  // namespace hecsb
