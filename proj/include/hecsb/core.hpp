// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace hecsb {

// Batches are stored column-wise: one sample per column.
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatrixF = Matrix<float>;
using VectorF = Vector<float>;
using MatrixD = Matrix<double>;
using VectorD = Vector<double>;
using Index = Eigen::Index;

using Rng = std::mt19937_64;

/// Base of every error thrown by the library. `kind()` is the short,
/// machine-parsable error class printed by the command-line tool.
class Error : public std::runtime_error {
 public:
  Error(std::string_view kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  std::string_view kind() const noexcept { return kind_; }

 private:
  std::string_view kind_;
};

#define HECSB_DEFINE_ERROR(Name, tag)                                   \
  class Name : public Error {                                           \
   public:                                                              \
    explicit Name(const std::string& what) : Error(tag, what) {}        \
  };

HECSB_DEFINE_ERROR(DimensionError, "dimension")
HECSB_DEFINE_ERROR(ArgumentError, "argument")
HECSB_DEFINE_ERROR(StateError, "state")
HECSB_DEFINE_ERROR(TrainingError, "training")
HECSB_DEFINE_ERROR(RangeError, "range")
HECSB_DEFINE_ERROR(DecodeError, "decode")
HECSB_DEFINE_ERROR(TransportError, "transport")
HECSB_DEFINE_ERROR(HandshakeError, "handshake")
HECSB_DEFINE_ERROR(IngestError, "ingest")
HECSB_DEFINE_ERROR(IoError, "io")

#undef HECSB_DEFINE_ERROR

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.allFinite();
}

inline std::string shape_string(Index rows, Index cols) {
  return "(" + std::to_string(rows) + "x" + std::to_string(cols) + ")";
}

}  // namespace hecsb
