// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "hecsb/core.hpp"
#include "hecsb/nn.hpp"

#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace hecsb {

/// y = W f(x) + noise, with f the identity unless an acquisition network is set.
template <typename Scalar>
struct MeasurementOperator {
  Matrix<Scalar> weights;  // m x l
  std::optional<Mlp<Scalar>> acquisition;
  Scalar noise_std = 0;

  Index measurements() const { return weights.rows(); }
  Index signal_dim() const { return acquisition ? acquisition->input_dim() : weights.cols(); }
  bool identity_acquisition() const { return !acquisition.has_value(); }
};

/// m x n operator with i.i.d. N(0, 1/m) entries drawn column by column from
/// a generator seeded with `seed`.
template <typename Scalar>
MeasurementOperator<Scalar> gaussian_operator(Index m, Index n, std::uint64_t seed) {
  if (m <= 0 || n <= 0) throw ArgumentError("gaussian_operator needs m > 0 and n > 0");
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(m)));
  MeasurementOperator<Scalar> op;
  op.weights.resize(m, n);
  for (Index c = 0; c < n; ++c)
    for (Index r = 0; r < m; ++r) op.weights(r, c) = static_cast<Scalar>(normal(rng));
  return op;
}

/// Measures every column of `x`.
template <typename Scalar>
Matrix<Scalar> measure(const MeasurementOperator<Scalar>& op, const Matrix<Scalar>& x, Rng& rng) {
  if (x.rows() != op.signal_dim())
    throw ArgumentError("measure: signal has " + std::to_string(x.rows()) + " rows, operator expects " +
                        std::to_string(op.signal_dim()));
  Matrix<Scalar> y;
  if (op.acquisition) {
    const Matrix<Scalar> fx = op.acquisition->predict(x);
    if (fx.rows() != op.weights.cols()) throw DimensionError("acquisition output does not match W");
    y = op.weights * fx;
  } else {
    y = op.weights * x;
  }
  if (op.noise_std > 0) {
    std::normal_distribution<double> normal(0.0, static_cast<double>(op.noise_std));
    for (Index c = 0; c < y.cols(); ++c)
      for (Index r = 0; r < y.rows(); ++r) y(r, c) += static_cast<Scalar>(normal(rng));
  }
  return y;
}

/// Largest eigenvalue of W^T W (squared spectral norm) by power iteration.
template <typename Scalar>
double spectral_norm_squared(const Matrix<Scalar>& w, int iterations = 200) {
  const Matrix<double> a = w.template cast<double>();
  Vector<double> v = Vector<double>::Ones(a.cols()) / std::sqrt(static_cast<double>(a.cols()));
  double lambda = 0.0;
  for (int i = 0; i < iterations; ++i) {
    Vector<double> u = a.transpose() * (a * v);
    const double norm = u.norm();
    if (norm == 0.0) return 0.0;
    const double next = v.dot(u);
    v = u / norm;
    if (std::abs(next - lambda) <= 1e-12 * std::abs(next)) {
      lambda = next;
      break;
    }
    lambda = next;
  }
  return lambda;
}

template <typename Scalar>
Scalar soft_threshold(Scalar v, Scalar t) {
  return v > t ? v - t : (v < -t ? v + t : Scalar(0));
}

struct IstaOptions {
  double lambda = 1e-3;
  int max_iterations = 1000;
  double tolerance = 1e-7;  // stop once every column's objective drops less than this
};

template <typename Scalar>
struct IstaResult {
  Matrix<Scalar> estimate;                // one column per measurement vector
  std::vector<std::vector<double>> objective;  // per column, per iteration (index 0 = start)
  int iterations = 0;
};

/// 0.5 ||y - W x||^2 + lambda ||x||_1 for one column.
template <typename Scalar>
double lasso_objective(const Matrix<Scalar>& w, const Eigen::Ref<const Vector<Scalar>>& y,
                       const Eigen::Ref<const Vector<Scalar>>& x, double lambda) {
  const Vector<double> r = y.template cast<double>() - w.template cast<double>() * x.template cast<double>();
  return 0.5 * r.squaredNorm() + lambda * x.template cast<double>().template lpNorm<1>();
}

/// Iterative soft-thresholding for min 0.5 ||y - W x||^2 + lambda ||x||_1,
/// run on all columns of `y` together with step 1 / L, L an upper estimate of
/// the squared spectral norm of W. Starts from x = 0. Throws if the objective
/// of any column increases.
template <typename Scalar>
IstaResult<Scalar> ista_lasso(const MeasurementOperator<Scalar>& op, const Matrix<Scalar>& y,
                              const IstaOptions& opts) {
  if (!op.identity_acquisition()) throw ArgumentError("ista_lasso requires identity acquisition");
  if (opts.lambda < 0.0) throw ArgumentError("ista_lasso: lambda must be non-negative");
  if (opts.max_iterations < 1) throw ArgumentError("ista_lasso: iterations must be >= 1");
  if (y.rows() != op.measurements())
    throw ArgumentError("ista_lasso: measurement length " + std::to_string(y.rows()) +
                        " != " + std::to_string(op.measurements()));
  const Matrix<Scalar>& w = op.weights;
  // Power iteration approaches L from below; the margin keeps the step valid.
  const double lip = spectral_norm_squared(w) * 1.01;
  const auto step = static_cast<Scalar>(lip > 0 ? 1.0 / lip : 1.0);
  const auto thresh = static_cast<Scalar>(opts.lambda) * step;
  const Matrix<Scalar> wt = w.transpose();

  IstaResult<Scalar> res;
  const Index cols = y.cols();
  res.estimate = Matrix<Scalar>::Zero(w.cols(), cols);
  res.objective.resize(static_cast<std::size_t>(cols));
  Vector<double> current = 0.5 * y.template cast<double>().colwise().squaredNorm().transpose();
  for (Index c = 0; c < cols; ++c) res.objective[static_cast<std::size_t>(c)].push_back(current(c));
  std::vector<bool> active(static_cast<std::size_t>(cols), true);
  Index remaining = cols;
  Matrix<Scalar> residual = -y;
  for (int it = 0; it < opts.max_iterations && remaining > 0; ++it) {
    Matrix<Scalar> next = res.estimate - step * (wt * residual);
    next = next.unaryExpr([thresh](Scalar v) { return soft_threshold(v, thresh); });
    Matrix<Scalar> next_residual = w * next - y;
    const Vector<double> obj =
        0.5 * next_residual.template cast<double>().colwise().squaredNorm().transpose() +
        opts.lambda * next.template cast<double>().cwiseAbs().colwise().sum().transpose();
    for (Index c = 0; c < cols; ++c) {
      if (!active[static_cast<std::size_t>(c)]) continue;
      // Allow rounding-level noise relative to the objective's magnitude.
      if (obj(c) > current(c) + 1e-9 * std::max(1.0, current(c)))
        throw StateError("ista_lasso: objective increased at iteration " + std::to_string(it + 1));
      const double decrease = current(c) - obj(c);
      res.estimate.col(c) = next.col(c);
      residual.col(c) = next_residual.col(c);
      current(c) = obj(c);
      res.objective[static_cast<std::size_t>(c)].push_back(obj(c));
      if (decrease < opts.tolerance) {
        active[static_cast<std::size_t>(c)] = false;
        --remaining;
      }
    }
    res.iterations = it + 1;
  }
  return res;
}

/// ||x - x_hat||_2 / sqrt(n).
template <typename DerivedA, typename DerivedB>
double recon_error(const Eigen::MatrixBase<DerivedA>& x, const Eigen::MatrixBase<DerivedB>& x_hat) {
  if (x.rows() != x_hat.rows() || x.cols() != x_hat.cols())
    throw ArgumentError("recon_error: shape mismatch " + shape_string(x.rows(), x.cols()) + " vs " +
                        shape_string(x_hat.rows(), x_hat.cols()));
  if (x.size() == 0) throw ArgumentError("recon_error: empty input");
  const double ss = (x.template cast<double>() - x_hat.template cast<double>()).squaredNorm();
  return std::sqrt(ss / static_cast<double>(x.size()));
}

template <typename Scalar>
Matrix<Scalar> clamp_unit(Matrix<Scalar> x) {
  return x.cwiseMax(Scalar(0)).cwiseMin(Scalar(1));
}

}  // namespace hecsb
