// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "hecsb/core.hpp"

#include <cmath>
#include <vector>

namespace hecsb {

namespace detail {

inline double logistic_cdf(double t) {
  return t >= 0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t));
}

// log of the standard logistic density, stable for large |t|.
inline double logistic_log_pdf(double t) {
  const double a = std::abs(t);
  return -a - 2.0 * std::log1p(std::exp(-a));
}

}  // namespace detail

/// Per-dimension logistic prior over latents, discretized onto the integer
/// support [-support, support] with the tail mass folded into the end points.
/// Scales are stored as logs so that they stay positive under gradient steps.
template <typename Scalar>
struct FactorizedPrior {
  Vector<Scalar> location;
  Vector<Scalar> log_scale;
  int support = 32;

  FactorizedPrior() = default;
  FactorizedPrior(Index dims, int z_max)
      : location(Vector<Scalar>::Zero(dims)), log_scale(Vector<Scalar>::Zero(dims)), support(z_max) {
    if (dims <= 0) throw ArgumentError("prior needs at least one dimension");
    if (z_max <= 0) throw ArgumentError("prior support bound must be positive");
  }

  Index dims() const { return location.size(); }
  double scale(Index i) const { return std::exp(static_cast<double>(log_scale(i))); }

  /// Probability of integer value v in dimension i. Always strictly positive
  /// mathematically; may underflow to 0 in double for far tails.
  double pmf(Index i, int v) const {
    if (i < 0 || i >= dims()) throw ArgumentError("prior dimension out of range");
    if (v < -support || v > support)
      throw RangeError("value " + std::to_string(v) + " outside prior support +-" +
                       std::to_string(support));
    const double mu = static_cast<double>(location(i));
    const double s = scale(i);
    const double hi = (v + 0.5 - mu) / s;
    const double lo = (v - 0.5 - mu) / s;
    if (v == support) return detail::logistic_cdf(-lo);
    if (v == -support) return detail::logistic_cdf(hi);
    // Difference taken on the side of the mode to avoid cancellation.
    if (lo > 0) return detail::logistic_cdf(-lo) - detail::logistic_cdf(-hi);
    return detail::logistic_cdf(hi) - detail::logistic_cdf(lo);
  }

  std::vector<double> pmf_table(Index i) const {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(2 * support + 1));
    for (int v = -support; v <= support; ++v) out.push_back(pmf(i, v));
    return out;
  }

  template <typename Other>
  FactorizedPrior<Other> cast() const {
    FactorizedPrior<Other> p;
    p.location = location.template cast<Other>();
    p.log_scale = log_scale.template cast<Other>();
    p.support = support;
    return p;
  }
};

template <typename Scalar>
struct PriorRate {
  double nats = 0.0;                 // sum over all entries
  Matrix<Scalar> d_latent;           // d nats / d z
  Vector<Scalar> d_location;
  Vector<Scalar> d_log_scale;
};

/// Continuous rate surrogate: -sum log p(z) with p the logistic density of
/// each dimension (in nats), and its gradients. `z` holds one latent per column.
template <typename Scalar>
PriorRate<Scalar> continuous_rate(const FactorizedPrior<Scalar>& prior, const Matrix<Scalar>& z) {
  if (z.rows() != prior.dims())
    throw DimensionError("latent has " + std::to_string(z.rows()) + " dims, prior has " +
                         std::to_string(prior.dims()));
  PriorRate<Scalar> out;
  out.d_latent.resize(z.rows(), z.cols());
  out.d_location = Vector<Scalar>::Zero(z.rows());
  out.d_log_scale = Vector<Scalar>::Zero(z.rows());
  Vector<double> d_loc = Vector<double>::Zero(z.rows());
  Vector<double> d_ls = Vector<double>::Zero(z.rows());
  double total = 0.0;
  for (Index c = 0; c < z.cols(); ++c) {
    for (Index i = 0; i < z.rows(); ++i) {
      const double s = prior.scale(i);
      const double t = (static_cast<double>(z(i, c)) - static_cast<double>(prior.location(i))) / s;
      total += -detail::logistic_log_pdf(t) + std::log(s);
      const double th = std::tanh(0.5 * t);
      out.d_latent(i, c) = static_cast<Scalar>(th / s);
      d_loc(i) -= th / s;
      d_ls(i) += 1.0 - t * th;
    }
  }
  out.nats = total;
  out.d_location = d_loc.cast<Scalar>();
  out.d_log_scale = d_ls.cast<Scalar>();
  return out;
}

}  // namespace hecsb
