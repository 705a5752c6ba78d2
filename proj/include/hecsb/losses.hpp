// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "hecsb/core.hpp"

#include <cmath>
#include <span>
#include <vector>

namespace hecsb {

/// Floor applied to the second argument of the KL divergence inside the log.
inline constexpr double kProbabilityFloor = 1e-9;

/// Column-wise softmax of logits / tau, max-subtracted.
template <typename Derived>
Matrix<typename Derived::Scalar> softmax_tau(const Eigen::MatrixBase<Derived>& logits,
                                             double tau) {
  using Scalar = typename Derived::Scalar;
  if (!(tau > 0.0)) throw ArgumentError("softmax temperature must be positive");
  Matrix<Scalar> out(logits.rows(), logits.cols());
  for (Index c = 0; c < logits.cols(); ++c) {
    const Vector<double> s = logits.col(c).template cast<double>() / tau;
    const Vector<double> e = (s.array() - s.maxCoeff()).exp();
    out.col(c) = (e / e.sum()).template cast<Scalar>();
  }
  return out;
}

/// Sum_i p_i log(p_i / max(q_i, floor)); terms with p_i == 0 contribute 0.
template <typename DerivedP, typename DerivedQ>
double kl_divergence(const Eigen::MatrixBase<DerivedP>& p, const Eigen::MatrixBase<DerivedQ>& q) {
  if (p.size() != q.size())
    throw ArgumentError("kl_divergence: length " + std::to_string(p.size()) + " vs " +
                        std::to_string(q.size()));
  double sum = 0.0;
  for (Index i = 0; i < p.size(); ++i) {
    const double pi = static_cast<double>(p(i));
    if (pi <= 0.0) continue;
    const double qi = std::max(static_cast<double>(q(i)), kProbabilityFloor);
    sum += pi * std::log(pi / qi);
  }
  return std::max(sum, 0.0);
}

/// -log softmax(logits)[label], via log-sum-exp.
template <typename Derived>
double cross_entropy(const Eigen::MatrixBase<Derived>& logits, int label) {
  if (label < 0 || label >= logits.size()) throw ArgumentError("label out of range");
  const Vector<double> s = logits.template cast<double>();
  const double mx = s.maxCoeff();
  const double lse = mx + std::log((s.array() - mx).exp().sum());
  return lse - s(label);
}

inline void check_kd_args(double alpha, double tau) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ArgumentError("alpha must lie in [0, 1]");
  if (!(tau > 0.0)) throw ArgumentError("temperature must be positive");
}

/// Distillation loss for one sample:
/// (1 - alpha) CE(softmax(student), label)
///   + alpha tau^2 KL(softmax(teacher / tau) || softmax(student / tau)).
template <typename DerivedS, typename DerivedT>
double kd_loss(const Eigen::MatrixBase<DerivedS>& student_logits,
               const Eigen::MatrixBase<DerivedT>& teacher_logits, int label, double alpha,
               double tau) {
  check_kd_args(alpha, tau);
  if (student_logits.size() != teacher_logits.size())
    throw ArgumentError("kd_loss: student and teacher logit counts differ");
  double loss = 0.0;
  if (alpha < 1.0) loss += (1.0 - alpha) * cross_entropy(student_logits, label);
  if (alpha > 0.0) {
    const auto pt = softmax_tau(teacher_logits.template cast<double>(), tau);
    const auto ps = softmax_tau(student_logits.template cast<double>(), tau);
    loss += alpha * tau * tau * kl_divergence(pt, ps);
  }
  return loss;
}

template <typename Scalar>
struct BatchLoss {
  double value = 0.0;          // mean over the batch
  Matrix<Scalar> gradient;     // d value / d student logits
};

/// Batch mean of `kd_loss` and its gradient with respect to the student
/// logits. With alpha == 0 this is exactly the mean cross-entropy.
template <typename Scalar>
BatchLoss<Scalar> kd_loss_batch(const Matrix<Scalar>& student_logits,
                                const Matrix<Scalar>& teacher_logits,
                                std::span<const int> labels, double alpha, double tau) {
  check_kd_args(alpha, tau);
  const Index n = student_logits.cols();
  if (teacher_logits.rows() != student_logits.rows() || teacher_logits.cols() != n ||
      static_cast<Index>(labels.size()) != n)
    throw ArgumentError("kd_loss_batch: inconsistent batch shapes");
  if (n == 0) throw ArgumentError("kd_loss_batch: empty batch");
  BatchLoss<Scalar> out;
  out.gradient.resize(student_logits.rows(), n);
  const Matrix<double> s = student_logits.template cast<double>();
  const Matrix<double> p1 = softmax_tau(s, 1.0);
  Matrix<double> ps, pt;
  if (alpha > 0.0) {
    ps = softmax_tau(s, tau);
    pt = softmax_tau(teacher_logits.template cast<double>(), tau);
  }
  double total = 0.0;
  for (Index c = 0; c < n; ++c) {
    Vector<double> g = Vector<double>::Zero(s.rows());
    if (alpha < 1.0) {
      total += (1.0 - alpha) * cross_entropy(s.col(c), labels[static_cast<std::size_t>(c)]);
      g += (1.0 - alpha) * p1.col(c);
      g(labels[static_cast<std::size_t>(c)]) -= (1.0 - alpha);
    }
    if (alpha > 0.0) {
      total += alpha * tau * tau * kl_divergence(pt.col(c), ps.col(c));
      g += alpha * tau * (ps.col(c) - pt.col(c));
    }
    out.gradient.col(c) = (g / static_cast<double>(n)).template cast<Scalar>();
  }
  out.value = total / static_cast<double>(n);
  return out;
}

template <typename Scalar>
std::vector<int> argmax_columns(const Matrix<Scalar>& logits) {
  std::vector<int> out(static_cast<std::size_t>(logits.cols()));
  for (Index c = 0; c < logits.cols(); ++c) {
    Index best = 0;
    logits.col(c).maxCoeff(&best);
    out[static_cast<std::size_t>(c)] = static_cast<int>(best);
  }
  return out;
}

}  // namespace hecsb
