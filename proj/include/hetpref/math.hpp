#pragma once

// Small dense numerical kernels shared by every module. All of them are
// templated on the Eigen expression type so they accept blocks, maps and
// temporaries without copies.

#include <Eigen/Dense>

#include <cmath>
#include <limits>

namespace hetpref {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Numerically stable logistic function.
template <typename Scalar>
Scalar sigmoid(Scalar x) {
  if (x >= Scalar(0)) {
    return Scalar(1) / (Scalar(1) + std::exp(-x));
  }
  const Scalar e = std::exp(x);
  return e / (Scalar(1) + e);
}

/// log(sigmoid(x)) without underflow for large |x|.
template <typename Scalar>
Scalar log_sigmoid(Scalar x) {
  if (x >= Scalar(0)) {
    return -std::log1p(std::exp(-x));
  }
  return x - std::log1p(std::exp(x));
}

/// log(sum(exp(v))) with max subtraction. Empty input gives -inf.
template <typename Derived>
typename Derived::Scalar log_sum_exp(const Eigen::MatrixBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  if (v.size() == 0) {
    return -std::numeric_limits<Scalar>::infinity();
  }
  const Scalar m = v.maxCoeff();
  if (!std::isfinite(m)) {
    return m;
  }
  return m + std::log((v.array() - m).exp().sum());
}

/// Softmax with max subtraction.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> softmax(
    const Eigen::MatrixBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> out = (v.array() - v.maxCoeff()).exp();
  out /= out.sum();
  return out;
}

/// Rescales a nonnegative vector onto the probability simplex.
template <typename Derived>
void normalize_simplex(Eigen::MatrixBase<Derived>& v) {
  v /= v.sum();
}

/// True if every entry is >= -tol and the entries sum to 1 within tol.
template <typename Derived>
bool on_simplex(const Eigen::MatrixBase<Derived>& v, double tol) {
  if (v.size() == 0 || !v.allFinite()) {
    return false;
  }
  return v.minCoeff() >= -tol && std::abs(v.sum() - 1.0) <= tol;
}

/// One multiplicative-weights step: w <- w * exp(sign * step * payoff), renormalized.
/// Computed in log space so large payoffs cannot overflow.
template <typename DerivedW, typename DerivedG>
Eigen::Matrix<typename DerivedW::Scalar, Eigen::Dynamic, 1> hedge_step(
    const Eigen::MatrixBase<DerivedW>& w, const Eigen::MatrixBase<DerivedG>& payoff,
    typename DerivedW::Scalar signed_step) {
  using Scalar = typename DerivedW::Scalar;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> logits =
      w.array().log().matrix() + signed_step * payoff;
  return softmax(logits);
}

/// Pearson correlation; zero when either side has no variance.
template <typename DerivedA, typename DerivedB>
double pearson(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
  const auto n = static_cast<double>(a.size());
  if (a.size() < 2 || a.size() != b.size()) {
    return 0.0;
  }
  const Vector ca = a.array() - a.sum() / n;
  const Vector cb = b.array() - b.sum() / n;
  const double denom = std::sqrt(ca.squaredNorm() * cb.squaredNorm());
  return denom > 0.0 ? ca.dot(cb) / denom : 0.0;
}

}  // namespace hetpref
