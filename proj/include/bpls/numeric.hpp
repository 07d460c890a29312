#pragma once

#include <cmath>
#include <limits>

#include <Eigen/Core>

namespace bpls {

/// log(sum(exp(v))) with a fixed left-to-right reduction order; -inf for empty input.
template <typename Derived>
typename Derived::Scalar log_sum_exp(const Eigen::DenseBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  if (v.size() == 0) return -std::numeric_limits<Scalar>::infinity();
  const Scalar m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  Scalar acc(0);
  for (Eigen::Index i = 0; i < v.size(); ++i) acc += std::exp(v.derived().coeff(i) - m);
  return m + std::log(acc);
}

}  // namespace bpls
