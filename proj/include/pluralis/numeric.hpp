#pragma once

// Reductions over probability-weighted Eigen expressions. All of them accept
// arbitrary dense expressions so callers can pass masked or shifted views
// without materialising temporaries.

#include <cmath>
#include <limits>

#include <Eigen/Core>

namespace pluralis {

/// Σ mass·values.
template <typename MassDerived, typename ValueDerived>
typename MassDerived::Scalar expectation(const Eigen::DenseBase<MassDerived>& mass,
                                         const Eigen::DenseBase<ValueDerived>& values) {
  return (mass.derived().array() * values.derived().array()).sum();
}

/// Variance of `values` under `mass`, computed around the mean (two-pass) so
/// that large constant offsets do not cancel catastrophically.
template <typename MassDerived, typename ValueDerived>
typename MassDerived::Scalar variance(const Eigen::DenseBase<MassDerived>& mass,
                                      const Eigen::DenseBase<ValueDerived>& values) {
  const auto mean = expectation(mass, values);
  return (mass.derived().array() * (values.derived().array() - mean).square()).sum();
}

/// Shannon entropy in nats with the 0·log 0 = 0 convention.
template <typename MassDerived>
typename MassDerived::Scalar shannon_entropy(const Eigen::DenseBase<MassDerived>& mass) {
  using Scalar = typename MassDerived::Scalar;
  const auto& m = mass.derived().array();
  return -(m > Scalar(0)).select(m * m.log(), Scalar(0)).sum();
}

template <typename Derived>
typename Derived::Scalar log_sum_exp(const Eigen::DenseBase<Derived>& values) {
  using Scalar = typename Derived::Scalar;
  const Scalar peak = values.maxCoeff();
  if (!std::isfinite(peak)) return peak;
  return peak + std::log((values.derived().array() - peak).exp().sum());
}

/// Total mass on the points selected by a boolean mask.
template <typename MassDerived, typename MaskDerived>
typename MassDerived::Scalar masked_sum(const Eigen::DenseBase<MassDerived>& mass,
                                        const Eigen::DenseBase<MaskDerived>& mask) {
  using Scalar = typename MassDerived::Scalar;
  return mask.derived().select(mass.derived(), Scalar(0)).sum();
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& values) {
  return values.derived().array().isFinite().all();
}

}  // namespace pluralis
