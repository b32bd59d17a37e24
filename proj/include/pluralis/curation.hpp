#pragma once

// Bradley–Terry curation weights H(x): the expected K-scaled probability that
// x wins a softmax choice against K−1 i.i.d. opponents drawn from p, in its
// exact, Monte-Carlo and K → ∞ (exponential tilt) forms.

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>

#include <Eigen/Core>

#include "pluralis/core.hpp"

namespace pluralis {

struct BtWeightEstimate {
  Eigen::VectorXd weight;
  WeightEstimator kind = WeightEstimator::kInfiniteTilt;
  int pool_size = 0;  // K; 0 for the tilt
  int mc_samples = 0;
  Eigen::VectorXd standard_error;  // Monte-Carlo only
};

inline constexpr std::size_t kDefaultStateCap = 1'000'000;

/// H∞(x) = e^{r(x)} / E_p[e^{r}], evaluated with r shifted by r*.
BtWeightEstimate tilt_weight(const GridDistribution& dist, const RewardField& reward);

/// Exact H^K by iterated convolution of the law of Σ_{j<K} e^{r(y_j)} over the
/// distinct values of e^{r − r*}. Sums closer than 1e-12 (relative) are merged.
/// Throws StateCapExceeded when states × distinct values would pass `state_cap`.
BtWeightEstimate bt_weight_exact(const GridDistribution& dist, const RewardField& reward, int K,
                                 std::size_t state_cap = kDefaultStateCap);

/// Monte-Carlo H^K with `n_mc` opponent pools. Every point is evaluated
/// against the same pools, so per-point errors are correlated across points.
BtWeightEstimate bt_weight_mc(const GridDistribution& dist, const RewardField& reward, int K,
                              int n_mc, std::uint64_t seed);

/// Exact when the convolution fits under `state_cap`, Monte-Carlo otherwise.
BtWeightEstimate bt_weight(const GridDistribution& dist, const RewardField& reward, int K, int n_mc,
                           std::uint64_t seed, std::size_t state_cap = kDefaultStateCap);

/// Softmax choice probabilities exp((r_k − max r)/τ) / Σ.
Eigen::VectorXd bt_choice_probabilities(std::span<const double> rewards, double temperature);

/// Draws one index from the BT choice rule using the caller's engine.
std::size_t bt_select(std::span<const double> rewards, double temperature, std::mt19937_64& rng);

std::size_t bt_select(std::span<const double> rewards, double temperature, std::uint64_t seed);

}  // namespace pluralis
