#pragma once

// Idealised retraining on exact grid densities: each step replaces p_t by the
// density of a curated sample, p_{t+1}(x) = p_t(x)·Σᵢ qᵢ Hᵢ(x).

#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "pluralis/core.hpp"
#include "pluralis/curation.hpp"

namespace pluralis {

struct InfinitePool {};

struct FinitePool {
  int K = 2;
  int n_mc = 10'000;
  std::size_t state_cap = kDefaultStateCap;
};

using CurationMode = std::variant<InfinitePool, FinitePool>;

struct DynamicsConfig {
  std::vector<RewardField> rewards;
  PreferenceMixture mixture = PreferenceMixture::single();
  CurationMode mode = InfinitePool{};
  int steps = 50;
  double epsilon = 0.1;
  std::vector<int> snapshots;
  std::uint64_t seed = 0;

  /// Throws InvalidInput on T < 1, mismatched mixture length, K < 2 or
  /// rewards on different supports.
  void validate() const;
};

/// W(x) = Σᵢ qᵢ e^{rᵢ(x)} / E_p[e^{rᵢ}].
Eigen::VectorXd infinite_k_multiplier(const GridDistribution& dist,
                                      std::span<const RewardField> rewards,
                                      const PreferenceMixture& mixture);

/// Σᵢ qᵢ H^K_{rᵢ}(x); `used` receives the estimator picked for each reward.
Eigen::VectorXd finite_k_multiplier(const GridDistribution& dist,
                                    std::span<const RewardField> rewards,
                                    const PreferenceMixture& mixture, const FinitePool& pool,
                                    std::uint64_t seed, std::vector<WeightEstimator>* used = nullptr);

GridDistribution step_infinite_k(const GridDistribution& dist, std::span<const RewardField> rewards,
                                 const PreferenceMixture& mixture);

GridDistribution step_finite_k(const GridDistribution& dist, std::span<const RewardField> rewards,
                               const PreferenceMixture& mixture, int K, int n_mc,
                               std::uint64_t seed, std::size_t state_cap = kDefaultStateCap);

/// Iterates the configured step `steps` times, recording basin masses,
/// reward moments, entropy and the outside multiplier at every step
/// (records 0..T) and mass snapshots at the scheduled steps.
Trajectory run_trajectory(const GridDistribution& init, const DynamicsConfig& config,
                          const BasinAnalysis& basins);

}  // namespace pluralis
