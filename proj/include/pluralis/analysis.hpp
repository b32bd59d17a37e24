#pragma once

// Measurable counterparts of the convergence guarantees: leakage intervals for
// the limiting basin mass, outside domination and decay rates, the variance
// decomposition, expected-reward limits, the weighted Nash bargaining argmax
// and the finite-K concentration study.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "pluralis/core.hpp"
#include "pluralis/curation.hpp"

namespace pluralis {

struct LeakageInterval {
  double lower = 0.0;
  double upper = 1.0;
  std::optional<double> kappa1;
  std::optional<double> kappa2;
  double q = 0.0;
  /// Set when either pair is outside the leakage regime (Δ ≤ 2ε); the
  /// interval is then [0, 1].
  bool vacuous = false;

  [[nodiscard]] bool contains(double a, double slack = 0.0) const {
    return a >= lower - slack && a <= upper + slack;
  }
};

/// [max{0, (q−κ₁)/(1−κ₁)}, min{1, q/(1−κ₂)}]. A missing κ marks the vacuous
/// case. Throws InvalidInput for q ∉ (0,1) or κ ∉ [0,1).
LeakageInterval leakage_interval(double q, std::optional<double> kappa1,
                                 std::optional<double> kappa2);
LeakageInterval leakage_interval(double q, const BasinAnalysis& basins);

struct OutsideDomination {
  double rho_sup = 0.0;
  bool empty_outside = false;
  /// ρ_sup < 1: the outside-domination assumption holds at this step.
  [[nodiscard]] bool holds() const { return empty_outside || rho_sup < 1.0; }
};

/// sup over X \ S_ε of W(x) = Σᵢ qᵢ e^{rᵢ(x)}/Zᵢ at the given distribution.
OutsideDomination outside_domination(const GridDistribution& dist,
                                     std::span<const RewardField> rewards,
                                     const PreferenceMixture& mixture, const BasinAnalysis& basins);

struct DecayFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  std::size_t points = 0;
};

/// Least-squares line through (t, log m_t) over the steps with m_t > floor.
/// Needs at least five such steps; rejects a series that is zero from the start.
DecayFit fit_log_linear(std::span<const double> series, double floor = 1e-12);
DecayFit fit_decay_rate(const Trajectory& traj, double floor = 1e-12);

/// Law-of-total-variance split of Var[rᵢ] over the two basins. All terms are
/// taken under p conditioned on S₁ ∪ S₂, so the identity is exact; the
/// unconditional variance and outside mass are reported alongside.
struct VarianceDecomposition {
  double a = 0.0;  // p(S₁) / p(S₁ ∪ S₂)
  double within1 = 0.0;
  double within2 = 0.0;
  double mean1 = 0.0;
  double mean2 = 0.0;
  double between = 0.0;
  double total = 0.0;
  double lower_bound = 0.0;  // a(1−a)(Δᵢ − 2ε)₊²
  double unconditional_variance = 0.0;
  double outside_mass = 0.0;
  bool empty_basin = false;
  bool outside_mass_warning = false;  // outside mass above 1e-6
};

VarianceDecomposition variance_decomposition(const GridDistribution& dist,
                                             std::span<const RewardField> rewards,
                                             const BasinAnalysis& basins, std::size_t reward_index);

struct ExpectedRewardLimit {
  double mixture_mean = 0.0;  // E_p[rᵢ]
  double a = 0.0;
  double own_basin_mean = 0.0;    // E_{p|S_i}[rᵢ]
  double cross_basin_mean = 0.0;  // E_{p|S_j}[rᵢ], j ≠ i
  bool own_basin_ok = false;      // ≥ rᵢ* − ε
  bool cross_basin_ok = false;    // ≤ rᵢ* − Δᵢ + ε
  bool empty_basin = false;
};

ExpectedRewardLimit expected_reward_limit(const GridDistribution& dist,
                                          std::span<const RewardField> rewards,
                                          const BasinAnalysis& basins, std::size_t reward_index);

struct NashSolution {
  double alpha_star = 0.0;
  double closed_form = 0.0;
  double grid_argmax = 0.0;
  double grid_spacing = 0.0;
  Eigen::VectorXd alpha_grid;
  /// log[(α Δ₁ᵘ)^q ((1−α) Δ₂ᵘ)^{1−q}]; −∞ at the endpoints.
  Eigen::VectorXd log_nash_product;
  double gain1 = 0.0;  // u₁(P₁) − u₁(P₂)
  double gain2 = 0.0;  // u₂(P₂) − u₂(P₁)
  double disagreement1 = 0.0;  // u₁(P₂)
  double disagreement2 = 0.0;  // u₂(P₁)
};

/// Weighted Nash bargaining over mixtures αP₁ + (1−α)P₂ with uᵢ(P) = E_P[rᵢ].
/// Throws AssumptionViolation when a preference does not favour its own basin.
NashSolution nash_solve(const GridDistribution& p1, const GridDistribution& p2,
                        const RewardField& r1, const RewardField& r2, double q,
                        int grid_points = 10'001);

double mean_squared_error(std::span<const double> estimate, std::span<const double> target);

struct ConcentrationPoint {
  int K = 0;
  double deviation = 0.0;  // sup over S_ε of |H^K − H^∞|
  WeightEstimator estimator = WeightEstimator::kExactEnumeration;
  double standard_error = 0.0;  // at the maximising point, Monte-Carlo only
};

/// C₁ √(log K / K) + C₂ / K with C₁, C₂ ≥ 0.
struct RateBound {
  double c1 = 0.0;
  double c2 = 0.0;
  [[nodiscard]] double operator()(int K) const;
};

struct ConcentrationCurve {
  std::vector<ConcentrationPoint> points;
  /// Tightest bound (minimal Σ bound) that dominates every deviation.
  RateBound envelope;
  /// Same fit using only the first half of the K list (at least two points).
  RateBound early_envelope;
  /// early_envelope dominates the held-out larger K.
  bool early_envelope_dominates = false;
  bool strictly_decreasing = false;
};

ConcentrationCurve concentration_curve(const GridDistribution& dist, const RewardField& reward,
                                       std::span<const int> k_list, int n_mc, std::uint64_t seed,
                                       double epsilon = 0.1,
                                       std::size_t state_cap = kDefaultStateCap);

/// Tightest nonnegative (C₁, C₂) with bound(K) ≥ deviation(K) for all points.
RateBound fit_dominating_bound(std::span<const int> k_values, std::span<const double> deviations);

}  // namespace pluralis
