#pragma once

// Domain types shared by every module: grid distributions, reward fields,
// preference mixtures, epsilon-optimal basin structure and trajectories.
// All types are immutable once constructed.

#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace pluralis {

/// Support points stored row-wise (n × d, d ∈ {1, 2}).
using SupportPtr = std::shared_ptr<const Eigen::MatrixXd>;
using Mask = Eigen::Array<bool, Eigen::Dynamic, 1>;

inline constexpr double kConstructionTolerance = 1e-12;
inline constexpr double kTrajectoryTolerance = 1e-10;

/// Probability mass function over a finite set of distinct points.
class GridDistribution {
 public:
  /// Validates support and mass, then normalises the mass to sum to one.
  /// Throws InvalidInput on empty support, length mismatch, non-finite or
  /// negative entries, all-zero mass, duplicate points or d ∉ {1, 2}.
  static GridDistribution build(Eigen::MatrixXd support, Eigen::VectorXd mass);

  /// Same support with new (unnormalised) mass. The support is shared, not
  /// copied, and is not re-validated.
  [[nodiscard]] GridDistribution reweighted(Eigen::VectorXd mass) const;

  [[nodiscard]] const Eigen::MatrixXd& support() const { return *support_; }
  [[nodiscard]] const SupportPtr& shared_support() const { return support_; }
  [[nodiscard]] const Eigen::VectorXd& mass() const { return mass_; }
  [[nodiscard]] Eigen::Index size() const { return mass_.size(); }
  [[nodiscard]] int dimension() const { return static_cast<int>(support_->cols()); }

 private:
  GridDistribution(SupportPtr support, Eigen::VectorXd mass);

  SupportPtr support_;
  Eigen::VectorXd mass_;
};

GridDistribution build_grid_distribution(Eigen::MatrixXd support, Eigen::VectorXd mass);

/// Uniform mass over an already validated support.
GridDistribution uniform_on(const GridDistribution& like);

/// `n` equally spaced points on [lo, hi] as an n × 1 support.
Eigen::MatrixXd line_grid(double lo, double hi, Eigen::Index n);

/// Tensor grid of `n_per_axis`² points on [lo, hi]².
Eigen::MatrixXd square_grid(double lo, double hi, Eigen::Index n_per_axis);

/// Reward values aligned with a support, plus the bounds L ≤ r ≤ U.
class RewardField {
 public:
  /// Bounds default to the realised min and max.
  RewardField(SupportPtr support, Eigen::VectorXd values);
  RewardField(SupportPtr support, Eigen::VectorXd values, double lower, double upper);

  [[nodiscard]] const Eigen::VectorXd& values() const { return values_; }
  [[nodiscard]] double lower_bound() const { return lower_; }
  [[nodiscard]] double upper_bound() const { return upper_; }
  /// r*. On a finite grid the supremum is attained.
  [[nodiscard]] double supremum() const { return supremum_; }
  [[nodiscard]] Eigen::Index argmax() const { return argmax_; }
  [[nodiscard]] const SupportPtr& shared_support() const { return support_; }
  [[nodiscard]] Eigen::Index size() const { return values_.size(); }

  /// r + c, with both bounds shifted.
  [[nodiscard]] RewardField shifted(double c) const;
  /// γ·r for γ > 0.
  [[nodiscard]] RewardField scaled(double gamma) const;

 private:
  SupportPtr support_;
  Eigen::VectorXd values_;
  double lower_ = 0.0;
  double upper_ = 0.0;
  double supremum_ = 0.0;
  Eigen::Index argmax_ = 0;
};

/// True when both objects live on the same support (shared or equal).
bool same_support(const SupportPtr& a, const SupportPtr& b);
void require_aligned(const GridDistribution& dist, const RewardField& reward);

/// r(x) = −‖x − center‖².
RewardField quadratic_reward(const Eigen::VectorXd& center, const SupportPtr& grid);
RewardField quadratic_reward(const Eigen::VectorXd& center, const GridDistribution& dist);

/// Selection probabilities q₁…q_M over the reward functions.
class PreferenceMixture {
 public:
  explicit PreferenceMixture(Eigen::VectorXd weights);

  static PreferenceMixture single() { return PreferenceMixture(Eigen::VectorXd::Ones(1)); }
  static PreferenceMixture two(double q);

  [[nodiscard]] const Eigen::VectorXd& weights() const { return weights_; }
  [[nodiscard]] Eigen::Index size() const { return weights_.size(); }
  [[nodiscard]] double operator[](Eigen::Index i) const { return weights_[i]; }

 private:
  Eigen::VectorXd weights_;
};

/// Epsilon-optimal basins S_{i,ε} = {x : rᵢ(x) ≥ rᵢ* − ε}, the region outside
/// their union, and the realised separation gaps between them.
struct BasinAnalysis {
  double epsilon = 0.0;
  std::vector<Mask> basins;
  Mask outside;
  /// gaps(i, j) for i ≠ j: the largest Δ with x ∈ S_{j,ε} ⇒ rᵢ(x) ≤ rᵢ* − Δ + ε.
  /// The diagonal is unused (NaN).
  Eigen::MatrixXd gaps;
  bool disjoint = true;

  [[nodiscard]] std::size_t reward_count() const { return basins.size(); }

  /// exp(−(Δ − 2ε)) for the (i, j) pair, or nullopt outside the leakage
  /// regime Δ > 2ε.
  [[nodiscard]] std::optional<double> leakage(std::size_t i, std::size_t j) const;

  /// Two-reward shorthands: Δ₁ = gaps(0,1), Δ₂ = gaps(1,0).
  [[nodiscard]] double gap(std::size_t i) const;
  [[nodiscard]] std::optional<double> kappa(std::size_t i) const;
};

BasinAnalysis compute_basins(std::span<const RewardField> rewards, double epsilon,
                             bool assert_disjoint);

double basin_mass(const GridDistribution& dist, const Mask& mask);

enum class WeightEstimator { kExactEnumeration, kMonteCarlo, kInfiniteTilt };
std::string to_string(WeightEstimator kind);

/// State of the dynamics at one recorded step.
struct TrajectoryRecord {
  int step = 0;
  Eigen::VectorXd basin_mass;       // a_t, b_t, ... per reward basin
  double outside_mass = 0.0;        // m_t
  Eigen::VectorXd expected_reward;  // E_{p_t}[rᵢ]
  Eigen::VectorXd reward_variance;  // Var_{p_t}[rᵢ]
  double entropy = 0.0;
  /// sup over the outside region of the infinite-K multiplier at p_t
  /// (0 when the outside region is empty).
  double outside_multiplier_sup = 0.0;
  /// Σ p_{t−1}·W_{t−1} before renormalisation; 1 at step 0.
  double pre_normalization_sum = 1.0;
};

struct Trajectory {
  SupportPtr support;
  std::vector<TrajectoryRecord> records;
  std::map<int, Eigen::VectorXd> snapshots;
  /// Estimator used per reward at each finite-K step (empty for infinite K).
  std::vector<std::vector<WeightEstimator>> estimators;
  Eigen::VectorXd final_mass;
};

/// Operational limit of a basin mass: mean over the trailing window, flagged
/// unconverged when the window's range exceeds `tolerance`.
struct LimitEstimate {
  double value = 0.0;
  double range = 0.0;
  bool converged = false;
};

LimitEstimate limiting_basin_mass(const Trajectory& traj, std::size_t basin,
                                  std::size_t window = 10, double tolerance = 1e-4);

}  // namespace pluralis
