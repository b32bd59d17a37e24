#pragma once

// Sample-based retraining in the plane: a Gaussian-mixture generator, BT
// curation of sampled candidate pools, and EM refitting on the curated set.

#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Cholesky>

namespace pluralis {

/// Rows are 2-D points.
using PointSet = Eigen::Matrix<double, Eigen::Dynamic, 2>;

struct GaussianComponent {
  double weight = 1.0;
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  Eigen::Matrix2d covariance = Eigen::Matrix2d::Identity();
};

class GmmModel {
 public:
  /// Throws InvalidInput unless there are 1 or 2 components, weights are
  /// nonnegative and sum to 1 (±1e-9), and every covariance is SPD.
  explicit GmmModel(std::vector<GaussianComponent> components);

  [[nodiscard]] const std::vector<GaussianComponent>& components() const { return components_; }
  [[nodiscard]] std::size_t size() const { return components_.size(); }
  [[nodiscard]] const Eigen::Matrix2d& cholesky_factor(std::size_t k) const { return chol_[k]; }

  /// Per-point log density.
  [[nodiscard]] Eigen::VectorXd log_density(const PointSet& x) const;

 private:
  std::vector<GaussianComponent> components_;
  std::vector<Eigen::Matrix2d> chol_;
};

PointSet gmm_sample(const GmmModel& model, Eigen::Index n, std::mt19937_64& rng);
PointSet gmm_sample(const GmmModel& model, Eigen::Index n, std::uint64_t seed);

struct EmSettings {
  int restarts = 3;
  int max_iterations = 200;
  double tolerance = 1e-6;  // on the mean log-likelihood
  double covariance_floor = 1e-6;
};

struct GmmFit {
  GmmModel model;
  double log_likelihood = 0.0;  // mean per sample
  int iterations = 0;
  bool converged = false;
  bool degenerate = false;  // all samples identical
};

/// EM with k-means++ seeding; best of `restarts` runs by log-likelihood.
/// Needs at least 10·k samples and k ∈ {1, 2}.
GmmFit gmm_em_fit(const PointSet& samples, int k, std::uint64_t seed, const EmSettings& settings = {});

struct GmmExperimentConfig {
  Eigen::Vector2d mu1{2.0, 2.0};
  Eigen::Vector2d mu2{8.0, 8.0};
  double q = 0.5;  // q = 1 is the single-reward baseline
  int K = 100;
  int n_curated = 500;
  int T = 50;
  int low_capacity_until = 10;  // one component for t < this, two after
  double temperature = 1.0;
  int eval_samples = 1000;
  int init_samples = 1000;
  double init_variance = 3.0;
  EmSettings em;
  std::uint64_t seed = 0;

  void validate() const;
};

struct GmmIterationStats {
  int iteration = 0;
  Eigen::Vector2d expected_reward = Eigen::Vector2d::Zero();
  Eigen::Vector2d reward_variance = Eigen::Vector2d::Zero();
  int components = 1;
  std::vector<GaussianComponent> fitted;
  /// Mean active reward of the curated draws and of their candidate pools.
  double curated_active_reward = 0.0;
  double pool_active_reward = 0.0;
  /// Fraction of r₁-selected draws nearer μ₂, and of r₂-selected draws
  /// nearer μ₁.
  double leakage1 = 0.0;
  double leakage2 = 0.0;
};

struct GmmTrajectory {
  GmmExperimentConfig config;
  /// Entry 0 is the initial generator; entry t follows retraining round t.
  std::vector<GmmIterationStats> iterations;

  /// Weight of the final component whose mean is nearest μ₁.
  [[nodiscard]] double final_weight_near_mu1() const;
};

GmmTrajectory run_gmm_retraining(const GmmExperimentConfig& config);

}  // namespace pluralis
