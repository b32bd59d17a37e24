#include "pluralis/dynamics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>

#include "pluralis/errors.hpp"
#include "pluralis/numeric.hpp"

namespace pluralis {
namespace {

void check_rewards(const GridDistribution& dist, std::span<const RewardField> rewards,
                   const PreferenceMixture& mixture) {
  if (rewards.empty()) throw InvalidInput("dynamics need at least one reward");
  if (static_cast<Eigen::Index>(rewards.size()) != mixture.size()) {
    throw InvalidInput("mixture length does not match the number of rewards");
  }
  for (const auto& r : rewards) require_aligned(dist, r);
}

std::uint64_t step_seed(std::uint64_t seed, int step, std::size_t reward) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(reward)};
  std::array<std::uint32_t, 2> words{};
  seq.generate(words.begin(), words.end());
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

TrajectoryRecord measure(int step, const GridDistribution& dist, std::span<const RewardField> rewards,
                         const BasinAnalysis& basins, const Eigen::VectorXd& multiplier) {
  TrajectoryRecord rec;
  rec.step = step;
  const auto m = static_cast<Eigen::Index>(rewards.size());
  rec.basin_mass.resize(static_cast<Eigen::Index>(basins.reward_count()));
  for (std::size_t i = 0; i < basins.reward_count(); ++i) {
    rec.basin_mass[static_cast<Eigen::Index>(i)] = masked_sum(dist.mass(), basins.basins[i]);
  }
  rec.outside_mass = masked_sum(dist.mass(), basins.outside);
  rec.expected_reward.resize(m);
  rec.reward_variance.resize(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto& values = rewards[static_cast<std::size_t>(i)].values();
    rec.expected_reward[i] = expectation(dist.mass(), values);
    rec.reward_variance[i] = variance(dist.mass(), values);
  }
  rec.entropy = shannon_entropy(dist.mass());
  rec.outside_multiplier_sup =
      basins.outside.any() ? basins.outside.select(multiplier, -1.0).maxCoeff() : 0.0;
  return rec;
}

}  // namespace

void DynamicsConfig::validate() const {
  if (steps < 1) throw InvalidInput("steps T must be >= 1");
  if (rewards.empty()) throw InvalidInput("dynamics need at least one reward");
  if (static_cast<Eigen::Index>(rewards.size()) != mixture.size()) {
    throw InvalidInput("mixture length does not match the number of rewards");
  }
  for (const auto& r : rewards) {
    if (!same_support(r.shared_support(), rewards.front().shared_support())) {
      throw InvalidInput("rewards do not share one support");
    }
  }
  if (!(epsilon > 0.0)) throw InvalidInput("epsilon must be positive");
  if (const auto* pool = std::get_if<FinitePool>(&mode)) {
    if (pool->K < 2) throw InvalidInput("pool size K must be >= 2");
    if (pool->n_mc < 100) throw InvalidInput("n_mc must be >= 100");
  }
  for (int s : snapshots) {
    if (s < 0 || s > steps) throw InvalidInput("snapshot step " + std::to_string(s) + " outside [0, T]");
  }
}

Eigen::VectorXd infinite_k_multiplier(const GridDistribution& dist,
                                      std::span<const RewardField> rewards,
                                      const PreferenceMixture& mixture) {
  check_rewards(dist, rewards, mixture);
  Eigen::VectorXd w = Eigen::VectorXd::Zero(dist.size());
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    w += mixture[static_cast<Eigen::Index>(i)] * tilt_weight(dist, rewards[i]).weight;
  }
  return w;
}

Eigen::VectorXd finite_k_multiplier(const GridDistribution& dist,
                                    std::span<const RewardField> rewards,
                                    const PreferenceMixture& mixture, const FinitePool& pool,
                                    std::uint64_t seed, std::vector<WeightEstimator>* used) {
  check_rewards(dist, rewards, mixture);
  Eigen::VectorXd w = Eigen::VectorXd::Zero(dist.size());
  if (used) used->clear();
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    const auto est =
        bt_weight(dist, rewards[i], pool.K, pool.n_mc, step_seed(seed, 0, i), pool.state_cap);
    w += mixture[static_cast<Eigen::Index>(i)] * est.weight;
    if (used) used->push_back(est.kind);
  }
  return w;
}

GridDistribution step_infinite_k(const GridDistribution& dist, std::span<const RewardField> rewards,
                                 const PreferenceMixture& mixture) {
  const Eigen::VectorXd w = infinite_k_multiplier(dist, rewards, mixture);
  return dist.reweighted(dist.mass().cwiseProduct(w));
}

GridDistribution step_finite_k(const GridDistribution& dist, std::span<const RewardField> rewards,
                               const PreferenceMixture& mixture, int K, int n_mc,
                               std::uint64_t seed, std::size_t state_cap) {
  const Eigen::VectorXd w =
      finite_k_multiplier(dist, rewards, mixture, FinitePool{K, n_mc, state_cap}, seed);
  return dist.reweighted(dist.mass().cwiseProduct(w));
}

Trajectory run_trajectory(const GridDistribution& init, const DynamicsConfig& config,
                          const BasinAnalysis& basins) {
  config.validate();
  for (const auto& r : config.rewards) require_aligned(init, r);
  if (basins.reward_count() != config.rewards.size()) {
    throw InvalidInput("basin analysis was computed for a different number of rewards");
  }
  if (basins.outside.size() != init.size()) throw InvalidInput("basins computed on another support");
  if (basins.epsilon != config.epsilon) throw InvalidInput("basins use a different epsilon");

  const std::span<const RewardField> rewards(config.rewards);
  const auto* finite = std::get_if<FinitePool>(&config.mode);

  Trajectory traj;
  traj.support = init.shared_support();
  traj.records.reserve(static_cast<std::size_t>(config.steps) + 1);
  auto snapshot_due = [&](int t) {
    return std::find(config.snapshots.begin(), config.snapshots.end(), t) != config.snapshots.end();
  };

  GridDistribution current = init;
  double pre_sum = 1.0;
  for (int t = 0;; ++t) {
    const Eigen::VectorXd tilt = infinite_k_multiplier(current, rewards, config.mixture);
    TrajectoryRecord rec = measure(t, current, rewards, basins, tilt);
    rec.pre_normalization_sum = pre_sum;
    traj.records.push_back(std::move(rec));
    if (snapshot_due(t)) traj.snapshots.emplace(t, current.mass());
    if (t == config.steps) break;

    Eigen::VectorXd multiplier;
    if (finite) {
      std::vector<WeightEstimator> used;
      multiplier = finite_k_multiplier(current, rewards, config.mixture, *finite,
                                       step_seed(config.seed, t, 0), &used);
      traj.estimators.push_back(std::move(used));
    } else {
      multiplier = tilt;
    }
    Eigen::VectorXd next = current.mass().cwiseProduct(multiplier);
    pre_sum = next.sum();
    if (!std::isfinite(pre_sum) || !(pre_sum > 0.0)) {
      throw NumericalFailure("dynamics step " + std::to_string(t) + " produced an invalid mass sum");
    }
    current = current.reweighted(std::move(next));
  }
  traj.final_mass = current.mass();
  return traj;
}

}  // namespace pluralis
