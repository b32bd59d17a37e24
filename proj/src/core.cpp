#include "pluralis/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "pluralis/errors.hpp"
#include "pluralis/numeric.hpp"

namespace pluralis {
namespace {

void check_distinct_rows(const Eigen::MatrixXd& support) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(support.rows()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  auto row_less = [&](Eigen::Index a, Eigen::Index b) {
    for (Eigen::Index c = 0; c < support.cols(); ++c) {
      if (support(a, c) != support(b, c)) return support(a, c) < support(b, c);
    }
    return false;
  };
  std::sort(order.begin(), order.end(), row_less);
  for (std::size_t k = 1; k < order.size(); ++k) {
    if (!row_less(order[k - 1], order[k])) {
      std::ostringstream msg;
      msg << "support points " << order[k - 1] << " and " << order[k] << " coincide";
      throw InvalidInput(msg.str());
    }
  }
}

Eigen::VectorXd normalized(Eigen::VectorXd mass) {
  if (!all_finite(mass)) throw InvalidInput("mass contains NaN or Inf");
  if ((mass.array() < 0.0).any()) throw InvalidInput("mass contains negative entries");
  const double total = mass.sum();
  if (!(total > 0.0)) throw InvalidInput("mass sums to zero");
  if (!std::isfinite(total)) throw NumericalFailure("mass sum overflowed");
  mass /= total;
  return mass;
}

}  // namespace

GridDistribution::GridDistribution(SupportPtr support, Eigen::VectorXd mass)
    : support_(std::move(support)), mass_(std::move(mass)) {}

GridDistribution GridDistribution::build(Eigen::MatrixXd support, Eigen::VectorXd mass) {
  if (support.rows() == 0) throw InvalidInput("empty support");
  if (support.cols() != 1 && support.cols() != 2) {
    throw InvalidInput("support dimension must be 1 or 2, got " + std::to_string(support.cols()));
  }
  if (support.rows() != mass.size()) {
    throw InvalidInput("support has " + std::to_string(support.rows()) + " points but mass has " +
                       std::to_string(mass.size()) + " entries");
  }
  if (!all_finite(support)) throw InvalidInput("support contains NaN or Inf");
  check_distinct_rows(support);
  return GridDistribution(std::make_shared<const Eigen::MatrixXd>(std::move(support)),
                          normalized(std::move(mass)));
}

GridDistribution GridDistribution::reweighted(Eigen::VectorXd mass) const {
  if (mass.size() != mass_.size()) throw InvalidInput("reweighted mass has the wrong length");
  return GridDistribution(support_, normalized(std::move(mass)));
}

GridDistribution build_grid_distribution(Eigen::MatrixXd support, Eigen::VectorXd mass) {
  return GridDistribution::build(std::move(support), std::move(mass));
}

GridDistribution uniform_on(const GridDistribution& like) {
  return like.reweighted(Eigen::VectorXd::Ones(like.size()));
}

Eigen::MatrixXd line_grid(double lo, double hi, Eigen::Index n) {
  if (n < 1) throw InvalidInput("line_grid needs at least one point");
  return Eigen::VectorXd::LinSpaced(n, lo, hi);
}

Eigen::MatrixXd square_grid(double lo, double hi, Eigen::Index n_per_axis) {
  const Eigen::VectorXd axis = Eigen::VectorXd::LinSpaced(n_per_axis, lo, hi);
  Eigen::MatrixXd pts(n_per_axis * n_per_axis, 2);
  for (Eigen::Index i = 0; i < n_per_axis; ++i) {
    for (Eigen::Index j = 0; j < n_per_axis; ++j) {
      pts.row(i * n_per_axis + j) << axis[i], axis[j];
    }
  }
  return pts;
}

RewardField::RewardField(SupportPtr support, Eigen::VectorXd values)
    : RewardField(support, values, values.size() ? values.minCoeff() : 0.0,
                  values.size() ? values.maxCoeff() : 0.0) {}

RewardField::RewardField(SupportPtr support, Eigen::VectorXd values, double lower, double upper)
    : support_(std::move(support)), values_(std::move(values)), lower_(lower), upper_(upper) {
  if (!support_) throw InvalidInput("reward field needs a support");
  if (values_.size() == 0) throw InvalidInput("reward field is empty");
  if (values_.size() != support_->rows()) throw InvalidInput("reward values not aligned with support");
  if (!all_finite(values_)) throw InvalidInput("reward values contain NaN or Inf");
  if (!std::isfinite(lower_) || !std::isfinite(upper_) || lower_ > upper_) {
    throw InvalidInput("reward bounds must be finite with L <= U");
  }
  supremum_ = values_.maxCoeff(&argmax_);
  if (values_.minCoeff() < lower_ || supremum_ > upper_) {
    throw InvalidInput("reward values escape the declared bounds");
  }
}

RewardField RewardField::shifted(double c) const {
  return RewardField(support_, (values_.array() + c).matrix(), lower_ + c, upper_ + c);
}

RewardField RewardField::scaled(double gamma) const {
  if (!(gamma > 0.0)) throw InvalidInput("reward scale must be positive");
  return RewardField(support_, values_ * gamma, lower_ * gamma, upper_ * gamma);
}

bool same_support(const SupportPtr& a, const SupportPtr& b) {
  if (a == b) return true;
  if (!a || !b) return false;
  return a->rows() == b->rows() && a->cols() == b->cols() && *a == *b;
}

void require_aligned(const GridDistribution& dist, const RewardField& reward) {
  if (!same_support(dist.shared_support(), reward.shared_support())) {
    throw InvalidInput("distribution and reward field live on different supports");
  }
}

RewardField quadratic_reward(const Eigen::VectorXd& center, const SupportPtr& grid) {
  if (!grid || grid->rows() == 0) throw InvalidInput("quadratic_reward needs a nonempty grid");
  if (center.size() != grid->cols()) throw InvalidInput("center dimension does not match the grid");
  if (!all_finite(center)) throw InvalidInput("center contains NaN or Inf");
  Eigen::VectorXd values = -(grid->rowwise() - center.transpose()).rowwise().squaredNorm();
  return RewardField(grid, std::move(values));
}

RewardField quadratic_reward(const Eigen::VectorXd& center, const GridDistribution& dist) {
  return quadratic_reward(center, dist.shared_support());
}

PreferenceMixture::PreferenceMixture(Eigen::VectorXd weights) : weights_(std::move(weights)) {
  if (weights_.size() == 0) throw InvalidInput("preference mixture is empty");
  if (!all_finite(weights_)) throw InvalidInput("preference weights contain NaN or Inf");
  if (std::abs(weights_.sum() - 1.0) > kConstructionTolerance) {
    throw InvalidInput("preference weights must sum to 1");
  }
  if (weights_.size() == 1) {
    if (weights_[0] != 1.0) throw InvalidInput("single-reward mixture must have weight 1");
    return;
  }
  if ((weights_.array() <= 0.0).any() || (weights_.array() >= 1.0).any()) {
    throw InvalidInput("each preference weight must lie in (0, 1) when M >= 2");
  }
}

PreferenceMixture PreferenceMixture::two(double q) {
  Eigen::VectorXd w(2);
  w << q, 1.0 - q;
  return PreferenceMixture(std::move(w));
}

std::optional<double> BasinAnalysis::leakage(std::size_t i, std::size_t j) const {
  const double delta = gaps(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  if (!(delta > 2.0 * epsilon)) return std::nullopt;
  return std::exp(-(delta - 2.0 * epsilon));
}

double BasinAnalysis::gap(std::size_t i) const {
  if (reward_count() != 2) throw InvalidInput("gap(i) is the two-reward shorthand");
  return gaps(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(1 - i));
}

std::optional<double> BasinAnalysis::kappa(std::size_t i) const {
  if (reward_count() != 2) throw InvalidInput("kappa(i) is the two-reward shorthand");
  return leakage(i, 1 - i);
}

BasinAnalysis compute_basins(std::span<const RewardField> rewards, double epsilon,
                             bool assert_disjoint) {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw InvalidInput("epsilon must be positive");
  if (rewards.empty()) throw InvalidInput("compute_basins needs at least one reward");
  for (const auto& r : rewards) {
    if (!same_support(r.shared_support(), rewards.front().shared_support())) {
      throw InvalidInput("rewards do not share one support");
    }
  }

  const auto m = static_cast<Eigen::Index>(rewards.size());
  const Eigen::Index n = rewards.front().size();
  BasinAnalysis out;
  out.epsilon = epsilon;
  out.outside = Mask::Constant(n, true);
  for (const auto& r : rewards) {
    out.basins.push_back(r.values().array() >= r.supremum() - epsilon);
    out.outside = out.outside && !out.basins.back();
  }

  out.gaps = Eigen::MatrixXd::Constant(m, m, std::numeric_limits<double>::quiet_NaN());
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto& ri = rewards[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < m; ++j) {
      if (i == j) continue;
      const auto& basin = out.basins[static_cast<std::size_t>(j)];
      const double worst =
          basin.select(ri.values(), -std::numeric_limits<double>::infinity()).maxCoeff();
      out.gaps(i, j) = ri.supremum() + epsilon - worst;
    }
  }

  std::vector<Eigen::Index> overlapping;
  for (Eigen::Index x = 0; x < n; ++x) {
    int hits = 0;
    for (const auto& b : out.basins) hits += b[x] ? 1 : 0;
    if (hits > 1) overlapping.push_back(x);
  }
  out.disjoint = overlapping.empty();
  if (assert_disjoint && !out.disjoint) {
    std::ostringstream msg;
    msg << "basins overlap on " << overlapping.size() << " point(s):";
    for (std::size_t k = 0; k < std::min<std::size_t>(overlapping.size(), 10); ++k) {
      msg << ' ' << overlapping[k];
    }
    if (overlapping.size() > 10) msg << " ...";
    throw InvalidInput(msg.str());
  }
  return out;
}

double basin_mass(const GridDistribution& dist, const Mask& mask) {
  if (mask.size() != dist.size()) throw InvalidInput("mask not aligned with distribution");
  return masked_sum(dist.mass(), mask);
}

std::string to_string(WeightEstimator kind) {
  switch (kind) {
    case WeightEstimator::kExactEnumeration: return "exact-enumeration";
    case WeightEstimator::kMonteCarlo: return "monte-carlo";
    case WeightEstimator::kInfiniteTilt: return "infinite-tilt";
  }
  return "unknown";
}

LimitEstimate limiting_basin_mass(const Trajectory& traj, std::size_t basin, std::size_t window,
                                  double tolerance) {
  if (traj.records.empty()) throw InvalidInput("empty trajectory");
  const std::size_t count = std::min(window, traj.records.size());
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  double sum = 0.0;
  for (std::size_t k = traj.records.size() - count; k < traj.records.size(); ++k) {
    const double a = traj.records[k].basin_mass[static_cast<Eigen::Index>(basin)];
    lo = std::min(lo, a);
    hi = std::max(hi, a);
    sum += a;
  }
  return {sum / static_cast<double>(count), hi - lo, (hi - lo) <= tolerance};
}

}  // namespace pluralis
