#include "pluralis/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/LU>

#include "pluralis/dynamics.hpp"
#include "pluralis/errors.hpp"
#include "pluralis/numeric.hpp"

namespace pluralis {
namespace {

void check_kappa(const std::optional<double>& kappa, const char* name) {
  if (!kappa) return;
  if (!(*kappa >= 0.0 && *kappa < 1.0)) {
    throw InvalidInput(std::string(name) + " must lie in [0, 1), got " + std::to_string(*kappa));
  }
}

void check_two_basins(const BasinAnalysis& basins, std::size_t reward_index, std::size_t n_rewards) {
  if (basins.reward_count() != 2 || n_rewards != 2) {
    throw InvalidInput("this analysis is defined for two rewards and two basins");
  }
  if (reward_index > 1) throw InvalidInput("reward index must be 0 or 1");
}

struct Conditional {
  double mass = 0.0;
  double mean = 0.0;
  double var = 0.0;
};

Conditional conditional_moments(const Eigen::VectorXd& mass, const Eigen::VectorXd& values,
                                const Mask& mask) {
  Conditional c;
  const Eigen::VectorXd m = mask.select(mass, 0.0);
  c.mass = m.sum();
  if (c.mass > 0.0) {
    const Eigen::VectorXd w = m / c.mass;
    c.mean = expectation(w, values);
    c.var = variance(w, values);
  }
  return c;
}

}  // namespace

LeakageInterval leakage_interval(double q, std::optional<double> kappa1,
                                 std::optional<double> kappa2) {
  if (!(q > 0.0 && q < 1.0)) throw InvalidInput("q must lie in (0, 1)");
  check_kappa(kappa1, "kappa1");
  check_kappa(kappa2, "kappa2");
  LeakageInterval out;
  out.q = q;
  out.kappa1 = kappa1;
  out.kappa2 = kappa2;
  if (!kappa1 || !kappa2) {
    out.vacuous = true;
    return out;
  }
  out.lower = std::max(0.0, (q - *kappa1) / (1.0 - *kappa1));
  out.upper = std::min(1.0, q / (1.0 - *kappa2));
  return out;
}

LeakageInterval leakage_interval(double q, const BasinAnalysis& basins) {
  return leakage_interval(q, basins.kappa(0), basins.kappa(1));
}

OutsideDomination outside_domination(const GridDistribution& dist,
                                     std::span<const RewardField> rewards,
                                     const PreferenceMixture& mixture, const BasinAnalysis& basins) {
  if (basins.outside.size() != dist.size()) throw InvalidInput("basins computed on another support");
  OutsideDomination out;
  if (!basins.outside.any()) {
    out.empty_outside = true;
    return out;
  }
  const Eigen::VectorXd w = infinite_k_multiplier(dist, rewards, mixture);
  out.rho_sup = basins.outside.select(w, -std::numeric_limits<double>::infinity()).maxCoeff();
  return out;
}

DecayFit fit_log_linear(std::span<const double> series, double floor) {
  if (series.empty() || !(series.front() > 0.0)) {
    throw InvalidInput("outside mass is zero from the first step; nothing to fit");
  }
  std::vector<double> t, y;
  for (std::size_t k = 0; k < series.size(); ++k) {
    if (series[k] > floor) {
      t.push_back(static_cast<double>(k));
      y.push_back(std::log(series[k]));
    }
  }
  if (t.size() < 5) {
    throw InvalidInput("decay fit needs at least 5 steps above the floor, got " +
                       std::to_string(t.size()));
  }
  const Eigen::Map<const Eigen::VectorXd> tv(t.data(), static_cast<Eigen::Index>(t.size()));
  const Eigen::Map<const Eigen::VectorXd> yv(y.data(), static_cast<Eigen::Index>(y.size()));
  const double tm = tv.mean();
  const double ym = yv.mean();
  const Eigen::ArrayXd dt = tv.array() - tm;
  const Eigen::ArrayXd dy = yv.array() - ym;
  DecayFit fit;
  fit.points = t.size();
  fit.slope = (dt * dy).sum() / dt.square().sum();
  fit.intercept = ym - fit.slope * tm;
  const double ss_tot = dy.square().sum();
  const double ss_res = (dy - fit.slope * dt).square().sum();
  fit.r_squared = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
  return fit;
}

DecayFit fit_decay_rate(const Trajectory& traj, double floor) {
  std::vector<double> m;
  m.reserve(traj.records.size());
  for (const auto& r : traj.records) m.push_back(r.outside_mass);
  return fit_log_linear(m, floor);
}

VarianceDecomposition variance_decomposition(const GridDistribution& dist,
                                             std::span<const RewardField> rewards,
                                             const BasinAnalysis& basins, std::size_t reward_index) {
  check_two_basins(basins, reward_index, rewards.size());
  const auto& r = rewards[reward_index];
  require_aligned(dist, r);
  const Conditional s1 = conditional_moments(dist.mass(), r.values(), basins.basins[0]);
  const Conditional s2 = conditional_moments(dist.mass(), r.values(), basins.basins[1]);

  VarianceDecomposition out;
  out.outside_mass = masked_sum(dist.mass(), basins.outside);
  out.outside_mass_warning = out.outside_mass > 1e-6;
  out.unconditional_variance = variance(dist.mass(), r.values());
  const double union_mass = s1.mass + s2.mass;
  out.empty_basin = s1.mass == 0.0 || s2.mass == 0.0;
  if (union_mass == 0.0) return out;

  out.a = s1.mass / union_mass;
  out.within1 = s1.var;
  out.within2 = s2.var;
  out.mean1 = s1.mean;
  out.mean2 = s2.mean;
  out.between = out.empty_basin ? 0.0 : out.a * (1.0 - out.a) * std::pow(s1.mean - s2.mean, 2);
  const Mask either = basins.basins[0] || basins.basins[1];
  const Eigen::VectorXd cond = either.select(dist.mass(), 0.0) / union_mass;
  out.total = variance(cond, r.values());
  const double margin = std::max(0.0, basins.gap(reward_index) - 2.0 * basins.epsilon);
  out.lower_bound = out.a * (1.0 - out.a) * margin * margin;
  return out;
}

ExpectedRewardLimit expected_reward_limit(const GridDistribution& dist,
                                          std::span<const RewardField> rewards,
                                          const BasinAnalysis& basins, std::size_t reward_index) {
  check_two_basins(basins, reward_index, rewards.size());
  const auto& r = rewards[reward_index];
  require_aligned(dist, r);
  const std::size_t other = 1 - reward_index;
  const Conditional own = conditional_moments(dist.mass(), r.values(), basins.basins[reward_index]);
  const Conditional cross = conditional_moments(dist.mass(), r.values(), basins.basins[other]);

  ExpectedRewardLimit out;
  out.mixture_mean = expectation(dist.mass(), r.values());
  out.a = masked_sum(dist.mass(), basins.basins[0]);
  out.own_basin_mean = own.mean;
  out.cross_basin_mean = cross.mean;
  out.empty_basin = own.mass == 0.0 || cross.mass == 0.0;
  const double tol = 1e-12 * std::max(1.0, std::abs(r.supremum()));
  out.own_basin_ok = own.mass > 0.0 && own.mean >= r.supremum() - basins.epsilon - tol;
  out.cross_basin_ok = cross.mass > 0.0 &&
                       cross.mean <= r.supremum() - basins.gap(reward_index) + basins.epsilon + tol;
  return out;
}

NashSolution nash_solve(const GridDistribution& p1, const GridDistribution& p2,
                        const RewardField& r1, const RewardField& r2, double q, int grid_points) {
  require_aligned(p1, r1);
  require_aligned(p1, r2);
  require_aligned(p2, r1);
  if (!(q > 0.0 && q < 1.0)) throw InvalidInput("q must lie in (0, 1)");
  if (grid_points < 3) throw InvalidInput("Nash grid needs at least 3 points");

  NashSolution out;
  const double u11 = expectation(p1.mass(), r1.values());
  const double u12 = expectation(p2.mass(), r1.values());
  const double u22 = expectation(p2.mass(), r2.values());
  const double u21 = expectation(p1.mass(), r2.values());
  out.disagreement1 = u12;
  out.disagreement2 = u21;
  out.gain1 = u11 - u12;
  out.gain2 = u22 - u21;
  if (!(out.gain1 > 0.0)) {
    throw AssumptionViolation("preference 1 does not favour its own basin: u1(P1) - u1(P2) = " +
                              std::to_string(out.gain1));
  }
  if (!(out.gain2 > 0.0)) {
    throw AssumptionViolation("preference 2 does not favour its own basin: u2(P2) - u2(P1) = " +
                              std::to_string(out.gain2));
  }

  out.closed_form = q;
  out.alpha_star = q;
  out.alpha_grid = Eigen::VectorXd::LinSpaced(grid_points, 0.0, 1.0);
  out.grid_spacing = 1.0 / static_cast<double>(grid_points - 1);
  out.log_nash_product.resize(grid_points);
  for (int k = 0; k < grid_points; ++k) {
    const double alpha = out.alpha_grid[k];
    // Utilities of the mixture are linear in α.
    const double surplus1 = alpha * u11 + (1.0 - alpha) * u12 - out.disagreement1;
    const double surplus2 = alpha * u21 + (1.0 - alpha) * u22 - out.disagreement2;
    out.log_nash_product[k] = (surplus1 > 0.0 && surplus2 > 0.0)
                                  ? q * std::log(surplus1) + (1.0 - q) * std::log(surplus2)
                                  : -std::numeric_limits<double>::infinity();
  }
  Eigen::Index best = 0;
  out.log_nash_product.maxCoeff(&best);
  out.grid_argmax = out.alpha_grid[best];
  return out;
}

double mean_squared_error(std::span<const double> estimate, std::span<const double> target) {
  if (estimate.size() != target.size() || estimate.empty()) {
    throw InvalidInput("MSE needs two nonempty series of equal length");
  }
  double acc = 0.0;
  for (std::size_t k = 0; k < estimate.size(); ++k) acc += std::pow(estimate[k] - target[k], 2);
  return acc / static_cast<double>(estimate.size());
}

double RateBound::operator()(int K) const {
  const double k = static_cast<double>(K);
  return c1 * std::sqrt(std::log(k) / k) + c2 / k;
}

RateBound fit_dominating_bound(std::span<const int> k_values, std::span<const double> deviations) {
  if (k_values.size() != deviations.size() || k_values.empty()) {
    throw InvalidInput("bound fit needs matching nonempty K and deviation lists");
  }
  const std::size_t n = k_values.size();
  auto basis = [](int K) {
    const double k = static_cast<double>(K);
    return Eigen::Vector2d(std::sqrt(std::log(k) / k), 1.0 / k);
  };
  auto feasible = [&](const RateBound& b) {
    if (b.c1 < 0.0 || b.c2 < 0.0) return false;
    for (std::size_t k = 0; k < n; ++k) {
      if (b(k_values[k]) < deviations[k] * (1.0 - 1e-12)) return false;
    }
    return true;
  };
  auto cost = [&](const RateBound& b) {
    double s = 0.0;
    for (int K : k_values) s += b(K);
    return s;
  };

  // Linear program in two variables: the optimum sits on a vertex formed by
  // two active constraints or one active constraint and an axis.
  std::vector<RateBound> candidates;
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector2d bi = basis(k_values[i]);
    if (bi[0] > 0.0) candidates.push_back({deviations[i] / bi[0], 0.0});
    candidates.push_back({0.0, deviations[i] / bi[1]});
    for (std::size_t j = i + 1; j < n; ++j) {
      Eigen::Matrix2d a;
      a.row(0) = bi.transpose();
      a.row(1) = basis(k_values[j]).transpose();
      if (std::abs(a.determinant()) < 1e-300) continue;
      const Eigen::Vector2d c = a.fullPivLu().solve(Eigen::Vector2d(deviations[i], deviations[j]));
      candidates.push_back({c[0], c[1]});
    }
  }
  RateBound best{0.0, 0.0};
  double best_cost = std::numeric_limits<double>::infinity();
  for (const auto& c : candidates) {
    if (feasible(c) && cost(c) < best_cost) {
      best = c;
      best_cost = cost(c);
    }
  }
  return best;
}

ConcentrationCurve concentration_curve(const GridDistribution& dist, const RewardField& reward,
                                       std::span<const int> k_list, int n_mc, std::uint64_t seed,
                                       double epsilon, std::size_t state_cap) {
  if (k_list.empty()) throw InvalidInput("K list is empty");
  for (std::size_t k = 0; k < k_list.size(); ++k) {
    if (k_list[k] < 2) throw InvalidInput("every K must be >= 2");
    if (k > 0 && k_list[k] <= k_list[k - 1]) throw InvalidInput("K list must be ascending");
  }
  const RewardField rewards[] = {reward};
  const BasinAnalysis basins = compute_basins(rewards, epsilon, false);
  const Mask& near_optimal = basins.basins[0];
  const Eigen::VectorXd tilt = tilt_weight(dist, reward).weight;

  ConcentrationCurve out;
  std::vector<double> devs;
  for (std::size_t k = 0; k < k_list.size(); ++k) {
    const auto est = bt_weight(dist, reward, k_list[k], n_mc, seed + k, state_cap);
    const Eigen::VectorXd gap = near_optimal.select((est.weight - tilt).cwiseAbs(), 0.0);
    Eigen::Index arg = 0;
    ConcentrationPoint pt;
    pt.K = k_list[k];
    pt.deviation = gap.maxCoeff(&arg);
    pt.estimator = est.kind;
    if (est.kind == WeightEstimator::kMonteCarlo) pt.standard_error = est.standard_error[arg];
    out.points.push_back(pt);
    devs.push_back(pt.deviation);
  }

  out.strictly_decreasing = true;
  for (std::size_t k = 1; k < devs.size(); ++k) {
    if (!(devs[k] < devs[k - 1])) out.strictly_decreasing = false;
  }
  out.envelope = fit_dominating_bound(k_list, devs);

  const std::size_t head = std::max<std::size_t>(2, (k_list.size() + 1) / 2);
  if (head < k_list.size()) {
    out.early_envelope = fit_dominating_bound(k_list.first(head), std::span(devs).first(head));
    out.early_envelope_dominates = true;
    for (std::size_t k = head; k < k_list.size(); ++k) {
      if (out.early_envelope(k_list[k]) < devs[k]) out.early_envelope_dominates = false;
    }
  }
  return out;
}

}  // namespace pluralis
