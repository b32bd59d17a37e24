#include "pluralis/landscape.hpp"

#include <cmath>

#include "pluralis/errors.hpp"

namespace pluralis {

TwoModeLandscape mode_aligned_line(double distance, const LineGridOptions& options) {
  if (!(distance >= 0.0) || !std::isfinite(distance)) throw InvalidInput("distance must be >= 0");
  if (!(options.target_spacing > 0.0)) throw InvalidInput("target spacing must be positive");
  if (options.points < 2) throw InvalidInput("line grid needs at least two points");

  double spacing = options.target_spacing;
  double phase = 0.0;
  if (distance > 0.0) {
    const double steps = std::max(1.0, std::round(distance / options.target_spacing));
    spacing = distance / steps;
    // Odd step counts put the midpoint between two grid points.
    phase = std::fmod(steps, 2.0) == 0.0 ? 0.0 : 0.5;
  }

  const double half = static_cast<double>(options.points - 1) / 2.0;
  Eigen::MatrixXd pts(options.points, 1);
  for (Eigen::Index j = 0; j < options.points; ++j) {
    pts(j, 0) = options.midpoint + (static_cast<double>(j) - std::floor(half) - phase) * spacing;
  }
  auto support = std::make_shared<const Eigen::MatrixXd>(std::move(pts));

  Eigen::VectorXd c1(1), c2(1);
  c1 << options.midpoint - distance / 2.0;
  c2 << options.midpoint + distance / 2.0;
  return {support, c1, c2, quadratic_reward(c1, support), quadratic_reward(c2, support), spacing};
}

TwoModeLandscape diagonal_square(double distance, double lo, double hi, Eigen::Index n_per_axis,
                                 double midpoint) {
  auto support = std::make_shared<const Eigen::MatrixXd>(square_grid(lo, hi, n_per_axis));
  const Eigen::Vector2d dir = Eigen::Vector2d::Ones() / std::sqrt(2.0);
  const Eigen::Vector2d mid = Eigen::Vector2d::Constant(midpoint);
  const Eigen::VectorXd c1 = mid - distance / 2.0 * dir;
  const Eigen::VectorXd c2 = mid + distance / 2.0 * dir;
  return {support, c1, c2, quadratic_reward(c1, support), quadratic_reward(c2, support),
          (hi - lo) / static_cast<double>(n_per_axis - 1)};
}

PlateauLandscape plateau_landscape(const PlateauSpec& spec) {
  if (spec.basin1_points < 1 || spec.basin2_points < 1) {
    throw InvalidInput("each plateau basin needs at least one point");
  }
  if (spec.outside_r1.size() != spec.outside_r2.size()) {
    throw InvalidInput("outside reward vectors differ in length");
  }
  if (!(spec.delta1 > 0.0) || !(spec.delta2 > 0.0)) throw InvalidInput("plateau gaps must be > 0");
  const Eigen::Index n1 = spec.basin1_points;
  const Eigen::Index n2 = spec.basin2_points;
  const Eigen::Index no = spec.outside_r1.size();
  const Eigen::Index n = n1 + n2 + no;

  Eigen::MatrixXd pts(n, 1);
  for (Eigen::Index j = 0; j < n; ++j) pts(j, 0) = static_cast<double>(j);
  auto support = std::make_shared<const Eigen::MatrixXd>(std::move(pts));

  Eigen::VectorXd r1(n), r2(n);
  r1.segment(0, n1).setConstant(spec.top1);
  r2.segment(0, n1).setConstant(spec.top2 - spec.delta2);
  r1.segment(n1, n2).setConstant(spec.top1 - spec.delta1);
  r2.segment(n1, n2).setConstant(spec.top2);
  if (no > 0) {
    r1.tail(no) = spec.outside_r1;
    r2.tail(no) = spec.outside_r2;
    if (spec.outside_r1.maxCoeff() >= spec.top1 || spec.outside_r2.maxCoeff() >= spec.top2) {
      throw InvalidInput("outside rewards must stay below the plateau tops");
    }
  }
  return {support, RewardField(support, std::move(r1)), RewardField(support, std::move(r2)), 0, n1,
          n1 + n2};
}

}  // namespace pluralis
