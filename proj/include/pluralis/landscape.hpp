#pragma once

// Reward landscapes used by the experiments: two quadratic modes on a line or
// in the plane, and two-basin plateau landscapes.

#include <Eigen/Core>

#include "pluralis/core.hpp"

namespace pluralis {

struct TwoModeLandscape {
  SupportPtr support;
  Eigen::VectorXd center1;
  Eigen::VectorXd center2;
  RewardField r1;
  RewardField r2;
  double spacing = 0.0;
};

struct LineGridOptions {
  Eigen::Index points = 401;
  /// Requested spacing; the realised spacing is D / round(D / target) so that
  /// both modes fall on grid points.
  double target_spacing = 0.75;
  double midpoint = 5.0;
};

/// Quadratic rewards centred at midpoint ∓ D/2 on a uniform line grid that
/// contains both centres.
TwoModeLandscape mode_aligned_line(double distance, const LineGridOptions& options = {});

/// Quadratic rewards centred at midpoint ∓ (D/2)·(1,1)/√2 on a square grid.
TwoModeLandscape diagonal_square(double distance, double lo, double hi, Eigen::Index n_per_axis,
                                 double midpoint = 5.0);

/// Two plateau basins: both rewards are constant on each basin.
/// r₁ = top1 on S₁ and top1 − delta1 on S₂; r₂ = top2 on S₂ and top2 − delta2
/// on S₁. Outside points take the per-point values in `outside_r1/_r2`
/// (length = outside point count), which must stay below top − ε.
struct PlateauSpec {
  Eigen::Index basin1_points = 4;
  Eigen::Index basin2_points = 4;
  double top1 = 0.0;
  double top2 = 0.0;
  double delta1 = 4.0;
  double delta2 = 4.0;
  Eigen::VectorXd outside_r1;
  Eigen::VectorXd outside_r2;
};

struct PlateauLandscape {
  SupportPtr support;
  RewardField r1;
  RewardField r2;
  Eigen::Index basin1_begin = 0;
  Eigen::Index basin2_begin = 0;
  Eigen::Index outside_begin = 0;
};

/// Points are laid out on the integer line: basin 1, then basin 2, then the
/// outside region.
PlateauLandscape plateau_landscape(const PlateauSpec& spec);

}  // namespace pluralis
