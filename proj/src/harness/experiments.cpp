#include "experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "pluralis/analysis.hpp"
#include "pluralis/errors.hpp"
#include "pluralis/numeric.hpp"

namespace pluralis::detail {

void OutputSink::write(const std::string& name, const CsvWriter& csv) {
  // Record first: a half-written file must still be cleaned up.
  written.push_back(name);
  csv.save(dir / name);
}

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Runs fn(i) for i in [0, n) on up to `threads` workers. The first exception
// is rethrown after all workers stop.
template <class Fn>
void parallel_for(std::size_t n, int threads, Fn fn) {
  const auto workers = static_cast<std::size_t>(std::max(1, threads));
  if (workers == 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = n;
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(workers, n); ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

double value_or_nan(const std::optional<double>& v) { return v ? *v : kNaN; }

long long as_ll(std::size_t v) { return static_cast<long long>(v); }

// One two-mode grid run: landscape, basins, trajectory and its a_∞.
struct TwoModeRun {
  TwoModeLandscape land;
  BasinAnalysis basins;
  Trajectory traj;
  LimitEstimate limit;
  LeakageInterval interval;
};

TwoModeRun run_two_mode(double distance, double q, const ExactSetup& setup, const CurationMode& mode,
                        std::uint64_t seed) {
  TwoModeLandscape land = mode_aligned_line(distance, setup.grid);
  const std::vector<RewardField> rewards{land.r1, land.r2};
  BasinAnalysis basins = compute_basins(rewards, setup.dynamics.epsilon, true);
  const GridDistribution init =
      GridDistribution::build(*land.support, Eigen::VectorXd::Ones(land.support->rows()));

  DynamicsConfig cfg = setup.dynamics;
  cfg.rewards = rewards;
  cfg.mixture = PreferenceMixture::two(q);
  cfg.mode = mode;
  cfg.seed = seed;
  Trajectory traj = run_trajectory(init, cfg, basins);
  const LimitEstimate limit = limiting_basin_mass(traj, 0, setup.limit_window, setup.limit_tolerance);
  const LeakageInterval interval = leakage_interval(q, basins);
  return {std::move(land), std::move(basins), std::move(traj), limit, interval};
}

// a_∞ is a trailing-window mean, so it is only known to within the window's
// drift; containment is judged up to that drift.
bool contained(const TwoModeRun& run) {
  return run.interval.contains(run.limit.value, run.limit.range + 1e-12);
}

DecayFit decay_or_nan(const Trajectory& traj, double floor) {
  try {
    return fit_decay_rate(traj, floor);
  } catch (const InvalidInput&) {
    return {kNaN, kNaN, kNaN, 0};
  }
}

GridDistribution conditional(const GridDistribution& dist, const Mask& mask) {
  return dist.reweighted(mask.select(dist.mass(), 0.0));
}

void exact_dynamics(const ExperimentSpec& spec, OutputSink& sink) {
  const ExactSetup setup = exact_setup_from(spec);
  const TwoModeRun run = run_two_mode(setup.distance, setup.q, setup, setup.dynamics.mode, spec.seed);

  CsvWriter traj({"step", "a", "b", "outside", "expected_r1", "expected_r2", "var_r1", "var_r2", "entropy",
                  "rho_sup", "pre_normalization_sum"});
  for (const auto& r : run.traj.records) {
    traj.add_row({static_cast<long long>(r.step), r.basin_mass[0], r.basin_mass[1], r.outside_mass,
                  r.expected_reward[0], r.expected_reward[1], r.reward_variance[0], r.reward_variance[1],
                  r.entropy, r.outside_multiplier_sup, r.pre_normalization_sum});
  }
  sink.write("trajectory.csv", traj);

  CsvWriter snaps({"step", "x", "mass"});
  for (const auto& [step, mass] : run.traj.snapshots) {
    for (Eigen::Index j = 0; j < mass.size(); ++j) {
      snaps.add_row({static_cast<long long>(step), (*run.land.support)(j, 0), mass[j]});
    }
  }
  sink.write("snapshots.csv", snaps);

  if (!run.traj.estimators.empty()) {
    CsvWriter est({"step", "reward", "estimator"});
    for (std::size_t t = 0; t < run.traj.estimators.size(); ++t) {
      for (std::size_t i = 0; i < run.traj.estimators[t].size(); ++i) {
        est.add_row({as_ll(t), as_ll(i + 1), to_string(run.traj.estimators[t][i])});
      }
    }
    sink.write("estimators.csv", est);
  }

  const DecayFit fit = decay_or_nan(run.traj, setup.decay_floor);
  const GridDistribution final_dist = GridDistribution::build(*run.land.support, run.traj.final_mass);
  const std::vector<RewardField> rewards{run.land.r1, run.land.r2};
  CsvWriter summary({"distance", "q", "spacing", "gap1", "gap2", "kappa1", "kappa2", "lower", "upper", "a_inf",
                     "a_range", "converged", "contained", "decay_slope", "decay_r_squared", "var_r1",
                     "var_r1_lower_bound", "var_r2", "var_r2_lower_bound"});
  const auto v1 = variance_decomposition(final_dist, rewards, run.basins, 0);
  const auto v2 = variance_decomposition(final_dist, rewards, run.basins, 1);
  summary.add_row({setup.distance, setup.q, run.land.spacing, run.basins.gap(0), run.basins.gap(1),
                   value_or_nan(run.interval.kappa1), value_or_nan(run.interval.kappa2), run.interval.lower,
                   run.interval.upper, run.limit.value, run.limit.range, run.limit.converged,
                   contained(run), fit.slope, fit.r_squared, v1.total, v1.lower_bound,
                   v2.total, v2.lower_bound});
  sink.write("summary.csv", summary);

  const double rho = run.traj.records.back().outside_multiplier_sup;
  if (setup.require_outside_domination && run.basins.outside.any() && !(rho < 1.0)) {
    throw AssumptionViolation("outside domination fails at the final step: rho_sup = " + format_double(rho));
  }
}

void leakage_sweep(const ExperimentSpec& spec, OutputSink& sink) {
  const ExactSetup setup = exact_setup_from(spec);
  const auto qs = spec.numbers("qs");
  const auto ds = spec.numbers("distances");
  std::vector<std::optional<TwoModeRun>> runs(qs.size() * ds.size());
  parallel_for(runs.size(), spec.threads, [&](std::size_t i) {
    runs[i] = run_two_mode(ds[i / qs.size()], qs[i % qs.size()], setup, InfinitePool{}, spec.seed);
  });
  CsvWriter out({"q", "D", "lower", "empirical", "upper", "contained", "kappa1", "kappa2", "converged", "range"});
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto& r = *runs[i];
    out.add_row({qs[i % qs.size()], ds[i / qs.size()], r.interval.lower, r.limit.value, r.interval.upper,
                 contained(r), value_or_nan(r.interval.kappa1),
                 value_or_nan(r.interval.kappa2), r.limit.converged, r.limit.range});
  }
  sink.write("leakage.csv", out);
}

void decay_sweep(const ExperimentSpec& spec, OutputSink& sink) {
  const ExactSetup setup = exact_setup_from(spec);
  const auto ds = spec.numbers("distances");
  std::vector<DecayFit> fits(ds.size());
  std::vector<std::optional<TwoModeRun>> runs(ds.size());
  parallel_for(ds.size(), spec.threads, [&](std::size_t i) {
    runs[i] = run_two_mode(ds[i], setup.q, setup, InfinitePool{}, spec.seed);
    fits[i] = decay_or_nan(runs[i]->traj, setup.decay_floor);
  });
  CsvWriter out({"distance", "slope", "r_squared", "intercept", "points"});
  CsvWriter series({"distance", "step", "outside"});
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out.add_row({ds[i], fits[i].slope, fits[i].r_squared, fits[i].intercept, as_ll(fits[i].points)});
    for (const auto& r : runs[i]->traj.records) series.add_row({ds[i], static_cast<long long>(r.step), r.outside_mass});
  }
  sink.write("decay.csv", out);
  sink.write("outside_mass.csv", series);
}

void nash_sweep(const ExperimentSpec& spec, OutputSink& sink) {
  const ExactSetup setup = exact_setup_from(spec);
  const auto qs = spec.numbers("qs");
  const auto ds = spec.numbers("distances");
  const int grid = spec.integer("nash_grid");
  struct Cell {
    LimitEstimate limit;
    NashSolution nash;
  };
  std::vector<Cell> cells(qs.size() * ds.size());
  parallel_for(cells.size(), spec.threads, [&](std::size_t i) {
    const double q = qs[i % qs.size()];
    const TwoModeRun run = run_two_mode(ds[i / qs.size()], q, setup, InfinitePool{}, spec.seed);
    const GridDistribution p = GridDistribution::build(*run.land.support, run.traj.final_mass);
    cells[i].limit = run.limit;
    cells[i].nash = nash_solve(conditional(p, run.basins.basins[0]), conditional(p, run.basins.basins[1]),
                               run.land.r1, run.land.r2, q, grid);
  });
  CsvWriter points({"distance", "q", "a_inf", "converged", "closed_form", "grid_argmax"});
  CsvWriter mse({"distance", "mse"});
  for (std::size_t d = 0; d < ds.size(); ++d) {
    std::vector<double> est, target;
    for (std::size_t k = 0; k < qs.size(); ++k) {
      const Cell& c = cells[d * qs.size() + k];
      points.add_row({ds[d], qs[k], c.limit.value, c.limit.converged, c.nash.closed_form, c.nash.grid_argmax});
      est.push_back(c.limit.value);
      target.push_back(qs[k]);
    }
    mse.add_row({ds[d], mean_squared_error(est, target)});
  }
  sink.write("nash_points.csv", points);
  sink.write("nash.csv", mse);
}

void concentration(const ExperimentSpec& spec, OutputSink& sink) {
  const int n = spec.integer("support_points");
  const auto ks = spec.integers("k_list");
  const int n_mc = spec.integer("n_mc");
  const double eps = spec.number("epsilon");
  const auto cap = static_cast<std::size_t>(spec.integer("state_cap"));

  Eigen::MatrixXd pts = line_grid(1.0, n, n);
  const GridDistribution dist = GridDistribution::build(pts, Eigen::VectorXd::Ones(n));
  const RewardField reward(dist.shared_support(), pts.col(0).array().log().matrix());
  const ConcentrationCurve curve = concentration_curve(dist, reward, ks, n_mc, spec.seed, eps, cap);

  CsvWriter out({"K", "deviation", "estimator", "standard_error", "bound", "early_bound"});
  for (const auto& p : curve.points) {
    out.add_row({static_cast<long long>(p.K), p.deviation, to_string(p.estimator), p.standard_error,
                 curve.envelope(p.K), curve.early_envelope(p.K)});
  }
  sink.write("concentration.csv", out);

  CsvWriter fit({"c1", "c2", "early_c1", "early_c2", "early_dominates", "strictly_decreasing"});
  fit.add_row({curve.envelope.c1, curve.envelope.c2, curve.early_envelope.c1, curve.early_envelope.c2,
               curve.early_envelope_dominates, curve.strictly_decreasing});
  sink.write("concentration_fit.csv", fit);

  if (spec.flag("mc_check")) {
    CsvWriter z({"K", "max_abs_z", "exact_available"});
    for (std::size_t i = 0; i < ks.size(); ++i) {
      const int K = ks[i];
      const auto mc = bt_weight_mc(dist, reward, K, n_mc, cell_seed(spec.seed, i));
      try {
        const auto exact = bt_weight_exact(dist, reward, K, cap);
        const Eigen::ArrayXd zs = (mc.weight - exact.weight).array().abs() /
                                  mc.standard_error.array().max(std::numeric_limits<double>::min());
        z.add_row({static_cast<long long>(K), zs.maxCoeff(), true});
      } catch (const StateCapExceeded&) {
        z.add_row({static_cast<long long>(K), kNaN, false});
      }
    }
    sink.write("mc_agreement.csv", z);
  }
}

// Along the diagonal through the midpoint of the configured centres.
std::pair<Eigen::Vector2d, Eigen::Vector2d> centres_at(const GmmExperimentConfig& base, double distance) {
  const Eigen::Vector2d mid = (base.mu1 + base.mu2) / 2.0;
  const Eigen::Vector2d dir = Eigen::Vector2d::Ones() / std::sqrt(2.0);
  return {mid - distance / 2.0 * dir, mid + distance / 2.0 * dir};
}

void write_gmm_runs(const std::vector<GmmTrajectory>& runs, const std::vector<double>& cell_key,
                    const std::vector<int>& seed_index, const std::string& key_name, OutputSink& sink,
                    const std::string& prefix) {
  CsvWriter traj({key_name, "seed_index", "seed", "iteration", "expected_r1", "expected_r2", "var_r1", "var_r2",
                  "components", "leakage1", "leakage2", "curated_reward", "pool_reward"});
  CsvWriter comps({key_name, "seed_index", "iteration", "component", "weight", "mean_x", "mean_y", "cov_xx",
                   "cov_xy", "cov_yy"});
  CsvWriter final_rows({key_name, "seed_index", "seed", "var_r1", "var_r2", "min_var", "weight_near_mu1"});
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto& run = runs[i];
    const std::string seed = std::to_string(run.config.seed);
    for (const auto& it : run.iterations) {
      traj.add_row({cell_key[i], static_cast<long long>(seed_index[i]), seed, static_cast<long long>(it.iteration),
                    it.expected_reward[0], it.expected_reward[1], it.reward_variance[0], it.reward_variance[1],
                    static_cast<long long>(it.components), it.leakage1, it.leakage2, it.curated_active_reward,
                    it.pool_active_reward});
      for (std::size_t c = 0; c < it.fitted.size(); ++c) {
        const auto& g = it.fitted[c];
        comps.add_row({cell_key[i], static_cast<long long>(seed_index[i]), static_cast<long long>(it.iteration),
                       as_ll(c), g.weight, g.mean[0], g.mean[1], g.covariance(0, 0), g.covariance(0, 1),
                       g.covariance(1, 1)});
      }
    }
    const auto& last = run.iterations.back();
    final_rows.add_row({cell_key[i], static_cast<long long>(seed_index[i]), seed, last.reward_variance[0],
                        last.reward_variance[1], last.reward_variance.minCoeff(), run.final_weight_near_mu1()});
  }
  sink.write(prefix + "_trajectory.csv", traj);
  sink.write(prefix + "_components.csv", comps);
  sink.write(prefix + "_final.csv", final_rows);
}

void gmm(const ExperimentSpec& spec, OutputSink& sink) {
  const GmmExperimentConfig base = gmm_config_from(spec);
  std::vector<double> ds = spec.numbers("distances");
  const bool sweep = !ds.empty();
  if (!sweep) ds.push_back((base.mu2 - base.mu1).norm());
  const int seeds = spec.integer("seeds");

  std::vector<GmmExperimentConfig> cfgs;
  std::vector<double> keys;
  std::vector<int> seed_index;
  for (double d : ds) {
    for (int s = 0; s < seeds; ++s) {
      GmmExperimentConfig c = base;
      if (sweep) std::tie(c.mu1, c.mu2) = centres_at(base, d);
      // A single run keeps the spec seed itself.
      c.seed = seeds == 1 && !sweep ? spec.seed : cell_seed(spec.seed, static_cast<std::uint64_t>(s));
      cfgs.push_back(c);
      keys.push_back(d);
      seed_index.push_back(s);
    }
  }
  std::vector<GmmTrajectory> runs(cfgs.size());
  parallel_for(cfgs.size(), spec.threads, [&](std::size_t i) { runs[i] = run_gmm_retraining(cfgs[i]); });
  write_gmm_runs(runs, keys, seed_index, "distance", sink, "gmm");
}

void q_sweep(const ExperimentSpec& spec, OutputSink& sink) {
  const GmmExperimentConfig base = gmm_config_from(spec);
  const auto qs = spec.numbers("qs");
  const int seeds = spec.integer("seeds");
  std::vector<GmmExperimentConfig> cfgs;
  std::vector<double> keys;
  std::vector<int> seed_index;
  for (double q : qs) {
    for (int s = 0; s < seeds; ++s) {
      GmmExperimentConfig c = base;
      c.q = q;
      c.seed = cell_seed(spec.seed, static_cast<std::uint64_t>(s));
      cfgs.push_back(c);
      keys.push_back(q);
      seed_index.push_back(s);
    }
  }
  std::vector<GmmTrajectory> runs(cfgs.size());
  parallel_for(cfgs.size(), spec.threads, [&](std::size_t i) { runs[i] = run_gmm_retraining(cfgs[i]); });
  write_gmm_runs(runs, keys, seed_index, "q", sink, "q_sweep");

  CsvWriter summary({"q", "median_weight_near_mu1", "abs_error"});
  for (std::size_t k = 0; k < qs.size(); ++k) {
    std::vector<double> w;
    for (int s = 0; s < seeds; ++s) w.push_back(runs[k * seeds + s].final_weight_near_mu1());
    std::sort(w.begin(), w.end());
    const double med = w.size() % 2 ? w[w.size() / 2] : (w[w.size() / 2 - 1] + w[w.size() / 2]) / 2.0;
    summary.add_row({qs[k], med, std::abs(med - qs[k])});
  }
  sink.write("q_sweep_summary.csv", summary);
}

void k_ablation(const ExperimentSpec& spec, OutputSink& sink) {
  const ExactSetup setup = exact_setup_from(spec);
  const auto ks = spec.integers("k_list");
  const auto pool = std::get<FinitePool>(setup.dynamics.mode);
  std::vector<std::optional<TwoModeRun>> runs(ks.size());
  parallel_for(ks.size(), spec.threads, [&](std::size_t i) {
    runs[i] = run_two_mode(setup.distance, setup.q, setup, FinitePool{ks[i], pool.n_mc, pool.state_cap},
                           cell_seed(spec.seed, i));
  });
  CsvWriter out({"K", "step", "a", "outside", "expected_r1", "expected_r2", "alignment", "estimator"});
  for (std::size_t i = 0; i < ks.size(); ++i) {
    const auto& traj = runs[i]->traj;
    for (std::size_t t = 0; t < traj.records.size(); ++t) {
      const auto& r = traj.records[t];
      const double align = setup.q * r.expected_reward[0] + (1.0 - setup.q) * r.expected_reward[1];
      const std::string est = t < traj.estimators.size() ? to_string(traj.estimators[t].front()) : "";
      out.add_row({static_cast<long long>(ks[i]), static_cast<long long>(r.step), r.basin_mass[0],
                   r.outside_mass, r.expected_reward[0], r.expected_reward[1], align, est});
    }
  }
  sink.write("k_ablation.csv", out);
}

}  // namespace

void run_kind(const ExperimentSpec& spec, OutputSink& sink) {
  switch (spec.kind) {
    case ExperimentKind::kExactDynamics: return exact_dynamics(spec, sink);
    case ExperimentKind::kGmm: return gmm(spec, sink);
    case ExperimentKind::kLeakageSweep: return leakage_sweep(spec, sink);
    case ExperimentKind::kDecaySweep: return decay_sweep(spec, sink);
    case ExperimentKind::kNashSweep: return nash_sweep(spec, sink);
    case ExperimentKind::kConcentration: return concentration(spec, sink);
    case ExperimentKind::kQSweep: return q_sweep(spec, sink);
    case ExperimentKind::kKAblation: return k_ablation(spec, sink);
  }
  throw ConfigError("unknown experiment kind");
}

}  // namespace pluralis::detail
