#include "pluralis/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>

#include "pluralis/curation.hpp"
#include "pluralis/errors.hpp"
#include "pluralis/numeric.hpp"

namespace pluralis {
namespace {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)};
  std::array<std::uint32_t, 2> w{};
  seq.generate(w.begin(), w.end());
  return (static_cast<std::uint64_t>(w[0]) << 32) | w[1];
}

Eigen::VectorXd squared_distance(const PointSet& x, const Eigen::Vector2d& c) {
  return (x.rowwise() - c.transpose()).rowwise().squaredNorm();
}

// log N(x | mean, L Lᵀ) per row.
Eigen::VectorXd gaussian_log_pdf(const PointSet& x, const Eigen::Vector2d& mean,
                                 const Eigen::Matrix2d& chol) {
  const Eigen::Matrix<double, 2, Eigen::Dynamic> centered = (x.rowwise() - mean.transpose()).transpose();
  const Eigen::Matrix<double, 2, Eigen::Dynamic> z =
      chol.triangularView<Eigen::Lower>().solve(centered);
  const double log_det = 2.0 * (std::log(chol(0, 0)) + std::log(chol(1, 1)));
  const double norm = -std::log(2.0 * std::numbers::pi) - 0.5 * log_det;
  return (norm - 0.5 * z.colwise().squaredNorm().array()).matrix().transpose();
}

struct Moments {
  double weight;
  Eigen::Vector2d mean;
  Eigen::Matrix2d cov;
};

Moments weighted_moments(const PointSet& x, const Eigen::VectorXd& resp, double floor) {
  Moments m;
  const double nk = resp.sum();
  m.weight = nk / static_cast<double>(x.rows());
  if (nk <= 0.0) {
    m.mean = x.colwise().mean().transpose();
    m.cov = Eigen::Matrix2d::Identity() * floor;
    return m;
  }
  m.mean = (x.transpose() * resp) / nk;
  const PointSet centered = x.rowwise() - m.mean.transpose();
  m.cov = (centered.transpose() * resp.asDiagonal() * centered) / nk;
  m.cov += floor * Eigen::Matrix2d::Identity();
  return m;
}

struct EmRun {
  std::vector<GaussianComponent> comps;
  double loglik = -std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
};

// k-means++ seeding followed by one hard assignment to produce the starting
// responsibilities.
Eigen::MatrixXd seed_responsibilities(const PointSet& x, int k, std::mt19937_64& rng) {
  const Eigen::Index n = x.rows();
  std::vector<Eigen::Vector2d> centers;
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  centers.push_back(x.row(pick(rng)).transpose());
  while (static_cast<int>(centers.size()) < k) {
    Eigen::VectorXd d2 = squared_distance(x, centers.front());
    for (std::size_t c = 1; c < centers.size(); ++c) d2 = d2.cwiseMin(squared_distance(x, centers[c]));
    if (d2.sum() <= 0.0) {
      centers.push_back(x.row(pick(rng)).transpose());
      continue;
    }
    std::discrete_distribution<Eigen::Index> by_distance(d2.data(), d2.data() + n);
    centers.push_back(x.row(by_distance(rng)).transpose());
  }
  Eigen::MatrixXd resp = Eigen::MatrixXd::Zero(n, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c) {
      const double d = (x.row(i).transpose() - centers[static_cast<std::size_t>(c)]).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    resp(i, best) = 1.0;
  }
  return resp;
}

EmRun run_em(const PointSet& x, int k, std::mt19937_64& rng, const EmSettings& s) {
  const Eigen::Index n = x.rows();
  Eigen::MatrixXd resp = seed_responsibilities(x, k, rng);
  EmRun run;
  run.comps.resize(static_cast<std::size_t>(k));
  int small_steps = 0;
  for (int it = 0; it < s.max_iterations; ++it) {
    // M-step.
    for (int c = 0; c < k; ++c) {
      const Moments m = weighted_moments(x, resp.col(c), s.covariance_floor);
      run.comps[static_cast<std::size_t>(c)] = {m.weight, m.mean, m.cov};
    }
    // E-step.
    Eigen::MatrixXd logp(n, k);
    for (int c = 0; c < k; ++c) {
      const auto& comp = run.comps[static_cast<std::size_t>(c)];
      const Eigen::Matrix2d chol = comp.covariance.llt().matrixL();
      logp.col(c) = gaussian_log_pdf(x, comp.mean, chol).array() + std::log(comp.weight);
    }
    Eigen::VectorXd norm(n);
    for (Eigen::Index i = 0; i < n; ++i) norm[i] = log_sum_exp(logp.row(i));
    resp = (logp.colwise() - norm).array().exp().matrix();
    const double ll = norm.mean();
    run.iterations = it + 1;
    if (k == 1) {
      run.loglik = ll;
      run.converged = true;
      break;
    }
    small_steps = (ll - run.loglik < s.tolerance) ? small_steps + 1 : 0;
    run.loglik = ll;
    if (small_steps >= 2) {
      run.converged = true;
      break;
    }
  }
  return run;
}

}  // namespace

GmmModel::GmmModel(std::vector<GaussianComponent> components) : components_(std::move(components)) {
  if (components_.empty() || components_.size() > 2) {
    throw InvalidInput("a GMM here has 1 or 2 components");
  }
  double total = 0.0;
  for (const auto& c : components_) {
    if (!(c.weight >= 0.0)) throw InvalidInput("component weights must be nonnegative");
    if (!c.mean.allFinite() || !c.covariance.allFinite()) throw InvalidInput("non-finite GMM parameter");
    if ((c.covariance - c.covariance.transpose()).cwiseAbs().maxCoeff() >
        1e-12 * std::max(1.0, c.covariance.cwiseAbs().maxCoeff())) {
      throw InvalidInput("covariance is not symmetric");
    }
    Eigen::LLT<Eigen::Matrix2d> llt(c.covariance);
    if (llt.info() != Eigen::Success) throw InvalidInput("covariance is not positive definite");
    chol_.push_back(llt.matrixL());
    total += c.weight;
  }
  if (std::abs(total - 1.0) > 1e-9) throw InvalidInput("component weights must sum to 1");
}

Eigen::VectorXd GmmModel::log_density(const PointSet& x) const {
  Eigen::MatrixXd logp(x.rows(), static_cast<Eigen::Index>(size()));
  for (std::size_t c = 0; c < size(); ++c) {
    logp.col(static_cast<Eigen::Index>(c)) =
        gaussian_log_pdf(x, components_[c].mean, chol_[c]).array() + std::log(components_[c].weight);
  }
  Eigen::VectorXd out(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) out[i] = log_sum_exp(logp.row(i));
  return out;
}

PointSet gmm_sample(const GmmModel& model, Eigen::Index n, std::mt19937_64& rng) {
  std::vector<double> w;
  for (const auto& c : model.components()) w.push_back(c.weight);
  std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
  std::normal_distribution<double> normal;
  PointSet out(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::size_t c = pick(rng);
    const double z0 = normal(rng);
    const double z1 = normal(rng);
    out.row(i) = (model.components()[c].mean + model.cholesky_factor(c) * Eigen::Vector2d(z0, z1)).transpose();
  }
  return out;
}

PointSet gmm_sample(const GmmModel& model, Eigen::Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return gmm_sample(model, n, rng);
}

GmmFit gmm_em_fit(const PointSet& samples, int k, std::uint64_t seed, const EmSettings& settings) {
  if (k != 1 && k != 2) throw InvalidInput("EM supports k in {1, 2}");
  if (samples.rows() < 10 * k) {
    throw InvalidInput("EM needs at least " + std::to_string(10 * k) + " samples, got " +
                       std::to_string(samples.rows()));
  }
  if (!samples.allFinite()) throw InvalidInput("samples contain NaN or Inf");
  if (settings.restarts < 1 || settings.max_iterations < 1) throw InvalidInput("invalid EM settings");

  const bool identical = (samples.rowwise() - samples.row(0)).cwiseAbs().maxCoeff() == 0.0;
  if (identical) {
    GaussianComponent c{1.0, samples.row(0).transpose(),
                        settings.covariance_floor * Eigen::Matrix2d::Identity()};
    return {GmmModel({c}), std::numeric_limits<double>::quiet_NaN(), 0, true, true};
  }

  std::optional<EmRun> best;
  const int restarts = k == 1 ? 1 : settings.restarts;
  for (int r = 0; r < restarts; ++r) {
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
    EmRun run = run_em(samples, k, rng, settings);
    if (!std::isfinite(run.loglik)) continue;
    if (!best || run.loglik > best->loglik) best = std::move(run);
  }
  if (!best) throw NumericalFailure("EM produced a non-finite log-likelihood on every restart");

  // Components that lost all responsibility keep zero weight; drop them only
  // when the other component can carry the model.
  double total = 0.0;
  for (const auto& c : best->comps) total += c.weight;
  for (auto& c : best->comps) c.weight /= total;
  return {GmmModel(best->comps), best->loglik, best->iterations, best->converged, false};
}

void GmmExperimentConfig::validate() const {
  if (K < 2) throw InvalidInput("K must be >= 2");
  if (n_curated < 20) throw InvalidInput("n_curated must be >= 20 (EM needs 10 samples per component)");
  if (T < 1) throw InvalidInput("T must be >= 1");
  if (low_capacity_until < 0) throw InvalidInput("low_capacity_until must be >= 0");
  if (!(temperature > 0.0)) throw InvalidInput("temperature must be positive");
  if (eval_samples < 2) throw InvalidInput("eval_samples must be >= 2");
  if (init_samples < 10) throw InvalidInput("init_samples must be >= 10");
  if (!(init_variance > 0.0)) throw InvalidInput("init_variance must be positive");
  if (!(q > 0.0 && q <= 1.0)) throw InvalidInput("q must lie in (0, 1]");
  if (!mu1.allFinite() || !mu2.allFinite()) throw InvalidInput("reward centers must be finite");
}

double GmmTrajectory::final_weight_near_mu1() const {
  if (iterations.empty()) throw InvalidInput("empty GMM trajectory");
  const auto& last = iterations.back().fitted;
  double best_d = std::numeric_limits<double>::infinity();
  double weight = 0.0;
  for (const auto& c : last) {
    const double d = (c.mean - config.mu1).squaredNorm();
    if (d < best_d) {
      best_d = d;
      weight = c.weight;
    }
  }
  return weight;
}

GmmTrajectory run_gmm_retraining(const GmmExperimentConfig& config) {
  config.validate();
  GmmTrajectory traj;
  traj.config = config;

  std::mt19937_64 rng(config.seed);
  auto rewards_of = [&](const PointSet& x) {
    Eigen::Matrix<double, Eigen::Dynamic, 2> r(x.rows(), 2);
    r.col(0) = -squared_distance(x, config.mu1);
    r.col(1) = -squared_distance(x, config.mu2);
    return r;
  };
  auto record = [&](int t, const GmmModel& model) {
    GmmIterationStats s;
    s.iteration = t;
    const PointSet eval = gmm_sample(model, config.eval_samples, rng);
    const auto r = rewards_of(eval);
    const Eigen::VectorXd uniform =
        Eigen::VectorXd::Constant(eval.rows(), 1.0 / static_cast<double>(eval.rows()));
    for (int i = 0; i < 2; ++i) {
      s.expected_reward[i] = expectation(uniform, r.col(i));
      s.reward_variance[i] = variance(uniform, r.col(i));
    }
    s.components = static_cast<int>(model.size());
    s.fitted = model.components();
    return s;
  };

  // G₀: one component fitted to draws from N(midpoint, σ²I).
  const Eigen::Vector2d mid = (config.mu1 + config.mu2) / 2.0;
  const GmmModel prior({GaussianComponent{1.0, mid, config.init_variance * Eigen::Matrix2d::Identity()}});
  GmmModel model =
      gmm_em_fit(gmm_sample(prior, config.init_samples, rng), 1, derive_seed(config.seed, 0), config.em)
          .model;
  traj.iterations.push_back(record(0, model));

  std::bernoulli_distribution use_first(config.q);
  for (int t = 1; t <= config.T; ++t) {
    const PointSet pool = gmm_sample(model, config.K, rng);
    const auto pool_rewards = rewards_of(pool);
    const Eigen::Vector2d pool_mean = pool_rewards.colwise().mean().transpose();

    PointSet curated(config.n_curated, 2);
    double curated_active = 0.0;
    double pool_active = 0.0;
    int drawn1 = 0, drawn2 = 0, leak1 = 0, leak2 = 0;
    for (int j = 0; j < config.n_curated; ++j) {
      const int active = (config.q >= 1.0 || use_first(rng)) ? 0 : 1;
      const Eigen::VectorXd scores = pool_rewards.col(active);
      const std::size_t pick = bt_select(std::span<const double>(scores.data(), static_cast<std::size_t>(scores.size())),
                                         config.temperature, rng);
      const auto idx = static_cast<Eigen::Index>(pick);
      curated.row(j) = pool.row(idx);
      curated_active += scores[idx];
      pool_active += pool_mean[active];
      const bool nearer_mu1 = -pool_rewards(idx, 0) <= -pool_rewards(idx, 1);
      if (active == 0) {
        ++drawn1;
        leak1 += nearer_mu1 ? 0 : 1;
      } else {
        ++drawn2;
        leak2 += nearer_mu1 ? 1 : 0;
      }
    }

    const int k = t < config.low_capacity_until ? 1 : 2;
    try {
      model = gmm_em_fit(curated, k, derive_seed(config.seed, static_cast<std::uint64_t>(t)), config.em).model;
    } catch (const Error& e) {
      throw NumericalFailure("EM failed at iteration " + std::to_string(t) + ": " + e.what());
    }

    GmmIterationStats s = record(t, model);
    s.curated_active_reward = curated_active / config.n_curated;
    s.pool_active_reward = pool_active / config.n_curated;
    s.leakage1 = drawn1 ? static_cast<double>(leak1) / drawn1 : 0.0;
    s.leakage2 = drawn2 ? static_cast<double>(leak2) / drawn2 : 0.0;
    traj.iterations.push_back(std::move(s));
  }
  return traj;
}

}  // namespace pluralis
