#include "pluralis/curation.hpp"

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "pluralis/errors.hpp"

namespace pluralis {
namespace {

// e^{r − r*} ∈ (0, 1]; far-field points may underflow to 0.
Eigen::VectorXd shifted_exp(const RewardField& reward) {
  return (reward.values().array() - reward.supremum()).exp().matrix();
}

struct Atom {
  double value;
  double prob;
};

// Collapses atoms whose values agree to within `rel_tol`, keeping the
// probability-weighted mean value.
std::vector<Atom> merge_sorted(std::vector<Atom> atoms, double rel_tol) {
  std::sort(atoms.begin(), atoms.end(), [](const Atom& a, const Atom& b) { return a.value < b.value; });
  std::vector<Atom> out;
  out.reserve(atoms.size());
  for (const auto& a : atoms) {
    if (a.prob == 0.0) continue;
    if (!out.empty() && std::abs(a.value - out.back().value) <= rel_tol * std::max(1.0, std::abs(a.value))) {
      const double p = out.back().prob + a.prob;
      out.back().value = (out.back().value * out.back().prob + a.value * a.prob) / p;
      out.back().prob = p;
    } else {
      out.push_back(a);
    }
  }
  return out;
}

void check_pool(int K) {
  if (K < 2) throw InvalidInput("pool size K must be >= 2");
}

}  // namespace

BtWeightEstimate tilt_weight(const GridDistribution& dist, const RewardField& reward) {
  require_aligned(dist, reward);
  Eigen::VectorXd e = shifted_exp(reward);
  const double z = dist.mass().dot(e);
  if (!(z > 0.0)) throw NumericalFailure("tilt normaliser underflowed: all mass sits at e^{r-r*} = 0");
  BtWeightEstimate out;
  out.weight = e / z;
  out.kind = WeightEstimator::kInfiniteTilt;
  return out;
}

BtWeightEstimate bt_weight_exact(const GridDistribution& dist, const RewardField& reward, int K,
                                 std::size_t state_cap) {
  require_aligned(dist, reward);
  check_pool(K);
  constexpr double kMergeTolerance = 1e-12;
  const Eigen::VectorXd e = shifted_exp(reward);

  std::vector<Atom> opponent;
  for (Eigen::Index x = 0; x < dist.size(); ++x) opponent.push_back({e[x], dist.mass()[x]});
  opponent = merge_sorted(std::move(opponent), kMergeTolerance);

  std::vector<Atom> sum{{0.0, 1.0}};
  for (int round = 1; round < K; ++round) {
    if (sum.size() * opponent.size() > state_cap) {
      throw StateCapExceeded("exact BT weights need " + std::to_string(sum.size() * opponent.size()) +
                             " states at K=" + std::to_string(K) +
                             "; use the Monte-Carlo estimator (bt_weight_mc)");
    }
    std::vector<Atom> next;
    next.reserve(sum.size() * opponent.size());
    for (const auto& s : sum) {
      for (const auto& o : opponent) next.push_back({s.value + o.value, s.prob * o.prob});
    }
    sum = merge_sorted(std::move(next), kMergeTolerance);
  }

  BtWeightEstimate out;
  out.kind = WeightEstimator::kExactEnumeration;
  out.pool_size = K;
  out.weight.resize(dist.size());
  for (Eigen::Index x = 0; x < dist.size(); ++x) {
    const double v = e[x];
    double acc = 0.0;
    if (v > 0.0) {
      for (const auto& s : sum) acc += s.prob * v / (v + s.value);
    }
    out.weight[x] = static_cast<double>(K) * acc;
  }
  return out;
}

BtWeightEstimate bt_weight_mc(const GridDistribution& dist, const RewardField& reward, int K,
                              int n_mc, std::uint64_t seed) {
  require_aligned(dist, reward);
  check_pool(K);
  if (n_mc < 100) throw InvalidInput("Monte-Carlo estimator needs n_mc >= 100");
  const Eigen::VectorXd e = shifted_exp(reward);
  const Eigen::ArrayXd v = e.array();

  std::mt19937_64 rng(seed);
  std::discrete_distribution<Eigen::Index> draw(dist.mass().data(), dist.mass().data() + dist.size());

  Eigen::ArrayXd mean = Eigen::ArrayXd::Zero(dist.size());
  Eigen::ArrayXd m2 = Eigen::ArrayXd::Zero(dist.size());
  const double k = static_cast<double>(K);
  for (int rep = 0; rep < n_mc; ++rep) {
    double opponents = 0.0;
    for (int j = 1; j < K; ++j) opponents += e[draw(rng)];
    const Eigen::ArrayXd sample = (v > 0.0).select(k * v / (v + opponents), 0.0);
    // Welford update.
    const Eigen::ArrayXd delta = sample - mean;
    mean += delta / static_cast<double>(rep + 1);
    m2 += delta * (sample - mean);
  }

  BtWeightEstimate out;
  out.kind = WeightEstimator::kMonteCarlo;
  out.pool_size = K;
  out.mc_samples = n_mc;
  out.weight = mean.matrix();
  out.standard_error = (m2 / static_cast<double>(n_mc - 1) / static_cast<double>(n_mc)).sqrt().matrix();
  return out;
}

BtWeightEstimate bt_weight(const GridDistribution& dist, const RewardField& reward, int K, int n_mc,
                           std::uint64_t seed, std::size_t state_cap) {
  try {
    return bt_weight_exact(dist, reward, K, state_cap);
  } catch (const StateCapExceeded&) {
    return bt_weight_mc(dist, reward, K, n_mc, seed);
  }
}

Eigen::VectorXd bt_choice_probabilities(std::span<const double> rewards, double temperature) {
  if (rewards.empty()) throw InvalidInput("BT choice needs at least one candidate");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw InvalidInput("temperature must be positive");
  }
  const Eigen::Map<const Eigen::ArrayXd> r(rewards.data(), static_cast<Eigen::Index>(rewards.size()));
  if (!r.isFinite().all()) throw InvalidInput("candidate rewards contain NaN or Inf");
  Eigen::ArrayXd w = ((r - r.maxCoeff()) / temperature).exp();
  return (w / w.sum()).matrix();
}

std::size_t bt_select(std::span<const double> rewards, double temperature, std::mt19937_64& rng) {
  const Eigen::VectorXd prob = bt_choice_probabilities(rewards, temperature);
  std::discrete_distribution<std::size_t> choose(prob.data(), prob.data() + prob.size());
  return choose(rng);
}

std::size_t bt_select(std::span<const double> rewards, double temperature, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return bt_select(rewards, temperature, rng);
}

}  // namespace pluralis
