#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "pluralis/curation.hpp"
#include "pluralis/errors.hpp"

using namespace pluralis;

namespace {

GridDistribution on_line(const Eigen::VectorXd& mass) {
  return GridDistribution::build(line_grid(0.0, static_cast<double>(mass.size() - 1), mass.size()), mass);
}

RewardField reward_on(const GridDistribution& d, const Eigen::VectorXd& values) {
  return RewardField(d.shared_support(), values);
}

// Oracle: enumerate every (K−1)-tuple of opponents.
Eigen::VectorXd brute_force_weight(const Eigen::VectorXd& p, const Eigen::VectorXd& r, int K) {
  const Eigen::Index n = p.size();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(K - 1), 0);
  while (true) {
    double prob = 1.0, sum = 0.0;
    for (auto j : idx) {
      prob *= p[j];
      sum += std::exp(r[j]);
    }
    for (Eigen::Index x = 0; x < n; ++x) out[x] += prob * K * std::exp(r[x]) / (std::exp(r[x]) + sum);
    std::size_t k = 0;
    while (k < idx.size() && ++idx[k] == n) idx[k++] = 0;
    if (k == idx.size()) break;
  }
  return out;
}

}  // namespace

TEST_SUITE("curation") {

TEST_CASE("tilt weights") {
  const auto d2 = on_line(Eigen::VectorXd::Ones(2));
  const auto constant = tilt_weight(d2, reward_on(d2, Eigen::VectorXd::Constant(2, 5.0)));
  CHECK(constant.kind == WeightEstimator::kInfiniteTilt);
  CHECK((constant.weight.array() == 1.0).all());

  Eigen::VectorXd r(2);
  r << 0.0, std::log(3.0);
  const auto w = tilt_weight(d2, reward_on(d2, r)).weight;
  CHECK(w[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(w[1] == doctest::Approx(1.5).epsilon(1e-15));

  const auto d3 = on_line(Eigen::VectorXd::Ones(3));
  Eigen::VectorXd r3(3);
  r3 << 0.0, std::log(2.0), std::log(4.0);
  const auto w3 = tilt_weight(d3, reward_on(d3, r3)).weight;
  const Eigen::VectorXd oracle = r3.array().exp() / r3.array().exp().mean();
  CHECK(w3[0] == doctest::Approx(3.0 / 7.0).epsilon(1e-14));
  CHECK(w3[1] == doctest::Approx(6.0 / 7.0).epsilon(1e-14));
  CHECK(w3[2] == doctest::Approx(12.0 / 7.0).epsilon(1e-14));
  CHECK((w3 - oracle).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("tilt survives rewards far below zero") {
  const auto d = on_line(Eigen::VectorXd::Ones(3));
  Eigen::VectorXd r(3);
  r << -5000.0, -5001.0, -5003.0;
  const auto w = tilt_weight(d, reward_on(d, r)).weight;
  CHECK(w.allFinite());
  CHECK(d.mass().dot(w) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("exact BT weights match the two-point examples") {
  const auto d = on_line(Eigen::VectorXd::Ones(2));
  const auto tie = bt_weight_exact(d, reward_on(d, Eigen::VectorXd::Zero(2)), 2);
  CHECK(tie.kind == WeightEstimator::kExactEnumeration);
  CHECK(tie.pool_size == 2);
  CHECK((tie.weight.array() - 1.0).abs().maxCoeff() < 1e-15);

  Eigen::VectorXd r(2);
  r << 0.0, std::log(3.0);
  const auto w = bt_weight_exact(d, reward_on(d, r), 2).weight;
  CHECK(w[0] == doctest::Approx(0.75).epsilon(1e-14));
  CHECK(w[1] == doctest::Approx(1.25).epsilon(1e-14));
  const auto oracle = brute_force_weight(d.mass(), r, 2);
  CHECK((w - oracle).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("exact BT weights agree with exhaustive enumeration") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    const Eigen::Index n = 2 + trial % 4;
    const int K = 2 + trial % 4;
    Eigen::VectorXd p(n), r(n);
    for (Eigen::Index j = 0; j < n; ++j) {
      p[j] = 0.05 + u(rng);
      r[j] = 4.0 * u(rng) - 2.0;
    }
    const auto d = on_line(p);
    const auto exact = bt_weight_exact(d, reward_on(d, r), K).weight;
    const auto oracle = brute_force_weight(d.mass(), r, K);
    CHECK((exact - oracle).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(d.mass().dot(exact) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK((exact.array() >= 0.0).all());
  }
}

TEST_CASE("exact weights normalise for large pools and merge repeated values") {
  Eigen::VectorXd p(6), r(6);
  p << 1, 2, 3, 4, 5, 6;
  r << 0.0, 0.0, -1.0, -1.0, -2.0, 0.5;
  const auto d = on_line(p);
  for (int K : {2, 8, 32, 64}) {
    const auto w = bt_weight_exact(d, reward_on(d, r), K).weight;
    CHECK(d.mass().dot(w) == doctest::Approx(1.0).epsilon(1e-10));
    // Equal rewards get equal weights.
    CHECK(w[0] == doctest::Approx(w[1]).epsilon(1e-14));
  }
}

TEST_CASE("state cap is reported") {
  Eigen::VectorXd r = Eigen::VectorXd::LinSpaced(20, 0.0, 1.7);
  const auto d = on_line(Eigen::VectorXd::Ones(20));
  CHECK_THROWS_AS(bt_weight_exact(d, reward_on(d, r), 40, 1000), StateCapExceeded);
  const auto fallback = bt_weight(d, reward_on(d, r), 40, 500, 3, 1000);
  CHECK(fallback.kind == WeightEstimator::kMonteCarlo);
  CHECK(fallback.mc_samples == 500);
  CHECK_THROWS_AS(bt_weight_exact(d, reward_on(d, r), 1), InvalidInput);
}

TEST_CASE("Monte-Carlo BT weights") {
  const auto d = on_line(Eigen::VectorXd::Ones(2));
  const auto flat = bt_weight_mc(d, reward_on(d, Eigen::VectorXd::Constant(2, -3.0)), 5, 100, 1);
  CHECK(flat.kind == WeightEstimator::kMonteCarlo);
  CHECK((flat.weight.array() == 1.0).all());
  CHECK((flat.standard_error.array() == 0.0).all());

  Eigen::VectorXd r(2);
  r << 0.0, std::log(3.0);
  const auto exact = bt_weight_exact(d, reward_on(d, r), 2).weight;
  const auto mc = bt_weight_mc(d, reward_on(d, r), 2, 10'000, 42);
  CHECK(mc.mc_samples == 10'000);
  for (Eigen::Index x = 0; x < 2; ++x) {
    CHECK(std::abs(mc.weight[x] - exact[x]) <= 3.0 * mc.standard_error[x]);
  }
  const auto again = bt_weight_mc(d, reward_on(d, r), 2, 10'000, 42);
  CHECK((again.weight.array() == mc.weight.array()).all());
  CHECK_THROWS_AS(bt_weight_mc(d, reward_on(d, r), 2, 99, 1), InvalidInput);
}

TEST_CASE("Monte-Carlo normalisation holds within its error") {
  Eigen::VectorXd p(10), r(10);
  for (int j = 0; j < 10; ++j) {
    p[j] = 1.0 + j % 3;
    r[j] = std::log(1.0 + j);
  }
  const auto d = on_line(p);
  for (int K : {3, 16, 100}) {
    const auto mc = bt_weight_mc(d, reward_on(d, r), K, 10'000, 7);
    // Σ p·SE bounds the SE of Σ p·H whatever the correlation between points.
    CHECK(std::abs(d.mass().dot(mc.weight) - 1.0) <= 3.0 * d.mass().dot(mc.standard_error));
  }
}

TEST_CASE("Monte-Carlo deviation from the tilt shrinks with K") {
  Eigen::VectorXd r(10);
  for (int j = 0; j < 10; ++j) r[j] = std::log(1.0 + j);
  const auto d = on_line(Eigen::VectorXd::Ones(10));
  const auto reward = reward_on(d, r);
  const auto tilt = tilt_weight(d, reward).weight;
  double previous = INFINITY;
  for (int K : {16, 32, 256, 512, 1024}) {
    const auto mc = bt_weight_mc(d, reward, K, 10'000, 100 + static_cast<std::uint64_t>(K));
    const double dev = (mc.weight - tilt).cwiseAbs().maxCoeff();
    CHECK(dev < previous);
    previous = dev;
  }
}

TEST_CASE("weights are invariant to constant reward shifts") {
  Eigen::VectorXd p(4), r(4);
  p << 0.1, 0.2, 0.3, 0.4;
  r << -1.0, 0.5, 0.25, 2.0;
  const auto d = on_line(p);
  const auto base = reward_on(d, r);
  const auto moved = base.shifted(37.5);
  CHECK((tilt_weight(d, base).weight - tilt_weight(d, moved).weight).cwiseAbs().maxCoeff() < 1e-13);
  CHECK((bt_weight_exact(d, base, 6).weight - bt_weight_exact(d, moved, 6).weight).cwiseAbs().maxCoeff() <
        1e-12);
  CHECK((bt_weight_mc(d, base, 6, 1000, 9).weight - bt_weight_mc(d, moved, 6, 1000, 9).weight)
            .cwiseAbs()
            .maxCoeff() < 1e-12);
}

TEST_CASE("BT choice probabilities") {
  const std::vector<double> r{0.0, std::log(3.0)};
  const auto pr = bt_choice_probabilities(r, 1.0);
  CHECK(pr[0] == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(pr[1] == doctest::Approx(0.75).epsilon(1e-15));
  CHECK_THROWS_AS(bt_choice_probabilities(r, 0.0), InvalidInput);
  CHECK_THROWS_AS(bt_choice_probabilities({}, 1.0), InvalidInput);

  // Temperature is a reward rescaling.
  const auto hot = bt_choice_probabilities(r, 2.0);
  CHECK(hot[1] / hot[0] == doctest::Approx(std::sqrt(3.0)));
}

TEST_CASE("BT selection frequencies") {
  std::mt19937_64 rng(123);
  const int draws = 100'000;

  const std::vector<double> tie{1.0, 1.0};
  int first = 0;
  for (int i = 0; i < draws; ++i) first += bt_select(tie, 1.0, rng) == 0 ? 1 : 0;
  CHECK(std::abs(first / double(draws) - 0.5) <= 0.01);

  const std::vector<double> r{0.0, std::log(3.0)};
  int second = 0;
  for (int i = 0; i < draws; ++i) second += bt_select(r, 1.0, rng) == 1 ? 1 : 0;
  CHECK(std::abs(second / double(draws) - 0.75) <= 0.01);

  const std::vector<double> spread{0.0, 1.0, 2.0, 3.0};
  std::vector<int> counts(4, 0);
  for (int i = 0; i < draws; ++i) ++counts[bt_select(spread, 1e3, rng)];
  for (int c : counts) CHECK(std::abs(c / double(draws) - 0.25) <= 0.01);

  CHECK(bt_select(r, 1.0, std::uint64_t{77}) == bt_select(r, 1.0, std::uint64_t{77}));
}

TEST_CASE("the best candidate has the largest selection probability") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> z;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> r(2 + trial % 7);
    for (auto& v : r) v = 3.0 * z(rng);
    const auto pr = bt_choice_probabilities(r, 0.5 + trial % 3);
    const auto best = std::max_element(r.begin(), r.end()) - r.begin();
    for (std::size_t k = 0; k < r.size(); ++k) {
      if (static_cast<long>(k) != best) CHECK(pr[best] > pr[static_cast<Eigen::Index>(k)]);
    }
    CHECK(pr.sum() == doctest::Approx(1.0));
  }
}

}  // TEST_SUITE
