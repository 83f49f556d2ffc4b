#include "fedirr/error.hpp"
#include "fedirr/learning.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <random>

using namespace fedirr;
using namespace fedirr::fl;

namespace {

ModelParams with_weights(std::vector<double> w) {
  ModelParams p;
  p.weights = std::move(w);
  return p;
}

std::vector<TrainingExample> gaussian_data(std::mt19937_64& rng, std::size_t d, std::size_t n) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<TrainingExample> out(n);
  for (auto& ex : out) {
    ex.features.resize(d);
    for (auto& x : ex.features) x = g(rng);
    ex.target = g(rng);
  }
  return out;
}

} // namespace

TEST_CASE("predict") {
  CHECK(predict(ModelParams::zeros(3), std::vector<double>{1, 2, 3}) == 0.0);
  CHECK(predict(with_weights({1, 0, 0, 0}), std::vector<double>{1, 0, 0}) == 1.0);
  CHECK(predict(with_weights({2, 3, 1}), std::vector<double>{0.5, 0.5}) == 3.5);
  CHECK_THROWS_AS(predict(with_weights({2, 3, 1}), std::vector<double>{1}), Error);
}

TEST_CASE("mse_loss") {
  const std::vector<TrainingExample> one{{{1.0}, 2.0}};
  CHECK(mse_loss(ModelParams::zeros(1), one) == 4.0);
  const std::vector<TrainingExample> fit{{{1.0}, 3.0}, {{2.0}, 5.0}};
  CHECK(mse_loss(with_weights({2, 1}), fit) == 0.0);
  CHECK(mse_loss(with_weights({2, 1}), fit, 0.5) == doctest::Approx(2.0));
  CHECK_THROWS_AS(mse_loss(ModelParams::zeros(1), std::vector<TrainingExample>{}), Error);

  std::mt19937_64 rng(4);
  const auto data = gaussian_data(rng, 3, 5);
  const std::vector<double> w{0.3, -1.2, 0.7, 0.05};
  CHECK(std::abs(mse_loss(with_weights(w), data, 0.1) - oracle::mse(w, data, 0.1)) < 1e-12);
}

TEST_CASE("gradient matches finite differences") {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::size_t> dd(1, 8), nn(1, 32);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const auto d = dd(rng);
    const auto data = gaussian_data(rng, d, nn(rng));
    std::vector<double> w(d + 1);
    for (auto& x : w) x = g(rng);
    const double l2 = trial % 2 == 0 ? 0.0 : 0.3;
    const auto an = gradient(with_weights(w), data, l2);
    const auto fd = oracle::fd_gradient(w, data, l2);
    for (std::size_t j = 0; j <= d; ++j)
      REQUIRE(std::abs(an[j] - fd[j]) <= 1e-5 * std::max(1.0, std::abs(fd[j])));
  }
}

TEST_CASE("gradient vanishes at a perfect fit and ignores duplication") {
  const std::vector<TrainingExample> fit{{{1.0}, 3.0}, {{2.0}, 5.0}};
  for (double x : gradient(with_weights({2, 1}), fit)) CHECK(x == 0.0);
  std::mt19937_64 rng(6);
  auto data = gaussian_data(rng, 2, 7);
  const auto g1 = gradient(with_weights({0.1, 0.2, 0.3}), data);
  auto twice = data;
  twice.insert(twice.end(), data.begin(), data.end());
  const auto g2 = gradient(with_weights({0.1, 0.2, 0.3}), twice);
  for (std::size_t j = 0; j < g1.size(); ++j) CHECK(g2[j] == doctest::Approx(g1[j]).epsilon(1e-14));
}

TEST_CASE("local_train") {
  std::mt19937_64 rng(7);
  const auto data = gaussian_data(rng, 3, 16);
  ModelParams start = with_weights({0.5, -0.5, 0.25, 1.0});
  start.round = 9;

  TrainConfig frozen;
  frozen.learning_rate = 0.0;
  CHECK(local_train(start, data, frozen).weights == start.weights);

  TrainConfig one;
  one.local_epochs = 1;
  one.learning_rate = 0.05;
  const auto u = local_train(start, data, one, "c1");
  const auto g = gradient(start, data);
  for (std::size_t j = 0; j < g.size(); ++j) CHECK(u.weights[j] == start.weights[j] - 0.05 * g[j]);
  CHECK(u.round == 9);
  CHECK(u.sample_count == 16);
  CHECK(u.client_id == "c1");
  CHECK(u.local_loss == doctest::Approx(mse_loss(with_weights(u.weights), data)));

  TrainConfig hot;
  hot.learning_rate = 1e6;
  hot.local_epochs = 50;
  CHECK_THROWS_AS(local_train(start, data, hot), Error);
  CHECK_THROWS_AS(local_train(start, std::vector<TrainingExample>{}, one), Error);
}

TEST_CASE("local_train reaches the least squares minimizer") {
  const std::vector<TrainingExample> data{{{0.0}, 1.0}, {{1.0}, 2.5}, {{2.0}, 3.9}, {{3.0}, 6.1}};
  const auto ref = oracle::least_squares(data);
  TrainConfig cfg;
  cfg.local_epochs = 500;
  cfg.learning_rate = 0.1;
  const auto u = local_train(ModelParams::zeros(1), data, cfg);
  for (std::size_t j = 0; j < ref.size(); ++j) CHECK(std::abs(u.weights[j] - ref[j]) < 1e-6);
}

TEST_CASE("aggregate examples") {
  const std::vector<ClientUpdate> single{{"a", 3, {1.5, -2.0}, 7, 0.1}};
  const auto s = aggregate(single);
  CHECK(s.weights == single[0].weights);
  CHECK(s.round == 4);
  CHECK(aggregate(std::vector<ClientUpdate>{{"a", 0, {1}, 2, 0}, {"b", 0, {3}, 2, 0}}).weights ==
        std::vector<double>{2});
  CHECK(aggregate(std::vector<ClientUpdate>{{"a", 0, {0}, 1, 0}, {"b", 0, {4}, 3, 0}}).weights ==
        std::vector<double>{3});
}

TEST_CASE("aggregate errors") {
  CHECK_THROWS_AS(aggregate(std::vector<ClientUpdate>{}), Error);
  try {
    aggregate(std::vector<ClientUpdate>{{"a", 0, {1}, 1, 0}, {"b", 1, {1}, 1, 0}});
    FAIL("expected round mismatch");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::round_mismatch);
  }
  try {
    aggregate(std::vector<ClientUpdate>{{"a", 0, {1}, 1, 0}, {"b", 0, {1, 2}, 1, 0}});
    FAIL("expected dimension mismatch");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::dimension_mismatch);
  }
}

TEST_CASE("aggregate is permutation invariant, idempotent and convex") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g(0.0, 10.0);
  std::uniform_int_distribution<std::uint64_t> cnt(1, 1000);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 1 + trial % 9, dim = 1 + trial % 6;
    std::vector<ClientUpdate> ups(k);
    for (std::size_t i = 0; i < k; ++i) {
      ups[i].client_id = "c" + std::to_string(i);
      ups[i].sample_count = cnt(rng);
      ups[i].weights.resize(dim);
      for (auto& w : ups[i].weights) w = g(rng);
    }
    const auto base = aggregate(ups);
    auto shuffled = ups;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    REQUIRE(aggregate(shuffled).weights == base.weights);
    for (std::size_t j = 0; j < dim; ++j) {
      double lo = 1e300, hi = -1e300;
      for (const auto& u : ups) {
        lo = std::min(lo, u.weights[j]);
        hi = std::max(hi, u.weights[j]);
      }
      REQUIRE(base.weights[j] >= lo);
      REQUIRE(base.weights[j] <= hi);
    }
    std::vector<ClientUpdate> same(k, ups[0]);
    for (std::size_t i = 0; i < k; ++i) same[i].client_id = "s" + std::to_string(i);
    REQUIRE(aggregate(same).weights == ups[0].weights);
  }
}

TEST_CASE("one client one epoch equals a centralized step") {
  std::mt19937_64 rng(9);
  const auto data = gaussian_data(rng, 4, 20);
  const auto w0 = with_weights({0.1, 0.2, -0.3, 0.4, 0.5});
  TrainConfig cfg;
  cfg.local_epochs = 1;
  cfg.learning_rate = 0.07;
  const auto fed = aggregate(std::vector<ClientUpdate>{local_train(w0, data, cfg, "only")});
  const auto g = gradient(w0, data);
  for (std::size_t j = 0; j < g.size(); ++j)
    CHECK(std::abs(fed.weights[j] - (w0.weights[j] - 0.07 * g[j])) < 1e-12);
}

TEST_CASE("has_converged uses a strict infinity norm") {
  const auto a = with_weights({1.0, 2.0});
  CHECK(has_converged(a, a, 1e-12));
  CHECK_FALSE(has_converged(a, with_weights({1.1, 2.0}), 0.05));
  CHECK_FALSE(has_converged(with_weights({0.0, 0.0}), with_weights({0.5, 0.0}), 0.5));
  CHECK(has_converged(with_weights({0.0, 0.0}), with_weights({0.25, 0.0}), 0.5));
  CHECK_THROWS_AS(has_converged(a, with_weights({1.0}), 0.1), Error);
}

TEST_CASE("train config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  for (auto mutate : std::vector<void (*)(TrainConfig&)>{
           [](TrainConfig& x) { x.local_epochs = 0; }, [](TrainConfig& x) { x.learning_rate = 0; },
           [](TrainConfig& x) { x.l2 = -1; }, [](TrainConfig& x) { x.convergence_tol = 0; },
           [](TrainConfig& x) { x.max_rounds = 0; }}) {
    TrainConfig bad;
    mutate(bad);
    CHECK_THROWS_AS(bad.validate(), Error);
  }
}
