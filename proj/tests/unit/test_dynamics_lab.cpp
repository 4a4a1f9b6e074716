#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "minecon/dynamics_lab.hpp"
#include "minecon/errors.hpp"
#include "oracles.hpp"

using namespace minecon;
using minecon::testing::Rng;

namespace {

DynamicsConfig ga_config(std::vector<double> costs, double theta, std::size_t steps) {
  DynamicsConfig c;
  c.rule = Rule::kGradientAscent;
  c.game = MiningGame(std::move(costs));
  c.learning_rates.assign(c.game.size(), theta);
  c.steps = steps;
  return c;
}

}  // namespace

TEST_SUITE("dynamics_lab") {

TEST_CASE("gradient ascent step") {
  const MiningGame g({1.0, 1.0});
  const auto x = ga_step(g, AllocationVector({0.3, 0.3}), {0.05, 0.05});
  CHECK(x[0] == doctest::Approx(0.3 + 0.05 * (0.3 / 0.36 - 1.0)).epsilon(1e-15));
  CHECK(x[0] == doctest::Approx(0.291667).epsilon(1e-6));
  CHECK(x[1] == x[0]);

  const auto nash = nash_allocation(g);
  const auto same = ga_step(g, nash, {0.3, 0.3});
  CHECK(std::abs(same[0] - nash[0]) < 1e-15);

  CHECK_THROWS_AS(ga_step(g, AllocationVector({0.0, 0.0}), {0.1, 0.1}), DegenerateError);
  CHECK_THROWS_AS(ga_step(g, AllocationVector({0.1, 0.1}), {0.1}), DimensionError);
  // clamps at the floor
  const auto c = ga_step(g, AllocationVector({0.01, 5.0}), {10.0, 10.0});
  CHECK(c[1] == 0.0);
}

TEST_CASE("gradient ascent increment is theta times the payoff slope") {
  Rng rng(40);
  for (int t = 0; t < 100; ++t) {
    const auto g = minecon::testing::random_game(rng);
    std::vector<double> x(g.size()), th(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
      x[i] = rng.uniform(0.05, 1.0);
      th[i] = rng.uniform(1e-3, 1e-2);
    }
    const auto next = ga_step(g, AllocationVector(x), th);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double fd = minecon::testing::own_derivative(g, x, i, 1e-6);
      const double inc = next[i] - x[i];
      if (next[i] > 0.0) CHECK(std::abs(inc - th[i] * fd) <= 1e-6 * std::abs(th[i] * fd) + 1e-14);
    }
  }
}

TEST_CASE("gradient ascent converges for a small step") {
  auto c = ga_config({1.0, 1.0}, 0.01, 10000);
  c.init = AllocationVector({0.1, 0.1});
  const auto tr = simulate(c);
  CHECK(std::abs(tr.states.back()[0] - 0.25) < 1e-6);
  CHECK(std::abs(tr.states.back()[1] - 0.25) < 1e-6);

  const auto fast = simulate(ga_config({1.0, 1.0}, 0.1, 3000));
  const auto [lo, hi] = std::minmax_element(fast.totals.end() - 100, fast.totals.end());
  CHECK(*hi - *lo < 1e-8);
}

TEST_CASE("best response step") {
  const MiningGame g({1.0, 1.0});
  const auto nash = nash_allocation(g);
  const auto same = br_step(g, nash);
  CHECK(std::abs(same[0] - 0.25) < 1e-15);
  const auto crash = br_step(g, AllocationVector({1.0, 1.0}));
  CHECK(crash[0] == 0.0);
  CHECK(crash[1] == 0.0);
  const auto edge = br_step(g, AllocationVector({0.0, 0.0}));
  CHECK(edge[0] == 0.0);
  const auto floored = br_step(g, AllocationVector({1.0, 1.0}), 1e-3);
  CHECK(floored[0] == 1e-3);
  CHECK_THROWS_AS(br_step(g, AllocationVector({0.1, 0.1}), -1.0), ConfigError);
}

TEST_CASE("Nash is a fixed point of both maps") {
  Rng rng(41);
  for (int t = 0; t < 50; ++t) {
    const auto g = minecon::testing::random_game(rng);
    const auto x = nash_allocation(g);
    const auto a = ga_step(g, x, std::vector<double>(g.size(), 0.05));
    const auto b = br_step(g, x);
    for (std::size_t i = 0; i < g.size(); ++i) {
      CHECK(std::abs(a[i] - x[i]) < 1e-9);
      CHECK(std::abs(b[i] - x[i]) < 1e-9);
    }
  }
}

TEST_CASE("simulate") {
  auto c = ga_config({1.0, 1.2, 0.8}, 0.4, 300);
  const auto a = simulate(c);
  const auto b = simulate(c);
  CHECK(a.states.size() == 301);
  CHECK(a.totals.size() == 301);
  CHECK(a.totals == b.totals);
  for (std::size_t s = 0; s < a.states.size(); ++s) CHECK(a.states[s] == b.states[s]);
  for (const auto& x : a.states)
    for (double e : x.values()) CHECK(e >= 0.0);
  // default start
  CHECK(a.states[0][1] == doctest::Approx(0.1 / 1.2));

  DynamicsConfig br;
  br.rule = Rule::kBestResponse;
  br.game = MiningGame({1.0, 1.0});
  br.init = nash_allocation(br.game);
  br.steps = 50;
  const auto flat = simulate(br);
  for (double X : flat.totals) CHECK(std::abs(X - 0.5) < 1e-15);

  c.learning_rates = {0.1, 0.1};
  CHECK_THROWS_AS(simulate(c), ConfigError);
  c.learning_rates = {0.1, -0.1, 0.1};
  CHECK_THROWS_AS(simulate(c), ConfigError);
  c.learning_rates = {0.1, 0.1, 0.1};
  c.init = AllocationVector({0.1});
  CHECK_THROWS_AS(simulate(c), DimensionError);
}

TEST_CASE("asymmetric best response oscillates") {
  DynamicsConfig c;
  c.rule = Rule::kBestResponse;
  c.game = MiningGame({10.0, 1.0});
  c.floor = 1e-3;
  c.steps = 450;
  const auto tr = simulate(c);
  const auto [lo, hi] = std::minmax_element(tr.totals.begin() + 51, tr.totals.end());
  CHECK(*hi - *lo > 1e-2);
}

TEST_CASE("bifurcation scan") {
  const auto base = ga_config({1.0, 1.0}, 0.1, 0);
  // past theta = 1 the symmetric pair crashes to X = 0
  const auto grid = linear_grid(0.05, 0.95, 10);
  ScanOptions one;
  one.threads = 1;
  one.burn_in = 2000;
  ScanOptions many = one;
  many.threads = 4;
  const auto a = bifurcation_scan(base, ScanAxis::kLearningRate, grid, one);
  const auto b = bifurcation_scan(base, ScanAxis::kLearningRate, grid, many);
  REQUIRE(a.points.size() == grid.size());
  for (std::size_t g = 0; g < grid.size(); ++g) {
    CHECK(a.points[g].param == grid[g]);
    CHECK(a.points[g].samples == b.points[g].samples);
    CHECK(a.points[g].diameter == b.points[g].diameter);
    if (!a.points[g].degenerate) CHECK(a.points[g].samples.size() == 400);
  }
  CHECK(a.points.front().diameter < 1e-6);
  CHECK(a.points.front().distinct == 1);
  CHECK(a.points.back().diameter > 0.1);
  CHECK(a.points.back().distinct > 1);
  const auto crit = critical_parameter(a, 0.1);
  REQUIRE(crit);
  CHECK(*crit > 0.05);

  CHECK_THROWS_AS(bifurcation_scan(base, ScanAxis::kLearningRate, {0.1}), ConfigError);
  CHECK_THROWS_AS(bifurcation_scan(base, ScanAxis::kLearningRate, {0.1, 0.1}), ConfigError);
  CHECK_THROWS_AS(bifurcation_scan(base, ScanAxis::kLearningRate, {0.1, 0.3, 0.2}), ConfigError);
  CHECK_NOTHROW(bifurcation_scan(base, ScanAxis::kLearningRate, {0.3, 0.2}, one));
  const auto crash = bifurcation_scan(base, ScanAxis::kLearningRate, {0.5, 1.2}, one);
  CHECK(crash.points[1].degenerate);
  CHECK(std::isinf(crash.points[1].diameter));
}

TEST_CASE("asymmetry scan") {
  DynamicsConfig base;
  base.rule = Rule::kBestResponse;
  base.game = MiningGame({1.0, 1.0});
  base.floor = 1e-3;
  const auto scan = bifurcation_scan(base, ScanAxis::kCostAsymmetry, log_grid(1.0, 100.0, 40));
  CHECK(scan.points.front().diameter < 1e-6);
  double peak = 0.0;
  for (const auto& p : scan.points) peak = std::max(peak, p.diameter);
  CHECK(peak > 1e-2);
  CHECK(scan.points.back().diameter < 1e-6);
}

TEST_CASE("grids") {
  const auto l = linear_grid(0.0, 1.0, 5);
  CHECK(l[2] == 0.5);
  const auto g = log_grid(1.0, 100.0, 3);
  CHECK(g[1] == doctest::Approx(10.0));
  CHECK(g.back() == 100.0);
  CHECK_THROWS_AS(linear_grid(1.0, 1.0, 5), ConfigError);
  CHECK_THROWS_AS(log_grid(0.0, 1.0, 5), ConfigError);
}

}  // TEST_SUITE
