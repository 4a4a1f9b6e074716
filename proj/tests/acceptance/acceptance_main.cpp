// One PASS/FAIL line per acceptance criterion. Exit status is the number of
// failures, so ctest treats any failure as a failed test.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>
#include <string>

#include "minecon/case_study.hpp"
#include "minecon/dynamics_lab.hpp"
#include "minecon/market_economy.hpp"
#include "minecon/strategic_game.hpp"
#include "oracles.hpp"

using namespace minecon;
using minecon::testing::Rng;

namespace {

#ifndef MINECON_DATA_DIR
#error "MINECON_DATA_DIR must be defined"
#endif
const std::string kData = MINECON_DATA_DIR;

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

// Collects the first failure message; later ones are counted only.
struct Outcome {
  bool ok = true;
  int failures = 0;
  std::string first;
  void expect(bool cond, const std::string& what) {
    if (cond) return;
    if (ok) first = what;
    ok = false;
    ++failures;
  }
};

std::string fmt(double x) {
  std::ostringstream s;
  s.precision(10);
  s << x;
  return s.str();
}

Outcome nash_vs_oracle() {
  Outcome o;
  Rng rng(101);
  for (int t = 0; t < 200; ++t) {
    const auto g = minecon::testing::random_game(rng);
    const auto x = nash_allocation(g);
    const auto ref = minecon::testing::damped_best_response(g);
    for (std::size_t i = 0; i < g.size(); ++i) {
      o.expect(std::abs(x[i] - ref[i]) < 1e-8,
               "game " + std::to_string(t) + " coordinate off by " + fmt(std::abs(x[i] - ref[i])));
      const double fd = minecon::testing::own_derivative(g, x.values(), i, 1e-6);
      o.expect(std::abs(fd) < 1e-8, "game " + std::to_string(t) + " residual " + fmt(fd));
    }
  }
  return o;
}

Outcome gf_agreement() {
  Outcome o;
  Rng rng(102);
  for (int t = 0; t < 200; ++t) {
    const auto g = minecon::testing::random_game(rng);
    const auto x = nash_allocation(g);
    const auto i = static_cast<std::size_t>(rng.integer(0, static_cast<int>(g.size()) - 1));
    const double d = rng.uniform(0.01, 2.0) * x.total();
    const double direct = griefing_factor_direct(g, x, i, x[i] + d).gf_total;
    const double closed = griefing_factor_closed(g, d);
    o.expect(rel(direct, closed) < 1e-10, "pair " + std::to_string(t) + " rel " + fmt(rel(direct, closed)));
  }
  const double five = griefing_factor_closed(MiningGame({1.0, 1.0}), 0.1);
  o.expect(std::abs(five - 5.0) < 1e-12, "n=2 delta=0.1 gives " + fmt(five));
  return o;
}

Outcome individual_griefing() {
  Outcome o;
  Rng rng(103);
  int hetero = 0, hetero_flagged = 0, homo = 0, homo_flagged = 0;
  double worst = 0.0;
  for (int t = 0; t < 500; ++t) {
    // every fifth game homogeneous
    MiningGame g = minecon::testing::random_game(rng);
    if (t % 5 == 0) g = MiningGame(std::vector<double>(g.size(), g.cost(0)), g.reward());
    const auto x = nash_allocation(g);
    const double xmin = *std::min_element(x.values().begin(), x.values().end());
    const auto i = static_cast<std::size_t>(rng.integer(0, static_cast<int>(g.size()) - 1));
    const double d = rng.uniform(1e-3, 0.999) * xmin;
    const auto r = griefing_factor_direct(g, x, i, x[i] + d);
    for (std::size_t j = 0; j < g.size(); ++j) {
      if (j != i) o.expect(r.gf_individual[j] > 1.0, "trial " + std::to_string(t) + " GF_ij " + fmt(r.gf_individual[j]));
    }
    o.expect(is_individually_griefable(g, x).griefable, "nash not flagged in trial " + std::to_string(t));
    const auto y = is_individually_griefable(g, non_griefable_allocation(g));
    const bool bad = y.griefable || y.max_gf_individual > 1.0 + 1e-6;
    o.expect(!bad, "y flagged in trial " + std::to_string(t) + " sup " + fmt(y.max_gf_individual));
    if (g.homogeneous()) {
      ++homo;
      homo_flagged += bad;
    } else {
      ++hetero;
      hetero_flagged += bad;
      worst = std::max(worst, y.max_gf_individual);
    }
  }
  std::printf("  y over the grid: flagged in %d/%d homogeneous and %d/%d heterogeneous games "
              "(largest sup-GF %.4g)\n",
              homo_flagged, homo, hetero_flagged, hetero, worst);
  return o;
}

Outcome expenditure() {
  Outcome o;
  Rng rng(104);
  for (int t = 0; t < 500; ++t) {
    // every fifth game homogeneous
    MiningGame g = minecon::testing::random_game(rng);
    if (t % 5 == 0) g = MiningGame(std::vector<double>(g.size(), g.cost(0)), g.reward());
    const auto e = expenditure_report(g);
    const double n = static_cast<double>(g.size());
    o.expect(std::abs(e.e_nash - (n - 1.0) / n * e.e_nongriefable) <= 1e-12 * g.reward(),
             "identity off in game " + std::to_string(t));
    if (g.homogeneous()) {
      o.expect(std::abs(e.e_nongriefable - g.reward()) <= 1e-12 * g.reward(),
               "homogeneous E(y) != v in game " + std::to_string(t));
    } else {
      o.expect(e.e_nongriefable < g.reward(), "heterogeneous E(y) >= v in game " + std::to_string(t));
    }
  }
  return o;
}

Outcome pr_convergence() {
  Outcome o;
  Rng rng(105);
  for (int t = 0; t < 100; ++t) {
    minecon::testing::EconomyShape shape;
    shape.exogenous = t % 4 == 3;
    const auto econ = minecon::testing::random_economy(rng, shape);
    const auto sol = solve_equilibrium(econ, {1e-10, 100000, true});
    const std::string id = "economy " + std::to_string(t);
    o.expect(sol.certificate.converged, id + " did not converge");
    const double kkt = kkt_residual(econ, sol.spending).max();
    o.expect(kkt < 1e-6, id + " kkt " + fmt(kkt));
    const auto& tr = sol.certificate.trace;
    for (std::size_t s = 1; s < tr.size(); ++s) {
      o.expect(tr[s].objective <= tr[s - 1].objective + 1e-10, id + " objective rose at " + std::to_string(s));
    }
    const auto b0 = SpendingMatrix::uniform_start(econ);
    for (std::size_t T : {10u, 100u}) {
      const auto r = md_rate_check(econ, b0, T);
      o.expect(r.satisfied, id + " rate at T=" + std::to_string(T) + " gap " + fmt(r.gap_t) +
                                " bound " + fmt(r.bound));
    }
  }
  return o;
}

Outcome bregman() {
  Outcome o;
  Rng rng(106);
  for (int t = 0; t < 1000; ++t) {
    minecon::testing::EconomyShape shape;
    shape.exogenous = t % 2 == 1;
    const auto econ = minecon::testing::random_economy(rng, shape);
    const auto z = minecon::testing::random_interior(econ, rng);
    const auto zn = minecon::testing::random_interior(econ, rng);
    const double gap = bregman_gap(econ, zn, z);
    const double kl = scaled_divergence(econ, zn, z);
    const double slack = 1e-12 * (1.0 + std::abs(shmyrev_objective(econ, z)));
    o.expect(gap >= -slack && gap <= kl + slack,
             "pair " + std::to_string(t) + " gap " + fmt(gap) + " kl " + fmt(kl));
  }
  for (int t = 0; t < 1000; ++t) {
    const int parts = rng.integer(1, 6);
    std::vector<double> d, dn, e, en;
    for (int j = 0; j < parts; ++j) {
      const int pieces = rng.integer(1, 5);
      double s = 0.0, sn = 0.0;
      for (int r = 0; r < pieces; ++r) {
        e.push_back(rng.uniform(0.01, 2.0));
        en.push_back(rng.uniform(0.0, 2.0));
        s += e.back();
        sn += en.back();
      }
      d.push_back(s);
      dn.push_back(sn);
    }
    o.expect(kl_divergence(dn, d) <= kl_divergence(en, e) + 1e-12,
             "refinement " + std::to_string(t) + " increased KL");
  }
  return o;
}

Outcome quasi_linear() {
  Outcome o;
  Rng rng(107);
  for (int t = 0; t < 50; ++t) {
    const int n = rng.integer(1, 6), m = rng.integer(1, 6);
    Eigen::MatrixXd a(n, m);
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < m; ++k) a(i, k) = rng.uniform(0.2, 3.0);
    Eigen::VectorXd K(n);
    for (int i = 0; i < n; ++i) K[i] = rng.uniform(0.2, 3.0);
    const auto e = Economy::from_rates(a, K, Eigen::VectorXd::Ones(n));
    SpendingMatrix s = SpendingMatrix::uniform_start(e);
    Eigen::MatrixXd ref = s.b();
    for (int step = 0; step < 100; ++step) {
      s = pr_step(e, s);
      ref = minecon::testing::classic_pr(a, K, ref);
      const double err = (s.b() - ref).cwiseAbs().maxCoeff();
      o.expect(err < 1e-12, "case " + std::to_string(t) + " step " + std::to_string(step) + " err " + fmt(err));
    }
  }
  return o;
}

Outcome fixture_behaviour() {
  Outcome o;
  const auto series = ingest_market_csv(kData + "/case_study/market_sample.csv");
  const auto rigs = load_rigs_csv(kData + "/case_study/rigs.csv");
  const auto energy = load_energy_csv(kData + "/case_study/energy.csv");

  int full_days = 0;
  const auto half = daily_equilibrium(series, rigs, energy, {1.0, 0.5, 1.0});
  for (const auto& r : half.reports) {
    o.expect(r.converged, format_date(r.date) + " rho=0.5 not converged");
    double full = 0.0;
    for (const auto& c : r.coins) full += std::sqrt(c.pfr * c.ppr);
    if (full < 1.0) continue;
    ++full_days;
    for (const auto& c : r.coins) {
      o.expect(std::abs(c.share - c.ppr) < 1e-6, format_date(r.date) + " " + c.coin + " share " +
                                                     fmt(c.share) + " ppr " + fmt(c.ppr));
    }
  }
  o.expect(full_days > 0, "no full-spend day in the fixture");

  const auto lin = daily_equilibrium(series, rigs, energy, {1.0, 1.0, 1.0});
  for (const auto& r : lin.reports) {
    const auto best = std::max_element(r.coins.begin(), r.coins.end(),
                                       [](const auto& a, const auto& b) { return a.ppr < b.ppr; });
    const auto top = std::max_element(r.coins.begin(), r.coins.end(),
                                      [](const auto& a, const auto& b) { return a.share < b.share; });
    o.expect(best == top && best->share > 1.0 - 1e-6, format_date(r.date) + " rho=1 missed argmax");
  }

  const auto flat = daily_equilibrium(series, rigs, energy, {1.0, 0.01, 1.0});
  for (const auto& r : flat.reports) {
    const double u = 1.0 / static_cast<double>(r.coins.size());
    for (const auto& c : r.coins) {
      o.expect(std::abs(c.share - u) < 0.02, format_date(r.date) + " rho=0.01 " + c.coin + " share " + fmt(c.share));
    }
  }
  return o;
}

Outcome learning_scans() {
  Outcome o;
  ScanOptions opt;
  opt.samples = 200;
  opt.burn_in = 5000;
  const auto grid = log_grid(0.01, 2.0, 25);
  double prev = INFINITY;
  for (std::size_t n : {2u, 5u, 10u}) {
    DynamicsConfig base;
    base.rule = Rule::kGradientAscent;
    base.game = MiningGame(std::vector<double>(n, 1.0));
    base.learning_rates.assign(n, grid.front());
    const auto scan = bifurcation_scan(base, ScanAxis::kLearningRate, grid, opt);
    const std::string id = "n=" + std::to_string(n);
    o.expect(scan.points.front().diameter < 1e-6,
             id + " diameter at smallest theta " + fmt(scan.points.front().diameter));
    const auto crit = critical_parameter(scan, 0.1);
    o.expect(crit.has_value(), id + " never exceeds 0.1");
    if (!crit) continue;
    for (const auto& p : scan.points) {
      if (p.param >= *crit) o.expect(p.diameter > 0.1, id + " collapses again at theta " + fmt(p.param));
    }
    o.expect(*crit <= prev, id + " critical theta " + fmt(*crit) + " above previous " + fmt(prev));
    std::printf("  n=%zu critical theta %.4g\n", n, *crit);
    prev = *crit;
  }

  DynamicsConfig br;
  br.rule = Rule::kBestResponse;
  br.game = MiningGame({1.0, 1.0});
  br.floor = 1e-3;
  const auto scan = bifurcation_scan(br, ScanAxis::kCostAsymmetry, log_grid(1.0, 100.0, 40));
  o.expect(scan.points.front().diameter < 1e-6, "BR oscillates at ratio 1");
  o.expect(scan.points.back().diameter < 1e-6, "BR oscillates at ratio 100");
  double lo = INFINITY, hi = 0.0;
  for (const auto& p : scan.points) {
    if (p.diameter > 1e-6) {
      lo = std::min(lo, p.param);
      hi = std::max(hi, p.param);
    }
  }
  o.expect(hi > 0.0, "BR asymmetry scan shows no band");
  if (hi > 0.0) std::printf("  BR band at cost ratios [%.4g, %.4g]\n", lo, hi);
  return o;
}

Outcome cost_model() {
  Outcome o;
  const RigSpec s19{"BTC", 2020, "Antminer s19 Pro", 2507, 110, 3250, 2};
  const double c = unit_cost(s19, 0.03);
  o.expect(std::abs(c - 0.052494) <= 1e-6, "s19 Pro gives " + fmt(c));
  Rng rng(110);
  for (int t = 0; t < 200; ++t) {
    RigSpec r{"X", 2020, "m", rng.uniform(100, 10000), rng.uniform(0.001, 200), rng.uniform(10, 5000),
              rng.uniform(1, 4)};
    const double e = rng.uniform(0.01, 0.1);
    const double base = unit_cost(r, e);
    RigSpec twice = r;
    twice.hashrate_ths *= 2.0;  // power of two: exact
    o.expect(unit_cost(twice, e) == base / 2.0, "hashrate homogeneity");
    RigSpec capex = r;
    capex.power_w = 0.0;
    RigSpec capex2 = capex;
    capex2.price_usd *= 2.0;
    o.expect(unit_cost(capex2, e) == 2.0 * unit_cost(capex, e), "price homogeneity");
    // the energy term only sees power times price
    RigSpec watts = r;
    watts.power_w *= 2.0;
    o.expect(unit_cost(watts, e) == unit_cost(r, 2.0 * e), "energy homogeneity");
  }
  return o;
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;  // 0 = no runtime limit
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const Criterion all[] = {
      {1, "Nash closed form vs damped best response", 10, nash_vs_oracle},
      {2, "griefing factor closed vs direct", 1, gf_agreement},
      {3, "individual griefing and the non-griefable allocation", 30, individual_griefing},
      {4, "expenditure identities", 0, expenditure},
      {5, "proportional response convergence, descent and rate", 60, pr_convergence},
      {6, "Bregman sandwich and KL refinement", 10, bregman},
      {7, "rho = 1 matches classic proportional response", 0, quasi_linear},
      {8, "case-study fixture behaviours", 5, fixture_behaviour},
      {9, "learning-rate and asymmetry bifurcation scans", 120, learning_scans},
      {10, "unit cost model", 0, cost_model},
  };
  int failed = 0;
  for (const auto& c : all) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.expect(false, std::string("threw: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.budget_s > 0 && secs > c.budget_s) o.expect(false, "over the " + fmt(c.budget_s) + " s budget");
    std::printf("%s criterion %d: %s (%.2f s)", o.ok ? "PASS" : "FAIL", c.id, c.name, secs);
    if (!o.ok) std::printf(" -- %d problem(s), first: %s", o.failures, o.first.c_str());
    std::printf("\n");
    std::fflush(stdout);
    failed += o.ok ? 0 : 1;
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(std::size(all)) - failed, std::size(all));
  return failed;
}
