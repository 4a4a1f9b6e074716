#include "minecon/dynamics_lab.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <cmath>
#include <limits>
#include <thread>

#include "minecon/errors.hpp"

namespace minecon {
namespace {

void check_floor(double floor) {
  if (!(floor >= 0.0) || !std::isfinite(floor)) throw ConfigError("floor must be finite and >= 0");
}

void validate(const DynamicsConfig& c) {
  const std::size_t n = c.game.size();
  check_floor(c.floor);
  if (c.rule == Rule::kGradientAscent) {
    if (c.learning_rates.size() != n) {
      throw ConfigError("gradient ascent needs one learning rate per miner");
    }
    for (double t : c.learning_rates) {
      if (!(t > 0.0) || !std::isfinite(t)) throw ConfigError("learning rates must be positive");
    }
  }
  if (c.init && c.init->size() != n) throw DimensionError("init has the wrong number of miners");
}

std::size_t count_distinct(std::vector<double> s, double resolution) {
  if (s.empty()) return 0;
  std::sort(s.begin(), s.end());
  std::size_t count = 1;
  double anchor = s.front();
  for (double v : s) {
    if (v - anchor > resolution) {
      ++count;
      anchor = v;
    }
  }
  return count;
}

ScanPoint run_point(const DynamicsConfig& base, ScanAxis axis, double param,
                    const ScanOptions& opt) {
  DynamicsConfig cfg = base;
  cfg.burn_in = opt.burn_in;
  cfg.steps = opt.burn_in + opt.samples;
  if (axis == ScanAxis::kLearningRate) {
    cfg.learning_rates.assign(base.game.size(), param);
  } else {
    auto costs = base.game.costs();
    const double c = costs[0];
    costs.assign(costs.size(), c);
    costs[0] = param * c;
    cfg.game = MiningGame(std::move(costs), base.game.reward());
    // the default start follows the new costs unless one was given
  }

  ScanPoint p;
  p.param = param;
  try {
    const Trace tr = simulate(cfg);
    p.samples.assign(tr.totals.begin() + static_cast<std::ptrdiff_t>(opt.burn_in) + 1,
                     tr.totals.end());
    const auto [lo, hi] = std::minmax_element(p.samples.begin(), p.samples.end());
    p.diameter = p.samples.empty() ? 0.0 : *hi - *lo;
    p.distinct = count_distinct(p.samples, opt.resolution);
  } catch (const DegenerateError&) {
    p.degenerate = true;
    p.diameter = std::numeric_limits<double>::infinity();
  }
  return p;
}

}  // namespace

AllocationVector default_init(const MiningGame& game) {
  std::vector<double> x(game.size());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = 0.1 / game.cost(i);
  return AllocationVector(std::move(x));
}

AllocationVector ga_step(const MiningGame& game, const AllocationVector& x,
                         const std::vector<double>& rates, double floor) {
  const std::size_t n = game.size();
  if (x.size() != n) throw DimensionError("allocation has the wrong number of miners");
  if (rates.size() != n) throw DimensionError("need one learning rate per miner");
  check_floor(floor);
  const double total = x.total();
  if (!(total > 0.0)) throw DegenerateError("gradient undefined at X = 0");
  std::vector<double> next(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double grad = game.reward() * x.others(i) / (total * total) - game.cost(i);
    next[i] = std::max(floor, x[i] + rates[i] * grad);
  }
  return AllocationVector(std::move(next));
}

AllocationVector br_step(const MiningGame& game, const AllocationVector& x, double floor) {
  const std::size_t n = game.size();
  if (x.size() != n) throw DimensionError("allocation has the wrong number of miners");
  check_floor(floor);
  std::vector<double> next(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double rest = x.others(i);
    next[i] = std::max(floor, std::sqrt(game.reward() * rest / game.cost(i)) - rest);
  }
  return AllocationVector(std::move(next));
}

Trace simulate(const DynamicsConfig& config) {
  validate(config);
  Trace tr;
  tr.states.reserve(config.steps + 1);
  tr.totals.reserve(config.steps + 1);
  tr.states.push_back(config.init ? *config.init : default_init(config.game));
  tr.totals.push_back(tr.states.back().total());
  for (std::size_t t = 0; t < config.steps; ++t) {
    const auto& x = tr.states.back();
    AllocationVector next = config.rule == Rule::kGradientAscent
                                ? ga_step(config.game, x, config.learning_rates, config.floor)
                                : br_step(config.game, x, config.floor);
    tr.totals.push_back(next.total());
    tr.states.push_back(std::move(next));
  }
  return tr;
}

BifurcationScan bifurcation_scan(const DynamicsConfig& base, ScanAxis axis,
                                 const std::vector<double>& grid, const ScanOptions& options) {
  if (grid.size() < 2) throw ConfigError("scan grid needs at least two values");
  const bool up = grid[1] > grid[0];
  for (std::size_t g = 1; g < grid.size(); ++g) {
    if (up ? !(grid[g] > grid[g - 1]) : !(grid[g] < grid[g - 1])) {
      throw ConfigError("scan grid must be strictly monotone");
    }
  }
  for (double p : grid) {
    if (!(p > 0.0) || !std::isfinite(p)) throw ConfigError("scan parameters must be positive");
  }
  if (options.samples == 0) throw ConfigError("scan needs at least one sample");
  if (axis == ScanAxis::kCostAsymmetry && base.init && base.init->size() != base.game.size()) {
    throw DimensionError("init has the wrong number of miners");
  }

  BifurcationScan scan;
  scan.axis = axis;
  scan.points.resize(grid.size());

  unsigned workers = options.threads ? options.threads : std::thread::hardware_concurrency();
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(grid.size())));

  // Each grid point writes only its own slot, so results do not depend on
  // scheduling.
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(workers);
  auto work = [&](unsigned w) {
    try {
      for (std::size_t g = next++; g < grid.size(); g = next++) {
        scan.points[g] = run_point(base, axis, grid[g], options);
      }
    } catch (...) {
      errors[w] = std::current_exception();
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return scan;
}

std::optional<double> critical_parameter(const BifurcationScan& scan, double threshold) {
  std::optional<double> best;
  for (const auto& p : scan.points) {
    if (p.diameter > threshold && (!best || p.param < *best)) best = p.param;
  }
  return best;
}

std::vector<double> linear_grid(double lo, double hi, std::size_t count) {
  if (count < 2 || !(hi > lo)) throw ConfigError("linear grid needs count >= 2 and hi > lo");
  std::vector<double> g(count);
  for (std::size_t i = 0; i < count; ++i) {
    g[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
  }
  return g;
}

std::vector<double> log_grid(double lo, double hi, std::size_t count) {
  if (count < 2 || !(lo > 0.0) || !(hi > lo)) {
    throw ConfigError("log grid needs count >= 2 and 0 < lo < hi");
  }
  std::vector<double> g(count);
  const double a = std::log(lo);
  const double b = std::log(hi);
  for (std::size_t i = 0; i < count; ++i) {
    g[i] = std::exp(a + (b - a) * static_cast<double>(i) / static_cast<double>(count - 1));
  }
  g.front() = lo;
  g.back() = hi;
  return g;
}

}  // namespace minecon
