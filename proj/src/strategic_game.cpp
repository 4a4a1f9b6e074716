#include "minecon/strategic_game.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "minecon/errors.hpp"

namespace minecon {
namespace {

void check_size(const MiningGame& game, const AllocationVector& alloc) {
  if (alloc.size() != game.size()) {
    std::ostringstream msg;
    msg << "allocation has " << alloc.size() << " entries, game has " << game.size()
        << " miners";
    throw DimensionError(msg.str());
  }
}

void check_index(const MiningGame& game, std::size_t i) {
  if (i >= game.size()) {
    throw DimensionError("miner index " + std::to_string(i) + " out of range");
  }
}

void require_participation(const MiningGame& game) {
  auto bad = participation_violations(game);
  if (!bad.empty()) {
    std::ostringstream msg;
    msg << "participation constraint c_i < c* = " << c_star(game) << " violated by miner(s)";
    for (auto i : bad) msg << ' ' << i;
    throw InfeasibleError(msg.str(), std::move(bad));
  }
}

double sum_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0);
}

// Loss of miner j when `deviator` moves from base[deviator] by d, i.e.
// Pi_j(base) - Pi_j(dev), written without subtracting two utilities.
double loss_of(const MiningGame& game, const AllocationVector& base, std::size_t deviator,
               double d, std::size_t j) {
  const double v = game.reward();
  const double total = base.total();
  const double moved = total + d;
  if (total <= 0.0 || moved <= 0.0) {
    return utility(game, base, j) - utility(game, base.with(deviator, base[deviator] + d), j);
  }
  if (j == deviator) {
    return d * (game.cost(j) - v * base.others(j) / (total * moved));
  }
  return v * base[j] * d / (total * moved);
}

}  // namespace

MiningGame::MiningGame(std::vector<double> costs, double reward)
    : costs_(std::move(costs)), reward_(reward) {
  if (costs_.size() < 2) throw DomainError("a mining game needs at least two miners");
  for (std::size_t i = 0; i < costs_.size(); ++i) {
    if (!(costs_[i] > 0.0) || !std::isfinite(costs_[i])) {
      throw DomainError("cost of miner " + std::to_string(i) + " must be positive and finite");
    }
  }
  if (!(reward_ > 0.0) || !std::isfinite(reward_)) {
    throw DomainError("reward must be positive and finite");
  }
}

bool MiningGame::homogeneous() const {
  return std::all_of(costs_.begin(), costs_.end(), [&](double c) { return c == costs_[0]; });
}

AllocationVector::AllocationVector(std::vector<double> x) : x_(std::move(x)) {
  for (std::size_t i = 0; i < x_.size(); ++i) {
    if (!(x_[i] >= 0.0) || !std::isfinite(x_[i])) {
      throw DomainError("allocation entry " + std::to_string(i) + " must be finite and >= 0");
    }
    total_ += x_[i];
  }
}

double AllocationVector::others(std::size_t i) const {
  double s = 0.0;
  for (std::size_t j = 0; j < x_.size(); ++j) {
    if (j != i) s += x_[j];
  }
  return s;
}

AllocationVector AllocationVector::with(std::size_t i, double value) const {
  auto x = x_;
  x.at(i) = value;
  return AllocationVector(std::move(x));
}

AllocationVector AllocationVector::scaled(double factor) const {
  auto x = x_;
  for (auto& e : x) e *= factor;
  return AllocationVector(std::move(x));
}

double utility(const MiningGame& game, const AllocationVector& alloc, std::size_t i) {
  check_size(game, alloc);
  check_index(game, i);
  const double total = alloc.total();
  // 0/0 share is taken as 0.
  const double share = total > 0.0 ? alloc[i] / total : 0.0;
  return share * game.reward() - game.cost(i) * alloc[i];
}

double c_star(const MiningGame& game) {
  return sum_of(game.costs()) / static_cast<double>(game.size() - 1);
}

std::vector<std::size_t> participation_violations(const MiningGame& game) {
  const double cs = c_star(game);
  std::vector<std::size_t> bad;
  for (std::size_t i = 0; i < game.size(); ++i) {
    if (!(game.cost(i) < cs)) bad.push_back(i);
  }
  return bad;
}

AllocationVector nash_allocation(const MiningGame& game, Participation mode) {
  const std::size_t n = game.size();
  std::vector<bool> active(n, true);
  if (mode == Participation::kStrict) {
    require_participation(game);
  }

  double cs = 0.0;
  for (;;) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (active[i]) {
        sum += game.cost(i);
        ++count;
      }
    }
    cs = sum / static_cast<double>(count - 1);
    std::optional<std::size_t> worst;
    for (std::size_t i = 0; i < n; ++i) {
      if (active[i] && !(game.cost(i) < cs) && (!worst || game.cost(i) > game.cost(*worst))) {
        worst = i;
      }
    }
    if (!worst) break;
    // Two miners always satisfy c_i < c_1 + c_2, so count never drops below 2.
    active[*worst] = false;
  }

  std::vector<double> x(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (active[i]) x[i] = game.reward() * (1.0 - game.cost(i) / cs) / cs;
  }
  return AllocationVector(std::move(x));
}

GriefingReport griefing_factor_direct(const MiningGame& game, const AllocationVector& base,
                                      std::size_t deviator, double new_x, double tolerance) {
  check_size(game, base);
  check_index(game, deviator);
  if (!(new_x >= 0.0)) throw DomainError("deviation must keep the allocation non-negative");

  GriefingReport r;
  r.deviator = deviator;
  r.delta = new_x - base[deviator];
  r.own_loss = loss_of(game, base, deviator, r.delta, deviator);
  if (!(std::abs(r.own_loss) >= tolerance * game.reward())) {
    throw DegenerateError("deviator's own loss is below tolerance; griefing factor undefined");
  }
  r.victim_losses.assign(game.size(), 0.0);
  r.gf_individual.assign(game.size(), 0.0);
  double network = 0.0;
  for (std::size_t j = 0; j < game.size(); ++j) {
    if (j == deviator) continue;
    r.victim_losses[j] = loss_of(game, base, deviator, r.delta, j);
    r.gf_individual[j] = r.victim_losses[j] / r.own_loss;
    network += r.victim_losses[j];
  }
  r.gf_total = network / r.own_loss;
  return r;
}

double griefing_factor_closed(const MiningGame& game, double delta) {
  if (!(delta > 0.0)) throw DomainError("delta must be positive");
  // 1 / (c* delta) on the normalised game.
  const double cs_hat = c_star(game) / game.reward();
  return 1.0 / (cs_hat * delta);
}

double network_loss(const MiningGame& game, std::size_t i, double delta) {
  check_index(game, i);
  const double cs_hat = c_star(game) / game.reward();
  return delta * game.cost(i) / (1.0 + cs_hat * delta);
}

AllocationVector non_griefable_allocation(const MiningGame& game) {
  const double n = static_cast<double>(game.size());
  return nash_allocation(game, Participation::kStrict).scaled(n / (n - 1.0));
}

GriefabilityResult is_individually_griefable(const MiningGame& game,
                                             const AllocationVector& alloc,
                                             const DeviationGrid& grid, double tolerance) {
  check_size(game, alloc);
  if (grid.points_per_miner == 0) throw ConfigError("deviation grid is empty");
  if (!(grid.min_factor > 0.0) || !(grid.max_factor >= grid.min_factor)) {
    throw ConfigError("deviation grid needs 0 < min_factor <= max_factor");
  }
  for (std::size_t i = 0; i < alloc.size(); ++i) {
    if (!(alloc[i] > 0.0)) throw PreconditionError("allocation must be strictly positive");
  }

  const double x_star_total = game.reward() / c_star(game);
  const double lo = std::log(grid.min_factor * x_star_total);
  const double hi = std::log(grid.max_factor * x_star_total);
  const std::size_t pts = grid.points_per_miner;

  GriefabilityResult out;
  for (std::size_t i = 0; i < game.size(); ++i) {
    for (std::size_t k = 0; k < pts; ++k) {
      const double t = pts == 1 ? 1.0 : static_cast<double>(k) / static_cast<double>(pts - 1);
      const double delta = std::exp(lo + t * (hi - lo));
      const double own = loss_of(game, alloc, i, delta, i);
      // Only deviations that cost the deviator something count as griefing.
      if (!(own > kDegenerateLossTolerance * game.reward())) continue;
      for (std::size_t j = 0; j < game.size(); ++j) {
        if (j == i) continue;
        const double gf = loss_of(game, alloc, i, delta, j) / own;
        if (gf > out.max_gf_individual) {
          out.max_gf_individual = gf;
          if (gf > 1.0 + tolerance) {
            out.griefable = true;
            out.witness = GriefingWitness{i, j, alloc[i] + delta, gf};
          }
        }
      }
    }
  }
  return out;
}

DeviationLimits breakeven_analysis(const MiningGame& game, std::size_t i) {
  check_index(game, i);
  const auto x = nash_allocation(game, Participation::kStrict);
  const double cs = c_star(game);
  DeviationLimits lim;
  lim.breakeven_delta = game.reward() * (1.0 / game.cost(i) - 1.0 / cs);
  lim.max_network_loss = game.cost(i) * x[i];
  return lim;
}

ExpenditureReport expenditure_report(const MiningGame& game) {
  require_participation(game);
  const double n = static_cast<double>(game.size());
  double s1 = 0.0;
  double s2 = 0.0;
  for (std::size_t i = 0; i < game.size(); ++i) {
    const double c = game.normalized_cost(i);
    s1 += c;
    s2 += c * c;
  }
  ExpenditureReport r;
  r.e_nongriefable = game.reward() * n * (1.0 - (n - 1.0) * s2 / (s1 * s1));
  r.e_nash = (n - 1.0) / n * r.e_nongriefable;
  r.ratio = r.e_nash / r.e_nongriefable;
  r.homogeneous = game.homogeneous();
  return r;
}

VarianceBound cost_variance_bound(const MiningGame& game) {
  require_participation(game);
  const std::size_t n = game.size();
  double mean = 0.0;
  double cmax = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mean += game.normalized_cost(i);
    cmax = std::max(cmax, game.normalized_cost(i));
  }
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = game.normalized_cost(i) - mean;
    ss += d * d;
  }
  const double nn = static_cast<double>(n);
  VarianceBound r;
  r.variance = ss / (nn - 1.0);
  r.bound = cmax * (nn / (nn - 1.0) - cmax);
  r.satisfied = r.variance < r.bound;
  return r;
}

}  // namespace minecon
