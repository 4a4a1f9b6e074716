#pragma once

// Single-chain strategic mining game: proportional rewards, linear costs.
//
// Miner i allocating x_i resources against a total X earns
//   Pi_i(x) = (x_i / X) * v - c_i * x_i.
// Closed forms are evaluated on the reward-normalised game (costs c_i / v,
// reward 1) and rescaled at the interface, so every result below holds for
// arbitrary v. Resource units are never rescaled.

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace minecon {

class MiningGame {
 public:
  // Requires at least two miners, all costs > 0 and reward > 0.
  explicit MiningGame(std::vector<double> costs, double reward = 1.0);

  std::size_t size() const { return costs_.size(); }
  const std::vector<double>& costs() const { return costs_; }
  double cost(std::size_t i) const { return costs_.at(i); }
  double reward() const { return reward_; }

  // c_i / v.
  double normalized_cost(std::size_t i) const { return costs_.at(i) / reward_; }
  bool homogeneous() const;

 private:
  std::vector<double> costs_;
  double reward_;
};

class AllocationVector {
 public:
  AllocationVector() = default;
  // Entries must be finite and non-negative.
  explicit AllocationVector(std::vector<double> x);

  std::size_t size() const { return x_.size(); }
  double operator[](std::size_t i) const { return x_[i]; }
  const std::vector<double>& values() const { return x_; }
  // Left-to-right sum of the entries, cached at construction.
  double total() const { return total_; }
  // X_{-i}.
  double others(std::size_t i) const;

  // Copy with entry i replaced.
  AllocationVector with(std::size_t i, double value) const;
  AllocationVector scaled(double factor) const;

  friend bool operator==(const AllocationVector& a, const AllocationVector& b) {
    return a.x_ == b.x_;
  }

 private:
  std::vector<double> x_;
  double total_ = 0.0;
};

// Outcome of one unilateral deviation x_i -> x_i + delta. Loss vectors are
// indexed by miner; the deviator's own slot holds 0.
struct GriefingReport {
  std::size_t deviator = 0;
  double delta = 0.0;
  double own_loss = 0.0;
  std::vector<double> victim_losses;
  double gf_total = 0.0;
  std::vector<double> gf_individual;
};

struct DeviationLimits {
  double breakeven_delta = 0.0;
  double max_network_loss = 0.0;
};

struct ExpenditureReport {
  double e_nash = 0.0;
  double e_nongriefable = 0.0;
  double ratio = 0.0;  // e_nash / e_nongriefable
  bool homogeneous = false;
};

struct VarianceBound {
  double variance = 0.0;
  double bound = 0.0;
  bool satisfied = false;
};

enum class Participation {
  kStrict,   // throw InfeasibleError when some c_i >= c*
  kAutoDrop  // remove the costliest violator, recompute c*, repeat
};

// Deviation grid used by is_individually_griefable. Deviations are increases
// x_i + delta with delta log-spaced on [min_factor, max_factor] * X*, where X*
// is the Nash total of the game.
struct DeviationGrid {
  std::size_t points_per_miner = 200;
  double min_factor = 1e-4;
  double max_factor = 4.0;
};

struct GriefingWitness {
  std::size_t deviator = 0;
  std::size_t victim = 0;
  double deviation = 0.0;  // the deviator's new allocation
  double gf_individual = 0.0;
};

struct GriefabilityResult {
  bool griefable = false;
  std::optional<GriefingWitness> witness;
  // Largest GF_ij seen over the whole grid.
  double max_gf_individual = 0.0;
};

inline constexpr double kDegenerateLossTolerance = 1e-12;

double utility(const MiningGame& game, const AllocationVector& alloc, std::size_t i);

// c* = (sum_i c_i) / (n - 1), in the game's cost units.
double c_star(const MiningGame& game);
// Indices i with c_i >= c*.
std::vector<std::size_t> participation_violations(const MiningGame& game);

AllocationVector nash_allocation(const MiningGame& game,
                                 Participation mode = Participation::kStrict);

GriefingReport griefing_factor_direct(const MiningGame& game, const AllocationVector& base,
                                      std::size_t deviator, double new_x,
                                      double tolerance = kDegenerateLossTolerance);

// GF of the deviation x_i* + delta from the Nash allocation; independent of i.
double griefing_factor_closed(const MiningGame& game, double delta);

// Network loss L(delta) when miner i over-mines by delta at the Nash point.
double network_loss(const MiningGame& game, std::size_t i, double delta);

AllocationVector non_griefable_allocation(const MiningGame& game);

GriefabilityResult is_individually_griefable(const MiningGame& game,
                                             const AllocationVector& alloc,
                                             const DeviationGrid& grid = {},
                                             double tolerance = 1e-9);

DeviationLimits breakeven_analysis(const MiningGame& game, std::size_t i);

ExpenditureReport expenditure_report(const MiningGame& game);

VarianceBound cost_variance_bound(const MiningGame& game);

}  // namespace minecon
