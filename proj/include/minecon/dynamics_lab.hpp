#pragma once

// Discrete-time learning dynamics on the single-chain mining game and
// parameter scans of their long-run behaviour.
//
//   GA: x_i <- x_i + theta_i (v X_{-i} / X^2 - c_i)
//   BR: x_i <- sqrt(v X_{-i} / c_i) - X_{-i}
//
// Both maps update every miner from the same pre-step state and clamp the
// result at `floor` (0 by default).

#include <cstddef>
#include <optional>
#include <vector>

#include "minecon/strategic_game.hpp"

namespace minecon {

enum class Rule { kGradientAscent, kBestResponse };

struct DynamicsConfig {
  Rule rule = Rule::kGradientAscent;
  MiningGame game{{1.0, 1.0}};
  std::vector<double> learning_rates;  // one per miner, GA only
  std::optional<AllocationVector> init;  // default x0_i = 0.1 / c_i
  std::size_t steps = 450;
  std::size_t burn_in = 50;
  double floor = 0.0;
};

struct Trace {
  std::vector<AllocationVector> states;  // steps + 1 entries, states[0] = init
  std::vector<double> totals;            // X_t
};

AllocationVector default_init(const MiningGame& game);

AllocationVector ga_step(const MiningGame& game, const AllocationVector& x,
                         const std::vector<double>& rates, double floor = 0.0);
AllocationVector br_step(const MiningGame& game, const AllocationVector& x, double floor = 0.0);

Trace simulate(const DynamicsConfig& config);

enum class ScanAxis {
  kLearningRate,   // theta, shared by all miners
  kCostAsymmetry   // miner 0 gets cost r * c_0, the rest keep c_0
};

struct ScanOptions {
  std::size_t samples = 400;
  std::size_t burn_in = 50;
  double resolution = 1e-6;
  unsigned threads = 0;  // 0: hardware concurrency
};

struct ScanPoint {
  double param = 0.0;
  std::vector<double> samples;  // aggregate X after burn-in
  double diameter = 0.0;        // max - min of samples
  std::size_t distinct = 0;     // samples distinct at `resolution`
  bool degenerate = false;      // the map hit X = 0; diameter is +inf
};

struct BifurcationScan {
  ScanAxis axis = ScanAxis::kLearningRate;
  std::vector<ScanPoint> points;
};

// Runs `base` once per grid value. The grid must be strictly monotone with at
// least two values; its burn_in/steps are replaced by the scan options.
BifurcationScan bifurcation_scan(const DynamicsConfig& base, ScanAxis axis,
                                 const std::vector<double>& grid, const ScanOptions& options = {});

// Smallest grid value whose diameter exceeds `threshold`, if any.
std::optional<double> critical_parameter(const BifurcationScan& scan, double threshold);

std::vector<double> linear_grid(double lo, double hi, std::size_t count);
std::vector<double> log_grid(double lo, double hi, std::size_t count);

}  // namespace minecon
