#pragma once

// Multi-chain mining economy as a Fisher market with quasi-CES utilities.
//
// Miner i spends b_ik monetary units on chain k out of a capacity K_i and
// values the per-chain returns through
//   Pi_i(b_i) = (sum_k (v_ik b_ik)^rho_i)^(1/rho_i) - sum_k b_ik,
// where v_ik = v_k / (X_k c_ik) is the return per unit spent. X_k is either
// recomputed from the miners' own spending each round (endogenous) or fixed
// to observed network totals (exogenous, large-market view).
//
// The proportional-response update
//   b_ik <- K_i u_ik / max(u_i, K_i (K_i - w_i)^(rho_i - 1)),  u_ik = (v_ik b_ik)^rho_i
// is mirror descent with divergence sum_i KL(b_i' || b_i) / rho_i on a
// Shmyrev-type objective F; the oracles below evaluate F, its Bregman gap,
// the equilibrium conditions, and the O(1/T) rate bound.

#include <Eigen/Dense>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace minecon {

enum class AggregateMode {
  kEndogenous,  // X_k <- sum_j b_jk after every round
  kExogenous    // X_k fixed to observed network totals
};

class Economy {
 public:
  // revenues: v_k (m); unit_costs: c_ik (n x m); capacities: K_i (n);
  // rho: rho_i in (0, 1] (n). Supplying network_totals (m, positive) makes the
  // economy exogenous.
  Economy(Eigen::VectorXd revenues, Eigen::MatrixXd unit_costs, Eigen::VectorXd capacities,
          Eigen::VectorXd rho, std::optional<Eigen::VectorXd> network_totals = std::nullopt);

  // Exogenous economy whose effective rates are exactly `rates` (n x m):
  // v_k = 1, X_k = 1, c_ik = 1 / rates_ik.
  static Economy from_rates(const Eigen::MatrixXd& rates, Eigen::VectorXd capacities,
                            Eigen::VectorXd rho);

  std::size_t miners() const { return static_cast<std::size_t>(unit_costs_.rows()); }
  std::size_t chains() const { return static_cast<std::size_t>(unit_costs_.cols()); }
  AggregateMode mode() const {
    return network_totals_ ? AggregateMode::kExogenous : AggregateMode::kEndogenous;
  }

  const Eigen::VectorXd& revenues() const { return revenues_; }
  const Eigen::MatrixXd& unit_costs() const { return unit_costs_; }
  const Eigen::VectorXd& capacities() const { return capacities_; }
  const Eigen::VectorXd& rho() const { return rho_; }
  const std::optional<Eigen::VectorXd>& network_totals() const { return network_totals_; }

  // Copy with miners reordered: row r of the result is miner perm[r].
  Economy permuted_miners(std::span<const std::size_t> perm) const;
  Economy permuted_chains(std::span<const std::size_t> perm) const;

 private:
  Eigen::VectorXd revenues_;
  Eigen::MatrixXd unit_costs_;
  Eigen::VectorXd capacities_;
  Eigen::VectorXd rho_;
  std::optional<Eigen::VectorXd> network_totals_;
};

class SpendingMatrix {
 public:
  // Entries must be finite and >= 0, and each row may exceed its capacity by
  // at most kBudgetSlack * K_i.
  SpendingMatrix(const Economy& economy, Eigen::MatrixXd b);

  // Uniform K_i / (2m) on every chain.
  static SpendingMatrix uniform_start(const Economy& economy);

  const Eigen::MatrixXd& b() const { return b_; }
  double operator()(std::size_t i, std::size_t k) const { return b_(i, k); }
  // w_i = K_i - sum_k b_ik
  const Eigen::VectorXd& unspent() const { return unspent_; }
  // p_k = sum_i b_ik
  const Eigen::VectorXd& chain_totals() const { return chain_totals_; }
  // q_i = sum_k b_ik
  const Eigen::VectorXd& spent() const { return spent_; }

  static constexpr double kBudgetSlack = 1e-12;

 private:
  Eigen::MatrixXd b_;
  Eigen::VectorXd unspent_;
  Eigen::VectorXd chain_totals_;
  Eigen::VectorXd spent_;
};

struct EffectiveRates {
  Eigen::MatrixXd v;  // n x m, return per monetary unit spent
};

struct PRState {
  Eigen::MatrixXd u_ik;     // (v_ik b_ik)^rho_i
  Eigen::VectorXd u_i;      // sum_k u_ik
  Eigen::VectorXd k_tilde;  // K_i (K_i - w_i)^(rho_i - 1)
};

struct TraceRow {
  std::size_t iter = 0;
  double objective = 0.0;
  double kkt_residual = 0.0;
  double max_step = 0.0;
};

struct EquilibriumCertificate {
  double kkt_residual = 0.0;
  double complementarity_residual = 0.0;
  double objective_value = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  std::vector<TraceRow> trace;
};

struct SolverOptions {
  double tol = 1e-10;
  std::size_t max_iter = 100000;
  bool record_trace = true;
};

struct SolveResult {
  SpendingMatrix spending;
  EquilibriumCertificate certificate;
};

struct KktReport {
  double stationarity = 0.0;
  double complementarity = 0.0;
  double max() const { return stationarity > complementarity ? stationarity : complementarity; }
};

struct RateCheck {
  double gap_t = 0.0;
  double bound = 0.0;
  double f_t = 0.0;
  double f_star = 0.0;
  bool satisfied = false;
};

// X_k in use for a spending state: observed totals when exogenous, otherwise
// p_k = sum_i b_ik.
Eigen::VectorXd aggregate_totals(const Economy& economy, const SpendingMatrix& spending);

EffectiveRates effective_rates(const Economy& economy, const SpendingMatrix& spending);
EffectiveRates effective_rates(const Economy& economy, const Eigen::VectorXd& chain_totals);

double quasi_ces_utility(const Economy& economy, std::size_t i, const Eigen::VectorXd& b_i,
                         const EffectiveRates& rates);

PRState pr_state(const Economy& economy, const SpendingMatrix& spending);

SpendingMatrix pr_step(const Economy& economy, const SpendingMatrix& state);

SolveResult solve_equilibrium(const Economy& economy, const SpendingMatrix& b0,
                              const SolverOptions& options = {});
SolveResult solve_equilibrium(const Economy& economy, const SolverOptions& options = {});

// Equilibrium conditions of the spending program. With z_ik = u_ik / b_ik and
// lambda_i = u_i / q_i (the spend-weighted mean of z_ik):
//   stationarity_i = max_k max((z_ik - lambda_i) / lambda_i,
//                              (b_ik / q_i) |z_ik - lambda_i| / lambda_i)
// which is zero exactly when z_ik is constant on the support of b_i and no
// chain off the support pays more. complementarity compares lambda_i with
// q_i^(rho_i - 1): equality while budget is left over, >= once it is spent.
// Infinite when some b_ik = 0 with rho_i < 1.
KktReport kkt_residual(const Economy& economy, const SpendingMatrix& spending,
                       double unspent_tol = 1e-9);

// Shmyrev-type objective
//   F = -sum_i (1/rho_i) sum_k b_ik ln[a_ik^rho_i b_ik^(rho_i - 1)] + Phi(b)
//       + sum_i [w_i + (rho_i - 1)/rho_i q_i ln q_i]
// with a_ik = v_k / c_ik and Phi = sum_k p_k ln p_k when endogenous, and
// a_ik = v_ik and Phi = sum_ik b_ik when exogenous.
double shmyrev_objective(const Economy& economy, const SpendingMatrix& spending);

// Gradient of F with respect to b_ik with w tied to b (w_i = K_i - q_i).
Eigen::MatrixXd shmyrev_gradient(const Economy& economy, const SpendingMatrix& spending);

// Generalised KL: sum b' ln(b'/b) - sum b' + sum b.
double kl_divergence(std::span<const double> b_new, std::span<const double> b_old);
double kl_divergence(const Eigen::VectorXd& b_new, const Eigen::VectorXd& b_old);

// sum_i KL(b'_i || b_i) / rho_i, the mirror-descent divergence.
double scaled_divergence(const Economy& economy, const SpendingMatrix& b_new,
                         const SpendingMatrix& b_old);

// d_F(z', z) = F(z') - F(z) - <grad F(z), z' - z>.
double bregman_gap(const Economy& economy, const SpendingMatrix& z_new,
                   const SpendingMatrix& z_old);

// Runs T proportional-response rounds from b0 and compares the objective gap
// against the bound divergence(b*, b0) / T, where b* comes from a solver run
// allowed at least 10 T rounds (it may stop earlier once converged).
RateCheck md_rate_check(const Economy& economy, const SpendingMatrix& b0, std::size_t T);

}  // namespace minecon
