#include "minecon/market_economy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "minecon/errors.hpp"

namespace minecon {
namespace {

constexpr double kSpendFloor = 1e-300;

void require_positive(const Eigen::VectorXd& v, const char* name) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (!(v[i] > 0.0) || !std::isfinite(v[i])) {
      std::ostringstream msg;
      msg << name << "[" << i << "] must be positive and finite";
      throw DomainError(msg.str());
    }
  }
}

void check_shape(const Economy& e, const Eigen::MatrixXd& b) {
  if (static_cast<std::size_t>(b.rows()) != e.miners() ||
      static_cast<std::size_t>(b.cols()) != e.chains()) {
    std::ostringstream msg;
    msg << "spending is " << b.rows() << "x" << b.cols() << ", economy is " << e.miners() << "x"
        << e.chains();
    throw DimensionError(msg.str());
  }
}

// a_ik in the objective: v_k / c_ik when endogenous, the fixed v_ik otherwise.
double valuation(const Economy& e, std::size_t i, std::size_t k) {
  const double a = e.revenues()[k] / e.unit_costs()(i, k);
  if (e.mode() == AggregateMode::kExogenous) return a / (*e.network_totals())[k];
  return a;
}

void require_interior(const SpendingMatrix& s) {
  const auto& b = s.b();
  for (Eigen::Index i = 0; i < b.rows(); ++i) {
    for (Eigen::Index k = 0; k < b.cols(); ++k) {
      if (!(b(i, k) > 0.0)) {
        std::ostringstream msg;
        msg << "objective term b[" << i << "][" << k << "] ln b[" << i << "][" << k
            << "] needs b > 0";
        throw DomainError(msg.str());
      }
    }
  }
}

}  // namespace

Economy::Economy(Eigen::VectorXd revenues, Eigen::MatrixXd unit_costs, Eigen::VectorXd capacities,
                 Eigen::VectorXd rho, std::optional<Eigen::VectorXd> network_totals)
    : revenues_(std::move(revenues)),
      unit_costs_(std::move(unit_costs)),
      capacities_(std::move(capacities)),
      rho_(std::move(rho)),
      network_totals_(std::move(network_totals)) {
  const auto n = unit_costs_.rows();
  const auto m = unit_costs_.cols();
  if (n < 1 || m < 1) throw DimensionError("economy needs at least one miner and one chain");
  if (revenues_.size() != m) throw DimensionError("revenues must have one entry per chain");
  if (capacities_.size() != n) throw DimensionError("capacities must have one entry per miner");
  if (rho_.size() != n) throw DimensionError("rho must have one entry per miner");
  require_positive(revenues_, "revenues");
  require_positive(capacities_, "capacities");
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < m; ++k) {
      if (!(unit_costs_(i, k) > 0.0) || !std::isfinite(unit_costs_(i, k))) {
        std::ostringstream msg;
        msg << "unit_costs[" << i << "][" << k << "] must be positive and finite";
        throw DomainError(msg.str());
      }
    }
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    // rho <= 0 breaks convexity of the spending program: its Bregman gap can
    // take either sign, so the update is no longer a descent method.
    if (!(rho_[i] > 0.0 && rho_[i] <= 1.0)) {
      std::ostringstream msg;
      msg << "rho[" << i << "] = " << rho_[i]
          << " outside (0, 1]; substitution parameters <= 0 are not supported";
      throw DomainError(msg.str());
    }
  }
  if (network_totals_) {
    if (network_totals_->size() != m) {
      throw DimensionError("network_totals must have one entry per chain");
    }
    require_positive(*network_totals_, "network_totals");
  }
}

Economy Economy::from_rates(const Eigen::MatrixXd& rates, Eigen::VectorXd capacities,
                            Eigen::VectorXd rho) {
  const auto m = rates.cols();
  Eigen::MatrixXd costs = rates.cwiseInverse();
  return Economy(Eigen::VectorXd::Ones(m), std::move(costs), std::move(capacities), std::move(rho),
                 Eigen::VectorXd::Ones(m));
}

Economy Economy::permuted_miners(std::span<const std::size_t> perm) const {
  if (perm.size() != miners()) throw DimensionError("permutation length != miners");
  Eigen::MatrixXd c(unit_costs_.rows(), unit_costs_.cols());
  Eigen::VectorXd cap(capacities_.size());
  Eigen::VectorXd r(rho_.size());
  for (std::size_t row = 0; row < perm.size(); ++row) {
    const auto src = static_cast<Eigen::Index>(perm[row]);
    const auto dst = static_cast<Eigen::Index>(row);
    c.row(dst) = unit_costs_.row(src);
    cap[dst] = capacities_[src];
    r[dst] = rho_[src];
  }
  return Economy(revenues_, std::move(c), std::move(cap), std::move(r), network_totals_);
}

Economy Economy::permuted_chains(std::span<const std::size_t> perm) const {
  if (perm.size() != chains()) throw DimensionError("permutation length != chains");
  Eigen::VectorXd v(revenues_.size());
  Eigen::MatrixXd c(unit_costs_.rows(), unit_costs_.cols());
  std::optional<Eigen::VectorXd> totals;
  if (network_totals_) totals = Eigen::VectorXd(network_totals_->size());
  for (std::size_t col = 0; col < perm.size(); ++col) {
    const auto src = static_cast<Eigen::Index>(perm[col]);
    const auto dst = static_cast<Eigen::Index>(col);
    v[dst] = revenues_[src];
    c.col(dst) = unit_costs_.col(src);
    if (totals) (*totals)[dst] = (*network_totals_)[src];
  }
  return Economy(std::move(v), std::move(c), capacities_, rho_, std::move(totals));
}

SpendingMatrix::SpendingMatrix(const Economy& economy, Eigen::MatrixXd b) : b_(std::move(b)) {
  check_shape(economy, b_);
  for (Eigen::Index i = 0; i < b_.rows(); ++i) {
    for (Eigen::Index k = 0; k < b_.cols(); ++k) {
      if (!(b_(i, k) >= 0.0) || !std::isfinite(b_(i, k))) {
        std::ostringstream msg;
        msg << "spending b[" << i << "][" << k << "] must be finite and >= 0";
        throw DomainError(msg.str());
      }
    }
  }
  spent_ = b_.rowwise().sum();
  chain_totals_ = b_.colwise().sum().transpose();
  unspent_ = economy.capacities() - spent_;
  for (Eigen::Index i = 0; i < b_.rows(); ++i) {
    if (unspent_[i] < -kBudgetSlack * economy.capacities()[i]) {
      std::ostringstream msg;
      msg << "miner " << i << " spends " << spent_[i] << " > capacity "
          << economy.capacities()[i];
      throw DomainError(msg.str());
    }
  }
}

SpendingMatrix SpendingMatrix::uniform_start(const Economy& economy) {
  const auto m = static_cast<double>(economy.chains());
  Eigen::MatrixXd b(economy.miners(), economy.chains());
  for (Eigen::Index i = 0; i < b.rows(); ++i) {
    b.row(i).setConstant(economy.capacities()[i] / (2.0 * m));
  }
  return SpendingMatrix(economy, std::move(b));
}

Eigen::VectorXd aggregate_totals(const Economy& economy, const SpendingMatrix& spending) {
  if (economy.mode() == AggregateMode::kExogenous) return *economy.network_totals();
  return spending.chain_totals();
}

EffectiveRates effective_rates(const Economy& economy, const Eigen::VectorXd& chain_totals) {
  if (static_cast<std::size_t>(chain_totals.size()) != economy.chains()) {
    throw DimensionError("chain totals must have one entry per chain");
  }
  for (Eigen::Index k = 0; k < chain_totals.size(); ++k) {
    if (!(chain_totals[k] > 0.0)) {
      throw DegenerateError("chain " + std::to_string(k) + " has zero aggregate total");
    }
  }
  EffectiveRates r;
  r.v.resize(economy.unit_costs().rows(), economy.unit_costs().cols());
  for (Eigen::Index i = 0; i < r.v.rows(); ++i) {
    for (Eigen::Index k = 0; k < r.v.cols(); ++k) {
      r.v(i, k) = economy.revenues()[k] / (chain_totals[k] * economy.unit_costs()(i, k));
    }
  }
  return r;
}

EffectiveRates effective_rates(const Economy& economy, const SpendingMatrix& spending) {
  return effective_rates(economy, aggregate_totals(economy, spending));
}

double quasi_ces_utility(const Economy& economy, std::size_t i, const Eigen::VectorXd& b_i,
                         const EffectiveRates& rates) {
  if (i >= economy.miners()) throw DimensionError("miner index out of range");
  if (static_cast<std::size_t>(b_i.size()) != economy.chains()) {
    throw DimensionError("spending row must have one entry per chain");
  }
  const double rho = economy.rho()[static_cast<Eigen::Index>(i)];
  double agg = 0.0;
  double spent = 0.0;
  for (Eigen::Index k = 0; k < b_i.size(); ++k) {
    if (!(b_i[k] >= 0.0)) throw DomainError("spending must be non-negative");
    if (b_i[k] > 0.0) agg += std::pow(rates.v(static_cast<Eigen::Index>(i), k) * b_i[k], rho);
    spent += b_i[k];
  }
  const double gross = agg > 0.0 ? std::pow(agg, 1.0 / rho) : 0.0;
  return gross - spent;
}

PRState pr_state(const Economy& economy, const SpendingMatrix& spending) {
  const auto rates = effective_rates(economy, spending);
  const auto& b = spending.b();
  PRState s;
  s.u_ik.resize(b.rows(), b.cols());
  s.u_i.resize(b.rows());
  s.k_tilde.resize(b.rows());
  for (Eigen::Index i = 0; i < b.rows(); ++i) {
    const double rho = economy.rho()[i];
    const double cap = economy.capacities()[i];
    const double floor = kSpendFloor * cap;
    double sum = 0.0;
    for (Eigen::Index k = 0; k < b.cols(); ++k) {
      s.u_ik(i, k) = std::pow(rates.v(i, k) * std::max(b(i, k), floor), rho);
      sum += s.u_ik(i, k);
    }
    s.u_i[i] = sum;
    // rho = 1 gives (K - w)^0 = 1, including K - w = 0.
    s.k_tilde[i] = rho == 1.0 ? cap : cap * std::pow(spending.spent()[i], rho - 1.0);
  }
  return s;
}

SpendingMatrix pr_step(const Economy& economy, const SpendingMatrix& state) {
  const auto& b = state.b();
  for (Eigen::Index i = 0; i < b.rows(); ++i) {
    for (Eigen::Index k = 0; k < b.cols(); ++k) {
      if (!(b(i, k) > 0.0)) {
        std::ostringstream msg;
        msg << "proportional response needs strictly positive spending; b[" << i << "][" << k
            << "] = " << b(i, k);
        throw PreconditionError(msg.str());
      }
    }
  }
  // Every row reads the same frozen totals and writes only itself.
  const PRState s = pr_state(economy, state);
  Eigen::MatrixXd next(b.rows(), b.cols());
  for (Eigen::Index i = 0; i < b.rows(); ++i) {
    const double cap = economy.capacities()[i];
    const double denom = std::max(s.u_i[i], s.k_tilde[i]);
    for (Eigen::Index k = 0; k < b.cols(); ++k) {
      next(i, k) = std::max(cap * s.u_ik(i, k) / denom, kSpendFloor * cap);
    }
  }
  return SpendingMatrix(economy, std::move(next));
}

KktReport kkt_residual(const Economy& economy, const SpendingMatrix& spending,
                       double unspent_tol) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  const auto rates = effective_rates(economy, spending);
  const auto& b = spending.b();
  KktReport r;
  for (Eigen::Index i = 0; i < b.rows(); ++i) {
    const double rho = economy.rho()[i];
    const double cap = economy.capacities()[i];
    const double q = spending.spent()[i];
    const double w = spending.unspent()[i];

    Eigen::VectorXd z(b.cols());
    double zmax = 0.0;
    bool blocked = false;
    for (Eigen::Index k = 0; k < b.cols(); ++k) {
      if (b(i, k) == 0.0 && rho < 1.0) {
        blocked = true;
        break;
      }
      z[k] = std::pow(rates.v(i, k), rho) * std::pow(b(i, k), rho - 1.0);
      zmax = std::max(zmax, z[k]);
    }
    if (blocked || !(q > 0.0)) {
      r.stationarity = kInf;
      r.complementarity = kInf;
      return r;
    }

    double lambda = 0.0;
    for (Eigen::Index k = 0; k < b.cols(); ++k) lambda += b(i, k) * z[k];
    lambda /= q;

    for (Eigen::Index k = 0; k < b.cols(); ++k) {
      const double rel = (z[k] - lambda) / lambda;
      const double share = b(i, k) / q;
      r.stationarity = std::max({r.stationarity, rel, share * std::abs(rel)});
    }

    const double target = rho == 1.0 ? 1.0 : std::pow(q, rho - 1.0);
    double comp = 0.0;
    if (w > unspent_tol * cap) {
      // Budget left over: spending pays exactly its marginal cost, and no
      // chain pays more.
      comp = std::max((zmax - target) / target, (q / cap) * std::abs(lambda - target) / target);
    } else {
      comp = std::max(0.0, (target - lambda) / target);
    }
    comp = std::max(comp, std::max(0.0, -w) / cap);
    r.complementarity = std::max(r.complementarity, comp);
  }
  return r;
}

double shmyrev_objective(const Economy& economy, const SpendingMatrix& spending) {
  require_interior(spending);
  const auto& b = spending.b();
  const bool endogenous = economy.mode() == AggregateMode::kEndogenous;
  double f = 0.0;
  for (Eigen::Index i = 0; i < b.rows(); ++i) {
    const double rho = economy.rho()[i];
    const double coef = (1.0 - rho) / rho;
    for (Eigen::Index k = 0; k < b.cols(); ++k) {
      const double a = valuation(economy, static_cast<std::size_t>(i), static_cast<std::size_t>(k));
      // -(1/rho) b ln[a^rho b^(rho-1)]
      f += -b(i, k) * std::log(a) + coef * b(i, k) * std::log(b(i, k));
    }
    const double q = spending.spent()[i];
    f += spending.unspent()[i] - coef * q * std::log(q);
  }
  if (endogenous) {
    const auto& p = spending.chain_totals();
    for (Eigen::Index k = 0; k < p.size(); ++k) f += p[k] * std::log(p[k]);
  } else {
    f += b.sum();
  }
  return f;
}

Eigen::MatrixXd shmyrev_gradient(const Economy& economy, const SpendingMatrix& spending) {
  require_interior(spending);
  const auto& b = spending.b();
  const bool endogenous = economy.mode() == AggregateMode::kEndogenous;
  Eigen::MatrixXd g(b.rows(), b.cols());
  for (Eigen::Index i = 0; i < b.rows(); ++i) {
    const double rho = economy.rho()[i];
    const double ln_q = std::log(spending.spent()[i]);
    for (Eigen::Index k = 0; k < b.cols(); ++k) {
      const double a = valuation(economy, static_cast<std::size_t>(i), static_cast<std::size_t>(k));
      // dF/db_ik = (1/rho)(1 - ln a^rho) + (1-rho)/rho ln b + [ln p]
      const double d_b = (1.0 - rho * std::log(a)) / rho +
                         (1.0 - rho) / rho * std::log(b(i, k)) +
                         (endogenous ? std::log(spending.chain_totals()[k]) : 0.0);
      // dF/dw_i = (1/rho)(1 - (rho-1) ln(K - w)), and dw_i/db_ik = -1.
      const double d_w = (1.0 - (rho - 1.0) * ln_q) / rho;
      g(i, k) = d_b - d_w;
    }
  }
  return g;
}

double kl_divergence(std::span<const double> b_new, std::span<const double> b_old) {
  if (b_new.size() != b_old.size()) throw DimensionError("KL arguments differ in length");
  double kl = 0.0;
  for (std::size_t j = 0; j < b_old.size(); ++j) {
    if (!(b_old[j] > 0.0)) throw DomainError("KL reference entries must be positive");
    if (!(b_new[j] >= 0.0)) throw DomainError("KL arguments must be non-negative");
    if (b_new[j] > 0.0) kl += b_new[j] * std::log(b_new[j] / b_old[j]);
    kl += b_old[j] - b_new[j];
  }
  return kl;
}

double kl_divergence(const Eigen::VectorXd& b_new, const Eigen::VectorXd& b_old) {
  return kl_divergence(std::span<const double>(b_new.data(), static_cast<std::size_t>(b_new.size())),
                       std::span<const double>(b_old.data(), static_cast<std::size_t>(b_old.size())));
}

double scaled_divergence(const Economy& economy, const SpendingMatrix& b_new,
                         const SpendingMatrix& b_old) {
  double d = 0.0;
  for (Eigen::Index i = 0; i < b_new.b().rows(); ++i) {
    const Eigen::VectorXd row_new = b_new.b().row(i).transpose();
    const Eigen::VectorXd row_old = b_old.b().row(i).transpose();
    d += kl_divergence(row_new, row_old) / economy.rho()[i];
  }
  return d;
}

double bregman_gap(const Economy& economy, const SpendingMatrix& z_new,
                   const SpendingMatrix& z_old) {
  const Eigen::MatrixXd g = shmyrev_gradient(economy, z_old);
  return shmyrev_objective(economy, z_new) - shmyrev_objective(economy, z_old) -
         (g.array() * (z_new.b() - z_old.b()).array()).sum();
}

SolveResult solve_equilibrium(const Economy& economy, const SpendingMatrix& b0,
                              const SolverOptions& options) {
  if (!(options.tol > 0.0)) throw ConfigError("solver tolerance must be positive");
  SpendingMatrix current = b0;
  EquilibriumCertificate cert;
  if (options.record_trace) {
    const auto kkt = kkt_residual(economy, current);
    cert.trace.push_back({0, shmyrev_objective(economy, current), kkt.max(), 0.0});
  }

  const Eigen::ArrayXd caps = economy.capacities().array();
  std::size_t it = 0;
  while (it < options.max_iter) {
    SpendingMatrix next = pr_step(economy, current);
    ++it;
    const Eigen::ArrayXXd diff = (next.b() - current.b()).array().abs();
    const double step = (diff.colwise() / caps).maxCoeff();
    current = std::move(next);

    const bool small_step = step < options.tol;
    if (options.record_trace || small_step) {
      const auto kkt = kkt_residual(economy, current);
      if (options.record_trace) {
        cert.trace.push_back({it, shmyrev_objective(economy, current), kkt.max(), step});
      }
      if (small_step && kkt.max() < 10.0 * options.tol) {
        cert.converged = true;
        break;
      }
    }
  }

  const auto kkt = kkt_residual(economy, current);
  cert.kkt_residual = kkt.stationarity;
  cert.complementarity_residual = kkt.complementarity;
  cert.objective_value = shmyrev_objective(economy, current);
  cert.iterations = it;
  return SolveResult{std::move(current), std::move(cert)};
}

SolveResult solve_equilibrium(const Economy& economy, const SolverOptions& options) {
  return solve_equilibrium(economy, SpendingMatrix::uniform_start(economy), options);
}

RateCheck md_rate_check(const Economy& economy, const SpendingMatrix& b0, std::size_t T) {
  if (T == 0) throw ConfigError("rate check needs T >= 1");
  SpendingMatrix bt = b0;
  for (std::size_t t = 0; t < T; ++t) bt = pr_step(economy, bt);

  SolverOptions opts;
  opts.tol = 1e-12;
  opts.max_iter = std::max<std::size_t>(10 * T, opts.max_iter);
  opts.record_trace = false;
  const auto star = solve_equilibrium(economy, b0, opts);

  RateCheck r;
  r.f_t = shmyrev_objective(economy, bt);
  r.f_star = shmyrev_objective(economy, star.spending);
  r.gap_t = r.f_t - r.f_star;
  r.bound = scaled_divergence(economy, star.spending, b0) / static_cast<double>(T);
  r.satisfied = r.gap_t <= r.bound * (1.0 + 1e-6) + 1e-12 * (1.0 + std::abs(r.f_star));
  return r;
}

}  // namespace minecon
