#pragma once

// Empirical pipeline: rig/energy cost model, market-data ingestion,
// per-coin profitability, and daily equilibrium spending of one
// representative miner facing the observed networks.

#include <chrono>
#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "minecon/market_economy.hpp"

namespace minecon {

using Date = std::chrono::year_month_day;

// Strict YYYY-MM-DD.
std::optional<Date> parse_date(std::string_view text);
std::string format_date(Date d);

struct RigSpec {
  std::string coin;
  int year = 0;
  std::string model;
  double price_usd = 0.0;
  double hashrate_ths = 0.0;
  double power_w = 0.0;
  double lifespan_years = 2.0;
};

// USD per TH/s sustained for one day: amortised price plus energy.
double unit_cost(const RigSpec& rig, double usd_per_kwh);

struct EnergyInterval {
  Date start;
  Date end;  // inclusive
  double usd_per_kwh = 0.0;
};

class EnergySchedule {
 public:
  // Intervals are sorted by start and must not overlap.
  explicit EnergySchedule(std::vector<EnergyInterval> intervals);

  std::optional<double> price_on(Date d) const;
  const std::vector<EnergyInterval>& intervals() const { return intervals_; }

 private:
  std::vector<EnergyInterval> intervals_;
};

struct Observation {
  Date date;
  std::string coin;
  double hashrate_ths = 0.0;  // sustained over the day
  double revenue_usd = 0.0;   // per day
};

class MarketSeries {
 public:
  MarketSeries() = default;
  // Validates per-coin strictly increasing dates, hashrate > 0 and
  // revenue >= 0. Observations are kept sorted by (date, coin order).
  explicit MarketSeries(std::vector<Observation> observations);

  const std::vector<Observation>& observations() const { return obs_; }
  // Coins in order of first appearance.
  const std::vector<std::string>& coins() const { return coins_; }
  // Every date with at least one observation, ascending.
  std::vector<Date> dates() const;
  const Observation* find(Date d, std::string_view coin) const;
  std::size_t size() const { return obs_.size(); }

 private:
  std::vector<Observation> obs_;
  std::vector<std::string> coins_;
};

// Header `date,coin,hashrate_ths,revenue_usd`; a `hashrate_thd` column (TH
// per day) is accepted instead and divided by 86400. Errors carry the
// 1-based input line.
MarketSeries ingest_market_csv(std::istream& in);
MarketSeries ingest_market_csv(const std::string& path);

// Header `coin,year,model,price_usd,hashrate_ths,power_w,lifespan_years`.
std::vector<RigSpec> load_rigs_csv(std::istream& in);
std::vector<RigSpec> load_rigs_csv(const std::string& path);

// Header `start_date,end_date,usd_per_kwh`.
EnergySchedule load_energy_csv(std::istream& in);
EnergySchedule load_energy_csv(const std::string& path);

// Rig for `coin` whose year equals the given year.
const RigSpec& select_rig(const std::vector<RigSpec>& rigs, std::string_view coin, int year);

struct Profitability {
  std::vector<double> pfr;  // v_k / b_k
  std::vector<double> ppr;  // pfr_k / sum_j pfr_j
};

// revenues v_k and network spending b_k = cbar_k X_k, both per coin.
Profitability profitability(const std::vector<double>& revenues,
                            const std::vector<double>& spending);

struct MinerProfile {
  double capacity = 1.0;
  double rho = 0.5;
  double cost_factor = 1.0;  // c_ik = cost_factor * cbar_k
};

struct CaseStudyOptions {
  // Network average cost per coin, replacing the rig/energy model.
  std::map<std::string, double> average_cost_override;
  // Start each day from the previous day's solution; forces sequential days.
  bool warm_start = false;
  SolverOptions solver{1e-10, 100000, false};
  unsigned threads = 0;
  double large_market_fraction = 0.01;
};

struct CoinReport {
  std::string coin;
  double unit_cost = 0.0;
  double pfr = 0.0;
  double ppr = 0.0;
  double share = 0.0;  // b_k / K
};

struct DailyReport {
  Date date;
  std::vector<CoinReport> coins;
  bool converged = false;
  double kkt_residual = 0.0;
  std::size_t iterations = 0;
};

struct CaseStudyResult {
  std::vector<DailyReport> reports;  // ascending dates
  std::vector<std::string> warnings;
  std::vector<Date> gaps;            // dates missing some coin
};

CaseStudyResult daily_equilibrium(const MarketSeries& series, const std::vector<RigSpec>& rigs,
                                  const EnergySchedule& schedule, const MinerProfile& miner,
                                  const CaseStudyOptions& options = {});

// `date,coin,unit_cost,pfr,ppr,share`
void write_report_csv(std::ostream& out, const std::vector<DailyReport>& reports);

}  // namespace minecon
