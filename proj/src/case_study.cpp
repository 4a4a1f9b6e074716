#include "minecon/case_study.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <thread>
#include <unordered_map>

#include "minecon/errors.hpp"

namespace minecon {
namespace {

constexpr double kSecondsPerDay = 86400.0;

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

std::vector<std::string> split(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(',', start);
    out.emplace_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

// Reads a delimited file: header first, then rows. Blank lines are skipped.
struct Table {
  std::vector<std::string> header;
  std::vector<std::pair<std::size_t, std::vector<std::string>>> rows;  // (line, fields)
};

Table read_table(std::istream& in) {
  Table t;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty()) continue;
    auto fields = split(line);
    if (t.header.empty()) {
      t.header = std::move(fields);
    } else {
      if (fields.size() != t.header.size()) {
        std::ostringstream msg;
        msg << "expected " << t.header.size() << " fields, got " << fields.size();
        throw ParseError(msg.str(), n);
      }
      t.rows.emplace_back(n, std::move(fields));
    }
  }
  if (t.header.empty()) throw ParseError("empty input, header missing", 0);
  return t;
}

void expect_header(const Table& t, const std::vector<std::string>& want) {
  if (t.header != want) {
    std::string joined;
    for (const auto& w : want) joined += (joined.empty() ? "" : ",") + w;
    throw ParseError("header must be `" + joined + "`", 1);
  }
}

double parse_number(const std::string& s, std::size_t line, const char* field) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (!s.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (s.empty() || ec != std::errc() || ptr != last || !std::isfinite(v)) {
    throw ParseError(std::string("field ") + field + ": `" + s + "` is not a number", line);
  }
  return v;
}

Date parse_date_field(const std::string& s, std::size_t line, const char* field) {
  auto d = parse_date(s);
  if (!d) throw ParseError(std::string("field ") + field + ": `" + s + "` is not a YYYY-MM-DD date", line);
  return *d;
}

std::ifstream open_or_throw(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open " + path);
  return f;
}

std::string shortest(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace

std::optional<Date> parse_date(std::string_view text) {
  text = trim(text);
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
  int y = 0;
  unsigned m = 0;
  unsigned d = 0;
  auto num = [&](std::size_t pos, std::size_t len, auto& out) {
    const auto r = std::from_chars(text.data() + pos, text.data() + pos + len, out);
    return r.ec == std::errc() && r.ptr == text.data() + pos + len;
  };
  if (!num(0, 4, y) || !num(5, 2, m) || !num(8, 2, d)) return std::nullopt;
  const Date out{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
  if (!out.ok()) return std::nullopt;
  return out;
}

std::string format_date(Date d) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(d.year()),
                static_cast<unsigned>(d.month()), static_cast<unsigned>(d.day()));
  return buf;
}

double unit_cost(const RigSpec& rig, double usd_per_kwh) {
  if (!(rig.price_usd > 0.0) || !(rig.hashrate_ths > 0.0) || !(rig.power_w >= 0.0) ||
      !(rig.lifespan_years > 0.0)) {
    throw DomainError("rig " + rig.model + " needs positive price, hashrate and lifespan");
  }
  if (!(usd_per_kwh >= 0.0)) throw DomainError("energy price must be >= 0");
  return rig.price_usd / (365.0 * rig.lifespan_years * rig.hashrate_ths) +
         (rig.power_w / 1000.0) * usd_per_kwh * 24.0 / rig.hashrate_ths;
}

EnergySchedule::EnergySchedule(std::vector<EnergyInterval> intervals)
    : intervals_(std::move(intervals)) {
  std::sort(intervals_.begin(), intervals_.end(),
            [](const auto& a, const auto& b) { return a.start < b.start; });
  for (std::size_t i = 0; i < intervals_.size(); ++i) {
    const auto& iv = intervals_[i];
    if (!(iv.end >= iv.start)) throw ValidationError("energy interval ends before it starts", 0);
    if (!(iv.usd_per_kwh >= 0.0)) throw ValidationError("energy price must be >= 0", 0);
    if (i > 0 && !(iv.start > intervals_[i - 1].end)) {
      throw ValidationError("energy intervals overlap at " + format_date(iv.start), 0);
    }
  }
}

std::optional<double> EnergySchedule::price_on(Date d) const {
  for (const auto& iv : intervals_) {
    if (d >= iv.start && d <= iv.end) return iv.usd_per_kwh;
  }
  return std::nullopt;
}

MarketSeries::MarketSeries(std::vector<Observation> observations) : obs_(std::move(observations)) {
  std::unordered_map<std::string, std::size_t> order;
  std::unordered_map<std::string, Date> last;
  for (const auto& o : obs_) {
    if (!(o.hashrate_ths > 0.0)) throw ValidationError("hashrate must be positive for " + o.coin, 0);
    if (!(o.revenue_usd >= 0.0)) throw ValidationError("revenue must be >= 0 for " + o.coin, 0);
    if (order.emplace(o.coin, coins_.size()).second) coins_.push_back(o.coin);
    auto it = last.find(o.coin);
    if (it != last.end() && !(o.date > it->second)) {
      throw ValidationError("dates for " + o.coin + " not strictly increasing at " +
                                format_date(o.date),
                            0);
    }
    last[o.coin] = o.date;
  }
  std::stable_sort(obs_.begin(), obs_.end(), [&](const auto& a, const auto& b) {
    if (a.date != b.date) return a.date < b.date;
    return order.at(a.coin) < order.at(b.coin);
  });
}

std::vector<Date> MarketSeries::dates() const {
  std::vector<Date> d;
  for (const auto& o : obs_) {
    if (d.empty() || d.back() != o.date) d.push_back(o.date);
  }
  return d;
}

const Observation* MarketSeries::find(Date d, std::string_view coin) const {
  auto it = std::lower_bound(obs_.begin(), obs_.end(), d,
                             [](const Observation& o, Date v) { return o.date < v; });
  for (; it != obs_.end() && it->date == d; ++it) {
    if (it->coin == coin) return &*it;
  }
  return nullptr;
}

MarketSeries ingest_market_csv(std::istream& in) {
  const Table t = read_table(in);
  double hash_scale = 1.0;
  if (t.header == std::vector<std::string>{"date", "coin", "hashrate_thd", "revenue_usd"}) {
    hash_scale = 1.0 / kSecondsPerDay;
  } else {
    expect_header(t, {"date", "coin", "hashrate_ths", "revenue_usd"});
  }
  std::vector<Observation> obs;
  std::unordered_map<std::string, Date> last;
  for (const auto& [line, f] : t.rows) {
    Observation o;
    o.date = parse_date_field(f[0], line, "date");
    o.coin = f[1];
    if (o.coin.empty()) throw ParseError("field coin is empty", line);
    o.hashrate_ths = parse_number(f[2], line, "hashrate") * hash_scale;
    o.revenue_usd = parse_number(f[3], line, "revenue_usd");
    if (!(o.hashrate_ths > 0.0)) throw ValidationError("hashrate must be positive", line);
    if (!(o.revenue_usd >= 0.0)) throw ValidationError("revenue must be >= 0", line);
    auto it = last.find(o.coin);
    if (it != last.end()) {
      if (o.date == it->second) {
        throw ValidationError("duplicate date " + f[0] + " for " + o.coin, line);
      }
      if (o.date < it->second) {
        throw ValidationError("date " + f[0] + " for " + o.coin + " goes backwards", line);
      }
    }
    last[o.coin] = o.date;
    obs.push_back(std::move(o));
  }
  return MarketSeries(std::move(obs));
}

MarketSeries ingest_market_csv(const std::string& path) {
  auto f = open_or_throw(path);
  return ingest_market_csv(f);
}

std::vector<RigSpec> load_rigs_csv(std::istream& in) {
  const Table t = read_table(in);
  expect_header(t, {"coin", "year", "model", "price_usd", "hashrate_ths", "power_w",
                    "lifespan_years"});
  std::vector<RigSpec> rigs;
  for (const auto& [line, f] : t.rows) {
    RigSpec r;
    r.coin = f[0];
    const double year = parse_number(f[1], line, "year");
    if (year != std::floor(year)) throw ParseError("field year must be an integer", line);
    r.year = static_cast<int>(year);
    r.model = f[2];
    r.price_usd = parse_number(f[3], line, "price_usd");
    r.hashrate_ths = parse_number(f[4], line, "hashrate_ths");
    r.power_w = parse_number(f[5], line, "power_w");
    r.lifespan_years = parse_number(f[6], line, "lifespan_years");
    if (!(r.price_usd > 0.0 && r.hashrate_ths > 0.0 && r.power_w > 0.0 && r.lifespan_years > 0.0)) {
      throw ValidationError("price, hashrate, power and lifespan must be positive", line);
    }
    for (const auto& other : rigs) {
      if (other.coin == r.coin && other.year == r.year) {
        throw ValidationError("second rig for " + r.coin + " in " + f[1], line);
      }
    }
    rigs.push_back(std::move(r));
  }
  return rigs;
}

std::vector<RigSpec> load_rigs_csv(const std::string& path) {
  auto f = open_or_throw(path);
  return load_rigs_csv(f);
}

EnergySchedule load_energy_csv(std::istream& in) {
  const Table t = read_table(in);
  expect_header(t, {"start_date", "end_date", "usd_per_kwh"});
  std::vector<EnergyInterval> iv;
  for (const auto& [line, f] : t.rows) {
    EnergyInterval e;
    e.start = parse_date_field(f[0], line, "start_date");
    e.end = parse_date_field(f[1], line, "end_date");
    e.usd_per_kwh = parse_number(f[2], line, "usd_per_kwh");
    if (!(e.end >= e.start)) throw ValidationError("end_date before start_date", line);
    if (!(e.usd_per_kwh >= 0.0)) throw ValidationError("usd_per_kwh must be >= 0", line);
    iv.push_back(e);
  }
  return EnergySchedule(std::move(iv));
}

EnergySchedule load_energy_csv(const std::string& path) {
  auto f = open_or_throw(path);
  return load_energy_csv(f);
}

const RigSpec& select_rig(const std::vector<RigSpec>& rigs, std::string_view coin, int year) {
  for (const auto& r : rigs) {
    if (r.coin == coin && r.year == year) return r;
  }
  throw ConfigError("no rig for " + std::string(coin) + " in " + std::to_string(year));
}

Profitability profitability(const std::vector<double>& revenues,
                            const std::vector<double>& spending) {
  if (revenues.size() != spending.size()) throw DimensionError("revenues and spending differ in length");
  if (revenues.empty()) throw DimensionError("no coins");
  Profitability p;
  p.pfr.resize(revenues.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < revenues.size(); ++k) {
    if (!(spending[k] > 0.0)) {
      throw DegenerateError("coin " + std::to_string(k) + " has zero network spending");
    }
    if (!(revenues[k] >= 0.0)) throw DomainError("revenue must be >= 0");
    p.pfr[k] = revenues[k] / spending[k];
    sum += p.pfr[k];
  }
  if (!(sum > 0.0)) throw DegenerateError("every coin has zero revenue");
  p.ppr.resize(revenues.size());
  for (std::size_t k = 0; k < revenues.size(); ++k) p.ppr[k] = p.pfr[k] / sum;
  return p;
}

CaseStudyResult daily_equilibrium(const MarketSeries& series, const std::vector<RigSpec>& rigs,
                                  const EnergySchedule& schedule, const MinerProfile& miner,
                                  const CaseStudyOptions& options) {
  if (!(miner.capacity > 0.0)) throw ConfigError("capacity must be positive");
  if (!(miner.rho > 0.0 && miner.rho <= 1.0)) throw ConfigError("rho must lie in (0, 1]");
  if (!(miner.cost_factor > 0.0)) throw ConfigError("cost factor must be positive");

  const auto& coins = series.coins();
  const std::size_t m = coins.size();
  CaseStudyResult result;

  struct Day {
    Date date;
    std::vector<double> cbar, hashrate, revenue;
  };
  std::vector<Day> days;
  for (const Date d : series.dates()) {
    Day day{d, {}, {}, {}};
    bool complete = true;
    for (const auto& coin : coins) {
      const Observation* o = series.find(d, coin);
      if (!o) {
        complete = false;
        break;
      }
      double c = 0.0;
      if (auto it = options.average_cost_override.find(coin);
          it != options.average_cost_override.end()) {
        c = it->second;
      } else {
        const auto price = schedule.price_on(d);
        if (!price) throw ConfigError("no energy price for " + format_date(d));
        c = unit_cost(select_rig(rigs, coin, static_cast<int>(d.year())), *price);
      }
      day.cbar.push_back(c);
      day.hashrate.push_back(o->hashrate_ths);
      day.revenue.push_back(o->revenue_usd);
    }
    if (complete) {
      days.push_back(std::move(day));
    } else {
      result.gaps.push_back(d);
    }
  }

  result.reports.resize(days.size());
  std::vector<std::string> day_warning(days.size());
  std::vector<std::optional<Eigen::MatrixXd>> solutions(days.size());

  auto solve_day = [&](std::size_t idx, const Eigen::MatrixXd* warm) {
    const Day& day = days[idx];
    std::vector<double> spending(m);
    for (std::size_t k = 0; k < m; ++k) spending[k] = day.cbar[k] * day.hashrate[k];
    const Profitability prof = profitability(day.revenue, spending);

    DailyReport rep;
    rep.date = day.date;
    rep.coins.resize(m);
    const double min_spend = *std::min_element(spending.begin(), spending.end());
    if (miner.capacity > options.large_market_fraction * min_spend) {
      std::ostringstream msg;
      msg << format_date(day.date) << ": capacity " << miner.capacity << " exceeds "
          << options.large_market_fraction * 100.0 << "% of the smallest network spending "
          << min_spend;
      day_warning[idx] = msg.str();
    }

    // Coins with no revenue get nothing and stay out of the economy.
    std::vector<std::size_t> live;
    for (std::size_t k = 0; k < m; ++k) {
      if (day.revenue[k] > 0.0) live.push_back(k);
    }
    const auto ml = static_cast<Eigen::Index>(live.size());
    Eigen::VectorXd v(ml), c(ml), x(ml);
    for (Eigen::Index j = 0; j < ml; ++j) {
      const std::size_t k = live[static_cast<std::size_t>(j)];
      v[j] = day.revenue[k];
      c[j] = miner.cost_factor * day.cbar[k];
      x[j] = day.hashrate[k];
    }
    const Economy econ(v, c.transpose(), Eigen::VectorXd::Constant(1, miner.capacity),
                       Eigen::VectorXd::Constant(1, miner.rho), x);
    SpendingMatrix b0 = SpendingMatrix::uniform_start(econ);
    if (warm && warm->cols() == ml) b0 = SpendingMatrix(econ, *warm);
    const auto sol = solve_equilibrium(econ, b0, options.solver);

    for (std::size_t k = 0; k < m; ++k) {
      rep.coins[k] = CoinReport{coins[k], day.cbar[k], prof.pfr[k], prof.ppr[k], 0.0};
    }
    for (Eigen::Index j = 0; j < ml; ++j) {
      rep.coins[live[static_cast<std::size_t>(j)]].share =
          sol.spending.b()(0, j) / miner.capacity;
    }
    rep.converged = sol.certificate.converged;
    rep.kkt_residual =
        std::max(sol.certificate.kkt_residual, sol.certificate.complementarity_residual);
    rep.iterations = sol.certificate.iterations;
    result.reports[idx] = std::move(rep);
    solutions[idx] = sol.spending.b();
  };

  if (options.warm_start) {
    for (std::size_t i = 0; i < days.size(); ++i) {
      const Eigen::MatrixXd* warm = i > 0 && solutions[i - 1] ? &*solutions[i - 1] : nullptr;
      solve_day(i, warm);
    }
  } else {
    unsigned workers = options.threads ? options.threads : std::thread::hardware_concurrency();
    workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(days.size())));
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(workers);
    auto work = [&](unsigned w) {
      try {
        for (std::size_t i = next++; i < days.size(); i = next++) solve_day(i, nullptr);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    };
    if (workers <= 1) {
      work(0);
    } else {
      std::vector<std::thread> pool;
      for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work, w);
      for (auto& t : pool) t.join();
    }
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  for (auto& w : day_warning) {
    if (!w.empty()) result.warnings.push_back(std::move(w));
  }
  return result;
}

void write_report_csv(std::ostream& out, const std::vector<DailyReport>& reports) {
  out << "date,coin,unit_cost,pfr,ppr,share\n";
  for (const auto& r : reports) {
    const std::string date = format_date(r.date);
    for (const auto& c : r.coins) {
      out << date << ',' << c.coin << ',' << shortest(c.unit_cost) << ',' << shortest(c.pfr) << ','
          << shortest(c.ppr) << ',' << shortest(c.share) << '\n';
    }
  }
}

}  // namespace minecon
