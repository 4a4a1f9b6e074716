#include "minecon/cli_app.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <ostream>
#include <random>
#include <sstream>

#include "minecon/case_study.hpp"
#include "minecon/dynamics_lab.hpp"
#include "minecon/errors.hpp"
#include "minecon/market_economy.hpp"
#include "minecon/strategic_game.hpp"

#ifndef MINECON_DATA_DIR
#define MINECON_DATA_DIR "data"
#endif

namespace minecon::cli {
namespace {

using json = nlohmann::json;

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<json>> rows;
};

std::string cell(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_float()) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v.get<double>());
    return std::string(buf, r.ptr);
  }
  return v.dump();
}

void render(const Table& t, const std::string& format, std::ostream& os) {
  if (format == "jsonl") {
    for (const auto& row : t.rows) {
      json rec = json::object();
      for (std::size_t c = 0; c < t.columns.size(); ++c) {
        const auto& v = row[c];
        // JSON has no infinity
        if (v.is_number_float() && !std::isfinite(v.get<double>())) {
          rec[t.columns[c]] = nullptr;
        } else {
          rec[t.columns[c]] = v;
        }
      }
      os << rec.dump() << '\n';
    }
    return;
  }
  for (std::size_t c = 0; c < t.columns.size(); ++c) os << (c ? "," : "") << t.columns[c];
  os << '\n';
  for (const auto& row : t.rows) {
    for (std::size_t c = 0; c < row.size(); ++c) os << (c ? "," : "") << cell(row[c]);
    os << '\n';
  }
}

void emit(const Table& t, const std::string& format, const std::string& path, std::ostream& out) {
  if (path.empty() || path == "-") {
    render(t, format, out);
    return;
  }
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot write " + path);
  render(t, format, f);
}

json load_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open " + path);
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

template <typename T>
T field(const json& j, const char* key, const std::string& path) {
  if (!j.contains(key)) throw ConfigError(path + ": missing key `" + key + "`");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(path + ": key `" + std::string(key) + "` has the wrong type");
  }
}

MiningGame load_game(const std::string& path) {
  const json j = load_json(path);
  const double reward = j.contains("reward") ? field<double>(j, "reward", path) : 1.0;
  return MiningGame(field<std::vector<double>>(j, "costs", path), reward);
}

Eigen::VectorXd to_vec(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Economy load_economy(const std::string& path) {
  const json j = load_json(path);
  const auto rows = field<std::vector<std::vector<double>>>(j, "unit_costs", path);
  if (rows.empty()) throw DimensionError(path + ": unit_costs is empty");
  Eigen::MatrixXd c(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows[0].size()) throw DimensionError(path + ": ragged unit_costs");
    for (std::size_t k = 0; k < rows[i].size(); ++k) {
      c(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
    }
  }
  std::optional<Eigen::VectorXd> totals;
  if (j.contains("network_totals")) {
    totals = to_vec(field<std::vector<double>>(j, "network_totals", path));
  }
  return Economy(to_vec(field<std::vector<double>>(j, "revenues", path)), c,
                 to_vec(field<std::vector<double>>(j, "capacities", path)),
                 to_vec(field<std::vector<double>>(j, "rho", path)), totals);
}

Economy random_economy(std::mt19937_64& rng, std::size_t n, std::size_t m) {
  std::uniform_real_distribution<double> u(0.5, 2.0);
  std::uniform_real_distribution<double> r(0.1, 1.0);
  const auto nn = static_cast<Eigen::Index>(n);
  const auto mm = static_cast<Eigen::Index>(m);
  Eigen::VectorXd v(mm), K(nn), rho(nn);
  Eigen::MatrixXd c(nn, mm);
  for (Eigen::Index k = 0; k < mm; ++k) v[k] = u(rng);
  for (Eigen::Index i = 0; i < nn; ++i) {
    K[i] = u(rng);
    rho[i] = r(rng);
    for (Eigen::Index k = 0; k < mm; ++k) c(i, k) = u(rng);
  }
  return Economy(v, c, K, rho);
}

SpendingMatrix random_interior(const Economy& e, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.01, 1.0);
  Eigen::MatrixXd b(e.unit_costs().rows(), e.unit_costs().cols());
  for (Eigen::Index i = 0; i < b.rows(); ++i) {
    for (Eigen::Index k = 0; k < b.cols(); ++k) b(i, k) = u(rng);
    // leave a random part of the budget unspent
    b.row(i) *= u(rng) * e.capacities()[i] / b.row(i).sum();
  }
  return SpendingMatrix(e, b);
}

std::string yes_no(bool b) { return b ? "yes" : "no"; }

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Equilibria, griefing, dynamics and case studies for mining economies", "minecon"};
  app.require_subcommand(1);

  std::string config;
  std::string output;
  std::string format = "csv";
  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* opt = sub->add_option("--config,-c", config, "JSON definition file");
    opt->check(CLI::ExistingFile);
    if (needs_config) opt->required();
    sub->add_option("--output,-o", output, "output file (default: standard output)");
    sub->add_option("--format", format, "csv or jsonl")
        ->check(CLI::IsMember({"csv", "jsonl"}));
  };

  // nash
  bool auto_drop = false;
  auto* nash = app.add_subcommand("nash", "Nash allocation of a mining game");
  add_common(nash, true);
  nash->add_flag("--auto-drop", auto_drop, "drop miners that violate participation");

  // grief
  std::size_t deviator = 0;
  std::size_t points = 50;
  double min_factor = 1e-4;
  double max_factor = 4.0;
  auto* grief = app.add_subcommand("grief", "griefing factors of over-mining at the Nash point");
  add_common(grief, true);
  grief->add_option("--deviator", deviator, "deviating miner");
  grief->add_option("--points", points, "grid points")->check(CLI::Range(2, 1000000));
  grief->add_option("--min-factor", min_factor, "smallest deviation / X*")
      ->check(CLI::PositiveNumber);
  grief->add_option("--max-factor", max_factor, "largest deviation / X*")
      ->check(CLI::PositiveNumber);

  // esa
  std::size_t esa_points = 200;
  auto* esa = app.add_subcommand("esa", "non-griefable allocation and griefability checks");
  add_common(esa, true);
  esa->add_option("--points", esa_points, "deviation grid points per miner")
      ->check(CLI::Range(1, 1000000));

  // pr-solve
  double tol = 1e-10;
  std::size_t max_iter = 100000;
  std::string trace_path;
  auto* prs = app.add_subcommand("pr-solve", "market equilibrium by proportional response");
  add_common(prs, true);
  prs->add_option("--tol", tol, "stopping tolerance")->check(CLI::PositiveNumber);
  prs->add_option("--max-iter", max_iter, "iteration cap")->check(CLI::Range(1ul, 100000000ul));
  prs->add_option("--trace", trace_path, "write iter,objective,kkt_residual,max_step here");

  // dynamics
  std::string rule = "ga";
  double theta = 0.05;
  std::size_t steps = 450;
  double floor = 0.0;
  std::vector<double> init;
  auto* dyn = app.add_subcommand("dynamics", "trace of gradient-ascent or best-response play");
  add_common(dyn, true);
  dyn->add_option("--rule", rule, "ga or br")->check(CLI::IsMember({"ga", "br"}));
  dyn->add_option("--theta", theta, "learning rate (ga)")->check(CLI::PositiveNumber);
  dyn->add_option("--steps", steps, "iterations")->check(CLI::Range(0ul, 100000000ul));
  dyn->add_option("--floor", floor, "lower clamp")->check(CLI::NonNegativeNumber);
  dyn->add_option("--init", init, "initial allocation (default 0.1/c_i)");

  // bifurcate
  std::string axis = "theta";
  double grid_min = 0.01;
  double grid_max = 2.0;
  std::size_t grid_points = 100;
  std::string grid_scale = "linear";
  std::size_t samples = 400;
  std::size_t burn_in = 50;
  unsigned threads = 0;
  std::string summary_path;
  auto* bif = app.add_subcommand("bifurcate", "bifurcation scan of the learning dynamics");
  add_common(bif, true);
  bif->add_option("--rule", rule, "ga or br")->check(CLI::IsMember({"ga", "br"}));
  bif->add_option("--axis", axis, "theta or asymmetry")
      ->check(CLI::IsMember({"theta", "asymmetry"}));
  bif->add_option("--theta", theta, "learning rate when scanning asymmetry")
      ->check(CLI::PositiveNumber);
  bif->add_option("--grid-min", grid_min, "first grid value")->check(CLI::PositiveNumber);
  bif->add_option("--grid-max", grid_max, "last grid value")->check(CLI::PositiveNumber);
  bif->add_option("--grid-points", grid_points, "grid size")->check(CLI::Range(2ul, 1000000ul));
  bif->add_option("--grid-scale", grid_scale, "linear or log")
      ->check(CLI::IsMember({"linear", "log"}));
  bif->add_option("--samples", samples, "samples per grid value")->check(CLI::Range(1ul, 10000000ul));
  bif->add_option("--burn-in", burn_in, "discarded iterations")->check(CLI::Range(0ul, 100000000ul));
  bif->add_option("--floor", floor, "lower clamp")->check(CLI::NonNegativeNumber);
  bif->add_option("--threads", threads, "worker threads (0: all cores)");
  bif->add_option("--summary", summary_path, "write param,diameter,distinct,degenerate here");

  // case-study
  std::string market = std::string(MINECON_DATA_DIR) + "/case_study/market_sample.csv";
  std::string rigs_path = std::string(MINECON_DATA_DIR) + "/case_study/rigs.csv";
  std::string energy_path = std::string(MINECON_DATA_DIR) + "/case_study/energy.csv";
  MinerProfile profile;
  bool warm = false;
  auto* cs = app.add_subcommand("case-study", "daily equilibrium spending of one miner");
  add_common(cs, false);
  cs->add_option("--market", market, "market data CSV")->check(CLI::ExistingFile);
  cs->add_option("--rigs", rigs_path, "rig table CSV")->check(CLI::ExistingFile);
  cs->add_option("--energy", energy_path, "energy price CSV")->check(CLI::ExistingFile);
  cs->add_option("--rho", profile.rho, "substitution parameter")
      ->check(CLI::Range(0.0, 1.0))
      ->check(CLI::PositiveNumber);
  cs->add_option("--capacity", profile.capacity, "capacity K")->check(CLI::PositiveNumber);
  cs->add_option("--cost-factor", profile.cost_factor, "miner cost / network average cost")
      ->check(CLI::PositiveNumber);
  cs->add_option("--tol", tol, "solver tolerance")->check(CLI::PositiveNumber);
  cs->add_option("--max-iter", max_iter, "solver iteration cap")->check(CLI::Range(1ul, 100000000ul));
  cs->add_flag("--warm-start", warm, "start each day from the previous solution");
  cs->add_option("--threads", threads, "worker threads (0: all cores)");

  // verify
  unsigned long long seed = kDefaultSeed;
  std::size_t miners = 3;
  std::size_t chains = 3;
  std::size_t pairs = 200;
  auto* ver = app.add_subcommand("verify", "oracle checks on one economy");
  add_common(ver, false);
  ver->add_option("--seed", seed, "seed for the random economy and test points");
  ver->add_option("--miners", miners, "miners in the random economy")->check(CLI::Range(1ul, 1000ul));
  ver->add_option("--chains", chains, "chains in the random economy")->check(CLI::Range(1ul, 1000ul));
  ver->add_option("--pairs", pairs, "random pairs for the divergence checks")
      ->check(CLI::Range(1ul, 10000000ul));

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return kExitInvalid;
  }

  try {
    if (nash->parsed()) {
      const MiningGame game = load_game(config);
      const auto x = nash_allocation(game, auto_drop ? Participation::kAutoDrop
                                                     : Participation::kStrict);
      Table t{{"miner", "cost", "allocation", "utility"}, {}};
      for (std::size_t i = 0; i < game.size(); ++i) {
        t.rows.push_back({i, game.cost(i), x[i], utility(game, x, i)});
      }
      emit(t, format, output, out);
      err << "c* = " << c_star(game) << ", X* = " << x.total() << "\n";
      return kExitOk;
    }

    if (grief->parsed()) {
      const MiningGame game = load_game(config);
      if (deviator >= game.size()) throw ConfigError("--deviator out of range");
      if (!(max_factor > min_factor)) throw ConfigError("--max-factor must exceed --min-factor");
      const auto x = nash_allocation(game);
      const auto grid = log_grid(min_factor * x.total(), max_factor * x.total(), points);
      Table t{{"deviator", "delta", "own_loss", "network_loss", "gf_total", "gf_closed",
               "gf_individual_max"},
              {}};
      for (double d : grid) {
        const auto r = griefing_factor_direct(game, x, deviator, x[deviator] + d);
        double net = 0.0;
        double gmax = 0.0;
        for (std::size_t j = 0; j < game.size(); ++j) {
          net += r.victim_losses[j];
          if (j != deviator) gmax = std::max(gmax, r.gf_individual[j]);
        }
        t.rows.push_back({deviator, d, r.own_loss, net, r.gf_total,
                          griefing_factor_closed(game, d), gmax});
      }
      emit(t, format, output, out);
      return kExitOk;
    }

    if (esa->parsed()) {
      const MiningGame game = load_game(config);
      const auto x = nash_allocation(game);
      const auto y = non_griefable_allocation(game);
      Table t{{"miner", "cost", "nash", "nongriefable"}, {}};
      for (std::size_t i = 0; i < game.size(); ++i) t.rows.push_back({i, game.cost(i), x[i], y[i]});
      emit(t, format, output, out);
      DeviationGrid grid;
      grid.points_per_miner = esa_points;
      const auto gx = is_individually_griefable(game, x, grid);
      const auto gy = is_individually_griefable(game, y, grid);
      err << "nash griefable: " << yes_no(gx.griefable);
      if (gx.witness) {
        err << " (miner " << gx.witness->deviator << " -> " << gx.witness->deviation
            << " hurts miner " << gx.witness->victim << ", GF " << gx.witness->gf_individual
            << ")";
      }
      err << "\nnon-griefable griefable: " << yes_no(gy.griefable)
          << ", sup GF on grid = " << gy.max_gf_individual << "\n";
      const auto e = expenditure_report(game);
      err << "expenditure nash = " << e.e_nash << ", non-griefable = " << e.e_nongriefable
          << "\n";
      return kExitOk;
    }

    if (prs->parsed()) {
      const Economy econ = load_economy(config);
      SolverOptions opts;
      opts.tol = tol;
      opts.max_iter = max_iter;
      opts.record_trace = !trace_path.empty();
      const auto sol = solve_equilibrium(econ, opts);
      Table t{{"miner", "chain", "spending", "unspent"}, {}};
      for (std::size_t i = 0; i < econ.miners(); ++i) {
        for (std::size_t k = 0; k < econ.chains(); ++k) {
          t.rows.push_back({i, k, sol.spending(i, k),
                            sol.spending.unspent()[static_cast<Eigen::Index>(i)]});
        }
      }
      emit(t, format, output, out);
      if (!trace_path.empty()) {
        Table tr{{"iter", "objective", "kkt_residual", "max_step"}, {}};
        for (const auto& row : sol.certificate.trace) {
          tr.rows.push_back({row.iter, row.objective, row.kkt_residual, row.max_step});
        }
        emit(tr, format, trace_path, out);
      }
      const auto& c = sol.certificate;
      err << "converged: " << yes_no(c.converged) << ", iterations: " << c.iterations
          << ", stationarity: " << c.kkt_residual
          << ", complementarity: " << c.complementarity_residual
          << ", objective: " << c.objective_value << "\n";
      return c.converged ? kExitOk : kExitNotConverged;
    }

    if (dyn->parsed()) {
      DynamicsConfig cfg;
      cfg.game = load_game(config);
      cfg.rule = rule == "ga" ? Rule::kGradientAscent : Rule::kBestResponse;
      cfg.learning_rates.assign(cfg.game.size(), theta);
      cfg.steps = steps;
      cfg.floor = floor;
      if (!init.empty()) cfg.init = AllocationVector(init);
      const Trace tr = simulate(cfg);
      Table t{{"t"}, {}};
      for (std::size_t i = 0; i < cfg.game.size(); ++i) t.columns.push_back("x_" + std::to_string(i + 1));
      t.columns.push_back("X");
      for (std::size_t s = 0; s < tr.states.size(); ++s) {
        std::vector<json> row{s};
        for (double v : tr.states[s].values()) row.emplace_back(v);
        row.emplace_back(tr.totals[s]);
        t.rows.push_back(std::move(row));
      }
      emit(t, format, output, out);
      return kExitOk;
    }

    if (bif->parsed()) {
      if (!(grid_max > grid_min)) throw ConfigError("--grid-max must exceed --grid-min");
      DynamicsConfig cfg;
      cfg.game = load_game(config);
      cfg.rule = rule == "ga" ? Rule::kGradientAscent : Rule::kBestResponse;
      cfg.learning_rates.assign(cfg.game.size(), theta);
      cfg.floor = floor;
      ScanOptions so;
      so.samples = samples;
      so.burn_in = burn_in;
      so.threads = threads;
      const auto grid = grid_scale == "log" ? log_grid(grid_min, grid_max, grid_points)
                                            : linear_grid(grid_min, grid_max, grid_points);
      const auto scan = bifurcation_scan(
          cfg, axis == "theta" ? ScanAxis::kLearningRate : ScanAxis::kCostAsymmetry, grid, so);
      Table t{{"param", "sample_index", "aggregate_X"}, {}};
      Table s{{"param", "diameter", "distinct", "degenerate"}, {}};
      for (const auto& p : scan.points) {
        for (std::size_t j = 0; j < p.samples.size(); ++j) t.rows.push_back({p.param, j, p.samples[j]});
        s.rows.push_back({p.param, p.diameter, p.distinct, p.degenerate});
      }
      emit(t, format, output, out);
      if (!summary_path.empty()) emit(s, format, summary_path, out);
      return kExitOk;
    }

    if (cs->parsed()) {
      const auto series = ingest_market_csv(market);
      const auto rigs = load_rigs_csv(rigs_path);
      const auto schedule = load_energy_csv(energy_path);
      CaseStudyOptions opts;
      opts.warm_start = warm;
      opts.threads = threads;
      opts.solver.tol = tol;
      opts.solver.max_iter = max_iter;
      const auto res = daily_equilibrium(series, rigs, schedule, profile, opts);
      Table t{{"date", "coin", "unit_cost", "pfr", "ppr", "share"}, {}};
      for (const auto& r : res.reports) {
        for (const auto& c : r.coins) {
          t.rows.push_back({format_date(r.date), c.coin, c.unit_cost, c.pfr, c.ppr, c.share});
        }
      }
      emit(t, format, output, out);
      for (const auto& w : res.warnings) err << "warning: " << w << "\n";
      for (const auto& g : res.gaps) err << "gap: " << format_date(g) << " skipped\n";
      bool all = true;
      for (const auto& r : res.reports) {
        if (!r.converged) {
          all = false;
          err << "not converged: " << format_date(r.date) << "\n";
        }
      }
      return all ? kExitOk : kExitNotConverged;
    }

    if (ver->parsed()) {
      std::mt19937_64 rng(seed);
      const Economy econ = config.empty() ? random_economy(rng, miners, chains)
                                          : load_economy(config);
      Table t{{"check", "passed", "value", "limit"}, {}};
      bool all = true;
      auto record = [&](const std::string& name, bool ok, double value, double limit) {
        t.rows.push_back({name, ok, value, limit});
        all = all && ok;
      };

      SolverOptions opts;
      const auto sol = solve_equilibrium(econ, opts);
      const double kkt = std::max(sol.certificate.kkt_residual,
                                  sol.certificate.complementarity_residual);
      record("kkt_residual", sol.certificate.converged && kkt < 1e-6, kkt, 1e-6);

      double worst_rise = -std::numeric_limits<double>::infinity();
      const auto& tr = sol.certificate.trace;
      for (std::size_t s = 1; s < tr.size(); ++s) {
        const double slack = 1e-10 * (1.0 + std::abs(tr[s - 1].objective));
        worst_rise = std::max(worst_rise, (tr[s].objective - tr[s - 1].objective) - slack);
      }
      if (tr.size() < 2) worst_rise = 0.0;
      record("objective_monotone", worst_rise <= 0.0, worst_rise, 0.0);

      double worst_low = std::numeric_limits<double>::infinity();
      double worst_high = -std::numeric_limits<double>::infinity();
      for (std::size_t p = 0; p < pairs; ++p) {
        const auto z = random_interior(econ, rng);
        const auto zn = random_interior(econ, rng);
        const double gap = bregman_gap(econ, zn, z);
        const double kl = scaled_divergence(econ, zn, z);
        const double slack = 1e-9 * (1.0 + kl);
        worst_low = std::min(worst_low, gap + slack);
        worst_high = std::max(worst_high, gap - kl - slack);
      }
      record("bregman_lower", worst_low >= 0.0, worst_low, 0.0);
      record("bregman_upper", worst_high <= 0.0, worst_high, 0.0);

      const auto b0 = SpendingMatrix::uniform_start(econ);
      for (std::size_t T : {std::size_t{10}, std::size_t{100}}) {
        const auto rc = md_rate_check(econ, b0, T);
        record("md_rate_T" + std::to_string(T), rc.satisfied, rc.gap_t, rc.bound);
      }
      emit(t, format, output, out);
      err << (all ? "all checks passed" : "some checks failed") << " (seed " << seed << ")\n";
      return all ? kExitOk : kExitNotConverged;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  }
  return kExitInvalid;
}

}  // namespace minecon::cli
