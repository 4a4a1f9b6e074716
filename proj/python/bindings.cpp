#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "minecon/case_study.hpp"
#include "minecon/cli_app.hpp"
#include "minecon/dynamics_lab.hpp"
#include "minecon/errors.hpp"
#include "minecon/market_economy.hpp"
#include "minecon/strategic_game.hpp"

namespace py = pybind11;
using namespace minecon;

namespace {

py::dict report_dict(const GriefingReport& r) {
  py::dict d;
  d["deviator"] = r.deviator;
  d["delta"] = r.delta;
  d["own_loss"] = r.own_loss;
  d["victim_losses"] = r.victim_losses;
  d["gf_total"] = r.gf_total;
  d["gf_individual"] = r.gf_individual;
  return d;
}

py::dict certificate_dict(const EquilibriumCertificate& c) {
  py::dict d;
  d["kkt_residual"] = c.kkt_residual;
  d["complementarity_residual"] = c.complementarity_residual;
  d["objective_value"] = c.objective_value;
  d["iterations"] = c.iterations;
  d["converged"] = c.converged;
  py::list rows;
  for (const auto& t : c.trace) rows.append(py::make_tuple(t.iter, t.objective, t.kkt_residual, t.max_step));
  d["trace"] = rows;
  return d;
}

Rule parse_rule(const std::string& s) {
  if (s == "ga") return Rule::kGradientAscent;
  if (s == "br") return Rule::kBestResponse;
  throw ConfigError("rule must be 'ga' or 'br'");
}

DynamicsConfig make_config(const MiningGame& game, const std::string& rule, double theta,
                           std::size_t steps, double floor,
                           const std::optional<std::vector<double>>& init) {
  DynamicsConfig c;
  c.rule = parse_rule(rule);
  c.game = game;
  c.learning_rates.assign(game.size(), theta);
  c.steps = steps;
  c.floor = floor;
  if (init) c.init = AllocationVector(*init);
  return c;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "mining games, proportional-response markets and learning dynamics";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<DomainError>(m, "DomainError", base.ptr());
  py::register_exception<InfeasibleError>(m, "InfeasibleError", base.ptr());
  py::register_exception<DegenerateError>(m, "DegenerateError", base.ptr());
  py::register_exception<PreconditionError>(m, "PreconditionError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  auto parse = py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<ValidationError>(m, "ValidationError", parse.ptr());

  // single chain
  py::class_<MiningGame>(m, "MiningGame")
      .def(py::init<std::vector<double>, double>(), py::arg("costs"), py::arg("reward") = 1.0)
      .def_property_readonly("costs", &MiningGame::costs)
      .def_property_readonly("reward", &MiningGame::reward)
      .def("__len__", &MiningGame::size);

  m.def("c_star", &c_star);
  m.def("nash_allocation",
        [](const MiningGame& g, bool auto_drop) {
          return nash_allocation(g, auto_drop ? Participation::kAutoDrop : Participation::kStrict)
              .values();
        },
        py::arg("game"), py::arg("auto_drop") = false);
  m.def("utility", [](const MiningGame& g, const std::vector<double>& x, std::size_t i) {
    return utility(g, AllocationVector(x), i);
  });
  m.def("griefing_factor_closed", &griefing_factor_closed, py::arg("game"), py::arg("delta"));
  m.def("griefing_factor_direct",
        [](const MiningGame& g, const std::vector<double>& base, std::size_t i, double x_new) {
          return report_dict(griefing_factor_direct(g, AllocationVector(base), i, x_new));
        },
        py::arg("game"), py::arg("base"), py::arg("deviator"), py::arg("new_allocation"));
  m.def("non_griefable_allocation",
        [](const MiningGame& g) { return non_griefable_allocation(g).values(); });
  m.def("is_individually_griefable",
        [](const MiningGame& g, const std::vector<double>& x) {
          const auto r = is_individually_griefable(g, AllocationVector(x));
          py::dict d;
          d["griefable"] = r.griefable;
          d["max_gf_individual"] = r.max_gf_individual;
          if (r.witness) {
            d["witness"] = py::make_tuple(r.witness->deviator, r.witness->victim,
                                          r.witness->deviation, r.witness->gf_individual);
          } else {
            d["witness"] = py::none();
          }
          return d;
        });
  m.def("expenditure_report", [](const MiningGame& g) {
    const auto e = expenditure_report(g);
    py::dict d;
    d["e_nash"] = e.e_nash;
    d["e_nongriefable"] = e.e_nongriefable;
    d["ratio"] = e.ratio;
    d["homogeneous"] = e.homogeneous;
    return d;
  });

  // many chains
  py::class_<Economy>(m, "Economy")
      .def(py::init<Eigen::VectorXd, Eigen::MatrixXd, Eigen::VectorXd, Eigen::VectorXd,
                    std::optional<Eigen::VectorXd>>(),
           py::arg("revenues"), py::arg("unit_costs"), py::arg("capacities"), py::arg("rho"),
           py::arg("network_totals") = py::none())
      .def_static("from_rates", &Economy::from_rates, py::arg("rates"), py::arg("capacities"),
                  py::arg("rho"))
      .def_property_readonly("miners", &Economy::miners)
      .def_property_readonly("chains", &Economy::chains)
      .def_property_readonly("exogenous",
                             [](const Economy& e) { return e.mode() == AggregateMode::kExogenous; });

  m.def("uniform_start", [](const Economy& e) { return SpendingMatrix::uniform_start(e).b(); });
  m.def("pr_step", [](const Economy& e, const Eigen::MatrixXd& b) {
    return pr_step(e, SpendingMatrix(e, b)).b();
  });
  m.def("solve_equilibrium",
        [](const Economy& e, std::optional<Eigen::MatrixXd> b0, double tol, std::size_t max_iter,
           bool trace) {
          const SolverOptions opt{tol, max_iter, trace};
          const auto r = b0 ? solve_equilibrium(e, SpendingMatrix(e, *b0), opt)
                            : solve_equilibrium(e, opt);
          return py::make_tuple(r.spending.b(), certificate_dict(r.certificate));
        },
        py::arg("economy"), py::arg("start") = py::none(), py::arg("tol") = 1e-10,
        py::arg("max_iter") = 100000, py::arg("trace") = false);
  m.def("kkt_residual", [](const Economy& e, const Eigen::MatrixXd& b) {
    const auto r = kkt_residual(e, SpendingMatrix(e, b));
    return py::make_tuple(r.stationarity, r.complementarity);
  });
  m.def("shmyrev_objective", [](const Economy& e, const Eigen::MatrixXd& b) {
    return shmyrev_objective(e, SpendingMatrix(e, b));
  });
  m.def("bregman_gap", [](const Economy& e, const Eigen::MatrixXd& z_new, const Eigen::MatrixXd& z_old) {
    return bregman_gap(e, SpendingMatrix(e, z_new), SpendingMatrix(e, z_old));
  });
  m.def("scaled_divergence", [](const Economy& e, const Eigen::MatrixXd& z_new, const Eigen::MatrixXd& z_old) {
    return scaled_divergence(e, SpendingMatrix(e, z_new), SpendingMatrix(e, z_old));
  });
  m.def("md_rate_check", [](const Economy& e, const Eigen::MatrixXd& b0, std::size_t T) {
    const auto r = md_rate_check(e, SpendingMatrix(e, b0), T);
    return py::make_tuple(r.satisfied, r.gap_t, r.bound);
  });

  // dynamics
  m.def("simulate",
        [](const MiningGame& g, const std::string& rule, double theta, std::size_t steps,
           double floor, std::optional<std::vector<double>> init) {
          const auto tr = simulate(make_config(g, rule, theta, steps, floor, init));
          Eigen::MatrixXd states(tr.states.size(), g.size());
          for (std::size_t t = 0; t < tr.states.size(); ++t)
            for (std::size_t i = 0; i < g.size(); ++i) states(t, i) = tr.states[t][i];
          return states;
        },
        py::arg("game"), py::arg("rule") = "ga", py::arg("theta") = 0.1, py::arg("steps") = 450,
        py::arg("floor") = 0.0, py::arg("init") = py::none());
  m.def("bifurcation_scan",
        [](const MiningGame& g, const std::string& rule, const std::string& axis,
           const std::vector<double>& grid, double theta, std::size_t samples,
           std::size_t burn_in, double floor, unsigned threads) {
          ScanAxis ax;
          if (axis == "theta") ax = ScanAxis::kLearningRate;
          else if (axis == "asymmetry") ax = ScanAxis::kCostAsymmetry;
          else throw ConfigError("axis must be 'theta' or 'asymmetry'");
          ScanOptions opt;
          opt.samples = samples;
          opt.burn_in = burn_in;
          opt.threads = threads;
          const auto scan =
              bifurcation_scan(make_config(g, rule, theta, 0, floor, std::nullopt), ax, grid, opt);
          py::list out;
          for (const auto& p : scan.points) {
            py::dict d;
            d["param"] = p.param;
            d["samples"] = p.samples;
            d["diameter"] = p.diameter;
            d["distinct"] = p.distinct;
            d["degenerate"] = p.degenerate;
            out.append(d);
          }
          return out;
        },
        py::arg("game"), py::arg("rule") = "ga", py::arg("axis") = "theta", py::arg("grid"),
        py::arg("theta") = 0.1, py::arg("samples") = 400, py::arg("burn_in") = 50,
        py::arg("floor") = 0.0, py::arg("threads") = 0);

  // case study
  m.def("unit_cost",
        [](double price, double hashrate_ths, double power_w, double usd_per_kwh, double lifespan) {
          return unit_cost(RigSpec{"", 0, "", price, hashrate_ths, power_w, lifespan}, usd_per_kwh);
        },
        py::arg("price_usd"), py::arg("hashrate_ths"), py::arg("power_w"), py::arg("usd_per_kwh"),
        py::arg("lifespan_years") = 2.0);
  m.def("case_study",
        [](const std::string& market, const std::string& rigs, const std::string& energy,
           double capacity, double rho, double cost_factor, unsigned threads) {
          CaseStudyOptions opt;
          opt.threads = threads;
          const auto res = daily_equilibrium(ingest_market_csv(market), load_rigs_csv(rigs),
                                             load_energy_csv(energy),
                                             MinerProfile{capacity, rho, cost_factor}, opt);
          py::list rows;
          for (const auto& r : res.reports) {
            for (const auto& c : r.coins) {
              py::dict d;
              d["date"] = format_date(r.date);
              d["coin"] = c.coin;
              d["unit_cost"] = c.unit_cost;
              d["pfr"] = c.pfr;
              d["ppr"] = c.ppr;
              d["share"] = c.share;
              d["converged"] = r.converged;
              rows.append(d);
            }
          }
          return rows;
        },
        py::arg("market"), py::arg("rigs"), py::arg("energy"), py::arg("capacity") = 1.0,
        py::arg("rho") = 0.5, py::arg("cost_factor") = 1.0, py::arg("threads") = 0);

  m.def("run_cli",
        [](const std::vector<std::string>& args) {
          std::ostringstream out, err;
          const int status = cli::run(args, out, err);
          return py::make_tuple(status, out.str(), err.str());
        },
        py::arg("args"), "Run the command-line tool in-process; returns (status, stdout, stderr).");
}
