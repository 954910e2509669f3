// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: network generation, single optimizer runs,
// baselines, Monte Carlo sweeps, aggregation and a built-in validation
// battery. See README for usage.
#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "cffl/experiments.hpp"

using namespace cffl;

namespace {

std::string resolve_out_dir(const std::string& flag_value) {
  if (const char* env = std::getenv("CFFL_OUT_DIR"); env && *env) return env;
  return flag_value;
}

PlacementCase parse_case(const std::string& s) {
  if (s == "C1" || s == "c1") return PlacementCase::C1;
  if (s == "C2" || s == "c2") return PlacementCase::C2;
  throw CLI::ValidationError("case must be C1 or C2");
}

Scheme parse_scheme(const std::string& s) {
  if (s == "OPT") return Scheme::OPT;
  if (s == "BL1") return Scheme::BL1;
  if (s == "BL2") return Scheme::BL2;
  throw CLI::ValidationError("scheme must be OPT, BL1 or BL2");
}

void write_trace_csv(const Alg2Result& res, std::ostream& os) {
  os << "n,sum_a,V,L_estimate,T_sample,st_objective,iterate_change,master_gap\n";
  os.precision(12);
  for (size_t i = 0; i < res.trace.iteration.size(); ++i)
    os << res.trace.iteration[i] << ',' << res.trace.sum_a[i] << ',' << res.trace.penalty[i] << ','
       << res.trace.l_estimate[i] << ',' << res.trace.t_sample[i] << ',' << res.trace.st_obj[i]
       << ',' << res.trace.iterate_change[i] << ',' << res.trace.master_gap[i] << '\n';
}

int run_validate(bool quick) {
  int failures = 0;
  auto report = [&](const char* name, bool ok) {
    std::cout << (ok ? "[PASS] " : "[FAIL] ") << name << "\n";
    if (!ok) ++failures;
  };

  {  // wrap distance against the 9-copy enumeration
    Rng rng(1);
    bool ok = true;
    for (int rep = 0; rep < 100 && ok; ++rep) {
      const double side = 500.0;
      Eigen::Vector2d a(rng.uniform(0, side), rng.uniform(0, side));
      Eigen::Vector2d b(rng.uniform(0, side), rng.uniform(0, side));
      double best = 1e300;
      for (int ix = -1; ix <= 1; ++ix)
        for (int iy = -1; iy <= 1; ++iy)
          best = std::min(best, (a - (b + Eigen::Vector2d(ix * side, iy * side))).norm());
      ok = std::abs(wrap_distance(a, b, side) - best) < 1e-9;
    }
    report("wrap distance matches brute force", ok);
  }
  {  // round-count identities
    SystemParams p = SystemParams::reference(15, 5);
    const bool ok = std::abs(round_count(Selection::all_on(15), p) - 6.0) < 1e-12 &&
                    std::abs(bl2_round_count(5, 15, p) - 78.0) < 1e-12;
    report("round-count identities", ok);
  }
  {  // conic solver on the reference rotated-cone example
    conic::Program prog;
    const int t = prog.add_var(0.0, conic::Program::kInf);
    prog.set_obj(t, 1.0);
    prog.add_rotated_cone(conic::LinExpr::of(t), conic::LinExpr(1.0), {conic::LinExpr(4.0)});
    const conic::Solution sol = conic::solve(prog);
    report("conic solver rotated-cone example", sol.optimal() && std::abs(sol.x(t) - 8.0) < 1e-5);
  }
  {  // projection against the conic QP route
    Rng rng(3);
    bool ok = true;
    for (int rep = 0; rep < (quick ? 10 : 100) && ok; ++rep) {
      const int n = 6, nq = 2;
      Eigen::VectorXd a0(n), g(n);
      for (int k = 0; k < n; ++k) {
        a0(k) = rng.uniform();
        g(k) = rng.uniform(-4, 4);
      }
      a0 = project_onto_h(a0, nq);
      const Eigen::VectorXd fast = solve_master(a0, g, 1.0, nq);
      conic::Program prog;
      conic::LinExpr sum;
      for (int k = 0; k < n; ++k) {
        prog.add_var(0.0, 1.0);
        prog.set_obj(k, g(k));
        sum.add(k, 1.0);
        prog.obj_quad_rows.push_back(conic::LinExpr::of(k, 1.0, -a0(k)));
      }
      prog.add_linear(sum, conic::Sense::GE, nq);
      conic::SolverOptions so;
      so.tol = 1e-9;
      const conic::Solution sol = conic::solve(prog, so);
      const auto obj = [&](const Eigen::VectorXd& x) {
        return g.dot(x - a0) + (x - a0).squaredNorm();
      };
      ok = sol.optimal() && std::abs(obj(fast) - obj(sol.x)) < 1e-6;
    }
    report("master projection vs conic QP", ok);
  }
  {  // bound tightness and lower-bound property on a random instance
    SystemParams p = SystemParams::reference(4);
    PlacementConfig cfg;
    cfg.n_aps = 5;
    cfg.n_ues = 4;
    cfg.d_km = 1.0;
    const NetworkRealization net = make_realization(generate_placement(cfg, 2), p, 2);
    const Selection sel = Selection::all_on(4);
    const InitialPoint ip = initial_point(sel, net, p);
    const BoundCoefficients bc = build_bounds(ip.alloc, net, p);
    const Eigen::VectorXd rd = downlink_rate(ip.alloc.v, net, p);
    bool ok = true;
    for (int k = 0; k < 4; ++k)
      ok = ok && std::abs(bc.eval_rd_tilde(k, ip.alloc.v) - rd(k)) <= 1e-9 * rd(k);
    report("rate bounds tight at the iterate", ok);
  }
  {  // short-term SCA monotonicity on a small instance
    SystemParams p = SystemParams::reference(3);
    PlacementConfig cfg;
    cfg.n_aps = 4;
    cfg.n_ues = 3;
    cfg.d_km = 1.0;
    cfg.pcase = PlacementCase::C2;
    const NetworkRealization net = make_realization(generate_placement(cfg, 4), p, 4);
    const ShortTermSolution st = sca_solve(Selection::all_on(3), net, p);
    bool ok = !st.obj_trace.empty();
    for (size_t i = 1; i < st.obj_trace.size(); ++i)
      ok = ok && st.obj_trace[i] <= st.obj_trace[i - 1] + 1e-8;
    report("short-term SCA objective monotone", ok);
  }
  return failures;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cell-free massive MIMO federated-learning execution-time optimizer"};
  app.set_config("--config", "", "flat key=value configuration file");
  app.require_subcommand(1);

  // ---- generate -------------------------------------------------------------
  auto* gen = app.add_subcommand("generate", "generate a network realization dump");
  struct {
    int m = 40, n = 15, n_qol = 5;
    double d = 1.5;
    std::string pcase = "C2";
    std::uint64_t seed = 1;
    std::string out = "realization.txt";
  } g;
  gen->add_option("--M", g.m, "number of APs");
  gen->add_option("--N", g.n, "number of UEs");
  gen->add_option("--D", g.d, "square side, km");
  gen->add_option("--case", g.pcase, "placement case C1|C2");
  gen->add_option("--seed", g.seed, "seed");
  gen->add_option("--out", g.out, "output file");

  // ---- optimize -------------------------------------------------------------
  auto* opt = app.add_subcommand("optimize", "run the two-timescale optimizer once");
  struct {
    int m = 20, n = 15, n_qol = 5, max_iter = 60, eval_samples = 12;
    double d = 1.5;
    std::string pcase = "C2";
    std::uint64_t seed = 1;
    std::string out_dir = "results";
    int sca_outer = 5;
    double sca_eps = 1e-3;
  } o;
  opt->add_option("--M", o.m, "number of APs");
  opt->add_option("--N", o.n, "number of UEs");
  opt->add_option("--D", o.d, "square side, km");
  opt->add_option("--case", o.pcase, "placement case C1|C2");
  opt->add_option("--N-qol", o.n_qol, "minimum selected UEs");
  opt->add_option("--seed", o.seed, "seed");
  opt->add_option("--max-iter", o.max_iter, "long-term iteration cap");
  opt->add_option("--eval-samples", o.eval_samples, "samples for the final T_e estimate");
  opt->add_option("--sca-outer", o.sca_outer, "short-term SCA iteration cap");
  opt->add_option("--sca-eps", o.sca_eps, "short-term SCA relative tolerance");
  opt->add_option("--out-dir", o.out_dir, "output directory");

  // ---- baseline -------------------------------------------------------------
  auto* bl = app.add_subcommand("baseline", "run a baseline scheme once");
  struct {
    std::string scheme = "BL1";
    int m = 20, n = 15, n_qol = 5, samples = 12;
    double d = 1.5;
    std::string pcase = "C2";
    std::uint64_t seed = 1;
  } b;
  bl->add_option("--scheme", b.scheme, "BL1 or BL2");
  bl->add_option("--M", b.m, "number of APs");
  bl->add_option("--N", b.n, "number of UEs");
  bl->add_option("--D", b.d, "square side, km");
  bl->add_option("--case", b.pcase, "placement case C1|C2");
  bl->add_option("--N-qol", b.n_qol, "minimum selected UEs");
  bl->add_option("--seed", b.seed, "seed");
  bl->add_option("--samples", b.samples, "evaluation samples / sampled rounds");

  // ---- sweep ----------------------------------------------------------------
  auto* sw = app.add_subcommand("sweep", "Monte Carlo sweep over the configured axes");
  struct {
    std::vector<int> m_list{20};
    std::vector<double> d_list{1.5};
    std::vector<std::string> case_list{"C2"};
    std::vector<int> n_qol_list{5};
    std::vector<std::string> schemes{"OPT", "BL1", "BL2"};
    int n = 15, trials = 20, workers = 2, alg2_max_iter = 60, eval_samples = 12, bl2_rounds = 12;
    std::uint64_t base_seed = 1;
    std::string out_dir = "results";
    int sca_outer = 5;
    double sca_eps = 1e-3;
  } s;
  sw->add_option("--M", s.m_list, "AP counts");
  sw->add_option("--D", s.d_list, "square sides, km");
  sw->add_option("--case", s.case_list, "placement cases");
  sw->add_option("--N-qol", s.n_qol_list, "QoL thresholds");
  sw->add_option("--scheme", s.schemes, "schemes to run");
  sw->add_option("--N", s.n, "number of UEs");
  sw->add_option("--trials", s.trials, "trials per cell");
  sw->add_option("--workers", s.workers, "worker threads");
  sw->add_option("--base-seed", s.base_seed, "base seed");
  sw->add_option("--alg2-max-iter", s.alg2_max_iter, "long-term iteration cap");
  sw->add_option("--eval-samples", s.eval_samples, "T_e evaluation samples");
  sw->add_option("--bl2-rounds", s.bl2_rounds, "sampled rounds for BL2");
  sw->add_option("--sca-outer", s.sca_outer, "short-term SCA iteration cap");
  sw->add_option("--sca-eps", s.sca_eps, "short-term SCA relative tolerance");
  sw->add_option("--out-dir", s.out_dir, "output directory");

  // ---- summarize ------------------------------------------------------------
  auto* su = app.add_subcommand("summarize", "aggregate a results CSV");
  struct {
    std::string in = "results/results.csv";
    std::string out = "results/aggregates.csv";
    std::string figure;
    std::string plot_dir = "results/plots";
  } m;
  su->add_option("--in", m.in, "results CSV");
  su->add_option("--out", m.out, "aggregate CSV");
  su->add_option("--figure", m.figure, "also emit plot data: fig6a|fig6b|fig7a|fig7b");
  su->add_option("--plot-dir", m.plot_dir, "plot data directory");

  // ---- validate ---------------------------------------------------------------
  auto* va = app.add_subcommand("validate", "run the built-in oracle battery");
  bool quick = false;
  va->add_flag("--quick", quick, "reduced repetition counts");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      PlacementConfig cfg;
      cfg.n_aps = g.m;
      cfg.n_ues = g.n;
      cfg.d_km = g.d;
      cfg.pcase = parse_case(g.pcase);
      SystemParams p = SystemParams::reference(g.n, g.n_qol);
      const NetworkRealization net =
          make_realization(generate_placement(cfg, seed_mix(g.seed, 0x9eau)), p, g.seed);
      std::ofstream os(g.out);
      dump_realization(net, os);
      std::cout << "wrote " << g.out << "\n";
    } else if (*opt) {
      const std::string out_dir = resolve_out_dir(o.out_dir);
      std::filesystem::create_directories(out_dir);
      PlacementConfig cfg;
      cfg.n_aps = o.m;
      cfg.n_ues = o.n;
      cfg.d_km = o.d;
      cfg.pcase = parse_case(o.pcase);
      SystemParams p = SystemParams::reference(o.n, o.n_qol);
      const Placement pl = generate_placement(cfg, seed_mix(o.seed, 0x9eau));
      Alg2Options opts;
      opts.max_iter = o.max_iter;
      opts.sca.max_outer = o.sca_outer;
      opts.sca.eps = o.sca_eps;
      const Alg2Result res = run_algorithm2(pl, p, o.seed, opts);
      const double te = evaluate_selection_time(res.a_binary, pl, p, o.seed, o.eval_samples, opts.sca);
      std::ofstream tr(out_dir + "/trace.csv");
      write_trace_csv(res, tr);
      std::cout << "iterations " << res.iterations << (res.converged ? " (converged)" : "")
                << "\nselected " << res.a_binary.n_selected() << " of " << o.n << "\nT_e " << te
                << " s\ntrace " << out_dir << "/trace.csv\n";
    } else if (*bl) {
      PlacementConfig cfg;
      cfg.n_aps = b.m;
      cfg.n_ues = b.n;
      cfg.d_km = b.d;
      cfg.pcase = parse_case(b.pcase);
      SystemParams p = SystemParams::reference(b.n, b.n_qol);
      const Placement pl = generate_placement(cfg, seed_mix(b.seed, 0x9eau));
      ScaOptions sca;
      sca.max_outer = 5;
      sca.eps = 1e-3;
      const BaselineResult r = parse_scheme(b.scheme) == Scheme::BL1
                                   ? run_bl1(pl, p, b.seed, b.samples, sca)
                                   : run_bl2(pl, p, b.seed, b.samples, sca);
      std::cout << b.scheme << " subset " << r.subset_size << " rounds " << r.rounds << " T_e "
                << r.total_time << " s\n";
    } else if (*sw) {
      ExperimentConfig cfg;
      cfg.m_list = s.m_list;
      cfg.d_list = s.d_list;
      cfg.case_list.clear();
      for (const auto& c : s.case_list) cfg.case_list.push_back(parse_case(c));
      cfg.n_qol_list = s.n_qol_list;
      cfg.schemes.clear();
      for (const auto& sc : s.schemes) cfg.schemes.push_back(parse_scheme(sc));
      cfg.n_ues = s.n;
      cfg.trials = s.trials;
      cfg.base_seed = s.base_seed;
      cfg.workers = s.workers;
      cfg.alg2_max_iter = s.alg2_max_iter;
      cfg.eval_samples = s.eval_samples;
      cfg.bl2_rounds = s.bl2_rounds;
      cfg.sca.max_outer = s.sca_outer;
      cfg.sca.eps = s.sca_eps;
      cfg.sca_eval = cfg.sca;
      cfg.out_dir = resolve_out_dir(s.out_dir);
      std::filesystem::create_directories(cfg.out_dir);

      std::ofstream snap(cfg.out_dir + "/config.txt");
      snap << cfg.snapshot();
      std::ofstream csv(cfg.out_dir + "/results.csv");
      csv << ResultRow::csv_header() << "\n";
      const auto rows = run_sweep(cfg, &csv);
      int failed = 0;
      for (const auto& r : rows) failed += r.status != "ok";
      std::cout << "rows " << rows.size() << " failed " << failed << " -> " << cfg.out_dir
                << "/results.csv\n";
      return failed == 0 ? 0 : 2;
    } else if (*su) {
      std::ifstream is(m.in);
      if (!is) throw std::runtime_error("cannot open " + m.in);
      std::vector<ResultRow> rows;
      std::string line;
      std::getline(is, line);  // header
      while (std::getline(is, line))
        if (!line.empty()) rows.push_back(ResultRow::from_csv(line));
      const auto agg = summarize(rows);
      std::ofstream os(m.out);
      write_aggregates_csv(agg, os);
      std::cout << "aggregated " << rows.size() << " rows into " << agg.size() << " cells -> "
                << m.out << "\n";
      if (!m.figure.empty()) {
        const auto files = emit_plotdata(agg, m.figure, m.plot_dir);
        std::cout << "plot data: " << files.size() << " files in " << m.plot_dir << "\n";
      }
    } else if (*va) {
      const int failures = run_validate(quick);
      std::cout << (failures == 0 ? "all checks passed\n" : "checks failed\n");
      return failures == 0 ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
