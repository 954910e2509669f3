// SPDX-License-Identifier: Apache-2.0
//
// Monte Carlo experiment harness: sweep configuration, per-trial seed
// discipline, CSV persistence, aggregation and figure-data emission. Every
// row carries the seed and config hash that reproduce it exactly.
#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "cffl/baselines.hpp"
#include "cffl/long_term.hpp"

namespace cffl {

enum class Scheme { OPT, BL1, BL2 };

inline const char* scheme_name(Scheme s) {
  switch (s) {
    case Scheme::OPT: return "OPT";
    case Scheme::BL1: return "BL1";
    case Scheme::BL2: return "BL2";
  }
  return "?";
}

inline const char* case_name(PlacementCase c) { return c == PlacementCase::C1 ? "C1" : "C2"; }

struct ExperimentConfig {
  std::vector<int> m_list{20};
  std::vector<double> d_list{1.5};
  std::vector<PlacementCase> case_list{PlacementCase::C2};
  std::vector<int> n_qol_list{5};
  int n_ues = 15;
  int trials = 20;
  std::uint64_t base_seed = 1;
  std::vector<Scheme> schemes{Scheme::OPT, Scheme::BL1, Scheme::BL2};
  std::string out_dir = "results";
  int workers = 2;

  // Solver budgets.
  ScaOptions sca{};          // inner loops inside Algorithm 2
  ScaOptions sca_eval{};     // evaluation of a fixed selection
  int alg2_max_iter = 60;
  int eval_samples = 12;     // large-scale samples for the T_e expectation
  int bl2_rounds = 12;       // sampled rounds for BL2

  void validate() const {
    if (m_list.empty() || d_list.empty() || case_list.empty() || n_qol_list.empty())
      throw std::invalid_argument("sweep axes must be nonempty");
    if (trials < 1) throw std::invalid_argument("trials must be >= 1");
    if (n_ues < 1) throw std::invalid_argument("n_ues must be >= 1");
  }

  std::string snapshot() const {
    std::ostringstream os;
    os << "n_ues=" << n_ues << "\ntrials=" << trials << "\nbase_seed=" << base_seed << "\n";
    os << "m_list=";
    for (size_t i = 0; i < m_list.size(); ++i) os << (i ? "," : "") << m_list[i];
    os << "\nd_list=";
    for (size_t i = 0; i < d_list.size(); ++i) os << (i ? "," : "") << d_list[i];
    os << "\ncase_list=";
    for (size_t i = 0; i < case_list.size(); ++i) os << (i ? "," : "") << case_name(case_list[i]);
    os << "\nn_qol_list=";
    for (size_t i = 0; i < n_qol_list.size(); ++i) os << (i ? "," : "") << n_qol_list[i];
    os << "\nschemes=";
    for (size_t i = 0; i < schemes.size(); ++i) os << (i ? "," : "") << scheme_name(schemes[i]);
    os << "\nalg2_max_iter=" << alg2_max_iter << "\neval_samples=" << eval_samples
       << "\nbl2_rounds=" << bl2_rounds << "\nsca_eps=" << sca.eps
       << "\nsca_max_outer=" << sca.max_outer << "\nsolver_tol=" << sca.solver.tol << "\n";
    return os.str();
  }
};

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

struct ResultRow {
  std::string scheme, pcase;
  int m = 0, n = 0;
  double d_km = 0.0;
  int n_qol = 0;
  std::uint64_t seed = 0;
  double total_time_s = std::numeric_limits<double>::quiet_NaN();
  int n_selected = 0;
  int iters = 0;
  double wallclock_s = 0.0;
  std::string status = "ok";
  std::string config_hash;

  static const char* csv_header() {
    return "scheme,case,M,N,D_km,N_qol,seed,T_e_s,n_selected,iters,wallclock_s,status,config_hash";
  }

  std::string to_csv() const {
    std::ostringstream os;
    os.precision(17);
    os << scheme << ',' << pcase << ',' << m << ',' << n << ',' << d_km << ',' << n_qol << ','
       << seed << ',' << total_time_s << ',' << n_selected << ',' << iters << ',' << wallclock_s
       << ',' << status << ',' << config_hash;
    return os.str();
  }

  static ResultRow from_csv(const std::string& line) {
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) f.push_back(tok);
    if (f.size() != 13) throw std::runtime_error("bad result row: " + line);
    ResultRow r;
    r.scheme = f[0];
    r.pcase = f[1];
    r.m = std::stoi(f[2]);
    r.n = std::stoi(f[3]);
    r.d_km = std::stod(f[4]);
    r.n_qol = std::stoi(f[5]);
    r.seed = std::stoull(f[6]);
    r.total_time_s = std::stod(f[7]);
    r.n_selected = std::stoi(f[8]);
    r.iters = std::stoi(f[9]);
    r.wallclock_s = std::stod(f[10]);
    r.status = f[11];
    r.config_hash = f[12];
    return r;
  }
};

// Deterministic per-trial seed: every random draw in a row's pipeline is
// reachable from this value alone.
inline std::uint64_t trial_seed(std::uint64_t base, PlacementCase pc, int m, double d_km,
                                int n_qol, int trial) {
  return seed_mix(base, static_cast<std::uint64_t>(pc) + 1, static_cast<std::uint64_t>(m),
                  static_cast<std::uint64_t>(std::llround(d_km * 1000.0)),
                  static_cast<std::uint64_t>(n_qol), static_cast<std::uint64_t>(trial));
}

// One (scheme, cell, trial) run through the shared pipeline.
inline ResultRow run_single(Scheme scheme, PlacementCase pc, int m, int n, double d_km, int n_qol,
                            std::uint64_t seed, const ExperimentConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  ResultRow row;
  row.scheme = scheme_name(scheme);
  row.pcase = case_name(pc);
  row.m = m;
  row.n = n;
  row.d_km = d_km;
  row.n_qol = n_qol;
  row.seed = seed;

  PlacementConfig pcfg;
  pcfg.n_aps = m;
  pcfg.n_ues = n;
  pcfg.d_km = d_km;
  pcfg.pcase = pc;
  const Placement pl = generate_placement(pcfg, seed_mix(seed, 0x9eau));
  SystemParams p = SystemParams::reference(n, n_qol);

  switch (scheme) {
    case Scheme::OPT: {
      Alg2Options opts;
      opts.max_iter = cfg.alg2_max_iter;
      opts.sca = cfg.sca;
      const Alg2Result res = run_algorithm2(pl, p, seed, opts);
      row.n_selected = res.a_binary.n_selected();
      row.iters = res.iterations;
      row.total_time_s =
          evaluate_selection_time(res.a_binary, pl, p, seed, cfg.eval_samples, cfg.sca_eval);
      break;
    }
    case Scheme::BL1: {
      const BaselineResult r = run_bl1(pl, p, seed, cfg.eval_samples, cfg.sca_eval);
      row.n_selected = r.subset_size;
      row.total_time_s = r.total_time;
      break;
    }
    case Scheme::BL2: {
      const BaselineResult r = run_bl2(pl, p, seed, cfg.bl2_rounds, cfg.sca_eval);
      row.n_selected = r.subset_size;
      row.total_time_s = r.total_time;
      break;
    }
  }
  row.wallclock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return row;
}

// Full cross product of axes x trials x schemes; failed trials become
// status=failed rows and the sweep continues. Rows are appended to the CSV
// through one serialized writer as they complete, then returned sorted by
// task order for determinism.
inline std::vector<ResultRow> run_sweep(const ExperimentConfig& cfg,
                                        std::ostream* csv_out = nullptr) {
  cfg.validate();
  const std::string hash = [&] {
    std::ostringstream os;
    os << std::hex << fnv1a(cfg.snapshot());
    return os.str();
  }();

  struct Task {
    Scheme scheme;
    PlacementCase pc;
    int m, n_qol, trial;
    double d;
  };
  std::vector<Task> tasks;
  for (PlacementCase pc : cfg.case_list)
    for (int m : cfg.m_list)
      for (double d : cfg.d_list)
        for (int nq : cfg.n_qol_list)
          for (int t = 0; t < cfg.trials; ++t)
            for (Scheme s : cfg.schemes) tasks.push_back({s, pc, m, nq, t, d});

  std::vector<ResultRow> rows(tasks.size());
  std::atomic<size_t> next{0};
  std::mutex write_mu;

  auto worker = [&] {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      const Task& tk = tasks[i];
      const std::uint64_t seed = trial_seed(cfg.base_seed, tk.pc, tk.m, tk.d, tk.n_qol, tk.trial);
      ResultRow row;
      try {
        row = run_single(tk.scheme, tk.pc, tk.m, cfg.n_ues, tk.d, tk.n_qol, seed, cfg);
      } catch (const std::exception& e) {
        row.scheme = scheme_name(tk.scheme);
        row.pcase = case_name(tk.pc);
        row.m = tk.m;
        row.n = cfg.n_ues;
        row.d_km = tk.d;
        row.n_qol = tk.n_qol;
        row.seed = seed;
        row.status = "failed";
      }
      row.config_hash = hash;
      {
        std::lock_guard<std::mutex> lock(write_mu);
        rows[i] = row;
        if (csv_out) *csv_out << row.to_csv() << "\n" << std::flush;
      }
    }
  };

  const int n_workers = std::max(1, cfg.workers);
  std::vector<std::thread> pool;
  pool.reserve(n_workers);
  for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  return rows;
}

// --- aggregation -------------------------------------------------------------

struct AggregateKey {
  std::string scheme, pcase;
  int m = 0;
  double d_km = 0.0;
  int n_qol = 0;
  bool operator<(const AggregateKey& o) const {
    return std::tie(scheme, pcase, m, d_km, n_qol) <
           std::tie(o.scheme, o.pcase, o.m, o.d_km, o.n_qol);
  }
};

struct AggregateCell {
  int count = 0;
  double mean_te = 0.0, std_te = 0.0, ci95_te = 0.0;
  double mean_selected = 0.0;
};

inline std::map<AggregateKey, AggregateCell> summarize(const std::vector<ResultRow>& rows) {
  if (rows.empty()) throw std::invalid_argument("summarize needs at least one row");
  std::map<AggregateKey, std::vector<const ResultRow*>> groups;
  for (const auto& r : rows) {
    if (r.status != "ok") continue;
    groups[{r.scheme, r.pcase, r.m, r.d_km, r.n_qol}].push_back(&r);
  }
  std::map<AggregateKey, AggregateCell> out;
  for (const auto& [key, members] : groups) {
    AggregateCell c;
    c.count = static_cast<int>(members.size());
    double acc = 0.0, acc_sel = 0.0;
    for (const auto* r : members) {
      acc += r->total_time_s;
      acc_sel += r->n_selected;
    }
    c.mean_te = acc / c.count;
    c.mean_selected = acc_sel / c.count;
    double ss = 0.0;
    for (const auto* r : members) ss += (r->total_time_s - c.mean_te) * (r->total_time_s - c.mean_te);
    c.std_te = c.count > 1 ? std::sqrt(ss / (c.count - 1)) : 0.0;
    c.ci95_te = c.count > 0 ? 1.96 * c.std_te / std::sqrt(static_cast<double>(c.count)) : 0.0;
    out[key] = c;
  }
  return out;
}

inline void write_aggregates_csv(const std::map<AggregateKey, AggregateCell>& agg,
                                 std::ostream& os) {
  os << "scheme,case,M,D_km,N_qol,count,mean_T_e_s,std_T_e_s,ci95_T_e_s,mean_n_selected\n";
  os.precision(17);
  for (const auto& [k, c] : agg)
    os << k.scheme << ',' << k.pcase << ',' << k.m << ',' << k.d_km << ',' << k.n_qol << ','
       << c.count << ',' << c.mean_te << ',' << c.std_te << ',' << c.ci95_te << ','
       << c.mean_selected << '\n';
}

inline std::map<AggregateKey, AggregateCell> read_aggregates_csv(std::istream& is) {
  std::map<AggregateKey, AggregateCell> out;
  std::string line;
  std::getline(is, line);  // header
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) f.push_back(tok);
    if (f.size() != 10) throw std::runtime_error("bad aggregate row: " + line);
    AggregateKey k{f[0], f[1], std::stoi(f[2]), std::stod(f[3]), std::stoi(f[4])};
    AggregateCell c;
    c.count = std::stoi(f[5]);
    c.mean_te = std::stod(f[6]);
    c.std_te = std::stod(f[7]);
    c.ci95_te = std::stod(f[8]);
    c.mean_selected = std::stod(f[9]);
    out[k] = c;
  }
  return out;
}

// --- figure data -------------------------------------------------------------

// Families: "fig6a" mean T_e vs M, "fig6b" mean selected vs M,
// "fig7a" mean T_e vs N_qol, "fig7b" mean selected vs N_qol. One CSV per
// (scheme, case, D) curve plus a plain-text gnuplot stub; cells absent from
// the aggregates are written as explicit NA markers.
inline std::vector<std::string> emit_plotdata(const std::map<AggregateKey, AggregateCell>& agg,
                                              const std::string& figure_id,
                                              const std::string& out_dir) {
  const bool x_is_m = figure_id == "fig6a" || figure_id == "fig6b";
  const bool y_is_selected = figure_id == "fig6b" || figure_id == "fig7b";
  if (!x_is_m && figure_id != "fig7a" && figure_id != "fig7b")
    throw std::invalid_argument("unknown figure id: " + figure_id);

  std::filesystem::create_directories(out_dir);

  // Axis values and curve keys present in the table.
  std::set<int> xs_m;
  std::set<int> xs_q;
  std::set<std::tuple<std::string, std::string, double, int>> curves;  // scheme, case, D, fixed
  for (const auto& [k, c] : agg) {
    xs_m.insert(k.m);
    xs_q.insert(k.n_qol);
    curves.insert(x_is_m ? std::make_tuple(k.scheme, k.pcase, k.d_km, k.n_qol)
                         : std::make_tuple(k.scheme, k.pcase, k.d_km, k.m));
  }

  std::vector<std::string> files;
  for (const auto& [scheme, pcase, d, fixed] : curves) {
    std::ostringstream name;
    name << figure_id << '_' << scheme << '_' << pcase << "_D" << d << '_'
         << (x_is_m ? "Q" : "M") << fixed << ".csv";
    const std::string path = out_dir + "/" + name.str();
    std::ofstream os(path);
    os << "# " << figure_id << " curve: scheme=" << scheme << " case=" << pcase << " D_km=" << d
       << ' ' << (x_is_m ? "N_qol=" : "M=") << fixed << "\n";
    os << "# x=" << (x_is_m ? "M" : "N_qol") << " y=" << (y_is_selected ? "mean_n_selected" : "mean_T_e_s")
       << " ci95\n";
    for (int x : (x_is_m ? xs_m : xs_q)) {
      AggregateKey k;
      k.scheme = scheme;
      k.pcase = pcase;
      k.d_km = d;
      k.m = x_is_m ? x : fixed;
      k.n_qol = x_is_m ? fixed : x;
      const auto it = agg.find(k);
      if (it == agg.end()) {
        os << x << ",NA,NA\n";
      } else {
        os.precision(12);
        os << x << ',' << (y_is_selected ? it->second.mean_selected : it->second.mean_te) << ','
           << it->second.ci95_te << '\n';
      }
    }
    files.push_back(path);
  }

  const std::string stub = out_dir + "/" + figure_id + "_plot.gp";
  std::ofstream gp(stub);
  gp << "# gnuplot stub for " << figure_id << "\nset datafile separator ','\n"
     << "set xlabel '" << (x_is_m ? "M (APs)" : "N_QoL") << "'\n"
     << "set ylabel '" << (y_is_selected ? "selected UEs" : "T_e (s)") << "'\nplot \\\n";
  for (size_t i = 0; i < files.size(); ++i)
    gp << "  '" << std::filesystem::path(files[i]).filename().string() << "' using 1:2 with linespoints"
       << (i + 1 < files.size() ? ", \\" : "") << "\n";
  files.push_back(stub);
  return files;
}

}  // namespace cffl
