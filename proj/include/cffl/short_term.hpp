// SPDX-License-Identifier: Apache-2.0
//
// Short-term subproblem: for a fixed selection vector and one network
// realization, minimize the round time t_d + t_c + t_u over transmit
// amplitudes, uplink powers, CPU frequencies and the rate/time epigraph
// variables, by successive convex approximation. Each inner problem is an
// SOCP over scaled variables:
//   w(m,k)  = sigma(m,k) v(m,k)      (per-AP budget becomes sum_k vt <= 1)
//   rdh, ruh = r / B                 (rates in units of bandwidth)
//   psi(k)  = L D_k c_k / f_k        (computing-time substitution; the
//                                     epigraph row a_k psi_k <= t_c is linear)
// UEs below the selection threshold have their variables fixed and their
// cones dropped.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "cffl/bounds.hpp"
#include "cffl/conic/solver.hpp"
#include "cffl/network.hpp"
#include "cffl/params.hpp"
#include "cffl/rates.hpp"
#include "cffl/rng.hpp"

namespace cffl {

struct SolverFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ProgramStats {
  int n_vars = 0;
  int n_linear = 0;  // linear rows including finite bounds of free variables
  int n_conic = 0;   // quadratic + rotated-cone constraints
};

// Variable layout of the assembled subproblem.
struct SubproblemLayout {
  int m = 0, n = 0;
  int w(int i, int k) const { return k * m + i; }
  int vt(int i, int k) const { return m * n + k * m + i; }
  int u(int k) const { return 2 * m * n + k; }
  int psi(int k) const { return 2 * m * n + n + k; }
  int rdh(int k) const { return 2 * m * n + 2 * n + k; }
  int ruh(int k) const { return 2 * m * n + 3 * n + k; }
  int td() const { return 2 * m * n + 4 * n; }
  int tc() const { return 2 * m * n + 4 * n + 1; }
  int tu() const { return 2 * m * n + 4 * n + 2; }
  int total() const { return 2 * m * n + 4 * n + 3; }
};

// Per-solve variable scales: rate variables are expressed relative to the
// linearization-point rates and the epigraph times relative to their
// iterate-implied values, so the subproblem solution is O(1) in every
// coordinate regardless of how slow the bottleneck UE is.
struct SubproblemScales {
  Eigen::VectorXd r_dl, r_ul;  // per-UE, in bandwidth units
  double t_d = 1.0, t_c = 1.0, t_u = 1.0;  // seconds
};

struct AssembledSubproblem {
  conic::Program prog;
  SubproblemLayout layout;
  SubproblemScales scales;
  ProgramStats stats;
};

struct InitialPoint {
  PowerAllocation alloc;
  Eigen::MatrixXd vtilde;
  Eigen::VectorXd r_d, r_u;  // bit/s
  double t_d = 0.0, t_c = 0.0, t_u = 0.0;
};

struct ShortTermSolution {
  PowerAllocation alloc;
  Eigen::MatrixXd vtilde;
  Eigen::VectorXd r_d, r_u;  // bit/s
  double t_d = 0.0, t_c = 0.0, t_u = 0.0;
  double objective = 0.0;  // t_d + t_c + t_u
  std::vector<double> obj_trace;
  Eigen::VectorXd onehot_dl, onehot_cp, onehot_ul;
  int argmax_dl = -1, argmax_cp = -1, argmax_ul = -1;
  conic::KktResiduals kkt;
  int outer_iters = 0;
};

struct ScaOptions {
  double eps = 1e-4;   // relative objective change stopping rule
  int max_outer = 30;
  conic::SolverOptions solver{};
  bool randomized_start = false;
  std::uint64_t start_seed = 0;
};

// Deterministic feasible start: equal power split over selected UEs, 90%
// uplink power, full frequency, exact rates backed off 1%, times padded 1%.
inline InitialPoint initial_point(const Selection& sel, const NetworkRealization& net,
                                  const SystemParams& p, bool randomized = false,
                                  std::uint64_t seed = 0) {
  const int m = net.n_aps(), n = net.n_ues();
  const int n_sel = sel.n_selected();
  if (n_sel < 1) throw std::invalid_argument("initial point needs at least one selected UE");

  InitialPoint ip;
  ip.vtilde.setZero(m, n);
  ip.alloc.v.setZero(m, n);
  ip.alloc.u.setZero(n);
  ip.alloc.f = Eigen::VectorXd::Constant(n, p.f_max);

  Rng rng(seed_mix(seed, 0x57a7u));
  if (randomized) {
    Eigen::MatrixXd raw(m, n);
    for (int i = 0; i < m; ++i)
      for (int k = 0; k < n; ++k) raw(i, k) = rng.uniform(0.25, 1.0);
    for (int i = 0; i < m; ++i) {
      double tot = 0.0;
      for (int k = 0; k < n; ++k)
        if (sel.selected(k)) tot += raw(i, k);
      for (int k = 0; k < n; ++k)
        if (sel.selected(k)) ip.vtilde(i, k) = std::min(sel.a(k), raw(i, k) / tot);
    }
  } else {
    for (int i = 0; i < m; ++i)
      for (int k = 0; k < n; ++k)
        if (sel.selected(k)) ip.vtilde(i, k) = std::min(sel.a(k), 1.0 / n_sel);
  }
  for (int i = 0; i < m; ++i)
    for (int k = 0; k < n; ++k)
      if (sel.selected(k)) ip.alloc.v(i, k) = std::sqrt(ip.vtilde(i, k) / net.sigma2_dl(i, k));
  for (int k = 0; k < n; ++k) {
    if (!sel.selected(k)) continue;
    const double cap = std::sqrt(std::min(sel.a(k), 1.0));
    ip.alloc.u(k) = cap * (randomized ? rng.uniform(0.5, 0.95) : 0.9);
  }

  ip.r_d = 0.99 * downlink_rate(ip.alloc.v, net, p).cwiseMax(0.0);
  ip.r_u = 0.99 * uplink_rate(ip.alloc.u, net, p).cwiseMax(0.0);

  double td = 0.0, tc = 0.0, tu = 0.0;
  for (int k = 0; k < n; ++k) {
    if (!sel.selected(k)) continue;
    td = std::max(td, sel.a(k) * p.s_dl_bits / ip.r_d(k));
    tc = std::max(tc, sel.a(k) * p.compute_time_floor());
    tu = std::max(tu, sel.a(k) * p.s_ul_bits / ip.r_u(k));
  }
  ip.t_d = 1.01 * td;
  ip.t_c = 1.01 * tc;
  ip.t_u = 1.01 * tu;
  return ip;
}

// Convex inner problem at one linearization point.
inline AssembledSubproblem assemble_subproblem(const Selection& sel, const BoundCoefficients& bc,
                                               const NetworkRealization& net,
                                               const SystemParams& p) {
  const int m = net.n_aps(), n = net.n_ues();
  if (sel.n_selected() < 1) throw std::invalid_argument("subproblem needs at least one selected UE");

  AssembledSubproblem out;
  out.layout.m = m;
  out.layout.n = n;
  const SubproblemLayout& L = out.layout;
  conic::Program& prog = out.prog;
  const double inf = conic::Program::kInf;

  std::vector<bool> active(n);
  for (int k = 0; k < n; ++k) active[k] = sel.selected(k);

  // Variables (fixed ones are substituted out during canonicalization).
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < m; ++i) prog.add_var(0.0, inf);  // w
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < m; ++i) prog.add_var(-inf, sel.a(k));  // vt
  for (int k = 0; k < n; ++k) prog.add_var(0.0, 1.0);          // u
  const double psi_min = p.compute_time_floor();
  for (int k = 0; k < n; ++k) prog.add_var(psi_min, inf);      // psi
  for (int k = 0; k < n; ++k) prog.add_var(-inf, inf);         // rdh
  for (int k = 0; k < n; ++k) prog.add_var(-inf, inf);         // ruh
  prog.add_var(0.0, inf);  // td
  prog.add_var(0.0, inf);  // tc
  prog.add_var(0.0, inf);  // tu
  for (int k = 0; k < n; ++k) {
    if (active[k]) continue;
    for (int i = 0; i < m; ++i) {
      prog.fix_var(L.w(i, k), 0.0);
      prog.fix_var(L.vt(i, k), 0.0);
    }
    prog.fix_var(L.u(k), 0.0);
    prog.fix_var(L.psi(k), psi_min);
    prog.fix_var(L.rdh(k), 0.0);
    prog.fix_var(L.ruh(k), 0.0);
  }

  const double sq_rho_d = std::sqrt(p.rho_d);
  const double scale = bc.prefac_nats / p.bandwidth_hz;  // (tau_c-tau_t)/(tau_c ln2)

  // Iterate rates (bandwidth units) and implied step times set the scales.
  SubproblemScales& sc = out.scales;
  sc.r_dl = Eigen::VectorXd::Ones(n);
  sc.r_ul = Eigen::VectorXd::Ones(n);
  double td_u = 0.0, tc_u = 0.0, tu_u = 0.0;
  for (int k = 0; k < n; ++k) {
    if (!active[k]) continue;
    sc.r_dl(k) = std::max(scale * std::log1p(bc.ups0(k) * bc.ups0(k) / bc.pi0(k)), 1e-9);
    sc.r_ul(k) = std::max(scale * std::log1p(bc.psi0(k) * bc.psi0(k) / bc.xi0(k)), 1e-9);
    td_u = std::max(td_u, sel.a(k) * p.s_dl_bits / (p.bandwidth_hz * sc.r_dl(k)));
    tc_u = std::max(tc_u, sel.a(k) * psi_min);
    tu_u = std::max(tu_u, sel.a(k) * p.s_ul_bits / (p.bandwidth_hz * sc.r_ul(k)));
  }
  sc.t_d = std::max(td_u, 1e-12);
  sc.t_c = std::max(tc_u, 1e-12);
  sc.t_u = std::max(tu_u, 1e-12);

  // Objective t_d + t_c + t_u in seconds, over the scaled time variables.
  prog.set_obj(L.td(), sc.t_d);
  prog.set_obj(L.tc(), sc.t_c);
  prog.set_obj(L.tu(), sc.t_u);

  // Per-AP power budgets.
  for (int i = 0; i < m; ++i) {
    conic::LinExpr e;
    for (int k = 0; k < n; ++k)
      if (active[k]) e.add(L.vt(i, k), 1.0);
    prog.add_linear(e, conic::Sense::LE, 1.0);
  }
  // Computing-time rows, linear in the substituted variable.
  for (int k = 0; k < n; ++k) {
    if (!active[k]) continue;
    conic::LinExpr e;
    e.add(L.psi(k), sel.a(k)).add(L.tc(), -sc.t_c);
    prog.add_linear(e, conic::Sense::LE, 0.0);
  }

  for (int k = 0; k < n; ++k) {
    if (!active[k]) continue;

    // Per-AP power cones sigma^2 v^2 <= vt, in w coordinates w^2 <= vt.
    for (int i = 0; i < m; ++i)
      prog.add_rotated_cone(conic::LinExpr::of(L.vt(i, k)), conic::LinExpr(0.5),
                            {conic::LinExpr::of(L.w(i, k))});

    // Uplink power u^2 <= a.
    prog.add_quadratic({conic::LinExpr::of(L.u(k))}, conic::LinExpr(-sel.a(k)));

    // Downlink rate bound rdh <= R~_d(w)/B as a convex quadratic constraint.
    {
      if (!(bc.ups0(k) > 0.0))
        throw std::invalid_argument("bound linearization needs positive downlink power for every selected UE");
      const double ups0 = bc.ups0(k), pi0 = bc.pi0(k);
      const double s0 = ups0 * ups0 / pi0;
      const double gamma = ups0 * ups0 / (pi0 * (ups0 * ups0 + pi0));
      const double c0 = std::log1p(s0) - s0;

      const double r0 = sc.r_dl(k);  // whole constraint divided by this
      std::vector<conic::LinExpr> rows;
      conic::LinExpr ups_row;  // sqrt(scale*gamma/r0) * Upsilon(w)
      const double g_amp = std::sqrt(scale * gamma / r0);
      for (int i = 0; i < m; ++i)
        ups_row.add(L.w(i, k), g_amp * sq_rho_d * std::sqrt(net.sigma2_dl(i, k)));
      rows.push_back(std::move(ups_row));
      for (const auto& [l, coeffs] : bc.pc_rows[k]) {
        if (!active[l]) continue;
        conic::LinExpr r;
        for (int i = 0; i < m; ++i)
          r.add(L.w(i, l), g_amp * coeffs(i) / std::sqrt(net.sigma2_dl(i, l)));
        rows.push_back(std::move(r));
      }
      for (int l = 0; l < n; ++l) {
        if (!active[l]) continue;
        for (int i = 0; i < m; ++i) {
          const double c2 = scale * gamma * p.rho_d * net.beta(i, k) / r0;
          rows.push_back(conic::LinExpr::of(L.w(i, l), std::sqrt(c2)));
        }
      }
      conic::LinExpr affine(-scale * (c0 - gamma) / r0);
      affine.add(L.rdh(k), 1.0);
      const double lin_amp = scale * 2.0 * ups0 / pi0 / r0;
      for (int i = 0; i < m; ++i)
        affine.add(L.w(i, k), -lin_amp * sq_rho_d * std::sqrt(net.sigma2_dl(i, k)));
      prog.add_quadratic(std::move(rows), std::move(affine));
    }

    // Uplink rate bound, diagonal quadratic in u.
    {
      if (!(bc.psi0(k) > 0.0))
        throw std::invalid_argument("bound linearization needs positive uplink power for every selected UE");
      const double psi0 = bc.psi0(k), xi0 = bc.xi0(k);
      const double s0 = psi0 * psi0 / xi0;
      const double gamma = psi0 * psi0 / (xi0 * (psi0 * psi0 + xi0));
      const double c0 = std::log1p(s0) - s0;

      const double r0 = sc.r_ul(k);
      std::vector<conic::LinExpr> rows;
      for (int l = 0; l < n; ++l) {
        if (!active[l]) continue;
        double c2 = bc.ul_quad(k, l);
        if (l == k) c2 += bc.psi_coeff(k) * bc.psi_coeff(k);  // Psi^2 term
        if (c2 > 0.0)
          rows.push_back(conic::LinExpr::of(L.u(l), std::sqrt(scale * gamma * c2 / r0)));
      }
      conic::LinExpr affine(-scale * (c0 - gamma * bc.xi_const(k)) / r0);
      affine.add(L.ruh(k), 1.0);
      affine.add(L.u(k), -scale * 2.0 * psi0 / xi0 * bc.psi_coeff(k) / r0);
      prog.add_quadratic(std::move(rows), std::move(affine));
    }

    // Hyperbolic transmission-time rows 2 t r >= 2 a S / B, in scaled units.
    prog.add_rotated_cone(
        conic::LinExpr::of(L.td()), conic::LinExpr::of(L.rdh(k)),
        {conic::LinExpr(
            std::sqrt(2.0 * sel.a(k) * p.s_dl_bits / (p.bandwidth_hz * sc.t_d * sc.r_dl(k))))});
    prog.add_rotated_cone(
        conic::LinExpr::of(L.tu()), conic::LinExpr::of(L.ruh(k)),
        {conic::LinExpr(
            std::sqrt(2.0 * sel.a(k) * p.s_ul_bits / (p.bandwidth_hz * sc.t_u * sc.r_ul(k))))});
  }

  out.stats.n_vars = prog.n;
  int linrows = static_cast<int>(prog.linear.size());
  for (int i = 0; i < prog.n; ++i) {
    if (prog.lb[i] == prog.ub[i]) continue;  // substituted, not a row
    if (prog.lb[i] != -inf) ++linrows;
    if (prog.ub[i] != inf) ++linrows;
  }
  out.stats.n_linear = linrows;
  out.stats.n_conic = static_cast<int>(prog.quads.size() + prog.rcones.size());
  return out;
}

// Algorithm: successive convex approximation on the short-term subproblem.
// Builds the concave bounds at the current iterate, solves the resulting
// SOCP, moves to its optimum, and stops on relative objective change.
inline ShortTermSolution sca_solve(const Selection& sel, const NetworkRealization& net,
                                   const SystemParams& p, const ScaOptions& opts = {}) {
  const int m = net.n_aps(), n = net.n_ues();
  if (sel.n_selected() < 1) throw std::invalid_argument("sca_solve needs at least one selected UE");

  InitialPoint ip = initial_point(sel, net, p, opts.randomized_start, opts.start_seed);
  PowerAllocation iterate = ip.alloc;

  ShortTermSolution st;
  st.alloc = ip.alloc;
  st.vtilde = ip.vtilde;
  st.r_d = ip.r_d;
  st.r_u = ip.r_u;
  st.t_d = ip.t_d;
  st.t_c = ip.t_c;
  st.t_u = ip.t_u;
  st.objective = ip.t_d + ip.t_c + ip.t_u;

  for (int outer = 0; outer < opts.max_outer; ++outer) {
    const BoundCoefficients bc = build_bounds(iterate, net, p);
    AssembledSubproblem sub = assemble_subproblem(sel, bc, net, p);
    const conic::Solution sol = conic::solve(sub.prog, opts.solver);
    if (!sol.optimal()) {
      const bool usable = sol.status == conic::SolveStatus::MaxIter &&
                          sol.kkt.worst() <= std::sqrt(opts.solver.tol);
      if (!usable)
        throw SolverFailure("short-term subproblem solve failed at outer iteration " +
                            std::to_string(outer) + ": " + sol.message);
    }
    const SubproblemLayout& L = sub.layout;

    for (int k = 0; k < n; ++k) {
      for (int i = 0; i < m; ++i) {
        const double w = std::max(0.0, sol.x(L.w(i, k)));
        st.alloc.v(i, k) = w / std::sqrt(net.sigma2_dl(i, k));
        st.vtilde(i, k) = sol.x(L.vt(i, k));
      }
      st.alloc.u(k) = std::clamp(sol.x(L.u(k)), 0.0, 1.0);
      st.alloc.f(k) = std::min(p.f_max, p.local_iters * p.samples_per_ue * p.cycles_per_sample /
                                            std::max(sol.x(L.psi(k)), 1e-300));
      st.r_d(k) = std::max(0.0, sol.x(L.rdh(k))) * sub.scales.r_dl(k) * p.bandwidth_hz;
      st.r_u(k) = std::max(0.0, sol.x(L.ruh(k))) * sub.scales.r_ul(k) * p.bandwidth_hz;
    }
    st.t_d = sol.x(L.td()) * sub.scales.t_d;
    st.t_c = sol.x(L.tc()) * sub.scales.t_c;
    st.t_u = sol.x(L.tu()) * sub.scales.t_u;
    const double obj = st.t_d + st.t_c + st.t_u;
    st.kkt = sol.kkt;
    st.outer_iters = outer + 1;

    const bool converged =
        !st.obj_trace.empty() &&
        std::abs(obj - st.obj_trace.back()) < opts.eps * std::max(1e-300, std::abs(st.obj_trace.back()));
    st.obj_trace.push_back(obj);
    st.objective = obj;
    iterate = st.alloc;
    if (converged) break;
  }

  // One-hot round-time vectors from the final epigraph rates/frequencies.
  st.onehot_dl.setZero(n);
  st.onehot_cp.setZero(n);
  st.onehot_ul.setZero(n);
  auto argmax_over = [&](auto&& per_ue) {
    int best = -1;
    double bv = 0.0;
    for (int k = 0; k < n; ++k) {
      if (!sel.selected(k)) continue;
      const double v = per_ue(k);
      if (best < 0 || v > bv) {  // strict: ties keep the lowest index
        bv = v;
        best = k;
      }
    }
    return best;
  };
  st.argmax_dl = argmax_over([&](int k) { return sel.a(k) * p.s_dl_bits / st.r_d(k); });
  st.argmax_cp = argmax_over([&](int k) { return sel.a(k) * p.compute_time_floor() * p.f_max / st.alloc.f(k); });
  st.argmax_ul = argmax_over([&](int k) { return sel.a(k) * p.s_ul_bits / st.r_u(k); });
  if (st.argmax_dl >= 0) st.onehot_dl(st.argmax_dl) = p.s_dl_bits / st.r_d(st.argmax_dl);
  if (st.argmax_cp >= 0)
    st.onehot_cp(st.argmax_cp) =
        p.local_iters * p.samples_per_ue * p.cycles_per_sample / st.alloc.f(st.argmax_cp);
  if (st.argmax_ul >= 0) st.onehot_ul(st.argmax_ul) = p.s_ul_bits / st.r_u(st.argmax_ul);
  return st;
}

}  // namespace cffl
