// SPDX-License-Identifier: Apache-2.0
//
// Lowering of a Program to the standard conic form
//   min c'x  s.t.  A x = b,  G x + s = h,  s in K = R^ml_+ x SOC(d1) x ...
// Fixed variables (lb == ub) are substituted out. Rotated cones and
// quadratic constraints become standard second-order cones through the
// usual (x+y, x-y, sqrt(2) z) map. A quadratic objective term is lowered
// via an epigraph variable and one more rotated cone.
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "cffl/conic/program.hpp"

namespace cffl::conic {

struct SparseRow {
  std::vector<LinTerm> terms;  // indices into the free-variable space
};

struct Canonical {
  int n_full = 0;               // variables of the source program (plus epigraph var if added)
  int n = 0;                    // free variables after substitution
  std::vector<int> free_index;  // full -> free index, -1 if fixed
  Eigen::VectorXd fixed_values; // full-sized; entries for free vars are 0
  bool has_obj_epigraph = false;

  Eigen::VectorXd c;
  double c0 = 0.0;

  std::vector<SparseRow> a_rows;
  Eigen::VectorXd b;

  std::vector<SparseRow> g_rows;  // s = h - G x
  Eigen::VectorXd h;
  int n_orthant = 0;
  std::vector<std::pair<int, int>> soc_blocks;  // (first row, dim)

  int m() const { return static_cast<int>(g_rows.size()); }
  int p() const { return static_cast<int>(a_rows.size()); }

  // Lift a free-space point back to the full variable vector.
  Eigen::VectorXd lift(const Eigen::VectorXd& xf) const {
    Eigen::VectorXd x = fixed_values;
    for (int i = 0; i < n_full; ++i)
      if (free_index[i] >= 0) x(i) = xf(free_index[i]);
    return x;
  }
};

namespace detail {

// Rewrite an expression over free variables; fixed variables fold into the
// constant.
inline std::pair<SparseRow, double> lower_expr(const LinExpr& e, const Canonical& can) {
  SparseRow row;
  double c = e.constant;
  for (const auto& t : e.terms) {
    const int f = can.free_index[t.var];
    if (f >= 0)
      row.terms.push_back({f, t.coeff});
    else
      c += t.coeff * can.fixed_values(t.var);
  }
  return {std::move(row), c};
}

// Append one SOC block from rotated-cone legs: rows are the affine maps of
// the slack s = (x+y, x-y, sqrt2 * z...), stored as s = h - G x.
inline void append_rsoc(Canonical& can, const LinExpr& xleg, const LinExpr& yleg,
                        const std::vector<LinExpr>& zrows, std::vector<double>& h_accum) {
  const int start = static_cast<int>(can.g_rows.size());
  auto push_slack_row = [&](const SparseRow& srow, double sconst) {
    SparseRow g;
    g.terms.reserve(srow.terms.size());
    for (const auto& t : srow.terms) g.terms.push_back({t.var, -t.coeff});
    can.g_rows.push_back(std::move(g));
    h_accum.push_back(sconst);
  };

  auto [xr, xc] = lower_expr(xleg, can);
  auto [yr, yc] = lower_expr(yleg, can);

  SparseRow sum = xr, dif = xr;
  for (const auto& t : yr.terms) {
    sum.terms.push_back(t);
    dif.terms.push_back({t.var, -t.coeff});
  }
  push_slack_row(sum, xc + yc);
  push_slack_row(dif, xc - yc);
  const double sq2 = std::sqrt(2.0);
  for (const auto& z : zrows) {
    auto [zr, zc] = lower_expr(z, can);
    for (auto& t : zr.terms) t.coeff *= sq2;
    push_slack_row(zr, sq2 * zc);
  }
  can.soc_blocks.emplace_back(start, static_cast<int>(zrows.size()) + 2);
}

}  // namespace detail

inline Canonical canonicalize(const Program& prog_in) {
  prog_in.check_indices();
  Program prog = prog_in;  // local copy; may gain an epigraph variable

  Canonical can;
  can.has_obj_epigraph = !prog.obj_quad_rows.empty();
  int epi_var = -1;
  if (can.has_obj_epigraph) {
    epi_var = prog.add_var(0.0, Program::kInf);
    prog.set_obj(epi_var, 1.0);
  }

  can.n_full = prog.n;
  can.free_index.assign(prog.n, -1);
  can.fixed_values = Eigen::VectorXd::Zero(prog.n);
  for (int i = 0; i < prog.n; ++i) {
    if (prog.lb[i] == prog.ub[i]) {
      can.fixed_values(i) = prog.lb[i];
    } else {
      can.free_index[i] = can.n++;
    }
  }

  can.c = Eigen::VectorXd::Zero(can.n);
  can.c0 = prog.obj_constant;
  for (int i = 0; i < prog.n; ++i) {
    if (can.free_index[i] >= 0)
      can.c(can.free_index[i]) = prog.obj[i];
    else
      can.c0 += prog.obj[i] * can.fixed_values(i);
  }

  std::vector<double> b_accum, h_accum;

  // Equalities
  for (const auto& lc : prog.linear) {
    if (lc.sense != Sense::EQ) continue;
    auto [row, cst] = detail::lower_expr(lc.expr, can);
    can.a_rows.push_back(std::move(row));
    b_accum.push_back(lc.rhs - cst);
  }

  // Orthant rows: general linear inequalities first, then finite bounds.
  auto push_le = [&](SparseRow row, double rhs) {  // row . x <= rhs
    can.g_rows.push_back(std::move(row));
    h_accum.push_back(rhs);
  };
  for (const auto& lc : prog.linear) {
    if (lc.sense == Sense::EQ) continue;
    auto [row, cst] = detail::lower_expr(lc.expr, can);
    if (lc.sense == Sense::LE) {
      push_le(std::move(row), lc.rhs - cst);
    } else {
      for (auto& t : row.terms) t.coeff = -t.coeff;
      push_le(std::move(row), cst - lc.rhs);
    }
  }
  for (int i = 0; i < prog.n; ++i) {
    const int f = can.free_index[i];
    if (f < 0) continue;
    if (prog.ub[i] != Program::kInf) {
      SparseRow r;
      r.terms.push_back({f, 1.0});
      push_le(std::move(r), prog.ub[i]);
    }
    if (prog.lb[i] != -Program::kInf) {
      SparseRow r;
      r.terms.push_back({f, -1.0});
      push_le(std::move(r), -prog.lb[i]);
    }
  }
  can.n_orthant = static_cast<int>(can.g_rows.size());

  // SOC blocks: quadratic constraints, rotated cones, objective epigraph.
  for (const auto& q : prog.quads)
    detail::append_rsoc(can, q.affine.negated(), LinExpr(0.5), q.factor_rows, h_accum);
  for (const auto& rc : prog.rcones) detail::append_rsoc(can, rc.xleg, rc.yleg, rc.zrows, h_accum);
  if (can.has_obj_epigraph)
    detail::append_rsoc(can, LinExpr::of(epi_var), LinExpr(0.5), prog.obj_quad_rows, h_accum);

  can.b.resize(static_cast<long>(b_accum.size()));
  for (size_t i = 0; i < b_accum.size(); ++i) can.b(static_cast<long>(i)) = b_accum[i];
  can.h.resize(static_cast<long>(h_accum.size()));
  for (size_t i = 0; i < h_accum.size(); ++i) can.h(static_cast<long>(i)) = h_accum[i];
  return can;
}

// --- residual record --------------------------------------------------------

struct KktResiduals {
  double stationarity = 0.0;  // ||c + A'y + G'z|| (scaled)
  double primal_eq = 0.0;     // ||Ax - b||
  double primal_cone = 0.0;   // worst cone violation of s = h - Gx
  double dual_cone = 0.0;     // worst cone violation of z
  double gap = 0.0;           // s'z
  double rel_gap = 0.0;

  double worst() const {
    return std::max({stationarity, primal_eq, primal_cone, dual_cone, std::abs(rel_gap)});
  }
};

namespace detail {

inline double dot_row(const SparseRow& r, const Eigen::VectorXd& x) {
  double v = 0.0;
  for (const auto& t : r.terms) v += t.coeff * x(t.var);
  return v;
}

// Distance below the cone boundary (0 when inside).
inline double cone_violation(const Canonical& can, const Eigen::VectorXd& v) {
  double worst = 0.0;
  for (int i = 0; i < can.n_orthant; ++i) worst = std::max(worst, -v(i));
  for (const auto& [start, dim] : can.soc_blocks) {
    const double head = v(start);
    const double tail = v.segment(start + 1, dim - 1).norm();
    worst = std::max(worst, tail - head);
  }
  return worst;
}

}  // namespace detail

// Diagonal (Ruiz) equilibration: column scales d_j and row scales r_i with
// one shared scale per SOC block so cone membership is preserved. Scaled
// data: G' = R G D, A' = R_a A D, h' = R h, b' = R_a b, c' = D c. The
// objective, gap and multipliers map back exactly:
//   x = D x',  s = R^-1 s',  z = R z',  y = R_a y'.
struct Equilibration {
  Eigen::VectorXd col;    // d
  Eigen::VectorXd row_g;  // r
  Eigen::VectorXd row_a;  // r_a
};

inline Equilibration equilibrate(Canonical& can, int passes = 3) {
  Equilibration eq;
  eq.col = Eigen::VectorXd::Ones(can.n);
  eq.row_g = Eigen::VectorXd::Ones(can.m());
  eq.row_a = Eigen::VectorXd::Ones(can.p());

  for (int pass = 0; pass < passes; ++pass) {
    Eigen::VectorXd cmax = Eigen::VectorXd::Zero(can.n);
    for (const auto& r : can.g_rows)
      for (const auto& t : r.terms) cmax(t.var) = std::max(cmax(t.var), std::abs(t.coeff));
    for (const auto& r : can.a_rows)
      for (const auto& t : r.terms) cmax(t.var) = std::max(cmax(t.var), std::abs(t.coeff));
    Eigen::VectorXd dc(can.n);
    for (int j = 0; j < can.n; ++j) dc(j) = cmax(j) > 0 ? 1.0 / std::sqrt(cmax(j)) : 1.0;

    auto scale_cols = [&](std::vector<SparseRow>& rows) {
      for (auto& r : rows)
        for (auto& t : r.terms) t.coeff *= dc(t.var);
    };
    scale_cols(can.g_rows);
    scale_cols(can.a_rows);
    eq.col = eq.col.cwiseProduct(dc);

    auto row_norm = [&](const SparseRow& r) {
      double v = 0.0;
      for (const auto& t : r.terms) v = std::max(v, std::abs(t.coeff));
      return v;
    };
    Eigen::VectorXd rg = Eigen::VectorXd::Ones(can.m());
    for (int i = 0; i < can.n_orthant; ++i) {
      const double nrm = row_norm(can.g_rows[i]);
      if (nrm > 0) rg(i) = 1.0 / std::sqrt(nrm);
    }
    for (const auto& [start, dim] : can.soc_blocks) {
      double nrm = 0.0;
      for (int r = 0; r < dim; ++r) nrm = std::max(nrm, row_norm(can.g_rows[start + r]));
      if (nrm > 0)
        for (int r = 0; r < dim; ++r) rg(start + r) = 1.0 / std::sqrt(nrm);
    }
    for (int i = 0; i < can.m(); ++i) {
      for (auto& t : can.g_rows[i].terms) t.coeff *= rg(i);
      can.h(i) *= rg(i);
    }
    eq.row_g = eq.row_g.cwiseProduct(rg);

    for (int i = 0; i < can.p(); ++i) {
      const double nrm = row_norm(can.a_rows[i]);
      const double ra = nrm > 0 ? 1.0 / std::sqrt(nrm) : 1.0;
      for (auto& t : can.a_rows[i].terms) t.coeff *= ra;
      can.b(i) *= ra;
      eq.row_a(i) *= ra;
    }
  }
  for (int j = 0; j < can.n; ++j) can.c(j) *= eq.col(j);
  return eq;
}

// Residuals of a primal/dual pair for the canonical form; the `x` here is
// the free-variable vector.
inline KktResiduals kkt_residuals(const Canonical& can, const Eigen::VectorXd& x,
                                  const Eigen::VectorXd& y, const Eigen::VectorXd& z) {
  KktResiduals r;
  Eigen::VectorXd rx = can.c;
  for (int i = 0; i < can.p(); ++i)
    for (const auto& t : can.a_rows[i].terms) rx(t.var) += t.coeff * y(i);
  for (int i = 0; i < can.m(); ++i)
    for (const auto& t : can.g_rows[i].terms) rx(t.var) += t.coeff * z(i);
  const double cs = std::max(1.0, can.c.norm());
  r.stationarity = rx.norm() / cs;

  if (can.p() > 0) {
    Eigen::VectorXd ra(can.p());
    for (int i = 0; i < can.p(); ++i) ra(i) = detail::dot_row(can.a_rows[i], x) - can.b(i);
    r.primal_eq = ra.norm() / std::max(1.0, can.b.norm());
  }

  Eigen::VectorXd s(can.m());
  for (int i = 0; i < can.m(); ++i) s(i) = can.h(i) - detail::dot_row(can.g_rows[i], x);
  r.primal_cone = detail::cone_violation(can, s);
  r.dual_cone = detail::cone_violation(can, z);
  r.gap = s.dot(z);
  const double pcost = can.c.dot(x);
  r.rel_gap = r.gap / std::max(1.0, std::abs(pcost));
  return r;
}

}  // namespace cffl::conic
