// SPDX-License-Identifier: Apache-2.0
//
// Canonical convex-program container shared by both timescales: linear
// objective (optionally plus a convex sum-of-squares term), linear
// constraints, convex quadratic constraints ||Fx+g||^2 + c'x + d <= 0 and
// rotated second-order cones 2xy >= ||z||^2 with affine legs.
#pragma once

#include <Eigen/Dense>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace cffl::conic {

struct LinTerm {
  int var;
  double coeff;
};

// Affine expression sum_i coeff_i x_i + constant.
struct LinExpr {
  std::vector<LinTerm> terms;
  double constant = 0.0;

  LinExpr() = default;
  explicit LinExpr(double c) : constant(c) {}

  static LinExpr of(int var, double coeff = 1.0, double c = 0.0) {
    LinExpr e(c);
    e.terms.push_back({var, coeff});
    return e;
  }

  LinExpr& add(int var, double coeff) {
    if (coeff != 0.0) terms.push_back({var, coeff});
    return *this;
  }

  double eval(const Eigen::VectorXd& x) const {
    double v = constant;
    for (const auto& t : terms) v += t.coeff * x(t.var);
    return v;
  }

  LinExpr negated() const {
    LinExpr e(-constant);
    e.terms.reserve(terms.size());
    for (const auto& t : terms) e.terms.push_back({t.var, -t.coeff});
    return e;
  }
};

enum class Sense { LE, GE, EQ };

struct LinearConstraint {
  LinExpr expr;
  Sense sense = Sense::LE;
  double rhs = 0.0;
};

// 2 * xleg * yleg >= ||z||^2, xleg >= 0, yleg >= 0.
struct RotatedCone {
  LinExpr xleg, yleg;
  std::vector<LinExpr> zrows;
};

// ||rows||^2 + affine <= 0 with the implied PSD quadratic form F^T F.
struct QuadConstraint {
  std::vector<LinExpr> factor_rows;
  LinExpr affine;
};

struct Program {
  int n = 0;
  std::vector<double> obj;      // linear objective coefficients
  double obj_constant = 0.0;
  std::vector<LinExpr> obj_quad_rows;  // sum of squared rows added to the objective
  std::vector<double> lb, ub;
  std::vector<LinearConstraint> linear;
  std::vector<QuadConstraint> quads;
  std::vector<RotatedCone> rcones;

  static constexpr double kInf = std::numeric_limits<double>::infinity();

  int add_var(double lo = -kInf, double hi = kInf) {
    lb.push_back(lo);
    ub.push_back(hi);
    obj.push_back(0.0);
    return n++;
  }

  void fix_var(int var, double value) {
    lb[var] = value;
    ub[var] = value;
  }

  void set_obj(int var, double coeff) { obj[var] = coeff; }

  void add_linear(LinExpr expr, Sense sense, double rhs) {
    linear.push_back({std::move(expr), sense, rhs});
  }

  void add_rotated_cone(LinExpr x, LinExpr y, std::vector<LinExpr> z) {
    rcones.push_back({std::move(x), std::move(y), std::move(z)});
  }

  void add_quadratic(std::vector<LinExpr> rows, LinExpr affine) {
    quads.push_back({std::move(rows), std::move(affine)});
  }

  double objective_value(const Eigen::VectorXd& x) const {
    double v = obj_constant;
    for (int i = 0; i < n; ++i) v += obj[i] * x(i);
    for (const auto& r : obj_quad_rows) {
      const double e = r.eval(x);
      v += e * e;
    }
    return v;
  }

  void check_indices() const {
    auto chk = [&](const LinExpr& e) {
      for (const auto& t : e.terms)
        if (t.var < 0 || t.var >= n) throw std::out_of_range("variable index out of range");
    };
    for (const auto& lc : linear) chk(lc.expr);
    for (const auto& q : quads) {
      chk(q.affine);
      for (const auto& r : q.factor_rows) chk(r);
    }
    for (const auto& rc : rcones) {
      chk(rc.xleg);
      chk(rc.yleg);
      for (const auto& r : rc.zrows) chk(r);
    }
    for (const auto& r : obj_quad_rows) chk(r);
  }

  // Plain-text listing for debugging.
  void dump(std::ostream& os) const {
    auto expr_str = [](const LinExpr& e) {
      std::string s;
      for (const auto& t : e.terms) {
        if (!s.empty()) s += " ";
        s += (t.coeff >= 0 ? "+" : "-") + std::to_string(std::abs(t.coeff)) + "*x" + std::to_string(t.var);
      }
      if (e.constant != 0.0 || e.terms.empty())
        s += std::string(s.empty() ? "" : " ") + (e.constant >= 0 ? "+" : "-") +
             std::to_string(std::abs(e.constant));
      return s;
    };
    os << "vars " << n << "\nmin ";
    for (int i = 0; i < n; ++i)
      if (obj[i] != 0.0) os << (obj[i] >= 0 ? "+" : "") << obj[i] << "*x" << i << " ";
    if (!obj_quad_rows.empty()) os << " + sum of " << obj_quad_rows.size() << " squared rows";
    os << "\n";
    for (int i = 0; i < n; ++i)
      if (lb[i] != -kInf || ub[i] != kInf) os << "  " << lb[i] << " <= x" << i << " <= " << ub[i] << "\n";
    for (const auto& lc : linear) {
      const char* s = lc.sense == Sense::LE ? "<=" : (lc.sense == Sense::GE ? ">=" : "==");
      os << "  " << expr_str(lc.expr) << " " << s << " " << lc.rhs << "\n";
    }
    for (const auto& q : quads)
      os << "  ||F x||^2 (" << q.factor_rows.size() << " rows) + " << expr_str(q.affine) << " <= 0\n";
    for (const auto& rc : rcones)
      os << "  2*(" << expr_str(rc.xleg) << ")*(" << expr_str(rc.yleg) << ") >= ||z||^2 ("
         << rc.zrows.size() << " rows)\n";
  }
};

}  // namespace cffl::conic
