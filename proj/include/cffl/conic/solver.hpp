// SPDX-License-Identifier: Apache-2.0
//
// Primal-dual interior-point solver for the canonical form
//   min c'x  s.t.  Ax = b,  Gx + s = h,  s in K = R^ml_+ x SOC x ...
// Mehrotra predictor-corrector with Nesterov-Todd scaling and an
// infeasible start. Search directions come from the reduced system
//   [ G'W^-2 G   A' ] [dx]   [rhs_x]
//   [ A          0  ] [dy] = [rhs_y]
// assembled densely. For a second-order-cone block W^-2 is a rank-one
// update of a cached constant matrix,
//   W^-2 = (1/eta^2) (2 v v' - J),   v = J wbar,
// so per-iteration assembly touches each block once: its Gram matrix
// G_b' J G_b never changes and is precomputed.
//
// Deterministic by construction: fixed orderings, no pivoting heuristics.
#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <unordered_map>
#include <vector>

#include "cffl/conic/canonical.hpp"
#include "cffl/conic/program.hpp"

namespace cffl::conic {

enum class SolveStatus { Optimal, Infeasible, MaxIter, NumError };

struct SolverOptions {
  double tol = 1e-7;       // feasibility and relative-gap tolerance
  int max_iter = 200;
  double reg = 1e-11;      // static regularization added to the Schur matrix
  bool verbose = false;
};

struct Solution {
  SolveStatus status = SolveStatus::NumError;
  Eigen::VectorXd x;   // full variable vector of the source program
  double obj = std::numeric_limits<double>::quiet_NaN();
  KktResiduals kkt;
  int iters = 0;
  std::string message;

  // Canonical-form certificates, kept so callers can re-verify optimality
  // independently of this solver.
  Eigen::VectorXd x_free, y, z, s;

  bool optimal() const { return status == SolveStatus::Optimal; }
};

namespace ipm_detail {

struct Triplet {
  int i, j;
  double v;
};

// Per-block Nesterov-Todd scaling state.
struct SocScaling {
  double eta = 1.0;               // W = eta * T(wbar)
  Eigen::VectorXd wbar;           // unit hyperbolic vector
  Eigen::VectorXd vbar;           // J wbar
  Eigen::VectorXd lambda;         // scaled point W z = W^-1 s
};

inline double jnorm2(const Eigen::VectorXd& u) {  // u0^2 - ||u1||^2
  return u(0) * u(0) - u.tail(u.size() - 1).squaredNorm();
}

// y = T(w) u  with  T(w) = [w0 w1'; w1 I + w1 w1'/(1+w0)]
inline Eigen::VectorXd t_apply(const Eigen::VectorXd& w, const Eigen::VectorXd& u) {
  const long d = u.size();
  Eigen::VectorXd y(d);
  const double w0 = w(0);
  const auto w1 = w.tail(d - 1);
  const auto u1 = u.tail(d - 1);
  const double w1u1 = w1.dot(u1);
  y(0) = w0 * u(0) + w1u1;
  y.tail(d - 1) = u1 + (u(0) + w1u1 / (1.0 + w0)) * w1;
  return y;
}

class Solver {
 public:
  Solver(const Canonical& can, const SolverOptions& opt) : can_(can), opt_(opt) {
    n_ = can.n;
    m_ = can.m();
    p_ = can.p();
    ml_ = can.n_orthant;
    nu_ = ml_ + static_cast<int>(can.soc_blocks.size());
    precompute();
  }

  Solution run() {
    Solution sol;
    if (m_ == 0) {
      sol.message = "program has no inequality or cone constraints";
      return sol;
    }
    if (!initialize(sol)) return sol;

    const double tol = opt_.tol;
    Eigen::VectorXd rx(n_), ry(p_), rz(m_);
    Eigen::VectorXd ds(m_), dz(m_), dx(n_), dy(p_);
    Eigen::VectorXd ds_a(m_), dz_a(m_);
    Eigen::VectorXd bs(m_), us(m_), rhs3(m_);

    double best_worst = std::numeric_limits<double>::infinity();
    Eigen::VectorXd bx_ = x_, by_ = y_, bz_ = z_, bs_ = s_;

    for (int iter = 0; iter <= opt_.max_iter; ++iter) {
      // Residuals of the non-homogeneous KKT system.
      rx = can_.c + gt_mul(z_) + at_mul(y_);
      for (int i = 0; i < p_; ++i) ry(i) = row_dot(can_.a_rows[i], x_) - can_.b(i);
      for (int i = 0; i < m_; ++i) rz(i) = row_dot(can_.g_rows[i], x_) + s_(i) - can_.h(i);

      const double gap = s_.dot(z_);
      const double pcost = can_.c.dot(x_);
      const double dcost = -(p_ ? can_.b.dot(y_) : 0.0) - can_.h.dot(z_);
      const double pres = std::max(p_ ? ry.norm() / std::max(1.0, can_.b.norm()) : 0.0,
                                   rz.norm() / std::max(1.0, can_.h.norm()));
      const double dres = rx.norm() / std::max(1.0, can_.c.norm());
      const double relgap = std::abs(pcost - dcost) / std::max(1.0, std::abs(pcost));

      if (opt_.verbose)
        std::fprintf(stderr, "it %3d  pcost % .6e  gap %.3e  pres %.3e  dres %.3e  alpha %.3f\n",
                     iter, pcost, gap, pres, dres, last_alpha_);

      if (pres <= tol && dres <= tol && (relgap <= tol || gap <= tol)) {
        finish(sol, SolveStatus::Optimal, iter, "optimal");
        return sol;
      }
      const double worst = std::max({pres, dres, relgap});
      if (worst < best_worst) {
        best_worst = worst;
        bx_ = x_;
        by_ = y_;
        bz_ = z_;
        bs_ = s_;
      }

      // Infeasibility certificates.
      const double hzby = can_.h.dot(z_) + (p_ ? can_.b.dot(y_) : 0.0);
      if (hzby < 0.0) {
        Eigen::VectorXd cert = gt_mul(z_) + at_mul(y_);
        if (cert.norm() / (-hzby) <= tol * 1e-2 && dual_cone_margin(z_) >= -1e-9) {
          finish(sol, SolveStatus::Infeasible, iter, "primal infeasible certificate");
          return sol;
        }
      }
      if (pcost < 0.0) {
        Eigen::VectorXd gx(m_);
        for (int i = 0; i < m_; ++i) gx(i) = row_dot(can_.g_rows[i], x_) + s_(i);
        double an = 0.0;
        for (int i = 0; i < p_; ++i) an += std::pow(row_dot(can_.a_rows[i], x_), 2);
        if (gx.norm() / (-pcost) <= tol * 1e-2 && std::sqrt(an) / (-pcost) <= tol * 1e-2) {
          finish(sol, SolveStatus::Infeasible, iter, "dual infeasible certificate (unbounded)");
          return sol;
        }
      }
      if (iter == opt_.max_iter) break;

      if (!compute_scaling()) {
        restore(bx_, by_, bz_, bs_);
        finish(sol, SolveStatus::NumError, iter, "iterate left the cone interior");
        return sol;
      }
      if (!assemble_and_factor()) {
        restore(bx_, by_, bz_, bs_);
        finish(sol, SolveStatus::NumError, iter, "KKT factorization failed");
        return sol;
      }

      const double mu = gap / nu_;

      // Affine (predictor) direction: bs = lambda o lambda, W'(lambda \ bs) = s.
      rhs3 = -rz + s_;
      solve_reduced(-rx, -ry, rhs3, dx, dy, dz);
      for (int i = 0; i < m_; ++i) ds(i) = -s_(i);
      ds -= w2_apply(dz);

      const double a_aff = std::min({max_step(s_, ds), max_step(z_, dz), 1.0});
      ds_a = ds;
      dz_a = dz;
      double rho = (s_ + a_aff * ds).dot(z_ + a_aff * dz) / gap;
      double sigma = std::pow(std::clamp(rho, 0.0, 1.0), 3.0);
      // Keep the target gap from overshooting far below the stopping
      // threshold: the Schur system's conditioning grows like 1/mu^2 and
      // digits lost there never come back.
      const double gap_floor =
          0.3 * tol * std::max({1.0, std::abs(pcost), std::abs(dcost)});
      if (sigma * gap < gap_floor) sigma = std::min(1.0, gap_floor / gap);

      // Combined (corrector) direction.
      bs = jordan_lsq();                        // lambda o lambda
      bs += jordan_prod(winv_apply(ds_a), w_apply(dz_a));
      add_scaled_identity(bs, -sigma * mu);
      us = lambda_div(bs);
      rhs3 = -rz + wt_apply(us);
      solve_reduced(-rx, -ry, rhs3, dx, dy, dz);
      ds = -wt_apply(us) - w2_apply(dz);

      double alpha = 0.99 * std::min(max_step(s_, ds), max_step(z_, dz));
      alpha = std::min(alpha, 1.0);
      if (!(alpha > 1e-12)) {
        restore(bx_, by_, bz_, bs_);
        finish(sol, SolveStatus::NumError, iter, "step length collapsed");
        return sol;
      }

      x_ += alpha * dx;
      if (p_) y_ += alpha * dy;
      z_ += alpha * dz;
      s_ += alpha * ds;
      last_alpha_ = alpha;
    }

    restore(bx_, by_, bz_, bs_);
    finish(sol, SolveStatus::MaxIter, opt_.max_iter,
           "iteration limit reached (best residual " + std::to_string(best_worst) + ")");
    return sol;
  }

  void restore(const Eigen::VectorXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& z,
               const Eigen::VectorXd& s) {
    x_ = x;
    y_ = y;
    z_ = z;
    s_ = s;
  }

 private:
  // --- sparse helpers -------------------------------------------------------

  static double row_dot(const SparseRow& r, const Eigen::VectorXd& x) {
    double v = 0.0;
    for (const auto& t : r.terms) v += t.coeff * x(t.var);
    return v;
  }

  Eigen::VectorXd gt_mul(const Eigen::VectorXd& z) const {  // G' z
    Eigen::VectorXd out = Eigen::VectorXd::Zero(n_);
    for (int i = 0; i < m_; ++i)
      for (const auto& t : can_.g_rows[i].terms) out(t.var) += t.coeff * z(i);
    return out;
  }

  Eigen::VectorXd at_mul(const Eigen::VectorXd& y) const {  // A' y
    Eigen::VectorXd out = Eigen::VectorXd::Zero(n_);
    for (int i = 0; i < p_; ++i)
      for (const auto& t : can_.a_rows[i].terms) out(t.var) += t.coeff * y(i);
    return out;
  }

  void precompute() {
    // Per-block constant Gram pieces G_b' J G_b, stored as upper triplets.
    block_gram_j_.clear();
    for (const auto& [start, dim] : can_.soc_blocks) {
      std::vector<Triplet> tri;
      std::unordered_map<long long, double> acc;
      auto add_outer = [&](const SparseRow& r, double sign) {
        for (size_t a = 0; a < r.terms.size(); ++a)
          for (size_t b = 0; b < r.terms.size(); ++b) {
            int i = r.terms[a].var, j = r.terms[b].var;
            if (i > j) continue;
            const double v = sign * r.terms[a].coeff * r.terms[b].coeff;
            acc[static_cast<long long>(i) * n_ + j] += v;
          }
      };
      add_outer(can_.g_rows[start], 1.0);
      for (int r = 1; r < dim; ++r) add_outer(can_.g_rows[start + r], -1.0);
      tri.reserve(acc.size());
      for (const auto& [key, v] : acc)
        tri.push_back({static_cast<int>(key / n_), static_cast<int>(key % n_), v});
      std::sort(tri.begin(), tri.end(), [](const Triplet& a, const Triplet& b) {
        return a.i != b.i ? a.i < b.i : a.j < b.j;
      });
      block_gram_j_.push_back(std::move(tri));
    }

    if (p_ > 0) {
      a_dense_.setZero(p_, n_);
      for (int i = 0; i < p_; ++i)
        for (const auto& t : can_.a_rows[i].terms) a_dense_(i, t.var) += t.coeff;
    }
    s_mat_.resize(n_, n_);
    scalings_.resize(can_.soc_blocks.size());
  }

  // --- scaling --------------------------------------------------------------

  bool compute_scaling() {
    d_orth_.resize(ml_);
    w_orth_.resize(ml_);
    lam_orth_.resize(ml_);
    for (int i = 0; i < ml_; ++i) {
      if (!(s_(i) > 0.0) || !(z_(i) > 0.0)) return false;
      d_orth_(i) = z_(i) / s_(i);
      w_orth_(i) = std::sqrt(s_(i) / z_(i));
      lam_orth_(i) = std::sqrt(s_(i) * z_(i));
    }
    for (size_t bidx = 0; bidx < can_.soc_blocks.size(); ++bidx) {
      const auto [start, dim] = can_.soc_blocks[bidx];
      const auto s = s_.segment(start, dim);
      const auto z = z_.segment(start, dim);
      const double js = jnorm2(s), jz = jnorm2(z);
      if (!(js > 0.0) || !(jz > 0.0) || !(s(0) > 0.0) || !(z(0) > 0.0)) return false;
      const double aa = std::sqrt(js), bb = std::sqrt(jz);
      SocScaling& sc = scalings_[bidx];
      Eigen::VectorXd sb = s / aa, zb = z / bb;
      const double gamma = std::sqrt((1.0 + sb.dot(zb)) / 2.0);
      sc.wbar.resize(dim);
      sc.wbar(0) = (sb(0) + zb(0)) / (2.0 * gamma);
      sc.wbar.tail(dim - 1) = (sb.tail(dim - 1) - zb.tail(dim - 1)) / (2.0 * gamma);
      sc.vbar = sc.wbar;
      sc.vbar.tail(dim - 1) = -sc.wbar.tail(dim - 1);
      sc.eta = std::sqrt(aa / bb);
      sc.lambda = sc.eta * t_apply(sc.wbar, z);
    }
    return true;
  }

  // --- scaled-space maps over the whole cone --------------------------------

  Eigen::VectorXd w_apply(const Eigen::VectorXd& u) const {
    Eigen::VectorXd out(m_);
    for (int i = 0; i < ml_; ++i) out(i) = w_orth_(i) * u(i);
    for (size_t b = 0; b < scalings_.size(); ++b) {
      const auto [start, dim] = can_.soc_blocks[b];
      out.segment(start, dim) = scalings_[b].eta * t_apply(scalings_[b].wbar, u.segment(start, dim));
    }
    return out;
  }
  Eigen::VectorXd wt_apply(const Eigen::VectorXd& u) const { return w_apply(u); }  // W symmetric

  Eigen::VectorXd winv_apply(const Eigen::VectorXd& u) const {
    Eigen::VectorXd out(m_);
    for (int i = 0; i < ml_; ++i) out(i) = u(i) / w_orth_(i);
    for (size_t b = 0; b < scalings_.size(); ++b) {
      const auto [start, dim] = can_.soc_blocks[b];
      out.segment(start, dim) =
          t_apply(scalings_[b].vbar, u.segment(start, dim)) / scalings_[b].eta;
    }
    return out;
  }

  Eigen::VectorXd w2_apply(const Eigen::VectorXd& u) const {  // W'W u
    Eigen::VectorXd out(m_);
    for (int i = 0; i < ml_; ++i) out(i) = u(i) / d_orth_(i);
    for (size_t b = 0; b < scalings_.size(); ++b) {
      const auto [start, dim] = can_.soc_blocks[b];
      const auto& w = scalings_[b].wbar;
      const auto ub = u.segment(start, dim);
      Eigen::VectorXd ju = ub;
      ju.tail(dim - 1) = -ub.tail(dim - 1);
      out.segment(start, dim) =
          scalings_[b].eta * scalings_[b].eta * (2.0 * w.dot(ub) * w - ju);
    }
    return out;
  }

  // lambda o lambda
  Eigen::VectorXd jordan_lsq() const {
    Eigen::VectorXd out(m_);
    for (int i = 0; i < ml_; ++i) out(i) = lam_orth_(i) * lam_orth_(i);
    for (size_t b = 0; b < scalings_.size(); ++b) {
      const auto [start, dim] = can_.soc_blocks[b];
      const auto& l = scalings_[b].lambda;
      out(start) = l.squaredNorm();
      out.segment(start + 1, dim - 1) = 2.0 * l(0) * l.tail(dim - 1);
    }
    return out;
  }

  Eigen::VectorXd jordan_prod(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const {
    Eigen::VectorXd out(m_);
    for (int i = 0; i < ml_; ++i) out(i) = a(i) * b(i);
    for (const auto& [start, dim] : can_.soc_blocks) {
      const auto a1 = a.segment(start, dim), b1 = b.segment(start, dim);
      out(start) = a1.dot(b1);
      out.segment(start + 1, dim - 1) =
          a1(0) * b1.tail(dim - 1) + b1(0) * a1.tail(dim - 1);
    }
    return out;
  }

  void add_scaled_identity(Eigen::VectorXd& v, double c) const {  // v += c * e
    for (int i = 0; i < ml_; ++i) v(i) += c;
    for (const auto& [start, dim] : can_.soc_blocks) v(start) += c;
  }

  Eigen::VectorXd lambda_div(const Eigen::VectorXd& b) const {  // lambda \ b
    Eigen::VectorXd out(m_);
    for (int i = 0; i < ml_; ++i) out(i) = b(i) / lam_orth_(i);
    for (size_t k = 0; k < scalings_.size(); ++k) {
      const auto [start, dim] = can_.soc_blocks[k];
      const auto& l = scalings_[k].lambda;
      const auto b1 = b.segment(start + 1, dim - 1);
      const double det = l(0) * l(0) - l.tail(dim - 1).squaredNorm();
      const double u0 = (l(0) * b(start) - l.tail(dim - 1).dot(b1)) / det;
      out(start) = u0;
      out.segment(start + 1, dim - 1) = (b1 - u0 * l.tail(dim - 1)) / l(0);
    }
    return out;
  }

  double dual_cone_margin(const Eigen::VectorXd& z) const {
    double margin = std::numeric_limits<double>::infinity();
    for (int i = 0; i < ml_; ++i) margin = std::min(margin, z(i));
    for (const auto& [start, dim] : can_.soc_blocks)
      margin = std::min(margin, z(start) - z.segment(start + 1, dim - 1).norm());
    return margin;
  }

  // Largest alpha with u + alpha du staying in the cone.
  double max_step(const Eigen::VectorXd& u, const Eigen::VectorXd& du) const {
    double alpha = std::numeric_limits<double>::infinity();
    for (int i = 0; i < ml_; ++i)
      if (du(i) < 0.0) alpha = std::min(alpha, -u(i) / du(i));
    for (const auto& [start, dim] : can_.soc_blocks) {
      const auto u0 = u(start);
      const auto du0 = du(start);
      const auto u1 = u.segment(start + 1, dim - 1);
      const auto du1 = du.segment(start + 1, dim - 1);
      const double a = du0 * du0 - du1.squaredNorm();
      const double b = 2.0 * (u0 * du0 - u1.dot(du1));
      const double c = u0 * u0 - u1.squaredNorm();
      double bound = std::numeric_limits<double>::infinity();
      const double disc = b * b - 4.0 * a * c;
      if (std::abs(a) < 1e-300) {
        if (b < 0.0) bound = -c / b;
      } else if (disc >= 0.0) {
        const double sq = std::sqrt(disc);
        const double q = -0.5 * (b + (b >= 0 ? sq : -sq));
        for (double r : {q / a, (q != 0.0 ? c / q : std::numeric_limits<double>::infinity())})
          if (r > 0.0) bound = std::min(bound, r);
      }
      if (du0 < 0.0) bound = std::min(bound, -u0 / du0);
      alpha = std::min(alpha, bound);
    }
    return alpha;
  }

  // --- KKT assembly and solves ----------------------------------------------

  bool assemble_and_factor() {
    Eigen::MatrixXd& S = s_mat_;
    S.setZero();

    // Orthant rows: S += d_i g_i g_i'
    for (int i = 0; i < ml_; ++i) {
      const auto& terms = can_.g_rows[i].terms;
      const double d = d_orth_(i);
      for (size_t a = 0; a < terms.size(); ++a)
        for (size_t b = 0; b < terms.size(); ++b) {
          if (terms[a].var > terms[b].var) continue;
          S(terms[a].var, terms[b].var) += d * terms[a].coeff * terms[b].coeff;
        }
    }

    // SOC blocks: S += (1/eta^2) (2 pp' - GramJ), p = G_b' vbar.
    int n_big = 0;
    for (size_t bi = 0; bi < can_.soc_blocks.size(); ++bi)
      if (can_.soc_blocks[bi].second > kSmallBlock) ++n_big;
    big_mat_.resize(n_, n_big);
    int big_col = 0;

    Eigen::VectorXd pvec = Eigen::VectorXd::Zero(n_);
    std::vector<int> touched;
    for (size_t bi = 0; bi < can_.soc_blocks.size(); ++bi) {
      const auto [start, dim] = can_.soc_blocks[bi];
      const double inv_eta2 = 1.0 / (scalings_[bi].eta * scalings_[bi].eta);

      for (const auto& t : block_gram_j_[bi]) S(t.i, t.j) -= inv_eta2 * t.v;

      touched.clear();
      for (int r = 0; r < dim; ++r) {
        const double vb = scalings_[bi].vbar(r);
        for (const auto& t : can_.g_rows[start + r].terms) {
          if (pvec(t.var) == 0.0) touched.push_back(t.var);
          pvec(t.var) += vb * t.coeff;
        }
      }
      if (dim > kSmallBlock) {
        const double sc = std::sqrt(2.0 * inv_eta2);
        big_mat_.col(big_col).setZero();
        for (int v : touched) big_mat_(v, big_col) = sc * pvec(v);
        ++big_col;
      } else {
        const double sc = 2.0 * inv_eta2;
        for (int a : touched)
          for (int b : touched)
            if (a <= b) S(a, b) += sc * pvec(a) * pvec(b);
      }
      for (int v : touched) pvec(v) = 0.0;
    }

    S.diagonal().array() += reg_;
    S.triangularView<Eigen::StrictlyLower>() = S.triangularView<Eigen::StrictlyUpper>().transpose();
    if (big_col > 0) S.selfadjointView<Eigen::Lower>().rankUpdate(big_mat_.leftCols(big_col), 1.0);

    llt_.compute(S);  // LLT reads the lower triangle, which is complete
    int tries = 0;
    while (llt_.info() != Eigen::Success && tries++ < 4) {
      reg_ *= 100.0;
      S.diagonal().array() += reg_;
      llt_.compute(S);
    }
    if (llt_.info() != Eigen::Success) return false;

    if (p_ > 0) {
      // Dense Schur complement over the equality multipliers.
      Eigen::MatrixXd sa = llt_.solve(a_dense_.transpose());
      asa_ = a_dense_ * sa;
      asa_.diagonal().array() += reg_;
      llt_eq_.compute(asa_);
      if (llt_eq_.info() != Eigen::Success) return false;
    }
    return true;
  }

  // One pass through the factored Schur system.
  void schur_solve(const Eigen::VectorXd& bx, const Eigen::VectorXd& by, Eigen::VectorXd& dx,
                   Eigen::VectorXd& dy) {
    if (p_ == 0) {
      dx = llt_.solve(bx);
      Eigen::VectorXd r = bx - s_mat_.selfadjointView<Eigen::Lower>() * dx;
      dx += llt_.solve(r);
    } else {
      Eigen::VectorXd sb = llt_.solve(bx);
      dy = llt_eq_.solve(a_dense_ * sb - by);
      dx = llt_.solve(bx - a_dense_.transpose() * dy);
    }
  }

  // Solve the 3x3 KKT system
  //   [0 A' G'; A 0 0; G 0 -W'W] (dx,dy,dz) = (bx,by,bz)
  // via the Schur reduction, then refine against the full system: the
  // scaling becomes extremely ill-conditioned near the solution and the raw
  // reduced solve alone loses the last digits the stopping test needs.
  void solve_reduced(const Eigen::VectorXd& bx, const Eigen::VectorXd& by,
                     const Eigen::VectorXd& bz, Eigen::VectorXd& dx, Eigen::VectorXd& dy,
                     Eigen::VectorXd& dz) {
    Eigen::VectorXd rhs = bx + gt_mul(winv2_times(bz));
    schur_solve(rhs, by, dx, dy);
    Eigen::VectorXd gx(m_);
    for (int i = 0; i < m_; ++i) gx(i) = row_dot(can_.g_rows[i], dx) - bz(i);
    dz = winv2_times(gx);

    Eigen::VectorXd ddx(n_), ddy(p_), ddz(m_);
    for (int pass = 0; pass < 2; ++pass) {
      Eigen::VectorXd r1 = bx - at_mul(dy) - gt_mul(dz);
      Eigen::VectorXd r2(p_);
      for (int i = 0; i < p_; ++i) r2(i) = by(i) - row_dot(can_.a_rows[i], dx);
      Eigen::VectorXd r3(m_);
      for (int i = 0; i < m_; ++i) r3(i) = bz(i) - row_dot(can_.g_rows[i], dx);
      r3 += w2_apply(dz);
      const double rn = std::max({r1.lpNorm<Eigen::Infinity>(),
                                  p_ ? r2.lpNorm<Eigen::Infinity>() : 0.0,
                                  r3.lpNorm<Eigen::Infinity>()});
      if (rn < 1e-13) break;
      Eigen::VectorXd e_bx = r1 + gt_mul(winv2_times(r3));
      schur_solve(e_bx, r2, ddx, ddy);
      Eigen::VectorXd gxx(m_);
      for (int i = 0; i < m_; ++i) gxx(i) = row_dot(can_.g_rows[i], ddx) - r3(i);
      ddz = winv2_times(gxx);
      dx += ddx;
      if (p_) dy += ddy;
      dz += ddz;
    }
  }

  // W^-2 u
  Eigen::VectorXd winv2_times(const Eigen::VectorXd& u) const {
    Eigen::VectorXd out(m_);
    for (int i = 0; i < ml_; ++i) out(i) = d_orth_(i) * u(i);
    for (size_t b = 0; b < scalings_.size(); ++b) {
      const auto [start, dim] = can_.soc_blocks[b];
      const auto& v = scalings_[b].vbar;
      const auto ub = u.segment(start, dim);
      Eigen::VectorXd ju = ub;
      ju.tail(dim - 1) = -ub.tail(dim - 1);
      out.segment(start, dim) =
          (2.0 * v.dot(ub) * v - ju) / (scalings_[b].eta * scalings_[b].eta);
    }
    return out;
  }

  // --- start and finish ------------------------------------------------------

  bool initialize(Solution& sol) {
    x_.setZero(n_);
    y_.setZero(p_);
    s_.resize(m_);
    z_.resize(m_);
    reg_ = opt_.reg;

    // Identity scaling: d=1 for orthant rows, eta=1, wbar=e for blocks.
    d_orth_ = Eigen::VectorXd::Ones(ml_);
    w_orth_ = Eigen::VectorXd::Ones(ml_);
    lam_orth_ = Eigen::VectorXd::Ones(ml_);
    for (size_t b = 0; b < can_.soc_blocks.size(); ++b) {
      const int dim = can_.soc_blocks[b].second;
      scalings_[b].eta = 1.0;
      scalings_[b].wbar = Eigen::VectorXd::Zero(dim);
      scalings_[b].wbar(0) = 1.0;
      scalings_[b].vbar = scalings_[b].wbar;
      scalings_[b].lambda = Eigen::VectorXd::Zero(dim);
    }
    if (!assemble_and_factor()) {
      sol.status = SolveStatus::NumError;
      sol.message = "initial factorization failed";
      return false;
    }

    // Primal start: argmin ||h - Gx|| s.t. Ax = b, nudged into the cone.
    Eigen::VectorXd dz_dummy(m_), dy(p_), x0(n_);
    solve_reduced(Eigen::VectorXd::Zero(n_), can_.b, can_.h, x0, dy, dz_dummy);
    x_ = x0;
    for (int i = 0; i < m_; ++i) s_(i) = can_.h(i) - row_dot(can_.g_rows[i], x_);
    nudge_into_cone(s_);

    // Dual start: z = G xt with  S xt + A'y = -c, A xt = 0, nudged.
    Eigen::VectorXd xt(n_);
    solve_reduced(-can_.c, Eigen::VectorXd::Zero(p_), Eigen::VectorXd::Zero(m_), xt, y_, dz_dummy);
    for (int i = 0; i < m_; ++i) z_(i) = row_dot(can_.g_rows[i], xt);
    nudge_into_cone(z_);
    return true;
  }

  void nudge_into_cone(Eigen::VectorXd& v) const {
    double margin = std::numeric_limits<double>::infinity();
    for (int i = 0; i < ml_; ++i) margin = std::min(margin, v(i));
    for (const auto& [start, dim] : can_.soc_blocks)
      margin = std::min(margin, v(start) - v.segment(start + 1, dim - 1).norm());
    const double scale = std::max(1.0, v.lpNorm<Eigen::Infinity>());
    if (margin <= 1e-8 * scale) {
      const double shift = 1.0 + std::max(0.0, -margin);
      for (int i = 0; i < ml_; ++i) v(i) += shift;
      for (const auto& [start, dim] : can_.soc_blocks) v(start) += shift;
    }
  }

  void finish(Solution& sol, SolveStatus st, int iters, const std::string& msg) {
    sol.status = st;
    sol.iters = iters;
    sol.message = msg;
    sol.x_free = x_;
    sol.y = y_;
    sol.z = z_;
    sol.s = s_;
    sol.x = can_.lift(x_);
    sol.kkt = kkt_residuals(can_, x_, y_, z_);
  }

  static constexpr int kSmallBlock = 8;

  const Canonical& can_;
  SolverOptions opt_;
  int n_ = 0, m_ = 0, p_ = 0, ml_ = 0, nu_ = 0;
  double reg_ = 1e-11;
  double last_alpha_ = 0.0;

  Eigen::VectorXd x_, y_, z_, s_;
  Eigen::VectorXd d_orth_, w_orth_, lam_orth_;
  std::vector<SocScaling> scalings_;
  std::vector<std::vector<Triplet>> block_gram_j_;
  Eigen::MatrixXd s_mat_, big_mat_, a_dense_, asa_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::LLT<Eigen::MatrixXd> llt_eq_;
};

}  // namespace ipm_detail

// Solve a Program to certified tolerance. The canonical form is Ruiz-
// equilibrated before the interior-point run and the certificates are
// mapped back, so the reported KKT residuals refer to the original data.
// Failures surface in the status, never as a silently wrong answer.
inline Solution solve(const Program& prog, const SolverOptions& opt = {}) {
  const Canonical can = canonicalize(prog);
  Canonical scaled = can;
  const Equilibration eq = equilibrate(scaled);

  ipm_detail::Solver ipm(scaled, opt);
  Solution sol = ipm.run();

  if (sol.x_free.size() == scaled.n) {
    sol.x_free = eq.col.cwiseProduct(sol.x_free);
    sol.s = sol.s.cwiseQuotient(eq.row_g);
    sol.z = sol.z.cwiseProduct(eq.row_g);
    if (scaled.p() > 0) sol.y = sol.y.cwiseProduct(eq.row_a);
    sol.x = can.lift(sol.x_free);
    sol.kkt = kkt_residuals(can, sol.x_free, sol.y, sol.z);
    if (sol.status == SolveStatus::Optimal && sol.kkt.worst() > 10.0 * opt.tol) {
      sol.status = SolveStatus::MaxIter;
      sol.message = "converged in scaled space but unscaled residuals exceed tolerance";
    }
  }

  if (sol.x.size() == static_cast<long>(prog.n) + (can.has_obj_epigraph ? 1 : 0)) {
    Eigen::VectorXd xs = sol.x.head(prog.n);
    sol.x = xs;
  }
  if (sol.x.size() == static_cast<long>(prog.n) && sol.x.allFinite())
    sol.obj = prog.objective_value(sol.x);
  return sol;
}

}  // namespace cffl::conic
