// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "cffl/short_term.hpp"

using namespace cffl;

namespace {

NetworkRealization rand_net(int m, int n, std::uint64_t seed, const SystemParams& p) {
  PlacementConfig cfg;
  cfg.n_aps = m;
  cfg.n_ues = n;
  cfg.d_km = 1.0;
  cfg.pcase = (seed % 2 == 0) ? PlacementCase::C1 : PlacementCase::C2;
  return make_realization(generate_placement(cfg, seed), p, seed);
}

// Random point of the exact feasible set: per-AP budget shares, u within
// its cap, full frequency.
PowerAllocation random_feasible(const NetworkRealization& net, const Selection& sel,
                                const SystemParams& p, Rng& rng) {
  const int m = net.n_aps(), n = net.n_ues();
  PowerAllocation al;
  al.v.setZero(m, n);
  al.u.setZero(n);
  al.f = Eigen::VectorXd::Constant(n, p.f_max);
  for (int i = 0; i < m; ++i) {
    Eigen::VectorXd share(n);
    double tot = 0.0;
    for (int k = 0; k < n; ++k) {
      share(k) = sel.selected(k) ? rng.uniform(0.05, 1.0) : 0.0;
      tot += share(k);
    }
    const double budget = rng.uniform(0.2, 1.0);
    for (int k = 0; k < n; ++k) {
      if (!sel.selected(k)) continue;
      const double vt = std::min(sel.a(k), budget * share(k) / tot);
      al.v(i, k) = std::sqrt(vt / net.sigma2_dl(i, k));
    }
  }
  for (int k = 0; k < n; ++k)
    if (sel.selected(k)) al.u(k) = std::sqrt(std::min(sel.a(k), 1.0)) * rng.uniform(0.1, 1.0);
  return al;
}

// Exact-constraint feasibility audit of a short-term solution (the inner
// approximation property: every SCA iterate must satisfy the true rates).
void check_exact_feasibility(const ShortTermSolution& st, const Selection& sel,
                             const NetworkRealization& net, const SystemParams& p,
                             double rel = 1e-6) {
  const int m = net.n_aps(), n = net.n_ues();
  const Eigen::VectorXd rd = downlink_rate(st.alloc.v, net, p);
  const Eigen::VectorXd ru = uplink_rate(st.alloc.u, net, p);
  for (int i = 0; i < m; ++i) {
    double budget = 0.0;
    for (int k = 0; k < n; ++k) {
      budget += net.sigma2_dl(i, k) * st.alloc.v(i, k) * st.alloc.v(i, k);
      CHECK(net.sigma2_dl(i, k) * st.alloc.v(i, k) * st.alloc.v(i, k) <=
            st.vtilde(i, k) + rel);
      CHECK(st.vtilde(i, k) <= sel.a(k) + rel);
    }
    CHECK(budget <= 1.0 + rel);
  }
  for (int k = 0; k < n; ++k) {
    CHECK(st.alloc.u(k) * st.alloc.u(k) <= std::min(1.0, sel.a(k)) + rel);
    CHECK(st.alloc.f(k) <= p.f_max * (1.0 + rel));
    if (!sel.selected(k)) continue;
    CHECK(st.r_d(k) <= rd(k) * (1.0 + rel) + 1e-9);
    CHECK(st.r_u(k) <= ru(k) * (1.0 + rel) + 1e-9);
    CHECK(sel.a(k) * p.s_dl_bits / st.r_d(k) <= st.t_d * (1.0 + rel));
    CHECK(sel.a(k) * p.local_iters * p.samples_per_ue * p.cycles_per_sample / st.alloc.f(k) <=
          st.t_c * (1.0 + rel));
    CHECK(sel.a(k) * p.s_ul_bits / st.r_u(k) <= st.t_u * (1.0 + rel));
  }
}

}  // namespace

TEST_CASE("bounds are tight and gradient-matching at the iterate, lower elsewhere") {
  Rng rng(2024);
  for (int rep = 0; rep < 20; ++rep) {
    const int m = static_cast<int>(rng.uniform_int(2, 10));
    const int n = static_cast<int>(rng.uniform_int(2, 6));
    SystemParams p = SystemParams::reference(n);
    const NetworkRealization net = rand_net(m, n, 400 + rep, p);
    const Selection sel = Selection::all_on(n);
    const PowerAllocation it = random_feasible(net, sel, p, rng);
    const BoundCoefficients bc = build_bounds(it, net, p);

    const Eigen::VectorXd rd = downlink_rate(it.v, net, p);
    const Eigen::VectorXd ru = uplink_rate(it.u, net, p);
    for (int k = 0; k < n; ++k) {
      // Tightness at the linearization point, 1e-9 relative.
      CHECK(bc.eval_rd_tilde(k, it.v) == Catch::Approx(rd(k)).epsilon(1e-9));
      CHECK(bc.eval_ru_tilde(k, it.u) == Catch::Approx(ru(k)).epsilon(1e-9));
    }

    // Gradient match at the iterate, full gradients via central differences
    // compared in norm. Steps balance truncation against roundoff in the
    // ~1e8-scale rates.
    const double v_ref = it.v.cwiseAbs().mean();
    for (int probe = 0; probe < 2; ++probe) {
      const int k = static_cast<int>(rng.uniform_int(0, n - 1));
      Eigen::MatrixXd gb(m, n), ge(m, n);
      for (int l = 0; l < n; ++l)
        for (int i = 0; i < m; ++i) {
          const double hstep = 1e-5 * (std::abs(it.v(i, l)) + v_ref);
          Eigen::MatrixXd vp = it.v, vm = it.v;
          vp(i, l) += hstep;
          vm(i, l) -= hstep;
          gb(i, l) = (bc.eval_rd_tilde(k, vp) - bc.eval_rd_tilde(k, vm)) / (2 * hstep);
          ge(i, l) = (downlink_rate(vp, net, p)(k) - downlink_rate(vm, net, p)(k)) / (2 * hstep);
        }
      CHECK((gb - ge).norm() <= 1e-4 * ge.norm());

      Eigen::VectorXd gub(n), gue(n);
      for (int l = 0; l < n; ++l) {
        const double hu = 1e-5 * (std::abs(it.u(l)) + 1.0);
        Eigen::VectorXd up = it.u, um = it.u;
        up(l) += hu;
        um(l) -= hu;
        gub(l) = (bc.eval_ru_tilde(k, up) - bc.eval_ru_tilde(k, um)) / (2 * hu);
        gue(l) = (uplink_rate(up, net, p)(k) - uplink_rate(um, net, p)(k)) / (2 * hu);
      }
      CHECK((gub - gue).norm() <= 1e-4 * gue.norm());
    }

    // Global lower bound on random feasible points.
    for (int probe = 0; probe < 100; ++probe) {
      const PowerAllocation other = random_feasible(net, sel, p, rng);
      const Eigen::VectorXd rdo = downlink_rate(other.v, net, p);
      const Eigen::VectorXd ruo = uplink_rate(other.u, net, p);
      for (int k = 0; k < n; ++k) {
        CHECK(bc.eval_rd_tilde(k, other.v) <= rdo(k) + 1e-9 * std::max(1.0, rdo(k)));
        CHECK(bc.eval_ru_tilde(k, other.u) <= ruo(k) + 1e-9 * std::max(1.0, ruo(k)));
      }
    }
  }
}

TEST_CASE("assembled subproblem matches the reference constraint tallies") {
  const int m = 7, n = 5;
  SystemParams p = SystemParams::reference(n);
  const NetworkRealization net = rand_net(m, n, 99, p);
  const Selection sel = Selection::all_on(n);
  const InitialPoint ip = initial_point(sel, net, p);
  const BoundCoefficients bc = build_bounds(ip.alloc, net, p);
  const AssembledSubproblem sub = assemble_subproblem(sel, bc, net, p);

  CHECK(sub.stats.n_vars == 2 * m * n + 4 * n + 3);
  CHECK(sub.stats.n_linear == 2 * m * n + m + 4 * n + 3);
  CHECK(sub.stats.n_conic == m * n + 5 * n);
}

TEST_CASE("single selected UE yields exactly three time-epigraph rows") {
  const int m = 3, n = 4;
  SystemParams p = SystemParams::reference(n);
  p.n_qol = 1;
  const NetworkRealization net = rand_net(m, n, 7, p);
  const Selection sel = Selection::from_indices(n, {0});
  const InitialPoint ip = initial_point(sel, net, p);
  const BoundCoefficients bc = build_bounds(ip.alloc, net, p);
  const AssembledSubproblem sub = assemble_subproblem(sel, bc, net, p);

  // One UE: one linear computing-time row plus two hyperbolic cones.
  int hyper = 0;
  for (const auto& rc : sub.prog.rcones)
    if (!rc.zrows.empty() && rc.zrows[0].terms.empty() && rc.zrows[0].constant > 0.0) ++hyper;
  int tc_rows = 0;
  for (const auto& lc : sub.prog.linear)
    for (const auto& t : lc.expr.terms)
      if (t.var == sub.layout.tc()) ++tc_rows;
  CHECK(hyper == 2);
  CHECK(tc_rows == 1);

  Selection none(Eigen::VectorXd::Zero(n));
  CHECK_THROWS_AS(assemble_subproblem(none, bc, net, p), std::invalid_argument);
}

TEST_CASE("initial point is exactly feasible, including one-UE share") {
  Rng rng(31);
  for (int rep = 0; rep < 100; ++rep) {
    const int m = static_cast<int>(rng.uniform_int(1, 6));
    const int n = static_cast<int>(rng.uniform_int(1, 6));
    SystemParams p = SystemParams::reference(n);
    const NetworkRealization net = rand_net(m, n, 777 + rep, p);
    Eigen::VectorXd a(n);
    for (int k = 0; k < n; ++k) a(k) = rng.uniform() < 0.3 ? 0.0 : rng.uniform(0.01, 1.0);
    if (Selection(a).n_selected() == 0) a(0) = 1.0;
    const Selection sel(a);

    const InitialPoint ip = initial_point(sel, net, p);
    for (int i = 0; i < m; ++i) {
      double budget = 0.0;
      for (int k = 0; k < n; ++k) {
        const double used = net.sigma2_dl(i, k) * ip.alloc.v(i, k) * ip.alloc.v(i, k);
        CHECK(used <= ip.vtilde(i, k) + 1e-12);
        CHECK(ip.vtilde(i, k) <= sel.a(k) + 1e-12);
        budget += ip.vtilde(i, k);
      }
      CHECK(budget <= 1.0 + 1e-12);
    }
    const Eigen::VectorXd rd = downlink_rate(ip.alloc.v, net, p);
    const Eigen::VectorXd ru = uplink_rate(ip.alloc.u, net, p);
    for (int k = 0; k < n; ++k) {
      CHECK(ip.alloc.u(k) * ip.alloc.u(k) <= std::min(1.0, sel.a(k)) + 1e-12);
      if (!sel.selected(k)) continue;
      CHECK(ip.r_d(k) <= rd(k));
      CHECK(ip.r_u(k) <= ru(k));
      CHECK(sel.a(k) * p.s_dl_bits / ip.r_d(k) <= ip.t_d + 1e-9);
      CHECK(sel.a(k) * p.s_ul_bits / ip.r_u(k) <= ip.t_u + 1e-9);
    }
  }

  // Single selected UE receives the full per-AP share.
  SystemParams p1 = SystemParams::reference(3);
  const NetworkRealization net1 = rand_net(2, 3, 5, p1);
  Eigen::VectorXd a1 = Eigen::VectorXd::Zero(3);
  a1(1) = 1.0;
  const InitialPoint solo = initial_point(Selection(a1), net1, p1);
  CHECK(solo.vtilde(0, 1) == Catch::Approx(1.0));
  CHECK(solo.vtilde(1, 1) == Catch::Approx(1.0));
}

TEST_CASE("sca objective trace is nonincreasing and final iterate exactly feasible") {
  Rng rng(88);
  for (int rep = 0; rep < 20; ++rep) {
    const int m = static_cast<int>(rng.uniform_int(2, 5));
    const int n = static_cast<int>(rng.uniform_int(2, 4));
    SystemParams p = SystemParams::reference(n);
    const NetworkRealization net = rand_net(m, n, 4000 + rep, p);
    Eigen::VectorXd a(n);
    for (int k = 0; k < n; ++k) a(k) = rng.uniform() < 0.5 ? 1.0 : rng.uniform(0.2, 1.0);
    const Selection sel(a);

    ScaOptions opts;
    opts.max_outer = 12;
    const ShortTermSolution st = sca_solve(sel, net, p, opts);
    REQUIRE(st.obj_trace.size() >= 1);
    for (size_t i = 1; i < st.obj_trace.size(); ++i)
      CHECK(st.obj_trace[i] <= st.obj_trace[i - 1] + 1e-8);
    check_exact_feasibility(st, sel, net, p);

    // One-hot identity against the epigraph objective.
    const double onehot_sum =
        sel.a.dot(st.onehot_dl) + sel.a.dot(st.onehot_cp) + sel.a.dot(st.onehot_ul);
    CHECK(onehot_sum == Catch::Approx(st.objective).epsilon(1e-5));
  }
}

TEST_CASE("single-user problem saturates the power budget and the frequency") {
  SystemParams p = SystemParams::reference(1);
  p.n_qol = 1;
  const NetworkRealization net = rand_net(1, 1, 11, p);
  const Selection sel = Selection::all_on(1);
  const ShortTermSolution st = sca_solve(sel, net, p);
  CHECK(net.sigma2_dl(0, 0) * st.alloc.v(0, 0) * st.alloc.v(0, 0) == Catch::Approx(1.0).epsilon(1e-4));
  CHECK(st.alloc.u(0) == Catch::Approx(1.0).epsilon(1e-4));
  CHECK(st.alloc.f(0) == Catch::Approx(p.f_max).epsilon(1e-4));
}

TEST_CASE("two-user instance matches a refined dense grid search") {
  // The objective separates: t_c is exactly L D c / f_max with f at the box
  // edge; t_d depends only on v, t_u only on u. Grid-search each block with
  // progressive refinement as the oracle.
  const int m = 2, n = 2;
  SystemParams p = SystemParams::reference(n);
  p.n_qol = 1;
  const NetworkRealization net = rand_net(m, n, 424, p);
  const Selection sel = Selection::all_on(n);

  ScaOptions opts;
  opts.eps = 1e-6;
  opts.max_outer = 60;
  const ShortTermSolution st = sca_solve(sel, net, p, opts);

  // t_u oracle: 2-D grid over (u1, u2).
  auto tu_of = [&](double u0, double u1) {
    Eigen::VectorXd u(2);
    u << u0, u1;
    const Eigen::VectorXd r = uplink_rate(u, net, p);
    if (!(r(0) > 0.0) || !(r(1) > 0.0)) return std::numeric_limits<double>::infinity();
    return std::max(p.s_ul_bits / r(0), p.s_ul_bits / r(1));
  };
  double ulo0 = 0.0, uhi0 = 1.0, ulo1 = 0.0, uhi1 = 1.0;
  double tu_best = std::numeric_limits<double>::infinity();
  double b0 = 1.0, b1 = 1.0;
  for (int round = 0; round < 4; ++round) {
    const int g = 50;
    for (int i = 0; i <= g; ++i)
      for (int j = 0; j <= g; ++j) {
        const double u0 = ulo0 + (uhi0 - ulo0) * i / g;
        const double u1 = ulo1 + (uhi1 - ulo1) * j / g;
        const double t = tu_of(u0, u1);
        if (t < tu_best) {
          tu_best = t;
          b0 = u0;
          b1 = u1;
        }
      }
    const double w0 = (uhi0 - ulo0) / g * 3, w1 = (uhi1 - ulo1) / g * 3;
    ulo0 = std::max(0.0, b0 - w0);
    uhi0 = std::min(1.0, b0 + w0);
    ulo1 = std::max(0.0, b1 - w1);
    uhi1 = std::min(1.0, b1 + w1);
  }

  // t_d oracle: 4-D grid over vt shares (theta per AP-UE cell), v derived
  // from shares so the per-AP budget is respected by construction.
  auto td_of = [&](double s00, double s01, double s10, double s11) {
    Eigen::MatrixXd v(2, 2);
    if (s00 + s01 > 1.0 || s10 + s11 > 1.0) return std::numeric_limits<double>::infinity();
    v(0, 0) = std::sqrt(s00 / net.sigma2_dl(0, 0));
    v(0, 1) = std::sqrt(s01 / net.sigma2_dl(0, 1));
    v(1, 0) = std::sqrt(s10 / net.sigma2_dl(1, 0));
    v(1, 1) = std::sqrt(s11 / net.sigma2_dl(1, 1));
    const Eigen::VectorXd r = downlink_rate(v, net, p);
    if (!(r(0) > 0.0) || !(r(1) > 0.0)) return std::numeric_limits<double>::infinity();
    return std::max(p.s_dl_bits / r(0), p.s_dl_bits / r(1));
  };
  Eigen::Vector4d lo = Eigen::Vector4d::Zero(), hi = Eigen::Vector4d::Ones(), best4;
  double td_best = std::numeric_limits<double>::infinity();
  for (int round = 0; round < 4; ++round) {
    const int g = 24;
    Eigen::Vector4d x;
    for (int i0 = 0; i0 <= g; ++i0) {
      x(0) = lo(0) + (hi(0) - lo(0)) * i0 / g;
      for (int i1 = 0; i1 <= g; ++i1) {
        x(1) = lo(1) + (hi(1) - lo(1)) * i1 / g;
        for (int i2 = 0; i2 <= g; ++i2) {
          x(2) = lo(2) + (hi(2) - lo(2)) * i2 / g;
          for (int i3 = 0; i3 <= g; ++i3) {
            x(3) = lo(3) + (hi(3) - lo(3)) * i3 / g;
            const double t = td_of(x(0), x(1), x(2), x(3));
            if (t < td_best) {
              td_best = t;
              best4 = x;
            }
          }
        }
      }
    }
    for (int d = 0; d < 4; ++d) {
      const double w = (hi(d) - lo(d)) / g * 3;
      lo(d) = std::max(0.0, best4(d) - w);
      hi(d) = std::min(1.0, best4(d) + w);
    }
  }

  const double oracle = td_best + p.compute_time_floor() + tu_best;
  CHECK(std::abs(st.objective - oracle) / oracle < 0.005);
}

TEST_CASE("sca accepts relaxed selections and drops sub-threshold UEs") {
  SystemParams p = SystemParams::reference(3);
  const NetworkRealization net = rand_net(3, 3, 55, p);
  Eigen::VectorXd a(3);
  a << 0.7, 1e-6, 0.4;  // middle UE below threshold
  const Selection sel(a);
  const ShortTermSolution st = sca_solve(sel, net, p);
  CHECK(st.alloc.v.col(1).maxCoeff() == 0.0);
  CHECK(st.alloc.u(1) == 0.0);
  CHECK(st.r_d(1) == 0.0);
  CHECK(st.objective > 0.0);
  check_exact_feasibility(st, sel, net, p);
}
