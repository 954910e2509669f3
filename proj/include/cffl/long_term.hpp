// SPDX-License-Identifier: Apache-2.0
//
// Long-term selection optimizer: penalized relaxation of the binary
// selection, recursive surrogate of the stochastic round-time objective,
// proximal master step solved as an exact Euclidean projection, and
// diminishing-step iterate averaging. One outer iteration per large-scale
// state.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "cffl/network.hpp"
#include "cffl/params.hpp"
#include "cffl/rates.hpp"
#include "cffl/short_term.hpp"

namespace cffl {

struct SurrogateState {
  int n = 0;                // completed surrogate updates
  double g_val = 0.0;       // running surrogate value
  Eigen::VectorXd g_grad;   // running surrogate gradient

  explicit SurrogateState(int n_ues = 0) : g_grad(Eigen::VectorXd::Zero(n_ues)) {}
};

// Sample of the per-process time T(a) = q a'(t_d~+t_c~+t_u~) / (a'1) and its
// gradient in a, from the one-hot vectors of a short-term solution.
inline std::pair<double, Eigen::VectorXd> sample_T_and_grad(const Selection& sel,
                                                            const ShortTermSolution& st,
                                                            const SystemParams& p) {
  const double asum = sel.sum();
  if (!(asum > 0.0)) throw std::domain_error("sample_T_and_grad requires sum(a) > 0");
  const Eigen::VectorXd tsum = st.onehot_dl + st.onehot_cp + st.onehot_ul;
  const double s = sel.a.dot(tsum);
  const double t_val = p.q_rounds * s / asum;
  Eigen::VectorXd grad =
      p.q_rounds * (tsum * asum - Eigen::VectorXd::Constant(sel.size(), s)) / (asum * asum);
  return {t_val, std::move(grad)};
}

inline SurrogateState update_surrogate(const SurrogateState& state, double t_val,
                                       const Eigen::VectorXd& t_grad, double phi_n) {
  if (!(phi_n > 0.0 && phi_n <= 1.0)) throw std::invalid_argument("phi must lie in (0, 1]");
  SurrogateState next = state;
  next.n = state.n + 1;
  next.g_val = (1.0 - phi_n) * state.g_val + phi_n * t_val;
  next.g_grad = (1.0 - phi_n) * state.g_grad + phi_n * t_grad;
  return next;
}

// V(a) = sum_k (a_k - a_k^2) and its gradient 1 - 2a; zero exactly on
// binary vectors.
inline std::pair<double, Eigen::VectorXd> penalty_value_and_grad(const Eigen::VectorXd& a) {
  const double v = (a.array() - a.array().square()).sum();
  return {v, Eigen::VectorXd::Ones(a.size()) - 2.0 * a};
}

// Euclidean projection onto H = {0 <= a <= 1, sum a >= n_qol}: clip, then a
// dual bisection on the sum constraint's multiplier, polished to the exact
// piecewise-linear solution.
inline Eigen::VectorXd project_onto_h(const Eigen::VectorXd& y, int n_qol) {
  const int n = static_cast<int>(y.size());
  if (n_qol > n) throw std::invalid_argument("H is empty: n_qol exceeds the UE count");
  Eigen::VectorXd a = y.cwiseMax(0.0).cwiseMin(1.0);
  const double target = static_cast<double>(n_qol);
  if (a.sum() >= target - 1e-12) return a;

  auto clip_at = [&](double nu) {
    return (y.array() + 0.5 * nu).cwiseMax(0.0).cwiseMin(1.0).matrix().eval();
  };
  double lo = 0.0, hi = 1.0;
  while (clip_at(hi).sum() < target) hi *= 2.0;
  for (int it = 0; it < 100; ++it) {
    const double mid = 0.5 * (lo + hi);
    (clip_at(mid).sum() < target ? lo : hi) = mid;
  }
  double nu = hi;

  // Exact polish on the active set at nu.
  int n_ones = 0, n_free = 0;
  double free_sum = 0.0;
  for (int k = 0; k < n; ++k) {
    const double v = y(k) + 0.5 * nu;
    if (v >= 1.0) {
      ++n_ones;
    } else if (v > 0.0) {
      ++n_free;
      free_sum += y(k);
    }
  }
  if (n_free > 0) {
    const double nu_exact = 2.0 * (target - n_ones - free_sum) / n_free;
    const Eigen::VectorXd cand = clip_at(nu_exact);
    if (std::abs(cand.sum() - target) < 1e-9) return cand;
  }
  return clip_at(nu);
}

// Minimizer of L + grad'(a - a_n) + tau ||a - a_n||^2 over H, i.e. the
// projection of a_n - grad/(2 tau) onto H.
inline Eigen::VectorXd solve_master(const Eigen::VectorXd& a_n, const Eigen::VectorXd& l_grad,
                                    double tau_prox, int n_qol) {
  if (!(tau_prox > 0.0)) throw std::invalid_argument("tau_prox must be positive");
  return project_onto_h(a_n - l_grad / (2.0 * tau_prox), n_qol);
}

inline Eigen::VectorXd step_update(const Eigen::VectorXd& a_n, const Eigen::VectorXd& a_star,
                                   double pi_n) {
  if (!(pi_n > 0.0 && pi_n <= 1.0)) throw std::invalid_argument("pi must lie in (0, 1]");
  return (1.0 - pi_n) * a_n + pi_n * a_star;
}

// Threshold at 0.5 (strict), then promote the highest-valued remaining UEs
// until the quality-of-learning floor is met; ties break to the lowest index.
inline Selection round_selection(const Eigen::VectorXd& a_relaxed, int n_qol) {
  const int n = static_cast<int>(a_relaxed.size());
  Eigen::VectorXd bin(n);
  for (int k = 0; k < n; ++k) bin(k) = a_relaxed(k) > 0.5 ? 1.0 : 0.0;
  int count = static_cast<int>(bin.sum());
  while (count < n_qol) {
    int best = -1;
    for (int k = 0; k < n; ++k) {
      if (bin(k) > 0.0) continue;
      if (best < 0 || a_relaxed(k) > a_relaxed(best)) best = k;
    }
    bin(best) = 1.0;
    ++count;
  }
  return Selection(bin);
}

struct Alg2Options {
  int max_iter = 200;
  double iterate_tol = 1e-4;  // sup-norm change threshold
  int stable_iters = 5;       // consecutive small changes before stopping
  ScaOptions sca{};
  double perturb_radius_m = 5.0;
  int max_consecutive_failures = 3;
};

struct Alg2Trace {
  std::vector<int> iteration;
  std::vector<double> sum_a, penalty, l_estimate, t_sample, st_obj, iterate_change, master_gap;
};

struct Alg2Result {
  Eigen::VectorXd a_relaxed;
  Selection a_binary{Eigen::VectorXd()};
  SurrogateState surrogate;
  Alg2Trace trace;
  int iterations = 0;
  int solver_failures = 0;
  bool converged = false;
};

// Online two-timescale loop: per iteration draw a fresh large-scale state,
// solve the short-term subproblem at the current relaxed selection, fold the
// sampled T into the surrogate, take a proximal master step and average.
inline Alg2Result run_algorithm2(const Placement& anchor, const SystemParams& p,
                                 std::uint64_t seed, const Alg2Options& opts = {}) {
  const int n = anchor.n_ues();
  if (p.n_qol > n) throw std::invalid_argument("n_qol exceeds the UE count");

  RealizationStream stream(anchor, p, seed_mix(seed, 0xa19u), opts.perturb_radius_m);

  // Random start in H.
  Rng rng(seed_mix(seed, 0xa20u));
  Eigen::VectorXd a(n);
  for (int k = 0; k < n; ++k) a(k) = rng.uniform();
  a = project_onto_h(a, p.n_qol);

  Alg2Result res;
  res.surrogate = SurrogateState(n);
  int consecutive_failures = 0;
  int stable = 0;

  for (int it = 1; it <= opts.max_iter; ++it) {
    const NetworkRealization net = stream.next();
    ShortTermSolution st;
    try {
      st = sca_solve(Selection(a), net, p, opts.sca);
    } catch (const SolverFailure&) {
      ++res.solver_failures;
      if (++consecutive_failures > opts.max_consecutive_failures)
        throw SolverFailure("long-term loop aborted after " +
                            std::to_string(consecutive_failures) +
                            " consecutive short-term solver failures at iteration " +
                            std::to_string(it));
      continue;
    }
    consecutive_failures = 0;

    const auto [t_val, t_grad] = sample_T_and_grad(Selection(a), st, p);
    const double phi = p.phi(res.surrogate.n + 1);
    res.surrogate = update_surrogate(res.surrogate, t_val, t_grad, phi);

    const auto [v_val, v_grad] = penalty_value_and_grad(a);
    const double l_est = res.surrogate.g_val + p.lambda_penalty * v_val;
    const Eigen::VectorXd l_grad = res.surrogate.g_grad + p.lambda_penalty * v_grad;

    const Eigen::VectorXd a_star = solve_master(a, l_grad, p.tau_prox, p.n_qol);
    const double pi = p.pi(res.surrogate.n);
    const Eigen::VectorXd a_next = step_update(a, a_star, pi);
    const double change = (a_next - a).lpNorm<Eigen::Infinity>();

    res.trace.iteration.push_back(it);
    res.trace.sum_a.push_back(a.sum());
    res.trace.penalty.push_back(v_val);
    res.trace.l_estimate.push_back(l_est);
    res.trace.t_sample.push_back(t_val);
    res.trace.st_obj.push_back(st.objective);
    res.trace.iterate_change.push_back(change);
    res.trace.master_gap.push_back((a - a_star).norm());

    a = a_next;
    res.iterations = it;

    stable = change < opts.iterate_tol ? stable + 1 : 0;
    if (stable >= opts.stable_iters) {
      res.converged = true;
      break;
    }
  }

  res.a_relaxed = a;
  res.a_binary = round_selection(a, p.n_qol);
  return res;
}

}  // namespace cffl
