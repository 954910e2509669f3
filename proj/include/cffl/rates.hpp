// SPDX-License-Identifier: Apache-2.0
//
// Closed-form achievable rates under conjugate beamforming with imperfect
// MMSE channel estimates, and the FL timing model built on them: per-step
// times, round time, round counts and total execution time.
#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <vector>

#include "cffl/network.hpp"
#include "cffl/params.hpp"

namespace cffl {

// a_k above this value counts as selected; the constraints are stated over
// relaxed selections where an exact-zero test is numerically fragile.
inline constexpr double kSelectionThreshold = 1e-3;

struct Selection {
  Eigen::VectorXd a;

  explicit Selection(Eigen::VectorXd v = {}) : a(std::move(v)) {}
  static Selection all_on(int n) { return Selection(Eigen::VectorXd::Ones(n)); }
  static Selection from_indices(int n, const std::vector<int>& idx) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(n);
    for (int k : idx) v(k) = 1.0;
    return Selection(v);
  }

  int size() const { return static_cast<int>(a.size()); }
  bool selected(int k) const { return a(k) > kSelectionThreshold; }
  int n_selected() const {
    int c = 0;
    for (int k = 0; k < size(); ++k) c += selected(k);
    return c;
  }
  double sum() const { return a.sum(); }
};

struct PowerAllocation {
  Eigen::MatrixXd v;  // M x N, v(m,k) = eta(m,k)^(1/2)
  Eigen::VectorXd u;  // N, u(k) = zeta(k)^(1/2)
  Eigen::VectorXd f;  // N, CPU frequency in cycles/s
};

// R_d(k) for all k, bit/s. Signal, pilot-contamination and inter-user
// interference terms follow the conjugate-beamforming downlink rate with
// MMSE estimate variances sigma2 and unit normalized noise.
inline Eigen::VectorXd downlink_rate(const Eigen::MatrixXd& v, const NetworkRealization& net,
                                     const SystemParams& p) {
  const int m = net.n_aps(), n = net.n_ues();
  const double pre = (p.tau_c - p.tau_t) / p.tau_c * p.bandwidth_hz;
  const Eigen::MatrixXd& s2 = net.sigma2_dl;

  // Per-UE beamforming gains sum_m v(m,l) sigma2(m,l)
  Eigen::VectorXd gain(n);
  for (int l = 0; l < n; ++l) gain(l) = (v.col(l).array() * s2.col(l).array()).sum();

  Eigen::VectorXd rate(n);
  for (int k = 0; k < n; ++k) {
    const double sig = p.rho_d * gain(k) * gain(k);
    double pc = 0.0;
    for (int l = 0; l < n; ++l) {
      if (l == k || net.pilot_gram(l, k) == 0.0) continue;
      double t = 0.0;
      for (int i = 0; i < m; ++i) t += v(i, l) * s2(i, l) * net.beta(i, k) / net.beta(i, l);
      pc += p.rho_d * t * t * net.pilot_gram(l, k);
    }
    double iui = 0.0;
    for (int l = 0; l < n; ++l)
      for (int i = 0; i < m; ++i) iui += v(i, l) * v(i, l) * s2(i, l) * net.beta(i, k);
    iui *= p.rho_d;
    rate(k) = pre * std::log2(1.0 + sig / (pc + iui + 1.0));
  }
  return rate;
}

// R_u(k) for all k, bit/s. Noise term is sum_m sigma2(m,k) rather than 1.
inline Eigen::VectorXd uplink_rate(const Eigen::VectorXd& u, const NetworkRealization& net,
                                   const SystemParams& p) {
  const int m = net.n_aps(), n = net.n_ues();
  const double pre = (p.tau_c - p.tau_t) / p.tau_c * p.bandwidth_hz;
  const Eigen::MatrixXd& s2 = net.sigma2_ul;

  Eigen::VectorXd rate(n);
  for (int k = 0; k < n; ++k) {
    const double s2sum = s2.col(k).sum();
    const double sig = p.rho_u * u(k) * u(k) * s2sum * s2sum;
    double pc = 0.0;
    for (int l = 0; l < n; ++l) {
      if (l == k || net.pilot_gram(k, l) == 0.0) continue;
      double t = 0.0;
      for (int i = 0; i < m; ++i) t += s2(i, k) * net.beta(i, l) / net.beta(i, k);
      pc += p.rho_u * u(l) * u(l) * t * t * net.pilot_gram(k, l);
    }
    double iui = 0.0;
    for (int l = 0; l < n; ++l) {
      double t = 0.0;
      for (int i = 0; i < m; ++i) t += s2(i, k) * net.beta(i, l);
      iui += p.rho_u * u(l) * u(l) * t;
    }
    rate(k) = pre * std::log2(1.0 + sig / (pc + iui + s2sum));
  }
  return rate;
}

struct RoundTiming {
  Eigen::VectorXd t_dl, t_cp, t_ul;              // per-UE step times, s
  double round_time = 0.0;                       // T_o
  Eigen::VectorXd onehot_dl, onehot_cp, onehot_ul;  // one-hot time vectors
  int argmax_dl = -1, argmax_cp = -1, argmax_ul = -1;
};

struct InfeasibleTiming : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Per-UE step times and the round time T_o = max t_dl + max t_cp + max t_ul
// over selected UEs. Non-selected UEs contribute zero time. The one-hot
// vectors put the raw (not a-scaled) time of the argmax UE at its index, so
// a^T onehot reproduces each max term; argmax ties break to the lowest index.
inline RoundTiming step_times(const Selection& sel, const PowerAllocation& alloc,
                              const NetworkRealization& net, const SystemParams& p) {
  const int n = net.n_ues();
  const Eigen::VectorXd rd = downlink_rate(alloc.v, net, p);
  const Eigen::VectorXd ru = uplink_rate(alloc.u, net, p);

  RoundTiming rt;
  rt.t_dl.setZero(n);
  rt.t_cp.setZero(n);
  rt.t_ul.setZero(n);
  rt.onehot_dl.setZero(n);
  rt.onehot_cp.setZero(n);
  rt.onehot_ul.setZero(n);

  for (int k = 0; k < n; ++k) {
    if (!sel.selected(k)) continue;
    if (!(rd(k) > 0.0) || !(ru(k) > 0.0) || !(alloc.f(k) > 0.0))
      throw InfeasibleTiming("selected UE has zero rate or zero frequency");
    rt.t_dl(k) = sel.a(k) * p.s_dl_bits / rd(k);
    rt.t_cp(k) = sel.a(k) * p.local_iters * p.samples_per_ue * p.cycles_per_sample / alloc.f(k);
    rt.t_ul(k) = sel.a(k) * p.s_ul_bits / ru(k);
  }

  auto argmax_sel = [&](const Eigen::VectorXd& t) {
    int best = -1;
    for (int k = 0; k < n; ++k) {
      if (!sel.selected(k)) continue;
      if (best < 0 || t(k) > t(best)) best = k;
    }
    return best;
  };
  rt.argmax_dl = argmax_sel(rt.t_dl);
  rt.argmax_cp = argmax_sel(rt.t_cp);
  rt.argmax_ul = argmax_sel(rt.t_ul);
  if (rt.argmax_dl >= 0) {
    rt.onehot_dl(rt.argmax_dl) = p.s_dl_bits / rd(rt.argmax_dl);
    rt.onehot_cp(rt.argmax_cp) =
        p.local_iters * p.samples_per_ue * p.cycles_per_sample / alloc.f(rt.argmax_cp);
    rt.onehot_ul(rt.argmax_ul) = p.s_ul_bits / ru(rt.argmax_ul);
    rt.round_time = rt.t_dl(rt.argmax_dl) + rt.t_cp(rt.argmax_cp) + rt.t_ul(rt.argmax_ul);
  }
  return rt;
}

// G(a) = q / sum_k a_k, valid for relaxed selections.
inline double round_count(const Selection& sel, const SystemParams& p) {
  const double s = sel.sum();
  if (!(s > 0.0)) throw std::domain_error("round_count requires sum(a) > 0");
  return p.q_rounds / s;
}

// T_e = G(a) * mean round time; the sample mean stands in for the
// expectation over large-scale realizations.
inline double total_time(const Selection& sel, const std::vector<RoundTiming>& samples,
                         const SystemParams& p) {
  if (samples.empty()) throw std::invalid_argument("total_time needs at least one sample");
  double acc = 0.0;
  for (const auto& rt : samples) acc += rt.round_time;
  return round_count(sel, p) * acc / static_cast<double>(samples.size());
}

// Per-round sampling baseline round count, q/K + q~ (1 - K/N).
inline double bl2_round_count(int k_per_round, int n_ues, const SystemParams& p) {
  if (k_per_round < p.n_qol || k_per_round > n_ues)
    throw std::invalid_argument("K must lie in [N_qol, N]");
  return p.q_rounds / k_per_round + p.q_tilde * (1.0 - static_cast<double>(k_per_round) / n_ues);
}

}  // namespace cffl
