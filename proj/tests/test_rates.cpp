// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "cffl/rates.hpp"

using namespace cffl;

namespace {

NetworkRealization tiny_net(int m, int n, std::uint64_t seed, const SystemParams& p) {
  PlacementConfig cfg;
  cfg.n_aps = m;
  cfg.n_ues = n;
  cfg.d_km = 1.0;
  cfg.pcase = PlacementCase::C1;
  return make_realization(generate_placement(cfg, seed), p, seed);
}

// Term-by-term rate evaluator written independently of rates.hpp: scalar
// loops only, accumulating signal / pilot-contamination / interference the
// way the closed forms read.
double oracle_rate_dl(int k, const Eigen::MatrixXd& v, const NetworkRealization& net,
                      const SystemParams& p) {
  const int m = net.n_aps(), n = net.n_ues();
  double sig_amp = 0.0;
  for (int i = 0; i < m; ++i) sig_amp += v(i, k) * net.sigma2_dl(i, k);
  const double sig = p.rho_d * sig_amp * sig_amp;
  double pc = 0.0;
  for (int l = 0; l < n; ++l) {
    if (l == k) continue;
    double amp = 0.0;
    for (int i = 0; i < m; ++i)
      amp += v(i, l) * net.sigma2_dl(i, l) * net.beta(i, k) / net.beta(i, l);
    pc += p.rho_d * amp * amp * net.pilot_gram(l, k);
  }
  double iui = 0.0;
  for (int l = 0; l < n; ++l)
    for (int i = 0; i < m; ++i)
      iui += p.rho_d * v(i, l) * v(i, l) * net.sigma2_dl(i, l) * net.beta(i, k);
  return (p.tau_c - p.tau_t) / p.tau_c * p.bandwidth_hz * std::log2(1.0 + sig / (pc + iui + 1.0));
}

double oracle_rate_ul(int k, const Eigen::VectorXd& u, const NetworkRealization& net,
                      const SystemParams& p) {
  const int m = net.n_aps(), n = net.n_ues();
  double ssum = 0.0;
  for (int i = 0; i < m; ++i) ssum += net.sigma2_ul(i, k);
  const double sig = p.rho_u * u(k) * u(k) * ssum * ssum;
  double pc = 0.0;
  for (int l = 0; l < n; ++l) {
    if (l == k) continue;
    double amp = 0.0;
    for (int i = 0; i < m; ++i) amp += net.sigma2_ul(i, k) * net.beta(i, l) / net.beta(i, k);
    pc += p.rho_u * u(l) * u(l) * amp * amp * net.pilot_gram(k, l);
  }
  double iui = 0.0;
  for (int l = 0; l < n; ++l) {
    double t = 0.0;
    for (int i = 0; i < m; ++i) t += net.sigma2_ul(i, k) * net.beta(i, l);
    iui += p.rho_u * u(l) * u(l) * t;
  }
  return (p.tau_c - p.tau_t) / p.tau_c * p.bandwidth_hz * std::log2(1.0 + sig / (pc + iui + ssum));
}

}  // namespace

TEST_CASE("zero power gives zero rate") {
  SystemParams p = SystemParams::reference(4);
  const NetworkRealization net = tiny_net(3, 4, 5, p);
  CHECK(downlink_rate(Eigen::MatrixXd::Zero(3, 4), net, p).maxCoeff() == 0.0);
  CHECK(uplink_rate(Eigen::VectorXd::Zero(4), net, p).maxCoeff() == 0.0);
}

TEST_CASE("single AP single UE collapses to the scalar SINR") {
  SystemParams p = SystemParams::reference(1);
  const NetworkRealization net = tiny_net(1, 1, 9, p);
  const double s2 = net.sigma2_dl(0, 0), beta = net.beta(0, 0);

  const double v = 0.5 / std::sqrt(s2);
  Eigen::MatrixXd vm(1, 1);
  vm << v;
  const double sinr = p.rho_d * v * v * s2 * s2 / (p.rho_d * v * v * s2 * beta + 1.0);
  const double expected = (p.tau_c - p.tau_t) / p.tau_c * p.bandwidth_hz * std::log2(1.0 + sinr);
  CHECK(downlink_rate(vm, net, p)(0) == Catch::Approx(expected).epsilon(1e-12));

  Eigen::VectorXd u(1);
  u << 0.7;
  const double sinr_u = p.rho_u * u(0) * u(0) * s2 * s2 / (p.rho_u * u(0) * u(0) * s2 * beta + s2);
  const double expected_u = (p.tau_c - p.tau_t) / p.tau_c * p.bandwidth_hz * std::log2(1.0 + sinr_u);
  CHECK(uplink_rate(u, net, p)(0) == Catch::Approx(expected_u).epsilon(1e-12));
}

TEST_CASE("rates match the independent term-by-term evaluator") {
  Rng rng(17);
  for (int rep = 0; rep < 10; ++rep) {
    const int m = static_cast<int>(rng.uniform_int(2, 6));
    const int n = static_cast<int>(rng.uniform_int(2, 5));
    SystemParams p = SystemParams::reference(n);
    const NetworkRealization net = tiny_net(m, n, 100 + rep, p);

    Eigen::MatrixXd v(m, n);
    for (int i = 0; i < m * n; ++i)
      v(i / n, i % n) = rng.uniform(0.0, 1.0) / std::sqrt(net.sigma2_dl(i / n, i % n) * n);
    Eigen::VectorXd u(n);
    for (int k = 0; k < n; ++k) u(k) = rng.uniform(0.0, 1.0);

    const Eigen::VectorXd rd = downlink_rate(v, net, p);
    const Eigen::VectorXd ru = uplink_rate(u, net, p);
    for (int k = 0; k < n; ++k) {
      CHECK(rd(k) == Catch::Approx(oracle_rate_dl(k, v, net, p)).epsilon(1e-12));
      CHECK(ru(k) == Catch::Approx(oracle_rate_ul(k, u, net, p)).epsilon(1e-12));
    }
  }
}

TEST_CASE("rates bounded by the interference-free ceiling and monotone alone") {
  SystemParams p = SystemParams::reference(3);
  const NetworkRealization net = tiny_net(4, 3, 23, p);
  Rng rng(5);

  // With only UE k powered and no pilot collision, R_dk is nondecreasing in
  // each v(m,k); also every rate is below the zero-interference bound.
  Eigen::MatrixXd v = Eigen::MatrixXd::Zero(4, 3);
  const int k = 0;
  double prev = 0.0;
  for (int stepi = 1; stepi <= 5; ++stepi) {
    for (int i = 0; i < 4; ++i) v(i, k) = stepi * 0.1 / std::sqrt(net.sigma2_dl(i, k));
    const double r = downlink_rate(v, net, p)(k);
    CHECK(r >= prev - 1e-9);
    prev = r;
  }

  Eigen::MatrixXd vr(4, 3);
  for (int i = 0; i < 12; ++i) vr(i / 3, i % 3) = rng.uniform(0.0, 0.5) / std::sqrt(net.sigma2_dl(i / 3, i % 3));
  const Eigen::VectorXd rd = downlink_rate(vr, net, p);
  for (int kk = 0; kk < 3; ++kk) {
    double amp = 0.0;
    for (int i = 0; i < 4; ++i) amp += vr(i, kk) * net.sigma2_dl(i, kk);
    const double ceiling = (p.tau_c - p.tau_t) / p.tau_c * p.bandwidth_hz *
                           std::log2(1.0 + p.rho_d * amp * amp);
    CHECK(rd(kk) >= 0.0);
    CHECK(rd(kk) <= ceiling + 1e-9);
  }
}

TEST_CASE("step times: equal rates give S/R, reference compute time, one-hot sums") {
  SystemParams p = SystemParams::reference(3);
  const NetworkRealization net = tiny_net(2, 3, 31, p);

  PowerAllocation alloc;
  alloc.v.setZero(2, 3);
  for (int i = 0; i < 2; ++i)
    for (int kk = 0; kk < 3; ++kk) alloc.v(i, kk) = 0.4 / std::sqrt(net.sigma2_dl(i, kk) * 3);
  alloc.u = Eigen::VectorXd::Constant(3, 0.8);
  alloc.f = Eigen::VectorXd::Constant(3, p.f_max);

  const Selection sel = Selection::all_on(3);
  const RoundTiming rt = step_times(sel, alloc, net, p);

  // Reference compute time L D c / f_max = 5*5e6*20/3e9 s.
  const double tc_ref = 5.0 * 5e6 * 20.0 / 3e9;
  for (int kk = 0; kk < 3; ++kk) CHECK(rt.t_cp(kk) == Catch::Approx(tc_ref));

  const Eigen::VectorXd rd = downlink_rate(alloc.v, net, p);
  for (int kk = 0; kk < 3; ++kk) CHECK(rt.t_dl(kk) == Catch::Approx(p.s_dl_bits / rd(kk)));

  // One-hot identity: a^T t~ sums reproduce the max terms and T_o.
  const double to_direct = rt.t_dl.maxCoeff() + rt.t_cp.maxCoeff() + rt.t_ul.maxCoeff();
  CHECK(rt.round_time == Catch::Approx(to_direct));
  CHECK(sel.a.dot(rt.onehot_dl) + sel.a.dot(rt.onehot_cp) + sel.a.dot(rt.onehot_ul) ==
        Catch::Approx(rt.round_time));

  // Compute-time argmax ties break to the lowest index.
  CHECK(rt.argmax_cp == 0);
  CHECK(rt.onehot_cp(0) == Catch::Approx(tc_ref));

  // Non-selected UEs: all times zero.
  Selection partial = Selection::from_indices(3, {1});
  const RoundTiming rp = step_times(partial, alloc, net, p);
  CHECK(rp.t_dl(0) == 0.0);
  CHECK(rp.t_cp(2) == 0.0);
  CHECK(rp.round_time == Catch::Approx(rp.t_dl(1) + rp.t_cp(1) + rp.t_ul(1)));
}

TEST_CASE("step times scale linearly in the payload") {
  SystemParams p = SystemParams::reference(3);
  const NetworkRealization net = tiny_net(2, 3, 37, p);
  PowerAllocation alloc;
  alloc.v.setConstant(2, 3, 1e4);
  alloc.u = Eigen::VectorXd::Constant(3, 0.5);
  alloc.f = Eigen::VectorXd::Constant(3, p.f_max);
  const Selection sel = Selection::all_on(3);

  const RoundTiming base = step_times(sel, alloc, net, p);
  SystemParams p2 = p;
  p2.s_dl_bits *= 3.0;
  const RoundTiming scaled = step_times(sel, alloc, net, p2);
  for (int kk = 0; kk < 3; ++kk)
    CHECK(scaled.t_dl(kk) == Catch::Approx(3.0 * base.t_dl(kk)).epsilon(1e-12));
}

TEST_CASE("selected UE with zero rate raises infeasible timing") {
  SystemParams p = SystemParams::reference(2);
  const NetworkRealization net = tiny_net(2, 2, 41, p);
  PowerAllocation alloc;
  alloc.v.setZero(2, 2);  // zero power, zero rate
  alloc.u = Eigen::VectorXd::Zero(2);
  alloc.f = Eigen::VectorXd::Constant(2, p.f_max);
  CHECK_THROWS_AS(step_times(Selection::all_on(2), alloc, net, p), InfeasibleTiming);
}

TEST_CASE("round count identities") {
  SystemParams p = SystemParams::reference(15);
  Selection s15 = Selection::all_on(15);
  CHECK(round_count(s15, p) == Catch::Approx(6.0));
  Selection s5 = Selection::from_indices(15, {0, 1, 2, 3, 4});
  CHECK(round_count(s5, p) == Catch::Approx(18.0));
  Selection relaxed(Eigen::VectorXd::Constant(15, 0.5));
  CHECK(round_count(relaxed, p) == Catch::Approx(12.0));
  Selection zero(Eigen::VectorXd::Zero(15));
  CHECK_THROWS_AS(round_count(zero, p), std::domain_error);

  // Halving the selected count doubles G.
  Selection s10 = Selection::from_indices(15, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
  CHECK(round_count(s5, p) == Catch::Approx(2.0 * round_count(s10, p)));
}

TEST_CASE("total time is G times the mean round time") {
  SystemParams p = SystemParams::reference(15);
  Selection s15 = Selection::all_on(15);
  RoundTiming rt;
  rt.round_time = 10.0;
  CHECK(total_time(s15, {rt}, p) == Catch::Approx(60.0));

  Rng rng(8);
  std::vector<RoundTiming> samples(7);
  double acc = 0.0;
  for (auto& r : samples) {
    r.round_time = rng.uniform(1.0, 5.0);
    acc += r.round_time;
  }
  const double expect = p.q_rounds / 15.0 * acc / 7.0;
  CHECK(total_time(s15, samples, p) == Catch::Approx(expect));

  std::vector<RoundTiming> doubled = samples;
  for (auto& r : doubled) r.round_time *= 2.0;
  CHECK(total_time(s15, doubled, p) == Catch::Approx(2.0 * expect));
}

TEST_CASE("per-round sampling round count") {
  SystemParams p = SystemParams::reference(15);
  CHECK(bl2_round_count(15, 15, p) == Catch::Approx(6.0));
  CHECK(bl2_round_count(5, 15, p) == Catch::Approx(78.0));
  CHECK(bl2_round_count(10, 15, p) == Catch::Approx(39.0));
  CHECK_THROWS_AS(bl2_round_count(2, 15, p), std::invalid_argument);
  CHECK_THROWS_AS(bl2_round_count(16, 15, p), std::invalid_argument);
}
