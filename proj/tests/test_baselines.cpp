// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "cffl/baselines.hpp"

using namespace cffl;

namespace {

Placement small_placement(int m, int n, std::uint64_t seed) {
  PlacementConfig cfg;
  cfg.n_aps = m;
  cfg.n_ues = n;
  cfg.d_km = 0.75;
  cfg.pcase = PlacementCase::C1;
  return generate_placement(cfg, seed);
}

// Chi-square upper quantile via the Wilson-Hilferty cube approximation.
double chi2_quantile(double z, int df) {
  const double a = 2.0 / (9.0 * df);
  return df * std::pow(1.0 - a + z * std::sqrt(a), 3.0);
}

}  // namespace

TEST_CASE("BL1 subset size is uniform over [N_qol, N]") {
  const int n = 15, n_qol = 5;
  SystemParams p = SystemParams::reference(n, n_qol);
  const int reps = 10000;
  std::vector<int> counts(n - n_qol + 1, 0);
  for (int r = 0; r < reps; ++r) {
    Rng rng(seed_mix(9000 + r, 0xb100u));
    const int n_hat = static_cast<int>(rng.uniform_int(p.n_qol, n));
    REQUIRE(n_hat >= n_qol);
    REQUIRE(n_hat <= n);
    counts[n_hat - n_qol]++;
  }
  const double expect = static_cast<double>(reps) / counts.size();
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - expect) * (c - expect) / expect;
  // 1% significance with df = 10: reject only above the quantile.
  CHECK(chi2 < chi2_quantile(2.3263, static_cast<int>(counts.size()) - 1));
}

TEST_CASE("degenerate interval selects everyone") {
  const int n = 6;
  SystemParams p = SystemParams::reference(n, n);  // N_qol = N
  const Placement pl = small_placement(3, n, 2);
  ScaOptions sca;
  sca.max_outer = 3;
  sca.eps = 1e-3;
  const BaselineResult r = run_bl1(pl, p, 5, 2, sca);
  CHECK(r.subset_size == n);
  CHECK(r.selection_trace[0].n_selected() == n);
  CHECK(r.rounds == Catch::Approx(p.q_rounds / n));
}

TEST_CASE("round-count identities for the baselines") {
  SystemParams p = SystemParams::reference(15, 5);
  Selection nine = Selection::from_indices(15, {0, 1, 2, 3, 4, 5, 6, 7, 8});
  CHECK(round_count(nine, p) == Catch::Approx(10.0));
  CHECK(bl2_round_count(5, 15, p) == Catch::Approx(78.0));
}

TEST_CASE("BL2 redraws subsets per round with fixed size") {
  const int n = 8, n_qol = 3;
  SystemParams p = SystemParams::reference(n, n_qol);
  const Placement pl = small_placement(4, n, 11);
  ScaOptions sca;
  sca.max_outer = 2;
  sca.eps = 1e-2;
  const BaselineResult r = run_bl2(pl, p, 21, 12, sca);
  CHECK(r.subset_size >= n_qol);
  CHECK(r.subset_size <= n);
  CHECK(r.rounds == Catch::Approx(bl2_round_count(r.subset_size, n, p)));
  REQUIRE(r.selection_trace.size() == 12);
  std::set<std::vector<int>> distinct;
  for (const auto& sel : r.selection_trace) {
    CHECK(sel.n_selected() == r.subset_size);
    std::vector<int> idx;
    for (int k = 0; k < n; ++k)
      if (sel.selected(k)) idx.push_back(k);
    distinct.insert(idx);
  }
  // With C(8, K) >= 56 possible subsets, 12 rounds should rarely all agree.
  CHECK(distinct.size() >= 2);
}

TEST_CASE("BL2 round subsets hit every UE at the hypergeometric frequency") {
  const int n = 6, n_qol = 2;
  SystemParams p = SystemParams::reference(n, n_qol);
  // Count inclusion frequency over many independent subset draws with K
  // fixed; each UE appears with probability K/N.
  const int reps = 20000;
  Eigen::VectorXd hits = Eigen::VectorXd::Zero(n);
  const int k_fixed = 3;
  for (int r = 0; r < reps; ++r) {
    Rng rng(seed_mix(222, r));
    for (int idx : rng.subset(n, k_fixed)) hits(idx) += 1.0;
  }
  for (int k = 0; k < n; ++k)
    CHECK(hits(k) / reps == Catch::Approx(static_cast<double>(k_fixed) / n).margin(0.02));
}

TEST_CASE("shared pipeline: BL1 total time equals the generic evaluation") {
  const int n = 5, n_qol = 2;
  SystemParams p = SystemParams::reference(n, n_qol);
  const Placement pl = small_placement(3, n, 8);
  ScaOptions sca;
  sca.max_outer = 3;
  sca.eps = 1e-3;

  const BaselineResult r = run_bl1(pl, p, 33, 4, sca);
  const double direct =
      evaluate_selection_time(r.selection_trace[0], pl, p, 33, 4, sca);
  CHECK(r.total_time == direct);  // bitwise: same code path, same stream
}
