// SPDX-License-Identifier: Apache-2.0
//
// Reference selection schemes and the shared total-time evaluation pipeline.
// BL1 fixes a uniformly drawn subset for the whole process; BL2 redraws a
// fixed-size subset every communication round. Both optimize powers and
// frequencies with the same short-term solver as the main algorithm, so any
// performance difference comes from the selection alone.
#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <vector>

#include "cffl/long_term.hpp"
#include "cffl/network.hpp"
#include "cffl/params.hpp"
#include "cffl/rates.hpp"
#include "cffl/short_term.hpp"
#include "cffl/rng.hpp"

namespace cffl {

// T_e for a fixed selection: mean short-term round time over a stream of
// perturbed large-scale states, times the round count. The same code path
// evaluates the optimized selection and BL1.
inline double evaluate_selection_time(const Selection& sel, const Placement& anchor,
                                      const SystemParams& p, std::uint64_t seed, int n_samples,
                                      const ScaOptions& sca = {}, double rounds_override = -1.0) {
  if (n_samples < 1) throw std::invalid_argument("need at least one evaluation sample");
  RealizationStream stream(anchor, p, seed_mix(seed, 0xe7a1u));
  double acc = 0.0;
  for (int s = 0; s < n_samples; ++s) {
    const NetworkRealization net = stream.next();
    acc += sca_solve(sel, net, p, sca).objective;
  }
  const double rounds = rounds_override > 0.0 ? rounds_override : round_count(sel, p);
  return rounds * acc / n_samples;
}

enum class BaselineScheme { BL1, BL2 };

struct BaselineResult {
  BaselineScheme scheme = BaselineScheme::BL1;
  std::vector<Selection> selection_trace;
  int subset_size = 0;   // N^ for BL1, K for BL2
  double rounds = 0.0;   // G or G~
  double total_time = 0.0;
};

// BL1: N^ ~ UniformInt[N_qol, N] once, one uniform N^-subset for the whole
// process, G = q/N^; powers and frequencies re-optimized per realization.
inline BaselineResult run_bl1(const Placement& anchor, const SystemParams& p, std::uint64_t seed,
                              int n_samples, const ScaOptions& sca = {}) {
  const int n = anchor.n_ues();
  if (p.n_qol > n) throw std::invalid_argument("n_qol exceeds the UE count");
  Rng rng(seed_mix(seed, 0xb100u));
  const int n_hat = static_cast<int>(rng.uniform_int(p.n_qol, n));
  const Selection sel = Selection::from_indices(n, rng.subset(n, n_hat));

  BaselineResult r;
  r.scheme = BaselineScheme::BL1;
  r.subset_size = n_hat;
  r.selection_trace.push_back(sel);
  r.rounds = round_count(sel, p);
  r.total_time = evaluate_selection_time(sel, anchor, p, seed, n_samples, sca);
  return r;
}

// BL2: K ~ UniformInt[N_qol, N] once; each sampled round draws a fresh
// uniform K-subset and a fresh large-scale state; G~ = q/K + q~(1 - K/N).
inline BaselineResult run_bl2(const Placement& anchor, const SystemParams& p, std::uint64_t seed,
                              int n_rounds, const ScaOptions& sca = {}) {
  const int n = anchor.n_ues();
  if (p.n_qol > n) throw std::invalid_argument("n_qol exceeds the UE count");
  if (n_rounds < 1) throw std::invalid_argument("need at least one sampled round");
  Rng rng(seed_mix(seed, 0xb200u));
  const int k_per_round = static_cast<int>(rng.uniform_int(p.n_qol, n));

  BaselineResult r;
  r.scheme = BaselineScheme::BL2;
  r.subset_size = k_per_round;
  r.rounds = bl2_round_count(k_per_round, n, p);

  RealizationStream stream(anchor, p, seed_mix(seed, 0xb201u));
  double acc = 0.0;
  for (int round = 0; round < n_rounds; ++round) {
    const Selection sel = Selection::from_indices(n, rng.subset(n, k_per_round));
    r.selection_trace.push_back(sel);
    const NetworkRealization net = stream.next();
    acc += sca_solve(sel, net, p, sca).objective;
  }
  r.total_time = r.rounds * acc / n_rounds;
  return r;
}

}  // namespace cffl
