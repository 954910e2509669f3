// SPDX-License-Identifier: Apache-2.0
//
// Scalar system constants shared by the channel model, the timing model and
// the optimizers. Transmit powers are stored normalized by the noise power
// (linear scale), matching the rate formulas.
#pragma once

#include <cmath>
#include <stdexcept>

namespace cffl {

struct SystemParams {
  // Frame structure
  double tau_c = 200.0;  // samples per coherence block
  double tau_t = 15.0;   // pilot length in samples (defaults to N)

  // Powers, normalized by noise power (linear)
  double noise_dbm = -92.0;
  double rho_d = 0.0;  // per-AP downlink
  double rho_u = 0.0;  // per-UE uplink
  double rho_t = 0.0;  // pilot

  // Radio and payload
  double bandwidth_hz = 20e6;  // B; not listed in the reference setup, configurable
  double s_dl_bits = 4e7;      // global model update, 5 MB
  double s_ul_bits = 4e7;      // local model update, 5 MB

  // Local computation
  double local_iters = 5.0;          // L
  double samples_per_ue = 5e6;       // D_k
  double cycles_per_sample = 20.0;   // c_k
  double f_max = 3e9;                // cycles/s

  // FL round-count model
  double q_rounds = 90.0;
  double q_tilde = 90.0;

  // Selection / long-term optimization
  int n_qol = 5;
  double lambda_penalty = 1.0;
  double tau_prox = 1.0;

  // Step-size schedules: phi(n) = n^-phi_exponent, pi(n) = pi_c/(pi_c + n)
  double phi_exponent = 0.9;
  double pi_constant = 1000.0;

  double noise_watts() const { return 1e-3 * std::pow(10.0, noise_dbm / 10.0); }

  double phi(int n) const { return std::pow(static_cast<double>(n), -phi_exponent); }
  double pi(int n) const { return pi_constant / (pi_constant + static_cast<double>(n)); }

  // Per-iteration local computing time at full frequency, L*D_k*c_k/f_max.
  double compute_time_floor() const {
    return local_iters * samples_per_ue * cycles_per_sample / f_max;
  }

  void validate() const {
    if (!(tau_t >= 1.0 && tau_t < tau_c)) throw std::invalid_argument("require 1 <= tau_t < tau_c");
    if (!(rho_d > 0 && rho_u > 0 && rho_t > 0)) throw std::invalid_argument("powers must be positive");
    if (!(bandwidth_hz > 0 && s_dl_bits > 0 && s_ul_bits > 0)) throw std::invalid_argument("sizes must be positive");
    if (!(f_max > 0 && samples_per_ue > 0 && cycles_per_sample > 0 && local_iters > 0))
      throw std::invalid_argument("compute parameters must be positive");
    if (!(q_rounds > 0 && q_tilde > 0)) throw std::invalid_argument("round constants must be positive");
    if (n_qol < 1) throw std::invalid_argument("n_qol must be >= 1");
    if (!(tau_prox > 0)) throw std::invalid_argument("tau_prox must be positive");
  }

  // Reference setup: tau_c=200, pilots tau_t=N, 1 W / 0.2 W / 0.2 W max
  // powers at -92 dBm noise, 5 MB updates, L=5, D_k=5e6, c_k=20, f_max=3e9,
  // q = q~ = 90.
  static SystemParams reference(int n_ues, int n_qol = 5) {
    SystemParams p;
    p.tau_t = static_cast<double>(n_ues);
    const double nw = p.noise_watts();
    p.rho_d = 1.0 / nw;
    p.rho_u = 0.2 / nw;
    p.rho_t = 0.2 / nw;
    p.n_qol = n_qol;
    return p;
  }
};

}  // namespace cffl
