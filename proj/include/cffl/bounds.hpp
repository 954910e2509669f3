// SPDX-License-Identifier: Apache-2.0
//
// Concave lower bounds on the downlink/uplink rates around a linearization
// point, the inner-approximation step of the short-term SCA loop. Built on
// the identity family
//   log(1 + U^2/P) >= log(1 + U0^2/P0) - U0^2/P0 + 2 U0 U / P0
//                     - U0^2 (U^2 + P) / (P0 (U0^2 + P0))
// which is tight and gradient-matching at (U0, P0) and a global lower bound
// on U, P > 0. U is affine in the amplitudes, P convex quadratic, so the
// right-hand side is concave.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "cffl/network.hpp"
#include "cffl/params.hpp"
#include "cffl/rates.hpp"

namespace cffl {

struct BoundCoefficients {
  int n_aps = 0, n_ues = 0;
  double prefac_nats = 0.0;  // (tau_c - tau_t)/(tau_c ln2) * B, rate per nat of log

  // Downlink: Upsilon_k(v) = sum_m ups_coeff(m,k) v(m,k),
  // Pi_k(v) = sum_l (pc_row . v(.,l))^2 + sum_{m,l} iui_coeff[k](m,l) v(m,l)^2 + 1.
  Eigen::VectorXd ups0, pi0;
  Eigen::MatrixXd ups_coeff;  // M x N
  std::vector<std::vector<std::pair<int, Eigen::VectorXd>>> pc_rows;  // per k: (l, coeffs)
  std::vector<Eigen::MatrixXd> iui_coeff;                             // per k: M x N

  // Uplink: Psi_k(u) = psi_coeff(k) u(k),
  // Xi_k(u) = sum_l ul_quad(k,l) u(l)^2 + xi_const(k).
  Eigen::VectorXd psi0, xi0, xi_const, psi_coeff;
  Eigen::MatrixXd ul_quad;  // N x N

  double eval_rd_tilde(int k, const Eigen::MatrixXd& v) const {
    if (!(ups0(k) > 0.0)) return 0.0;
    const double ups = (ups_coeff.col(k).array() * v.col(k).array()).sum();
    double quad = 0.0;
    for (const auto& [l, row] : pc_rows[k]) {
      const double amp = row.dot(v.col(l));
      quad += amp * amp;
    }
    quad += (iui_coeff[k].array() * v.array().square()).sum();
    const double pi = quad + 1.0;
    return bound_value(ups0(k), pi0(k), ups, pi);
  }

  double eval_ru_tilde(int k, const Eigen::VectorXd& u) const {
    if (!(psi0(k) > 0.0)) return 0.0;
    const double psi = psi_coeff(k) * u(k);
    const double xi = ul_quad.row(k).dot(u.array().square().matrix()) + xi_const(k);
    return bound_value(psi0(k), xi0(k), psi, xi);
  }

 private:
  double bound_value(double u0, double p0, double u, double p) const {
    const double s0 = u0 * u0 / p0;
    return prefac_nats * (std::log1p(s0) - s0 + 2.0 * u0 * u / p0 -
                          u0 * u0 * (u * u + p) / (p0 * (u0 * u0 + p0)));
  }
};

// Coefficients of the concave bounds anchored at `iterate`; the iterate must
// be feasible for the exact constraint set.
inline BoundCoefficients build_bounds(const PowerAllocation& iterate, const NetworkRealization& net,
                                      const SystemParams& p) {
  const int m = net.n_aps(), n = net.n_ues();
  BoundCoefficients bc;
  bc.n_aps = m;
  bc.n_ues = n;
  bc.prefac_nats = (p.tau_c - p.tau_t) / (p.tau_c * std::log(2.0)) * p.bandwidth_hz;

  const Eigen::MatrixXd& s2d = net.sigma2_dl;
  const Eigen::MatrixXd& s2u = net.sigma2_ul;
  const double sqrt_rho_d = std::sqrt(p.rho_d);

  bc.ups_coeff = sqrt_rho_d * s2d;
  bc.pc_rows.resize(n);
  bc.iui_coeff.resize(n);
  bc.ups0.resize(n);
  bc.pi0.resize(n);
  for (int k = 0; k < n; ++k) {
    bc.ups0(k) = (bc.ups_coeff.col(k).array() * iterate.v.col(k).array()).sum();
    for (int l = 0; l < n; ++l) {
      if (l == k || net.pilot_gram(l, k) == 0.0) continue;
      Eigen::VectorXd row(m);
      for (int i = 0; i < m; ++i)
        row(i) = sqrt_rho_d * s2d(i, l) * net.beta(i, k) / net.beta(i, l);
      bc.pc_rows[k].emplace_back(l, std::move(row));
    }
    Eigen::MatrixXd iui(m, n);
    for (int l = 0; l < n; ++l)
      for (int i = 0; i < m; ++i) iui(i, l) = p.rho_d * s2d(i, l) * net.beta(i, k);
    bc.iui_coeff[k] = std::move(iui);

    double quad = 0.0;
    for (const auto& [l, row] : bc.pc_rows[k]) {
      const double amp = row.dot(iterate.v.col(l));
      quad += amp * amp;
    }
    quad += (bc.iui_coeff[k].array() * iterate.v.array().square()).sum();
    bc.pi0(k) = quad + 1.0;
  }

  bc.psi_coeff.resize(n);
  bc.xi_const.resize(n);
  bc.ul_quad.setZero(n, n);
  bc.psi0.resize(n);
  bc.xi0.resize(n);
  for (int k = 0; k < n; ++k) {
    const double ssum = s2u.col(k).sum();
    bc.psi_coeff(k) = std::sqrt(p.rho_u) * ssum;
    bc.xi_const(k) = ssum;
    for (int l = 0; l < n; ++l) {
      double iui = 0.0;
      for (int i = 0; i < m; ++i) iui += s2u(i, k) * net.beta(i, l);
      double pc = 0.0;
      if (l != k && net.pilot_gram(k, l) != 0.0) {
        double amp = 0.0;
        for (int i = 0; i < m; ++i) amp += s2u(i, k) * net.beta(i, l) / net.beta(i, k);
        pc = amp * amp * net.pilot_gram(k, l);
      }
      bc.ul_quad(k, l) = p.rho_u * (iui + pc);
    }
    bc.psi0(k) = bc.psi_coeff(k) * iterate.u(k);
    bc.xi0(k) =
        bc.ul_quad.row(k).dot(iterate.u.array().square().matrix()) + bc.xi_const(k);
  }
  return bc;
}

}  // namespace cffl
