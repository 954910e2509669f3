// SPDX-License-Identifier: Apache-2.0
//
// Large-scale channel state for one realization: path loss, correlated
// shadowing, random pilot assignment and the MMSE channel-estimate
// variances that parameterize every rate expression.
#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "cffl/geometry.hpp"
#include "cffl/params.hpp"
#include "cffl/rng.hpp"

namespace cffl {

// PL(d) = -30.5 - 36.7 log10(d / 1 m); distances clamped to 1 m so the
// formula stays finite (the model is 2-D, no antenna heights).
inline double path_loss_db(double d_m) {
  const double d = std::max(d_m, 1.0);
  return -30.5 - 36.7 * std::log10(d);
}

// Shadowing covariance across UEs, shared by every AP row:
// C(k,l) = 4^2 * 2^(-delta_kl / 9 m) with delta the UE-UE wrap distance.
inline Eigen::MatrixXd shadowing_covariance(const Placement& pl) {
  const int n = pl.n_ues();
  Eigen::MatrixXd c(n, n);
  for (int k = 0; k < n; ++k) {
    c(k, k) = 16.0;
    for (int l = k + 1; l < n; ++l) {
      const double d = wrap_distance(pl.ue_pos.col(k), pl.ue_pos.col(l), pl.side_m);
      c(k, l) = c(l, k) = 16.0 * std::pow(2.0, -d / 9.0);
    }
  }
  return c;
}

// M x N shadowing matrix in dB. Rows (APs) independent; within a row the
// covariance is the kernel above. The kernel is positive definite for
// distinct UEs but exactly singular for co-located ones, so the factor is a
// pivoted LDL^T (negative roundoff pivots clamped); plain Cholesky with
// escalating diagonal jitter is the fallback.
inline Eigen::MatrixXd sample_shadowing(const Placement& pl, std::uint64_t seed) {
  const int m = pl.n_aps(), n = pl.n_ues();
  Eigen::MatrixXd cov = shadowing_covariance(pl);

  // LDLT reports NumericalIssue on exactly singular kernels even though the
  // factor is fine, so judge it by reconstruction error instead of info().
  Eigen::MatrixXd factor(n, n);
  Eigen::LDLT<Eigen::MatrixXd> ldlt(cov);
  Eigen::VectorXd d = ldlt.vectorD().cwiseMax(0.0).cwiseSqrt();
  factor = ldlt.transpositionsP().transpose() *
           Eigen::MatrixXd(Eigen::MatrixXd(ldlt.matrixL()) * d.asDiagonal());
  const double recon_err = (factor * factor.transpose() - cov).cwiseAbs().maxCoeff();
  if (!(recon_err <= 1e-8 * cov.diagonal().maxCoeff())) {
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    double jitter = 1e-9;
    while (llt.info() != Eigen::Success) {
      cov.diagonal().array() += jitter;
      llt.compute(cov);
      jitter *= 10.0;
      if (jitter > 1e-2) throw std::runtime_error("shadowing covariance not factorizable");
    }
    factor = llt.matrixL();
  }

  Rng rng(seed_mix(seed, 0x5adu));
  Eigen::MatrixXd f(m, n);
  Eigen::VectorXd z(n);
  for (int i = 0; i < m; ++i) {
    for (int k = 0; k < n; ++k) z(k) = rng.normal();
    f.row(i) = (factor * z).transpose();
  }
  return f;
}

// beta = 10^(PL/10) * 10^(F/10), elementwise (linear scale).
inline Eigen::MatrixXd large_scale_fading(const Eigen::MatrixXd& pl_db, const Eigen::MatrixXd& f_db) {
  if (pl_db.rows() != f_db.rows() || pl_db.cols() != f_db.cols())
    throw std::invalid_argument("path-loss and shadowing shapes differ");
  return ((pl_db + f_db) / 10.0).array().unaryExpr([](double x) { return std::pow(10.0, x); }).matrix();
}

struct PilotAssignment {
  Eigen::VectorXi pilot;      // 1-based indices in {1..tau_t}
  Eigen::MatrixXd pilot_gram; // |phi_k^H phi_l|^2 in {0,1}
};

// Each UE draws its pilot uniformly from tau_t orthogonal sequences,
// with replacement (collisions allowed).
inline PilotAssignment assign_pilots(int n_ues, int tau_t, std::uint64_t seed) {
  if (tau_t < 1) throw std::invalid_argument("tau_t must be >= 1");
  Rng rng(seed_mix(seed, 0x417u));
  PilotAssignment pa;
  pa.pilot.resize(n_ues);
  for (int k = 0; k < n_ues; ++k) pa.pilot(k) = static_cast<int>(rng.uniform_int(1, tau_t));
  pa.pilot_gram.setZero(n_ues, n_ues);
  for (int k = 0; k < n_ues; ++k)
    for (int l = 0; l < n_ues; ++l) pa.pilot_gram(k, l) = (pa.pilot(k) == pa.pilot(l)) ? 1.0 : 0.0;
  return pa;
}

// sigma2(m,k) = tau_t rho_t beta(m,k)^2 / (sum_l tau_t rho_t beta(m,l) gram(k,l) + 1)
inline Eigen::MatrixXd mmse_variance(const Eigen::MatrixXd& beta, const Eigen::MatrixXd& pilot_gram,
                                     double tau_t, double rho_t) {
  const int m = static_cast<int>(beta.rows());
  const int n = static_cast<int>(beta.cols());
  Eigen::MatrixXd s(m, n);
  for (int i = 0; i < m; ++i) {
    for (int k = 0; k < n; ++k) {
      double den = 1.0;
      for (int l = 0; l < n; ++l) den += tau_t * rho_t * beta(i, l) * pilot_gram(k, l);
      s(i, k) = tau_t * rho_t * beta(i, k) * beta(i, k) / den;
    }
  }
  return s;
}

struct NetworkRealization {
  Placement placement;
  Eigen::MatrixXd beta;        // M x N, linear
  Eigen::VectorXi pilot;       // length N, 1-based
  Eigen::MatrixXd pilot_gram;  // N x N, {0,1}
  Eigen::MatrixXd sigma2_dl;   // M x N, MMSE estimate variance, step (S1)
  Eigen::MatrixXd sigma2_ul;   // M x N, step (S3); equal to sigma2_dl here

  int n_aps() const { return static_cast<int>(beta.rows()); }
  int n_ues() const { return static_cast<int>(beta.cols()); }
};

inline NetworkRealization make_realization(const Placement& pl, const SystemParams& p,
                                           std::uint64_t seed) {
  NetworkRealization net;
  net.placement = pl;
  const int m = pl.n_aps(), n = pl.n_ues();

  Eigen::MatrixXd pl_db(m, n);
  for (int i = 0; i < m; ++i)
    for (int k = 0; k < n; ++k)
      pl_db(i, k) = path_loss_db(wrap_distance(pl.ap_pos.col(i), pl.ue_pos.col(k), pl.side_m));

  const Eigen::MatrixXd f_db = sample_shadowing(pl, seed);
  net.beta = large_scale_fading(pl_db, f_db);

  const PilotAssignment pa = assign_pilots(n, static_cast<int>(p.tau_t), seed);
  net.pilot = pa.pilot;
  net.pilot_gram = pa.pilot_gram;

  net.sigma2_dl = mmse_variance(net.beta, net.pilot_gram, p.tau_t, p.rho_t);
  net.sigma2_ul = net.sigma2_dl;  // same pilots and estimator in steps (S1) and (S3)
  return net;
}

// Stationary stream of large-scale states: every draw perturbs the UEs of
// the same anchor placement by up to 5 m and re-estimates. The pilot
// assignment belongs to the network setup and is drawn once per stream.
// Shadowing is treated as a spatial Gaussian field with the same kernel
// that defines the UE-to-UE correlation: each draw is sampled conditionally
// on the anchor state, so a 5 m move keeps its shadowing 2^(-5/9)-correlated
// with the anchor instead of being redrawn independently.
class RealizationStream {
 public:
  RealizationStream(Placement anchor, SystemParams params, std::uint64_t seed,
                    double perturb_radius_m = 5.0)
      : anchor_(std::move(anchor)), params_(std::move(params)), seed_(seed),
        radius_(perturb_radius_m) {
    pilots_ = assign_pilots(anchor_.n_ues(), static_cast<int>(params_.tau_t),
                            seed_mix(seed_, 0x4170u));
    f_anchor_ = sample_shadowing(anchor_, seed_mix(seed_, 0xf0f0u));
    cov_anchor_ = shadowing_covariance(anchor_);
    cov_anchor_.diagonal().array() += 1e-9;
  }

  NetworkRealization next() {
    const std::uint64_t s = seed_mix(seed_, static_cast<std::uint64_t>(counter_++));
    const Placement pl = perturb_ues(anchor_, radius_, s);
    NetworkRealization net;
    net.placement = pl;
    const int m = pl.n_aps(), n = pl.n_ues();

    // Conditional field at the perturbed positions given the anchor values.
    Eigen::MatrixXd cross(n, n);  // kernel between new (rows) and anchor (cols)
    for (int k = 0; k < n; ++k)
      for (int l = 0; l < n; ++l)
        cross(k, l) = 16.0 * std::pow(2.0, -wrap_distance(pl.ue_pos.col(k),
                                                          anchor_.ue_pos.col(l), pl.side_m) / 9.0);
    const Eigen::MatrixXd cov_new = shadowing_covariance(pl);
    Eigen::LDLT<Eigen::MatrixXd> ldlt_anchor(cov_anchor_);
    const Eigen::MatrixXd gain = ldlt_anchor.solve(cross.transpose()).transpose();  // C_na C_aa^-1
    Eigen::MatrixXd cond_cov = cov_new - gain * cross.transpose();
    cond_cov = 0.5 * (cond_cov + cond_cov.transpose());

    Eigen::LDLT<Eigen::MatrixXd> ldlt_cond(cond_cov);
    const Eigen::VectorXd d = ldlt_cond.vectorD().cwiseMax(0.0).cwiseSqrt();
    const Eigen::MatrixXd factor =
        ldlt_cond.transpositionsP().transpose() *
        Eigen::MatrixXd(Eigen::MatrixXd(ldlt_cond.matrixL()) * d.asDiagonal());

    Rng rng(seed_mix(s, 0xbeefu));
    Eigen::MatrixXd f(m, n);
    Eigen::VectorXd z(n);
    for (int i = 0; i < m; ++i) {
      for (int k = 0; k < n; ++k) z(k) = rng.normal();
      f.row(i) = (gain * f_anchor_.row(i).transpose() + factor * z).transpose();
    }

    Eigen::MatrixXd pl_db(m, n);
    for (int i = 0; i < m; ++i)
      for (int k = 0; k < n; ++k)
        pl_db(i, k) = path_loss_db(wrap_distance(pl.ap_pos.col(i), pl.ue_pos.col(k), pl.side_m));
    net.beta = large_scale_fading(pl_db, f);
    net.pilot = pilots_.pilot;
    net.pilot_gram = pilots_.pilot_gram;
    net.sigma2_dl = mmse_variance(net.beta, net.pilot_gram, params_.tau_t, params_.rho_t);
    net.sigma2_ul = net.sigma2_dl;
    return net;
  }

  const Placement& anchor() const { return anchor_; }

 private:
  Placement anchor_;
  SystemParams params_;
  std::uint64_t seed_;
  double radius_;
  PilotAssignment pilots_;
  Eigen::MatrixXd f_anchor_;   // anchor shadowing, dB
  Eigen::MatrixXd cov_anchor_; // anchor kernel (jittered for the solve)
  int counter_ = 0;
};

// --- plain-text dump for regression fixtures ------------------------------

inline void dump_realization(const NetworkRealization& net, std::ostream& os) {
  const int m = net.n_aps(), n = net.n_ues();
  os.precision(17);
  os << "cffl-realization v1\n";
  os << "side_m " << net.placement.side_m << "\n";
  os << "M " << m << "\nN " << n << "\n";
  os << "ap_positions\n";
  for (int i = 0; i < m; ++i)
    os << net.placement.ap_pos(0, i) << " " << net.placement.ap_pos(1, i) << "\n";
  os << "ue_positions\n";
  for (int k = 0; k < n; ++k)
    os << net.placement.ue_pos(0, k) << " " << net.placement.ue_pos(1, k) << "\n";
  os << "beta\n";
  for (int i = 0; i < m; ++i) {
    for (int k = 0; k < n; ++k) os << net.beta(i, k) << (k + 1 < n ? ' ' : '\n');
  }
  os << "pilot\n";
  for (int k = 0; k < n; ++k) os << net.pilot(k) << (k + 1 < n ? ' ' : '\n');
  os << "sigma2_dl\n";
  for (int i = 0; i < m; ++i) {
    for (int k = 0; k < n; ++k) os << net.sigma2_dl(i, k) << (k + 1 < n ? ' ' : '\n');
  }
}

inline NetworkRealization load_realization(std::istream& is) {
  NetworkRealization net;
  std::string tok;
  is >> tok;  // "cffl-realization"
  std::string ver;
  is >> ver;
  if (tok != "cffl-realization" || ver != "v1") throw std::runtime_error("bad realization header");
  int m = 0, n = 0;
  double side = 0;
  is >> tok >> side >> tok >> m >> tok >> n;
  net.placement.side_m = side;
  net.placement.ap_pos.resize(2, m);
  net.placement.ue_pos.resize(2, n);
  is >> tok;  // ap_positions
  for (int i = 0; i < m; ++i) is >> net.placement.ap_pos(0, i) >> net.placement.ap_pos(1, i);
  is >> tok;  // ue_positions
  for (int k = 0; k < n; ++k) is >> net.placement.ue_pos(0, k) >> net.placement.ue_pos(1, k);
  is >> tok;  // beta
  net.beta.resize(m, n);
  for (int i = 0; i < m; ++i)
    for (int k = 0; k < n; ++k) is >> net.beta(i, k);
  is >> tok;  // pilot
  net.pilot.resize(n);
  for (int k = 0; k < n; ++k) is >> net.pilot(k);
  net.pilot_gram.setZero(n, n);
  for (int k = 0; k < n; ++k)
    for (int l = 0; l < n; ++l) net.pilot_gram(k, l) = (net.pilot(k) == net.pilot(l)) ? 1.0 : 0.0;
  is >> tok;  // sigma2_dl
  net.sigma2_dl.resize(m, n);
  for (int i = 0; i < m; ++i)
    for (int k = 0; k < n; ++k) is >> net.sigma2_dl(i, k);
  net.sigma2_ul = net.sigma2_dl;
  if (!is) throw std::runtime_error("truncated realization dump");
  return net;
}

}  // namespace cffl
