// SPDX-License-Identifier: Apache-2.0
//
// AP/UE placement on a wrap-around square. Two deployment cases:
//   C1: UEs cluster near hotspots, APs uniform on an interleaved grid.
//   C2: UEs as in C1, APs cluster near a few hotspots drawn from the same
//       hotspot set.
// UE candidate positions live on an x_l-by-x_l grid of cell centers; the AP
// grid is the same grid shifted by half a cell so the two never coincide.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "cffl/rng.hpp"

namespace cffl {

enum class PlacementCase { C1, C2 };

struct PlacementConfig {
  int n_aps = 40;
  int n_ues = 15;
  double d_km = 1.5;
  PlacementCase pcase = PlacementCase::C2;
  int grid_lines = 15;    // x_l
  int n_hotspots = 20;    // x_p
  int n_ap_hotspots = 3;  // x_ap, C2 only

  double side_m() const { return 1000.0 * d_km; }

  void validate() const {
    if (n_aps < 1 || n_ues < 1) throw std::invalid_argument("need at least one AP and one UE");
    if (!(d_km > 0)) throw std::invalid_argument("square side must be positive");
    if (grid_lines < 1 || n_hotspots < 1) throw std::invalid_argument("grid/hotspot counts must be positive");
    if (n_ap_hotspots > n_hotspots) throw std::invalid_argument("x_ap must not exceed x_p");
    if (n_aps > grid_lines * grid_lines)
      throw std::invalid_argument("AP grid too coarse to host the requested number of distinct APs");
  }
};

struct Placement {
  double side_m = 0.0;
  Eigen::Matrix2Xd ap_pos;  // meters, columns are APs
  Eigen::Matrix2Xd ue_pos;  // meters, columns are UEs

  int n_aps() const { return static_cast<int>(ap_pos.cols()); }
  int n_ues() const { return static_cast<int>(ue_pos.cols()); }
};

// Toroidal Euclidean distance; per axis the shorter of direct and wrapped.
inline double wrap_distance(const Eigen::Vector2d& p, const Eigen::Vector2d& q, double side) {
  double dx = std::abs(p.x() - q.x());
  double dy = std::abs(p.y() - q.y());
  dx = std::min(dx, side - dx);
  dy = std::min(dy, side - dy);
  return std::hypot(dx, dy);
}

inline double wrap_coord(double x, double side) {
  double r = std::fmod(x, side);
  if (r < 0) r += side;
  return r;
}

namespace detail {

// Grid points as column list; offset 0.5 gives cell centers (UE grid),
// offset 0.0 the interleaved AP grid.
inline Eigen::Matrix2Xd grid_points(int lines, double side, double offset_cells) {
  const double h = side / lines;
  Eigen::Matrix2Xd pts(2, lines * lines);
  int c = 0;
  for (int i = 0; i < lines; ++i)
    for (int j = 0; j < lines; ++j)
      pts.col(c++) = Eigen::Vector2d((i + offset_cells) * h, (j + offset_cells) * h);
  return pts;
}

// Index of the grid point nearest to p (wrap metric), lowest index on ties.
inline int nearest_grid_point(const Eigen::Matrix2Xd& grid, const Eigen::Vector2d& p, double side) {
  int best = 0;
  double bestd = wrap_distance(grid.col(0), p, side);
  for (int i = 1; i < grid.cols(); ++i) {
    const double d = wrap_distance(grid.col(i), p, side);
    if (d < bestd) {
      bestd = d;
      best = i;
    }
  }
  return best;
}

}  // namespace detail

inline Placement generate_placement(const PlacementConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const double side = cfg.side_m();
  Rng rng(seed_mix(seed, 0x9e0u));

  // Hotspots, uniform over the square.
  Eigen::Matrix2Xd hotspots(2, cfg.n_hotspots);
  for (int i = 0; i < cfg.n_hotspots; ++i) {
    const double x = rng.uniform(0.0, side);
    const double y = rng.uniform(0.0, side);
    hotspots.col(i) = Eigen::Vector2d(x, y);
  }

  const Eigen::Matrix2Xd ue_grid = detail::grid_points(cfg.grid_lines, side, 0.5);
  const Eigen::Matrix2Xd ap_grid = detail::grid_points(cfg.grid_lines, side, 0.0);

  Placement pl;
  pl.side_m = side;

  // UE k snaps to the grid point nearest hotspot k (cycling if N > x_p).
  pl.ue_pos.resize(2, cfg.n_ues);
  for (int k = 0; k < cfg.n_ues; ++k) {
    const int h = k % cfg.n_hotspots;
    pl.ue_pos.col(k) = ue_grid.col(detail::nearest_grid_point(ue_grid, hotspots.col(h), side));
  }

  pl.ap_pos.resize(2, cfg.n_aps);
  if (cfg.pcase == PlacementCase::C1) {
    // Uniform draw of M distinct AP grid points.
    const std::vector<int> pick = rng.subset(static_cast<int>(ap_grid.cols()), cfg.n_aps);
    for (int m = 0; m < cfg.n_aps; ++m) pl.ap_pos.col(m) = ap_grid.col(pick[m]);
  } else {
    // C2: the M AP grid points nearest to x_ap hotspots picked without
    // replacement out of the x_p hotspots.
    const std::vector<int> hs = rng.subset(cfg.n_hotspots, cfg.n_ap_hotspots);
    const int g = static_cast<int>(ap_grid.cols());
    std::vector<std::pair<double, int>> ranked(g);
    for (int i = 0; i < g; ++i) {
      double d = std::numeric_limits<double>::infinity();
      for (int h : hs) d = std::min(d, wrap_distance(ap_grid.col(i), hotspots.col(h), side));
      ranked[i] = {d, i};
    }
    std::sort(ranked.begin(), ranked.end());  // ties resolved by grid index
    for (int m = 0; m < cfg.n_aps; ++m) pl.ap_pos.col(m) = ap_grid.col(ranked[m].second);
  }
  return pl;
}

// Each UE moves uniformly within a disk of the given radius (wrapped);
// APs stay put.
inline Placement perturb_ues(const Placement& base, double radius_m, std::uint64_t seed) {
  Placement out = base;
  Rng rng(seed_mix(seed, 0x9e1u));
  for (int k = 0; k < base.n_ues(); ++k) {
    double dx, dy;
    rng.disk(radius_m, dx, dy);
    out.ue_pos(0, k) = wrap_coord(base.ue_pos(0, k) + dx, base.side_m);
    out.ue_pos(1, k) = wrap_coord(base.ue_pos(1, k) + dy, base.side_m);
  }
  return out;
}

}  // namespace cffl
