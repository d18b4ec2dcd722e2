#pragma once

#include "pkm/kinematics.hpp"

namespace pkm {

// Isotropy measure of the actuated-to-output velocity map:
// (sigma_min / sigma_max)^2, in [0, 1]; zero when the forward map does not
// exist at the configuration.
double manipulability(const JacobianBundle& b);

struct SweepOptions {
  double x0 = 0.0, x1 = 1.0, y0 = 0.0, y1 = 1.0;
  int nx = 50, ny = 50;
  double tol_factor = kRankTolFactor;
};

struct WorkspaceCell {
  double x = 0.0, y = 0.0;
  bool reachable = false;
  double inv_kappa = 0.0;
  int mode = 0;           // branch tag from the sign of det Jp (0 when not square)
  bool feasible = false;  // joint limits satisfied
  double sing_dist = -1.0;  // estimated distance to the nearest singular cell
};

struct WorkspaceGrid {
  std::vector<WorkspaceCell> cells;  // row-major, y outer
  int nx = 0, ny = 0;
  const WorkspaceCell& at(int ix, int iy) const { return cells[iy * nx + ix]; }
};

// Sweeps a Cartesian box with branch-consistent seeding: each cell's inverse
// position solve starts from an already-solved neighbor, beginning at the cell
// closest to the seed configuration's end effector. Unreachable targets are
// recorded, never fatal.
WorkspaceGrid sweep_workspace(const Mechanism& mech, const Vec& seed_config,
                              const SweepOptions& opts);

std::string workspace_csv(const WorkspaceGrid& grid);

}  // namespace pkm
