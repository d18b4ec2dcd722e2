#include "pkm/workspace.hpp"

#include <cmath>
#include <deque>
#include <sstream>

#include "pkm/errors.hpp"
#include "pkm/io.hpp"

namespace pkm {

double manipulability(const JacobianBundle& b) {
  if (!b.forward) return 0.0;
  double ic = inv_cond(*b.forward);
  return ic * ic;
}

WorkspaceGrid sweep_workspace(const Mechanism& mech, const Vec& seed_config,
                              const SweepOptions& opts) {
  mech.require_admissible(seed_config);
  if (opts.nx < 1 || opts.ny < 1) fail(ErrorKind::DimensionMismatch, "grid resolution");

  WorkspaceGrid grid;
  grid.nx = opts.nx;
  grid.ny = opts.ny;
  grid.cells.resize(static_cast<size_t>(opts.nx) * opts.ny);
  const double dx = (opts.x1 - opts.x0) / opts.nx;
  const double dy = (opts.y1 - opts.y0) / opts.ny;
  auto center = [&](int ix, int iy) {
    return Vec2(opts.x0 + (ix + 0.5) * dx, opts.y0 + (iy + 0.5) * dy);
  };
  for (int iy = 0; iy < opts.ny; ++iy)
    for (int ix = 0; ix < opts.nx; ++ix) {
      WorkspaceCell& c = grid.cells[iy * opts.nx + ix];
      Vec2 p = center(ix, iy);
      c.x = p.x();
      c.y = p.y();
    }

  std::vector<Vec> config(grid.cells.size());
  std::vector<char> solved(grid.cells.size(), 0);

  auto solve_cell = [&](int ix, int iy, const Vec& from) {
    size_t id = static_cast<size_t>(iy) * opts.nx + ix;
    WorkspaceCell& c = grid.cells[id];
    try {
      NewtonResult nr = inverse_position(mech, from, center(ix, iy));
      config[id] = nr.q;
      solved[id] = 1;
      c.reachable = true;
      c.feasible = mech.within_limits(nr.q);
      JacobianBundle b = make_bundle(mech, mech.eval(nr.q), opts.tol_factor);
      c.inv_kappa = manipulability(b);
      if (b.Jp.rows() == b.Jp.cols() && b.Jp.rows() > 0)
        c.mode = b.Jp.determinant() < 0 ? -1 : 1;
      return true;
    } catch (const Error&) {
      return false;
    }
  };

  // Column nearest the seed's end effector, walked up and down, then each row
  // outward from the spine, then breadth-first cleanup from every solved cell.
  Vec2 ee0 = mech.eval(seed_config).ee;
  int sx = std::clamp(static_cast<int>(std::floor((ee0.x() - opts.x0) / dx)), 0, opts.nx - 1);
  int sy = std::clamp(static_cast<int>(std::floor((ee0.y() - opts.y0) / dy)), 0, opts.ny - 1);

  solve_cell(sx, sy, seed_config);
  for (int dir : {1, -1}) {
    for (int iy = sy + dir; iy >= 0 && iy < opts.ny; iy += dir) {
      size_t prev = static_cast<size_t>(iy - dir) * opts.nx + sx;
      if (!solved[prev]) break;
      if (!solve_cell(sx, iy, config[prev])) break;
    }
  }
  for (int iy = 0; iy < opts.ny; ++iy) {
    if (!solved[static_cast<size_t>(iy) * opts.nx + sx]) continue;
    for (int dir : {1, -1}) {
      for (int ix = sx + dir; ix >= 0 && ix < opts.nx; ix += dir) {
        size_t prev = static_cast<size_t>(iy) * opts.nx + (ix - dir);
        if (!solved[prev]) break;
        if (!solve_cell(ix, iy, config[prev])) break;
      }
    }
  }
  std::deque<std::pair<int, int>> queue;
  for (int iy = 0; iy < opts.ny; ++iy)
    for (int ix = 0; ix < opts.nx; ++ix)
      if (solved[static_cast<size_t>(iy) * opts.nx + ix]) queue.push_back({ix, iy});
  const int nbr[4][2] = {{-1, 0}, {1, 0}, {0, -1}, {0, 1}};
  while (!queue.empty()) {
    auto [ix, iy] = queue.front();
    queue.pop_front();
    size_t id = static_cast<size_t>(iy) * opts.nx + ix;
    for (auto& d : nbr) {
      int jx = ix + d[0], jy = iy + d[1];
      if (jx < 0 || jx >= opts.nx || jy < 0 || jy >= opts.ny) continue;
      size_t jd = static_cast<size_t>(jy) * opts.nx + jx;
      if (solved[jd]) continue;
      if (solve_cell(jx, jy, config[id])) queue.push_back({jx, jy});
    }
  }

  // Distance transform from cells that look singular: vanishing isotropy or a
  // branch-tag flip against a neighbor.
  std::deque<std::pair<int, int>> sources;
  std::vector<double> dist(grid.cells.size(), -1.0);
  for (int iy = 0; iy < opts.ny; ++iy)
    for (int ix = 0; ix < opts.nx; ++ix) {
      size_t id = static_cast<size_t>(iy) * opts.nx + ix;
      if (!grid.cells[id].reachable) continue;
      bool sing = grid.cells[id].inv_kappa < 1e-8;
      for (auto& d : nbr) {
        int jx = ix + d[0], jy = iy + d[1];
        if (jx < 0 || jx >= opts.nx || jy < 0 || jy >= opts.ny) continue;
        size_t jd = static_cast<size_t>(jy) * opts.nx + jx;
        if (grid.cells[jd].reachable && grid.cells[jd].mode != grid.cells[id].mode) sing = true;
      }
      if (sing) {
        dist[id] = 0.0;
        sources.push_back({ix, iy});
      }
    }
  while (!sources.empty()) {
    auto [ix, iy] = sources.front();
    sources.pop_front();
    size_t id = static_cast<size_t>(iy) * opts.nx + ix;
    for (auto& d : nbr) {
      int jx = ix + d[0], jy = iy + d[1];
      if (jx < 0 || jx >= opts.nx || jy < 0 || jy >= opts.ny) continue;
      size_t jd = static_cast<size_t>(jy) * opts.nx + jx;
      if (!grid.cells[jd].reachable) continue;
      double nd = dist[id] + (d[0] != 0 ? std::abs(dx) : std::abs(dy));
      if (dist[jd] < 0.0 || nd < dist[jd]) {
        dist[jd] = nd;
        sources.push_back({jx, jy});
      }
    }
  }
  for (size_t i = 0; i < grid.cells.size(); ++i) {
    if (!grid.cells[i].reachable) continue;
    grid.cells[i].sing_dist = dist[i] >= 0.0 ? dist[i] : -1.0;
  }
  return grid;
}

std::string workspace_csv(const WorkspaceGrid& grid) {
  std::ostringstream os;
  os << "x, y, reachable, inv_kappa, mode, feasible\n";
  for (const WorkspaceCell& c : grid.cells) {
    os << fmt(c.x) << ", " << fmt(c.y) << ", " << (c.reachable ? 1 : 0) << ", "
       << fmt(c.inv_kappa) << ", " << c.mode << ", " << (c.feasible ? 1 : 0) << "\n";
  }
  return os.str();
}

}  // namespace pkm
