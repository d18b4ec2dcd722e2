#include <doctest.h>

#include <cmath>
#include <sstream>

#include "oracles.hpp"
#include "pkm/errors.hpp"
#include "pkm/kinematics.hpp"
#include "pkm/linalg.hpp"
#include "pkm/workspace.hpp"

using namespace pkm;

namespace {

Vec stretched_five_bar() {
  Vec q(5);
  q << 2.0 * M_PI / 3.0, M_PI / 3.0, -2.0 * M_PI / 3.0, 2.0 * M_PI / 3.0, 0.0;
  return q;
}

}  // namespace

TEST_CASE("manipulability is the squared inverse condition of the forward map") {
  Mechanism m = oracle::load_fixture("open_2r.json");
  auto b = make_bundle(m, m.eval(*m.reference_q));
  REQUIRE(b.forward.has_value());
  double ic = inv_cond(*b.forward);
  CHECK(manipulability(b) == doctest::Approx(ic * ic));
  CHECK(manipulability(b) > 0.0);
  CHECK(manipulability(b) <= 1.0);

  Vec straight(2);
  straight << 0.4, 0.0;
  auto bs = make_bundle(m, m.eval(straight));
  CHECK(manipulability(bs) == 0.0);
}

TEST_CASE("manipulability vanishes when the forward map does not exist") {
  Mechanism m = oracle::load_fixture("five_bar.json");
  auto b = make_bundle(m, m.eval(stretched_five_bar()));
  CHECK_FALSE(b.forward.has_value());
  CHECK(manipulability(b) == 0.0);
}

TEST_CASE("five_bar sweep is mirror symmetric about the base midline") {
  Mechanism m = oracle::load_fixture("five_bar.json");
  auto sym = oracle::five_bar_from_point(Vec2(1.0, 1.2), +1, -1);
  REQUIRE(sym.has_value());
  SweepOptions opts;
  opts.x0 = -0.1;
  opts.x1 = 2.1;
  opts.y0 = 0.2;
  opts.y1 = 2.2;
  opts.nx = 21;  // odd: the center column sits exactly on x = 1
  opts.ny = 20;
  auto grid = sweep_workspace(m, *sym, opts);

  int disagree = 0, both = 0;
  double worst = 0.0;
  for (int iy = 0; iy < opts.ny; ++iy)
    for (int ix = 0; ix < opts.nx; ++ix) {
      const auto& a = grid.at(ix, iy);
      const auto& b = grid.at(opts.nx - 1 - ix, iy);
      if (a.reachable != b.reachable) {
        ++disagree;
        continue;
      }
      if (!a.reachable) continue;
      ++both;
      worst = std::max(worst, std::abs(a.inv_kappa - b.inv_kappa));
      CHECK(a.feasible == b.feasible);
    }
  CHECK(both > 150);
  CHECK(disagree <= 4);  // rim cells may tip either way
  CHECK(worst < 1e-6);

  int reachable = 0;
  for (const auto& c : grid.cells) reachable += c.reachable ? 1 : 0;
  CHECK(reachable > 200);
}

TEST_CASE("branch-locked seeding: the mirrored half flips the mode tag") {
  // the linkage is symmetric across the base line; a sweep below it (on the
  // mirrored elbow branch) must see the opposite det sign cell for cell
  Mechanism m = oracle::load_fixture("five_bar.json");
  auto up = oracle::five_bar_from_point(Vec2(1.0, 1.2), +1, -1);
  auto down = oracle::five_bar_from_point(Vec2(1.0, -1.2), -1, +1);
  REQUIRE(up.has_value());
  REQUIRE(down.has_value());
  SweepOptions opts;
  opts.x0 = 0.4;
  opts.x1 = 1.6;
  opts.y0 = 0.8;
  opts.y1 = 1.8;
  opts.nx = 12;
  opts.ny = 10;
  auto ga = sweep_workspace(m, *up, opts);
  SweepOptions mirror = opts;
  mirror.y0 = -opts.y1;
  mirror.y1 = -opts.y0;
  auto gb = sweep_workspace(m, *down, mirror);
  int flipped = 0, both = 0;
  for (int iy = 0; iy < opts.ny; ++iy)
    for (int ix = 0; ix < opts.nx; ++ix) {
      const auto& a = ga.at(ix, iy);
      const auto& b = gb.at(ix, opts.ny - 1 - iy);
      if (!a.reachable || !b.reachable) continue;
      ++both;
      CHECK(std::abs(a.inv_kappa - b.inv_kappa) < 1e-6);
      if (a.mode == -b.mode && a.mode != 0) ++flipped;
    }
  CHECK(both > 60);
  CHECK(flipped >= 0.95 * both);
}

TEST_CASE("unreachable boxes produce empty grids, not errors") {
  Mechanism m = oracle::load_fixture("five_bar.json");
  SweepOptions opts;
  opts.x0 = 10.0;
  opts.x1 = 11.0;
  opts.y0 = 10.0;
  opts.y1 = 11.0;
  opts.nx = 8;
  opts.ny = 8;
  auto grid = sweep_workspace(m, *m.reference_q, opts);
  for (const auto& c : grid.cells) {
    CHECK_FALSE(c.reachable);
    CHECK(c.inv_kappa == 0.0);
    CHECK(c.sing_dist == -1.0);
  }
}

TEST_CASE("workspace csv format and determinism") {
  Mechanism m = oracle::load_fixture("five_bar.json");
  SweepOptions opts;
  opts.x0 = 0.6;
  opts.x1 = 1.4;
  opts.y0 = 1.0;
  opts.y1 = 1.6;
  opts.nx = 6;
  opts.ny = 5;
  auto grid = sweep_workspace(m, *m.reference_q, opts);
  std::string csv = workspace_csv(grid);
  std::istringstream is(csv);
  std::string header;
  std::getline(is, header);
  CHECK(header == "x, y, reachable, inv_kappa, mode, feasible");
  int lines = 0;
  std::string line;
  while (std::getline(is, line))
    if (!line.empty()) ++lines;
  CHECK(lines == opts.nx * opts.ny);

  auto grid2 = sweep_workspace(m, *m.reference_q, opts);
  CHECK(workspace_csv(grid2) == csv);
}

TEST_CASE("singular distance field marks the stretch rim") {
  Mechanism m = oracle::load_fixture("five_bar.json");
  // a box that pokes past the outer workspace rim picks up singular cells
  SweepOptions opts;
  opts.x0 = 0.0;
  opts.x1 = 2.0;
  opts.y0 = 0.6;
  opts.y1 = 2.6;  // outer rim near y ~ 2.4 on the midline
  opts.nx = 20;
  opts.ny = 20;
  auto grid = sweep_workspace(m, *m.reference_q, opts);
  bool any_source = false;
  double max_dist = 0.0;
  for (const auto& c : grid.cells) {
    if (!c.reachable) continue;
    if (c.sing_dist == 0.0) any_source = true;
    max_dist = std::max(max_dist, c.sing_dist);
  }
  CHECK(any_source);
  CHECK(max_dist > 0.2);
}

TEST_CASE("rr_2rrr sweep respects joint limits in the feasibility flag") {
  Mechanism m = oracle::load_fixture("rr_2rrr.json");
  SweepOptions opts;
  opts.x0 = 0.7;
  opts.x1 = 1.3;
  opts.y0 = 0.9;
  opts.y1 = 1.5;
  opts.nx = 10;
  opts.ny = 10;
  auto grid = sweep_workspace(m, *m.reference_q, opts);
  int feasible = 0, reachable = 0;
  for (const auto& c : grid.cells) {
    reachable += c.reachable ? 1 : 0;
    feasible += c.feasible ? 1 : 0;
    if (c.reachable) CHECK(c.inv_kappa > 0.0);
  }
  CHECK(reachable > 50);
  CHECK(feasible > 0);
  CHECK(feasible <= reachable);
}
