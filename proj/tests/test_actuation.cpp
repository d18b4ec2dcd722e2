#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "oracles.hpp"
#include "pkm/errors.hpp"
#include "pkm/actuation.hpp"
#include "pkm/linalg.hpp"

using namespace pkm;

namespace {

Vec stretched_five_bar() {
  Vec q(5);
  q << 2.0 * M_PI / 3.0, M_PI / 3.0, -2.0 * M_PI / 3.0, 2.0 * M_PI / 3.0, 0.0;
  return q;
}

// all k-subsets of {0..n-1}
void subsets(int n, int k, std::vector<std::vector<int>>& out) {
  std::vector<int> pick(k);
  std::function<void(int, int)> rec = [&](int start, int depth) {
    if (depth == k) {
      out.push_back(pick);
      return;
    }
    for (int i = start; i <= n - (k - depth); ++i) {
      pick[depth] = i;
      rec(i + 1, depth + 1);
    }
  };
  rec(0, 0);
}

}  // namespace

TEST_CASE("chart selection picks a well conditioned dependent block") {
  Mechanism m = oracle::load_fixture("five_bar.json");
  auto ev = m.eval(*m.reference_q);
  Chart chart = choose_chart(m, ev);
  REQUIRE(chart.dep.size() == 3);
  REQUIRE(chart.indep.size() == 2);
  CHECK(std::is_sorted(chart.dep.begin(), chart.dep.end()));

  auto cm = chart_matrices(m, ev, chart);
  CHECK(cm.cond_B < 1e3);

  // exhaustive comparison: the greedy block is within a modest factor of the
  // best possible conditioning
  std::vector<std::vector<int>> deps;
  subsets(5, 3, deps);
  double best = 1e300;
  for (const auto& dep : deps) {
    Mat B(3, 3);
    for (int c = 0; c < 3; ++c) B.col(c) = ev.J.col(dep[c]);
    double ic = inv_cond(B);
    if (ic > 1e-12) best = std::min(best, 1.0 / ic);
  }
  CHECK(cm.cond_B <= 25.0 * best);

  Chart again = choose_chart(m, ev);
  CHECK(again.dep == chart.dep);
}

TEST_CASE("chart selection fails only at c-space singularities") {
  Mechanism m = oracle::load_fixture("parallelogram_4bar.json");
  CHECK_NOTHROW(choose_chart(m, m.eval(*m.reference_q)));
  try {
    choose_chart(m, m.eval(Vec::Zero(4)));
    FAIL("expected CSpaceSingular");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::CSpaceSingular);
  }
}

TEST_CASE("chart matrices: null space form with identity on the independents") {
  Mechanism m = oracle::load_fixture("rr_2rrr.json");
  auto ev = m.eval(*m.reference_q);
  Chart chart = choose_chart(m, ev);
  auto cm = chart_matrices(m, ev, chart);
  CHECK(cm.N.rows() == 8);
  CHECK(cm.N.cols() == 2);
  CHECK((ev.J * cm.N).cwiseAbs().maxCoeff() < 1e-9);
  for (size_t i = 0; i < chart.indep.size(); ++i)
    for (size_t j = 0; j < chart.indep.size(); ++j)
      CHECK(cm.N(chart.indep[i], j) == (i == j ? 1.0 : 0.0));

  Chart badchart;
  badchart.dep = {0};
  badchart.indep = {1, 2, 3, 4, 5, 6, 7};
  CHECK_THROWS_AS(chart_matrices(m, ev, badchart), Error);
}

TEST_CASE("actuation assessment on the five_bar: full non-redundant") {
  Mechanism m = oracle::load_fixture("five_bar.json");
  auto ev = m.eval(*m.reference_q);
  auto b = make_bundle(m, ev);
  Chart chart = choose_chart(m, ev);
  auto cm = chart_matrices(m, ev, chart);
  auto aa = control_matrix(m, b, chart, cm);
  CHECK(aa.m == 2);
  CHECK(aa.delta_loc == 2);
  CHECK(aa.alpha == 2);
  CHECK(aa.rho == 0);
  CHECK(aa.full);
  CHECK_FALSE(aa.redundant);
  CHECK(aa.tangent_input_rank == 2);
  CHECK(aa.assignable_input_dim == 2);
}

TEST_CASE("alpha does not depend on the chart") {
  Mechanism m = oracle::load_fixture("five_bar.json");
  auto ev = m.eval(*m.reference_q);
  auto b = make_bundle(m, ev);
  std::vector<std::vector<int>> deps;
  subsets(5, 3, deps);
  int tested = 0;
  for (const auto& dep : deps) {
    Mat B(3, 3);
    for (int c = 0; c < 3; ++c) B.col(c) = ev.J.col(dep[c]);
    if (inv_cond(B) < 1e-6) continue;  // not a valid chart here
    Chart chart;
    chart.dep = dep;
    for (int i = 0; i < 5; ++i)
      if (std::find(dep.begin(), dep.end(), i) == dep.end())
        chart.indep.push_back(i);
    auto cm = chart_matrices(m, ev, chart);
    auto aa = control_matrix(m, b, chart, cm);
    CHECK(aa.alpha == 2);
    CHECK(aa.rho == 0);
    ++tested;
  }
  CHECK(tested >= 4);
}

TEST_CASE("actuation assessment on the rr_2rrr: redundant by one") {
  Mechanism m = oracle::load_fixture("rr_2rrr.json");
  auto ev = m.eval(*m.reference_q);
  auto b = make_bundle(m, ev);
  Chart chart = choose_chart(m, ev);
  auto cm = chart_matrices(m, ev, chart);
  auto aa = control_matrix(m, b, chart, cm);
  CHECK(aa.m == 3);
  CHECK(aa.delta_loc == 2);
  CHECK(aa.alpha == 2);
  CHECK(aa.rho == 1);
  CHECK(aa.full);
  CHECK(aa.redundant);
}

TEST_CASE("actuation assessment on the four_bar: single input drives the loop") {
  Mechanism m = oracle::load_fixture("parallelogram_4bar.json");
  auto ev = m.eval(*m.reference_q);
  auto b = make_bundle(m, ev);
  Chart chart = choose_chart(m, ev);
  auto cm = chart_matrices(m, ev, chart);
  auto aa = control_matrix(m, b, chart, cm);
  CHECK(aa.m == 1);
  CHECK(aa.delta_loc == 1);
  CHECK(aa.alpha == 1);
  CHECK(aa.rho == 0);
  CHECK(aa.full);
}

TEST_CASE("at the stretched pose the inputs lose a direction") {
  Mechanism m = oracle::load_fixture("five_bar.json");
  Vec q0 = stretched_five_bar();
  auto ev = m.eval(q0);
  auto b = make_bundle(m, ev);
  Chart chart = choose_chart(m, ev);  // rank J is still full here
  auto cm = chart_matrices(m, ev, chart);
  auto aa = control_matrix(m, b, chart, cm);
  CHECK(aa.delta_loc == 2);
  CHECK(aa.alpha == 1);
  CHECK_FALSE(aa.full);
  CHECK(aa.tangent_input_rank == 1);
  CHECK(aa.assignable_input_dim == 1);  // m - rank J + rank Jp

  Vec target(2);
  target << 1.0, 0.5;
  auto fd = force_distribution(aa, target);
  CHECK_FALSE(fd.exact);
  CHECK(fd.residual > 1e-6);
}

TEST_CASE("force distribution: exact minimum norm efforts, optional prestress") {
  Mechanism m = oracle::load_fixture("rr_2rrr.json");
  auto ev = m.eval(*m.reference_q);
  auto b = make_bundle(m, ev);
  Chart chart = choose_chart(m, ev);
  auto cm = chart_matrices(m, ev, chart);
  auto aa = control_matrix(m, b, chart, cm);

  Vec target(2);
  target << 0.7, -1.3;
  auto fd = force_distribution(aa, target);
  CHECK(fd.exact);
  CHECK((aa.A.transpose() * fd.c - target).norm() < 1e-9);

  Mat Z = null_basis(Mat(aa.A.transpose()));
  REQUIRE(Z.cols() == 1);
  CHECK(std::abs(Z.col(0).dot(fd.c)) < 1e-9);  // minimum norm

  Vec prestress = 10.0 * Z.col(0);
  auto fd2 = force_distribution(aa, target, prestress);
  CHECK(fd2.exact);
  CHECK((aa.A.transpose() * fd2.c - target).norm() < 1e-9);
  CHECK((fd2.c - fd.c - prestress).norm() < 1e-9);

  Vec badpre = Vec::Zero(3);
  badpre(0) = 10.0;
  try {
    force_distribution(aa, target, badpre);
    FAIL("expected PrestressNotInNullSpace");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::PrestressNotInNullSpace);
  }
}
