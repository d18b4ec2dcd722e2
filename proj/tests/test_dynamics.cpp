#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "pkm/errors.hpp"
#include "pkm/dynamics.hpp"
#include "pkm/io.hpp"
#include "pkm/linalg.hpp"

using namespace pkm;

namespace {

Vec stretched_five_bar() {
  Vec q(5);
  q << 2.0 * M_PI / 3.0, M_PI / 3.0, -2.0 * M_PI / 3.0, 2.0 * M_PI / 3.0, 0.0;
  return q;
}

const char* kNoInertia = R"({
  "name": "no_inertia",
  "links": [
    {"id": "ground"},
    {"id": "a", "length": 1.0}
  ],
  "joints": [
    {"id": "j1", "kind": "revolute", "parent": "ground", "child": "a", "anchor": [0.0, 0.0], "actuated": true}
  ],
  "ground": "ground",
  "ee": {"link": "a", "point": [1.0, 0.0]}
})";

double total_energy(const Trajectory& tr, size_t i) {
  return tr.kinetic[i] + tr.potential[i];
}

}  // namespace

TEST_CASE("open 2R arm matches the textbook equations of motion") {
  Mechanism m = oracle::load_fixture("open_2r.json");
  Chart chart = choose_chart(m, m.eval(*m.reference_q));
  CHECK(chart.dep.empty());
  REQUIRE(chart.indep == std::vector<int>{0, 1});

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  const double g = 9.81, l1 = 1.0, lc = 0.5, mass = 1.0, inertia = 1.0 / 12.0;
  for (int trial = 0; trial < 10; ++trial) {
    Vec q(2), qd(2);
    q << u(rng), u(rng);
    qd << u(rng), u(rng);
    auto terms = assemble_terms(m, chart, q, qd);

    double c2 = std::cos(q(1)), s2 = std::sin(q(1));
    Mat M(2, 2);
    M(0, 0) = mass * lc * lc + inertia +
              mass * (l1 * l1 + lc * lc + 2.0 * l1 * lc * c2) + inertia;
    M(0, 1) = M(1, 0) = mass * (lc * lc + l1 * lc * c2) + inertia;
    M(1, 1) = mass * lc * lc + inertia;
    CHECK((terms.Gbar - M).cwiseAbs().maxCoeff() < 1e-12);

    double h = -mass * l1 * lc * s2;
    Vec bias(2);
    bias << h * (2.0 * qd(0) * qd(1) + qd(1) * qd(1)), -h * qd(0) * qd(0);
    CHECK((terms.cbar - bias).cwiseAbs().maxCoeff() < 1e-10);

    double c1 = std::cos(q(0)), c12 = std::cos(q(0) + q(1));
    Vec grav(2);
    grav << g * (mass * lc * c1 + mass * l1 * c1 + mass * lc * c12),
        g * mass * lc * c12;
    CHECK((terms.Qbar - grav).cwiseAbs().maxCoeff() < 1e-10);

    // energies
    double ke_expect = 0.5 * qd.dot(M * qd);
    CHECK(terms.kinetic == doctest::Approx(ke_expect).epsilon(1e-10));
    double pe_expect = g * (mass * lc * std::sin(q(0)) +
                            mass * (l1 * std::sin(q(0)) + lc * std::sin(q(0) + q(1))));
    CHECK(terms.potential == doctest::Approx(pe_expect).epsilon(1e-10));
  }
}

TEST_CASE("reduced mass matrix is symmetric positive definite at random regular poses") {
  std::mt19937_64 rng(17);
  for (const char* name : {"five_bar.json", "rr_2rrr.json", "slider_crank.json"}) {
    CAPTURE(name);
    Mechanism m = oracle::load_fixture(name);
    for (int trial = 0; trial < 6; ++trial) {
      Vec q = oracle::random_regular_config(m, rng);
      Chart chart = choose_chart(m, m.eval(q));
      Vec qd2 = Vec::Zero(chart.indep.size());
      auto terms = assemble_terms(m, chart, q, qd2);
      CHECK((terms.Gbar - terms.Gbar.transpose()).cwiseAbs().maxCoeff() < 1e-10);
      Eigen::SelfAdjointEigenSolver<Mat> es(terms.Gbar);
      CHECK(es.eigenvalues().minCoeff() > 1e-6);
    }
  }
}

TEST_CASE("inverse dynamics round trip at one pose") {
  Mechanism m = oracle::load_fixture("five_bar.json");
  Vec ref = *m.reference_q;
  Chart chart = choose_chart(m, m.eval(ref));
  Vec qd2(2), qdd2(2);
  qd2 << 0.3, -0.2;
  qdd2 << 1.1, 0.7;
  Eigen::Vector3d tau(0.4, -0.8, 0.15);
  auto id = inverse_dynamics(m, chart, ref, qd2, qdd2, tau);
  CHECK(id.forces.exact);

  const auto& T = id.terms;
  Vec accel = T.Gbar.ldlt().solve(T.A.transpose() * id.forces.c - T.cbar - T.Qbar -
                                  T.N.transpose() * T.Jee.transpose() * tau);
  CHECK((accel - qdd2).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("inverse then forward dynamics along a quintic trajectory") {
  Mechanism m = oracle::load_fixture("five_bar.json");
  Vec ref = *m.reference_q;
  Chart chart = choose_chart(m, m.eval(ref));
  const int delta = static_cast<int>(chart.indep.size());
  Vec from(delta), to(delta);
  for (int i = 0; i < delta; ++i) {
    from(i) = ref(chart.indep[i]);
    to(i) = from(i) + (i == 0 ? 0.25 : -0.2);
  }
  const double T = 0.5;
  double worst = 0.0;
  for (int k = 0; k <= 10; ++k) {
    double tau_t = k / 10.0;
    double s, ds, dds;
    oracle::quintic(tau_t, s, ds, dds);
    Vec q2 = from + s * (to - from);
    Vec qd2 = (ds / T) * (to - from);
    Vec qdd2 = (dds / (T * T)) * (to - from);
    // dependent coordinates from the constraints, seeded by the reference
    Vec seed = ref;
    for (int i = 0; i < delta; ++i) seed(chart.indep[i]) = q2(i);
    Vec q = solve_dependents(m, seed, chart.dep).q;

    auto id = inverse_dynamics(m, chart, q, qd2, qdd2);
    REQUIRE(id.forces.exact);
    const auto& t2 = id.terms;
    Vec accel = t2.Gbar.ldlt().solve(t2.A.transpose() * id.forces.c - t2.cbar - t2.Qbar);
    worst = std::max(worst, (accel - qdd2).cwiseAbs().maxCoeff());
  }
  CHECK(worst <= 1e-8);
}

TEST_CASE("redundant prestress changes the efforts, never the motion") {
  Mechanism m = oracle::load_fixture("rr_2rrr.json");
  Vec ref = *m.reference_q;
  Chart chart = choose_chart(m, m.eval(ref));
  Vec qd2(2), qdd2(2);
  qd2 << 0.2, 0.1;
  qdd2 << -0.5, 0.9;
  auto plain = inverse_dynamics(m, chart, ref, qd2, qdd2);
  Mat Z = null_basis(Mat(plain.terms.A.transpose()));
  REQUIRE(Z.cols() == 1);
  Vec pre = 10.0 * Z.col(0) / Z.col(0).norm();

  auto id0 = inverse_dynamics(m, chart, ref, qd2, qdd2);
  auto id1 = inverse_dynamics(m, chart, ref, qd2, qdd2, Eigen::Vector3d::Zero(),
                              Vec2(0.0, -9.81), false);
  // apply the prestress through the force distribution directly
  auto fd = force_distribution(plain.terms.assessment,
                               plain.terms.Gbar * qdd2 + plain.terms.cbar + plain.terms.Qbar,
                               pre);
  CHECK((fd.c - id0.forces.c - pre).norm() < 1e-9);

  const auto& T = plain.terms;
  Vec a0 = T.Gbar.ldlt().solve(T.A.transpose() * id0.forces.c - T.cbar - T.Qbar);
  Vec a1 = T.Gbar.ldlt().solve(T.A.transpose() * fd.c - T.cbar - T.Qbar);
  CHECK((a0 - a1).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((a0 - qdd2).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((id1.forces.c - id0.forces.c).norm() < 1e-12);
}

TEST_CASE("free swing conserves energy") {
  Mechanism m = oracle::load_fixture("five_bar.json");
  auto hang = oracle::five_bar_config(-M_PI / 2.0, -M_PI / 2.0, -1);
  REQUIRE(hang.has_value());
  REQUIRE(m.admissible(*hang));
  auto control = [](double, const Vec&, const Vec&) { return Vec::Zero(2); };
  auto wrench = [](double) { return Eigen::Vector3d::Zero(); };
  SimOptions opts;
  opts.horizon = 1.0;
  opts.dt = 1e-3;
  auto tr = forward_dynamics(m, *hang, Vec::Zero(5), control, wrench, opts);
  REQUIRE(tr.completed);
  REQUIRE(tr.t.size() >= 1000);
  double e0 = total_energy(tr, 0);
  double drift = 0.0;
  for (size_t i = 0; i < tr.t.size(); ++i)
    drift = std::max(drift, std::abs(total_energy(tr, i) - e0));
  CHECK(drift / std::max(1.0, std::abs(e0)) < 1e-6);
  // constraints hold along the whole trajectory
  for (size_t i = 0; i < tr.q.size(); i += 100)
    CHECK(m.eval(tr.q[i]).h.norm() < 1e-8);
}

TEST_CASE("open chain integrates without any constraint machinery") {
  Mechanism m = oracle::load_fixture("open_2r.json");
  auto control = [](double, const Vec&, const Vec&) { return Vec::Zero(2); };
  auto wrench = [](double) { return Eigen::Vector3d::Zero(); };
  SimOptions opts;
  opts.horizon = 0.5;
  auto tr = forward_dynamics(m, *m.reference_q, Vec::Zero(2), control, wrench, opts);
  REQUIRE(tr.completed);
  double e0 = total_energy(tr, 0);
  double drift = 0.0;
  for (size_t i = 0; i < tr.t.size(); ++i)
    drift = std::max(drift, std::abs(total_energy(tr, i) - e0));
  CHECK(drift / std::max(1.0, std::abs(e0)) < 1e-6);
}

TEST_CASE("energy bookkeeping under constant effort and an end effector wrench") {
  Mechanism m = oracle::load_fixture("five_bar.json");
  Vec ref = *m.reference_q;
  Vec c(2);
  c << 1.5, -0.8;
  Eigen::Vector3d tau(0.6, 0.3, -0.1);
  auto control = [&](double, const Vec&, const Vec&) { return c; };
  auto wrench = [&](double) { return tau; };
  SimOptions opts;
  opts.horizon = 0.2;
  opts.dt = 5e-4;
  auto tr = forward_dynamics(m, ref, Vec::Zero(5), control, wrench, opts);
  REQUIRE(tr.completed);

  size_t last = tr.t.size() - 1;
  double dE = total_energy(tr, last) - total_energy(tr, 0);
  // constant effort: the actuator work is c . (qa(T) - qa(0));
  // the wrench drains tau . (ee pose change) since tau acts on the environment
  Vec2 dqa(tr.q[last](0) - tr.q[0](0), tr.q[last](1) - tr.q[0](1));
  auto ev0 = m.eval(tr.q[0]);
  auto ev1 = m.eval(tr.q[last]);
  int el = m.link_index(m.ee.link);
  Eigen::Vector3d dx(ev1.ee.x() - ev0.ee.x(), ev1.ee.y() - ev0.ee.y(),
                     ev1.pose[el].theta - ev0.pose[el].theta);
  double balance = c.dot(Vec(dqa)) - tau.dot(dx);
  CHECK(dE == doctest::Approx(balance).epsilon(1e-5));
}

TEST_CASE("driving into the stretch locus halts at the mode boundary") {
  Mechanism m = oracle::load_fixture("five_bar.json");
  Vec ref = *m.reference_q;
  Vec c(2);
  c << 6.0, -6.0;  // pry the cranks apart
  auto control = [&](double, const Vec&, const Vec&) { return c; };
  auto wrench = [](double) { return Eigen::Vector3d::Zero(); };
  SimOptions opts;
  opts.horizon = 3.0;
  opts.gravity = Vec2(0.0, 0.0);
  auto tr = forward_dynamics(m, ref, Vec::Zero(5), control, wrench, opts);
  CHECK_FALSE(tr.completed);
  REQUIRE_FALSE(tr.events.empty());
  bool hit = false;
  for (const auto& e : tr.events) hit = hit || e.kind == "mode_boundary";
  CHECK(hit);
  // halted before corrupting the state
  CHECK(m.eval(tr.q.back()).h.norm() < 1e-8);
  auto b = make_bundle(m, m.eval(tr.q.back()));
  double rel = b.rank_Jp.singular_values.size() > 0
                   ? b.rank_Jp.singular_values.tail(1)(0) /
                         b.rank_Jp.singular_values(0)
                   : 1.0;
  CHECK(rel < 1e-2);  // genuinely close to the boundary
}

TEST_CASE("aggressive rechart threshold exercises chart switching") {
  Mechanism m = oracle::load_fixture("slider_crank.json");
  // the best dependent set changes identity as the crank passes ~1.3 rad, so
  // driving well past that angle has to produce at least one switch
  Vec c(1);
  c << 3.0;
  auto control = [&](double, const Vec&, const Vec&) { return c; };
  auto wrench = [](double) { return Eigen::Vector3d::Zero(); };
  SimOptions opts;
  opts.horizon = 1.5;
  opts.rechart_cond = 2.0;  // force re-selection every step
  opts.gravity = Vec2(0.0, 0.0);
  auto tr = forward_dynamics(m, *m.reference_q, Vec::Zero(4), control, wrench, opts);
  REQUIRE(tr.completed);
  int rechart = 0;
  for (const auto& e : tr.events) rechart += e.kind == "rechart" ? 1 : 0;
  CHECK(rechart > 0);
  for (size_t i = 0; i < tr.q.size(); i += 50)
    CHECK(m.eval(tr.q[i]).h.norm() < 1e-8);
}

TEST_CASE("control affine fields expose the actuation rank") {
  Mechanism m = oracle::load_fixture("five_bar.json");
  Vec ref = *m.reference_q;
  Chart chart = choose_chart(m, m.eval(ref));
  Vec qd2(2);
  qd2 << 0.4, -0.1;
  auto cf = control_fields(m, chart, ref, qd2);
  CHECK(cf.alpha == 2);
  CHECK(cf.f.size() == 4);
  CHECK((cf.f.head(2) - qd2).norm() == 0.0);
  CHECK(cf.g.rows() == 4);
  CHECK(cf.g.cols() == 2);
  CHECK(cf.g.topRows(2).cwiseAbs().maxCoeff() == 0.0);
  CHECK(svd_rank(cf.g_lower) == 2);

  // consistency with the assembled terms
  auto terms = assemble_terms(m, chart, ref, qd2);
  Vec c(2);
  c << 0.7, 0.2;
  Vec accel_fields = cf.f.tail(2) + cf.g_lower * c;
  Vec accel_terms = terms.Gbar.ldlt().solve(terms.A.transpose() * c - terms.cbar - terms.Qbar);
  CHECK((accel_fields - accel_terms).cwiseAbs().maxCoeff() < 1e-10);

  // at the stretched pose the lower block loses rank
  auto q0 = stretched_five_bar();
  Chart ch0 = choose_chart(m, m.eval(q0));
  auto cf0 = control_fields(m, ch0, q0, Vec::Zero(2));
  CHECK(cf0.alpha == 1);
  CHECK(svd_rank(cf0.g_lower) == 1);
}

TEST_CASE("dynamics requires inertial data") {
  Mechanism m = mechanism_from_json_text(kNoInertia, "inline");
  Chart chart;
  chart.indep = {0};
  try {
    assemble_terms(m, chart, Vec::Zero(1), Vec::Zero(1));
    FAIL("expected MissingInertialData");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::MissingInertialData);
  }
}
