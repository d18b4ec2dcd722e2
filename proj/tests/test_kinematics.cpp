#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "pkm/errors.hpp"
#include "pkm/io.hpp"
#include "pkm/kinematics.hpp"
#include "pkm/linalg.hpp"

using namespace pkm;

namespace {

// Five-bar pose with the distal pair fully stretched: both distal links lie
// on the line y = sqrt(3)/2, the passive block loses rank there.
Vec stretched_five_bar() {
  Vec q(5);
  q << 2.0 * M_PI / 3.0, M_PI / 3.0, -2.0 * M_PI / 3.0, 2.0 * M_PI / 3.0, 0.0;
  return q;
}

// Closure onto an anchor far outside the reachable disk; Newton cannot succeed.
const char* kUnreachable = R"({
  "name": "unreachable",
  "links": [
    {"id": "ground"},
    {"id": "a", "length": 1.0},
    {"id": "b", "length": 1.0}
  ],
  "joints": [
    {"id": "j1", "kind": "revolute", "parent": "ground", "child": "a", "anchor": [0.0, 0.0], "actuated": true},
    {"id": "j2", "kind": "revolute", "parent": "a", "child": "b", "anchor": [1.0, 0.0]},
    {"id": "j3", "kind": "revolute", "parent": "ground", "child": "b", "anchor": [10.0, 0.0]}
  ],
  "ground": "ground",
  "ee": {"link": "b", "point": [1.0, 0.0]}
})";

}  // namespace

TEST_CASE("bundle partitions columns by actuation") {
  Mechanism m = oracle::load_fixture("five_bar.json");
  auto b = make_bundle(m, m.eval(*m.reference_q));
  CHECK(b.active == std::vector<int>{0, 1});
  CHECK(b.passive == std::vector<int>{2, 3, 4});
  CHECK(b.J.rows() == 3);
  CHECK(b.Jp.cols() == 3);
  CHECK(b.Ja.cols() == 2);
  CHECK(b.Ji.rows() == 2);
  CHECK(b.Ji.cols() == 5);
  for (int i = 0; i < 2; ++i) {
    CHECK(b.Ji.row(i).sum() == 1.0);
    CHECK(b.Ji(i, b.active[i]) == 1.0);
  }
  CHECK(b.rank_J.rank == 3);
  CHECK(b.rank_Jp.rank == 3);
  REQUIRE(b.forward.has_value());
  CHECK(b.forward->rows() == 2);
  CHECK(b.forward->cols() == 2);
}

TEST_CASE("forward velocity map matches finite differences of the forward solve") {
  Mechanism m = oracle::load_fixture("five_bar.json");
  Vec ref = *m.reference_q;
  auto b = make_bundle(m, m.eval(ref));
  REQUIRE(b.forward.has_value());
  const double h = 1e-6;
  for (int k = 0; k < 2; ++k) {
    Vec qa = ref.head<2>();
    Vec qap = qa, qam = qa;
    qap(k) += h;
    qam(k) -= h;
    Vec2 eep = m.eval(forward_position(m, ref, qap).q).ee;
    Vec2 eem = m.eval(forward_position(m, ref, qam).q).ee;
    Vec2 col = (eep - eem) / (2.0 * h);
    CHECK((b.forward->col(k) - Vec(col)).norm() < 1e-5);
  }
}

TEST_CASE("velocity solutions: closure rates for a commanded input rate") {
  Mechanism m = oracle::load_fixture("five_bar.json");
  Vec ref = *m.reference_q;
  auto b = make_bundle(m, m.eval(ref));
  Vec qa_dot(2);
  qa_dot << 0.4, -0.7;
  auto vs = velocity_solutions(m, b, qa_dot);
  CHECK(vs.consistent);
  CHECK(vs.homogeneous.cols() == 0);  // regular pose, unique closure rate
  CHECK((m.eval(ref).J * vs.particular).norm() < 1e-9);
  CHECK(vs.particular(0) == doctest::Approx(0.4));
  CHECK(vs.particular(1) == doctest::Approx(-0.7));
  // matches the forward map on the output
  Vec2 v_ee = m.eval(ref).Jo * vs.particular;
  Vec2 v_fwd = *b.forward * qa_dot;
  CHECK((v_ee - v_fwd).norm() < 1e-9);
}

TEST_CASE("velocity solutions at the stretched pose: self motion and lost inputs") {
  Mechanism m = oracle::load_fixture("five_bar.json");
  Vec q0 = stretched_five_bar();
  REQUIRE(m.admissible(q0));
  auto b = make_bundle(m, m.eval(q0));
  CHECK(b.rank_Jp.rank == 2);
  CHECK_FALSE(b.forward.has_value());

  // locked actuators still admit a passive self motion
  auto vs0 = velocity_solutions(m, b, Vec::Zero(2));
  CHECK(vs0.consistent);
  REQUIRE(vs0.homogeneous.cols() == 1);
  Vec self = vs0.homogeneous.col(0);
  CHECK(self.head<2>().norm() < 1e-12);
  CHECK((m.eval(q0).J * self).norm() < 1e-9);
  CHECK(self.norm() == doctest::Approx(1.0));

  // the left null direction of the passive block pulls back to an input
  // combination no passive rate can follow
  Mat u = null_basis(Mat(b.Jp.transpose()));
  REQUIRE(u.cols() == 1);
  Vec lost = b.Ja.transpose() * u.col(0);
  REQUIRE(lost.norm() > 1e-6);
  Vec qa_dot = 0.3 * lost / lost.norm();
  auto vs = velocity_solutions(m, b, qa_dot);
  CHECK_FALSE(vs.consistent);
  CHECK(vs.residual > 1e-3);

  // while rates along the realizable line still are followable
  Vec ok(2);
  ok << qa_dot(1), -qa_dot(0);
  auto vs_ok = velocity_solutions(m, b, ok);
  CHECK(vs_ok.consistent);
}

TEST_CASE("projection onto the variety") {
  Mechanism m = oracle::load_fixture("five_bar.json");
  Vec ref = *m.reference_q;
  Vec seed = ref;
  seed(2) += 0.04;
  seed(4) -= 0.03;
  auto r = project_to_variety(m, seed);
  CHECK(r.residual <= 1e-12);
  CHECK(m.eval(r.q).h.norm() <= 1e-12);
  CHECK((r.q - ref).norm() < 0.2);  // stays nearby

  Mechanism bad = mechanism_from_json_text(kUnreachable, "inline");
  Vec far = Vec::Zero(3);
  CHECK_THROWS_AS(project_to_variety(bad, far), Error);
  try {
    project_to_variety(bad, far);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NoConvergence);
  }
}

TEST_CASE("forward position solve pins the actuated coordinates") {
  Mechanism m = oracle::load_fixture("five_bar.json");
  Vec ref = *m.reference_q;
  Vec target(2);
  target << ref(0) + 0.1, ref(1) - 0.05;
  auto r = forward_position(m, ref, target);
  CHECK(m.admissible(r.q));
  CHECK(r.q(0) == doctest::Approx(target(0)).epsilon(1e-12));
  CHECK(r.q(1) == doctest::Approx(target(1)).epsilon(1e-12));
  auto oc = oracle::five_bar_config(target(0), target(1), +1);
  REQUIRE(oc.has_value());
  CHECK((r.q - *oc).cwiseAbs().maxCoeff() < 1e-9);  // branch preserved
}

TEST_CASE("forward position solve refuses a singular start") {
  Mechanism m = oracle::load_fixture("parallelogram_4bar.json");
  Vec flat = Vec::Zero(4);
  Vec target(1);
  target << 0.1;
  CHECK_THROWS_AS(forward_position(m, flat, target), Error);
  try {
    forward_position(m, flat, target);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::SingularIteration);
  }
}

TEST_CASE("inverse position solve reaches a nearby target on the same branch") {
  Mechanism m = oracle::load_fixture("five_bar.json");
  Vec ref = *m.reference_q;
  Vec2 target(0.9, 1.55);
  auto r = inverse_position(m, ref, target);
  CHECK(m.admissible(r.q));
  CHECK((m.eval(r.q).ee - target).norm() < 1e-10);
  auto oc = oracle::five_bar_from_point(target, +1, -1);
  REQUIRE(oc.has_value());
  CHECK((r.q - *oc).cwiseAbs().maxCoeff() < 1e-9);

  CHECK_THROWS_AS(inverse_position(m, ref, Vec2(4.0, 4.0)), Error);
}

TEST_CASE("dependent coordinate solve keeps the independent ones frozen") {
  Mechanism m = oracle::load_fixture("five_bar.json");
  Vec ref = *m.reference_q;
  Vec seed = ref;
  seed(2) += 0.02;
  seed(3) -= 0.02;
  seed(4) += 0.01;
  auto r = solve_dependents(m, seed, {2, 3, 4});
  CHECK(r.q(0) == ref(0));
  CHECK(r.q(1) == ref(1));
  CHECK((r.q - ref).cwiseAbs().maxCoeff() < 1e-10);
}
