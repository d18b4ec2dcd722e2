#pragma once

#include <optional>

#include "pkm/mechanism.hpp"

namespace pkm {

// Partitioned Jacobians at one configuration. `forward` (the actuated-to-ee
// velocity map) exists only when the passive block has full column rank, in
// which case passive rates are eliminated against the actuated ones.
struct JacobianBundle {
  Vec q;
  Mat J;    // r x n
  Mat Jp;   // r x (n - m), passive columns
  Mat Ja;   // r x m, actuated columns
  Mat Jo;   // output rows x n
  Mat Ji;   // m x n input selection (one unit entry per row)
  std::vector<int> active, passive;
  RankInfo rank_J, rank_Jp, rank_Ja;
  std::optional<Mat> forward;  // output rows x m
};

JacobianBundle make_bundle(const Mechanism& mech, const EvalResult& ev,
                           double tol_factor = kRankTolFactor);

struct NewtonOptions {
  double tol = 1e-12;   // residual 2-norm
  int max_iter = 50;
  int max_growth = 3;   // consecutive residual increases before giving up
};

struct NewtonResult {
  Vec q;
  double residual = 0.0;
  int iterations = 0;
};

// Projects q onto the constraint variety (full Newton steps through the
// pseudoinverse). Throws NoConvergence / SingularIteration.
NewtonResult project_to_variety(const Mechanism& mech, const Vec& q,
                                const NewtonOptions& opts = {});

// Solves h(q) = 0 with the actuated coordinates pinned to `qa_target`.
// The augmented Jacobian must keep full column rank along the iteration,
// otherwise SingularIteration is raised.
NewtonResult forward_position(const Mechanism& mech, const Vec& q_seed,
                              const Vec& qa_target, const NewtonOptions& opts = {});

// Solves h(q) = 0 together with ee(q) = target (position task).
NewtonResult inverse_position(const Mechanism& mech, const Vec& q_seed,
                              const Vec2& target, const NewtonOptions& opts = {});

// Solves h(q) = 0 with a chosen dependent coordinate subset, keeping the
// remaining (independent) coordinates fixed at their values in q_seed.
NewtonResult solve_dependents(const Mechanism& mech, const Vec& q_seed,
                              const std::vector<int>& dependent,
                              const NewtonOptions& opts = {});

// Passive joint rates compatible with a commanded actuated rate: minimum-norm
// particular solution plus an orthonormal basis of the homogeneous solutions,
// both embedded in full coordinates. `consistent` is false when the commanded
// rate is not realizable (the least-squares residual is reported).
struct VelocitySolutions {
  Vec particular;      // n
  Mat homogeneous;     // n x k
  bool consistent = true;
  double residual = 0.0;
};

VelocitySolutions velocity_solutions(const Mechanism& mech, const JacobianBundle& b,
                                     const Vec& qdot_active);

}  // namespace pkm
