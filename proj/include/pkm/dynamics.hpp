#pragma once

#include <functional>
#include <string>

#include "pkm/actuation.hpp"

namespace pkm {

// Generalized dynamics terms reduced to a chart's independent coordinates:
//   Gbar qddot2 + cbar + Qbar = A^T c - N^T Jee^T tau
// with c actuator efforts and tau the wrench the end effector exerts on the
// environment.
struct DynTerms {
  Mat M;             // full-coordinate mass matrix
  Vec bias_full;     // full-coordinate velocity-product forces
  Vec gravity_full;  // dU/dq
  Mat N;             // chart velocity map
  Vec gamma;         // full-coordinate acceleration bias, qddot = N qddot2 + gamma
  Mat Gbar;          // N^T M N, symmetric positive definite on regular charts
  Vec cbar;
  Vec Qbar;
  Mat A;             // actuation map on the chart
  Mat Jee;           // 3 x n wrench Jacobian at the end effector
  double cond_B = 1.0;
  Vec qdot_full;
  double kinetic = 0.0, potential = 0.0;
  ActuationAssessment assessment;
};

DynTerms assemble_terms(const Mechanism& mech, const Chart& chart, const Vec& q,
                        const Vec& qdot2, const Vec2& gravity = Vec2(0.0, -9.81));

struct InverseDynamicsResult {
  ForceDistribution forces;
  DynTerms terms;
};

// Actuator efforts realizing a desired independent-coordinate acceleration.
// Raises Underactuated when the target is unrealizable unless allow_inexact.
InverseDynamicsResult inverse_dynamics(const Mechanism& mech, const Chart& chart, const Vec& q,
                                       const Vec& qdot2, const Vec& qddot2,
                                       const Eigen::Vector3d& tau = Eigen::Vector3d::Zero(),
                                       const Vec2& gravity = Vec2(0.0, -9.81),
                                       bool allow_inexact = false);

struct SimOptions {
  double horizon = 1.0;
  double dt = 1e-3;
  Vec2 gravity = Vec2(0.0, -9.81);
  double rechart_cond = 1e6;
  double degenerate_cond = 1e8;
  double mode_boundary_rel = 1e-6;  // relative smallest passive singular value
};

struct SimEvent {
  double t;
  std::string kind;  // "rechart", "mode_boundary"
  std::string detail;
};

struct Trajectory {
  std::vector<double> t;
  std::vector<Vec> q;     // full coordinates
  std::vector<Vec> qdot;  // full coordinates
  std::vector<double> kinetic, potential;
  std::vector<Vec> controls;
  std::vector<SimEvent> events;
  bool completed = true;  // false when halted at a mode boundary
};

using ControlFn = std::function<Vec(double t, const Vec& q, const Vec& qdot)>;
using WrenchFn = std::function<Eigen::Vector3d(double t)>;

// Classical fourth-order integration of the reduced equations with dependent
// coordinates re-solved from the constraints at every stage. Charts are
// re-selected when the dependent block degrades; approaching the passive
// (mode-boundary) locus halts integration with an event instead of silently
// crossing it.
Trajectory forward_dynamics(const Mechanism& mech, const Vec& q0, const Vec& qdot0,
                            const ControlFn& control, const WrenchFn& wrench,
                            const SimOptions& opts = {});

// Control-affine form on a chart: x = (q2, qdot2), xdot = f(x) + sum_i g_i(x) c_i.
struct ControlSystemFields {
  Vec f;        // 2*delta
  Mat g;        // 2*delta x m, zero upper block
  Mat g_lower;  // delta x m, equals Gbar^{-1} A^T
  int alpha = 0;
};

ControlSystemFields control_fields(const Mechanism& mech, const Chart& chart, const Vec& q,
                                   const Vec& qdot2, const Vec2& gravity = Vec2(0.0, -9.81));

}  // namespace pkm
