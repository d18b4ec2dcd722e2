#include "pkm/dynamics.hpp"

#include <cmath>

#include "pkm/errors.hpp"

namespace pkm {

DynTerms assemble_terms(const Mechanism& mech, const Chart& chart, const Vec& q,
                        const Vec& qdot2, const Vec2& gravity) {
  mech.require_inertial_data();
  const int n = mech.n();
  if (qdot2.size() != static_cast<int>(chart.indep.size()))
    fail(ErrorKind::DimensionMismatch, "independent rate size");

  DynTerms dt;
  EvalResult ev = mech.eval(q);
  ChartMatrices cm = chart_matrices(mech, ev, chart);
  dt.N = cm.N;
  dt.cond_B = cm.cond_B;
  dt.qdot_full = cm.N * qdot2;
  dt.Jee = ev.Jee;

  VelResult vr = mech.velocity_pass(ev, dt.qdot_full);

  dt.M = Mat::Zero(n, n);
  dt.bias_full = Vec::Zero(n);
  dt.gravity_full = Vec::Zero(n);
  dt.potential = 0.0;
  for (size_t l = 0; l < mech.links.size(); ++l) {
    if (static_cast<int>(l) == mech.ground_link) continue;
    double m = *mech.links[l].mass;
    double I = *mech.links[l].inertia;
    Mat Jv = mech.point_jacobian(ev, static_cast<int>(l), mech.links[l].com);
    Mat Jw = mech.orientation_jacobian(static_cast<int>(l));
    dt.M += m * Jv.transpose() * Jv + I * Jw.transpose() * Jw;
    dt.bias_full += m * Jv.transpose() * vr.a_bias_com[l];
    dt.gravity_full -= m * Jv.transpose() * gravity;
    Vec2 cw = ev.pose[l].origin + Eigen::Rotation2Dd(ev.pose[l].theta) * mech.links[l].com;
    dt.potential -= m * gravity.dot(cw);
  }

  // Acceleration bias of the chart: dependent rows soak up the loop bias.
  dt.gamma = Vec::Zero(n);
  const int r = mech.n_residuals();
  if (r > 0) {
    Vec gd = cm.B.colPivHouseholderQr().solve(-vr.loop_bias);
    if (!gd.allFinite()) fail(ErrorKind::ChartDegenerated, "acceleration bias solve");
    for (size_t i = 0; i < chart.dep.size(); ++i) dt.gamma(chart.dep[i]) = gd(i);
  }

  dt.Gbar = cm.N.transpose() * dt.M * cm.N;
  dt.cbar = cm.N.transpose() * (dt.M * dt.gamma + dt.bias_full);
  dt.Qbar = cm.N.transpose() * dt.gravity_full;
  JacobianBundle b = make_bundle(mech, ev);
  dt.assessment = control_matrix(mech, b, chart, cm);
  dt.A = dt.assessment.A;
  dt.kinetic = 0.5 * dt.qdot_full.dot(dt.M * dt.qdot_full);
  return dt;
}

InverseDynamicsResult inverse_dynamics(const Mechanism& mech, const Chart& chart, const Vec& q,
                                       const Vec& qdot2, const Vec& qddot2,
                                       const Eigen::Vector3d& tau, const Vec2& gravity,
                                       bool allow_inexact) {
  InverseDynamicsResult out;
  out.terms = assemble_terms(mech, chart, q, qdot2, gravity);
  Vec target = out.terms.Gbar * qddot2 + out.terms.cbar + out.terms.Qbar +
               out.terms.N.transpose() * (out.terms.Jee.transpose() * tau);
  out.forces = force_distribution(out.terms.assessment, target);
  if (!out.forces.exact && !allow_inexact)
    fail(ErrorKind::Underactuated, "acceleration target not realizable by the actuators");
  return out;
}

namespace {

struct ChartState {
  Chart chart;
  Vec q_full;  // on the variety
};

Vec accel(const Mechanism& mech, const DynTerms& dt, const Vec& c, const Eigen::Vector3d& tau) {
  (void)mech;
  Vec rhs = dt.A.transpose() * c - dt.N.transpose() * (dt.Jee.transpose() * tau) - dt.cbar - dt.Qbar;
  Eigen::LDLT<Mat> ldlt(dt.Gbar);
  Vec a = ldlt.solve(rhs);
  if (!a.allFinite()) fail(ErrorKind::ChartDegenerated, "reduced mass matrix solve");
  return a;
}

Vec extract(const Vec& full, const std::vector<int>& idx) {
  Vec out(idx.size());
  for (size_t i = 0; i < idx.size(); ++i) out(i) = full(idx[i]);
  return out;
}

}  // namespace

Trajectory forward_dynamics(const Mechanism& mech, const Vec& q0, const Vec& qdot0,
                            const ControlFn& control, const WrenchFn& wrench,
                            const SimOptions& opts) {
  mech.require_admissible(q0);
  mech.require_inertial_data();
  if (qdot0.size() != mech.n()) fail(ErrorKind::DimensionMismatch, "initial velocity size");

  Trajectory traj;
  ChartState st;
  st.q_full = q0;
  st.chart = choose_chart(mech, mech.eval(q0));
  // Full-coordinate velocity is the carried state; the chart view of it is
  // re-extracted after every chart change.
  Vec qdot_state = qdot0;
  Vec v2 = extract(qdot_state, st.chart.indep);

  const int n_steps = static_cast<int>(std::llround(opts.horizon / opts.dt));
  auto zero_control = [&](double t, const Vec& q, const Vec& qd) -> Vec {
    if (control) return control(t, q, qd);
    (void)t;
    (void)q;
    (void)qd;
    return Vec::Zero(mech.n_actuated());
  };
  auto wrench_at = [&](double t) -> Eigen::Vector3d {
    return wrench ? wrench(t) : Eigen::Vector3d::Zero();
  };

  double prev_det = std::numeric_limits<double>::quiet_NaN();
  auto record = [&](double t, const DynTerms& dt, const Vec& c) {
    traj.t.push_back(t);
    traj.q.push_back(st.q_full);
    traj.qdot.push_back(dt.qdot_full);
    traj.kinetic.push_back(dt.kinetic);
    traj.potential.push_back(dt.potential);
    traj.controls.push_back(c);
  };

  // Evaluates the reduced state derivative at an offset from the current
  // chart state, re-solving dependent coordinates.
  Mat N_base;  // chart map at step start, used to seed dependent solves
  auto derivative = [&](double t, const Vec& dq2, const Vec& v2_local, Vec& q_out) {
    Vec seed = st.q_full + N_base * dq2;
    NewtonResult nr = solve_dependents(mech, seed, st.chart.dep);
    q_out = nr.q;
    DynTerms dt = assemble_terms(mech, st.chart, nr.q, v2_local, opts.gravity);
    Vec c = zero_control(t, nr.q, dt.qdot_full);
    return std::make_pair(v2_local, accel(mech, dt, c, wrench_at(t)));
  };

  double t = 0.0;
  {
    DynTerms dt0 = assemble_terms(mech, st.chart, st.q_full, v2, opts.gravity);
    EvalResult ev0 = mech.eval(st.q_full);
    JacobianBundle b0 = make_bundle(mech, ev0);
    prev_det = b0.Jp.rows() == b0.Jp.cols() && b0.Jp.rows() > 0
                   ? b0.Jp.determinant()
                   : std::numeric_limits<double>::quiet_NaN();
    record(t, dt0, zero_control(t, st.q_full, dt0.qdot_full));
  }

  for (int step = 0; step < n_steps; ++step) {
    const double h = opts.dt;
    bool retried = false;
    while (true) {
      try {
        EvalResult ev = mech.eval(st.q_full);
        N_base = chart_matrices(mech, ev, st.chart).N;
        const int d = static_cast<int>(st.chart.indep.size());
        Vec zero = Vec::Zero(d);
        Vec qtmp;
        auto [k1q, k1v] = derivative(t, zero, v2, qtmp);
        auto [k2q, k2v] = derivative(t + h / 2, (h / 2) * k1q, v2 + (h / 2) * k1v, qtmp);
        auto [k3q, k3v] = derivative(t + h / 2, (h / 2) * k2q, v2 + (h / 2) * k2v, qtmp);
        auto [k4q, k4v] = derivative(t + h, h * k3q, v2 + h * k3v, qtmp);
        Vec dq2 = (h / 6.0) * (k1q + 2 * k2q + 2 * k3q + k4q);
        Vec v2_new = v2 + (h / 6.0) * (k1v + 2 * k2v + 2 * k3v + k4v);
        Vec q_new;
        {
          NewtonResult nr = solve_dependents(mech, st.q_full + N_base * dq2, st.chart.dep);
          q_new = nr.q;
          if (nr.residual > Mechanism::kTauH)
            fail(ErrorKind::ConstraintDriftExceeded, "post-step residual");
        }
        st.q_full = q_new;
        v2 = v2_new;
        qdot_state = chart_matrices(mech, mech.eval(q_new), st.chart).N * v2;
        break;
      } catch (const Error& e) {
        if (retried) throw;
        retried = true;
        // One chart change attempt at the current state.
        Chart fresh = choose_chart(mech, mech.eval(st.q_full));
        ChartMatrices cm = chart_matrices(mech, mech.eval(st.q_full), fresh);
        if (cm.cond_B > opts.degenerate_cond)
          fail(ErrorKind::ChartDegenerated, "no usable chart while recovering from: " +
                                                std::string(e.what()));
        st.chart = fresh;
        v2 = extract(qdot_state, st.chart.indep);
        traj.events.push_back({t, "rechart", "recovery"});
      }
    }
    t += h;

    EvalResult ev = mech.eval(st.q_full);
    JacobianBundle b = make_bundle(mech, ev);
    DynTerms dt_now = assemble_terms(mech, st.chart, st.q_full, v2, opts.gravity);
    record(t, dt_now, zero_control(t, st.q_full, dt_now.qdot_full));

    // Mode-boundary watch: the passive block approaching rank loss, or its
    // determinant flipping sign between steps (a crossing the sigma check
    // could step over).
    double rel = 1.0;
    if (b.rank_Jp.singular_values.size() > 0 && b.rank_Jp.singular_values(0) > 0.0)
      rel = b.rank_Jp.singular_values(b.rank_Jp.singular_values.size() - 1) /
            b.rank_Jp.singular_values(0);
    double det_now = b.Jp.rows() == b.Jp.cols() && b.Jp.rows() > 0
                         ? b.Jp.determinant()
                         : std::numeric_limits<double>::quiet_NaN();
    bool det_flip = std::isfinite(det_now) && std::isfinite(prev_det) &&
                    (det_now < 0) != (prev_det < 0);
    prev_det = det_now;
    if (rel < opts.mode_boundary_rel || det_flip) {
      traj.events.push_back(
          {t, "mode_boundary", det_flip ? "passive determinant sign change"
                                        : "passive block near rank loss"});
      traj.completed = false;
      return traj;
    }

    if (dt_now.cond_B > opts.rechart_cond) {
      Chart fresh = choose_chart(mech, ev);
      ChartMatrices cm = chart_matrices(mech, ev, fresh);
      if (cm.cond_B > opts.degenerate_cond)
        fail(ErrorKind::ChartDegenerated, "best chart condition exceeds limit");
      if (fresh.dep != st.chart.dep) {
        st.chart = fresh;
        v2 = extract(qdot_state, st.chart.indep);
        traj.events.push_back({t, "rechart", "condition threshold"});
      } else if (dt_now.cond_B > opts.degenerate_cond) {
        fail(ErrorKind::ChartDegenerated, "chart condition exceeds limit");
      }
    }
  }
  return traj;
}

ControlSystemFields control_fields(const Mechanism& mech, const Chart& chart, const Vec& q,
                                   const Vec& qdot2, const Vec2& gravity) {
  DynTerms dt = assemble_terms(mech, chart, q, qdot2, gravity);
  const int d = static_cast<int>(chart.indep.size());
  ControlSystemFields cs;
  Eigen::LDLT<Mat> ldlt(dt.Gbar);
  cs.f = Vec(2 * d);
  cs.f.head(d) = qdot2;
  cs.f.tail(d) = ldlt.solve(-dt.cbar - dt.Qbar);
  cs.g_lower = ldlt.solve(dt.A.transpose());
  cs.g = Mat::Zero(2 * d, dt.assessment.m);
  cs.g.bottomRows(d) = cs.g_lower;
  cs.alpha = dt.assessment.alpha;
  return cs;
}

}  // namespace pkm
