#include "pkm/kinematics.hpp"

#include <cmath>

#include "pkm/errors.hpp"

namespace pkm {

JacobianBundle make_bundle(const Mechanism& mech, const EvalResult& ev, double tol_factor) {
  JacobianBundle b;
  b.q = ev.q;
  b.J = ev.J;
  b.Jo = ev.Jo;
  b.active = mech.actuated_cols();
  b.passive = mech.passive_cols();
  const int m = static_cast<int>(b.active.size());
  const int np = static_cast<int>(b.passive.size());
  b.Jp = Mat(ev.J.rows(), np);
  b.Ja = Mat(ev.J.rows(), m);
  for (int i = 0; i < np; ++i) b.Jp.col(i) = ev.J.col(b.passive[i]);
  for (int i = 0; i < m; ++i) b.Ja.col(i) = ev.J.col(b.active[i]);
  b.Ji = Mat::Zero(m, mech.n());
  for (int i = 0; i < m; ++i) b.Ji(i, b.active[i]) = 1.0;
  b.rank_J = rank_info(b.J, tol_factor);
  b.rank_Jp = rank_info(b.Jp, tol_factor);
  b.rank_Ja = rank_info(b.Ja, tol_factor);
  if (b.rank_Jp.rank == np) {
    Mat Jop(b.Jo.rows(), np), Joa(b.Jo.rows(), m);
    for (int i = 0; i < np; ++i) Jop.col(i) = b.Jo.col(b.passive[i]);
    for (int i = 0; i < m; ++i) Joa.col(i) = b.Jo.col(b.active[i]);
    // Eliminate passive rates: qdot_p = -Jp^+ Ja qdot_a, then map to the output.
    b.forward = Joa - Jop * (pinv(b.Jp, tol_factor) * b.Ja);
  }
  return b;
}

namespace {

// Shared damped-free full-step Newton loop over an arbitrary residual map.
template <typename ResidualFn>
NewtonResult newton_loop(const Mechanism& mech, Vec q, ResidualFn&& fn,
                         const NewtonOptions& opts, bool require_full_rank) {
  NewtonResult out;
  double prev = std::numeric_limits<double>::infinity();
  int growth = 0;
  for (int it = 0; it <= opts.max_iter; ++it) {
    Mat A;
    Vec r;
    fn(q, r, A);
    double rn = r.norm();
    if (!std::isfinite(rn)) fail(ErrorKind::SingularIteration, "non-finite residual");
    if (rn <= opts.tol) {
      out.q = q;
      out.residual = rn;
      out.iterations = it;
      return out;
    }
    if (it == opts.max_iter) break;
    if (rn >= prev) {
      if (++growth >= opts.max_growth)
        fail(ErrorKind::NoConvergence, "residual stopped decreasing");
    } else {
      growth = 0;
    }
    prev = rn;
    if (require_full_rank && svd_rank(A) < A.cols())
      fail(ErrorKind::SingularIteration, "augmented Jacobian lost rank");
    Vec step = pinv(A) * r;
    if (!step.allFinite()) fail(ErrorKind::SingularIteration, "non-finite step");
    q -= step;
    for (int i = 0; i < q.size(); ++i)
      if (mech.coord_is_angle(i)) q(i) = wrap_angle(q(i));
  }
  fail(ErrorKind::NoConvergence, "iteration limit reached");
}

}  // namespace

NewtonResult project_to_variety(const Mechanism& mech, const Vec& q, const NewtonOptions& opts) {
  return newton_loop(
      mech, q,
      [&](const Vec& x, Vec& r, Mat& A) {
        EvalResult ev = mech.eval(x);
        r = ev.h;
        A = ev.J;
      },
      opts, false);
}

NewtonResult forward_position(const Mechanism& mech, const Vec& q_seed, const Vec& qa_target,
                              const NewtonOptions& opts) {
  std::vector<int> act = mech.actuated_cols();
  if (qa_target.size() != static_cast<int>(act.size()))
    fail(ErrorKind::DimensionMismatch, "actuated target size");
  const int r0 = mech.n_residuals();
  return newton_loop(
      mech, q_seed,
      [&](const Vec& x, Vec& r, Mat& A) {
        EvalResult ev = mech.eval(x);
        r = Vec(r0 + qa_target.size());
        A = Mat::Zero(r0 + qa_target.size(), mech.n());
        r.head(r0) = ev.h;
        A.topRows(r0) = ev.J;
        for (int i = 0; i < qa_target.size(); ++i) {
          int c = act[i];
          r(r0 + i) = mech.coord_is_angle(c) ? angle_diff(x(c), qa_target(i))
                                             : x(c) - qa_target(i);
          A(r0 + i, c) = 1.0;
        }
      },
      opts, true);
}

NewtonResult inverse_position(const Mechanism& mech, const Vec& q_seed, const Vec2& target,
                              const NewtonOptions& opts) {
  const int r0 = mech.n_residuals();
  return newton_loop(
      mech, q_seed,
      [&](const Vec& x, Vec& r, Mat& A) {
        EvalResult ev = mech.eval(x);
        r = Vec(r0 + 2);
        A = Mat(r0 + 2, mech.n());
        r.head(r0) = ev.h;
        r.segment<2>(r0) = ev.ee - target;
        A.topRows(r0) = ev.J;
        A.bottomRows(2) = ev.Jo;
      },
      opts, true);
}

NewtonResult solve_dependents(const Mechanism& mech, const Vec& q_seed,
                              const std::vector<int>& dependent, const NewtonOptions& opts) {
  NewtonResult out;
  Vec q = q_seed;
  double prev = std::numeric_limits<double>::infinity();
  int growth = 0;
  for (int it = 0; it <= opts.max_iter; ++it) {
    EvalResult ev = mech.eval(q);
    double rn = ev.h.norm();
    if (!std::isfinite(rn)) fail(ErrorKind::SingularIteration, "non-finite residual");
    if (rn <= opts.tol) {
      out.q = q;
      out.residual = rn;
      out.iterations = it;
      return out;
    }
    if (it == opts.max_iter) break;
    if (rn >= prev) {
      if (++growth >= opts.max_growth)
        fail(ErrorKind::NoConvergence, "residual stopped decreasing");
    } else {
      growth = 0;
    }
    prev = rn;
    Mat B(ev.J.rows(), dependent.size());
    for (size_t i = 0; i < dependent.size(); ++i) B.col(i) = ev.J.col(dependent[i]);
    Vec step = B.colPivHouseholderQr().solve(ev.h);
    if (!step.allFinite()) fail(ErrorKind::SingularIteration, "non-finite step");
    for (size_t i = 0; i < dependent.size(); ++i) {
      int c = dependent[i];
      q(c) -= step(i);
      if (mech.coord_is_angle(c)) q(c) = wrap_angle(q(c));
    }
  }
  fail(ErrorKind::NoConvergence, "iteration limit reached");
}

VelocitySolutions velocity_solutions(const Mechanism& mech, const JacobianBundle& b,
                                     const Vec& qdot_active) {
  if (qdot_active.size() != static_cast<int>(b.active.size()))
    fail(ErrorKind::DimensionMismatch, "actuated rate size");
  VelocitySolutions vs;
  Vec rhs = -b.Ja * qdot_active;
  Vec p = min_norm_solve(b.Jp, rhs);
  vs.residual = (b.Jp * p - rhs).norm();
  double scale = std::max(1.0, rhs.norm());
  vs.consistent = vs.residual <= 1e-9 * scale;
  vs.particular = Vec::Zero(mech.n());
  for (size_t i = 0; i < b.active.size(); ++i) vs.particular(b.active[i]) = qdot_active(i);
  for (size_t i = 0; i < b.passive.size(); ++i) vs.particular(b.passive[i]) = p(i);
  Mat nb = null_basis(b.Jp);
  vs.homogeneous = Mat::Zero(mech.n(), nb.cols());
  for (size_t i = 0; i < b.passive.size(); ++i) vs.homogeneous.row(b.passive[i]) = nb.row(i);
  return vs;
}

}  // namespace pkm
