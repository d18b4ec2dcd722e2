#include "pkm/mechanism.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <set>
#include <sstream>

#include "pkm/errors.hpp"

namespace pkm {

namespace {
Eigen::Rotation2Dd rot(double a) { return Eigen::Rotation2Dd(a); }
}  // namespace

int Mechanism::link_index(const std::string& id) const {
  for (size_t i = 0; i < links.size(); ++i)
    if (links[i].id == id) return static_cast<int>(i);
  fail(ErrorKind::UnknownId, "link '" + id + "'");
}

int Mechanism::joint_index(const std::string& id) const {
  for (size_t i = 0; i < joints.size(); ++i)
    if (joints[i].id == id) return static_cast<int>(i);
  fail(ErrorKind::UnknownId, "joint '" + id + "'");
}

int Mechanism::n_actuated() const {
  int m = 0;
  for (const auto& j : joints) m += j.actuated ? 1 : 0;
  return m;
}

std::vector<int> Mechanism::actuated_cols() const {
  std::vector<int> out;
  for (int i = 0; i < n(); ++i)
    if (joints[i].actuated) out.push_back(i);
  return out;
}

std::vector<int> Mechanism::passive_cols() const {
  std::vector<int> out;
  for (int i = 0; i < n(); ++i)
    if (!joints[i].actuated) out.push_back(i);
  return out;
}

int Mechanism::mobility_count() const {
  return 3 * (static_cast<int>(links.size()) - 1) - 2 * n();
}

void Mechanism::finalize() {
  std::set<std::string> seen;
  for (const auto& l : links) {
    if (!seen.insert(l.id).second) fail(ErrorKind::DuplicateId, "link '" + l.id + "'");
  }
  seen.clear();
  for (const auto& j : joints) {
    if (!seen.insert(j.id).second) fail(ErrorKind::DuplicateId, "joint '" + j.id + "'");
  }
  ground_link = -1;
  for (size_t i = 0; i < links.size(); ++i) {
    if (links[i].ground) {
      if (ground_link >= 0) fail(ErrorKind::DuplicateId, "more than one ground link");
      ground_link = static_cast<int>(i);
    } else if (links[i].length <= 0.0) {
      fail(ErrorKind::ZeroLengthLink, "link '" + links[i].id + "'");
    }
  }
  if (ground_link < 0) fail(ErrorKind::NoGroundLink, "no link marked ground");

  const int nl = static_cast<int>(links.size());
  std::vector<std::vector<std::pair<std::string, int>>> adj(nl);
  for (int j = 0; j < n(); ++j) {
    int p = link_index(joints[j].parent);
    int c = link_index(joints[j].child);
    if (p == c) fail(ErrorKind::ParseError, "joint '" + joints[j].id + "' connects a link to itself");
    adj[p].push_back({joints[j].id, j});
    adj[c].push_back({joints[j].id, j});
  }
  for (auto& a : adj) std::sort(a.begin(), a.end());

  parent_joint.assign(nl, -1);
  path.assign(nl, {});
  tree_joints.clear();
  chord_joints.clear();
  std::vector<bool> link_seen(nl, false), joint_used(n(), false);
  std::deque<int> queue{ground_link};
  link_seen[ground_link] = true;
  while (!queue.empty()) {
    int l = queue.front();
    queue.pop_front();
    for (const auto& [id, j] : adj[l]) {
      (void)id;
      if (joint_used[j]) continue;
      int other = link_index(joints[j].parent) == l ? link_index(joints[j].child)
                                                    : link_index(joints[j].parent);
      if (link_seen[other]) continue;  // chord, classified after BFS
      joint_used[j] = true;
      link_seen[other] = true;
      parent_joint[other] = j;
      path[other] = path[l];
      path[other].push_back(j);
      tree_joints.push_back(j);
      queue.push_back(other);
    }
  }
  for (int l = 0; l < nl; ++l)
    if (!link_seen[l]) fail(ErrorKind::DisconnectedGraph, "link '" + links[l].id + "' unreachable from ground");
  for (int j = 0; j < n(); ++j)
    if (!joint_used[j]) chord_joints.push_back(j);
  // Tree orientation check: every tree joint must have its child on the far
  // side of the tree, i.e. the child link's parent joint is the joint itself.
  for (int j : tree_joints) {
    int c = link_index(joints[j].child);
    if (parent_joint[c] != j)
      fail(ErrorKind::ParseError,
           "joint '" + joints[j].id + "': child link must be the one farther from ground");
  }
  if (ee.link.empty()) fail(ErrorKind::ParseError, "no end effector specified");
  link_index(ee.link);
  if (reference_q && reference_q->size() != n())
    fail(ErrorKind::DimensionMismatch, "reference_q size");
}

std::vector<FramePose> Mechanism::forward_poses(const Vec& q, std::vector<Vec2>& jp,
                                                std::vector<Vec2>& jax) const {
  if (q.size() != n()) fail(ErrorKind::DimensionMismatch, "configuration size");
  std::vector<FramePose> pose(links.size());
  jp.assign(n(), Vec2::Zero());
  jax.assign(n(), Vec2::Zero());
  pose[ground_link] = FramePose{};
  // tree_joints is in BFS order, so parents are always ready.
  for (int j : tree_joints) {
    const Joint& jt = joints[j];
    int p = link_index(jt.parent);
    int c = link_index(jt.child);
    const FramePose& pp = pose[p];
    FramePose cp;
    if (jt.kind == JointKind::Revolute) {
      Vec2 w = pp.origin + rot(pp.theta) * jt.anchor;
      cp.theta = pp.theta + q(j) + jt.offset;
      cp.origin = w - rot(cp.theta) * jt.child_anchor;
      jp[j] = w;
    } else {
      Vec2 u = rot(pp.theta) * jt.axis;
      cp.theta = pp.theta;
      cp.origin = pp.origin + rot(pp.theta) * (jt.anchor + (q(j) + jt.offset) * jt.axis) -
                  rot(cp.theta) * jt.child_anchor;
      jp[j] = pp.origin + rot(pp.theta) * jt.anchor;
      jax[j] = u;
    }
    pose[c] = cp;
  }
  // World data for chord joints (anchor on the parent side).
  for (int j : chord_joints) {
    const Joint& jt = joints[j];
    const FramePose& pp = pose[link_index(jt.parent)];
    if (jt.kind == JointKind::Revolute) {
      jp[j] = pp.origin + rot(pp.theta) * jt.anchor;
    } else {
      jp[j] = pp.origin + rot(pp.theta) * jt.anchor;
      jax[j] = rot(pp.theta) * jt.axis;
    }
  }
  return pose;
}

Mat Mechanism::point_jacobian(const EvalResult& ev, int link, const Vec2& local) const {
  Mat Jp = Mat::Zero(2, n());
  Vec2 w = ev.pose[link].origin + rot(ev.pose[link].theta) * local;
  for (int j : path[link]) {
    if (joints[j].kind == JointKind::Revolute)
      Jp.col(j) = rot90(w - ev.joint_point[j]);
    else
      Jp.col(j) = ev.joint_axis[j];
  }
  return Jp;
}

Mat Mechanism::orientation_jacobian(int link) const {
  Mat Jt = Mat::Zero(1, n());
  for (int j : path[link])
    if (joints[j].kind == JointKind::Revolute) Jt(0, j) = 1.0;
  return Jt;
}

EvalResult Mechanism::eval(const Vec& q) const {
  EvalResult ev;
  ev.q = q;
  ev.pose = forward_poses(q, ev.joint_point, ev.joint_axis);

  const int r = n_residuals();
  ev.h = Vec::Zero(r);
  ev.J = Mat::Zero(r, n());
  for (int li = 0; li < n_loops(); ++li) {
    int j = chord_joints[li];
    const Joint& jt = joints[j];
    int p = link_index(jt.parent);
    int c = link_index(jt.child);
    Vec2 wp, wc;
    Mat Jpnt_p, Jpnt_c;
    if (jt.kind == JointKind::Revolute) {
      wp = ev.pose[p].origin + rot(ev.pose[p].theta) * jt.anchor;
      Jpnt_p = point_jacobian(ev, p, jt.anchor);
    } else {
      Vec2 slid = jt.anchor + (q(j) + jt.offset) * jt.axis;
      wp = ev.pose[p].origin + rot(ev.pose[p].theta) * slid;
      Jpnt_p = point_jacobian(ev, p, slid);
      Jpnt_p.col(j) += ev.joint_axis[j];
    }
    wc = ev.pose[c].origin + rot(ev.pose[c].theta) * jt.child_anchor;
    Jpnt_c = point_jacobian(ev, c, jt.child_anchor);

    ev.h.segment<2>(3 * li) = wp - wc;
    ev.J.middleRows(3 * li, 2) = Jpnt_p - Jpnt_c;

    double ang;
    Mat Jang = orientation_jacobian(p) - orientation_jacobian(c);
    if (jt.kind == JointKind::Revolute) {
      ang = ev.pose[p].theta + q(j) + jt.offset - ev.pose[c].theta;
      Jang(0, j) += 1.0;
    } else {
      ang = ev.pose[p].theta - ev.pose[c].theta;
    }
    ev.h(3 * li + 2) = wrap_angle(ang);
    ev.J.row(3 * li + 2) = Jang;
  }

  int el = link_index(ee.link);
  ev.ee = ev.pose[el].origin + rot(ev.pose[el].theta) * ee.point;
  ev.Jo = point_jacobian(ev, el, ee.point);
  ev.Jee = Mat::Zero(3, n());
  ev.Jee.topRows(2) = ev.Jo;
  ev.Jee.row(2) = orientation_jacobian(el);

  int nlim = 0;
  for (const auto& jt : joints) nlim += jt.limits ? 1 : 0;
  ev.g = Vec::Zero(2 * nlim);
  ev.G = Mat::Zero(2 * nlim, n());
  int row = 0;
  for (int j = 0; j < n(); ++j) {
    if (!joints[j].limits) continue;
    double v = coord_is_angle(j) ? wrap_angle(q(j)) : q(j);
    ev.g(row) = v - joints[j].limits->lo;
    ev.G(row, j) = 1.0;
    ev.g(row + 1) = joints[j].limits->hi - v;
    ev.G(row + 1, j) = -1.0;
    row += 2;
  }
  if (!ev.J.allFinite() || !ev.h.allFinite())
    fail(ErrorKind::NonFiniteEntry, "constraint evaluation");
  return ev;
}

VelResult Mechanism::velocity_pass(const EvalResult& ev, const Vec& qdot) const {
  if (qdot.size() != n()) fail(ErrorKind::DimensionMismatch, "velocity size");
  VelResult vr;
  vr.qdot = qdot;
  const int nl = static_cast<int>(links.size());
  vr.omega.assign(nl, 0.0);
  vr.v_com.assign(nl, Vec2::Zero());
  vr.a_bias_com.assign(nl, Vec2::Zero());

  // Velocities of the tree joint anchor points and axes.
  std::vector<Vec2> jp_dot(n(), Vec2::Zero()), ax_dot(n(), Vec2::Zero());
  std::vector<double> link_w(nl, 0.0);
  std::vector<Vec2> org_v(nl, Vec2::Zero());
  auto point_vel = [&](int link, const Vec2& world_pt) -> Vec2 {
    return org_v[link] + link_w[link] * rot90(world_pt - ev.pose[link].origin);
  };
  for (int j : tree_joints) {
    const Joint& jt = joints[j];
    int p = link_index(jt.parent);
    int c = link_index(jt.child);
    Vec2 wv = point_vel(p, ev.joint_point[j]);
    jp_dot[j] = wv;
    if (jt.kind == JointKind::Revolute) {
      link_w[c] = link_w[p] + qdot(j);
      Vec2 anchor_to_origin = ev.pose[c].origin - ev.joint_point[j];
      org_v[c] = wv + link_w[c] * rot90(anchor_to_origin);
    } else {
      ax_dot[j] = link_w[p] * rot90(ev.joint_axis[j]);
      link_w[c] = link_w[p];
      Vec2 wpt = ev.pose[p].origin +
                 Eigen::Rotation2Dd(ev.pose[p].theta) * (jt.anchor + (ev.q(j) + jt.offset) * jt.axis);
      Vec2 wpt_v = point_vel(p, wpt) + qdot(j) * ev.joint_axis[j];
      Vec2 anchor_to_origin = ev.pose[c].origin - wpt;
      org_v[c] = wpt_v + link_w[c] * rot90(anchor_to_origin);
    }
  }
  for (int j : chord_joints) {
    const Joint& jt = joints[j];
    int p = link_index(jt.parent);
    jp_dot[j] = point_vel(p, ev.joint_point[j]);
    if (jt.kind == JointKind::Prismatic) ax_dot[j] = link_w[p] * rot90(ev.joint_axis[j]);
  }

  // Derivative of a point-Jacobian product: sum over path of d/dt(column)*qdot.
  auto point_bias = [&](int link, const Vec2& world_pt) {
    Vec2 b = Vec2::Zero();
    Vec2 v = point_vel(link, world_pt);
    for (int j : path[link]) {
      if (joints[j].kind == JointKind::Revolute)
        b += qdot(j) * rot90(v - jp_dot[j]);
      else
        b += qdot(j) * ax_dot[j];
    }
    return b;
  };

  for (int l = 0; l < nl; ++l) {
    if (l == ground_link) continue;
    Vec2 cw = ev.pose[l].origin + Eigen::Rotation2Dd(ev.pose[l].theta) * links[l].com;
    vr.omega[l] = link_w[l];
    vr.v_com[l] = point_vel(l, cw);
    vr.a_bias_com[l] = point_bias(l, cw);
  }
  vr.omega[ground_link] = 0.0;

  vr.loop_bias = Vec::Zero(n_residuals());
  for (int li = 0; li < n_loops(); ++li) {
    int j = chord_joints[li];
    const Joint& jt = joints[j];
    int p = link_index(jt.parent);
    int c = link_index(jt.child);
    Vec2 wp, bias_p;
    if (jt.kind == JointKind::Revolute) {
      wp = ev.pose[p].origin + Eigen::Rotation2Dd(ev.pose[p].theta) * jt.anchor;
      bias_p = point_bias(p, wp);
    } else {
      Vec2 slid = jt.anchor + (ev.q(j) + jt.offset) * jt.axis;
      wp = ev.pose[p].origin + Eigen::Rotation2Dd(ev.pose[p].theta) * slid;
      // the contact point itself slides at qdot_j along the axis: its revolute
      // column derivatives see that extra velocity, which folds into a second
      // axis-tilt term (Coriolis factor of two)
      bias_p = point_bias(p, wp) + 2.0 * qdot(j) * ax_dot[j];
    }
    Vec2 wc = ev.pose[c].origin + Eigen::Rotation2Dd(ev.pose[c].theta) * jt.child_anchor;
    Vec2 bias_c = point_bias(c, wc);
    vr.loop_bias.segment<2>(3 * li) = bias_p - bias_c;
    // angle rows have constant coefficients, zero bias
  }

  int el = link_index(ee.link);
  Vec2 ew = ev.ee;
  vr.ee_vel.head<2>() = point_vel(el, ew);
  vr.ee_vel(2) = link_w[el];
  vr.ee_bias.head<2>() = point_bias(el, ew);
  vr.ee_bias(2) = 0.0;
  return vr;
}

bool Mechanism::admissible(const Vec& q, std::string* why) const {
  if (q.size() != n()) {
    if (why) *why = "size mismatch";
    return false;
  }
  EvalResult ev = eval(q);
  if (ev.h.norm() > kTauH) {
    if (why) {
      std::ostringstream os;
      os << "residual " << ev.h.norm() << " exceeds " << kTauH;
      *why = os.str();
    }
    return false;
  }
  if (ev.g.size() > 0 && ev.g.minCoeff() < -1e-12) {
    if (why) *why = "limit violated";
    return false;
  }
  return true;
}

void Mechanism::require_admissible(const Vec& q) const {
  std::string why;
  if (!admissible(q, &why)) fail(ErrorKind::NotAdmissible, why);
}

bool Mechanism::within_limits(const Vec& q, double slack) const {
  for (int j = 0; j < n(); ++j) {
    if (!joints[j].limits) continue;
    double v = coord_is_angle(j) ? wrap_angle(q(j)) : q(j);
    if (v - joints[j].limits->lo < slack) return false;
    if (joints[j].limits->hi - v < slack) return false;
  }
  return true;
}

void Mechanism::require_inertial_data() const {
  for (size_t l = 0; l < links.size(); ++l) {
    if (static_cast<int>(l) == ground_link) continue;
    if (!links[l].mass || !links[l].inertia)
      fail(ErrorKind::MissingInertialData, "link '" + links[l].id + "'");
  }
}

}  // namespace pkm
