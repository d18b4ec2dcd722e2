#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pkm/linalg.hpp"

namespace pkm {

enum class JointKind { Revolute, Prismatic };

struct Link {
  std::string id;
  bool ground = false;
  double length = 0.0;  // distal anchor sits at (length, 0) in the link frame
  // Inertial data; required only when dynamics is used.
  std::optional<double> mass;
  std::optional<double> inertia;  // about the com, out-of-plane axis
  Vec2 com = Vec2::Zero();        // in the link frame
};

struct Limits {
  double lo;
  double hi;
};

struct Joint {
  std::string id;
  JointKind kind = JointKind::Revolute;
  std::string parent;           // link id
  std::string child;            // link id
  Vec2 anchor = Vec2::Zero();   // in parent frame
  Vec2 child_anchor = Vec2::Zero();
  Vec2 axis = Vec2(1.0, 0.0);   // prismatic direction, in parent frame
  double offset = 0.0;          // added to the coordinate inside the transform
  bool actuated = false;
  std::optional<Limits> limits;
};

struct EndEffector {
  std::string link;
  Vec2 point = Vec2::Zero();  // in the ee link frame
};

struct FramePose {
  double theta = 0.0;
  Vec2 origin = Vec2::Zero();
};

// Per-configuration kinematic evaluation. h stacks three residual rows per
// closure loop (dx, dy, dtheta with the angle row wrapped); J is its exact
// derivative. Jo is the output-map Jacobian (ee position rows), Jee the full
// 3-row frame Jacobian at the ee point used for external wrenches.
struct EvalResult {
  Vec q;
  std::vector<FramePose> pose;       // one per link
  std::vector<Vec2> joint_point;     // world anchor point of each joint
  std::vector<Vec2> joint_axis;      // world axis (prismatic joints)
  Vec h;
  Mat J;
  Vec2 ee = Vec2::Zero();
  Mat Jo;   // 2 x n
  Mat Jee;  // 3 x n (vx, vy, omega of the ee link at the ee point)
  Vec g;    // limit slacks, two per limited joint
  Mat G;    // dg/dq
};

// Tree velocity pass products used by the dynamics assembly.
struct VelResult {
  Vec qdot;
  std::vector<double> omega;       // per link
  std::vector<Vec2> v_com;         // per link, world
  std::vector<Vec2> a_bias_com;    // d/dt(Jv) * qdot per link com
  Vec loop_bias;                   // Jdot * qdot, one triple per loop
  Eigen::Vector3d ee_vel = Eigen::Vector3d::Zero();   // vx, vy, omega
  Eigen::Vector3d ee_bias = Eigen::Vector3d::Zero();  // d/dt(Jee) * qdot
};

class Mechanism {
 public:
  std::string name;
  std::vector<Link> links;
  std::vector<Joint> joints;
  EndEffector ee;
  std::optional<Vec> reference_q;

  // Resolved topology (built by finalize()).
  int ground_link = -1;
  std::vector<int> parent_joint;       // per link, -1 for ground
  std::vector<std::vector<int>> path;  // per link, tree joint indices ground..link
  std::vector<int> tree_joints;
  std::vector<int> chord_joints;       // one closure loop each

  // Validates ids, builds the spanning tree (breadth-first from ground,
  // lexicographic joint-id tie-break) and the loop list.
  void finalize();

  int n() const { return static_cast<int>(joints.size()); }
  int n_loops() const { return static_cast<int>(chord_joints.size()); }
  int n_residuals() const { return 3 * n_loops(); }
  int n_actuated() const;
  std::vector<int> actuated_cols() const;
  std::vector<int> passive_cols() const;
  bool coord_is_angle(int i) const { return joints[i].kind == JointKind::Revolute; }
  int mobility_count() const;  // classical planar count: 3*(links-1) - 2*joints

  int link_index(const std::string& id) const;
  int joint_index(const std::string& id) const;

  EvalResult eval(const Vec& q) const;
  VelResult velocity_pass(const EvalResult& ev, const Vec& qdot) const;

  // World-frame Jacobian rows of a point fixed on a link: 2 x n.
  Mat point_jacobian(const EvalResult& ev, int link, const Vec2& local) const;
  // d(theta_link)/dq: 1 x n.
  Mat orientation_jacobian(int link) const;

  // Admissibility: ||h|| <= tau_h and all limit slacks nonnegative.
  static constexpr double kTauH = 1e-9;
  bool admissible(const Vec& q, std::string* why = nullptr) const;
  void require_admissible(const Vec& q) const;
  bool within_limits(const Vec& q, double slack = -1e-12) const;

  void require_inertial_data() const;

 private:
  std::vector<FramePose> forward_poses(const Vec& q, std::vector<Vec2>& jp,
                                       std::vector<Vec2>& jax) const;
};

}  // namespace pkm
