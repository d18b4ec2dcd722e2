#pragma once

#include <Eigen/Dense>
#include <optional>

namespace pkm {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Vec2 = Eigen::Vector2d;

// Default multiplier for the rank cutoff: sigma_i counts as nonzero when
// sigma_i > max(rows, cols) * sigma_max * factor.
inline constexpr double kRankTolFactor = 1e-10;

struct RankInfo {
  int rank = 0;
  Vec singular_values;   // descending
  double tol = 0.0;      // absolute cutoff actually used
  // How far the spectrum stays away from the cutoff: min over sigma of
  // max(sigma/tol, tol/sigma). Close to 1 means some singular value sits
  // right at the threshold and the rank decision is fragile.
  double gap = 0.0;
};

RankInfo rank_info(const Mat& A, double tol_factor = kRankTolFactor);
int svd_rank(const Mat& A, double tol_factor = kRankTolFactor);

// Orthonormal basis of the (right) null space, n x (n - rank). Columns come
// from the SVD V factor, so callers must not rely on their signs.
Mat null_basis(const Mat& A, double tol_factor = kRankTolFactor);

// Moore-Penrose pseudoinverse with the same cutoff policy.
Mat pinv(const Mat& A, double tol_factor = kRankTolFactor);

// Minimum-norm solution of A x = b (least squares when inconsistent).
Vec min_norm_solve(const Mat& A, const Vec& b, double tol_factor = kRankTolFactor);

// Wrap into (-pi, pi].
double wrap_angle(double a);
Vec wrap_angles(Vec q);

// Smallest absolute difference a - b on the circle.
double angle_diff(double a, double b);

inline Vec2 rot90(const Vec2& v) { return Vec2(-v.y(), v.x()); }

// sigma_min / sigma_max of A; 0 for a rank-deficient-by-shape or zero matrix.
double inv_cond(const Mat& A);

bool all_finite(const Mat& A);

}  // namespace pkm
