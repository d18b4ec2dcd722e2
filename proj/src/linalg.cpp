#include "pkm/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pkm/errors.hpp"

namespace pkm {

const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::DisconnectedGraph: return "DisconnectedGraph";
    case ErrorKind::NoGroundLink: return "NoGroundLink";
    case ErrorKind::DuplicateId: return "DuplicateId";
    case ErrorKind::UnknownId: return "UnknownId";
    case ErrorKind::UnsupportedJointKind: return "UnsupportedJointKind";
    case ErrorKind::ZeroLengthLink: return "ZeroLengthLink";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::NotAdmissible: return "NotAdmissible";
    case ErrorKind::NoConvergence: return "NoConvergence";
    case ErrorKind::SingularIteration: return "SingularIteration";
    case ErrorKind::OutOfWorkspace: return "OutOfWorkspace";
    case ErrorKind::NonFiniteEntry: return "NonFiniteEntry";
    case ErrorKind::ProbeProjectionFailed: return "ProbeProjectionFailed";
    case ErrorKind::EmptyIntersection: return "EmptyIntersection";
    case ErrorKind::SeedNotAdmissible: return "SeedNotAdmissible";
    case ErrorKind::CSpaceSingular: return "CSpaceSingular";
    case ErrorKind::ChartInvalid: return "ChartInvalid";
    case ErrorKind::ChartDegenerated: return "ChartDegenerated";
    case ErrorKind::PrestressNotInNullSpace: return "PrestressNotInNullSpace";
    case ErrorKind::MissingInertialData: return "MissingInertialData";
    case ErrorKind::Underactuated: return "Underactuated";
    case ErrorKind::ConstraintDriftExceeded: return "ConstraintDriftExceeded";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::UnknownCommand: return "UnknownCommand";
  }
  return "Unknown";
}

RankInfo rank_info(const Mat& A, double tol_factor) {
  RankInfo out;
  if (A.rows() == 0 || A.cols() == 0) {
    out.gap = std::numeric_limits<double>::infinity();
    return out;
  }
  Eigen::JacobiSVD<Mat> svd(A);
  out.singular_values = svd.singularValues();
  double smax = out.singular_values(0);
  out.tol = std::max(A.rows(), A.cols()) * smax * tol_factor;
  int r = 0;
  for (int i = 0; i < out.singular_values.size(); ++i)
    if (out.singular_values(i) > out.tol) ++r;
  out.rank = r;
  // Margin of the spectrum from the rank cutoff: a sigma sitting close to the
  // threshold (either side) makes the rank decision fragile.
  out.gap = std::numeric_limits<double>::infinity();
  if (out.tol > 0.0) {
    for (int i = 0; i < out.singular_values.size(); ++i) {
      double s = out.singular_values(i);
      if (s <= 0.0) continue;
      double m = std::max(s / out.tol, out.tol / s);
      out.gap = std::min(out.gap, m);
    }
  }
  return out;
}

int svd_rank(const Mat& A, double tol_factor) { return rank_info(A, tol_factor).rank; }

Mat null_basis(const Mat& A, double tol_factor) {
  if (A.cols() == 0) return Mat(0, 0);
  if (A.rows() == 0) return Mat::Identity(A.cols(), A.cols());
  Eigen::JacobiSVD<Mat> svd(A, Eigen::ComputeFullV);
  const Vec& s = svd.singularValues();
  double tol = std::max(A.rows(), A.cols()) * s(0) * tol_factor;
  int r = 0;
  for (int i = 0; i < s.size(); ++i)
    if (s(i) > tol) ++r;
  return svd.matrixV().rightCols(A.cols() - r);
}

Mat pinv(const Mat& A, double tol_factor) {
  if (A.rows() == 0 || A.cols() == 0) return Mat::Zero(A.cols(), A.rows());
  Eigen::JacobiSVD<Mat> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vec& s = svd.singularValues();
  double tol = std::max(A.rows(), A.cols()) * s(0) * tol_factor;
  Vec inv = Vec::Zero(s.size());
  for (int i = 0; i < s.size(); ++i)
    if (s(i) > tol) inv(i) = 1.0 / s(i);
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

Vec min_norm_solve(const Mat& A, const Vec& b, double tol_factor) {
  if (b.size() != A.rows())
    fail(ErrorKind::DimensionMismatch, "min_norm_solve rhs size");
  return pinv(A, tol_factor) * b;
}

double wrap_angle(double a) {
  double w = std::remainder(a, 2.0 * M_PI);
  if (w <= -M_PI) w = M_PI;  // remainder returns [-pi, pi]; fold -pi to +pi
  return w;
}

Vec wrap_angles(Vec q) {
  for (int i = 0; i < q.size(); ++i) q(i) = wrap_angle(q(i));
  return q;
}

double angle_diff(double a, double b) { return wrap_angle(a - b); }

double inv_cond(const Mat& A) {
  if (A.rows() == 0 || A.cols() == 0) return 0.0;
  Eigen::JacobiSVD<Mat> svd(A);
  const Vec& s = svd.singularValues();
  if (s(0) <= 0.0) return 0.0;
  return s(s.size() - 1) / s(0);
}

bool all_finite(const Mat& A) { return A.allFinite(); }

}  // namespace pkm
