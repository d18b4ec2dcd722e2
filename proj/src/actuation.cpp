#include "pkm/actuation.hpp"

#include <algorithm>
#include <cmath>

#include "pkm/errors.hpp"

namespace pkm {

Chart choose_chart(const Mechanism& mech, const EvalResult& ev, double tol_factor) {
  const int r = static_cast<int>(ev.J.rows());
  const int n = mech.n();
  Chart chart;
  if (r == 0) {
    for (int i = 0; i < n; ++i) chart.indep.push_back(i);
    return chart;
  }
  // Modified Gram-Schmidt with column pivoting on J: at each round pick the
  // column with the largest remaining norm (lowest index on near-ties).
  Mat W = ev.J;
  double scale = W.norm();
  if (scale == 0.0) fail(ErrorKind::CSpaceSingular, "zero Jacobian");
  std::vector<bool> used(n, false);
  for (int k = 0; k < r; ++k) {
    int best = -1;
    double best_norm = 0.0;
    for (int j = 0; j < n; ++j) {
      if (used[j]) continue;
      double nj = W.col(j).norm();
      if (nj > best_norm * (1.0 + 1e-12)) {
        best_norm = nj;
        best = j;
      }
    }
    if (best < 0 || best_norm <= std::max(r, n) * scale * tol_factor)
      fail(ErrorKind::CSpaceSingular, "no full-rank dependent block");
    used[best] = true;
    chart.dep.push_back(best);
    Vec u = W.col(best) / best_norm;
    for (int j = 0; j < n; ++j) {
      if (used[j]) continue;
      W.col(j) -= u * u.dot(W.col(j));
    }
  }
  std::sort(chart.dep.begin(), chart.dep.end());
  for (int i = 0; i < n; ++i)
    if (!used[i]) chart.indep.push_back(i);
  return chart;
}

ChartMatrices chart_matrices(const Mechanism& mech, const EvalResult& ev, const Chart& chart) {
  const int n = mech.n();
  const int r = static_cast<int>(ev.J.rows());
  if (static_cast<int>(chart.dep.size()) != r ||
      static_cast<int>(chart.indep.size()) != n - r)
    fail(ErrorKind::ChartInvalid, "chart size");
  ChartMatrices cm;
  cm.B = Mat(r, r);
  Mat Jind(r, chart.indep.size());
  for (size_t i = 0; i < chart.dep.size(); ++i) cm.B.col(i) = ev.J.col(chart.dep[i]);
  for (size_t i = 0; i < chart.indep.size(); ++i) Jind.col(i) = ev.J.col(chart.indep[i]);
  double ic = r > 0 ? inv_cond(cm.B) : 1.0;
  cm.cond_B = ic > 0.0 ? 1.0 / ic : std::numeric_limits<double>::infinity();
  cm.N = Mat::Zero(n, chart.indep.size());
  Mat X;
  if (r > 0) {
    X = cm.B.colPivHouseholderQr().solve(Jind);
    if (!X.allFinite()) fail(ErrorKind::ChartDegenerated, "dependent solve produced non-finite");
  }
  for (size_t i = 0; i < chart.indep.size(); ++i) cm.N(chart.indep[i], i) = 1.0;
  for (size_t i = 0; i < chart.dep.size(); ++i)
    if (r > 0) cm.N.row(chart.dep[i]) = -X.row(i);
  return cm;
}

ActuationAssessment control_matrix(const Mechanism& mech, const JacobianBundle& b,
                                   const Chart& chart, const ChartMatrices& cm) {
  (void)chart;
  ActuationAssessment aa;
  aa.m = static_cast<int>(b.active.size());
  aa.delta_loc = static_cast<int>(cm.N.cols());
  aa.A = b.Ji * cm.N;
  aa.alpha = svd_rank(aa.A);
  aa.rho = aa.m - aa.alpha;
  aa.full = aa.alpha == aa.delta_loc;
  aa.redundant = aa.rho > 0;
  Mat N0 = null_basis(b.J);
  aa.tangent_input_rank = svd_rank(b.Ji * N0);
  int np = static_cast<int>(b.passive.size());
  (void)np;
  aa.assignable_input_dim = aa.m - b.rank_J.rank + b.rank_Jp.rank;
  (void)mech;
  return aa;
}

ForceDistribution force_distribution(const ActuationAssessment& aa, const Vec& target,
                                     const Vec& prestress) {
  if (target.size() != aa.delta_loc)
    fail(ErrorKind::DimensionMismatch, "force target size");
  ForceDistribution fd;
  Mat At = aa.A.transpose();  // delta x m
  fd.c = min_norm_solve(At, target);
  fd.residual = (At * fd.c - target).norm();
  fd.exact = fd.residual <= 1e-9 * std::max(1.0, target.norm());
  if (prestress.size() > 0) {
    if (prestress.size() != aa.m) fail(ErrorKind::DimensionMismatch, "prestress size");
    if ((At * prestress).norm() > 1e-8 * prestress.norm())
      fail(ErrorKind::PrestressNotInNullSpace, "prestress transmits net force");
    fd.c += prestress;
  }
  return fd;
}

}  // namespace pkm
