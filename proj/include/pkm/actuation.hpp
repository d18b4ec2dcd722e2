#pragma once

#include "pkm/kinematics.hpp"

namespace pkm {

// Local coordinate chart on the variety: `dep` coordinates are solved from
// the constraints, `indep` parameterize the tangent space.
struct Chart {
  std::vector<int> dep;
  std::vector<int> indep;
};

// Greedy column-pivoted selection of a well-conditioned square dependent
// block; deterministic (ties resolved toward the lowest column index).
// Raises CSpaceSingular when no full-rank block exists.
Chart choose_chart(const Mechanism& mech, const EvalResult& ev,
                   double tol_factor = kRankTolFactor);

struct ChartMatrices {
  Mat N;          // n x delta, independent rows form the identity
  Mat B;          // dependent square block of J
  double cond_B;  // sigma_max / sigma_min
};

ChartMatrices chart_matrices(const Mechanism& mech, const EvalResult& ev, const Chart& chart);

struct ActuationAssessment {
  Mat A;               // m x delta, actuator rates per unit independent rate
  int m = 0;
  int delta_loc = 0;
  int alpha = 0;       // rank of A
  int rho = 0;         // m - alpha, actuation redundancy degree
  bool full = false;   // alpha == delta_loc
  bool redundant = false;
  // Diagnostics that stay meaningful at singular configurations, where a
  // single alpha is not: rank of the tangent space projected onto actuated
  // coordinates, and the dimension of independently assignable inputs.
  int tangent_input_rank = 0;
  int assignable_input_dim = 0;
};

ActuationAssessment control_matrix(const Mechanism& mech, const JacobianBundle& b,
                                   const Chart& chart, const ChartMatrices& cm);

struct ForceDistribution {
  Vec c;            // actuator efforts
  double residual;  // ||A^T c - target||
  bool exact;
};

// Minimum-norm actuator efforts realizing a generalized force on the
// independent coordinates, plus an optional internal-prestress component that
// must lie in the null space of A^T.
ForceDistribution force_distribution(const ActuationAssessment& aa, const Vec& target,
                                     const Vec& prestress = Vec());

}  // namespace pkm
