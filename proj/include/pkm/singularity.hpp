#pragma once

#include <limits>
#include <string>
#include <vector>

#include "pkm/kinematics.hpp"

namespace pkm {

struct ClassifyOptions {
  double probe_radius = 1e-4;
  uint64_t seed = 0;
  double tol_factor = kRankTolFactor;
  // A rank decision whose spectrum comes within this factor of the cutoff
  // (see RankInfo::gap) is marked uncertain.
  double uncertain_gap = 1e3;
};

// Rank evidence for one matrix family: value at the queried configuration and
// at each tangent probe.
struct RankEvidence {
  int rank = 0;
  Vec sigma;
  std::vector<int> probe_ranks;
  bool differs() const {
    for (int p : probe_ranks)
      if (p != rank) return true;
    return false;
  }
};

struct SingularityReport {
  bool cspace = false;
  bool passive = false;
  bool actuator = false;
  bool input = false;   // passive or actuator
  bool output = false;
  bool uncertain = false;
  int delta_diff = 0;
  RankEvidence J, Jp, Ja, JoN;
  // Only populated when a constraint/input flag fires: "RPM" when the passive
  // block has a null space, "II" when some commanded input rate is
  // unrealizable.
  std::vector<std::string> labels;
  double min_gap = std::numeric_limits<double>::infinity();
};

// Compares ranks at q against ranks at 2*delta_diff + 4 nearby regular
// probes obtained by projecting tangent perturbations back to the variety.
SingularityReport classify(const Mechanism& mech, const Vec& q,
                           const ClassifyOptions& opts = {});

std::string report_text(const SingularityReport& rep);

enum class SingularFlag { CSpace, Passive, Actuator, Input, Output };

// Scalar health indicator for a flag: the relative singular value that a
// regular configuration keeps away from zero. Zero means singular.
double flag_indicator(const JacobianBundle& b, SingularFlag flag);

struct LocusOptions {
  double step = 0.05;
  int budget = 60000;
  // Optional per-coordinate window: only configurations with every coordinate
  // inside [lo, hi] get explored; entries at +-inf are unbounded.
  Vec box_lo, box_hi;
  double dip_threshold = 0.05;  // edges worth refining
  double sharpen_tol = 1e-10;   // bisection interval size
  uint64_t seed = 0;
};

struct LocusPoint {
  Vec q;
  double indicator;
};

// Walks the variety from `seed` and sharpens every crossing of the chosen
// singularity flag: sign-change bisection on det of the square passive block
// when available, golden-section dip search on the indicator otherwise.
std::vector<LocusPoint> scan_singular_locus(const Mechanism& mech, const Vec& seed,
                                            SingularFlag flag, const LocusOptions& opts);

}  // namespace pkm
