#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "pkm/kinematics.hpp"

namespace pkm {

struct AtlasOptions {
  double step = 0.05;
  int budget = 40000;
  // Optional exploration window, either as per-coordinate bounds or as a
  // wrap-aware ball around a center (used by section traces).
  Vec box_lo, box_hi;                 // empty = unbounded
  std::optional<Vec> window_center;
  double window_radius = 0.0;

  double tol_factor = kRankTolFactor;
  // Mode labeling: samples whose indicator dips below the tube threshold act
  // as separators (motion modes get re-glued across them by tangent
  // alignment, the other families do not).
  double tube_cspace = 8e-3;
  double tube_input = 5e-3;
  double tube_output = 8e-3;
  double glue_radius_factor = 3.0;
  double glue_angle_deg = 30.0;
  // Connected groups smaller than this are reported as unlabeled slivers
  // instead of modes; they arise from ragged tube boundaries.
  int min_mode_size = 3;
};

struct AtlasSample {
  Vec q;
  bool feasible = true;
  int delta_diff = 0;
  // Relative smallest singular values of J, Jp, Ja, Jo*null(J).
  double ind_cspace = 1.0, ind_passive = 1.0, ind_actuator = 1.0, ind_output = 1.0;
  double det_jp = std::numeric_limits<double>::quiet_NaN();  // square Jp only
  int assembly = -1, motion = -1, actuation = -1, operation = -1;
};

struct ModeAtlas {
  std::vector<AtlasSample> samples;
  std::vector<std::pair<int, int>> edges;
  double step = 0.0;
  double tube_cspace = 8e-3;  // threshold the samples were marked with
  bool budget_exhausted = false;
  bool labeled = false;
  int n_assembly = 0, n_motion = 0, n_actuation = 0, n_operation = 0;
  std::vector<int> motion_mode_dof;  // modal tangent dimension per motion mode
};

// Breadth-first sampling of the constraint variety: every accepted sample is
// Newton-projected, deduplicated against a spatial hash at step/2, and
// expanded along +-tangent directions. Infeasible samples (limit violations)
// are recorded but not expanded.
ModeAtlas sample_cspace(const Mechanism& mech, const std::vector<Vec>& seeds,
                        const AtlasOptions& opts = {});

// Fills the four mode label families and their counts.
void label_modes(const Mechanism& mech, ModeAtlas& atlas, const AtlasOptions& opts = {});

struct DofReport {
  int mobility_count = 0;       // classical planar count
  int delta_diff_reference = 0; // tangent dimension at the reference
  int delta = 0;                // modal tangent dimension over regular samples
  std::vector<int> per_motion_mode;
};

DofReport dof_report(const Mechanism& mech, const ModeAtlas& atlas,
                     const std::optional<Vec>& reference = std::nullopt);

// Distance respecting angular wrap on revolute coordinates.
double config_distance(const Mechanism& mech, const Vec& a, const Vec& b);

struct SectionTrace {
  ModeAtlas atlas;
  std::vector<int> coords;            // traced coordinate indices
  std::vector<Vec> rows;              // selected coordinates per sample
};

// Samples the variety inside a wrap-aware ball and reports the chosen
// coordinate triple (or pair) per sample.
SectionTrace trace_section(const Mechanism& mech, const Vec& center, double radius,
                           const std::vector<int>& coords, const AtlasOptions& opts = {});

}  // namespace pkm
