#include "pkm/singularity.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "pkm/atlas.hpp"
#include "pkm/errors.hpp"

namespace pkm {

namespace {

struct RankSnapshot {
  RankInfo J, Jp, Ja, JoN;
  Mat N;
};

RankSnapshot snapshot(const Mechanism& mech, const Vec& q, double tol_factor) {
  EvalResult ev = mech.eval(q);
  JacobianBundle b = make_bundle(mech, ev, tol_factor);
  RankSnapshot s;
  s.J = b.rank_J;
  s.Jp = b.rank_Jp;
  s.Ja = b.rank_Ja;
  s.N = null_basis(ev.J, tol_factor);
  s.JoN = rank_info(ev.Jo * s.N, tol_factor);
  return s;
}

double worst_gap(const RankSnapshot& s) {
  return std::min(std::min(s.J.gap, s.Jp.gap), std::min(s.Ja.gap, s.JoN.gap));
}

}  // namespace

SingularityReport classify(const Mechanism& mech, const Vec& q, const ClassifyOptions& opts) {
  mech.require_admissible(q);
  RankSnapshot center = snapshot(mech, q, opts.tol_factor);
  SingularityReport rep;
  rep.J.rank = center.J.rank;
  rep.J.sigma = center.J.singular_values;
  rep.Jp.rank = center.Jp.rank;
  rep.Jp.sigma = center.Jp.singular_values;
  rep.Ja.rank = center.Ja.rank;
  rep.Ja.sigma = center.Ja.singular_values;
  rep.JoN.rank = center.JoN.rank;
  rep.JoN.sigma = center.JoN.singular_values;
  rep.delta_diff = mech.n() - center.J.rank;
  rep.min_gap = worst_gap(center);

  const int delta = rep.delta_diff;
  const int n_probes = 2 * delta + 4;
  std::mt19937_64 rng(opts.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  for (int p = 0; p < n_probes; ++p) {
    Vec dir;
    if (p < 2 * delta) {
      dir = center.N.col(p / 2) * (p % 2 == 0 ? 1.0 : -1.0);
    } else {
      Vec w(center.N.cols());
      for (int i = 0; i < w.size(); ++i) w(i) = gauss(rng);
      if (w.norm() == 0.0) w.setOnes();
      dir = center.N * (w / w.norm());
    }
    Vec probe_q;
    try {
      probe_q = project_to_variety(mech, q + opts.probe_radius * dir).q;
    } catch (const Error& e) {
      fail(ErrorKind::ProbeProjectionFailed, e.what());
    }
    RankSnapshot ps = snapshot(mech, probe_q, opts.tol_factor);
    rep.J.probe_ranks.push_back(ps.J.rank);
    rep.Jp.probe_ranks.push_back(ps.Jp.rank);
    rep.Ja.probe_ranks.push_back(ps.Ja.rank);
    rep.JoN.probe_ranks.push_back(ps.JoN.rank);
    rep.min_gap = std::min(rep.min_gap, worst_gap(ps));
  }

  rep.cspace = rep.J.differs();
  rep.passive = rep.Jp.differs();
  rep.actuator = rep.Ja.differs();
  rep.input = rep.passive || rep.actuator;
  rep.output = rep.JoN.differs();
  rep.uncertain = rep.min_gap < opts.uncertain_gap;

  if (rep.input || rep.cspace) {
    int np = static_cast<int>(mech.passive_cols().size());
    if (np - center.Jp.rank > 0) rep.labels.push_back("RPM");
    if (center.J.rank > center.Jp.rank) rep.labels.push_back("II");
  }
  return rep;
}

std::string report_text(const SingularityReport& rep) {
  std::ostringstream os;
  auto flag = [](bool b) { return b ? "yes" : "no"; };
  os << "constraint-singular: " << flag(rep.cspace) << "\n"
     << "passive-singular:    " << flag(rep.passive) << "\n"
     << "actuator-singular:   " << flag(rep.actuator) << "\n"
     << "input-singular:      " << flag(rep.input) << "\n"
     << "output-singular:     " << flag(rep.output) << "\n"
     << "tangent dimension:   " << rep.delta_diff << "\n"
     << "uncertain:           " << flag(rep.uncertain) << " (worst gap " << rep.min_gap << ")\n";
  auto evidence = [&os](const char* name, const RankEvidence& e) {
    os << name << ": rank " << e.rank << ", probes [";
    for (size_t i = 0; i < e.probe_ranks.size(); ++i)
      os << (i ? " " : "") << e.probe_ranks[i];
    os << "], sigma [";
    for (int i = 0; i < e.sigma.size(); ++i) os << (i ? " " : "") << e.sigma(i);
    os << "]\n";
  };
  evidence("J   ", rep.J);
  evidence("Jp  ", rep.Jp);
  evidence("Ja  ", rep.Ja);
  evidence("JoN ", rep.JoN);
  if (!rep.labels.empty()) {
    os << "labels: ";
    for (size_t i = 0; i < rep.labels.size(); ++i) os << (i ? ", " : "") << rep.labels[i];
    os << "\n";
  }
  return os.str();
}

double flag_indicator(const JacobianBundle& b, SingularFlag flag) {
  auto rel = [](const RankInfo& ri) {
    if (ri.singular_values.size() == 0) return 1.0;
    double smax = ri.singular_values(0);
    return smax > 0.0 ? ri.singular_values(ri.singular_values.size() - 1) / smax : 0.0;
  };
  switch (flag) {
    case SingularFlag::CSpace:
      return rel(b.rank_J);
    case SingularFlag::Passive:
      return rel(b.rank_Jp);
    case SingularFlag::Actuator:
      return rel(b.rank_Ja);
    case SingularFlag::Input:
      return std::min(rel(b.rank_Jp), rel(b.rank_Ja));
    case SingularFlag::Output: {
      Mat N = null_basis(b.J);
      if (N.cols() == 0) return 1.0;
      return inv_cond(b.Jo * N);
    }
  }
  return 1.0;
}

namespace {

Vec midpoint_config(const Mechanism& mech, const Vec& a, const Vec& b, double t) {
  Vec mid(a.size());
  for (int k = 0; k < a.size(); ++k) {
    double d = mech.coord_is_angle(k) ? angle_diff(b(k), a(k)) : b(k) - a(k);
    mid(k) = a(k) + t * d;
  }
  return mid;
}

}  // namespace

std::vector<LocusPoint> scan_singular_locus(const Mechanism& mech, const Vec& seed,
                                            SingularFlag flag, const LocusOptions& opts) {
  AtlasOptions aopts;
  aopts.step = opts.step;
  aopts.budget = opts.budget;
  aopts.box_lo = opts.box_lo;
  aopts.box_hi = opts.box_hi;
  ModeAtlas atlas = sample_cspace(mech, {seed}, aopts);

  auto indicator_at = [&](const Vec& q) {
    EvalResult ev = mech.eval(q);
    return flag_indicator(make_bundle(mech, ev), flag);
  };
  bool jp_square = mech.n_residuals() == static_cast<int>(mech.passive_cols().size());
  bool use_det = jp_square && (flag == SingularFlag::Passive || flag == SingularFlag::Input);
  auto det_at = [&](const Vec& q) {
    EvalResult ev = mech.eval(q);
    JacobianBundle b = make_bundle(mech, ev);
    return b.Jp.determinant();
  };

  std::vector<LocusPoint> points;
  auto emit = [&](const Vec& q) {
    for (const LocusPoint& p : points)
      if (config_distance(mech, p.q, q) < opts.step / 2.0) return;
    points.push_back({q, indicator_at(q)});
  };

  for (auto [ai, bi] : atlas.edges) {
    Vec qa = atlas.samples[ai].q;
    Vec qb = atlas.samples[bi].q;
    if (use_det) {
      double fa = atlas.samples[ai].det_jp;
      double fb = atlas.samples[bi].det_jp;
      if (!std::isfinite(fa) || !std::isfinite(fb)) continue;
      if ((fa < 0) == (fb < 0)) continue;
      bool ok = true;
      while (config_distance(mech, qa, qb) > opts.sharpen_tol) {
        Vec qm;
        try {
          qm = project_to_variety(mech, midpoint_config(mech, qa, qb, 0.5)).q;
        } catch (const Error&) {
          ok = false;
          break;
        }
        double fm = det_at(qm);
        if (fm == 0.0) {
          qa = qb = qm;
          break;
        }
        if ((fm < 0) == (fa < 0)) {
          qa = qm;
          fa = fm;
        } else {
          qb = qm;
        }
      }
      if (ok) emit(qa);  // on-variety endpoint of the final bracket
    } else {
      double ia = flag_indicator(
          make_bundle(mech, mech.eval(qa)), flag);
      double ib = flag_indicator(make_bundle(mech, mech.eval(qb)), flag);
      if (std::min(ia, ib) > opts.dip_threshold) continue;
      // Golden-section dip search along the projected chord.
      const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
      double lo = 0.0, hi = 1.0;
      auto value = [&](double t) -> double {
        try {
          Vec qm = project_to_variety(mech, midpoint_config(mech, qa, qb, t)).q;
          return indicator_at(qm);
        } catch (const Error&) {
          return std::numeric_limits<double>::infinity();
        }
      };
      double c = hi - gr * (hi - lo), d = lo + gr * (hi - lo);
      double fc = value(c), fd = value(d);
      for (int it = 0; it < 40; ++it) {
        if (fc < fd) {
          hi = d;
          d = c;
          fd = fc;
          c = hi - gr * (hi - lo);
          fc = value(c);
        } else {
          lo = c;
          c = d;
          fc = fd;
          d = lo + gr * (hi - lo);
          fd = value(d);
        }
      }
      double tbest = 0.5 * (lo + hi);
      try {
        Vec qm = project_to_variety(mech, midpoint_config(mech, qa, qb, tbest)).q;
        if (indicator_at(qm) < 1e-7) emit(qm);
      } catch (const Error&) {
      }
    }
  }
  return points;
}

}  // namespace pkm
