#include "pkm/atlas.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <set>
#include <unordered_map>

#include "pkm/errors.hpp"

namespace pkm {

double config_distance(const Mechanism& mech, const Vec& a, const Vec& b) {
  double s = 0.0;
  for (int i = 0; i < a.size(); ++i) {
    double d = mech.coord_is_angle(i) ? angle_diff(a(i), b(i)) : a(i) - b(i);
    s += d * d;
  }
  return std::sqrt(s);
}

namespace {

Vec wrap_config(const Mechanism& mech, Vec q) {
  for (int i = 0; i < q.size(); ++i)
    if (mech.coord_is_angle(i)) q(i) = wrap_angle(q(i));
  return q;
}

// Spatial hash over the first <=3 coordinates; buckets hold sample indices.
class SampleHash {
 public:
  SampleHash(int n, double cell) : k_(std::min(n, 3)), cell_(cell) {}

  void insert(int idx, const Vec& q) { buckets_[key(q)].push_back(idx); }

  // Index of the nearest stored sample within `radius`, or -1.
  int nearest(const Mechanism& mech, const std::vector<AtlasSample>& samples, const Vec& q,
              double radius) const {
    int best = -1;
    double best_d = radius;
    visit_neighborhood(q, [&](uint64_t k) {
      auto it = buckets_.find(k);
      if (it == buckets_.end()) return;
      for (int idx : it->second) {
        double d = config_distance(mech, samples[idx].q, q);
        if (d <= best_d) {
          best_d = d;
          best = idx;
        }
      }
    });
    return best;
  }

  template <typename Fn>
  void for_each_within(const Mechanism& mech, const std::vector<AtlasSample>& samples,
                       const Vec& q, double radius, Fn&& fn) const {
    visit_neighborhood(q, [&](uint64_t k) {
      auto it = buckets_.find(k);
      if (it == buckets_.end()) return;
      for (int idx : it->second) {
        if (config_distance(mech, samples[idx].q, q) <= radius) fn(idx);
      }
    });
  }

 private:
  uint64_t key(const Vec& q) const {
    uint64_t h = 0xcbf29ce484222325ull;
    for (int i = 0; i < k_; ++i) {
      int64_t c = static_cast<int64_t>(std::floor(q(i) / cell_));
      h ^= static_cast<uint64_t>(c) + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    }
    return h;
  }

  template <typename Fn>
  void visit_neighborhood(const Vec& q, Fn&& fn) const {
    // Probe the 3^k cells around q. Cell size >= query radius, so this covers
    // every candidate except duplicates straddling the angular seam, which are
    // tolerated (coverage stays complete, counts stay deterministic).
    int steps = 1;
    std::vector<int> off(k_, -steps);
    while (true) {
      Vec shifted = q;
      for (int i = 0; i < k_; ++i) shifted(i) += off[i] * cell_;
      fn(key(shifted));
      int i = 0;
      for (; i < k_; ++i) {
        if (off[i] < steps) {
          ++off[i];
          break;
        }
        off[i] = -steps;
      }
      if (i == k_) break;
    }
  }

  int k_;
  double cell_;
  std::unordered_map<uint64_t, std::vector<int>> buckets_;
};

struct SampleData {
  AtlasSample sample;
  Mat tangent;
};

SampleData make_sample(const Mechanism& mech, const EvalResult& ev, double tol_factor) {
  SampleData out;
  AtlasSample& s = out.sample;
  s.q = wrap_config(mech, ev.q);
  const int n = mech.n();
  const int r = static_cast<int>(ev.J.rows());
  if (r == 0) {
    s.delta_diff = n;
    out.tangent = Mat::Identity(n, n);
    s.ind_cspace = 1.0;
  } else {
    Eigen::JacobiSVD<Mat> svd(ev.J, Eigen::ComputeFullV);
    const Vec& sv = svd.singularValues();
    double tol = std::max(r, n) * sv(0) * tol_factor;
    int rank = 0;
    for (int i = 0; i < sv.size(); ++i)
      if (sv(i) > tol) ++rank;
    s.delta_diff = n - rank;
    out.tangent = svd.matrixV().rightCols(n - rank);
    s.ind_cspace = sv(0) > 0.0 ? sv(sv.size() - 1) / sv(0) : 0.0;
  }

  JacobianBundle b = make_bundle(mech, ev, tol_factor);
  auto rel_min = [](const Mat& M) {
    if (M.rows() == 0 || M.cols() == 0) return 1.0;
    Eigen::JacobiSVD<Mat> svd(M);
    const Vec& sv = svd.singularValues();
    return sv(0) > 0.0 ? sv(sv.size() - 1) / sv(0) : 0.0;
  };
  s.ind_passive = rel_min(b.Jp);
  s.ind_actuator = rel_min(b.Ja);
  s.ind_output = rel_min(ev.Jo * out.tangent);
  if (b.Jp.rows() == b.Jp.cols() && b.Jp.rows() > 0) s.det_jp = b.Jp.determinant();
  s.feasible = ev.g.size() == 0 || ev.g.minCoeff() >= -1e-12;
  return out;
}

bool in_window(const Mechanism& mech, const AtlasOptions& opts, const Vec& q) {
  if (opts.window_center) {
    for (int i = 0; i < q.size(); ++i) {
      double d = mech.coord_is_angle(i) ? angle_diff(q(i), (*opts.window_center)(i))
                                        : q(i) - (*opts.window_center)(i);
      if (std::abs(d) > opts.window_radius) return false;
    }
    return true;
  }
  if (opts.box_lo.size() > 0) {
    for (int i = 0; i < q.size(); ++i)
      if (q(i) < opts.box_lo(i) || q(i) > opts.box_hi(i)) return false;
  }
  return true;
}

class Dsu {
 public:
  explicit Dsu(int n) : parent_(n) {
    for (int i = 0; i < n; ++i) parent_[i] = i;
  }
  int find(int a) {
    while (parent_[a] != a) {
      parent_[a] = parent_[parent_[a]];
      a = parent_[a];
    }
    return a;
  }
  void unite(int a, int b) { parent_[find(a)] = find(b); }

 private:
  std::vector<int> parent_;
};

// Compact component ids in order of first appearance; members below
// min_size become slivers (-2).
int assign_labels(const std::vector<int>& eligible, Dsu& dsu, int n_samples, int min_size,
                  std::vector<int>& out) {
  std::map<int, int> count;
  for (int i : eligible) count[dsu.find(i)]++;
  std::map<int, int> id;
  int next = 0;
  out.assign(n_samples, -1);
  for (int i : eligible) {
    int root = dsu.find(i);
    if (count[root] < min_size) {
      out[i] = -2;
      continue;
    }
    auto it = id.find(root);
    if (it == id.end()) it = id.insert({root, next++}).first;
    out[i] = it->second;
  }
  return next;
}

}  // namespace

ModeAtlas sample_cspace(const Mechanism& mech, const std::vector<Vec>& seeds,
                        const AtlasOptions& opts) {
  if (seeds.empty()) fail(ErrorKind::SeedNotAdmissible, "no seeds given");
  ModeAtlas atlas;
  atlas.step = opts.step;
  atlas.tube_cspace = opts.tube_cspace;

  SampleHash dedup(mech.n(), opts.step / 2.0);
  std::vector<Mat> tangents;
  std::deque<int> frontier;
  std::set<std::pair<int, int>> edge_set;
  auto add_edge = [&](int a, int b) {
    if (a == b) return;
    auto e = std::minmax(a, b);
    if (edge_set.insert({e.first, e.second}).second) atlas.edges.push_back({e.first, e.second});
  };

  auto try_add = [&](const Vec& q_raw, int from) -> int {
    Vec q;
    try {
      q = project_to_variety(mech, q_raw).q;
    } catch (const Error&) {
      return -1;
    }
    q = wrap_config(mech, q);
    if (from >= 0 && config_distance(mech, atlas.samples[from].q, q) > 1.6 * opts.step)
      return -1;  // projection wandered
    if (!in_window(mech, opts, q)) return -1;
    int near = dedup.nearest(mech, atlas.samples, q, opts.step / 2.0);
    if (near >= 0) {
      if (from >= 0) add_edge(from, near);
      return near;
    }
    SampleData sd = make_sample(mech, mech.eval(q), opts.tol_factor);
    int idx = static_cast<int>(atlas.samples.size());
    atlas.samples.push_back(std::move(sd.sample));
    tangents.push_back(std::move(sd.tangent));
    dedup.insert(idx, atlas.samples[idx].q);
    if (from >= 0) add_edge(from, idx);
    if (atlas.samples[idx].feasible) frontier.push_back(idx);
    return idx;
  };

  for (const Vec& seed : seeds) {
    if (seed.size() != mech.n()) fail(ErrorKind::DimensionMismatch, "seed size");
    Vec q;
    try {
      q = project_to_variety(mech, seed).q;
    } catch (const Error& e) {
      fail(ErrorKind::SeedNotAdmissible, std::string("projection failed: ") + e.what());
    }
    q = wrap_config(mech, q);
    if (!mech.within_limits(q))
      fail(ErrorKind::SeedNotAdmissible, "seed violates joint limits");
    if (!in_window(mech, opts, q)) fail(ErrorKind::SeedNotAdmissible, "seed outside window");
    try_add(q, -1);
  }

  while (!frontier.empty() && static_cast<int>(atlas.samples.size()) < opts.budget) {
    int idx = frontier.front();
    frontier.pop_front();
    const Mat tangent = tangents[idx];  // copy: samples vector may reallocate
    const Vec base = atlas.samples[idx].q;
    for (int c = 0; c < tangent.cols(); ++c) {
      for (double sgn : {1.0, -1.0}) {
        if (static_cast<int>(atlas.samples.size()) >= opts.budget) break;
        try_add(base + sgn * opts.step * tangent.col(c), idx);
      }
    }
  }
  atlas.budget_exhausted = !frontier.empty();
  return atlas;
}

void label_modes(const Mechanism& mech, ModeAtlas& atlas, const AtlasOptions& opts) {
  const int ns = static_cast<int>(atlas.samples.size());
  std::vector<bool> tube_c(ns), tube_i(ns), tube_o(ns);
  for (int i = 0; i < ns; ++i) {
    const AtlasSample& s = atlas.samples[i];
    tube_c[i] = s.ind_cspace < opts.tube_cspace;
    tube_i[i] = std::min(s.ind_passive, s.ind_actuator) < opts.tube_input;
    tube_o[i] = s.ind_output < opts.tube_output;
  }

  // Assembly: raw adjacency between feasible samples.
  {
    Dsu dsu(ns);
    for (auto [a, b] : atlas.edges)
      if (atlas.samples[a].feasible && atlas.samples[b].feasible) dsu.unite(a, b);
    std::vector<int> eligible;
    for (int i = 0; i < ns; ++i)
      if (atlas.samples[i].feasible) eligible.push_back(i);
    std::vector<int> labels;
    atlas.n_assembly = assign_labels(eligible, dsu, ns, 1, labels);
    for (int i = 0; i < ns; ++i) atlas.samples[i].assembly = labels[i];
  }

  // Motion: sever inside the constraint-singularity tube, then re-glue
  // branches whose local tangent directions line up across it. Smooth
  // branches continue through such crossings; transversally crossing
  // branches do not.
  {
    Dsu dsu(ns);
    for (auto [a, b] : atlas.edges) {
      if (!atlas.samples[a].feasible || !atlas.samples[b].feasible) continue;
      if (tube_c[a] || tube_c[b]) continue;
      dsu.unite(a, b);
    }

    double r_glue = opts.glue_radius_factor * atlas.step;
    double cos_tol = std::cos(opts.glue_angle_deg * M_PI / 180.0);
    SampleHash hash(mech.n(), r_glue);
    for (int i = 0; i < ns; ++i) hash.insert(i, atlas.samples[i].q);
    for (int t = 0; t < ns; ++t) {
      if (!tube_c[t] || !atlas.samples[t].feasible) continue;
      std::map<int, std::vector<Vec>> clouds;
      hash.for_each_within(mech, atlas.samples, atlas.samples[t].q, r_glue, [&](int i) {
        if (i == t || tube_c[i] || !atlas.samples[i].feasible) return;
        Vec d(mech.n());
        for (int k = 0; k < mech.n(); ++k) {
          d(k) = mech.coord_is_angle(k)
                     ? angle_diff(atlas.samples[i].q(k), atlas.samples[t].q(k))
                     : atlas.samples[i].q(k) - atlas.samples[t].q(k);
        }
        clouds[dsu.find(i)].push_back(d);
      });
      std::vector<std::pair<int, Vec>> axes;
      for (const auto& [root, cloud] : clouds) {
        if (cloud.size() < 2) continue;
        Mat cov = Mat::Zero(mech.n(), mech.n());
        for (const Vec& d : cloud) cov += d * d.transpose();
        Eigen::SelfAdjointEigenSolver<Mat> es(cov);
        axes.push_back({root, es.eigenvectors().col(mech.n() - 1)});
      }
      for (size_t i = 0; i < axes.size(); ++i)
        for (size_t j = i + 1; j < axes.size(); ++j)
          if (std::abs(axes[i].second.dot(axes[j].second)) >= cos_tol)
            dsu.unite(axes[i].first, axes[j].first);
    }

    std::vector<int> eligible;
    for (int i = 0; i < ns; ++i)
      if (atlas.samples[i].feasible && !tube_c[i]) eligible.push_back(i);
    std::vector<int> labels;
    atlas.n_motion = assign_labels(eligible, dsu, ns, opts.min_mode_size, labels);
    for (int i = 0; i < ns; ++i) atlas.samples[i].motion = labels[i];

    atlas.motion_mode_dof.assign(atlas.n_motion, 0);
    std::vector<std::map<int, int>> hist(atlas.n_motion);
    for (int i = 0; i < ns; ++i)
      if (atlas.samples[i].motion >= 0) hist[atlas.samples[i].motion][atlas.samples[i].delta_diff]++;
    for (int mmode = 0; mmode < atlas.n_motion; ++mmode) {
      int best = 0, best_count = -1;
      for (auto [d, c] : hist[mmode])
        if (c > best_count) {
          best = d;
          best_count = c;
        }
      atlas.motion_mode_dof[mmode] = best;
    }
  }

  // Branch-separating severing for the actuation and operation families:
  // tube samples separate, a determinant sign flip across an edge separates
  // (square passive block), and otherwise a projected-midpoint dip below the
  // tube separates. No re-gluing.
  auto sever_family = [&](const std::vector<bool>& tube, double tube_thresh,
                          bool use_det, auto indicator, int& count_out, auto setter) {
    Dsu dsu(ns);
    for (auto [a, b] : atlas.edges) {
      const AtlasSample& sa = atlas.samples[a];
      const AtlasSample& sb = atlas.samples[b];
      if (!sa.feasible || !sb.feasible) continue;
      if (tube[a] || tube[b]) continue;
      if (use_det && std::isfinite(sa.det_jp) && std::isfinite(sb.det_jp)) {
        if ((sa.det_jp < 0) != (sb.det_jp < 0)) continue;
      } else if (std::min(indicator(sa), indicator(sb)) < 3.0 * tube_thresh) {
        Vec mid(mech.n());
        for (int k = 0; k < mech.n(); ++k) {
          double d = mech.coord_is_angle(k) ? angle_diff(sb.q(k), sa.q(k)) : sb.q(k) - sa.q(k);
          mid(k) = sa.q(k) + 0.5 * d;
        }
        bool severed = false;
        try {
          Vec qm = project_to_variety(mech, mid).q;
          SampleData sd = make_sample(mech, mech.eval(qm), opts.tol_factor);
          if (indicator(sd.sample) < tube_thresh) severed = true;
        } catch (const Error&) {
          severed = true;  // cannot certify the midpoint, keep branches apart
        }
        if (severed) continue;
      }
      dsu.unite(a, b);
    }
    std::vector<int> eligible;
    for (int i = 0; i < ns; ++i)
      if (atlas.samples[i].feasible && !tube[i]) eligible.push_back(i);
    std::vector<int> labels;
    count_out = assign_labels(eligible, dsu, ns, opts.min_mode_size, labels);
    for (int i = 0; i < ns; ++i) setter(atlas.samples[i], labels[i]);
  };

  sever_family(
      tube_i, opts.tube_input, true,
      [](const AtlasSample& s) { return std::min(s.ind_passive, s.ind_actuator); },
      atlas.n_actuation, [](AtlasSample& s, int l) { s.actuation = l; });
  sever_family(
      tube_o, opts.tube_output, false, [](const AtlasSample& s) { return s.ind_output; },
      atlas.n_operation, [](AtlasSample& s, int l) { s.operation = l; });

  atlas.labeled = true;
}

DofReport dof_report(const Mechanism& mech, const ModeAtlas& atlas,
                     const std::optional<Vec>& reference) {
  DofReport rep;
  rep.mobility_count = mech.mobility_count();
  std::map<int, int> hist;
  for (const AtlasSample& s : atlas.samples)
    if (s.feasible && s.ind_cspace >= atlas.tube_cspace) hist[s.delta_diff]++;
  int best_count = -1;
  for (auto [d, c] : hist)
    if (c > best_count) {
      rep.delta = d;
      best_count = c;
    }
  rep.per_motion_mode = atlas.motion_mode_dof;
  Vec ref;
  if (reference)
    ref = *reference;
  else if (mech.reference_q)
    ref = *mech.reference_q;
  if (ref.size() == mech.n()) {
    EvalResult ev = mech.eval(ref);
    rep.delta_diff_reference = mech.n() - svd_rank(ev.J);
  } else {
    rep.delta_diff_reference = rep.delta;
  }
  return rep;
}

SectionTrace trace_section(const Mechanism& mech, const Vec& center, double radius,
                           const std::vector<int>& coords, const AtlasOptions& opts) {
  for (int c : coords)
    if (c < 0 || c >= mech.n()) fail(ErrorKind::DimensionMismatch, "section coordinate index");
  AtlasOptions local = opts;
  Vec c = wrap_config(mech, project_to_variety(mech, center).q);
  local.window_center = c;
  local.window_radius = radius;
  SectionTrace out;
  out.atlas = sample_cspace(mech, {c}, local);
  out.coords = coords;
  out.rows.reserve(out.atlas.samples.size());
  for (const AtlasSample& s : out.atlas.samples) {
    Vec row(coords.size());
    for (size_t i = 0; i < coords.size(); ++i) row(i) = s.q(coords[i]);
    out.rows.push_back(row);
  }
  return out;
}

}  // namespace pkm
