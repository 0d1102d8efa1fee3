#pragma once

// u-segments with transported mass, the length-based subdivision of their
// images, Pesin-Sinai averaged pushforwards, empirical measures and an Ulam
// pushforward of histograms.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "phdyn/histogram.hpp"
#include "phdyn/parallel.hpp"
#include "phdyn/splitting.hpp"
#include "phdyn/torus.hpp"

namespace phdyn {

/// Polyline inside an unstable leaf. Each edge carries the mass of the arc it
/// represents, so pushing vertices forward transports mass exactly; densities
/// are derived as mass over length.
template <int D>
class USegment {
 public:
  USegment() = default;
  USegment(std::vector<TorusPoint<D>> vertices, std::vector<double> edge_mass)
      : v_(std::move(vertices)), m_(std::move(edge_mass)) {
    if (v_.size() < 2) throw InvalidArgument("a u-segment needs at least two vertices");
    if (m_.size() + 1 != v_.size()) throw InvalidArgument("edge mass count must be vertex count - 1");
  }

  /// Uniform unit-total density on the given vertices.
  static USegment with_uniform_density(std::vector<TorusPoint<D>> vertices) {
    std::vector<double> m(vertices.size() - 1);
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < vertices.size(); ++i) {
      m[i] = distance(vertices[i], vertices[i + 1]);
      total += m[i];
    }
    if (!(total > 0.0)) throw InvalidArgument("u-segment has zero length");
    for (double& x : m) x /= total;
    return USegment(std::move(vertices), std::move(m));
  }

  const std::vector<TorusPoint<D>>& vertices() const { return v_; }
  const std::vector<double>& edge_mass() const { return m_; }
  std::size_t edges() const { return m_.size(); }

  double edge_length(std::size_t e) const { return distance(v_[e], v_[e + 1]); }
  Vec<D> edge_vector(std::size_t e) const { return displacement(v_[e], v_[e + 1]); }
  TorusPoint<D> edge_midpoint(std::size_t e) const { return translate(v_[e], 0.5 * edge_vector(e)); }

  double length() const {
    double s = 0.0;
    for (std::size_t e = 0; e < edges(); ++e) s += edge_length(e);
    return s;
  }
  double mass() const { return std::accumulate(m_.begin(), m_.end(), 0.0); }

  /// Density (mass per length) on each edge.
  std::vector<double> edge_density() const {
    std::vector<double> d(edges());
    for (std::size_t e = 0; e < edges(); ++e) d[e] = m_[e] / edge_length(e);
    return d;
  }

  /// Per-vertex density: average of the adjacent edge densities.
  std::vector<double> weights() const {
    const auto d = edge_density();
    std::vector<double> w(v_.size());
    for (std::size_t i = 0; i < v_.size(); ++i) {
      if (i == 0)
        w[i] = d.front();
      else if (i + 1 == v_.size())
        w[i] = d.back();
      else
        w[i] = 0.5 * (d[i - 1] + d[i]);
    }
    return w;
  }

  /// max/min edge density.
  double distortion() const {
    const auto d = edge_density();
    const auto [lo, hi] = std::minmax_element(d.begin(), d.end());
    return *hi / *lo;
  }

  void scale_mass(double s) {
    for (double& x : m_) x *= s;
  }

 private:
  std::vector<TorusPoint<D>> v_;
  std::vector<double> m_;
};

struct SegmentOptions {
  double h_max = 0.01;       // longest allowed chord
  double max_angle = 0.1;    // largest allowed turn between consecutive chords (rad)
  int unstable_n = 30;       // convergence length for E^u estimates
};

/// Integrate the E^u direction field through x, symmetrically in both
/// directions, with midpoint steps of size h_max until the arc length
/// reaches target_length. The density is uniform.
template <int D>
USegment<D> grow_usegment(const System<D>& f, const TorusPoint<D>& x, double target_length,
                          const SegmentOptions& opt = {}) {
  if (!(target_length > 0.0)) throw InvalidArgument("target length must be positive");
  if (f.dims().u != 1) throw InvalidArgument("u-segments need a one-dimensional E^u");
  auto dir = [&](const TorusPoint<D>& p, const Vec<D>& prev) {
    Vec<D> d = estimate_unstable<D>(f, p, opt.unstable_n).col(0);
    if (d.dot(prev) < 0.0) d = -d;
    return d;
  };
  const Vec<D> d0 = estimate_unstable<D>(f, x, opt.unstable_n).col(0);
  const double half = 0.5 * target_length;
  auto walk = [&](Vec<D> heading) {
    std::vector<TorusPoint<D>> pts;
    TorusPoint<D> p = x;
    double s = 0.0;
    while (s < half - 1e-15) {
      const double h = std::min(opt.h_max, half - s);
      const Vec<D> k1 = dir(p, heading);
      const TorusPoint<D> mid = translate(p, 0.5 * h * k1);
      const Vec<D> k2 = dir(mid, k1);
      p = translate(p, h * k2);
      pts.push_back(p);
      heading = k2;
      s += h;
    }
    return pts;
  };
  auto fwd = walk(d0);
  auto bwd = walk(-d0);
  std::vector<TorusPoint<D>> verts;
  verts.reserve(fwd.size() + bwd.size() + 1);
  for (auto it = bwd.rbegin(); it != bwd.rend(); ++it) verts.push_back(*it);
  verts.push_back(x);
  for (const auto& p : fwd) verts.push_back(p);
  return USegment<D>::with_uniform_density(std::move(verts));
}

/// Largest angle (rad) between a chord and the estimated E^u at its start vertex.
template <int D>
double check_tangency(const System<D>& f, const USegment<D>& seg, int n = 30) {
  double worst = 0.0;
  for (std::size_t e = 0; e < seg.edges(); ++e) {
    const Vec<D> u = estimate_unstable<D>(f, seg.vertices()[e], n).col(0);
    const Vec<D> c = seg.edge_vector(e).normalized();
    const double cosang = std::min(1.0, std::abs(u.dot(c)));
    worst = std::max(worst, std::acos(cosang));
  }
  return worst;
}

struct SubdivideResult {
  double image_length = 0.0;
  double source_length = 0.0;
  bool low_expansion = false;   // image shorter than 3 x source
  double v_length = 0.0;        // total length of pieces meeting V (I_V)
};

namespace detail {

/// Entry of the refined image polyline: preimage point, image point, and the
/// mass of the edge that starts here (unused on the last entry).
template <int D>
struct Node {
  TorusPoint<D> pre;
  TorusPoint<D> img;
  double mass;
};

template <int D>
double chord_angle(const Vec<D>& a, const Vec<D>& b) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::acos(std::clamp(a.dot(b) / (na * nb), -1.0, 1.0));
}

}  // namespace detail

/// Push gamma forward, refine the image polyline (chords up to h_max, turns
/// up to max_angle) and cut it into pieces with lengths in [L, 2L]. Without V
/// the pieces have equal length (k = ceil(length / 2L)). With V, cuts are moved
/// out of the passages through V when the length window allows it, and the
/// summed length of the pieces meeting V is reported. Mass is split in
/// proportion to the preimage parameter, so the total is conserved.
template <int D>
std::vector<USegment<D>> iterate_subdivide(const System<D>& f, const USegment<D>& gamma, double L,
                                           SubdivideResult* info = nullptr, const BoxDomain<D>* V = nullptr,
                                           const SegmentOptions& opt = {}) {
  if (!(L > 0.0)) throw InvalidArgument("L must be positive");
  const double src_len = gamma.length();
  if (src_len < L * (1.0 - 1e-12)) throw InvalidArgument("segment shorter than L");

  const auto& vs = gamma.vertices();
  const auto& ms = gamma.edge_mass();
  std::vector<detail::Node<D>> nodes;
  nodes.reserve(vs.size() * 4);
  for (std::size_t i = 0; i < vs.size(); ++i)
    nodes.push_back({vs[i], f.apply(vs[i]), i + 1 < vs.size() ? ms[i] : 0.0});

  auto split_edge = [&](const detail::Node<D>& a, const detail::Node<D>& b, double t) {
    const TorusPoint<D> pre = translate(a.pre, t * displacement(a.pre, b.pre));
    return detail::Node<D>{pre, f.apply(pre), 0.0};
  };

  for (int pass = 0; pass < 40; ++pass) {
    std::vector<char> mark(nodes.size() - 1, 0);
    bool any = false;
    for (std::size_t e = 0; e + 1 < nodes.size(); ++e) {
      const Vec<D> c = displacement(nodes[e].img, nodes[e + 1].img);
      if (c.norm() > opt.h_max) mark[e] = 1;
      if (e + 2 < nodes.size()) {
        const Vec<D> c2 = displacement(nodes[e + 1].img, nodes[e + 2].img);
        if (detail::chord_angle<D>(c, c2) > opt.max_angle) mark[e] = mark[e + 1] = 1;
      }
    }
    for (char m : mark) any = any || m;
    if (!any) break;
    std::vector<detail::Node<D>> next;
    next.reserve(nodes.size() * 2);
    for (std::size_t e = 0; e + 1 < nodes.size(); ++e) {
      if (mark[e]) {
        auto a = nodes[e];
        auto mid = split_edge(nodes[e], nodes[e + 1], 0.5);
        a.mass *= 0.5;
        mid.mass = a.mass;
        next.push_back(a);
        next.push_back(mid);
      } else {
        next.push_back(nodes[e]);
      }
    }
    next.push_back(nodes.back());
    nodes.swap(next);
  }

  std::vector<double> clen(nodes.size() - 1);
  double total = 0.0;
  for (std::size_t e = 0; e + 1 < nodes.size(); ++e) {
    clen[e] = distance(nodes[e].img, nodes[e + 1].img);
    total += clen[e];
  }

  // Arc-length intervals of edges touching V; cuts avoid them when possible so
  // that a passage through V stays inside a single piece.
  std::vector<std::pair<double, double>> blocked;
  if (V) {
    double pos = 0.0;
    for (std::size_t e = 0; e + 1 < nodes.size(); ++e) {
      if (V->contains(nodes[e].img) || V->contains(nodes[e + 1].img)) {
        if (!blocked.empty() && blocked.back().second >= pos)
          blocked.back().second = pos + clen[e];
        else
          blocked.emplace_back(pos, pos + clen[e]);
      }
      pos += clen[e];
    }
  }
  // Left to right: aim for equal pieces of the remainder, then shift the cut
  // out of a blocked interval while keeping every piece in [L, 2L].
  std::vector<double> cuts;
  for (double s0 = 0.0;;) {
    const double rem = total - s0;
    if (rem <= 2.0 * L * (1.0 + 1e-12)) break;
    const double kr = std::ceil(rem / (2.0 * L) - 1e-12);
    double c = s0 + rem / kr;
    const double lo = s0 + L, hi = std::min(s0 + 2.0 * L, total - L);
    for (const auto& [a, b] : blocked) {
      if (c <= a || c >= b) continue;
      double best = c, dist = std::numeric_limits<double>::infinity();
      for (double cand : {a, b})
        if (cand >= lo && cand <= hi && std::abs(cand - c) < dist) {
          best = cand;
          dist = std::abs(cand - c);
        }
      c = best;
      break;
    }
    cuts.push_back(c);
    s0 = c;
  }
  const int k = static_cast<int>(cuts.size()) + 1;
  std::vector<USegment<D>> out;
  out.reserve(static_cast<std::size_t>(k));
  std::vector<TorusPoint<D>> cur_v{nodes.front().img};
  std::vector<double> cur_m;
  double acc = 0.0;
  int done = 0;
  double v_len = 0.0;
  auto close_piece = [&] {
    USegment<D> seg(std::move(cur_v), std::move(cur_m));
    if (V) {
      bool meets = false;
      for (const auto& p : seg.vertices()) meets = meets || V->contains(p);
      if (meets) v_len += seg.length();
    }
    out.push_back(std::move(seg));
    cur_v.clear();
    cur_m.clear();
  };
  // Boundaries closer than `snap` to a vertex are moved onto it, which avoids
  // near-zero edges whose lengths carry large relative rounding errors.
  const double snap = 1e-9;
  for (std::size_t e = 0; e + 1 < nodes.size(); ++e) {
    detail::Node<D> a = nodes[e];
    double mass = a.mass;
    double len = clen[e];
    while (done < k - 1) {
      const double off = cuts[static_cast<std::size_t>(done)] - acc;
      if (off >= len - snap) break;
      if (off <= snap) {
        if (!cur_m.empty()) {
          close_piece();
          cur_v.push_back(a.img);
        }
        ++done;
        continue;
      }
      const double t = off / len;
      const auto cut = split_edge(a, nodes[e + 1], t);
      const double m1 = mass * t;
      cur_v.push_back(cut.img);
      cur_m.push_back(m1);
      close_piece();
      cur_v.push_back(cut.img);
      const double part = distance(a.img, cut.img);
      acc += part;
      len = distance(cut.img, nodes[e + 1].img);
      mass -= m1;
      a = cut;
      ++done;
    }
    cur_v.push_back(nodes[e + 1].img);
    cur_m.push_back(mass);
    acc += len;
    if (done < k - 1 && cuts[static_cast<std::size_t>(done)] - acc <= snap && e + 2 < nodes.size()) {
      close_piece();
      cur_v.push_back(nodes[e + 1].img);
      ++done;
    }
  }
  close_piece();

  if (info) {
    info->source_length = src_len;
    info->image_length = 0.0;
    for (const auto& s : out) info->image_length += s.length();
    info->low_expansion = info->image_length < 3.0 * src_len;
    info->v_length = v_len;
  }
  return out;
}

/// Distortion bound enforced along segment lineages.
inline constexpr double kDistortionBound = 50.0;

struct PesinSinaiOptions {
  int budget = 4000;           // pieces kept per iterate after resampling
  std::uint64_t seed = 1;
  double L = 0.4;
  SegmentOptions segment{};
  bool with_shifted = true;    // also accumulate j = 1..n (exact pushforward)
};

template <int D>
struct PesinSinaiResult {
  HistogramMeasure<D> mu;       // (1/n) sum_{j<n} f^j_* Leb_D
  HistogramMeasure<D> shifted;  // (1/n) sum_{1<=j<=n} f^j_* Leb_D = f_* mu
  double max_distortion = 1.0;
  int low_expansion_events = 0;
  int resample_events = 0;
};

namespace detail {

template <int D>
void deposit_segment(HistogramMeasure<D>& h, const USegment<D>& s, double scale) {
  for (std::size_t e = 0; e < s.edges(); ++e) h.deposit(s.edge_midpoint(e), s.edge_mass()[e] * scale);
}

/// Systematic resampling of pieces to `budget` survivors, each carrying an
/// equal share of the total mass (piece-internal density profiles are kept).
template <int D>
std::vector<USegment<D>> resample(const std::vector<USegment<D>>& pieces, int budget, Rng& rng) {
  std::vector<double> w(pieces.size());
  double total = 0.0;
  for (std::size_t i = 0; i < pieces.size(); ++i) total += (w[i] = pieces[i].mass());
  std::vector<USegment<D>> out;
  out.reserve(static_cast<std::size_t>(budget));
  const double step = total / budget;
  double u = rng.uniform() * step;
  double cum = 0.0;
  std::size_t i = 0;
  for (int b = 0; b < budget; ++b) {
    const double target = u + b * step;
    while (i + 1 < pieces.size() && cum + w[i] <= target) cum += w[i++];
    USegment<D> s = pieces[i];
    s.scale_mass(step / w[i]);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace detail

/// mu_n = (1/n) sum_{j<n} f^j_*(Leb_D / |D|) on a grid^D histogram. The
/// iterated disk is represented by a population of [L,2L] pieces; when the
/// population exceeds the budget it is resampled systematically with the
/// given seed.
template <int D>
PesinSinaiResult<D> pesin_sinai(const System<D>& f, const USegment<D>& disk, int n, int grid,
                                const PesinSinaiOptions& opt = {}) {
  if (n < 1) throw InvalidArgument("n must be at least 1");
  if (grid < 8) throw InvalidArgument("grid too coarse (fewer than 8 cells per axis)");
  const DomainTag tag = f.interval_first() ? DomainTag::interval_torus : DomainTag::torus;
  PesinSinaiResult<D> r;
  r.mu = HistogramMeasure<D>::cube(grid, tag);
  r.shifted = HistogramMeasure<D>::cube(grid, tag);
  Rng rng(opt.seed);

  USegment<D> d0 = disk;
  d0.scale_mass(1.0 / d0.mass());
  std::vector<USegment<D>> pop{d0};
  const double w = 1.0 / n;
  const int last = opt.with_shifted ? n : n - 1;
  for (int j = 0; j <= last; ++j) {
    for (const auto& s : pop) {
      r.max_distortion = std::max(r.max_distortion, s.distortion());
      if (j < n) detail::deposit_segment(r.mu, s, w);
      if (j >= 1) detail::deposit_segment(r.shifted, s, w);
    }
    if (r.max_distortion > kDistortionBound) {
      std::ostringstream os;
      os << "density distortion " << r.max_distortion << " exceeds bound " << kDistortionBound << " at iterate " << j;
      throw NumericalError(os.str(), r.max_distortion);
    }
    if (j == last) break;
    std::vector<USegment<D>> next;
    for (const auto& s : pop) {
      if (s.length() < opt.L) {
        // Only the initial disk can be shorter than L; push it without cutting.
        SubdivideResult info;
        auto img = iterate_subdivide<D>(f, s, s.length(), &info, nullptr, opt.segment);
        if (info.low_expansion) ++r.low_expansion_events;
        for (auto& p : img) next.push_back(std::move(p));
        continue;
      }
      SubdivideResult info;
      auto img = iterate_subdivide<D>(f, s, opt.L, &info, nullptr, opt.segment);
      if (info.low_expansion) ++r.low_expansion_events;
      for (auto& p : img) next.push_back(std::move(p));
    }
    if (static_cast<int>(next.size()) > opt.budget) {
      next = detail::resample<D>(next, opt.budget, rng);
      ++r.resample_events;
    }
    pop.swap(next);
  }
  return r;
}

/// nu_{n,x} = (1/n) sum_{j<n} delta_{f^j x}.
template <int D>
HistogramMeasure<D> empirical_measure(const System<D>& f, const TorusPoint<D>& x, long long n, int grid) {
  if (n < 1) throw InvalidArgument("n must be at least 1");
  const DomainTag tag = f.interval_first() ? DomainTag::interval_torus : DomainTag::torus;
  auto h = HistogramMeasure<D>::cube(grid, tag);
  std::vector<long long> counts(h.cells(), 0);
  TorusPoint<D> p = x;
  for (long long j = 0; j < n; ++j) {
    ++counts[h.cell_index(p)];
    if (j + 1 < n) p = f.apply(p);
  }
  for (std::size_t i = 0; i < counts.size(); ++i)
    h.masses()[i] = static_cast<double>(counts[i]) / static_cast<double>(n);
  return h;
}

/// Ulam pushforward: each cell's mass is spread evenly over sub^D interior
/// sample points and moved by f.
template <int D>
HistogramMeasure<D> pushforward(const System<D>& f, const HistogramMeasure<D>& h, int sub = 4) {
  if (sub < 1) throw InvalidArgument("sub must be at least 1");
  HistogramMeasure<D> out(h.resolution(), h.tag());
  std::size_t per = 1;
  for (int i = 0; i < D; ++i) per *= static_cast<std::size_t>(sub);
  for (std::size_t c = 0; c < h.cells(); ++c) {
    if (h[c] == 0.0) continue;
    const auto cc = h.cell_coords(c);
    const double m = h[c] / static_cast<double>(per);
    for (std::size_t s = 0; s < per; ++s) {
      Vec<D> v;
      std::size_t rem = s;
      for (int i = D - 1; i >= 0; --i) {
        const double off = (static_cast<double>(rem % static_cast<std::size_t>(sub)) + 0.5) / sub;
        rem /= static_cast<std::size_t>(sub);
        v[i] = (cc[static_cast<std::size_t>(i)] + off) / h.resolution()[static_cast<std::size_t>(i)];
      }
      out.deposit(f.apply(TorusPoint<D>::wrap(v, h.tag() == DomainTag::interval_torus)), m);
    }
  }
  return out;
}

}  // namespace phdyn
