#pragma once

// Grid-based detection of physical measures: Birkhoff vectors of a fixed set
// of observables, deterministic single-linkage clustering, openness probes
// and count scans over families of systems.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "phdyn/parallel.hpp"
#include "phdyn/systems.hpp"
#include "phdyn/torus.hpp"

namespace phdyn {

inline constexpr double kConvergenceEps = 0.01;

/// Named observables with values in [-1, 1]. The sin/cos characters of every
/// coordinate are evaluated on a fast path; additional smooth bumps in x
/// cover block ranges of glued maps.
template <int D>
class ObservableSet {
 public:
  struct Bump {
    double a, b;  // support [a, b] of a smoothed indicator
  };

  /// sin(2 pi x_i), cos(2 pi x_i) for each coordinate.
  static ObservableSet characters() { return ObservableSet(); }

  /// Characters plus one smoothed indicator per block interval.
  static ObservableSet with_blocks(const std::vector<std::pair<double, double>>& ranges) {
    ObservableSet s;
    for (const auto& [a, b] : ranges) {
      if (!(b > a)) throw InvalidArgument("empty block range");
      s.bumps_.push_back({a, b});
    }
    return s;
  }

  std::size_t size() const { return 2 * D + bumps_.size(); }

  std::vector<std::string> names() const {
    std::vector<std::string> n;
    for (int i = 0; i < D; ++i) {
      n.push_back("sin" + std::to_string(i));
      n.push_back("cos" + std::to_string(i));
    }
    for (std::size_t j = 0; j < bumps_.size(); ++j) n.push_back("block" + std::to_string(j));
    return n;
  }

  /// Evaluate every observable at p into out[0..size()).
  void eval(const TorusPoint<D>& p, double* out) const {
    for (int i = 0; i < D; ++i) {
      const double a = kTwoPi * p[i];
      out[2 * i] = std::sin(a);
      out[2 * i + 1] = std::cos(a);
    }
    for (std::size_t j = 0; j < bumps_.size(); ++j) out[2 * D + j] = bump_value(bumps_[j], p[0]);
  }

  static double bump_value(const Bump& b, double x) {
    const double w = 0.25 * (b.b - b.a);
    if (x <= b.a || x >= b.b) return 0.0;
    if (x < b.a + w) return smoothstep5((x - b.a) / w);
    if (x > b.b - w) return smoothstep5((b.b - x) / w);
    return 1.0;
  }

 private:
  std::vector<Bump> bumps_;
};

/// Block ranges of a glued map (empty for other systems).
inline std::vector<std::pair<double, double>> block_ranges(const System<3>& f) {
  std::vector<std::pair<double, double>> r;
  if (const auto* g = dynamic_cast<const GluedMap*>(&f))
    for (const auto& b : g->blocks()) r.emplace_back(b.tau, b.tau + b.lambda);
  return r;
}

struct BirkhoffVector {
  std::vector<double> value;  // averages at horizon n
  std::vector<double> half;   // averages at horizon n/2
  bool converged = false;
  double gap = 0.0;           // max-norm of value - half
};

template <int D>
BirkhoffVector birkhoff_vector(const System<D>& f, const TorusPoint<D>& x, long long n, const ObservableSet<D>& obs,
                               double eps_conv = kConvergenceEps) {
  if (n < 2) throw InvalidArgument("horizon must be at least 2");
  const std::size_t k = obs.size();
  std::vector<double> sum(k, 0.0), buf(k);
  BirkhoffVector out;
  const long long h = n / 2;
  TorusPoint<D> p = x;
  for (long long j = 0; j < n; ++j) {
    obs.eval(p, buf.data());
    for (std::size_t i = 0; i < k; ++i) sum[i] += buf[i];
    if (j + 1 == h) {
      out.half.resize(k);
      for (std::size_t i = 0; i < k; ++i) out.half[i] = sum[i] / static_cast<double>(h);
    }
    if (j + 1 < n) p = f.apply(p);
  }
  out.value.resize(k);
  for (std::size_t i = 0; i < k; ++i) out.value[i] = sum[i] / static_cast<double>(n);
  for (std::size_t i = 0; i < k; ++i) out.gap = std::max(out.gap, std::abs(out.value[i] - out.half[i]));
  out.converged = out.gap < eps_conv;
  return out;
}

/// A 2-D slice of initial points: coordinate `ax` over [0,1) x coordinate `ay`
/// over [0,1), other coordinates fixed, cells sampled at jittered centers.
template <int D>
struct SliceGrid {
  int nx = 64;
  int ny = 64;
  int ax = 0;
  int ay = 1;
  Vec<D> base = Vec<D>::Constant(0.5);
  double jitter = 0.25;  // in cell units, uniform in [-jitter, jitter]
  std::uint64_t seed = 1;

  std::vector<TorusPoint<D>> points(bool interval_first) const {
    if (nx < 1 || ny < 1) throw InvalidArgument("grid must be non-empty");
    std::vector<TorusPoint<D>> pts;
    pts.reserve(static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny));
    Rng rng(seed);
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        Vec<D> v = base;
        for (int c = 0; c < D; ++c)
          if (c != ax && c != ay) v[c] += 1e-3 * rng.uniform(-1.0, 1.0);
        v[ax] = (i + 0.5 + jitter * rng.uniform(-1.0, 1.0)) / nx;
        v[ay] = (j + 0.5 + jitter * rng.uniform(-1.0, 1.0)) / ny;
        pts.push_back(TorusPoint<D>::wrap(v, interval_first));
      }
    return pts;
  }
};

template <int D>
struct BasinMap {
  int nx = 0, ny = 0;
  std::vector<TorusPoint<D>> points;   // row-major: index = j * nx + i
  std::vector<BirkhoffVector> vectors;
  std::vector<int> labels;             // 0 = unconverged
  int ell = 0;
  double tol = 0.0;
  std::vector<std::vector<double>> centroids;  // per label 1..ell (index label-1)
};

/// Deterministic single-linkage clustering of the converged vectors: points
/// are visited in lexicographic order of their vectors and every pair closer
/// than tol (max-norm) is merged. Labels are numbered by first appearance in
/// grid order.
template <int D>
void cluster_basins(BasinMap<D>& map, double tol, double eps_conv = kConvergenceEps) {
  if (!(tol > eps_conv)) throw InvalidArgument("clustering tolerance must exceed the convergence gate");
  const std::size_t n = map.vectors.size();
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < n; ++i)
    if (map.vectors[i].converged) idx.push_back(i);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return map.vectors[a].value < map.vectors[b].value;
  });
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  std::function<std::size_t(std::size_t)> find = [&](std::size_t a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  };
  auto close = [&](std::size_t a, std::size_t b) {
    const auto& u = map.vectors[a].value;
    const auto& v = map.vectors[b].value;
    for (std::size_t k = 0; k < u.size(); ++k)
      if (std::abs(u[k] - v[k]) >= tol) return false;
    return true;
  };
  for (std::size_t p = 0; p < idx.size(); ++p) {
    for (std::size_t q = p + 1; q < idx.size(); ++q) {
      // Sorted by first component, so later points cannot be close once it differs by tol.
      if (map.vectors[idx[q]].value[0] - map.vectors[idx[p]].value[0] >= tol) break;
      if (close(idx[p], idx[q])) {
        const std::size_t ra = find(idx[p]), rb = find(idx[q]);
        if (ra != rb) parent[std::max(ra, rb)] = std::min(ra, rb);
      }
    }
  }
  map.labels.assign(n, 0);
  map.tol = tol;
  std::vector<int> root_label(n, 0);
  int next = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!map.vectors[i].converged) continue;
    const std::size_t r = find(i);
    if (root_label[r] == 0) root_label[r] = ++next;
    map.labels[i] = root_label[r];
  }
  map.ell = next;
  const std::size_t k = n ? map.vectors[0].value.size() : 0;
  map.centroids.assign(static_cast<std::size_t>(next), std::vector<double>(k, 0.0));
  std::vector<int> counts(static_cast<std::size_t>(next), 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (map.labels[i] == 0) continue;
    auto& c = map.centroids[static_cast<std::size_t>(map.labels[i] - 1)];
    for (std::size_t d = 0; d < k; ++d) c[d] += map.vectors[i].value[d];
    ++counts[static_cast<std::size_t>(map.labels[i] - 1)];
  }
  for (std::size_t l = 0; l < map.centroids.size(); ++l)
    for (double& v : map.centroids[l]) v /= counts[l];
}

/// Label of a new vector: the cluster containing a member within tol, 0 when
/// unconverged or unmatched.
template <int D>
int classify(const BasinMap<D>& map, const BirkhoffVector& v) {
  if (!v.converged) return 0;
  for (std::size_t i = 0; i < map.vectors.size(); ++i) {
    if (map.labels[i] == 0) continue;
    const auto& u = map.vectors[i].value;
    bool near = true;
    for (std::size_t k = 0; k < u.size() && near; ++k) near = std::abs(u[k] - v.value[k]) < map.tol;
    if (near) return map.labels[i];
  }
  return 0;
}

struct BasinOptions {
  long long horizon = 100000;
  double tol = 0.05;
  double eps_conv = kConvergenceEps;
  int workers = 1;
};

template <int D>
BasinMap<D> compute_basins(const System<D>& f, const SliceGrid<D>& grid, const ObservableSet<D>& obs,
                           const BasinOptions& opt) {
  BasinMap<D> map;
  map.nx = grid.nx;
  map.ny = grid.ny;
  map.points = grid.points(f.interval_first());
  map.vectors = parallel_map<BirkhoffVector>(map.points.size(), opt.workers, [&](std::size_t i) {
    return birkhoff_vector<D>(f, map.points[i], opt.horizon, obs, opt.eps_conv);
  });
  cluster_basins<D>(map, opt.tol, opt.eps_conv);
  return map;
}

struct OpennessReport {
  struct Entry {
    double radius = 0.0;
    int probes = 0;
    int stable = 0;
    double fraction() const { return probes ? static_cast<double>(stable) / probes : 1.0; }
  };
  std::vector<Entry> entries;  // one per radius
  int sampled_points = 0;
};

/// Perturb sampled interior points of each cluster (all four grid neighbours
/// share the label, and `accept` holds) by each radius in a seeded random
/// direction and count label-stable perturbations.
template <int D>
OpennessReport basin_openness_probe(const System<D>& f, const BasinMap<D>& map, const ObservableSet<D>& obs,
                                    int samples_per_cluster, long long horizon, std::uint64_t seed, int workers,
                                    const std::vector<double>& radii = {1e-3, 1e-4},
                                    const std::function<bool(const TorusPoint<D>&)>& accept = nullptr) {
  std::vector<std::size_t> chosen;
  for (int l = 1; l <= map.ell; ++l) {
    std::vector<std::size_t> interior;
    for (int j = 1; j + 1 < map.ny; ++j)
      for (int i = 1; i + 1 < map.nx; ++i) {
        const std::size_t id = static_cast<std::size_t>(j) * map.nx + i;
        if (map.labels[id] != l) continue;
        if (map.labels[id - 1] != l || map.labels[id + 1] != l || map.labels[id - map.nx] != l ||
            map.labels[id + map.nx] != l)
          continue;
        if (accept && !accept(map.points[id])) continue;
        interior.push_back(id);
      }
    if (interior.empty()) continue;
    const std::size_t take = std::min<std::size_t>(interior.size(), static_cast<std::size_t>(samples_per_cluster));
    for (std::size_t s = 0; s < take; ++s) chosen.push_back(interior[s * interior.size() / take]);
  }
  OpennessReport rep;
  rep.sampled_points = static_cast<int>(chosen.size());
  for (std::size_t r = 0; r < radii.size(); ++r) {
    const double rad = radii[r];
    const auto stable = parallel_map<int>(chosen.size(), workers, [&](std::size_t s) {
      Rng rng = Rng::stream(seed, r * 1000003ULL + s);
      Vec<D> dir;
      for (int c = 0; c < D; ++c) dir[c] = rng.uniform(-1.0, 1.0);
      dir.normalize();
      const auto& p = map.points[chosen[s]];
      Vec<D> raw = p.coords() + rad * dir;
      if (p.interval_first()) raw[0] = std::clamp(raw[0], 0.0, 1.0);
      const auto q = TorusPoint<D>::wrap(raw, p.interval_first());
      const auto v = birkhoff_vector<D>(f, q, horizon, obs);
      return classify<D>(map, v) == map.labels[chosen[s]] ? 1 : 0;
    });
    OpennessReport::Entry e;
    e.radius = rad;
    e.probes = static_cast<int>(chosen.size());
    e.stable = std::accumulate(stable.begin(), stable.end(), 0);
    rep.entries.push_back(e);
  }
  return rep;
}

/// Number of physical-measure candidates for each member of a family.
template <int D>
std::vector<int> uniqueness_scan(const std::vector<SystemPtr<D>>& family, const SliceGrid<D>& grid,
                                 const BasinOptions& opt) {
  std::vector<int> ell;
  for (const auto& f : family) {
    const auto obs = [&] {
      if constexpr (D == 3)
        return ObservableSet<3>::with_blocks(block_ranges(*f));
      else
        return ObservableSet<D>::characters();
    }();
    ell.push_back(compute_basins<D>(*f, grid, obs, opt).ell);
  }
  return ell;
}

/// CSV: grid indices, point coordinates, Birkhoff vector, gap, label.
template <int D>
void write_basin_csv(std::ostream& os, const BasinMap<D>& map, const std::vector<std::string>& names,
                     const std::string& hash_hex) {
  os << "# config_hash=" << hash_hex << '\n';
  os << "i,j";
  for (int c = 0; c < D; ++c) os << ",x" << c;
  for (const auto& n : names) os << ',' << n;
  os << ",gap,label\n";
  os.precision(17);
  for (std::size_t id = 0; id < map.points.size(); ++id) {
    os << (id % static_cast<std::size_t>(map.nx)) << ',' << (id / static_cast<std::size_t>(map.nx));
    for (int c = 0; c < D; ++c) os << ',' << map.points[id][c];
    for (double v : map.vectors[id].value) os << ',' << v;
    os << ',' << map.vectors[id].gap << ',' << map.labels[id] << '\n';
  }
}

/// Plain PPM (P3): one color per label, black for unconverged points; row 0
/// of the image is the top (largest second coordinate).
template <int D>
void write_basin_ppm(std::ostream& os, const BasinMap<D>& map, const std::string& hash_hex) {
  static const int palette[][3] = {{230, 25, 75},  {60, 180, 75},  {0, 130, 200}, {245, 130, 48},
                                   {145, 30, 180}, {70, 240, 240}, {240, 50, 230}, {210, 245, 60},
                                   {250, 190, 212}, {0, 128, 128}, {170, 110, 40}, {128, 128, 0}};
  os << "P3\n# config_hash=" << hash_hex << '\n' << map.nx << ' ' << map.ny << "\n255\n";
  for (int j = map.ny - 1; j >= 0; --j) {
    for (int i = 0; i < map.nx; ++i) {
      const int l = map.labels[static_cast<std::size_t>(j) * map.nx + i];
      if (l == 0) {
        os << "0 0 0";
      } else {
        const auto& c = palette[(l - 1) % 12];
        os << c[0] << ' ' << c[1] << ' ' << c[2];
      }
      os << (i + 1 == map.nx ? '\n' : ' ');
    }
  }
}

}  // namespace phdyn
