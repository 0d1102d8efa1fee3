#pragma once

// Experiment orchestration: parse a config into systems plus task parameters,
// run the task, and write deterministic artifacts. Every artifact embeds the
// hash of the resolved config; the worker count is deliberately excluded from
// both the hash and the echoed config, because results do not depend on it.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "phdyn/basins.hpp"
#include "phdyn/config.hpp"
#include "phdyn/ergodic.hpp"
#include "phdyn/measures.hpp"
#include "phdyn/parallel.hpp"
#include "phdyn/splitting.hpp"
#include "phdyn/systems.hpp"

namespace phdyn {

inline const std::vector<std::string>& task_names() {
  static const std::vector<std::string> names = {"exponents", "nue",     "occupation", "gibbs",
                                                 "basins",    "certify", "seqlemma",   "ln"};
  return names;
}

struct Experiment {
  std::string task;
  std::vector<BuiltSystem> systems;
  std::uint64_t seed = 1;
  int workers = 1;
  json params;    // resolved task parameters
  json resolved;  // full resolved config (without workers / output)
  std::uint64_t hash = 0;
  std::string output;  // requested output directory ("" = derived)
};

namespace task {

inline json parse_params(const std::string& task, const json& raw, const std::vector<BuiltSystem>& systems);

}  // namespace task

/// Validate a config and build its systems. Throws ConfigError on any schema
/// violation or rejected system parameters; nothing is written.
inline Experiment parse_experiment(const json& j, std::optional<int> workers_override = std::nullopt) {
  Fields f(j, "config");
  Experiment e;
  e.task = f.require<std::string>("task");
  if (std::find(task_names().begin(), task_names().end(), e.task) == task_names().end())
    throw ConfigError("config.task: unknown task '" + e.task + "'");
  const bool needs_system = e.task != "seqlemma";
  if (f.has("system") && f.has("systems")) throw ConfigError("config: give only one of 'system' or 'systems'");
  if (needs_system && !f.has("system") && !f.has("systems"))
    throw ConfigError("config: task " + e.task + " needs 'system' or 'systems'");
  if (!needs_system && (f.has("system") || f.has("systems")))
    throw ConfigError("config: task " + e.task + " takes no system");
  json sys_resolved;
  if (!needs_system) {
  } else if (f.has("system")) {
    e.systems.push_back(build_system(f.raw("system"), "system"));
    sys_resolved = e.systems.back().spec;
    f.set_resolved("system", sys_resolved);
  } else {
    const json& arr = f.raw("systems");
    if (!arr.is_array() || arr.empty()) throw ConfigError("config.systems: expected a non-empty array");
    sys_resolved = json::array();
    for (std::size_t i = 0; i < arr.size(); ++i) {
      e.systems.push_back(build_system(arr[i], "systems[" + std::to_string(i) + "]"));
      sys_resolved.push_back(e.systems.back().spec);
    }
    f.set_resolved("systems", sys_resolved);
  }
  e.seed = f.get<std::uint64_t>("seed", 1);
  e.workers = f.get<int>("workers", default_workers());
  if (workers_override) e.workers = *workers_override;
  if (e.workers < 1) throw ConfigError("config.workers: must be at least 1");
  e.output = f.get<std::string>("output", "");
  e.params = task::parse_params(e.task, f.has("params") ? f.raw("params") : json::object(), e.systems);
  f.set_resolved("params", e.params);
  json r = f.finish();
  r.erase("workers");
  r.erase("output");
  e.resolved = r;
  e.hash = config_hash(r);
  return e;
}

struct RunResult {
  json summary;
  std::vector<std::string> files;  // relative names, in creation order
};

namespace io {

inline std::string num(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

template <int D>
std::string coords(const TorusPoint<D>& p) {
  std::string s;
  for (int i = 0; i < D; ++i) s += (i ? "," : "") + num(p[i]);
  return s;
}

class Writer {
 public:
  Writer(std::filesystem::path dir, std::uint64_t hash, RunResult& res) : dir_(std::move(dir)), hash_(hash), res_(res) {}

  std::ofstream open(const std::string& name, bool binary = false) {
    res_.files.push_back(name);
    std::ofstream os(dir_ / name, binary ? std::ios::binary : std::ios::out);
    if (!os) throw std::runtime_error("cannot write " + (dir_ / name).string());
    return os;
  }
  /// Text file with a leading hash comment line.
  std::ofstream csv(const std::string& name) {
    auto os = open(name);
    os << "# config_hash=" << hash_hex(hash_) << '\n';
    return os;
  }
  std::uint64_t hash() const { return hash_; }
  std::string hex() const { return hash_hex(hash_); }

 private:
  std::filesystem::path dir_;
  std::uint64_t hash_;
  RunResult& res_;
};

}  // namespace io

// ---------------------------------------------------------------------------
// Task parameter schemas

namespace task {

inline void require_dim3(const std::vector<BuiltSystem>& s, const std::string& task) {
  for (const auto& b : s)
    if (b.dim() != 3) throw ConfigError("task " + task + " supports only systems on T^3 or [0,1] x T^2");
}

/// Optional u-segment spec {center, length}; absent keys default per system
/// (p0 and L for DA maps, the origin and 0.4 otherwise) when the run starts.
inline void parse_segment(Fields& f, const std::string& key) {
  if (!f.has(key)) {
    f.set_resolved(key, nullptr);
    return;
  }
  Fields s(f.raw(key), "params." + key);
  if (s.has("center")) {
    const auto c = s.require<std::vector<double>>("center");
    if (c.size() != 3) throw ConfigError("params." + key + ".center: expected three coordinates");
  } else {
    s.set_resolved("center", nullptr);
  }
  if (s.has("length")) {
    if (!(s.require<double>("length") > 0.0)) throw ConfigError("params." + key + ".length: must be positive");
  } else {
    s.set_resolved("length", nullptr);
  }
  f.set_resolved(key, s.finish());
}

inline json parse_params(const std::string& task, const json& raw, const std::vector<BuiltSystem>& systems) {
  Fields f(raw, "params");
  static const BuiltSystem none;
  const BuiltSystem& first = systems.empty() ? none : systems.front();
  auto positive = [&](const std::string& k, auto v) {
    if (!(v > 0)) throw ConfigError("params." + k + ": must be positive");
    return v;
  };
  if (task == "exponents") {
    positive("points", f.get<int>("points", 100));
    positive("horizon", f.get<int>("horizon", 1000));
    positive("pad", f.get<int>("pad", 60));
    const int qr = f.get<int>("qr_horizon", 0);
    if (qr < 0) throw ConfigError("params.qr_horizon: must be non-negative");
    f.get<int>("qr_warmup", 100);
    const bool fp = f.get<bool>("fixed_points", false);
    if (fp && !first.da) throw ConfigError("params.fixed_points: requires a da system");
    if (f.has("periodic_fiber")) {
      if (!first.product) throw ConfigError("params.periodic_fiber: requires a product_anosov system");
      Fields pf(f.raw("periodic_fiber"), "params.periodic_fiber");
      const auto pt = pf.require<std::vector<double>>("fiber_point");
      if (pt.size() != 2) throw ConfigError("params.periodic_fiber.fiber_point: expected two coordinates");
      positive("periodic_fiber.period", pf.get<int>("period", 3));
      positive("periodic_fiber.n", pf.get<int>("n", 100000));
      positive("periodic_fiber.grid", pf.get<int>("grid", 8));
      f.set_resolved("periodic_fiber", pf.finish());
    } else {
      f.set_resolved("periodic_fiber", nullptr);
    }
  } else if (task == "nue") {
    positive("points", f.get<int>("points", 100));
    positive("horizon", f.get<int>("horizon", 1000));
    positive("pad", f.get<int>("pad", 60));
    const std::string region = f.get<std::string>("region", "all");
    if (region != "all" && region != "product_region" && region != "u_segment")
      throw ConfigError("params.region: expected all, product_region or u_segment");
    if (region == "product_region")
      for (const auto& b : systems)
        if (b.kind != "f_epsilon") throw ConfigError("params.region=product_region needs f_epsilon systems");
    if (region == "u_segment") {
      if (systems.size() != 1 || !first.da) throw ConfigError("params.region=u_segment needs a single da system");
      parse_segment(f, "segment");
    }
    if (f.has("c0")) {
      positive("c0", f.require<double>("c0"));
    } else {
      if (!first.da || systems.size() != 1) throw ConfigError("params.c0: required unless the system is da");
      f.set_resolved("c0", 0.5 * std::log(first.da->params_struct().expansion_lambda()));
    }
    const bool cmp = f.get<bool>("compare_block", false);
    if (cmp)
      for (const auto& b : systems)
        if (b.kind != "f_epsilon") throw ConfigError("params.compare_block needs f_epsilon systems");
    positive("compare_grid", f.get<int>("compare_grid", 20));
  } else if (task == "occupation") {
    if (systems.size() != 1 || !first.da) throw ConfigError("task occupation needs a single da system");
    positive("points", f.get<int>("points", 10000));
    positive("horizon", f.get<int>("horizon", 2000));
    positive("k_min", f.get<int>("k_min", 1000));
    positive("pad", f.get<int>("pad", 60));
    const double alpha = f.get<double>("alpha", first.da->params_struct().alpha);
    if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("params.alpha: must lie in (0,1]");
    parse_segment(f, "segment");
  } else if (task == "gibbs") {
    if (systems.size() != 1) throw ConfigError("task gibbs takes a single system");
    require_dim3(systems, task);
    positive("n", f.get<int>("n", 200));
    const int grid = f.get<int>("grid", 20);
    if (grid < 8) throw ConfigError("params.grid: grid too coarse (fewer than 8 cells per axis)");
    positive("budget", f.get<int>("budget", 1000));
    positive("L", f.get<double>("L", first.da ? first.da->params_struct().L : 0.4));
    parse_segment(f, "segment");
    if (f.has("empirical")) {
      Fields ef(f.raw("empirical"), "params.empirical");
      positive("empirical.n", ef.get<long long>("n", 100000));
      if (ef.has("point")) {
        if (ef.require<std::vector<double>>("point").size() != 3)
          throw ConfigError("params.empirical.point: expected three coordinates");
      } else {
        ef.set_resolved("point", nullptr);
      }
      f.set_resolved("empirical", ef.finish());
    } else {
      f.set_resolved("empirical", nullptr);
    }
  } else if (task == "basins") {
    positive("nx", f.get<int>("nx", 64));
    positive("ny", f.get<int>("ny", 64));
    positive("horizon", f.get<long long>("horizon", 100000));
    const double eps = f.get<double>("eps_conv", kConvergenceEps);
    const double tol = f.get<double>("tol", 0.05);
    if (!(tol > eps)) throw ConfigError("params.tol: must exceed eps_conv");
    positive("openness_samples", f.get<int>("openness_samples", 0) + 1);
    positive("openness_horizon", f.get<long long>("openness_horizon", f.has("horizon") ? f.raw("horizon").get<long long>() : 100000));
    f.get<double>("openness_margin", 0.05);
  } else if (task == "certify") {
    if (systems.size() != 1) throw ConfigError("task certify takes a single system");
    positive("grid", f.get<int>("grid", 30));
    positive("n", f.get<int>("n", 20));
    positive("pad", f.get<int>("pad", 60));
    positive("v_grid", f.get<int>("v_grid", 24));
  } else if (task == "seqlemma") {
    positive("sequences", f.get<int>("sequences", 1000));
    const int ml = f.get<int>("max_length", 600);
    const auto ns = f.get<std::vector<int>>("Ns", {2, 3, 5});
    if (ns.empty()) throw ConfigError("params.Ns: must be non-empty");
    for (int n : ns)
      if (n < 1 || n > ml) throw ConfigError("params.Ns: entries must lie in [1, max_length]");
  } else if (task == "ln") {
    require_dim3(systems, task);
    const int grid = f.get<int>("grid", 16);
    if (grid < 4 || grid % 2) throw ConfigError("params.grid: must be even and at least 4");
    const int nmax = f.get<int>("nmax", 20);
    const int limit = f.get<int>("limit", 10);
    if (limit < 1 || 2 * limit > nmax) throw ConfigError("params.limit: need 1 <= limit and 2 limit <= nmax");
    positive("pad", f.get<int>("pad", 60));
    const std::string measure = f.get<std::string>("measure", "uniform");
    if (measure != "uniform" && measure != "gibbs" && measure != "auto")
      throw ConfigError("params.measure: expected uniform, gibbs or auto");
    if (measure != "uniform") {
      positive("gibbs_n", f.get<int>("gibbs_n", 200));
      positive("gibbs_budget", f.get<int>("gibbs_budget", 1000));
      parse_segment(f, "segment");
    }
  } else {
    throw ConfigError("unknown task " + task);
  }
  return f.finish();
}

// ---------------------------------------------------------------------------
// Shared helpers

template <int D>
SystemPtr<D> get_sys(const BuiltSystem& b);
template <>
inline SystemPtr<3> get_sys<3>(const BuiltSystem& b) {
  return b.sys3;
}
template <>
inline SystemPtr<4> get_sys<4>(const BuiltSystem& b) {
  return b.sys4;
}

/// Uniform random points (coordinate 0 of interval domains stays in (0,1)).
template <int D>
std::vector<TorusPoint<D>> random_points(const System<D>& f, int count, std::uint64_t seed, std::uint64_t stream) {
  Rng rng = Rng::stream(seed, stream);
  std::vector<TorusPoint<D>> pts;
  for (int i = 0; i < count; ++i) {
    Vec<D> v;
    for (int c = 0; c < D; ++c) v[c] = rng.uniform();
    pts.push_back(TorusPoint<D>::wrap(v, f.interval_first()));
  }
  return pts;
}

inline USegment<3> build_segment(const BuiltSystem& b, const json& seg) {
  const auto& f = *b.sys3;
  Vec<3> c = Vec<3>::Zero();
  double len = 0.4;
  if (b.da) {
    c = b.da->params_struct().p0.coords();
    len = b.da->params_struct().L;
  }
  if (!seg.is_null() && !seg.at("center").is_null()) {
    const auto v = seg.at("center").get<std::vector<double>>();
    c = Vec<3>(v[0], v[1], v[2]);
  }
  if (!seg.is_null() && !seg.at("length").is_null()) len = seg.at("length").get<double>();
  return grow_usegment<3>(f, TorusPoint<3>::wrap(c, f.interval_first()), len);
}

/// Points spread along a polyline by arc length, one per stratum with a
/// seeded offset inside the stratum.
inline std::vector<TorusPoint<3>> points_on_segment(const USegment<3>& s, int count, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> cum{0.0};
  for (std::size_t e = 0; e < s.edges(); ++e) cum.push_back(cum.back() + s.edge_length(e));
  const double total = cum.back();
  std::vector<TorusPoint<3>> pts;
  std::size_t e = 0;
  for (int i = 0; i < count; ++i) {
    const double a = (i + rng.uniform()) / count * total;
    while (e + 1 < s.edges() && cum[e + 1] < a) ++e;
    const double t = (a - cum[e]) / (cum[e + 1] - cum[e]);
    pts.push_back(translate(s.vertices()[e], t * s.edge_vector(e)));
  }
  return pts;
}

template <int D>
json rates_json(const PHCertificate& c) {
  return {{"lambda1", c.lambda1}, {"mu1", c.mu1}, {"lambda2", c.lambda2}, {"mu2", c.mu2},
          {"lambda3", c.lambda3}, {"mu3", c.mu3}, {"C", c.C},           {"n_checked", c.n_checked},
          {"horizon", c.horizon}, {"max_residual", c.max_residual}};
}

// ---------------------------------------------------------------------------
// Tasks

template <int D>
json run_exponents_for(const Experiment& e, const BuiltSystem& b, std::size_t si, io::Writer& w) {
  const auto f = get_sys<D>(b);
  const json& p = e.params;
  const int horizon = p.at("horizon"), pad = p.at("pad"), count = p.at("points");
  const auto pts = random_points<D>(*f, count, e.seed, si);
  const auto series = parallel_map<ExponentSeries<D>>(pts.size(), e.workers, [&](std::size_t i) {
    return central_exponent<D>(*f, pts[i], horizon, pad);
  });
  auto os = w.csv("exponents_" + std::to_string(si) + ".csv");
  os << "index";
  for (int c = 0; c < D; ++c) os << ",x" << c;
  os << ",length,last,tail_min,tail_max,cut_reason\n";
  double lo = std::numeric_limits<double>::infinity(), hi = -lo, sum = 0.0;
  int truncated = 0;
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    os << i << ',' << io::coords(pts[i]) << ',' << s.length();
    if (s.length() > 0) {
      os << ',' << io::num(s.last()) << ',' << io::num(s.tail_min()) << ',' << io::num(s.tail_max());
      lo = std::min(lo, s.last());
      hi = std::max(hi, s.last());
      sum += s.last();
    } else {
      os << ",,,";
    }
    os << ',' << '"' << s.cut_reason << '"' << '\n';
    if (s.truncated()) ++truncated;
  }
  json out = {{"system", b.spec},
              {"center_exponent", {{"min_last", lo}, {"max_last", hi}, {"mean_last", sum / series.size()}}},
              {"truncated_series", truncated}};
  if (b.linear3 && b.kind == "linear_anosov_t3") {
    out["reference_center"] = std::log(b.linear3->eigenvalues[1]);
    const Vec<3>& ev = b.linear3->eigenvalues;
    out["eigenvalues"] = {ev[0], ev[1], ev[2]};
    out["log_eigenvalues"] = {std::log(ev[0]), std::log(ev[1]), std::log(ev[2])};
    out["da_chain"] = satisfies_da_chain(ev);
    const auto roots = da_chain_by_bisection(b.linear3->matrix);
    out["da_chain_by_bisection"] = roots.has_value();
    if (roots) out["bisection_roots"] = {(*roots)[0], (*roots)[1], (*roots)[2]};
  }
  if (b.product) out["reference_center"] = std::log(b.product->second.eigenvalues[1]);
  const int qr = p.at("qr_horizon");
  if (qr > 0) {
    const auto spec = qr_lyapunov_spectrum<D>(*f, pts.front(), qr, p.at("qr_warmup"));
    json arr = json::array();
    for (int i = 0; i < D; ++i) arr.push_back(spec[i]);
    out["qr_spectrum"] = arr;
    out["qr_point"] = std::vector<double>(pts.front().coords().data(), pts.front().coords().data() + D);
  }
  if constexpr (D == 3) {
    if (p.at("fixed_points").get<bool>() && b.da) {
      json fps = json::array();
      for (const auto& fp : b.da->center_leaf_fixed_points()) {
        fps.push_back({{"s", fp.s},
                       {"point", {fp.point[0], fp.point[1], fp.point[2]}},
                       {"center_derivative", fp.center_derivative},
                       {"residual", std::abs(b.da->center_leaf_map(fp.s) - fp.s)},
                       {"in_V", b.da->domain().contains(fp.point)},
                       {"map_residual", distance(b.da->apply(fp.point), fp.point)}});
      }
      out["center_leaf_fixed_points"] = fps;
    }
  }
  if constexpr (D == 4) {
    if (!p.at("periodic_fiber").is_null() && b.product) {
      const json& pf = p.at("periodic_fiber");
      const auto fib = pf.at("fiber_point").get<std::vector<double>>();
      const int period = pf.at("period"), grid = pf.at("grid");
      const long long n = pf.at("n");
      Rng rng = Rng::stream(e.seed, 1000 + si);
      const Vec<4> v(rng.uniform(), rng.uniform(), fib[0], fib[1]);
      const auto x = TorusPoint<4>::wrap(v);
      // Enumerate the fiber orbit under A2 and confirm its period.
      std::vector<TorusPoint<4>> orbit{x};
      for (int k = 1; k <= period; ++k) orbit.push_back(f->apply(orbit.back()));
      const bool periodic = orbit.back()[2] == x[2] && orbit.back()[3] == x[3];
      auto h = empirical_measure<4>(*f, x, n, grid);
      std::set<std::pair<int, int>> expected;
      for (int k = 0; k < period; ++k) {
        const auto cc = h.cell_coords(h.cell_index(orbit[static_cast<std::size_t>(k)]));
        expected.insert({cc[2], cc[3]});
      }
      bool support_ok = true;
      int cells = 0;
      std::set<std::pair<int, int>> seen;
      for (std::size_t c = 0; c < h.cells(); ++c) {
        if (h[c] == 0.0) continue;
        ++cells;
        const auto cc = h.cell_coords(c);
        seen.insert({cc[2], cc[3]});
        if (!expected.count({cc[2], cc[3]})) support_ok = false;
      }
      auto hs = w.open("periodic_fiber_" + std::to_string(si) + ".phdh", true);
      h.write_binary(hs, w.hash());
      const auto ex = central_exponent<4>(*f, x, horizon, pad);
      json fibers = json::array();
      for (const auto& [a, c] : seen) fibers.push_back({a, c});
      out["periodic_fiber"] = {{"point", {x[0], x[1], x[2], x[3]}},
                               {"fiber_periodic", periodic},
                               {"support_in_fiber_cells", support_ok},
                               {"expected_fiber_cells", expected.size()},
                               {"occupied_fiber_cells", fibers},
                               {"occupied_cells", cells},
                               {"center_exponent", ex.last()},
                               {"gibbs_cu_state_candidate", false},
                               {"note",
                                "mu_1 x (periodic orbit) has positive center exponent but is singular along the "
                                "center direction, so it is not a Gibbs cu-state"}};
    }
  }
  return out;
}

inline json run_exponents(const Experiment& e, io::Writer& w) {
  json per = json::array();
  for (std::size_t i = 0; i < e.systems.size(); ++i) {
    const auto& b = e.systems[i];
    per.push_back(b.dim() == 3 ? run_exponents_for<3>(e, b, i, w) : run_exponents_for<4>(e, b, i, w));
  }
  return {{"systems", per}};
}

/// Largest wrapped distance between the images of two maps over a grid^3 lattice.
inline double sup_distance(const System<3>& a, const System<3>& b, int grid) {
  double worst = 0.0;
  for (const auto& p : lattice<3>(grid, a.interval_first()))
    worst = std::max(worst, distance(a.apply(p), b.apply(p)));
  return worst;
}

template <int D>
json run_nue_for(const Experiment& e, const BuiltSystem& b, std::size_t si, io::Writer& w) {
  const auto f = get_sys<D>(b);
  const json& p = e.params;
  const int horizon = p.at("horizon"), pad = p.at("pad"), count = p.at("points");
  const double c0 = p.at("c0");
  const std::string region = p.at("region");
  std::vector<TorusPoint<D>> pts = random_points<D>(*f, count, e.seed, si);
  if constexpr (D == 3) {
    if (region == "product_region") {
      for (auto& q : pts) {
        Vec<3> v = q.coords();
        v[0] = 1.0 - b.epsilon + b.epsilon * v[0];
        q = TorusPoint<3>::wrap(v, true);
      }
    } else if (region == "u_segment") {
      pts = points_on_segment(build_segment(b, p.at("segment")), count, e.seed + si);
    }
  }
  const auto stats = parallel_map<NUEStat<D>>(pts.size(), e.workers, [&](std::size_t i) {
    return nue_statistic<D>(*f, pts[i], horizon, c0, pad);
  });
  auto os = w.csv("nue_" + std::to_string(si) + ".csv");
  os << "index";
  for (int c = 0; c < D; ++c) os << ",x" << c;
  os << ",length,S_last,tail_min,tail_max,max_abs_S,verdict\n";
  int counts[3] = {0, 0, 0};
  double max_abs = 0.0, worst_tail_max = -std::numeric_limits<double>::infinity();
  int truncated = 0;
  for (std::size_t i = 0; i < stats.size(); ++i) {
    const auto& s = stats[i];
    double m = 0.0;
    for (double v : s.sums) m = std::max(m, std::abs(v));
    max_abs = std::max(max_abs, m);
    if (!s.cut_reason.empty()) ++truncated;
    ++counts[static_cast<int>(s.verdict)];
    worst_tail_max = std::max(worst_tail_max, s.tail_max);
    os << i << ',' << io::coords(pts[i]) << ',' << s.sums.size() << ','
       << (s.sums.empty() ? std::string() : io::num(s.sums.back())) << ',' << io::num(s.tail_min) << ','
       << io::num(s.tail_max) << ',' << io::num(m) << ',' << to_string(s.verdict) << '\n';
  }
  json out = {{"system", b.spec},
              {"c0", c0},
              {"region", region},
              {"verdicts", {{"NUE-pass", counts[0]}, {"wNUE-pass-only", counts[1]}, {"fail", counts[2]}}},
              {"max_abs_S", max_abs},
              {"worst_tail_max", worst_tail_max},
              {"truncated", truncated}};
  if constexpr (D == 3) {
    if (p.at("compare_block").get<bool>()) out["sup_distance_to_block"] = sup_distance(*f, *b.block, p.at("compare_grid"));
    if (b.kind == "f_epsilon") out["epsilon"] = b.epsilon;
  }
  return out;
}

inline json run_nue(const Experiment& e, io::Writer& w) {
  json per = json::array();
  for (std::size_t i = 0; i < e.systems.size(); ++i) {
    const auto& b = e.systems[i];
    per.push_back(b.dim() == 3 ? run_nue_for<3>(e, b, i, w) : run_nue_for<4>(e, b, i, w));
  }
  json out = {{"systems", per}};
  if (e.params.at("compare_block").get<bool>()) {
    // Monotone decrease of the sup-distance as epsilon shrinks.
    std::vector<std::pair<double, double>> pairs;
    for (const auto& s : per) pairs.emplace_back(s.at("epsilon").get<double>(), s.at("sup_distance_to_block").get<double>());
    std::sort(pairs.begin(), pairs.end(), [](auto a, auto b) { return a.first > b.first; });
    bool mono = true;
    for (std::size_t i = 1; i < pairs.size(); ++i) mono = mono && pairs[i].second < pairs[i - 1].second;
    out["sup_distance_decreasing"] = mono;
  }
  return out;
}

inline json run_occupation(const Experiment& e, io::Writer& w) {
  const auto& b = e.systems.front();
  const DAMap& f = *b.da;
  const DAParams& dp = f.params_struct();
  const json& p = e.params;
  const int horizon = p.at("horizon"), k_min = p.at("k_min"), pad = p.at("pad"), count = p.at("points");
  const double alpha = p.at("alpha");
  const BoxDomain<3> V = f.domain();
  const auto seg = build_segment(b, p.at("segment"));
  const auto pts = points_on_segment(seg, count, e.seed);
  const double log_lambda = std::log(dp.expansion_lambda());

  struct Row {
    bool in_union = false;
    int visits = 0;
    double lam_last = 0.0;
    double margin_log3 = 0.0;   // min over n in [k_min, horizon] of n lam_n - bound_log3 + n 1e-6
    double margin_eta = 0.0;    // min over all n of n lam_n - bound_eta
    double min_lam_tail = 0.0;  // min over n in [k_min, horizon] of lam_n
    bool truncated = false;
  };
  const auto rows = parallel_map<Row>(pts.size(), e.workers, [&](std::size_t i) {
    const auto orb = split_orbit<3>(f, pts[i], horizon, pad);
    const auto ex = central_exponent_from<3>(orb, horizon);
    const auto occ = occupation_from<3>(orb, V, horizon, alpha);
    Row r;
    r.in_union = occ.in_union_M(k_min);
    r.visits = occ.visits.back();
    r.truncated = ex.truncated() || ex.length() < horizon;
    if (r.truncated) return r;
    r.lam_last = ex.last();
    r.margin_log3 = r.margin_eta = r.min_lam_tail = std::numeric_limits<double>::infinity();
    for (int n = 1; n <= horizon; ++n) {
      const auto rec = center_bound<3>(ex, occ, n, dp.beta, dp.eta_c);
      r.margin_eta = std::min(r.margin_eta, rec.log_center - rec.bound_eta);
      if (n >= k_min) {
        r.margin_log3 = std::min(r.margin_log3, rec.log_center - rec.bound_log3 + n * 1e-6);
        r.min_lam_tail = std::min(r.min_lam_tail, ex.values[static_cast<std::size_t>(n - 1)]);
      }
    }
    return r;
  });
  auto os = w.csv("occupation.csv");
  os << "index,x0,x1,x2,visits,in_union_M,lambda_c_last,margin_log3,margin_eta,min_lambda_tail\n";
  int in_union = 0, outside = 0, lit_fail = 0, eta_fail = 0, lam_fail = 0, truncated = 0;
  double worst_log3 = std::numeric_limits<double>::infinity(), worst_eta = worst_log3, worst_lam = worst_log3;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    os << i << ',' << io::coords(pts[i]) << ',' << r.visits << ',' << (r.in_union ? 1 : 0) << ','
       << io::num(r.lam_last) << ',' << io::num(r.margin_log3) << ',' << io::num(r.margin_eta) << ','
       << io::num(r.min_lam_tail) << '\n';
    if (r.truncated) {
      ++truncated;
      continue;
    }
    if (r.in_union) {
      ++in_union;
      continue;
    }
    ++outside;
    if (r.margin_log3 < 0.0) ++lit_fail;
    if (r.margin_eta < 0.0) ++eta_fail;
    if (r.min_lam_tail < log_lambda) ++lam_fail;
    worst_log3 = std::min(worst_log3, r.margin_log3);
    worst_eta = std::min(worst_eta, r.margin_eta);
    worst_lam = std::min(worst_lam, r.min_lam_tail);
  }
  return {{"system", b.spec},
          {"points", count},
          {"horizon", horizon},
          {"k_min", k_min},
          {"alpha", alpha},
          {"segment_length", seg.length()},
          {"in_union_M", in_union},
          {"in_union_fraction", static_cast<double>(in_union) / count},
          {"outside", outside},
          {"truncated", truncated},
          {"log_lambda", log_lambda},
          {"bound_log3", {{"violations", lit_fail}, {"worst_margin", worst_log3}}},
          {"bound_eta_c", {{"eta_c", dp.eta_c}, {"violations", eta_fail}, {"worst_margin", worst_eta}}},
          {"lambda_c_tail_vs_log_lambda", {{"violations", lam_fail}, {"worst_min_lambda", worst_lam}}}};
}

inline json run_gibbs(const Experiment& e, io::Writer& w) {
  const auto& b = e.systems.front();
  const auto& f = *b.sys3;
  const json& p = e.params;
  const auto seg = build_segment(b, p.at("segment"));
  PesinSinaiOptions opt;
  opt.budget = p.at("budget");
  opt.seed = e.seed;
  opt.L = p.at("L");
  const int n = p.at("n"), grid = p.at("grid");
  const auto r = pesin_sinai<3>(f, seg, n, grid, opt);
  {
    auto os = w.open("mu.csv");
    r.mu.write_csv(os, w.hash());
  }
  {
    auto os = w.open("mu.phdh", true);
    r.mu.write_binary(os, w.hash());
  }
  {
    auto os = w.open("mu_shifted.phdh", true);
    r.shifted.write_binary(os, w.hash());
  }
  const auto uni = HistogramMeasure<3>::uniform(grid, r.mu.tag());
  json out = {{"system", b.spec},
              {"n", n},
              {"grid", grid},
              {"segment_length", seg.length()},
              {"mass", r.mu.total()},
              {"tv_to_uniform", tv_distance(r.mu, uni)},
              {"cesaro_defect", tv_distance(r.mu, r.shifted)},
              {"max_distortion", r.max_distortion},
              {"low_expansion_events", r.low_expansion_events},
              {"resample_events", r.resample_events}};
  if (!p.at("empirical").is_null()) {
    const json& ep = p.at("empirical");
    TorusPoint<3> x;
    if (ep.at("point").is_null()) {
      x = random_points<3>(f, 1, e.seed, 77).front();
    } else {
      const auto v = ep.at("point").get<std::vector<double>>();
      x = TorusPoint<3>::wrap(std::span<const double>(v), f.interval_first());
    }
    const auto emp = empirical_measure<3>(f, x, ep.at("n").get<long long>(), grid);
    auto os = w.open("empirical.phdh", true);
    emp.write_binary(os, w.hash());
    out["empirical"] = {{"point", {x[0], x[1], x[2]}},
                        {"tv_to_uniform", tv_distance(emp, uni)},
                        {"tv_to_pesin_sinai", tv_distance(emp, r.mu)}};
  }
  return out;
}

inline json run_basins(const Experiment& e, io::Writer& w) {
  require_dim3(e.systems, "basins");
  const json& p = e.params;
  json per = json::array();
  for (std::size_t i = 0; i < e.systems.size(); ++i) {
    const auto& b = e.systems[i];
    const auto& f = *b.sys3;
    SliceGrid<3> g;
    g.nx = p.at("nx");
    g.ny = p.at("ny");
    g.seed = e.seed + i;
    BasinOptions o;
    o.horizon = p.at("horizon");
    o.tol = p.at("tol");
    o.eps_conv = p.at("eps_conv");
    o.workers = e.workers;
    const auto ranges = block_ranges(f);
    const auto obs = ObservableSet<3>::with_blocks(ranges);
    const auto map = compute_basins<3>(f, g, obs, o);
    {
      auto os = w.open("basins_" + std::to_string(i) + ".csv");
      write_basin_csv<3>(os, map, obs.names(), w.hex());
    }
    {
      auto os = w.open("basins_" + std::to_string(i) + ".ppm");
      write_basin_ppm<3>(os, map, w.hex());
    }
    int conv = 0;
    for (const auto& v : map.vectors) conv += v.converged ? 1 : 0;
    // Mean x coordinate of each cluster's initial points locates the basins.
    json clusters = json::array();
    for (int l = 1; l <= map.ell; ++l) {
      double lo = 1.0, hi = 0.0;
      int members = 0;
      for (std::size_t k = 0; k < map.points.size(); ++k)
        if (map.labels[k] == l) {
          lo = std::min(lo, map.points[k][0]);
          hi = std::max(hi, map.points[k][0]);
          ++members;
        }
      clusters.push_back({{"label", l}, {"members", members}, {"x_min", lo}, {"x_max", hi}});
    }
    json entry = {{"system", b.spec}, {"ell", map.ell}, {"converged", conv}, {"points", map.points.size()},
                  {"clusters", clusters}};
    const int samples = p.at("openness_samples");
    if (samples > 0) {
      const double margin = p.at("openness_margin");
      auto accept = [&](const TorusPoint<3>& q) {
        if (ranges.empty()) return true;
        for (const auto& [a, c] : ranges) {
          const double d0 = std::abs(q[0] - a), d1 = std::abs(q[0] - c);
          if (std::min({d0, d1, 1.0 - d0}) <= margin) return false;
        }
        return true;
      };
      const auto rep = basin_openness_probe<3>(f, map, obs, samples, p.at("openness_horizon"), e.seed + 31 * i,
                                               e.workers, {1e-3, 1e-4}, accept);
      json ents = json::array();
      for (const auto& en : rep.entries)
        ents.push_back({{"radius", en.radius}, {"probes", en.probes}, {"stable", en.stable}, {"fraction", en.fraction()}});
      entry["openness"] = {{"sampled_points", rep.sampled_points}, {"interface_margin", margin}, {"radii", ents}};
    }
    per.push_back(entry);
  }
  json ells = json::array();
  for (const auto& s : per) ells.push_back(s.at("ell"));
  return {{"systems", per}, {"ell", ells}};
}

template <int D>
json run_certify_for(const Experiment& e, const BuiltSystem& b, io::Writer& w) {
  const auto f = get_sys<D>(b);
  const json& p = e.params;
  const int grid = p.at("grid"), n = p.at("n"), pad = p.at("pad");
  const auto pts = lattice<D>(grid, f->interval_first());
  const auto samples = parallel_map<PHSample>(pts.size(), e.workers, [&](std::size_t i) {
    return ph_sample<D>(*f, pts[i], n, pad);
  });
  json out = {{"system", b.spec}};
  try {
    const auto cert = reduce_certificate<D>(pts, samples, n);
    out["certificate"] = rates_json<D>(cert);
    out["chain_holds"] = true;
  } catch (const NumericalError& err) {
    out["chain_holds"] = false;
    out["error"] = err.what();
  }
  if constexpr (D == 3) {
    if (b.da) {
      const auto& dp = b.da->params_struct();
      const auto V = b.da->domain();
      // One-step center rates inside and outside V, on the grid plus a dense lattice of V.
      std::vector<TorusPoint<3>> vpts;
      const int vg = p.at("v_grid");
      for (int i = 0; i < vg; ++i)
        for (int j = 0; j < vg; ++j)
          for (int k = 0; k < vg; ++k) {
            const Vec<3> d = dp.delta * Vec<3>(2.0 * (i + 0.5) / vg - 1.0, 2.0 * (j + 0.5) / vg - 1.0,
                                               2.0 * (k + 0.5) / vg - 1.0);
            const auto q = translate(dp.p0, d);
            if (V.contains(q)) vpts.push_back(q);
          }
      const auto vs = parallel_map<PHSample>(vpts.size(), e.workers, [&](std::size_t i) {
        return ph_sample<3>(*f, vpts[i], 1, pad);
      });
      double in_min = std::numeric_limits<double>::infinity(), out_min = in_min;
      int in_count = 0, out_count = 0;
      for (std::size_t i = 0; i < pts.size(); ++i) {
        const double c = std::exp(samples[i].log_m[1][0]);
        if (V.contains(pts[i])) {
          in_min = std::min(in_min, c);
          ++in_count;
        } else {
          out_min = std::min(out_min, c);
          ++out_count;
        }
      }
      for (const auto& s : vs) {
        in_min = std::min(in_min, std::exp(s.log_m[1][0]));
        ++in_count;
      }
      // One-step uniform bounds on E^s and E^u over the grid.
      double s_max = 0.0, u_min = std::numeric_limits<double>::infinity();
      for (const auto& s : samples) {
        s_max = std::max(s_max, std::exp(s.log_norm[0][0]));
        u_min = std::min(u_min, std::exp(s.log_m[2][0]));
      }
      out["center_floor"] = {{"beta", dp.beta},
                             {"inside_min", in_min},
                             {"inside_points", in_count},
                             {"outside_min", out_min},
                             {"outside_points", out_count},
                             {"eta_c", dp.eta_c}};
      out["one_step"] = {{"stable_max_norm", s_max}, {"unstable_min_conorm", u_min}};
    }
  }
  return out;
}

inline json run_certify(const Experiment& e, io::Writer& w) {
  const auto& b = e.systems.front();
  json out = b.dim() == 3 ? run_certify_for<3>(e, b, w) : run_certify_for<4>(e, b, w);
  auto os = w.csv("certificate.csv");
  os << "key,value\n";
  if (out.contains("certificate"))
    for (const auto& [k, v] : out["certificate"].items()) os << k << ',' << v.dump() << '\n';
  return out;
}

/// Deterministic test sequences: i.i.d. uniform, random walks, periodic
/// patterns with period coprime or equal to N, and sparse spikes.
inline std::vector<double> lemma_sequence(std::uint64_t seed, std::size_t i, int N, int max_len) {
  Rng rng = Rng::stream(seed, i);
  const int n_blocks = std::max(1, static_cast<int>(rng.uniform() * (max_len / N)) + 1);
  const int len = std::min(max_len, n_blocks * N + static_cast<int>(rng.uniform() * N));
  std::vector<double> a(static_cast<std::size_t>(len));
  switch (i % 4) {
    case 0:
      for (auto& v : a) v = rng.uniform(-1.0, 1.0);
      break;
    case 1: {
      double x = 0.0;
      for (auto& v : a) v = (x += rng.uniform(-0.1, 0.1));
      break;
    }
    case 2: {
      const int period = 1 + static_cast<int>(rng.uniform() * 2 * N);
      std::vector<double> pat(static_cast<std::size_t>(period));
      for (auto& v : pat) v = rng.uniform(-1.0, 1.0);
      for (int k = 0; k < len; ++k) a[static_cast<std::size_t>(k)] = pat[static_cast<std::size_t>(k % period)];
      break;
    }
    default:
      for (auto& v : a) v = rng.uniform() < 0.05 ? rng.uniform(0.0, 50.0) : 0.0;
  }
  return a;
}

inline json run_seqlemma(const Experiment& e, io::Writer& w) {
  const json& p = e.params;
  const int count = p.at("sequences"), max_len = p.at("max_length");
  const auto ns = p.at("Ns").get<std::vector<int>>();
  auto os = w.csv("seqlemma.csv");
  os << "index,N,length,blocks,truncated,lhs,rhs,holds\n";
  int violations = 0, truncated_inputs = 0;
  double min_gap = std::numeric_limits<double>::infinity();
  for (int i = 0; i < count; ++i) {
    const int N = ns[static_cast<std::size_t>(i) % ns.size()];
    const auto a = lemma_sequence(e.seed, static_cast<std::size_t>(i), N, max_len);
    const auto r = seq_limsup_bound(a, N);
    if (!r.holds) ++violations;
    if (r.truncated) ++truncated_inputs;
    min_gap = std::min(min_gap, r.rhs - r.lhs);
    os << i << ',' << N << ',' << a.size() << ',' << r.blocks << ',' << r.truncated << ',' << io::num(r.lhs) << ','
       << io::num(r.rhs) << ',' << (r.holds ? 1 : 0) << '\n';
  }
  // Alternating 0,1,0,1,... with N = 2.
  std::vector<double> alt(600);
  for (std::size_t k = 0; k < alt.size(); ++k) alt[k] = static_cast<double>(k % 2);
  const auto ar = seq_limsup_bound(alt, 2);
  return {{"sequences", count},
          {"violations", violations},
          {"truncated_inputs", truncated_inputs},
          {"min_rhs_minus_lhs", min_gap},
          {"alternating", {{"lhs", ar.lhs}, {"rhs", ar.rhs}, {"holds", ar.holds}}}};
}

inline json run_ln(const Experiment& e, io::Writer& w) {
  const json& p = e.params;
  const int grid = p.at("grid"), nmax = p.at("nmax"), limit = p.at("limit"), pad = p.at("pad");
  const std::string measure = p.at("measure");
  json per = json::array();
  std::vector<std::vector<LnValue>> tables;
  for (std::size_t si = 0; si < e.systems.size(); ++si) {
    const auto& b = e.systems[si];
    const auto& f = *b.sys3;
    const DomainTag tag = f.interval_first() ? DomainTag::interval_torus : DomainTag::torus;
    HistogramMeasure<3> mu = HistogramMeasure<3>::uniform(grid, tag);
    // "auto" takes the approximate Gibbs u-state for DA maps and Lebesgue otherwise.
    const bool gibbs = measure == "gibbs" || (measure == "auto" && b.da);
    json meas = {{"kind", gibbs ? "gibbs" : "uniform"}};
    if (gibbs) {
      PesinSinaiOptions opt;
      opt.budget = p.at("gibbs_budget");
      opt.seed = e.seed;
      opt.L = b.da ? b.da->params_struct().L : 0.4;
      const auto r = pesin_sinai<3>(f, build_segment(b, p.at("segment")), p.at("gibbs_n"), grid, opt);
      mu = r.mu;
      meas["cesaro_defect"] = tv_distance(r.mu, r.shifted);
      meas["tv_to_uniform"] = tv_distance(r.mu, HistogramMeasure<3>::uniform(grid, tag));
    }
    const auto coarse = mu.coarsen();
    auto table_for = [&](const HistogramMeasure<3>& h) {
      std::vector<std::size_t> cells;
      for (std::size_t c = 0; c < h.cells(); ++c)
        if (h[c] != 0.0) cells.push_back(c);
      const auto rows = parallel_map<std::vector<double>>(cells.size(), e.workers, [&](std::size_t k) {
        const auto orb = split_orbit<3>(f, h.cell_center(cells[k]), nmax, pad);
        if (!orb.reliable()) throw NumericalError("unreliable splitting in L_n quadrature", orb.max_residual());
        return cumulative_rates<3>(orb, 'c', nmax).log_m;
      });
      std::vector<std::vector<double>> t(h.cells());
      for (std::size_t k = 0; k < cells.size(); ++k) t[cells[k]] = rows[k];
      return t;
    };
    const auto table = ln_from_tables<3>(mu, table_for(mu), coarse, table_for(coarse), nmax);
    tables.push_back(table);
    const auto rep = check_super_additivity(table, limit);
    auto os = w.csv("ln_" + std::to_string(si) + ".csv");
    os << "n,L_n,quadrature_error\n";
    for (const auto& v : table) os << v.n << ',' << io::num(v.value) << ',' << io::num(v.error) << '\n';
    json entry = {{"system", b.spec},
                  {"measure", meas},
                  {"checked", rep.checked},
                  {"violations", rep.violations},
                  {"worst_margin", rep.worst_margin},
                  {"worst_pair", {rep.worst_n, rep.worst_m}},
                  {"lambda_c_estimate", table.back().value / nmax},
                  {"max_quadrature_error", std::accumulate(table.begin(), table.end(), 0.0,
                                                           [](double a, const LnValue& v) { return std::max(a, v.error); })}};
    if (b.linear3 && b.kind == "linear_anosov_t3") entry["reference_center"] = std::log(b.linear3->eigenvalues[1]);
    per.push_back(entry);
  }
  const auto n0 = find_n0(tables, std::min(64, nmax));
  return {{"systems", per},
          {"n0", n0 ? json(*n0) : json(nullptr)},
          {"n0_family", "measures constructed by this run (" + measure + ")"}};
}

}  // namespace task

/// Run a parsed experiment, writing artifacts into `dir` (created if needed).
inline RunResult run_experiment(const Experiment& e, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  RunResult res;
  io::Writer w(dir, e.hash, res);
  {
    auto os = w.open("config.json");
    os << e.resolved.dump(2) << '\n';
  }
  json body;
  if (e.task == "exponents")
    body = task::run_exponents(e, w);
  else if (e.task == "nue")
    body = task::run_nue(e, w);
  else if (e.task == "occupation")
    body = task::run_occupation(e, w);
  else if (e.task == "gibbs")
    body = task::run_gibbs(e, w);
  else if (e.task == "basins")
    body = task::run_basins(e, w);
  else if (e.task == "certify")
    body = task::run_certify(e, w);
  else if (e.task == "seqlemma")
    body = task::run_seqlemma(e, w);
  else if (e.task == "ln")
    body = task::run_ln(e, w);
  res.summary = {{"task", e.task}, {"config_hash", hash_hex(e.hash)}, {"seed", e.seed}, {"result", body}};
  {
    auto os = w.open("summary.json");
    os << res.summary.dump(2) << '\n';
  }
  return res;
}

/// Output directory: `output` from the config, else "<task>-<hash>", resolved
/// against the given root.
inline std::filesystem::path output_dir(const Experiment& e, const std::filesystem::path& root) {
  const std::filesystem::path rel = e.output.empty() ? e.task + "-" + hash_hex(e.hash) : e.output;
  return rel.is_absolute() ? rel : root / rel;
}

}  // namespace phdyn
