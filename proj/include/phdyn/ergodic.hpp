#pragma once

// Scalar time-average diagnostics: central exponents, NUE statistics,
// occupation fractions of V, the L_n functional and the sequence lemma.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "phdyn/histogram.hpp"
#include "phdyn/splitting.hpp"
#include "phdyn/torus.hpp"

namespace phdyn {

/// Index range [first, last] (1-based horizons) of the tail window, the
/// final quarter of a horizon.
inline std::pair<int, int> tail_window(int horizon) {
  return {horizon - horizon / 4, horizon};
}

// ---------------------------------------------------------------------------
// Central exponent

template <int D>
struct ExponentSeries {
  TorusPoint<D> x0;
  std::vector<double> values;  // values[n-1] = (1/n) log m(Df^n | E^c_x0)
  int horizon = 0;             // requested horizon
  std::string cut_reason;      // non-empty when the series is truncated

  int length() const { return static_cast<int>(values.size()); }
  bool truncated() const { return !cut_reason.empty(); }
  double last() const { return values.back(); }
  /// liminf proxy: minimum over the tail window.
  double tail_min() const {
    const auto [a, b] = tail_window(length());
    return *std::min_element(values.begin() + (a - 1), values.begin() + b);
  }
  /// limsup proxy: maximum over the tail window.
  double tail_max() const {
    const auto [a, b] = tail_window(length());
    return *std::max_element(values.begin() + (a - 1), values.begin() + b);
  }
};

/// Series from an already computed orbit splitting (frames must cover the horizon).
template <int D>
ExponentSeries<D> central_exponent_from(const OrbitSplitting<D>& orb, int horizon) {
  ExponentSeries<D> s;
  s.x0 = orb.frames.front().at;
  s.horizon = horizon;
  const std::size_t bad = orb.first_unreliable();
  int usable = horizon;
  if (bad < static_cast<std::size_t>(horizon)) {
    usable = static_cast<int>(bad);
    std::ostringstream os;
    os << "splitting unreliable at orbit index " << bad << " (residual " << orb.frames[bad].residual << ")";
    s.cut_reason = os.str();
  }
  if (usable < 1) return s;
  const auto r = cumulative_rates<D>(orb, 'c', usable);
  s.values.resize(static_cast<std::size_t>(usable));
  for (int n = 1; n <= usable; ++n) s.values[static_cast<std::size_t>(n - 1)] = r.log_m[static_cast<std::size_t>(n - 1)] / n;
  return s;
}

template <int D>
ExponentSeries<D> central_exponent(const System<D>& f, const TorusPoint<D>& x, int horizon, int pad = 60) {
  if (horizon < 1) throw InvalidArgument("horizon must be at least 1");
  return central_exponent_from<D>(split_orbit<D>(f, x, horizon, pad), horizon);
}

// ---------------------------------------------------------------------------
// NUE / wNUE

enum class NUEVerdict { nue_pass, wnue_pass_only, fail };

inline const char* to_string(NUEVerdict v) {
  switch (v) {
    case NUEVerdict::nue_pass: return "NUE-pass";
    case NUEVerdict::wnue_pass_only: return "wNUE-pass-only";
    case NUEVerdict::fail: return "fail";
  }
  return "?";
}

template <int D>
struct NUEStat {
  TorusPoint<D> x0;
  std::vector<double> sums;  // sums[n-1] = S_n
  double c0 = 0.0;
  int horizon = 0;
  std::pair<int, int> window{0, 0};
  double tail_max = 0.0;
  double tail_min = 0.0;
  NUEVerdict verdict = NUEVerdict::fail;
  std::string cut_reason;
};

/// One-step conorm of Df on E^cu in the adapted metric where E^c and E^u are
/// declared orthogonal: Df is block diagonal there, so m = min(m_c, m_u).
template <int D>
double cu_conorm_adapted(const OrbitSplitting<D>& orb, std::size_t j) {
  const auto& fr = orb.frames[j];
  const Mat<D>& J = orb.jacobians[j];
  auto conorm = [&](const Frame<D>& b) {
    const Frame<D> img = J * b;
    if (b.cols() == 1) return img.norm();
    return min_conorm(img);
  };
  return std::min(conorm(fr.basis_c), conorm(fr.basis_u));
}

template <int D>
NUEStat<D> nue_statistic_from(const OrbitSplitting<D>& orb, int horizon, double c0) {
  if (!(c0 > 0.0)) throw InvalidArgument("c0 must be positive");
  NUEStat<D> st;
  st.x0 = orb.frames.front().at;
  st.c0 = c0;
  st.horizon = horizon;
  int usable = horizon;
  const std::size_t bad = orb.first_unreliable();
  if (bad < static_cast<std::size_t>(horizon)) {
    usable = static_cast<int>(bad);
    st.cut_reason = "splitting unreliable at orbit index " + std::to_string(bad);
  }
  if (usable < 1) return st;
  double acc = 0.0;
  st.sums.resize(static_cast<std::size_t>(usable));
  for (int j = 0; j < usable; ++j) {
    acc += -std::log(cu_conorm_adapted<D>(orb, static_cast<std::size_t>(j)));
    st.sums[static_cast<std::size_t>(j)] = acc / (j + 1);
  }
  st.window = tail_window(usable);
  const auto b = st.sums.begin() + (st.window.first - 1);
  const auto e = st.sums.begin() + st.window.second;
  st.tail_max = *std::max_element(b, e);
  st.tail_min = *std::min_element(b, e);
  if (st.tail_max <= -c0)
    st.verdict = NUEVerdict::nue_pass;
  else if (st.tail_min <= -c0)
    st.verdict = NUEVerdict::wnue_pass_only;
  else
    st.verdict = NUEVerdict::fail;
  return st;
}

template <int D>
NUEStat<D> nue_statistic(const System<D>& f, const TorusPoint<D>& x, int horizon, double c0, int pad = 60) {
  if (horizon < 1) throw InvalidArgument("horizon must be at least 1");
  return nue_statistic_from<D>(split_orbit<D>(f, x, horizon, pad), horizon, c0);
}

// ---------------------------------------------------------------------------
// Occupation of V

template <int D>
struct OccupationStats {
  TorusPoint<D> x0;
  BoxDomain<D> V;
  double alpha = 0.0;
  std::vector<int> visits;  // visits[k-1] = |J_V| for the first k iterates (j = 0..k-1)

  int horizon() const { return static_cast<int>(visits.size()); }
  double fraction(int k) const { return static_cast<double>(visits[static_cast<std::size_t>(k - 1)]) / k; }
  /// x in M(k, alpha).
  bool in_M(int k) const { return fraction(k) >= alpha; }
  /// x in the union of M(k, alpha) over k_min <= k <= horizon.
  bool in_union_M(int k_min) const {
    for (int k = std::max(1, k_min); k <= horizon(); ++k)
      if (in_M(k)) return true;
    return false;
  }
};

template <int D>
OccupationStats<D> occupation(const System<D>& f, const TorusPoint<D>& x, const BoxDomain<D>& V, int horizon,
                              double alpha) {
  if (horizon < 1) throw InvalidArgument("horizon must be at least 1");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidArgument("alpha must lie in [0,1]");
  OccupationStats<D> st;
  st.x0 = x;
  st.V = V;
  st.alpha = alpha;
  st.visits.resize(static_cast<std::size_t>(horizon));
  TorusPoint<D> p = x;
  int count = 0;
  for (int j = 0; j < horizon; ++j) {
    if (V.contains(p)) ++count;
    st.visits[static_cast<std::size_t>(j)] = count;
    if (j + 1 < horizon) p = f.apply(p);
  }
  return st;
}

/// Occupation computed on the orbit points of an existing splitting.
template <int D>
OccupationStats<D> occupation_from(const OrbitSplitting<D>& orb, const BoxDomain<D>& V, int horizon, double alpha) {
  if (static_cast<std::size_t>(horizon) > orb.size()) throw InvalidArgument("orbit too short");
  OccupationStats<D> st;
  st.x0 = orb.frames.front().at;
  st.V = V;
  st.alpha = alpha;
  st.visits.resize(static_cast<std::size_t>(horizon));
  int count = 0;
  for (int j = 0; j < horizon; ++j) {
    if (V.contains(orb.frames[static_cast<std::size_t>(j)].at)) ++count;
    st.visits[static_cast<std::size_t>(j)] = count;
  }
  return st;
}

// ---------------------------------------------------------------------------
// L_n functional

struct LnValue {
  int n = 0;
  double value = 0.0;  // L_n on the given grid
  double error = 0.0;  // |L_n(fine) - L_n(coarse)|
};

/// Per-cell cumulative log m(Df^k|E^c), k = 1..nmax, at the cell centers of a
/// histogram (cells with zero mass are skipped).
template <int D>
std::vector<std::vector<double>> center_log_table(const System<D>& f, const HistogramMeasure<D>& mu, int nmax,
                                                  int pad = 60) {
  std::vector<std::vector<double>> out(mu.cells());
  for (std::size_t i = 0; i < mu.cells(); ++i) {
    if (mu[i] == 0.0) continue;
    const auto orb = split_orbit<D>(f, mu.cell_center(i), nmax, pad);
    if (!orb.reliable()) throw NumericalError("unreliable splitting in L_n quadrature", orb.max_residual());
    out[i] = cumulative_rates<D>(orb, 'c', nmax).log_m;
  }
  return out;
}

/// L_n for n = 1..nmax with cell-center quadrature; the error is the change
/// against the same quadrature on the 2x coarser aggregated histogram.
/// `fine_table`/`coarse_table` come from center_log_table on mu and mu.coarsen().
template <int D>
std::vector<LnValue> ln_from_tables(const HistogramMeasure<D>& mu, const std::vector<std::vector<double>>& fine_table,
                                    const HistogramMeasure<D>& coarse,
                                    const std::vector<std::vector<double>>& coarse_table, int nmax) {
  std::vector<LnValue> out(static_cast<std::size_t>(nmax));
  for (int n = 1; n <= nmax; ++n) {
    double fine = 0.0, crs = 0.0;
    for (std::size_t i = 0; i < mu.cells(); ++i)
      if (mu[i] != 0.0) fine += mu[i] * fine_table[i][static_cast<std::size_t>(n - 1)];
    for (std::size_t i = 0; i < coarse.cells(); ++i)
      if (coarse[i] != 0.0) crs += coarse[i] * coarse_table[i][static_cast<std::size_t>(n - 1)];
    out[static_cast<std::size_t>(n - 1)] = {n, fine, std::abs(fine - crs)};
  }
  return out;
}

template <int D>
std::vector<LnValue> ln_functional_table(const System<D>& f, const HistogramMeasure<D>& mu, int nmax, int pad = 60) {
  if (nmax < 1) throw InvalidArgument("n must be at least 1");
  const auto coarse = mu.coarsen();
  return ln_from_tables<D>(mu, center_log_table<D>(f, mu, nmax, pad), coarse,
                           center_log_table<D>(f, coarse, nmax, pad), nmax);
}

template <int D>
LnValue ln_functional(const System<D>& f, const HistogramMeasure<D>& mu, int n, int pad = 60) {
  return ln_functional_table<D>(f, mu, n, pad).back();
}

/// Round-off floor added to the super-additivity tolerance.
inline constexpr double kLnRoundoffFloor = 1e-12;

struct SuperAdditivityReport {
  int checked = 0;
  int violations = 0;
  double worst_margin = std::numeric_limits<double>::infinity();  // min of L_{n+m} - L_n - L_m + tol
  int worst_n = 0;
  int worst_m = 0;
};

/// Check L_{n+m} >= L_n + L_m - 3 (err_{n+m} + err_n + err_m) for 1 <= n, m <= limit.
inline SuperAdditivityReport check_super_additivity(const std::vector<LnValue>& table, int limit) {
  if (static_cast<int>(table.size()) < 2 * limit) throw InvalidArgument("L_n table too short");
  SuperAdditivityReport r;
  for (int n = 1; n <= limit; ++n)
    for (int m = 1; m <= limit; ++m) {
      const auto& a = table[static_cast<std::size_t>(n - 1)];
      const auto& b = table[static_cast<std::size_t>(m - 1)];
      const auto& c = table[static_cast<std::size_t>(n + m - 1)];
      const double tol = 3.0 * (a.error + b.error + c.error) + kLnRoundoffFloor;
      const double margin = c.value - a.value - b.value + tol;
      ++r.checked;
      if (margin < 0.0) ++r.violations;
      if (margin < r.worst_margin) {
        r.worst_margin = margin;
        r.worst_n = n;
        r.worst_m = m;
      }
    }
  return r;
}

/// Smallest n0 <= n_max with min over the given L_n tables of L_{n0} > 0.
inline std::optional<int> find_n0(const std::vector<std::vector<LnValue>>& tables, int n_max = 64) {
  if (tables.empty()) return std::nullopt;
  for (int n = 1; n <= n_max; ++n) {
    bool all = true;
    for (const auto& t : tables) {
      if (static_cast<int>(t.size()) < n) return std::nullopt;
      if (!(t[static_cast<std::size_t>(n - 1)].value > 0.0)) {
        all = false;
        break;
      }
    }
    if (all) return n;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Sequence lemma

struct SeqBound {
  double lhs = 0.0;
  double rhs = 0.0;
  bool holds = false;
  int blocks = 0;        // n, the number of complete blocks of length N used
  int truncated = 0;     // trailing entries dropped to reach a multiple of N
};

/// Finite-horizon form of: limsup (1/nN) sum_{k<nN} a_k <= max_l limsup (1/n)
/// sum_{k<n} a_{kN+l}. Both limsups are proxied by the maximum over the same
/// tail window of block counts m in [n - n/4, n], which makes the finite
/// inequality exact.
inline SeqBound seq_limsup_bound(const std::vector<double>& a, int N) {
  if (N < 1) throw InvalidArgument("N must be at least 1");
  SeqBound r;
  const int n = static_cast<int>(a.size()) / N;
  if (n < 1) throw InvalidArgument("sequence shorter than one block");
  r.blocks = n;
  r.truncated = static_cast<int>(a.size()) - n * N;
  const auto [first, last] = tail_window(n);
  std::vector<double> lane(static_cast<std::size_t>(N), 0.0);
  double total = 0.0;
  r.lhs = -std::numeric_limits<double>::infinity();
  r.rhs = -std::numeric_limits<double>::infinity();
  for (int m = 1; m <= n; ++m) {
    for (int l = 0; l < N; ++l) {
      const double v = a[static_cast<std::size_t>((m - 1) * N + l)];
      lane[static_cast<std::size_t>(l)] += v;
      total += v;
    }
    if (m < first || m > last) continue;
    r.lhs = std::max(r.lhs, total / (static_cast<double>(m) * N));
    for (int l = 0; l < N; ++l) r.rhs = std::max(r.rhs, lane[static_cast<std::size_t>(l)] / m);
  }
  r.holds = r.lhs <= r.rhs + 1e-12;
  return r;
}

// ---------------------------------------------------------------------------
// Expansion bound along DA orbits

/// n lambda^c_n against the pointwise lower bounds built from |J_V|.
struct CenterBoundRecord {
  int n = 0;
  int visits = 0;              // |J_V| among j = 0..n-1
  double log_center = 0.0;     // n lambda^c_n
  double bound_log3 = 0.0;     // (n - |J_V|) log 3 + |J_V| log(1 - beta)
  double bound_eta = 0.0;      // (n - |J_V|) log eta_c + |J_V| log(1 - beta)
};

template <int D>
CenterBoundRecord center_bound(const ExponentSeries<D>& ex, const OccupationStats<D>& occ, int n, double beta,
                               double eta_c) {
  CenterBoundRecord r;
  r.n = n;
  r.visits = occ.visits[static_cast<std::size_t>(n - 1)];
  r.log_center = n * ex.values[static_cast<std::size_t>(n - 1)];
  r.bound_log3 = (n - r.visits) * std::log(3.0) + r.visits * std::log(1.0 - beta);
  r.bound_eta = (n - r.visits) * std::log(eta_c) + r.visits * std::log(1.0 - beta);
  return r;
}

}  // namespace phdyn
