#pragma once

// Finite-time estimates of the invariant splitting E^s + E^c + E^u along
// orbits, restricted expansion rates, partial-hyperbolicity certificates and
// QR Lyapunov spectra.
//
// The workhorse is `split_orbit`: the orbit is padded backward and forward,
// a (c+u)-frame is pushed forward with re-orthonormalization (its leading u
// columns converge to E^u, its span to E^cu) and an (s+c)-frame is pulled
// back with Df^-1 (leading s columns give E^s, the span gives E^cs). The
// center bundle is the intersection E^cu n E^cs.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <vector>

#include "phdyn/torus.hpp"

namespace phdyn {

/// Column-orthonormal D x k matrix with k <= D, stored without heap traffic.
template <int D>
using Frame = Eigen::Matrix<double, D, Eigen::Dynamic, 0, D, D>;
using SmallMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 4, 4>;

/// Modified Gram-Schmidt, applied twice. Returns the orthonormal factor and
/// writes log|R_ii| to `logdiag` when provided.
template <int D>
Frame<D> orthonormalize(const Frame<D>& a, double* logdiag = nullptr) {
  Frame<D> q = a;
  const int k = static_cast<int>(a.cols());
  std::array<double, D> norms{};
  for (int j = 0; j < k; ++j) {
    for (int pass = 0; pass < 2; ++pass)
      for (int i = 0; i < j; ++i) q.col(j) -= q.col(i).dot(q.col(j)) * q.col(i);
    const double nrm = q.col(j).norm();
    if (!(nrm > 0.0) || !std::isfinite(nrm)) throw NumericalError("degenerate frame during QR");
    q.col(j) /= nrm;
    norms[static_cast<std::size_t>(j)] = nrm;
  }
  if (logdiag) {
    // Projections against earlier columns do not change the diagonal of R
    // beyond the second pass, so the recorded norms are the |R_ii|.
    for (int j = 0; j < k; ++j) logdiag[j] = std::log(norms[static_cast<std::size_t>(j)]);
  }
  return q;
}

/// Deterministic generic D x k frame (identity columns can coincide with an
/// invariant direction, e.g. e_x for block maps).
template <int D>
Frame<D> generic_frame(int k) {
  Frame<D> a(D, k);
  for (int i = 0; i < D; ++i)
    for (int j = 0; j < k; ++j) a(i, j) = std::sin(1.0 + 1.7 * i + 2.3 * j + 0.37 * i * j) + (i == j ? 0.5 : 0.0);
  return orthonormalize<D>(a);
}

/// Sine of the largest principal angle between span(a) and span(b); both
/// must be orthonormal with the same column count.
template <int D>
double subspace_sine(const Frame<D>& a, const Frame<D>& b) {
  const Frame<D> r = a - b * (b.transpose() * a);
  if (r.cols() == 1) return std::min(1.0, r.norm());
  const SmallMat g = r.transpose() * r;
  Eigen::SelfAdjointEigenSolver<SmallMat> es(g);
  return std::sqrt(std::clamp(es.eigenvalues().maxCoeff(), 0.0, 1.0));
}

/// Make the sign of a 1-D frame reproducible: largest component positive.
template <int D>
void canonical_sign(Frame<D>& f) {
  for (int j = 0; j < f.cols(); ++j) {
    int big = 0;
    f.col(j).cwiseAbs().maxCoeff(&big);
    if (f(big, j) < 0.0) f.col(j) = -f.col(j);
  }
}

template <int D>
struct SplittingFrame {
  TorusPoint<D> at;
  Frame<D> basis_s;
  Frame<D> basis_c;
  Frame<D> basis_u;
  double residual = std::numeric_limits<double>::quiet_NaN();
  bool reliable = false;

  const Frame<D>& bundle(char which) const {
    switch (which) {
      case 's': return basis_s;
      case 'c': return basis_c;
      case 'u': return basis_u;
      default: throw InvalidArgument("bundle must be one of s, c, u");
    }
  }
};

inline constexpr double kResidualThreshold = 1e-6;

/// Frames along x_0 = x, ..., x_n together with one-step residuals.
template <int D>
struct OrbitSplitting {
  std::vector<SplittingFrame<D>> frames;  // size n + 1
  std::vector<Mat<D>> jacobians;          // Df(x_j), size n + 1

  std::size_t size() const { return frames.size(); }
  bool reliable() const {
    return std::all_of(frames.begin(), frames.end(), [](const auto& f) { return f.reliable; });
  }
  double max_residual() const {
    double r = 0.0;
    for (const auto& f : frames) r = std::max(r, f.residual);
    return r;
  }
  /// First index with an unreliable frame, or size() if none.
  std::size_t first_unreliable() const {
    for (std::size_t j = 0; j < frames.size(); ++j)
      if (!frames[j].reliable) return j;
    return frames.size();
  }
};

namespace detail {

/// E^cu n E^cs for orthonormal frames; the result is orthonormal with c columns.
template <int D>
Frame<D> intersect(const Frame<D>& cu, const Frame<D>& cs, int c) {
  const Frame<D> n = cs * (cs.transpose() * cu);
  const Frame<D> perp = cu - n;
  const SmallMat g = perp.transpose() * perp;
  Eigen::SelfAdjointEigenSolver<SmallMat> es(g);
  // Eigenvalues ascend; the c smallest span the coefficients of the intersection.
  Frame<D> out(D, c);
  for (int j = 0; j < c; ++j) out.col(j) = cu * es.eigenvectors().col(j);
  out = orthonormalize<D>(out);
  canonical_sign<D>(out);
  return out;
}

}  // namespace detail

/// Estimate the splitting at x_0..x_n of the orbit of x. `pad` is the number
/// of extra steps used on each side for frame convergence.
template <int D>
OrbitSplitting<D> split_orbit(const System<D>& f, const TorusPoint<D>& x, int n, int pad = 60) {
  if (n < 0) throw InvalidArgument("orbit length must be non-negative");
  if (pad < 1) throw InvalidArgument("pad must be at least 1");
  const BundleDims dm = f.dims();
  if (dm.total() != D || dm.s < 1 || dm.c < 1 || dm.u < 1)
    throw InvalidArgument("declared bundle dimensions do not fit the phase space");

  // Orbit z_0 .. z_{total-1} with x at index pad; one extra point after x_n is
  // used for the residual at x_n.
  const int total = 2 * pad + n + 2;
  std::vector<TorusPoint<D>> z(static_cast<std::size_t>(total));
  z[static_cast<std::size_t>(pad)] = x;
  for (int k = pad - 1; k >= 0; --k)
    z[static_cast<std::size_t>(k)] = f.inverse(z[static_cast<std::size_t>(k + 1)]);
  for (int k = pad + 1; k < total; ++k)
    z[static_cast<std::size_t>(k)] = f.apply(z[static_cast<std::size_t>(k - 1)]);

  std::vector<Mat<D>> jac(static_cast<std::size_t>(total));
  for (int k = 0; k < total; ++k) jac[static_cast<std::size_t>(k)] = f.jacobian(z[static_cast<std::size_t>(k)]);

  const int lo = pad;           // first stored index
  const int hi = pad + n + 1;   // last stored index (one past x_n)
  const int count = hi - lo + 1;
  std::vector<Frame<D>> cu(static_cast<std::size_t>(count));
  std::vector<Frame<D>> cs(static_cast<std::size_t>(count));

  Frame<D> q = generic_frame<D>(dm.c + dm.u);
  for (int k = 0; k <= hi; ++k) {
    if (k >= lo) cu[static_cast<std::size_t>(k - lo)] = q;
    if (k < hi) q = orthonormalize<D>(jac[static_cast<std::size_t>(k)] * q);
  }
  Frame<D> r = generic_frame<D>(dm.s + dm.c);
  for (int k = total - 1; k >= lo; --k) {
    if (k <= hi) cs[static_cast<std::size_t>(k - lo)] = r;
    if (k > lo) r = orthonormalize<D>(jac[static_cast<std::size_t>(k - 1)].partialPivLu().solve(r));
  }

  std::vector<SplittingFrame<D>> all(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    auto& fr = all[static_cast<std::size_t>(i)];
    fr.at = z[static_cast<std::size_t>(lo + i)];
    const auto& a = cu[static_cast<std::size_t>(i)];
    const auto& b = cs[static_cast<std::size_t>(i)];
    fr.basis_u = a.leftCols(dm.u);
    fr.basis_s = b.leftCols(dm.s);
    fr.basis_c = detail::intersect<D>(a, b, dm.c);
    if (dm.u == 1) canonical_sign<D>(fr.basis_u);
    if (dm.s == 1) canonical_sign<D>(fr.basis_s);
  }

  OrbitSplitting<D> out;
  out.frames.assign(all.begin(), all.end() - 1);
  out.jacobians.assign(jac.begin() + lo, jac.begin() + lo + n + 1);
  for (int i = 0; i <= n; ++i) {
    auto& fr = out.frames[static_cast<std::size_t>(i)];
    const auto& next = all[static_cast<std::size_t>(i + 1)];
    const Mat<D>& j = out.jacobians[static_cast<std::size_t>(i)];
    double res = 0.0;
    for (char b : {'s', 'c', 'u'}) {
      const Frame<D> img = orthonormalize<D>(j * fr.bundle(b));
      res = std::max(res, subspace_sine<D>(img, next.bundle(b)));
    }
    fr.residual = res;
    fr.reliable = std::isfinite(res) && res < kResidualThreshold;
  }
  return out;
}

/// E^u at x: pull x back n steps, then push a generic u-frame forward n steps.
template <int D>
Frame<D> estimate_unstable(const System<D>& f, const TorusPoint<D>& x, int n) {
  if (n < 1) throw InvalidArgument("n must be at least 1");
  const int u = f.dims().u;
  std::vector<TorusPoint<D>> back(static_cast<std::size_t>(n + 1));
  back[0] = x;
  for (int k = 1; k <= n; ++k) back[static_cast<std::size_t>(k)] = f.inverse(back[static_cast<std::size_t>(k - 1)]);
  Frame<D> q = generic_frame<D>(u);
  for (int k = n; k >= 1; --k) q = orthonormalize<D>(f.jacobian(back[static_cast<std::size_t>(k)]) * q);
  if (u == 1) canonical_sign<D>(q);
  return q;
}

/// E^s at x: the unstable estimate of the inverse dynamics.
template <int D>
Frame<D> estimate_stable(const System<D>& f, const TorusPoint<D>& x, int n) {
  if (n < 1) throw InvalidArgument("n must be at least 1");
  const int s = f.dims().s;
  std::vector<TorusPoint<D>> fwd(static_cast<std::size_t>(n + 1));
  fwd[0] = x;
  for (int k = 1; k <= n; ++k) fwd[static_cast<std::size_t>(k)] = f.apply(fwd[static_cast<std::size_t>(k - 1)]);
  Frame<D> q = generic_frame<D>(s);
  for (int k = n; k >= 1; --k)
    q = orthonormalize<D>(f.jacobian(fwd[static_cast<std::size_t>(k - 1)]).partialPivLu().solve(q));
  if (s == 1) canonical_sign<D>(q);
  return q;
}

/// Splitting at a single point, using `n` steps of convergence on each side.
template <int D>
SplittingFrame<D> estimate_splitting(const System<D>& f, const TorusPoint<D>& x, int n = 60) {
  return split_orbit<D>(f, x, 0, n).frames.front();
}

/// Like estimate_splitting, but throws when the frame is flagged unreliable.
template <int D>
SplittingFrame<D> require_splitting(const System<D>& f, const TorusPoint<D>& x, int n = 60) {
  auto fr = estimate_splitting<D>(f, x, n);
  if (!fr.reliable) {
    std::ostringstream os;
    os << "unreliable splitting (residual " << fr.residual << ")";
    throw NumericalError(os.str(), fr.residual);
  }
  return fr;
}

/// Restricted one-step map B_{j+1}^T Df(x_j) B_j of bundle `b` at step j.
template <int D>
SmallMat restricted_step(const OrbitSplitting<D>& orb, const Frame<D>& next, std::size_t j, char b) {
  const Frame<D>& cur = orb.frames[j].bundle(b);
  return next.transpose() * orb.jacobians[j] * cur;
}

/// log m and log norm of Df^k restricted to a bundle, for k = 1..n.
struct BundleRates {
  std::vector<double> log_m;     // index k-1 holds the k-step value
  std::vector<double> log_norm;

  double m() const { return std::exp(log_m.back()); }
  double norm() const { return std::exp(log_norm.back()); }
};

/// Cumulative rates along an orbit splitting. The one-step maps between
/// consecutive frames are multiplied with renormalization, so the cumulative
/// logs stay finite over long horizons.
template <int D>
BundleRates cumulative_rates(const OrbitSplitting<D>& orb, char b, int n) {
  if (n < 1 || static_cast<std::size_t>(n) + 1 > orb.size())
    throw InvalidArgument("orbit splitting is too short for the requested horizon");
  BundleRates r;
  r.log_m.reserve(static_cast<std::size_t>(n));
  r.log_norm.reserve(static_cast<std::size_t>(n));
  const int k = static_cast<int>(orb.frames[0].bundle(b).cols());
  if (k == 1) {
    double acc = 0.0;
    for (int j = 0; j < n; ++j) {
      const auto& cur = orb.frames[static_cast<std::size_t>(j)].bundle(b);
      const Vec<D> img = orb.jacobians[static_cast<std::size_t>(j)] * cur.col(0);
      acc += std::log(img.norm());
      r.log_m.push_back(acc);
      r.log_norm.push_back(acc);
    }
    return r;
  }
  SmallMat p = SmallMat::Identity(k, k);
  double scale = 0.0;
  for (int j = 0; j < n; ++j) {
    const auto& next = orb.frames[static_cast<std::size_t>(j + 1)].bundle(b);
    p = restricted_step<D>(orb, next, static_cast<std::size_t>(j), b) * p;
    const double nrm = p.norm();
    p /= nrm;
    scale += std::log(nrm);
    Eigen::JacobiSVD<SmallMat> svd(p);
    const auto& sv = svd.singularValues();
    r.log_norm.push_back(scale + std::log(sv(0)));
    r.log_m.push_back(scale + std::log(sv(sv.size() - 1)));
  }
  return r;
}

struct RatePair {
  double m = 0.0;
  double norm = 0.0;
};

struct RestrictedRates {
  RatePair s, c, u;
  bool reliable = true;
  std::size_t first_unreliable = 0;  // orbit index of the first flagged frame
};

/// n-step restricted rates m(Df^n|E) and ||Df^n|E|| from x, with the frame
/// re-estimated at each orbit point.
template <int D>
RestrictedRates restricted_rates(const System<D>& f, const TorusPoint<D>& x, int n, int pad = 60) {
  if (n < 1) throw InvalidArgument("n must be at least 1");
  const auto orb = split_orbit<D>(f, x, n, pad);
  RestrictedRates out;
  out.first_unreliable = orb.first_unreliable();
  out.reliable = out.first_unreliable == orb.size();
  auto fill = [&](char b, RatePair& p) {
    const auto r = cumulative_rates<D>(orb, b, n);
    p.m = r.m();
    p.norm = r.norm();
  };
  fill('s', out.s);
  fill('c', out.c);
  fill('u', out.u);
  return out;
}

template <int D>
RestrictedRates restricted_rates(const System<D>& f, const SplittingFrame<D>& frame, int n, int pad = 60) {
  return restricted_rates<D>(f, frame.at, n, pad);
}

struct PHCertificate {
  double lambda1 = 0, mu1 = 0, lambda2 = 0, mu2 = 0, lambda3 = 0, mu3 = 0;
  double C = 1.0;
  int n_checked = 0;
  int horizon = 0;
  double max_residual = 0.0;

  bool chain_holds() const {
    return lambda1 <= mu1 && mu1 < lambda2 && lambda2 <= mu2 && mu2 < lambda3 && lambda3 <= mu3 &&
           mu1 < 1.0 && 1.0 < lambda3;
  }
};

/// Cell-centered lattice of grid^D points (coordinate 0 of interval domains
/// uses the same centers, which stay inside (0,1)).
template <int D>
std::vector<TorusPoint<D>> lattice(int grid, bool interval_first = false) {
  if (grid < 1) throw InvalidArgument("grid must be at least 1");
  std::vector<TorusPoint<D>> pts;
  std::size_t total = 1;
  for (int i = 0; i < D; ++i) total *= static_cast<std::size_t>(grid);
  pts.reserve(total);
  for (std::size_t idx = 0; idx < total; ++idx) {
    Vec<D> v;
    std::size_t rem = idx;
    for (int i = D - 1; i >= 0; --i) {
      v[i] = (static_cast<double>(rem % static_cast<std::size_t>(grid)) + 0.5) / grid;
      rem /= static_cast<std::size_t>(grid);
    }
    pts.push_back(TorusPoint<D>::wrap(v, interval_first));
  }
  return pts;
}

/// Rates of a single certificate sample point, kept for reductions.
struct PHSample {
  std::array<std::vector<double>, 3> log_m;     // s, c, u cumulative
  std::array<std::vector<double>, 3> log_norm;
  double residual = 0.0;
  bool reliable = true;
};

template <int D>
PHSample ph_sample(const System<D>& f, const TorusPoint<D>& x, int n, int pad) {
  const auto orb = split_orbit<D>(f, x, n, pad);
  PHSample s;
  s.residual = orb.max_residual();
  s.reliable = orb.reliable();
  const char names[3] = {'s', 'c', 'u'};
  for (int b = 0; b < 3; ++b) {
    auto r = cumulative_rates<D>(orb, names[b], n);
    s.log_m[static_cast<std::size_t>(b)] = std::move(r.log_m);
    s.log_norm[static_cast<std::size_t>(b)] = std::move(r.log_norm);
  }
  return s;
}

/// Reduce per-point samples (in lattice order) into a certificate. Throws
/// NumericalError naming the offending point when a frame is unreliable or
/// the rate chain is violated.
template <int D>
PHCertificate reduce_certificate(const std::vector<TorusPoint<D>>& pts, const std::vector<PHSample>& samples,
                                 int n) {
  PHCertificate cert;
  cert.horizon = n;
  cert.n_checked = static_cast<int>(pts.size());
  double lam[3], mu[3];
  for (int b = 0; b < 3; ++b) {
    lam[b] = std::numeric_limits<double>::infinity();
    mu[b] = -std::numeric_limits<double>::infinity();
  }
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    cert.max_residual = std::max(cert.max_residual, s.residual);
    if (!s.reliable) {
      std::ostringstream os;
      os << "unreliable splitting at sample (" << pts[i].coords().transpose() << "), residual " << s.residual;
      throw NumericalError(os.str(), s.residual);
    }
    for (std::size_t b = 0; b < 3; ++b) {
      lam[b] = std::min(lam[b], std::exp(s.log_m[b].back() / n));
      mu[b] = std::max(mu[b], std::exp(s.log_norm[b].back() / n));
    }
  }
  cert.lambda1 = lam[0];
  cert.mu1 = mu[0];
  cert.lambda2 = lam[1];
  cert.mu2 = mu[1];
  cert.lambda3 = lam[2];
  cert.mu3 = mu[2];
  // Smallest C with C^-1 lambda^k <= m_k and ||.||_k <= C mu^k for every k.
  double logc = 0.0;
  for (const auto& s : samples)
    for (std::size_t b = 0; b < 3; ++b)
      for (std::size_t k = 0; k < s.log_m[b].size(); ++k) {
        const double kk = static_cast<double>(k + 1);
        logc = std::max(logc, kk * std::log(lam[b]) - s.log_m[b][k]);
        logc = std::max(logc, s.log_norm[b][k] - kk * std::log(mu[b]));
      }
  cert.C = std::exp(logc);
  if (!cert.chain_holds()) {
    // Locate a sample that realizes the violated ordering.
    std::size_t worst = 0;
    double gap = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const auto& s = samples[i];
      const double g = std::min(std::exp(s.log_m[1].back() / n) - cert.mu1,
                                std::exp(s.log_m[2].back() / n) - cert.mu2);
      if (g < gap) {
        gap = g;
        worst = i;
      }
    }
    std::ostringstream os;
    os << "partial hyperbolicity chain violated near (" << pts[worst].coords().transpose() << "): rates "
       << cert.lambda1 << ' ' << cert.mu1 << ' ' << cert.lambda2 << ' ' << cert.mu2 << ' ' << cert.lambda3
       << ' ' << cert.mu3;
    throw NumericalError(os.str());
  }
  return cert;
}

/// Serial certificate over a grid^D lattice; parallel drivers call ph_sample
/// and reduce_certificate directly.
template <int D>
PHCertificate certify_ph(const System<D>& f, int grid, int n, int pad = 60) {
  if (n < 1) throw InvalidArgument("n must be at least 1");
  const auto pts = lattice<D>(grid, f.interval_first());
  std::vector<PHSample> samples;
  samples.reserve(pts.size());
  for (const auto& p : pts) samples.push_back(ph_sample<D>(f, p, n, pad));
  return reduce_certificate<D>(pts, samples, n);
}

/// Lyapunov spectrum by QR iteration of a full frame: `warmup` discarded
/// steps, then the average of log|R_ii| over n steps, in descending order.
template <int D>
Vec<D> qr_lyapunov_spectrum(const System<D>& f, const TorusPoint<D>& x0, int n, int warmup = 100) {
  if (n < 1) throw InvalidArgument("n must be at least 1");
  TorusPoint<D> x = x0;
  Frame<D> q = generic_frame<D>(D);
  double diag[D];
  for (int k = 0; k < warmup; ++k) {
    q = orthonormalize<D>(f.jacobian(x) * q);
    x = f.apply(x);
  }
  Vec<D> sums = Vec<D>::Zero();
  for (int k = 0; k < n; ++k) {
    q = orthonormalize<D>(f.jacobian(x) * q, diag);
    for (int i = 0; i < D; ++i) sums[i] += diag[i];
    x = f.apply(x);
  }
  return sums / n;
}

}  // namespace phdyn
