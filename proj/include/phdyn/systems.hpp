#pragma once

// Concrete diffeomorphism families: linear automorphisms, the derived-from-
// Anosov pitchfork deformation on T^3, block maps of [0,1] x T^2 with their
// squeeze/slide gluing, and products of two cat maps on T^4.

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "phdyn/torus.hpp"

namespace phdyn {

template <int D>
using IntMat = Eigen::Matrix<long long, D, D>;

// ---------------------------------------------------------------------------
// Linear automorphisms

template <int D>
struct LinearAnosovSpec {
  IntMat<D> matrix;
  Vec<D> eigenvalues;  // ascending
  Mat<D> eigenbasis;   // unit columns matching `eigenvalues`
};

namespace detail {

template <int D>
IntMat<D> integer_inverse(const IntMat<D>& m) {
  const Mat<D> md = m.template cast<double>();
  const Mat<D> inv = md.inverse();
  IntMat<D> r;
  for (int i = 0; i < D; ++i)
    for (int j = 0; j < D; ++j) r(i, j) = std::llround(inv(i, j));
  if (m * r != IntMat<D>::Identity()) throw InvalidArgument("matrix is not unimodular");
  return r;
}

template <int D>
Vec<D> int_apply(const IntMat<D>& m, const Vec<D>& x) {
  return m.template cast<double>() * x;
}

}  // namespace detail

/// Spectral data of an integer hyperbolic matrix. Rejects matrices with
/// |det| != 1, complex or repeated eigenvalues, or an eigenvalue of modulus 1.
template <int D>
LinearAnosovSpec<D> analyze_linear(const IntMat<D>& m) {
  const Mat<D> md = m.template cast<double>();
  const double det = md.determinant();
  if (std::abs(std::abs(det) - 1.0) > 1e-9) throw InvalidArgument("|det| != 1");
  Eigen::EigenSolver<Mat<D>> es(md);
  const auto ev = es.eigenvalues();
  const auto evec = es.eigenvectors();
  std::array<int, D> order;
  for (int i = 0; i < D; ++i) {
    if (std::abs(ev[i].imag()) > 1e-9) throw InvalidArgument("complex eigenvalue");
    order[static_cast<std::size_t>(i)] = i;
  }
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return ev[a].real() < ev[b].real(); });
  LinearAnosovSpec<D> spec;
  spec.matrix = m;
  for (int k = 0; k < D; ++k) {
    const int i = order[static_cast<std::size_t>(k)];
    spec.eigenvalues[k] = ev[i].real();
    Vec<D> v = evec.col(i).real();
    v.normalize();
    int big = 0;
    v.cwiseAbs().maxCoeff(&big);
    if (v[big] < 0) v = -v;
    spec.eigenbasis.col(k) = v;
  }
  for (int k = 0; k < D; ++k) {
    const double l = spec.eigenvalues[k];
    if (l <= 0.0) throw InvalidArgument("non-positive eigenvalue");
    if (std::abs(std::abs(l) - 1.0) < 1e-9) throw InvalidArgument("eigenvalue of modulus 1");
    if (k > 0 && std::abs(l - spec.eigenvalues[k - 1]) < 1e-9)
      throw InvalidArgument("repeated eigenvalue");
  }
  return spec;
}

/// x -> M x mod 1, with the exact integer inverse.
template <int D>
class LinearMap : public System<D> {
 public:
  LinearMap(const IntMat<D>& m, BundleDims dims, std::string name = "linear")
      : m_(m), minv_(detail::integer_inverse(m)), dims_(dims), name_(std::move(name)) {}

  TorusPoint<D> apply(const TorusPoint<D>& x) const override {
    return TorusPoint<D>::wrap(detail::int_apply(m_, x.coords()));
  }
  Mat<D> jacobian(const TorusPoint<D>&) const override { return m_.template cast<double>(); }
  TorusPoint<D> inverse(const TorusPoint<D>& y) const override {
    return TorusPoint<D>::wrap(detail::int_apply(minv_, y.coords()));
  }
  BundleDims dims() const override { return dims_; }
  std::string name() const override { return name_; }
  nlohmann::json params() const override {
    nlohmann::json rows = nlohmann::json::array();
    for (int i = 0; i < D; ++i) {
      nlohmann::json r = nlohmann::json::array();
      for (int j = 0; j < D; ++j) r.push_back(m_(i, j));
      rows.push_back(r);
    }
    return {{"matrix", rows}};
  }

  const IntMat<D>& matrix() const { return m_; }
  const IntMat<D>& inverse_matrix() const { return minv_; }

 private:
  IntMat<D> m_;
  IntMat<D> minv_;
  BundleDims dims_;
  std::string name_;
};

/// Companion matrix of t^3 - 5t^2 + 6t - 1.
inline IntMat<3> da_seed_matrix() {
  IntMat<3> m;
  m << 0, 0, 1, 1, 0, -6, 0, 1, 5;
  return m;
}

struct LinearT3 {
  std::shared_ptr<const LinearMap<3>> system;
  LinearAnosovSpec<3> spec;
};

inline LinearT3 make_linear_anosov_T3(const IntMat<3>& m = da_seed_matrix()) {
  LinearT3 r;
  r.spec = analyze_linear<3>(m);
  const auto& l = r.spec.eigenvalues;
  if (!(l[0] < 1.0 && l[1] > 1.0) && !(l[0] < 1.0 && l[1] < 1.0 && l[2] > 1.0))
    throw InvalidArgument("matrix is not hyperbolic with a 1-1-1 splitting");
  r.system = std::make_shared<const LinearMap<3>>(m, BundleDims{1, 1, 1}, "linear_anosov_t3");
  return r;
}

/// The chain lambda_s < 1/3 < 1 < lambda_c < 3 < lambda_u required of the DA seed.
inline bool satisfies_da_chain(const Vec<3>& l) {
  return l[0] < 1.0 / 3.0 && 1.0 < l[1] && l[1] < 3.0 && 3.0 < l[2];
}

/// Characteristic polynomial det(tI - m) of an integer 3x3 matrix as the
/// monic coefficients {c0, c1, c2}: t^3 + c2 t^2 + c1 t + c0.
inline std::array<long long, 3> char_poly3(const IntMat<3>& m) {
  const long long tr = m.trace();
  long long minors = 0;
  for (int i = 0; i < 3; ++i)
    for (int j = i + 1; j < 3; ++j) minors += m(i, i) * m(j, j) - m(i, j) * m(j, i);
  const long long det = std::llround(m.cast<double>().determinant());
  return {-det, minors, -tr};
}

inline double eval_poly3(const std::array<long long, 3>& c, double t) {
  return ((t + static_cast<double>(c[2])) * t + static_cast<double>(c[1])) * t + static_cast<double>(c[0]);
}

/// Root of the polynomial in [a, b] by bisection; requires a sign change.
inline std::optional<double> bisect_root3(const std::array<long long, 3>& c, double a, double b, double tol = 1e-14) {
  double fa = eval_poly3(c, a);
  const double fb = eval_poly3(c, b);
  if (fa == 0.0) return a;
  if (fb == 0.0) return b;
  if ((fa < 0) == (fb < 0)) return std::nullopt;
  while (b - a > tol * std::max(1.0, std::abs(a))) {
    const double mid = 0.5 * (a + b);
    const double fm = eval_poly3(c, mid);
    if (fm == 0.0) return mid;
    if ((fm < 0) == (fa < 0)) {
      a = mid;
      fa = fm;
    } else {
      b = mid;
    }
  }
  return 0.5 * (a + b);
}

/// Isolates one root in each of (0, 1/3), (1, 3) and (3, R) by sign changes
/// of the characteristic polynomial, with R a Cauchy bound. A cubic has no
/// other roots, so success proves the DA chain independently of the
/// floating-point eigen-solver.
inline std::optional<Vec<3>> da_chain_by_bisection(const IntMat<3>& m) {
  const auto c = char_poly3(m);
  const double R = 1.0 + std::max({std::abs(static_cast<double>(c[0])), std::abs(static_cast<double>(c[1])),
                                   std::abs(static_cast<double>(c[2]))});
  const auto r0 = bisect_root3(c, 0.0, 1.0 / 3.0);
  const auto r1 = bisect_root3(c, 1.0, 3.0);
  const auto r2 = bisect_root3(c, 3.0, R);
  if (!r0 || !r1 || !r2) return std::nullopt;
  // Endpoints must not be roots themselves, otherwise the chain is not strict.
  if (*r0 <= 0.0 || *r0 >= 1.0 / 3.0 || *r1 <= 1.0 || *r1 >= 3.0 || *r2 <= 3.0) return std::nullopt;
  return Vec<3>(*r0, *r1, *r2);
}

// ---------------------------------------------------------------------------
// Derived-from-Anosov deformation

/// Quintic smoothstep on [0,1] and its derivative.
inline double smoothstep5(double u) {
  u = std::clamp(u, 0.0, 1.0);
  return u * u * u * (10.0 + u * (-15.0 + 6.0 * u));
}
inline double smoothstep5_deriv(double u) {
  if (u <= 0.0 || u >= 1.0) return 0.0;
  return 30.0 * u * u * (1.0 - u) * (1.0 - u);
}

/// rho(r) = 1 - s(2r - 1): equal to 1 on [0,1/2], 0 on [1,inf), C^2.
inline double bump(double r) { return 1.0 - smoothstep5(2.0 * r - 1.0); }
inline double bump_deriv(double r) { return -2.0 * smoothstep5_deriv(2.0 * r - 1.0); }

struct DAParams {
  LinearAnosovSpec<3> base = analyze_linear<3>(da_seed_matrix());
  TorusPoint<3> p0{};
  double delta = 0.2;   // radius of V
  double aspect = 4.0;  // (s,u)-support half-width over the center half-width
  double t = 0.0;
  double beta = 0.25;
  double alpha = 0.6;
  double eta_c = 1.55;
  double L = 0.4;
  double tau0 = 0.7;

  double lambda_c() const { return base.eigenvalues[1]; }
  /// Parameter at which the center eigenvalue of p0 crosses 1.
  double pitchfork_t() const { return lambda_c() - 1.0; }
  /// Half-width of the perturbation support along the center eigen-coordinate.
  double center_halfwidth() const { return delta / (1.0 + std::numbers::sqrt2 * aspect); }
  /// Radius of the perturbation support in the (s,u) eigen-coordinates.
  double su_radius() const { return aspect * center_halfwidth(); }
  /// 3^(1-alpha) (1-beta)^alpha.
  double expansion_lambda() const {
    return std::pow(3.0, 1.0 - alpha) * std::pow(1.0 - beta, alpha);
  }
  double max_t() const { return pitchfork_t() + 0.3; }

  void validate() const {
    if (!satisfies_da_chain(base.eigenvalues))
      throw InvalidArgument("base spectrum violates lambda_s < 1/3 < 1 < lambda_c < 3 < lambda_u");
    if (!(delta > 0.0 && delta < 0.5)) throw InvalidArgument("delta must lie in (0, 1/2)");
    if (!(aspect > 0.0)) throw InvalidArgument("aspect must be positive");
    if (!(t >= 0.0)) throw InvalidArgument("t must be non-negative");
    if (t > max_t() + 1e-12) throw InvalidArgument("t beyond the shipped range [0, t0 + 0.3]");
    if (!(beta > 0.0 && beta < 1.0)) throw InvalidArgument("beta must lie in (0,1)");
    if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("alpha must lie in (0,1)");
    if (!(tau0 > 0.0 && tau0 < 1.0)) throw InvalidArgument("tau0 must lie in (0,1)");
    if (!(eta_c > 1.0)) throw InvalidArgument("eta_c must exceed 1");
    if (eta_c > lambda_c()) throw InvalidArgument("eta_c exceeds lambda_c");
    if (!(expansion_lambda() > 1.0))
      throw InvalidArgument("3^(1-alpha) (1-beta)^alpha must exceed 1");
    const Vec<3> img = detail::int_apply(base.matrix, p0.coords());
    if (distance(TorusPoint<3>::wrap(img), p0) > 1e-12)
      throw InvalidArgument("p0 is not a fixed point of the base map");
  }
};

/// f_t(x) = A x + P(x - p0) v_c, with P supported in a product neighbourhood of
/// p0 (in eigen-coordinates) contained in V = B(p0, delta):
///   P = -t c (1 - (c/w)^2)^3 * rho(|(s,u)| / r).
/// The stable and unstable eigen-coordinates evolve linearly, so E^c = span(v_c)
/// everywhere and the center derivative equals lambda_c + dP/dc.
class DAMap : public System<3> {
 public:
  explicit DAMap(DAParams p)
      : p_(std::move(p)),
        a_(p_.base.matrix.cast<double>()),
        ainv_(detail::integer_inverse(p_.base.matrix)),
        to_eigen_(p_.base.eigenbasis.inverse()),
        vc_(p_.base.eigenbasis.col(1)),
        w_(p_.center_halfwidth()),
        r_(p_.su_radius()) {}

  const DAParams& params_struct() const { return p_; }
  BoxDomain<3> domain() const { return BoxDomain<3>(p_.p0, p_.delta); }

  TorusPoint<3> apply(const TorusPoint<3>& x) const override {
    const Vec<3> d = displacement(p_.p0, x);
    const Vec<3> e = to_eigen_ * d;
    return TorusPoint<3>::wrap(a_ * x.coords() + amplitude(e) * vc_);
  }

  Mat<3> jacobian(const TorusPoint<3>& x) const override {
    const Vec<3> e = to_eigen_ * displacement(p_.p0, x);
    const Eigen::RowVector3d g = eigen_gradient(e).transpose() * to_eigen_;
    return a_ + vc_ * g;
  }

  TorusPoint<3> inverse(const TorusPoint<3>& y) const override {
    const TorusPoint<3> guess = TorusPoint<3>::wrap(detail::int_apply(ainv_, y.coords()));
    if (p_.t == 0.0) return guess;
    return newton_inverse<3>(*this, y, guess, 1e-13);
  }

  BundleDims dims() const override { return {1, 1, 1}; }
  std::string name() const override { return "da"; }
  nlohmann::json params() const override {
    return {{"t", p_.t},         {"delta", p_.delta}, {"aspect", p_.aspect},
            {"beta", p_.beta},   {"alpha", p_.alpha}, {"eta_c", p_.eta_c},
            {"L", p_.L},         {"tau0", p_.tau0},
            {"p0", {p_.p0[0], p_.p0[1], p_.p0[2]}}};
  }

  /// |Df restricted to E^c| at x (E^c is the center eigendirection).
  double center_derivative(const TorusPoint<3>& x) const {
    const Vec<3> e = to_eigen_ * displacement(p_.p0, x);
    return std::abs(p_.lambda_c() + eigen_gradient(e)[1]);
  }

  /// Center coordinate profile restricted to the center leaf through p0:
  /// s -> lambda_c s + P(0, s, 0).
  double center_leaf_map(double s) const {
    return p_.lambda_c() * s + amplitude(Vec<3>(0.0, s, 0.0));
  }
  double center_leaf_deriv(double s) const {
    return p_.lambda_c() + eigen_gradient(Vec<3>(0.0, s, 0.0))[1];
  }

  struct FixedPoint {
    double s;  // center coordinate relative to p0
    TorusPoint<3> point;
    double center_derivative;
  };

  /// Fixed points on the center leaf through p0 inside the perturbation
  /// support, by sign-change scan plus bisection on s -> map(s) - s.
  std::vector<FixedPoint> center_leaf_fixed_points(int scan = 4000) const {
    auto h = [&](double s) { return center_leaf_map(s) - s; };
    std::vector<FixedPoint> out;
    const double lo = -w_ * 0.999999;
    const double hi = w_ * 0.999999;
    double prev_s = lo;
    double prev_h = h(lo);
    auto record = [&](double s) {
      FixedPoint fp;
      fp.s = s;
      fp.point = TorusPoint<3>::wrap(p_.p0.coords() + s * vc_);
      fp.center_derivative = center_leaf_deriv(s);
      out.push_back(fp);
    };
    for (int i = 1; i <= scan; ++i) {
      const double s = lo + (hi - lo) * i / scan;
      const double hs = h(s);
      if (hs == 0.0) {
        record(s);
      } else if (prev_h != 0.0 && (hs > 0.0) != (prev_h > 0.0)) {
        double a = prev_s, b = s, ha = prev_h;
        for (int it = 0; it < 200 && b - a > 1e-16; ++it) {
          const double m = 0.5 * (a + b);
          const double hm = h(m);
          if (hm == 0.0) {
            a = b = m;
            break;
          }
          if ((hm > 0.0) == (ha > 0.0)) {
            a = m;
            ha = hm;
          } else {
            b = m;
          }
        }
        record(0.5 * (a + b));
      }
      prev_s = s;
      prev_h = hs;
    }
    return out;
  }

 private:
  double amplitude(const Vec<3>& e) const {
    const double c = e[1];
    if (std::abs(c) >= w_) return 0.0;
    const double rsu = std::hypot(e[0], e[2]) / r_;
    if (rsu >= 1.0) return 0.0;
    const double q = 1.0 - (c / w_) * (c / w_);
    return -p_.t * c * q * q * q * bump(rsu);
  }

  /// Gradient of the amplitude in eigen-coordinates (s, c, u).
  Vec<3> eigen_gradient(const Vec<3>& e) const {
    const double c = e[1];
    if (std::abs(c) >= w_) return Vec<3>::Zero();
    const double rr = std::hypot(e[0], e[2]);
    const double rsu = rr / r_;
    if (rsu >= 1.0) return Vec<3>::Zero();
    const double z = (c / w_) * (c / w_);
    const double q = 1.0 - z;
    const double pc = -p_.t * c * q * q * q;
    const double dpc = -p_.t * q * q * (1.0 - 7.0 * z);
    const double rho = bump(rsu);
    Vec<3> g;
    g[1] = dpc * rho;
    if (rr > 0.0) {
      const double dr = bump_deriv(rsu) / r_;
      g[0] = pc * dr * e[0] / rr;
      g[2] = pc * dr * e[2] / rr;
    } else {
      g[0] = g[2] = 0.0;
    }
    return g;
  }

  DAParams p_;
  Mat<3> a_;
  IntMat<3> ainv_;
  Mat<3> to_eigen_;
  Vec<3> vc_;
  double w_;
  double r_;
};

/// Smallest singular value of Df over a grid^3 lattice of cell centers.
inline double min_jacobian_conorm(const System<3>& f, int grid) {
  double m = std::numeric_limits<double>::infinity();
  for (int i = 0; i < grid; ++i)
    for (int j = 0; j < grid; ++j)
      for (int k = 0; k < grid; ++k) {
        const Vec<3> c((i + 0.5) / grid, (j + 0.5) / grid, (k + 0.5) / grid);
        m = std::min(m, min_conorm(f.jacobian(TorusPoint<3>::wrap(c))));
      }
  return m;
}

/// Build f_t; rejects parameter sets that fail validation or the 40^3
/// injectivity sweep (min singular value of Df_t > 0.01 on the lattice and on
/// a dense lattice of V).
inline std::shared_ptr<const DAMap> make_da(const DAParams& p) {
  p.validate();
  auto f = std::make_shared<const DAMap>(p);
  double m = min_jacobian_conorm(*f, 40);
  const int n = 24;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) {
        const Vec<3> d = p.delta * Vec<3>(2.0 * (i + 0.5) / n - 1.0, 2.0 * (j + 0.5) / n - 1.0,
                                          2.0 * (k + 0.5) / n - 1.0);
        m = std::min(m, min_conorm(f->jacobian(translate(p.p0, d))));
      }
  if (!(m > 0.01)) {
    std::ostringstream os;
    os << "DA map fails the injectivity sweep (min singular value " << m << ")";
    throw InvalidArgument(os.str());
  }
  return f;
}

/// DA parameters at t = t0 + offset with everything else at the shipped defaults.
inline DAParams da_params_at_offset(double offset) {
  DAParams p;
  p.t = p.pitchfork_t() + offset;
  return p;
}

// ---------------------------------------------------------------------------
// Block maps of [0,1] x T^2 and their gluing

/// L_{lambda,tau}(x,y,z) = (lambda x + tau, y, z).
inline Vec<3> l_squeeze(double lambda, double tau, const Vec<3>& p) {
  return Vec<3>(lambda * p[0] + tau, p[1], p[2]);
}
inline Vec<3> l_squeeze_inverse(double lambda, double tau, const Vec<3>& p) {
  return Vec<3>((p[0] - tau) / lambda, p[1], p[2]);
}

inline void check_cat_matrix(const IntMat<2>& a) {
  const auto spec = analyze_linear<2>(a);
  if (!(spec.eigenvalues[0] < 1.0 && spec.eigenvalues[1] > 1.0))
    throw InvalidArgument("2x2 matrix is not hyperbolic");
}

/// A diffeomorphism of [0,1] x T^2 that fixes both boundary tori and acts on
/// them by a linear Anosov map of T^2.
class BlockMap : public System<3> {
 public:
  bool interval_first() const override { return true; }
  BundleDims dims() const override { return {1, 1, 1}; }

  /// The 2x2 matrix acting on the boundary tori.
  virtual const IntMat<2>& base_matrix() const = 0;
  /// Same base action with the center (fiber) dynamics reversed.
  virtual std::shared_ptr<const BlockMap> center_reversed() const = 0;
  /// True when the x coordinate is left untouched everywhere (F = I x A).
  virtual bool fiber_identity() const { return false; }
};

/// g(x,y,z) = (x + kappa sin(2 pi x)(bias + cos(2 pi y)), A(y,z)), or, when
/// reversed, the same base with the inverse fiber map x -> h_y^{-1}(x).
class SurrogateBlock : public BlockMap {
 public:
  SurrogateBlock(double kappa, const IntMat<2>& a, double bias, bool reversed = false)
      : kappa_(kappa), bias_(bias), reversed_(reversed), a_(a), ainv_(detail::integer_inverse(a)) {
    check_cat_matrix(a);
    if (!(kappa >= 0.0)) throw InvalidArgument("kappa must be non-negative");
    if (!(1.0 - kTwoPi * kappa * (std::abs(bias) + 1.0) > 0.0))
      throw InvalidArgument("kappa too large: fiber map not injective");
  }

  double kappa() const { return kappa_; }
  double bias() const { return bias_; }
  bool reversed() const { return reversed_; }

  TorusPoint<3> apply(const TorusPoint<3>& p) const override {
    const double x = reversed_ ? fiber_inverse(p[0], p[1]) : fiber(p[0], p[1]);
    return make(x, base(p));
  }

  Mat<3> jacobian(const TorusPoint<3>& p) const override {
    Mat<3> j = Mat<3>::Zero();
    j.block<2, 2>(1, 1) = a_.cast<double>();
    if (!reversed_) {
      j(0, 0) = fiber_dx(p[0], p[1]);
      j(0, 1) = fiber_dy(p[0], p[1]);
    } else {
      const double u = fiber_inverse(p[0], p[1]);
      const double hx = fiber_dx(u, p[1]);
      j(0, 0) = 1.0 / hx;
      j(0, 1) = -fiber_dy(u, p[1]) / hx;
    }
    return j;
  }

  TorusPoint<3> inverse(const TorusPoint<3>& q) const override {
    const Vec<2> yz = ainv_.cast<double>() * Vec<2>(q[1], q[2]);
    const double y = wrap_unit(yz[0]);
    const double x = reversed_ ? fiber(q[0], y) : fiber_inverse(q[0], y);
    return make(x, Vec<2>(y, wrap_unit(yz[1])));
  }

  std::string name() const override { return "surrogate_block"; }
  nlohmann::json params() const override {
    return {{"kappa", kappa_},
            {"bias", bias_},
            {"reversed", reversed_},
            {"matrix", {{a_(0, 0), a_(0, 1)}, {a_(1, 0), a_(1, 1)}}}};
  }
  const IntMat<2>& base_matrix() const override { return a_; }
  std::shared_ptr<const BlockMap> center_reversed() const override {
    return std::make_shared<const SurrogateBlock>(kappa_, a_, bias_, !reversed_);
  }
  bool fiber_identity() const override { return kappa_ == 0.0; }

  /// h_y(x) and its partial derivatives.
  double fiber(double x, double y) const {
    return x + kappa_ * std::sin(kTwoPi * x) * (bias_ + std::cos(kTwoPi * y));
  }
  double fiber_dx(double x, double y) const {
    return 1.0 + kTwoPi * kappa_ * std::cos(kTwoPi * x) * (bias_ + std::cos(kTwoPi * y));
  }
  double fiber_dy(double x, double y) const {
    return -kTwoPi * kappa_ * std::sin(kTwoPi * x) * std::sin(kTwoPi * y);
  }
  /// h_y^{-1}(x) on [0,1]; h_y is strictly increasing and fixes 0, 1/2, 1.
  double fiber_inverse(double x, double y) const {
    if (kappa_ == 0.0 || x <= 0.0 || x >= 1.0) return x;
    double a = 0.0, b = 1.0;
    double u = x;
    for (int it = 0; it < 60; ++it) {
      const double r = fiber(u, y) - x;
      if (r > 0.0) b = std::min(b, u); else a = std::max(a, u);
      if (std::abs(r) < 1e-16) break;
      double next = u - r / fiber_dx(u, y);
      if (!(next > a && next < b)) next = 0.5 * (a + b);
      if (next == u) break;
      u = next;
    }
    return std::clamp(u, 0.0, 1.0);
  }

 private:
  Vec<2> base(const TorusPoint<3>& p) const {
    const Vec<2> yz = a_.cast<double>() * Vec<2>(p[1], p[2]);
    return Vec<2>(wrap_unit(yz[0]), wrap_unit(yz[1]));
  }
  static TorusPoint<3> make(double x, const Vec<2>& yz) {
    return TorusPoint<3>::wrap(Vec<3>(x, yz[0], yz[1]), true);
  }

  double kappa_;
  double bias_;
  bool reversed_;
  IntMat<2> a_;
  IntMat<2> ainv_;
};

inline IntMat<2> cat_matrix() {
  IntMat<2> a;
  a << 2, 1, 1, 1;
  return a;
}

inline std::shared_ptr<const SurrogateBlock> make_surrogate_block(double kappa,
                                                                  const IntMat<2>& a = cat_matrix(),
                                                                  double bias = 0.5) {
  return std::make_shared<const SurrogateBlock>(kappa, a, bias);
}

struct BlockSpec {
  std::shared_ptr<const BlockMap> block_map;
  double lambda = 1.0;
  double tau = 0.0;
  bool inverted = false;
};

/// f restricted to [tau_i, tau_i + lambda_i) x T^2 equals L o g_i o L^{-1}.
class GluedMap : public System<3> {
 public:
  explicit GluedMap(std::vector<BlockSpec> blocks) : blocks_(std::move(blocks)) {
    if (blocks_.empty()) throw InvalidArgument("gluing needs at least one block");
    std::sort(blocks_.begin(), blocks_.end(),
              [](const BlockSpec& a, const BlockSpec& b) { return a.tau < b.tau; });
    double edge = 0.0;
    for (auto& b : blocks_) {
      if (!b.block_map) throw InvalidArgument("null block map");
      if (!(b.lambda > 0.0 && b.lambda <= 1.0)) throw InvalidArgument("block lambda outside (0,1]");
      if (!(b.tau >= 0.0 && b.tau <= 1.0 - b.lambda + 1e-12))
        throw InvalidArgument("block tau outside [0, 1 - lambda]");
      if (std::abs(b.tau - edge) > 1e-12)
        throw InvalidArgument("block intervals must be disjoint and cover [0,1)");
      edge = b.tau + b.lambda;
      if (b.inverted) b.block_map = b.block_map->center_reversed();
    }
    if (std::abs(edge - 1.0) > 1e-12)
      throw InvalidArgument("block intervals must be disjoint and cover [0,1)");
    check_boundaries();
  }

  const std::vector<BlockSpec>& blocks() const { return blocks_; }

  /// Index of the block whose interval contains x in [0,1).
  std::size_t block_index(double x) const {
    for (std::size_t i = blocks_.size(); i-- > 0;)
      if (x >= blocks_[i].tau) return i;
    return 0;
  }

  TorusPoint<3> apply(const TorusPoint<3>& p) const override {
    const BlockSpec& b = blocks_[block_index(p[0])];
    const auto q = b.block_map->apply(local(b, p));
    const double x = b.block_map->fiber_identity() ? p[0] : b.tau + b.lambda * q[0];
    return TorusPoint<3>::wrap(Vec<3>(x, q[1], q[2]));
  }

  Mat<3> jacobian(const TorusPoint<3>& p) const override {
    const BlockSpec& b = blocks_[block_index(p[0])];
    Mat<3> j = b.block_map->jacobian(local(b, p));
    j(0, 1) *= b.lambda;
    j(0, 2) *= b.lambda;
    j(1, 0) /= b.lambda;
    j(2, 0) /= b.lambda;
    return j;
  }

  TorusPoint<3> inverse(const TorusPoint<3>& p) const override {
    const BlockSpec& b = blocks_[block_index(p[0])];
    const auto q = b.block_map->inverse(local(b, p));
    const double x = b.block_map->fiber_identity() ? p[0] : b.tau + b.lambda * q[0];
    return TorusPoint<3>::wrap(Vec<3>(x, q[1], q[2]));
  }

  BundleDims dims() const override { return {1, 1, 1}; }
  std::string name() const override { return "glued"; }
  nlohmann::json params() const override {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& b : blocks_)
      arr.push_back({{"lambda", b.lambda}, {"tau", b.tau}, {"block", b.block_map->params()}});
    return {{"blocks", arr}};
  }

 private:
  static TorusPoint<3> local(const BlockSpec& b, const TorusPoint<3>& p) {
    const double u = std::clamp((p[0] - b.tau) / b.lambda, 0.0, 1.0);
    return TorusPoint<3>::wrap(Vec<3>(u, p[1], p[2]), true);
  }

  void check_boundaries() const {
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      const auto& left = blocks_[i];
      const auto& right = blocks_[(i + 1) % blocks_.size()];
      for (int s = 0; s < 100; ++s) {
        const double y = wrap_unit(0.1234 + s * 0.6180339887498949);
        const double z = wrap_unit(0.4321 + s * 0.4142135623730950);
        const auto a = left.block_map->apply(TorusPoint<3>::wrap(Vec<3>(1.0, y, z), true));
        const auto c = right.block_map->apply(TorusPoint<3>::wrap(Vec<3>(0.0, y, z), true));
        const bool fixes = std::abs(a[0] - 1.0) < 1e-12 && std::abs(c[0]) < 1e-12;
        const double dyz = std::hypot(wrap_diff(a[1] - c[1]), wrap_diff(a[2] - c[2]));
        if (!fixes || dyz > 1e-12)
          throw InvalidArgument("adjacent blocks have mismatched boundary maps");
      }
    }
  }

  std::vector<BlockSpec> blocks_;
};

inline std::shared_ptr<const GluedMap> make_glued(std::vector<BlockSpec> blocks) {
  return std::make_shared<const GluedMap>(std::move(blocks));
}

/// k equal copies of `block`.
inline std::shared_ptr<const GluedMap> make_glued_equal(std::shared_ptr<const BlockMap> block, int k) {
  if (k < 1) throw InvalidArgument("k must be at least 1");
  std::vector<BlockSpec> blocks;
  for (int i = 0; i < k; ++i)
    blocks.push_back({block, 1.0 / k, static_cast<double>(i) / k, false});
  return make_glued(std::move(blocks));
}

enum class EpsilonVariant { single, two_blocks };

/// Conjugated block on [0, 1-eps); on [1-eps, 1) either the product
/// (x, A(y,z)) or a second conjugated copy of the block.
inline std::shared_ptr<const GluedMap> make_f_epsilon(double epsilon,
                                                      std::shared_ptr<const BlockMap> block,
                                                      EpsilonVariant variant) {
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw InvalidArgument("epsilon must lie in (0,1)");
  std::vector<BlockSpec> blocks;
  blocks.push_back({block, 1.0 - epsilon, 0.0, false});
  if (variant == EpsilonVariant::single) {
    auto product = std::make_shared<const SurrogateBlock>(0.0, block->base_matrix(), 0.0);
    blocks.push_back({product, epsilon, 1.0 - epsilon, false});
  } else {
    blocks.push_back({block, epsilon, 1.0 - epsilon, false});
  }
  return make_glued(std::move(blocks));
}

// ---------------------------------------------------------------------------
// Product of two cat maps on T^4

struct ProductAnosov {
  std::shared_ptr<const LinearMap<4>> system;
  LinearAnosovSpec<2> first;
  LinearAnosovSpec<2> second;
  Vec<4> e_u;  // unstable direction of the first factor
  Vec<4> e_c;  // unstable direction of the second factor
  Mat<4> e_s;  // first two columns span E^s_1 + E^s_2
};

/// f = A1 x A2 with E^u = E^u_1, E^c = E^u_2, E^s = E^s_1 + E^s_2. Requires the
/// unstable eigenvalues to satisfy lambda1 > lambda2 > 1.
inline ProductAnosov make_product_anosov(const IntMat<2>& a1, const IntMat<2>& a2) {
  ProductAnosov r;
  r.first = analyze_linear<2>(a1);
  r.second = analyze_linear<2>(a2);
  const double l1 = r.first.eigenvalues[1];
  const double l2 = r.second.eigenvalues[1];
  if (!(l2 > 1.0) || !(l1 > l2 + 1e-12))
    throw InvalidArgument("product Anosov needs unstable eigenvalues lambda1 > lambda2 > 1");
  IntMat<4> m = IntMat<4>::Zero();
  m.block<2, 2>(0, 0) = a1;
  m.block<2, 2>(2, 2) = a2;
  r.system = std::make_shared<const LinearMap<4>>(m, BundleDims{2, 1, 1}, "product_anosov");
  r.e_u.setZero();
  r.e_u.head<2>() = r.first.eigenbasis.col(1);
  r.e_c.setZero();
  r.e_c.tail<2>() = r.second.eigenbasis.col(1);
  r.e_s.setZero();
  r.e_s.block<2, 1>(0, 0) = r.first.eigenbasis.col(0);
  r.e_s.block<2, 1>(2, 1) = r.second.eigenbasis.col(0);
  return r;
}

}  // namespace phdyn
