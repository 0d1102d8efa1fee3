#pragma once

// Phase-space arithmetic on T^d (and on [0,1] x T^(d-1)) plus the abstract
// differentiable-system interface shared by every other header.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>

#include "json.hpp"

namespace phdyn {

template <int D>
using Vec = Eigen::Matrix<double, D, 1>;
template <int D>
using Mat = Eigen::Matrix<double, D, D>;

inline constexpr double kTwoPi = 6.283185307179586476925286766559;

/// Raised when a numerical routine cannot produce a trustworthy answer
/// (Newton failure, unreliable splitting, distortion blow-up, ...).
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what, double residual = 0.0)
      : std::runtime_error(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

/// Raised when user-supplied parameters violate a documented precondition.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Reduce a coordinate to [0,1). Guards the x - floor(x) == 1.0 rounding case.
inline double wrap_unit(double v) {
  double r = v - std::floor(v);
  if (r >= 1.0) r = 0.0;
  return r;
}

/// Shortest representative of a periodic difference, in [-1/2, 1/2).
inline double wrap_diff(double d) { return d - std::floor(d + 0.5); }

/// A point of T^d. When `interval_first` is set, coordinate 0 lives on the
/// closed interval [0,1] and is never wrapped ([0,1] x T^(d-1) domains).
template <int D>
class TorusPoint {
 public:
  static_assert(D >= 2 && D <= 4, "supported dimensions are 2, 3 and 4");

  TorusPoint() : c_(Vec<D>::Zero()) {}

  static TorusPoint wrap(const Vec<D>& raw, bool interval_first = false) {
    TorusPoint p;
    p.interval_first_ = interval_first;
    for (int i = 0; i < D; ++i) {
      if (!std::isfinite(raw[i])) {
        std::ostringstream os;
        os << "non-finite coordinate " << i << " (" << raw[i] << ")";
        throw InvalidArgument(os.str());
      }
      if (i == 0 && interval_first) {
        if (raw[0] < -1e-12 || raw[0] > 1.0 + 1e-12)
          throw InvalidArgument("interval coordinate outside [0,1]");
        p.c_[0] = std::clamp(raw[0], 0.0, 1.0);
      } else {
        p.c_[i] = wrap_unit(raw[i]);
      }
    }
    return p;
  }

  static TorusPoint wrap(std::span<const double> raw, bool interval_first = false) {
    if (raw.size() != static_cast<std::size_t>(D))
      throw InvalidArgument("coordinate count does not match dimension");
    Vec<D> v;
    for (int i = 0; i < D; ++i) v[i] = raw[static_cast<std::size_t>(i)];
    return wrap(v, interval_first);
  }

  static constexpr int dim() { return D; }
  double operator[](int i) const { return c_[i]; }
  const Vec<D>& coords() const { return c_; }
  bool interval_first() const { return interval_first_; }

  friend bool operator==(const TorusPoint& a, const TorusPoint& b) {
    return a.interval_first_ == b.interval_first_ && a.c_ == b.c_;
  }

 private:
  Vec<D> c_;
  bool interval_first_ = false;
};

/// Shortest displacement from a to b (b - a), coordinate-wise.
template <int D>
Vec<D> displacement(const TorusPoint<D>& a, const TorusPoint<D>& b) {
  Vec<D> d = b.coords() - a.coords();
  for (int i = 0; i < D; ++i) {
    if (i == 0 && (a.interval_first() || b.interval_first())) continue;
    d[i] = wrap_diff(d[i]);
  }
  return d;
}

template <int D>
double distance(const TorusPoint<D>& a, const TorusPoint<D>& b) {
  return displacement(a, b).norm();
}

/// a + v, wrapped.
template <int D>
TorusPoint<D> translate(const TorusPoint<D>& a, const std::type_identity_t<Vec<D>>& v) {
  return TorusPoint<D>::wrap(a.coords() + v, a.interval_first());
}

/// V = B(center, radius) in the wrapped metric.
template <int D>
struct BoxDomain {
  TorusPoint<D> center;
  double radius = 0.0;

  BoxDomain() = default;
  BoxDomain(const TorusPoint<D>& c, double r) : center(c), radius(r) {
    if (!(r > 0.0)) throw InvalidArgument("BoxDomain radius must be positive");
  }
  bool contains(const TorusPoint<D>& x) const { return distance(x, center) < radius; }
};

/// Largest singular value ||A|| = sup |Av|/|v|.
template <typename Derived>
double operator_norm(const Eigen::MatrixBase<Derived>& a) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a.template cast<double>().eval());
  return svd.singularValues()(0);
}

/// Smallest singular value m(A) = inf |Av|/|v| over the domain of A.
template <typename Derived>
double min_conorm(const Eigen::MatrixBase<Derived>& a) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a.template cast<double>().eval());
  const auto& s = svd.singularValues();
  return s(s.size() - 1);
}

/// Dimensions of E^s, E^c, E^u that a system declares.
struct BundleDims {
  int s = 1;
  int c = 1;
  int u = 1;
  int total() const { return s + c + u; }
};

/// A differentiable invertible self-map. Implementations are immutable after
/// construction and safe to evaluate concurrently.
template <int D>
class System {
 public:
  virtual ~System() = default;

  virtual TorusPoint<D> apply(const TorusPoint<D>& x) const = 0;
  virtual Mat<D> jacobian(const TorusPoint<D>& x) const = 0;
  virtual TorusPoint<D> inverse(const TorusPoint<D>& y) const = 0;

  virtual BundleDims dims() const = 0;
  virtual std::string name() const = 0;
  virtual nlohmann::json params() const = 0;

  /// True for maps of [0,1] x T^(D-1) (coordinate 0 is not periodic).
  virtual bool interval_first() const { return false; }

  static constexpr int dimension() { return D; }
};

template <int D>
using SystemPtr = std::shared_ptr<const System<D>>;

/// Solve f(x) = y by Newton's method on the torus, starting at `guess`.
/// Throws NumericalError (carrying the final residual) after 100 steps.
template <int D>
TorusPoint<D> newton_inverse(const System<D>& f, const TorusPoint<D>& y,
                             const TorusPoint<D>& guess, double tol) {
  TorusPoint<D> x = guess;
  double res = distance(f.apply(x), y);
  for (int it = 0; it < 100 && !(res < tol); ++it) {
    const Vec<D> r = displacement(y, f.apply(x));
    const Vec<D> step = f.jacobian(x).partialPivLu().solve(r);
    // Backtrack if a full step increases the residual.
    double scale = 1.0;
    for (int k = 0; k < 30; ++k) {
      Vec<D> raw = x.coords() - scale * step;
      if (x.interval_first()) raw[0] = std::clamp(raw[0], 0.0, 1.0);
      const TorusPoint<D> cand = TorusPoint<D>::wrap(raw, x.interval_first());
      const double cres = distance(f.apply(cand), y);
      if (cres < res || k == 29) {
        x = cand;
        res = cres;
        break;
      }
      scale *= 0.5;
    }
  }
  if (!(res < tol)) {
    std::ostringstream os;
    os << "Newton inverse did not converge (residual " << res << ")";
    throw NumericalError(os.str(), res);
  }
  return x;
}

}  // namespace phdyn
