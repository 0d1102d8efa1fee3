#pragma once

#include <random>

#include "phdyn/torus.hpp"

namespace phdyn::testing {

/// Identity on T^3: every bundle is neutral, useful for bookkeeping checks.
class IdentityMap : public System<3> {
 public:
  TorusPoint<3> apply(const TorusPoint<3>& x) const override { return x; }
  Mat<3> jacobian(const TorusPoint<3>&) const override { return Mat<3>::Identity(); }
  TorusPoint<3> inverse(const TorusPoint<3>& y) const override { return y; }
  BundleDims dims() const override { return {1, 1, 1}; }
  std::string name() const override { return "identity"; }
  nlohmann::json params() const override { return nlohmann::json::object(); }
};

/// Central finite-difference Jacobian on the torus.
template <int D>
Mat<D> fd_jacobian(const System<D>& f, const TorusPoint<D>& x, double h = 1e-6) {
  Mat<D> j;
  for (int k = 0; k < D; ++k) {
    Vec<D> e = Vec<D>::Zero();
    e[k] = h;
    const auto fp = f.apply(translate(x, e));
    const auto fm = f.apply(translate(x, Vec<D>(-e)));
    j.col(k) = displacement(fm, fp) / (2.0 * h);
  }
  return j;
}

/// Power iteration on A^T A, an independent oracle for the operator norm.
template <typename M>
double power_norm(const M& a, int iters = 20000) {
  Eigen::VectorXd v = Eigen::VectorXd::Ones(a.cols());
  v.normalize();
  for (int i = 0; i < iters; ++i) {
    Eigen::VectorXd w = a.transpose() * (a * v);
    v = w / w.norm();
  }
  return (a * v).norm();
}

inline TorusPoint<3> random_point(std::mt19937_64& g, bool interval_first = false) {
  std::uniform_real_distribution<double> u(0.02, 0.98);
  return TorusPoint<3>::wrap(Vec<3>(u(g), u(g), u(g)), interval_first);
}

}  // namespace phdyn::testing
