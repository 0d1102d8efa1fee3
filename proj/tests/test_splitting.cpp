#include <gtest/gtest.h>

#include <random>

#include "phdyn/splitting.hpp"
#include "phdyn/systems.hpp"
#include "test_support.hpp"

using namespace phdyn;
using phdyn::testing::random_point;

namespace {

Frame<3> col(const Vec<3>& v) {
  Frame<3> f(3, 1);
  f.col(0) = v.normalized();
  return f;
}

}  // namespace

TEST(Orthonormalize, MatchesHouseholderQR) {
  std::mt19937_64 g(1);
  std::normal_distribution<double> n;
  for (int t = 0; t < 50; ++t) {
    Frame<4> a(4, 3);
    for (int i = 0; i < 12; ++i) a(i) = n(g);
    double logdiag[3];
    const Frame<4> q = orthonormalize<4>(a, logdiag);
    EXPECT_LT((q.transpose() * q - Eigen::Matrix3d::Identity()).norm(), 1e-13);
    const Eigen::MatrixXd r = Eigen::HouseholderQR<Eigen::MatrixXd>(a).matrixQR().triangularView<Eigen::Upper>();
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(logdiag[j], std::log(std::abs(r(j, j))), 1e-12);
    EXPECT_LT(subspace_sine<4>(q, orthonormalize<4>(a)), 1e-14);
  }
}

TEST(Orthonormalize, RejectsDegenerateFrame) {
  Frame<3> a(3, 2);
  a << 1, 2, 0, 0, 0, 0;
  EXPECT_THROW(orthonormalize<3>(a), NumericalError);
}

TEST(SubspaceSine, KnownAngle) {
  const double th = 0.3;
  EXPECT_NEAR(subspace_sine<3>(col(Vec<3>(1, 0, 0)), col(Vec<3>(std::cos(th), std::sin(th), 0))), std::sin(th), 1e-15);
}

TEST(Splitting, LinearMapRecoversEigenvectors) {
  const auto lin = make_linear_anosov_T3();
  std::mt19937_64 g(2);
  for (int i = 0; i < 20; ++i) {
    const auto fr = require_splitting<3>(*lin.system, random_point(g));
    EXPECT_LT(fr.residual, 1e-12);
    EXPECT_LT(subspace_sine<3>(fr.basis_s, col(lin.spec.eigenbasis.col(0))), 1e-10);
    EXPECT_LT(subspace_sine<3>(fr.basis_c, col(lin.spec.eigenbasis.col(1))), 1e-10);
    EXPECT_LT(subspace_sine<3>(fr.basis_u, col(lin.spec.eigenbasis.col(2))), 1e-10);
  }
}

TEST(Splitting, DACenterIsTheCenterEigendirectionAndInvariant) {
  const auto f = make_da(da_params_at_offset(0.2));
  const Vec<3> vc = f->params_struct().base.eigenbasis.col(1);
  const auto& p0 = f->params_struct().p0;
  std::mt19937_64 g(3);
  std::uniform_real_distribution<double> u(-0.04, 0.04);
  for (int i = 0; i < 20; ++i) {
    const auto x = translate(p0, Vec<3>(u(g), u(g), u(g)));
    const auto orb = split_orbit<3>(*f, x, 10);
    ASSERT_TRUE(orb.reliable());
    for (std::size_t j = 0; j + 1 < orb.size(); ++j) {
      EXPECT_LT(subspace_sine<3>(orb.frames[j].basis_c, col(vc)), 1e-9);
      // Df E^u(x_j) = E^u(x_{j+1})
      const Frame<3> img = orthonormalize<3>(orb.jacobians[j] * orb.frames[j].basis_u);
      EXPECT_LT(subspace_sine<3>(img, orb.frames[j + 1].basis_u), 1e-8);
    }
  }
}

TEST(Splitting, ProductBundlesHaveDeclaredDimensions) {
  IntMat<2> a1;
  a1 << 3, 2, 1, 1;
  const auto p = make_product_anosov(a1, cat_matrix());
  const auto fr = require_splitting<4>(*p.system, TorusPoint<4>::wrap(Vec<4>(0.1, 0.2, 0.3, 0.4)));
  EXPECT_EQ(fr.basis_s.cols(), 2);
  EXPECT_EQ(fr.basis_c.cols(), 1);
  Frame<4> ec(4, 1);
  ec.col(0) = p.e_c;
  EXPECT_LT(subspace_sine<4>(fr.basis_c, ec), 1e-8);
}

TEST(Rates, ChainRuleOnLinearMap) {
  const auto lin = make_linear_anosov_T3();
  const auto orb = split_orbit<3>(*lin.system, TorusPoint<3>::wrap(Vec<3>(0.2, 0.4, 0.7)), 25);
  const char names[3] = {'s', 'c', 'u'};
  for (int b = 0; b < 3; ++b) {
    const auto r = cumulative_rates<3>(orb, names[b], 25);
    for (int k = 1; k <= 25; ++k) {
      EXPECT_NEAR(r.log_m[static_cast<std::size_t>(k - 1)], k * std::log(lin.spec.eigenvalues[b]), 1e-10 * k);
      EXPECT_NEAR(r.log_norm[static_cast<std::size_t>(k - 1)], k * std::log(lin.spec.eigenvalues[b]), 1e-10 * k);
    }
  }
}

TEST(Rates, CumulativeCenterEqualsSumOfOneStepDerivativesForDA) {
  const auto f = make_da(da_params_at_offset(0.2));
  const auto x = translate(f->params_struct().p0, Vec<3>(0.01, -0.02, 0.005));
  const auto orb = split_orbit<3>(*f, x, 30);
  const auto r = cumulative_rates<3>(orb, 'c', 30);
  double acc = 0.0;
  TorusPoint<3> p = x;
  for (int k = 0; k < 30; ++k) {
    acc += std::log(f->center_derivative(p));
    EXPECT_NEAR(r.log_m[static_cast<std::size_t>(k)], acc, 1e-9);
    p = f->apply(p);
  }
}

TEST(Certificate, LinearRatesCollapseToEigenvalues) {
  const auto lin = make_linear_anosov_T3();
  const auto c = certify_ph<3>(*lin.system, 4, 10);
  EXPECT_TRUE(c.chain_holds());
  EXPECT_NEAR(c.lambda1, lin.spec.eigenvalues[0], 1e-10);
  EXPECT_NEAR(c.mu1, lin.spec.eigenvalues[0], 1e-10);
  EXPECT_NEAR(c.lambda2, lin.spec.eigenvalues[1], 1e-10);
  EXPECT_NEAR(c.mu3, lin.spec.eigenvalues[2], 1e-10);
  EXPECT_NEAR(c.C, 1.0, 1e-9);
  EXPECT_EQ(c.n_checked, 64);
}

TEST(Certificate, IdentityMapIsRejected) {
  const phdyn::testing::IdentityMap id;
  EXPECT_THROW(certify_ph<3>(id, 3, 5), NumericalError);
}

TEST(Certificate, LatticeIsCellCentered) {
  const auto pts = lattice<3>(2);
  ASSERT_EQ(pts.size(), 8u);
  EXPECT_DOUBLE_EQ(pts[0][0], 0.25);
  EXPECT_DOUBLE_EQ(pts[7][2], 0.75);
}

TEST(QRSpectrum, ProductMapGivesFactorExponents) {
  IntMat<2> a1;
  a1 << 3, 2, 1, 1;
  const auto p = make_product_anosov(a1, cat_matrix());
  const auto s = qr_lyapunov_spectrum<4>(*p.system, TorusPoint<4>::wrap(Vec<4>(0.1, 0.2, 0.3, 0.4)), 2000);
  EXPECT_NEAR(s[0], std::log(p.first.eigenvalues[1]), 1e-9);
  EXPECT_NEAR(s[1], std::log(p.second.eigenvalues[1]), 1e-9);
  EXPECT_NEAR(s[2], std::log(p.second.eigenvalues[0]), 1e-9);
  EXPECT_NEAR(s[3], std::log(p.first.eigenvalues[0]), 1e-9);
}
