#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "phdyn/ergodic.hpp"
#include "phdyn/histogram.hpp"
#include "phdyn/systems.hpp"
#include "test_support.hpp"

using namespace phdyn;

TEST(TailWindow, FinalQuarter) {
  EXPECT_EQ(tail_window(2000), std::make_pair(1500, 2000));
  EXPECT_EQ(tail_window(3), std::make_pair(3, 3));
}

TEST(CentralExponent, LinearIsLogLambdaC) {
  const auto lin = make_linear_anosov_T3();
  const auto s = central_exponent<3>(*lin.system, TorusPoint<3>::wrap(Vec<3>(0.3, 0.1, 0.9)), 500);
  ASSERT_EQ(s.length(), 500);
  EXPECT_FALSE(s.truncated());
  EXPECT_NEAR(s.last(), std::log(lin.spec.eigenvalues[1]), 1e-12);
  EXPECT_NEAR(s.tail_max() - s.tail_min(), 0.0, 1e-12);
}

TEST(NUE, ProductRegionHasIdenticallyZeroStatistic) {
  const auto f = make_f_epsilon(0.1, make_surrogate_block(0.05), EpsilonVariant::single);
  const auto st = nue_statistic<3>(*f, TorusPoint<3>::wrap(Vec<3>(0.95, 0.3, 0.6), true), 300, 0.05);
  ASSERT_EQ(st.sums.size(), 300u);
  for (double v : st.sums) EXPECT_LE(std::abs(v), 1e-9);
  EXPECT_EQ(st.verdict, NUEVerdict::fail);
}

TEST(NUE, UniformlyExpandingCenterPasses) {
  const auto lin = make_linear_anosov_T3();
  const auto st = nue_statistic<3>(*lin.system, TorusPoint<3>::wrap(Vec<3>(0.3, 0.1, 0.9)), 200, 0.1);
  EXPECT_NEAR(st.sums.back(), -std::log(lin.spec.eigenvalues[1]), 1e-12);
  EXPECT_EQ(st.verdict, NUEVerdict::nue_pass);
  EXPECT_THROW(nue_statistic<3>(*lin.system, TorusPoint<3>(), 10, 0.0), InvalidArgument);
}

TEST(Occupation, CountsVisitsOfFixedAndDistantPoints) {
  const phdyn::testing::IdentityMap id;
  const BoxDomain<3> V(TorusPoint<3>::wrap(Vec<3>(0.5, 0.5, 0.5)), 0.1);
  const auto in = occupation<3>(id, TorusPoint<3>::wrap(Vec<3>(0.52, 0.5, 0.5)), V, 50, 0.6);
  const auto out = occupation<3>(id, TorusPoint<3>::wrap(Vec<3>(0.1, 0.5, 0.5)), V, 50, 0.6);
  EXPECT_EQ(in.visits.back(), 50);
  EXPECT_TRUE(in.in_union_M(10));
  EXPECT_EQ(out.visits.back(), 0);
  EXPECT_FALSE(out.in_union_M(1));
}

TEST(CenterBound, LinearOrbitOutsideVMeetsLog3BoundOnlyIfLambdaCExceeds3) {
  // Outside V the linear center rate is log lambda_c < log 3, so the literal
  // log 3 bound fails while the eta_c bound holds.
  const auto f = make_da(da_params_at_offset(0.2));
  const auto x = TorusPoint<3>::wrap(Vec<3>(0.5, 0.5, 0.5));
  const auto orb = split_orbit<3>(*f, x, 40);
  const auto ex = central_exponent_from<3>(orb, 40);
  const auto occ = occupation_from<3>(orb, f->domain(), 40, 0.6);
  const auto r = center_bound<3>(ex, occ, 1, 0.25, 1.55);
  ASSERT_EQ(r.visits, 0);
  EXPECT_LT(r.log_center, r.bound_log3);
  EXPECT_GE(r.log_center, r.bound_eta);
}

namespace {

// Direct evaluation of both sides from the definition, recomputing every sum.
std::pair<double, double> brute_seq(const std::vector<double>& a, int N) {
  const int n = static_cast<int>(a.size()) / N;
  const auto [first, last] = tail_window(n);
  double lhs = -INFINITY, rhs = -INFINITY;
  for (int m = first; m <= last; ++m) {
    double t = 0.0;
    for (int k = 0; k < m * N; ++k) t += a[static_cast<std::size_t>(k)];
    lhs = std::max(lhs, t / (m * N));
    for (int l = 0; l < N; ++l) {
      double s = 0.0;
      for (int k = 0; k < m; ++k) s += a[static_cast<std::size_t>(k * N + l)];
      rhs = std::max(rhs, s / m);
    }
  }
  return {lhs, rhs};
}

}  // namespace

TEST(SequenceLemma, AgreesWithBruteForce) {
  std::mt19937_64 g(17);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    const int N = 1 + t % 5;
    std::vector<double> a(static_cast<std::size_t>(N + t * 3));
    for (auto& v : a) v = u(g);
    const auto r = seq_limsup_bound(a, N);
    const auto [lhs, rhs] = brute_seq(a, N);
    EXPECT_NEAR(r.lhs, lhs, 1e-12);
    EXPECT_NEAR(r.rhs, rhs, 1e-12);
    EXPECT_TRUE(r.holds);
  }
}

TEST(SequenceLemma, AlternatingSequence) {
  std::vector<double> a(100);
  for (std::size_t k = 0; k < a.size(); ++k) a[k] = static_cast<double>(k % 2);
  const auto r = seq_limsup_bound(a, 2);
  EXPECT_DOUBLE_EQ(r.lhs, 0.5);
  EXPECT_DOUBLE_EQ(r.rhs, 1.0);
  EXPECT_TRUE(r.holds);
}

TEST(SequenceLemma, RejectsShortInput) {
  EXPECT_THROW(seq_limsup_bound({1.0}, 2), InvalidArgument);
  EXPECT_THROW(seq_limsup_bound({1.0}, 0), InvalidArgument);
}

TEST(SuperAdditivity, DetectsViolation) {
  std::vector<LnValue> t;
  for (int n = 1; n <= 4; ++n) t.push_back({n, static_cast<double>(n), 0.0});
  EXPECT_EQ(check_super_additivity(t, 2).violations, 0);
  t[1].value = 1.5;  // L_2 < 2 L_1
  const auto r = check_super_additivity(t, 2);
  EXPECT_EQ(r.violations, 1);
  EXPECT_EQ(r.worst_n, 1);
  EXPECT_EQ(r.worst_m, 1);
}

TEST(Ln, LinearUniformIsExactlyLinearInN) {
  const auto lin = make_linear_anosov_T3();
  const auto mu = HistogramMeasure<3>::uniform(4);
  const auto t = ln_functional_table<3>(*lin.system, mu, 6);
  for (const auto& v : t) EXPECT_NEAR(v.value, v.n * std::log(lin.spec.eigenvalues[1]), 1e-10);
  EXPECT_EQ(find_n0({t}), 1);
}

TEST(Histogram, TotalVariationExamples) {
  auto a = HistogramMeasure<3>::cube(2);
  auto b = HistogramMeasure<3>::cube(2);
  a.deposit(TorusPoint<3>::wrap(Vec<3>(0.1, 0.1, 0.1)), 1.0);
  b.deposit(TorusPoint<3>::wrap(Vec<3>(0.9, 0.9, 0.9)), 1.0);
  EXPECT_DOUBLE_EQ(tv_distance(a, b), 1.0);
  EXPECT_DOUBLE_EQ(tv_distance(a, a), 0.0);
  const auto u = HistogramMeasure<3>::uniform(2);
  EXPECT_NEAR(tv_distance(a, u), 7.0 / 8.0, 1e-15);
  EXPECT_THROW(tv_distance(a, HistogramMeasure<3>::cube(4)), InvalidArgument);
}

TEST(Histogram, CoarsenPreservesMass) {
  auto h = HistogramMeasure<3>::uniform(8);
  h.deposit(TorusPoint<3>::wrap(Vec<3>(0.3, 0.6, 0.9)), 0.5);
  const auto c = h.coarsen();
  EXPECT_EQ(c.resolution()[0], 4);
  EXPECT_NEAR(c.total(), h.total(), 1e-14);
}

TEST(Histogram, BinaryRoundTripKeepsHash) {
  auto h = HistogramMeasure<3>::uniform(4, DomainTag::interval_torus);
  h.deposit(TorusPoint<3>::wrap(Vec<3>(0.3, 0.6, 0.9), true), 0.25);
  std::stringstream ss;
  h.write_binary(ss, 0xdeadbeefULL);
  std::uint64_t hash = 0;
  const auto back = HistogramMeasure<3>::read_binary(ss, &hash);
  EXPECT_EQ(hash, 0xdeadbeefULL);
  EXPECT_EQ(back.tag(), DomainTag::interval_torus);
  EXPECT_EQ(back.masses(), h.masses());
}

TEST(Histogram, CsvCarriesHash) {
  const auto h = HistogramMeasure<3>::uniform(2);
  std::ostringstream os;
  h.write_csv(os, 0x1234ULL);
  EXPECT_EQ(os.str().rfind("# config_hash=0000000000001234", 0), 0u);
}
