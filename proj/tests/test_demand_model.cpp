// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <vector>

#include "storshare/demand_model.hpp"
#include "storshare/parallel.hpp"

using namespace storshare;

namespace {

DemandModel two_uniforms() {
  return DemandModel::independent(
      {Distribution::uniform(0.0, 1.0), Distribution::uniform(0.0, 1.0)});
}

}  // namespace

TEST(Sample, DeterministicAcrossThreadCounts) {
  const DemandModel m = DemandModel::gaussian_copula_equicorr(
      {Distribution::lognormal(0.0, 0.5), Distribution::truncated_gaussian(2.0, 0.7),
       Distribution::uniform(0.0, 3.0)},
      0.4);
  par::set_max_threads(1);
  const SampleMatrix a = m.sample(30000, 42);
  par::set_max_threads(8);
  const SampleMatrix b = m.sample(30000, 42);
  par::set_max_threads(1);
  ASSERT_EQ(a.values.size(), b.values.size());
  EXPECT_TRUE(a.values == b.values);  // bit-identical
  EXPECT_TRUE(a.xc == b.xc);
}

TEST(Sample, SeedChangesDraws) {
  const DemandModel m = two_uniforms();
  const SampleMatrix a = m.sample(100, 1);
  const SampleMatrix b = m.sample(100, 2);
  EXPECT_NE(a.values, b.values);
}

TEST(Sample, ColumnMeansConvergeToMarginalMeans) {
  const SampleMatrix s = two_uniforms().sample(1000000, 7);
  for (std::size_t k = 0; k < 2; ++k) {
    double mean = 0.0;
    for (std::size_t d = 0; d < s.days; ++d) mean += s.at(d, k);
    mean /= static_cast<double>(s.days);
    EXPECT_NEAR(mean, 0.5, 0.002);
  }
}

TEST(Sample, RowSumsMatchCachedTotals) {
  const SampleMatrix s = two_uniforms().sample(5000, 3);
  for (std::size_t d = 0; d < s.days; ++d) {
    EXPECT_DOUBLE_EQ(s.xc[d], s.at(d, 0) + s.at(d, 1));
  }
}

TEST(Copula, PerfectCorrelationIsComonotone) {
  const DemandModel m = DemandModel::gaussian_copula_equicorr(
      {Distribution::uniform(0.0, 1.0), Distribution::uniform(0.0, 1.0)}, 1.0);
  const SampleMatrix s = m.sample(2000, 11);
  for (std::size_t d = 0; d < s.days; ++d) {
    EXPECT_DOUBLE_EQ(s.at(d, 0), s.at(d, 1));
  }
}

TEST(Copula, SampleCorrelationTracksRho) {
  const DemandModel m = DemandModel::gaussian_copula_equicorr(
      {Distribution::uniform(0.0, 1.0), Distribution::uniform(0.0, 1.0)}, 0.6);
  const SampleMatrix s = m.sample(200000, 5);
  double m0 = 0, m1 = 0;
  for (std::size_t d = 0; d < s.days; ++d) {
    m0 += s.at(d, 0);
    m1 += s.at(d, 1);
  }
  m0 /= s.days;
  m1 /= s.days;
  double c00 = 0, c11 = 0, c01 = 0;
  for (std::size_t d = 0; d < s.days; ++d) {
    const double a = s.at(d, 0) - m0;
    const double b = s.at(d, 1) - m1;
    c00 += a * a;
    c11 += b * b;
    c01 += a * b;
  }
  const double corr = c01 / std::sqrt(c00 * c11);
  // Gaussian rho 0.6 maps to Spearman-ish uniform correlation slightly below
  EXPECT_NEAR(corr, 0.58, 0.02);
}

TEST(Copula, RejectsNonPsdAndMalformedMatrices) {
  std::vector<Distribution> margs = {Distribution::uniform(0, 1), Distribution::uniform(0, 1),
                                     Distribution::uniform(0, 1)};
  // equicorrelation below -1/(n-1) is not PSD
  EXPECT_THROW(DemandModel::gaussian_copula_equicorr(margs, -0.9), std::invalid_argument);
  EXPECT_NO_THROW(DemandModel::gaussian_copula_equicorr(margs, -0.4));
  std::vector<double> bad_diag = {1.0, 0.0, 0.0, 0.9};
  EXPECT_THROW(
      DemandModel::gaussian_copula({Distribution::uniform(0, 1), Distribution::uniform(0, 1)},
                                   bad_diag),
      std::invalid_argument);
  std::vector<double> asym = {1.0, 0.2, 0.3, 1.0};
  EXPECT_THROW(
      DemandModel::gaussian_copula({Distribution::uniform(0, 1), Distribution::uniform(0, 1)},
                                   asym),
      std::invalid_argument);
}

TEST(WTrig, RowSumEqualsUnderlyingDraw) {
  const DemandModel m = DemandModel::w_trig(10.0);
  const SampleMatrix s = m.sample(20000, 13);
  for (std::size_t d = 0; d < s.days; ++d) {
    // X2 is defined as W - X1, so the sum is the uniform draw itself
    EXPECT_DOUBLE_EQ(s.at(d, 0) + s.at(d, 1), s.xc[d]);
    EXPECT_GE(s.xc[d], 0.0);
    EXPECT_LE(s.xc[d], 10.0);
    EXPECT_GE(s.at(d, 0), 0.0);
    EXPECT_GE(s.at(d, 1), 0.0);
  }
}

TEST(WTrig, CollectiveDemandIsUniform) {
  const SampleMatrix s = DemandModel::w_trig(10.0).sample(400000, 17);
  double mean = 0.0;
  for (double v : s.xc) mean += v;
  mean /= s.days;
  EXPECT_NEAR(mean, 5.0, 0.02);
  // empirical deciles of the collective demand
  std::vector<double> xc = s.xc;
  std::sort(xc.begin(), xc.end());
  for (int dec = 1; dec < 10; ++dec) {
    EXPECT_NEAR(xc[s.days * dec / 10], dec, 0.03);
  }
}

TEST(PairedEmpirical, BootstrapPreservesDayPairing) {
  // three firms with a recognizable pairing: x2 = 10 - x0, x1 = 2 x0
  std::vector<double> rows;
  for (int r = 0; r < 40; ++r) {
    const double x = 0.25 * r;
    rows.push_back(x);
    rows.push_back(2.0 * x);
    rows.push_back(10.0 - x);
  }
  const DemandModel m = DemandModel::paired_empirical(3, rows);
  const SampleMatrix s = m.sample(5000, 23);
  for (std::size_t d = 0; d < s.days; ++d) {
    EXPECT_DOUBLE_EQ(s.at(d, 1), 2.0 * s.at(d, 0));
    EXPECT_DOUBLE_EQ(s.at(d, 2), 10.0 - s.at(d, 0));
  }
}

TEST(PairedEmpirical, Validation) {
  EXPECT_THROW(DemandModel::paired_empirical(2, {1.0, 2.0, 3.0}), std::invalid_argument);
  EXPECT_THROW(DemandModel::paired_empirical(2, {1.0, -2.0, 3.0, 4.0}), std::invalid_argument);
}

TEST(Entrant, ZeroDemandEntrantLeavesIncumbentDrawsIntact) {
  const DemandModel base = two_uniforms();
  const DemandModel extended = base.with_entrant(Distribution::uniform(0.0, 0.0));
  const SampleMatrix sb = base.sample(4000, 31);
  const SampleMatrix sa = extended.sample(4000, 31);
  ASSERT_EQ(sa.firms, 3u);
  for (std::size_t d = 0; d < sb.days; ++d) {
    EXPECT_DOUBLE_EQ(sa.at(d, 0), sb.at(d, 0));
    EXPECT_DOUBLE_EQ(sa.at(d, 1), sb.at(d, 1));
    EXPECT_DOUBLE_EQ(sa.at(d, 2), 0.0);
  }
}

TEST(Entrant, CopulaExtensionCouplesTheEntrant) {
  const DemandModel base = DemandModel::gaussian_copula_equicorr(
      {Distribution::uniform(0.0, 1.0), Distribution::uniform(0.0, 1.0)}, 0.5);
  const DemandModel ext = base.with_entrant(Distribution::uniform(0.0, 1.0), 0.5);
  const SampleMatrix s = ext.sample(200000, 37);
  // entrant correlates with an incumbent at roughly the requested level
  double m0 = 0, m2 = 0;
  for (std::size_t d = 0; d < s.days; ++d) {
    m0 += s.at(d, 0);
    m2 += s.at(d, 2);
  }
  m0 /= s.days;
  m2 /= s.days;
  double c00 = 0, c22 = 0, c02 = 0;
  for (std::size_t d = 0; d < s.days; ++d) {
    const double a = s.at(d, 0) - m0;
    const double b = s.at(d, 2) - m2;
    c00 += a * a;
    c22 += b * b;
    c02 += a * b;
  }
  EXPECT_NEAR(c02 / std::sqrt(c00 * c22), 0.48, 0.03);
}

TEST(SampleMatrix, BlockAggregationSharesTotals) {
  const DemandModel m = DemandModel::independent({Distribution::uniform(0.0, 1.0),
                                                  Distribution::uniform(0.0, 2.0),
                                                  Distribution::uniform(0.0, 3.0)});
  const SampleMatrix s = m.sample(1000, 41);
  const SampleMatrix g = s.aggregate_blocks({{0, 2}, {1}});
  ASSERT_EQ(g.firms, 2u);
  for (std::size_t d = 0; d < s.days; ++d) {
    EXPECT_DOUBLE_EQ(g.at(d, 0), s.at(d, 0) + s.at(d, 2));
    EXPECT_DOUBLE_EQ(g.at(d, 1), s.at(d, 1));
    EXPECT_DOUBLE_EQ(g.xc[d], s.xc[d]);  // collective column is shared
  }
}
