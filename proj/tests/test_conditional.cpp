// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "storshare/conditional.hpp"

using namespace storshare;

TEST(ConditionalMean, TransformModelRecoversTrigCurve) {
  const SampleMatrix s = DemandModel::w_trig(10.0).sample(200000, 101);
  ConditionalMeanEstimator est(s);
  const double q = 7.0;
  const double sin7 = std::sin(7.0);
  const double expect1 = 7.0 * sin7 * sin7;  // 3.0216
  EXPECT_NEAR(est.at(0, q), expect1, 0.05);
  EXPECT_NEAR(est.at(1, q), 7.0 - expect1, 0.05);
  EXPECT_NEAR(est.at(0, q), 3.02, 0.06);
  EXPECT_NEAR(est.at(1, q), 3.98, 0.06);
}

TEST(ConditionalMean, ExchangeableFirmsSplitEvenly) {
  const DemandModel m = DemandModel::independent(
      {Distribution::uniform(0.0, 1.0), Distribution::uniform(0.0, 1.0)});
  const SampleMatrix s = m.sample(150000, 103);
  ConditionalMeanEstimator est(s);
  for (double q : {0.6, 1.0, 1.4}) {
    const Estimate e0 = est.at_stat(0, q);
    const Estimate e1 = est.at_stat(1, q);
    EXPECT_NEAR(e0.value, q / 2.0, 4.0 * e0.se + 0.01);
    EXPECT_NEAR(e1.value, q / 2.0, 4.0 * e1.se + 0.01);
  }
}

TEST(ConditionalMean, ZeroDemandFirmGetsZero) {
  const DemandModel m = DemandModel::independent(
      {Distribution::uniform(0.0, 1.0), Distribution::uniform(0.0, 0.0)});
  const SampleMatrix s = m.sample(20000, 107);
  ConditionalMeanEstimator est(s);
  const double q = est.xc_quantile(0.5);
  EXPECT_DOUBLE_EQ(est.at(1, q), 0.0);
}

TEST(ConditionalMean, FirmEstimatesSumToTheConditioningValue) {
  const DemandModel m = DemandModel::gaussian_copula_equicorr(
      {Distribution::lognormal(0.0, 0.4), Distribution::truncated_gaussian(2.0, 0.8),
       Distribution::uniform(0.5, 2.5)},
      0.3);
  const SampleMatrix s = m.sample(120000, 109);
  ConditionalMeanEstimator est(s);
  for (double p : {0.2, 0.5, 0.8}) {
    const double q = est.xc_quantile(p);
    double sum = 0.0, var = 0.0;
    for (std::size_t k = 0; k < s.firms; ++k) {
      const Estimate e = est.at_stat(k, q);
      sum += e.value;
      var += e.se * e.se;
    }
    EXPECT_NEAR(sum, q, 3.0 * std::sqrt(var) + 1e-6) << "p=" << p;
  }
}

TEST(ConditionalMean, ExtrapolationRefused) {
  const SampleMatrix s =
      DemandModel::independent({Distribution::uniform(0.0, 1.0)}).sample(5000, 113);
  ConditionalMeanEstimator est(s);
  EXPECT_THROW(est.at(0, est.xc_high() + 0.5), std::out_of_range);
  EXPECT_THROW(est.at(0, est.xc_low() - 0.5), std::out_of_range);
  EXPECT_NO_THROW(est.at(0, est.xc_low()));
  EXPECT_NO_THROW(est.at(0, est.xc_high()));
}

TEST(ConditionalMean, BandwidthOverrideAndAutoRule) {
  const SampleMatrix s = DemandModel::w_trig(10.0).sample(50000, 127);
  ConditionalMeanEstimator autoest(s);
  ConditionalMeanEstimator manual(s, 0.25);
  EXPECT_DOUBLE_EQ(manual.bandwidth(), 0.25);
  // auto = half of Silverman's rule on the collective column
  EXPECT_NEAR(autoest.bandwidth(), 0.5 * silverman_bandwidth(autoest.sorted_xc()), 1e-12);
  EXPECT_GT(autoest.bandwidth(), 0.0);
}

TEST(Alignment, TransformModelViolates) {
  const SampleMatrix s = DemandModel::w_trig(10.0).sample(150000, 131);
  ConditionalMeanEstimator est(s);
  const auto grid = default_alignment_grid(est, 17);
  const AlignmentReport rep = alignment_check(s, grid);
  EXPECT_FALSE(rep.aligned);
  // the trig curve w sin^2 w oscillates, so firm 0 must show a falling span
  EXPECT_TRUE(rep.firms[0].violating);
}

TEST(Alignment, PositivelyCoupledModelIsAligned) {
  const DemandModel m = DemandModel::gaussian_copula_equicorr(
      {Distribution::truncated_gaussian(3.0, 0.8), Distribution::truncated_gaussian(2.0, 0.6)},
      0.4);
  const SampleMatrix s = m.sample(120000, 137);
  ConditionalMeanEstimator est(s);
  const auto grid = default_alignment_grid(est, 15);
  const AlignmentReport rep = alignment_check(s, grid);
  EXPECT_TRUE(rep.aligned);
}

TEST(Alignment, SingleFirmIsIdentity) {
  const SampleMatrix s =
      DemandModel::independent({Distribution::uniform(0.0, 2.0)}).sample(60000, 139);
  ConditionalMeanEstimator est(s);
  const auto grid = default_alignment_grid(est, 11);
  const AlignmentReport rep = alignment_check(s, grid);
  EXPECT_TRUE(rep.aligned);
  for (const auto& seg : rep.firms[0].segments) {
    EXPECT_NEAR(seg.slope, 1.0, 0.05);
  }
}

TEST(Alignment, GridValidation) {
  const SampleMatrix s =
      DemandModel::independent({Distribution::uniform(0.0, 1.0)}).sample(5000, 149);
  std::vector<double> bad = {0.5, 0.5};
  EXPECT_THROW(alignment_check(s, bad), std::invalid_argument);
  std::vector<double> outside = {-1.0, 0.5};
  EXPECT_THROW(alignment_check(s, outside), std::out_of_range);
  std::vector<double> single = {0.5};
  EXPECT_THROW(alignment_check(s, single), std::invalid_argument);
}

TEST(QuantileStat, PlugInErrorIsCalibrated) {
  // uniform(0,1): quantile se should be ~ sqrt(p(1-p)/n) since f = 1
  const SampleMatrix s =
      DemandModel::independent({Distribution::uniform(0.0, 1.0)}).sample(100000, 151);
  ConditionalMeanEstimator est(s);
  const Estimate q = est.xc_quantile_stat(0.7);
  EXPECT_NEAR(q.value, 0.7, 0.01);
  const double ref = std::sqrt(0.7 * 0.3 / 100000.0);
  EXPECT_NEAR(q.se, ref, 0.3 * ref);
}
