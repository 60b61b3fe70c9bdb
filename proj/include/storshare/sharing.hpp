// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "storshare/conditional.hpp"
#include "storshare/demand_model.hpp"
#include "storshare/distribution.hpp"
#include "storshare/parallel.hpp"
#include "storshare/standalone.hpp"
#include "storshare/tariff.hpp"

namespace storshare {

/// Per-firm storage capacities plus their total.
struct Allocation {
  std::vector<double> capacities;
  double total = 0.0;

  static Allocation of(std::vector<double> caps) {
    Allocation a;
    for (double c : caps) {
      if (!(c >= 0.0)) throw std::invalid_argument("allocation: capacities must be >= 0");
    }
    a.total = std::accumulate(caps.begin(), caps.end(), 0.0);
    a.capacities = std::move(caps);
    return a;
  }
};

/// Spot price for stored energy: off-peak on surplus, peak on deficit.
/// An exact tie clears at the off-peak price (probability zero under a
/// continuous collective demand; the choice makes the one-firm market
/// reduce exactly to the no-sharing cost).
inline double clearing_price(const Tariff& t, double c_total, double x_total) {
  if (!(c_total >= 0.0) || !(x_total >= 0.0)) {
    throw std::invalid_argument("clearing_price: inputs must be >= 0");
  }
  return c_total >= x_total ? t.pi_l() : t.pi_h();
}

/// Expected daily cost of one firm inside the sharing market, averaged over
/// the sampled days: capital + recharge + imbalance traded at the clearing
/// price.
inline double firm_cost_sharing(const Tariff& t, const SampleMatrix& s, std::size_t firm,
                                double c_firm, double others_total) {
  if (!(c_firm >= 0.0)) throw std::invalid_argument("firm_cost_sharing: c_firm must be >= 0");
  const double c_total = c_firm + others_total;
  return par::mean_over(s.days, [&](std::size_t d) {
    const double price = s.xc[d] > c_total ? t.pi_h() : t.pi_l();
    return t.pi_s() * c_firm + t.pi_l() * c_firm + price * (s.at(d, firm) - c_firm);
  });
}

/// As above with the Monte-Carlo standard error of the day average.
inline Estimate firm_cost_sharing_stat(const Tariff& t, const SampleMatrix& s, std::size_t firm,
                                       double c_firm, double others_total) {
  const double mean = firm_cost_sharing(t, s, firm, c_firm, others_total);
  const double c_total = c_firm + others_total;
  const double ss = par::mean_over(s.days, [&](std::size_t d) {
    const double price = s.xc[d] > c_total ? t.pi_h() : t.pi_l();
    const double v = t.pi_s() * c_firm + t.pi_l() * c_firm + price * (s.at(d, firm) - c_firm);
    return (v - mean) * (v - mean);
  });
  const double n = static_cast<double>(s.days);
  return {mean, std::sqrt(ss / std::max(n - 1.0, 1.0))};  // sd of the day mean
}

/// Cost of the collective firm: depends only on the total capacity, and is
/// the no-sharing cost evaluated on the aggregate demand law.
inline double social_cost(const Tariff& t, const Distribution& aggregate, double c_total) {
  if (!(c_total >= 0.0)) throw std::invalid_argument("social_cost: c_total must be >= 0");
  return standalone_cost(t, aggregate, c_total);
}

/// Average clearing price over the sampled days, with its standard error.
inline Estimate expected_clearing_price(const Tariff& t, const SampleMatrix& s, double c_total) {
  if (!(c_total >= 0.0)) throw std::invalid_argument("expected_clearing_price: c_total >= 0");
  const double deficit_frac = par::mean_over(s.days, [&](std::size_t d) {
    return s.xc[d] > c_total ? 1.0 : 0.0;
  });
  const double mean = t.pi_h() * deficit_frac + t.pi_l() * (1.0 - deficit_frac);
  const double se =
      t.pi_delta() * std::sqrt(deficit_frac * (1.0 - deficit_frac) / static_cast<double>(s.days));
  return {mean, se};
}

/// Grid search certificate that a firm's candidate capacity is (or is not) a
/// best response to the other firms' capacities.
struct VerificationResult {
  std::size_t firm = 0;
  bool pass = true;
  double candidate_capacity = 0.0;
  double candidate_cost = 0.0;
  double best_capacity = 0.0;
  double best_cost = 0.0;
  double improvement = 0.0;  // candidate_cost - best_cost
  double se = 0.0;           // Monte-Carlo error of the paired cost difference
  double tolerance = 0.0;
};

/// Sweeps one firm's capacity over [0, 1.5 x 99.9th percentile of its demand]
/// holding the others at the candidate, and checks the candidate is within
/// tolerance of the grid minimum. A grid (not a descent) because the sharing
/// cost can have several local minima.
inline VerificationResult verify_global_min(const Tariff& t, const SampleMatrix& s,
                                            std::size_t firm, const Allocation& candidate,
                                            std::size_t grid_resolution = 256) {
  if (grid_resolution < 2) throw std::invalid_argument("verify: grid_resolution must be >= 2");
  if (candidate.capacities.size() != s.firms) {
    throw std::invalid_argument("verify: allocation size mismatch");
  }
  const std::size_t n = s.days;
  const double c_cand = candidate.capacities[firm];
  const double others = candidate.total - c_cand;

  // order days by collective demand; suffix sums give O(log n) cost queries
  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), std::uint32_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::uint32_t a, std::uint32_t b) { return s.xc[a] < s.xc[b]; });
  std::vector<double> xs(n), col(n);
  for (std::size_t i = 0; i < n; ++i) {
    xs[i] = s.xc[order[i]];
    col[i] = s.at(order[i], firm);
  }
  std::vector<double> suffix(n + 1, 0.0);
  for (std::size_t i = n; i-- > 0;) suffix[i] = suffix[i + 1] + col[i];
  const double col_total = suffix[0];

  const auto cost_at = [&](double c) {
    const double thr = c + others;
    const std::size_t idx = static_cast<std::size_t>(
        std::upper_bound(xs.begin(), xs.end(), thr) - xs.begin());
    const double deficit_sum = suffix[idx];
    const double deficit_count = static_cast<double>(n - idx);
    const double surplus_sum = col_total - deficit_sum;
    const double surplus_count = static_cast<double>(idx);
    const double trade = t.pi_l() * (surplus_sum - c * surplus_count) +
                         t.pi_h() * (deficit_sum - c * deficit_count);
    return t.pi_s() * c + t.pi_l() * c + trade / static_cast<double>(n);
  };

  std::vector<double> sorted_col = col;
  std::sort(sorted_col.begin(), sorted_col.end());
  const double h999 = 0.999 * static_cast<double>(n - 1);
  const std::size_t i999 = std::min(static_cast<std::size_t>(h999), n - 2);
  const double q999 =
      sorted_col[i999] + (h999 - static_cast<double>(i999)) * (sorted_col[i999 + 1] - sorted_col[i999]);
  const double upper = std::max({1.5 * q999, 1.25 * c_cand, 1e-9});

  VerificationResult res;
  res.firm = firm;
  res.candidate_capacity = c_cand;
  res.candidate_cost = cost_at(c_cand);
  double lo_cost = res.candidate_cost, hi_cost = res.candidate_cost;
  res.best_capacity = c_cand;
  res.best_cost = res.candidate_cost;
  for (std::size_t i = 0; i < grid_resolution; ++i) {
    const double c = upper * static_cast<double>(i) / static_cast<double>(grid_resolution - 1);
    const double j = cost_at(c);
    lo_cost = std::min(lo_cost, j);
    hi_cost = std::max(hi_cost, j);
    if (j < res.best_cost) {
      res.best_cost = j;
      res.best_capacity = c;
    }
  }
  res.improvement = res.candidate_cost - res.best_cost;

  // paired Monte-Carlo error of (cost at candidate - cost at best)
  const double thr_a = c_cand + others;
  const double thr_b = res.best_capacity + others;
  const double shift = (t.pi_s() + t.pi_l()) * (c_cand - res.best_capacity);
  const double dmean = par::mean_over(n, [&](std::size_t d) {
    const double pa = s.xc[d] > thr_a ? t.pi_h() : t.pi_l();
    const double pb = s.xc[d] > thr_b ? t.pi_h() : t.pi_l();
    return shift + pa * (s.at(d, firm) - c_cand) - pb * (s.at(d, firm) - res.best_capacity);
  });
  const double dvar = par::mean_over(n, [&](std::size_t d) {
    const double pa = s.xc[d] > thr_a ? t.pi_h() : t.pi_l();
    const double pb = s.xc[d] > thr_b ? t.pi_h() : t.pi_l();
    const double v =
        shift + pa * (s.at(d, firm) - c_cand) - pb * (s.at(d, firm) - res.best_capacity);
    return (v - dmean) * (v - dmean);
  });
  res.se = std::sqrt(dvar / std::max(static_cast<double>(n - 1), 1.0));
  res.tolerance = std::max(res.se, 1e-3 * (hi_cost - lo_cost));
  res.pass = res.candidate_cost <= res.best_cost + res.tolerance;
  return res;
}

struct NashOptions {
  double bandwidth = 0.0;          // 0 = automatic
  bool check_alignment = true;
  bool verify = true;
  std::size_t grid_resolution = 256;
  std::size_t alignment_points = 17;
  int bootstrap = 48;
};

/// The unique Nash candidate of the storage investment game, with the
/// diagnostics that decide whether it actually is an equilibrium.
struct NashSolution {
  double gamma = 0.0;
  double bandwidth = 0.0;            // kernel bandwidth actually used
  Estimate q;                        // collective capacity at the critical fractile
  Allocation allocation;             // per-firm conditional means at q
  std::vector<double> capacity_se;
  std::vector<Estimate> j_star;      // per-firm equilibrium daily cost
  bool alignment_checked = false;
  AlignmentReport alignment;
  bool verification_run = false;
  bool all_verified = true;
  std::vector<VerificationResult> verification;
};

/// Computes the equilibrium candidate from one shared sample matrix:
/// Q = empirical gamma-quantile of the collective demand, per-firm capacity
/// E[X_k | X_c = Q], and per-firm cost pi_l E[X_k] + pi_s E[X_k | X_c >= Q].
inline NashSolution nash_equilibrium(const Tariff& t, const SampleMatrix& s,
                                     const NashOptions& opt = {}) {
  NashSolution sol;
  sol.gamma = arbitrage_constant(t);
  ConditionalMeanEstimator est(s, opt.bandwidth);
  sol.bandwidth = est.bandwidth();
  sol.q = est.xc_quantile_stat(sol.gamma);
  const double q = sol.q.value;

  std::vector<double> caps(s.firms);
  sol.capacity_se.resize(s.firms);
  for (std::size_t k = 0; k < s.firms; ++k) {
    const Estimate c = est.at_stat(k, q, opt.bootstrap);
    caps[k] = std::max(c.value, 0.0);
    sol.capacity_se[k] = c.se;
  }
  sol.allocation = Allocation::of(std::move(caps));

  // per-firm overall and tail means on the shared sample
  std::vector<double> mean_k(s.firms, 0.0), tail_k(s.firms, 0.0);
  std::size_t tail_count = 0;
  for (std::size_t d = 0; d < s.days; ++d) {
    const bool in_tail = s.xc[d] >= q;
    if (in_tail) ++tail_count;
    for (std::size_t k = 0; k < s.firms; ++k) {
      mean_k[k] += s.at(d, k);
      if (in_tail) tail_k[k] += s.at(d, k);
    }
  }
  sol.j_star.resize(s.firms);
  for (std::size_t k = 0; k < s.firms; ++k) {
    const double m = mean_k[k] / static_cast<double>(s.days);
    const double tail_mean = tail_count ? tail_k[k] / static_cast<double>(tail_count) : 0.0;
    sol.j_star[k].value = t.pi_l() * m + t.pi_s() * tail_mean;
  }

  // bootstrap errors for the per-firm costs (shared day weights)
  const int B = std::max(opt.bootstrap, 2);
  std::vector<double> reps(static_cast<std::size_t>(B) * s.firms);
  par::for_each_chunk(static_cast<std::size_t>(B), 1, [&](std::size_t, std::size_t rb, std::size_t re) {
    std::vector<double> wsum_x(s.firms), wsum_tail_x(s.firms);
    for (std::size_t r = rb; r < re; ++r) {
      const std::uint64_t key = rng::fmix64(s.seed + 0x6a737461) + rng::kGolden * (r + 1);
      std::fill(wsum_x.begin(), wsum_x.end(), 0.0);
      std::fill(wsum_tail_x.begin(), wsum_tail_x.end(), 0.0);
      double wsum = 0.0, wsum_tail = 0.0;
      for (std::size_t d = 0; d < s.days; ++d) {
        const int w = rng::poisson1(rng::fmix64(key ^ (0x9e37 + d)));
        if (w == 0) continue;
        wsum += w;
        const bool in_tail = s.xc[d] >= q;
        if (in_tail) wsum_tail += w;
        for (std::size_t k = 0; k < s.firms; ++k) {
          wsum_x[k] += w * s.at(d, k);
          if (in_tail) wsum_tail_x[k] += w * s.at(d, k);
        }
      }
      for (std::size_t k = 0; k < s.firms; ++k) {
        const double m = wsum > 0.0 ? wsum_x[k] / wsum : 0.0;
        const double tm = wsum_tail > 0.0 ? wsum_tail_x[k] / wsum_tail : 0.0;
        reps[r * s.firms + k] = t.pi_l() * m + t.pi_s() * tm;
      }
    }
  });
  for (std::size_t k = 0; k < s.firms; ++k) {
    double mean = 0.0;
    for (int r = 0; r < B; ++r) mean += reps[static_cast<std::size_t>(r) * s.firms + k];
    mean /= B;
    double var = 0.0;
    for (int r = 0; r < B; ++r) {
      const double v = reps[static_cast<std::size_t>(r) * s.firms + k];
      var += (v - mean) * (v - mean);
    }
    sol.j_star[k].se = std::sqrt(var / (B - 1));
  }

  if (opt.check_alignment) {
    sol.alignment_checked = true;
    const auto grid = default_alignment_grid(est, opt.alignment_points);
    sol.alignment = alignment_check(s, grid, opt.bandwidth, opt.bootstrap);
  }
  if (opt.verify) {
    sol.verification_run = true;
    sol.verification.resize(s.firms);
    for (std::size_t k = 0; k < s.firms; ++k) {
      sol.verification[k] = verify_global_min(t, s, k, sol.allocation, opt.grid_resolution);
      if (!sol.verification[k].pass) sol.all_verified = false;
    }
  }
  return sol;
}

}  // namespace storshare
