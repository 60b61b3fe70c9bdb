// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "storshare/common.hpp"
#include "storshare/demand_model.hpp"
#include "storshare/parallel.hpp"
#include "storshare/rng.hpp"

namespace storshare {

/// Silverman's rule of thumb on a sorted sample.
inline double silverman_bandwidth(std::span<const double> sorted) {
  const std::size_t n = sorted.size();
  if (n < 2) return 1.0;
  double mean = 0.0;
  for (double v : sorted) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : sorted) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n - 1);
  const double sd = std::sqrt(var);
  auto type7 = [&](double p) {
    const double h = p * static_cast<double>(n - 1);
    const std::size_t i = std::min(static_cast<std::size_t>(h), n - 2);
    return sorted[i] + (h - static_cast<double>(i)) * (sorted[i + 1] - sorted[i]);
  };
  const double iqr = type7(0.75) - type7(0.25);
  double a = sd;
  if (iqr > 0.0) a = std::min(a, iqr / 1.34);
  if (!(a > 0.0)) a = std::max(sd, 1e-12);
  return 0.9 * a * std::pow(static_cast<double>(n), -0.2);
}

/// Kernel-regression estimator of E[X_k | X_c = q] over one sample matrix.
///
/// Nadaraya-Watson with a Gaussian kernel, evaluated on the days whose
/// collective demand falls within +-8 bandwidths of q. The automatic
/// bandwidth is half of Silverman's density rule: the density rule
/// oversmooths regression targets, and halving it keeps the smoothing bias
/// an order of magnitude under the estimator noise at the sample sizes used
/// here. Standard errors come from a Poisson bootstrap over days.
class ConditionalMeanEstimator {
 public:
  explicit ConditionalMeanEstimator(const SampleMatrix& samples, double bandwidth = 0.0)
      : samples_(&samples) {
    const std::size_t n = samples.days;
    if (n < 2) throw std::invalid_argument("conditional mean: need at least 2 days");
    order_.resize(n);
    std::iota(order_.begin(), order_.end(), std::uint32_t{0});
    std::sort(order_.begin(), order_.end(), [&](std::uint32_t a, std::uint32_t b) {
      return samples.xc[a] < samples.xc[b] || (samples.xc[a] == samples.xc[b] && a < b);
    });
    xs_.resize(n);
    for (std::size_t i = 0; i < n; ++i) xs_[i] = samples.xc[order_[i]];
    silverman_ = silverman_bandwidth(xs_);
    h_ = bandwidth > 0.0 ? bandwidth : kAutoFactor * silverman_;
    if (!(h_ > 0.0)) h_ = 1e-12;
  }

  static constexpr double kAutoFactor = 0.5;

  double bandwidth() const { return h_; }
  double xc_low() const { return xs_.front(); }
  double xc_high() const { return xs_.back(); }
  std::span<const double> sorted_xc() const { return xs_; }
  std::size_t day_of(std::size_t sorted_index) const { return order_[sorted_index]; }

  /// Interpolated quantile of the collective demand sample.
  double xc_quantile(double p) const {
    if (!(p >= 0.0 && p <= 1.0)) throw std::out_of_range("xc_quantile: p outside [0,1]");
    const std::size_t n = xs_.size();
    const double h = p * static_cast<double>(n - 1);
    const std::size_t i = std::min(static_cast<std::size_t>(h), n - 2);
    return xs_[i] + (h - static_cast<double>(i)) * (xs_[i + 1] - xs_[i]);
  }

  /// Gaussian KDE of the collective-demand density (Silverman bandwidth).
  double xc_density(double x) const {
    const double h = silverman_;
    const auto [lo, hi] = window(x, h);
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
      const double t = (xs_[i] - x) / h;
      s += std::exp(-0.5 * t * t);
    }
    return s / (static_cast<double>(xs_.size()) * h * math::kSqrt2Pi);
  }

  /// Quantile with its plug-in standard error sqrt(p(1-p)/n) / f(q).
  Estimate xc_quantile_stat(double p) const {
    const double q = xc_quantile(p);
    const double f = std::max(xc_density(q), 1e-300);
    const double n = static_cast<double>(xs_.size());
    return {q, std::sqrt(std::max(p * (1.0 - p), 0.0) / n) / f};
  }

  /// Point estimate of E[X_firm | X_c = q]. q must lie inside the sampled
  /// collective-demand range; extrapolation is refused.
  double at(std::size_t firm, double q) const {
    check_range(q);
    const auto [lo, hi] = window(q, h_);
    double num = 0.0, den = 0.0;
    accumulate(firm, q, lo, hi, num, den);
    if (!(den > 0.0)) {
      // isolated query between distant points: fall back to nearest day
      const std::size_t i = nearest(q);
      return (*samples_).at(order_[i], firm);
    }
    return num / den;
  }

  /// Estimate with Poisson-bootstrap standard error (replicates > 1).
  Estimate at_stat(std::size_t firm, double q, int replicates = 48,
                   std::uint64_t salt = 0x626f6f74) const {
    const double base = at(firm, q);
    const auto [lo, hi] = window(q, h_);
    if (hi <= lo || replicates < 2) return {base, 0.0};
    std::vector<double> reps(static_cast<std::size_t>(replicates));
    par::for_each_chunk(reps.size(), 1, [&](std::size_t, std::size_t b, std::size_t e) {
      for (std::size_t r = b; r < e; ++r) {
        const std::uint64_t key =
            rng::fmix64(samples_->seed + salt) + rng::kGolden * (r + 1);
        double num = 0.0, den = 0.0;
        for (std::size_t i = lo; i < hi; ++i) {
          const int w = rng::poisson1(rng::fmix64(key ^ (0x9e37 + order_[i])));
          if (w == 0) continue;
          const double t = (xs_[i] - q) / h_;
          const double kw = std::exp(-0.5 * t * t) * w;
          num += kw * (*samples_).at(order_[i], firm);
          den += kw;
        }
        reps[r] = den > 0.0 ? num / den : base;
      }
    });
    double mean = 0.0;
    for (double v : reps) mean += v;
    mean /= static_cast<double>(reps.size());
    double var = 0.0;
    for (double v : reps) var += (v - mean) * (v - mean);
    var /= static_cast<double>(reps.size() - 1);
    return {base, std::sqrt(var)};
  }

 private:
  void check_range(double q) const {
    if (!(q >= xs_.front() && q <= xs_.back())) {
      throw std::out_of_range("conditional mean: q outside the sampled collective-demand range");
    }
  }

  std::pair<std::size_t, std::size_t> window(double x, double h) const {
    const double span = 8.0 * h;
    const auto lo = std::lower_bound(xs_.begin(), xs_.end(), x - span);
    const auto hi = std::upper_bound(xs_.begin(), xs_.end(), x + span);
    return {static_cast<std::size_t>(lo - xs_.begin()), static_cast<std::size_t>(hi - xs_.begin())};
  }

  std::size_t nearest(double q) const {
    const auto it = std::lower_bound(xs_.begin(), xs_.end(), q);
    if (it == xs_.begin()) return 0;
    if (it == xs_.end()) return xs_.size() - 1;
    const std::size_t i = static_cast<std::size_t>(it - xs_.begin());
    return (q - xs_[i - 1] <= xs_[i] - q) ? i - 1 : i;
  }

  void accumulate(std::size_t firm, double q, std::size_t lo, std::size_t hi, double& num,
                  double& den) const {
    struct Sums {
      double num = 0.0, den = 0.0;
    };
    const std::size_t count = hi - lo;
    const Sums total = par::reduce_chunks<Sums>(
        count, par::kChunk, Sums{},
        [&](std::size_t b, std::size_t e) {
          Sums s;
          for (std::size_t i = lo + b; i < lo + e; ++i) {
            const double t = (xs_[i] - q) / h_;
            const double w = std::exp(-0.5 * t * t);
            s.num += w * (*samples_).at(order_[i], firm);
            s.den += w;
          }
          return s;
        },
        [](Sums a, Sums b) {
          return Sums{a.num + b.num, a.den + b.den};
        });
    num = total.num;
    den = total.den;
  }

  const SampleMatrix* samples_;
  std::vector<std::uint32_t> order_;
  std::vector<double> xs_;
  double silverman_ = 0.0;
  double h_ = 0.0;
};

/// E[X_firm | X_c = q] from a sample matrix; bandwidth 0 selects the
/// automatic rule.
inline double conditional_mean(const SampleMatrix& samples, std::size_t firm, double q,
                               double bandwidth = 0.0) {
  return ConditionalMeanEstimator(samples, bandwidth).at(firm, q);
}

/// One finite-difference segment of the conditional-mean curve.
struct AlignmentSegment {
  double beta_lo = 0.0;
  double beta_hi = 0.0;
  double slope = 0.0;
  double slope_se = 0.0;
  bool violating = false;
};

struct FirmAlignment {
  std::size_t firm = 0;
  std::vector<double> estimates;  // conditional mean at each grid point
  std::vector<AlignmentSegment> segments;
  bool violating = false;
};

/// Result of testing d E[X_k | X_c = beta] / d beta >= 0 on a grid.
struct AlignmentReport {
  std::vector<double> grid;
  std::vector<FirmAlignment> firms;
  bool aligned = true;
};

/// Evenly spaced quantile grid of the collective demand, strictly inside the
/// sampled range.
inline std::vector<double> default_alignment_grid(const ConditionalMeanEstimator& est,
                                                  std::size_t points = 17, double p_lo = 0.05,
                                                  double p_hi = 0.95) {
  std::vector<double> grid;
  grid.reserve(points);
  for (std::size_t i = 0; i < points; ++i) {
    const double p = p_lo + (p_hi - p_lo) * static_cast<double>(i) /
                               static_cast<double>(points - 1);
    const double q = est.xc_quantile(p);
    if (grid.empty() || q > grid.back()) grid.push_back(q);
  }
  return grid;
}

/// Finite-difference slopes of each firm's conditional mean across the grid.
/// A segment is violating when its slope drops below -3 bootstrap standard
/// errors; the model is aligned when no firm has a violating segment.
inline AlignmentReport alignment_check(const SampleMatrix& samples, std::span<const double> grid,
                                       double bandwidth = 0.0, int replicates = 48,
                                       std::uint64_t salt = 0x616c6967) {
  ConditionalMeanEstimator est(samples, bandwidth);
  if (grid.size() < 2) throw std::invalid_argument("alignment: need at least 2 grid points");
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
    if (!(grid[i] < grid[i + 1])) {
      throw std::invalid_argument("alignment: grid must be strictly increasing");
    }
  }
  if (!(grid.front() >= est.xc_low() && grid.back() <= est.xc_high())) {
    throw std::out_of_range("alignment: grid outside the sampled collective-demand range");
  }

  AlignmentReport report;
  report.grid.assign(grid.begin(), grid.end());
  const std::size_t g = grid.size();
  const std::size_t n_firms = samples.firms;

  // base estimates
  std::vector<std::vector<double>> base(n_firms, std::vector<double>(g));
  for (std::size_t k = 0; k < n_firms; ++k) {
    for (std::size_t i = 0; i < g; ++i) base[k][i] = est.at(k, grid[i]);
  }

  // bootstrap replicates share day weights across grid points and firms
  const int B = std::max(replicates, 2);
  std::vector<double> rep_slopes(static_cast<std::size_t>(B) * n_firms * (g - 1));
  par::for_each_chunk(static_cast<std::size_t>(B), 1, [&](std::size_t, std::size_t rb, std::size_t re) {
    std::vector<double> m(n_firms);
    std::vector<double> prev(n_firms);
    for (std::size_t r = rb; r < re; ++r) {
      const std::uint64_t key = rng::fmix64(samples.seed + salt) + rng::kGolden * (r + 1);
      for (std::size_t i = 0; i < g; ++i) {
        const double q = grid[i];
        const auto xc = est.sorted_xc();
        const auto lo = std::lower_bound(xc.begin(), xc.end(), q - 8.0 * est.bandwidth());
        const auto hi = std::upper_bound(xc.begin(), xc.end(), q + 8.0 * est.bandwidth());
        std::vector<double> num(n_firms, 0.0);
        double den = 0.0;
        for (auto it = lo; it != hi; ++it) {
          const std::size_t si = static_cast<std::size_t>(it - xc.begin());
          const std::size_t day = est.day_of(si);
          const int w = rng::poisson1(rng::fmix64(key ^ (0x9e37 + day)));
          if (w == 0) continue;
          const double t = (*it - q) / est.bandwidth();
          const double kw = std::exp(-0.5 * t * t) * w;
          den += kw;
          for (std::size_t k = 0; k < n_firms; ++k) num[k] += kw * samples.at(day, k);
        }
        for (std::size_t k = 0; k < n_firms; ++k) {
          m[k] = den > 0.0 ? num[k] / den : base[k][i];
        }
        if (i > 0) {
          const double dx = grid[i] - grid[i - 1];
          for (std::size_t k = 0; k < n_firms; ++k) {
            rep_slopes[(r * n_firms + k) * (g - 1) + (i - 1)] = (m[k] - prev[k]) / dx;
          }
        }
        std::swap(m, prev);
      }
    }
  });

  report.firms.resize(n_firms);
  for (std::size_t k = 0; k < n_firms; ++k) {
    FirmAlignment& fa = report.firms[k];
    fa.firm = k;
    fa.estimates = base[k];
    fa.segments.resize(g - 1);
    for (std::size_t i = 0; i + 1 < g; ++i) {
      AlignmentSegment& seg = fa.segments[i];
      seg.beta_lo = grid[i];
      seg.beta_hi = grid[i + 1];
      seg.slope = (base[k][i + 1] - base[k][i]) / (grid[i + 1] - grid[i]);
      double mean = 0.0;
      for (int r = 0; r < B; ++r) {
        mean += rep_slopes[(static_cast<std::size_t>(r) * n_firms + k) * (g - 1) + i];
      }
      mean /= B;
      double var = 0.0;
      for (int r = 0; r < B; ++r) {
        const double v = rep_slopes[(static_cast<std::size_t>(r) * n_firms + k) * (g - 1) + i];
        var += (v - mean) * (v - mean);
      }
      var /= (B - 1);
      seg.slope_se = std::sqrt(var);
      seg.violating = seg.slope < -(3.0 * seg.slope_se + 1e-9);
      if (seg.violating) fa.violating = true;
    }
    if (fa.violating) report.aligned = false;
  }
  return report;
}

}  // namespace storshare
