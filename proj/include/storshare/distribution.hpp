// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "storshare/common.hpp"
#include "storshare/math.hpp"

namespace storshare {

namespace detail {

// 16-point Gauss-Legendre nodes/weights on [0,1]; exact for polynomials up to
// degree 31, which covers every piecewise-polynomial survival function below.
inline constexpr double kGlNode[16] = {
    0.0052995325041750, 0.0277124884633837, 0.0671843988060841, 0.1222977958224985,
    0.1910618777986781, 0.2709916111713863, 0.3591982246103705, 0.4524937450811813,
    0.5475062549188188, 0.6408017753896295, 0.7290083888286137, 0.8089381222013219,
    0.8777022041775015, 0.9328156011939159, 0.9722875115366163, 0.9947004674958250};
inline constexpr double kGlWeight[16] = {
    0.0135762297058770, 0.0311267619693239, 0.0475792558412464, 0.0623144856277669,
    0.0747979944082884, 0.0845782596975013, 0.0913017075224618, 0.0947253052275343,
    0.0947253052275343, 0.0913017075224618, 0.0845782596975013, 0.0747979944082884,
    0.0623144856277669, 0.0475792558412464, 0.0311267619693239, 0.0135762297058770};

inline double binomial(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r *= static_cast<double>(n - k + i) / static_cast<double>(i);
  return r;
}

// CDF of the sum of n iid U(0,1) variables.
inline double irwin_hall_cdf(double y, int n) {
  if (y <= 0.0) return 0.0;
  if (y >= static_cast<double>(n)) return 1.0;
  double fact = 1.0;
  for (int i = 2; i <= n; ++i) fact *= i;
  const int kmax = static_cast<int>(std::floor(y));
  double sum = 0.0;
  double sign = 1.0;
  for (int k = 0; k <= kmax; ++k) {
    sum += sign * binomial(n, k) * std::pow(y - k, n);
    sign = -sign;
  }
  return std::clamp(sum / fact, 0.0, 1.0);
}

struct Uniform {
  double a, b;
};
struct TruncatedGaussian {
  double mu, sigma;
  double mass;  // P(N(mu,sigma) >= 0)
};
struct Lognormal {
  double mu, sigma;
};
struct SumUniforms {
  int count;
  double scale;
};
struct Empirical {
  std::vector<double> sorted;  // ascending
  double total;                // sum of samples
  std::string label;
};

}  // namespace detail

/// One-dimensional demand law on [0, inf) exposing the CDF, the generalized
/// inverse (quantile), the mean, and the partial expectation E[(X-c)^+] that
/// every cost formula is built from. Immutable after construction.
class Distribution {
 public:
  static Distribution uniform(double a, double b) {
    if (!(a >= 0.0) || !(b >= a) || !std::isfinite(a) || !std::isfinite(b)) {
      throw std::invalid_argument("uniform: need 0 <= a <= b, finite");
    }
    return Distribution(detail::Uniform{a, b}, "uniform");
  }

  /// Gaussian truncated below at zero.
  static Distribution truncated_gaussian(double mu, double sigma) {
    if (!(sigma > 0.0) || !std::isfinite(mu) || !std::isfinite(sigma)) {
      throw std::invalid_argument("truncated-gaussian: need sigma > 0, finite");
    }
    const double mass = 1.0 - math::normal_cdf(-mu / sigma);
    if (!(mass > 1e-300)) {
      throw std::invalid_argument("truncated-gaussian: no mass on [0, inf)");
    }
    return Distribution(detail::TruncatedGaussian{mu, sigma, mass}, "truncated-gaussian");
  }

  static Distribution lognormal(double mu, double sigma) {
    if (!(sigma > 0.0) || !std::isfinite(mu) || !std::isfinite(sigma)) {
      throw std::invalid_argument("lognormal: need sigma > 0, finite");
    }
    return Distribution(detail::Lognormal{mu, sigma}, "lognormal");
  }

  /// scale * (U_1 + ... + U_count) with U_i iid uniform on (0,1).
  static Distribution sum_of_uniforms(int count, double scale = 1.0) {
    if (count < 1 || count > 12) {
      throw std::invalid_argument("sum-of-uniforms: count must be in [1,12]");
    }
    if (!(scale > 0.0) || !std::isfinite(scale)) {
      throw std::invalid_argument("sum-of-uniforms: scale must be > 0");
    }
    return Distribution(detail::SumUniforms{count, scale}, "sum-of-uniforms");
  }

  /// Law of g(W) for W uniform on [0, range]; represented on a dense
  /// deterministic grid. Supported transforms: identity, w-sin2 (w sin^2 w),
  /// w-cos2 (w cos^2 w).
  static Distribution transform_of_uniform(const std::string& id, double range,
                                           std::size_t resolution = 200000) {
    if (!(range > 0.0) || !std::isfinite(range)) {
      throw std::invalid_argument("transform-of-uniform: range must be > 0");
    }
    if (resolution < 2) throw std::invalid_argument("transform-of-uniform: resolution < 2");
    std::vector<double> values(resolution);
    for (std::size_t j = 0; j < resolution; ++j) {
      const double w = (static_cast<double>(j) + 0.5) / static_cast<double>(resolution) * range;
      if (id == "identity") {
        values[j] = w;
      } else if (id == "w-sin2") {
        const double s = std::sin(w);
        values[j] = w * s * s;
      } else if (id == "w-cos2") {
        const double c = std::cos(w);
        values[j] = w * c * c;
      } else {
        throw std::invalid_argument("transform-of-uniform: unknown transform '" + id + "'");
      }
    }
    std::sort(values.begin(), values.end());
    return from_sorted(std::move(values), "transform-of-uniform(" + id + ")");
  }

  /// Interpolated empirical law of the given samples (all >= 0, at least 2).
  static Distribution empirical(std::vector<double> samples) {
    if (samples.size() < 2) {
      throw std::invalid_argument("empirical: need at least 2 samples");
    }
    for (double v : samples) {
      if (!(v >= 0.0) || !std::isfinite(v)) {
        throw std::invalid_argument("empirical: samples must be finite and >= 0");
      }
    }
    std::sort(samples.begin(), samples.end());
    return from_sorted(std::move(samples), "empirical");
  }

  const std::string& kind() const { return kind_; }

  double cdf(double x) const {
    return std::visit([&](const auto& d) { return cdf_impl(d, x); }, impl_);
  }

  /// Generalized inverse inf{x : F(x) >= p}; linear interpolation between
  /// order statistics for the empirical kind. p must lie in [0,1].
  double quantile(double p) const {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw std::out_of_range("quantile: p must be in [0,1]");
    }
    return std::visit([&](const auto& d) { return quantile_impl(d, p); }, impl_);
  }

  double mean() const {
    return std::visit([&](const auto& d) { return mean_impl(d); }, impl_);
  }

  /// E[(X - c)^+].
  double expected_excess(double c) const {
    return std::visit([&](const auto& d) { return excess_impl(d, c); }, impl_);
  }

  /// E[min(c, X)] = E[X] - E[(X - c)^+].
  double expected_min(double c) const { return mean() - expected_excess(c); }

  /// E[X | X >= c]; 0 when the tail carries no mass. Empirical kinds use the
  /// plain average of samples at or above c.
  double tail_conditional_mean(double c) const {
    if (const auto* e = std::get_if<detail::Empirical>(&impl_)) {
      const auto& v = e->sorted;
      const auto it = std::lower_bound(v.begin(), v.end(), c);
      const std::size_t n_tail = static_cast<std::size_t>(v.end() - it);
      if (n_tail == 0) return 0.0;
      return std::accumulate(it, v.end(), 0.0) / static_cast<double>(n_tail);
    }
    const double tail = 1.0 - cdf(c);
    if (!(tail > 1e-12)) return 0.0;
    const double cc = std::max(c, 0.0);
    return cc + expected_excess(cc) / tail;
  }

  /// Sorted samples for the empirical kind; empty otherwise.
  std::span<const double> samples() const {
    if (const auto* e = std::get_if<detail::Empirical>(&impl_)) return e->sorted;
    return {};
  }

 private:
  using Impl = std::variant<detail::Uniform, detail::TruncatedGaussian, detail::Lognormal,
                            detail::SumUniforms, detail::Empirical>;

  Distribution(Impl impl, std::string kind) : impl_(std::move(impl)), kind_(std::move(kind)) {}

  static Distribution from_sorted(std::vector<double> sorted, std::string label) {
    const double total = std::accumulate(sorted.begin(), sorted.end(), 0.0);
    detail::Empirical e{std::move(sorted), total, label};
    return Distribution(Impl(std::move(e)), std::move(label));
  }

  // ---- uniform ----
  static double cdf_impl(const detail::Uniform& d, double x) {
    if (d.b == d.a) return x >= d.a ? 1.0 : 0.0;
    if (x <= d.a) return 0.0;
    if (x >= d.b) return 1.0;
    return (x - d.a) / (d.b - d.a);
  }
  static double quantile_impl(const detail::Uniform& d, double p) {
    return d.a + p * (d.b - d.a);
  }
  static double mean_impl(const detail::Uniform& d) { return 0.5 * (d.a + d.b); }
  static double excess_impl(const detail::Uniform& d, double c) {
    if (c <= d.a) return mean_impl(d) - c;
    if (c >= d.b) return 0.0;
    return (d.b - c) * (d.b - c) / (2.0 * (d.b - d.a));
  }

  // ---- truncated gaussian ----
  static double cdf_impl(const detail::TruncatedGaussian& d, double x) {
    if (x <= 0.0) return 0.0;
    const double z = (x - d.mu) / d.sigma;
    const double z0 = -d.mu / d.sigma;
    return std::clamp((math::normal_cdf(z) - math::normal_cdf(z0)) / d.mass, 0.0, 1.0);
  }
  static double quantile_impl(const detail::TruncatedGaussian& d, double p) {
    const double base = math::normal_cdf(-d.mu / d.sigma);
    const double q = d.mu + d.sigma * math::normal_quantile(base + p * d.mass);
    return std::max(q, 0.0);
  }
  static double mean_impl(const detail::TruncatedGaussian& d) {
    const double z0 = -d.mu / d.sigma;
    return d.mu + d.sigma * math::normal_pdf(z0) / d.mass;
  }
  static double excess_impl(const detail::TruncatedGaussian& d, double c) {
    if (c <= 0.0) return mean_impl(d) - c;
    const double zc = (c - d.mu) / d.sigma;
    const double raw = d.sigma * math::normal_pdf(zc) + (d.mu - c) * (1.0 - math::normal_cdf(zc));
    return std::max(raw / d.mass, 0.0);
  }

  // ---- lognormal ----
  static double cdf_impl(const detail::Lognormal& d, double x) {
    if (x <= 0.0) return 0.0;
    return math::normal_cdf((std::log(x) - d.mu) / d.sigma);
  }
  static double quantile_impl(const detail::Lognormal& d, double p) {
    if (p <= 0.0) return 0.0;
    return std::exp(d.mu + d.sigma * math::normal_quantile(p));
  }
  static double mean_impl(const detail::Lognormal& d) {
    return std::exp(d.mu + 0.5 * d.sigma * d.sigma);
  }
  static double excess_impl(const detail::Lognormal& d, double c) {
    if (c <= 0.0) return mean_impl(d) - c;
    const double z = (std::log(c) - d.mu) / d.sigma;
    const double m = mean_impl(d);
    return std::max(m * math::normal_cdf(d.sigma - z) - c * (1.0 - math::normal_cdf(z)), 0.0);
  }

  // ---- sum of uniforms ----
  static double cdf_impl(const detail::SumUniforms& d, double x) {
    return detail::irwin_hall_cdf(x / d.scale, d.count);
  }
  static double quantile_impl(const detail::SumUniforms& d, double p) {
    if (p <= 0.0) return 0.0;
    if (p >= 1.0) return d.scale * d.count;
    double lo = 0.0, hi = static_cast<double>(d.count);
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      (detail::irwin_hall_cdf(mid, d.count) < p ? lo : hi) = mid;
    }
    return d.scale * 0.5 * (lo + hi);
  }
  static double mean_impl(const detail::SumUniforms& d) {
    return 0.5 * d.scale * d.count;
  }
  static double excess_impl(const detail::SumUniforms& d, double c) {
    if (c <= 0.0) return mean_impl(d) - c;
    const double y0 = c / d.scale;
    const double n = static_cast<double>(d.count);
    if (y0 >= n) return 0.0;
    // integral of the survival function, segment by unit interval
    double acc = 0.0;
    for (int k = static_cast<int>(std::floor(y0)); k < d.count; ++k) {
      const double lo = std::max(y0, static_cast<double>(k));
      const double hi = static_cast<double>(k + 1);
      if (hi <= lo) continue;
      double seg = 0.0;
      for (int g = 0; g < 16; ++g) {
        const double y = lo + detail::kGlNode[g] * (hi - lo);
        seg += detail::kGlWeight[g] * (1.0 - detail::irwin_hall_cdf(y, d.count));
      }
      acc += seg * (hi - lo);
    }
    return d.scale * acc;
  }

  // ---- empirical (interpolated order statistics) ----
  static double cdf_impl(const detail::Empirical& d, double x) {
    const auto& v = d.sorted;
    const std::size_t n = v.size();
    if (x < v.front()) return 0.0;
    if (x >= v.back()) return 1.0;
    if (n == 1) return 1.0;
    // largest j with v[j] <= x, then interpolate into the next segment
    const std::size_t j =
        static_cast<std::size_t>(std::upper_bound(v.begin(), v.end(), x) - v.begin()) - 1;
    const double denom = static_cast<double>(n - 1);
    if (v[j + 1] > v[j]) {
      return (static_cast<double>(j) + (x - v[j]) / (v[j + 1] - v[j])) / denom;
    }
    return static_cast<double>(j) / denom;
  }
  static double quantile_impl(const detail::Empirical& d, double p) {
    const auto& v = d.sorted;
    const std::size_t n = v.size();
    if (n == 1) return v[0];
    const double h = p * static_cast<double>(n - 1);
    const std::size_t i = std::min(static_cast<std::size_t>(h), n - 2);
    return v[i] + (h - static_cast<double>(i)) * (v[i + 1] - v[i]);
  }
  static double mean_impl(const detail::Empirical& d) {
    return d.total / static_cast<double>(d.sorted.size());
  }
  static double excess_impl(const detail::Empirical& d, double c) {
    const auto& v = d.sorted;
    const auto it = std::lower_bound(v.begin(), v.end(), c);
    double s = 0.0;
    for (auto p = it; p != v.end(); ++p) s += *p - c;
    return s / static_cast<double>(v.size());
  }

  Impl impl_;
  std::string kind_;
};

/// Empirical distribution of observed daily demands.
inline Distribution fit_empirical(std::span<const double> samples) {
  return Distribution::empirical(std::vector<double>(samples.begin(), samples.end()));
}

}  // namespace storshare
