// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "storshare/distribution.hpp"
#include "storshare/parallel.hpp"
#include "storshare/rng.hpp"

namespace storshare {

/// Daily peak-period demand draws: days x firms, row-major, with the
/// per-day collective demand cached. Produced deterministically from a seed.
struct SampleMatrix {
  std::size_t days = 0;
  std::size_t firms = 0;
  std::uint64_t seed = 0;
  std::vector<double> values;  // days * firms
  std::vector<double> xc;      // per-day row sums

  double at(std::size_t day, std::size_t firm) const { return values[day * firms + firm]; }
  std::span<const double> row(std::size_t day) const {
    return {values.data() + day * firms, firms};
  }

  std::vector<double> column(std::size_t firm) const {
    std::vector<double> out(days);
    for (std::size_t d = 0; d < days; ++d) out[d] = values[d * firms + firm];
    return out;
  }

  void rebuild_totals() {
    xc.assign(days, 0.0);
    for (std::size_t d = 0; d < days; ++d) {
      double s = 0.0;
      for (std::size_t k = 0; k < firms; ++k) s += values[d * firms + k];
      xc[d] = s;
    }
  }

  static SampleMatrix from_rows(std::size_t days, std::size_t firms,
                                std::vector<double> row_major, std::uint64_t seed = 0) {
    if (row_major.size() != days * firms) {
      throw std::invalid_argument("sample matrix: size mismatch");
    }
    SampleMatrix m;
    m.days = days;
    m.firms = firms;
    m.seed = seed;
    m.values = std::move(row_major);
    m.rebuild_totals();
    return m;
  }

  /// Keeps the listed firms (in the given order); totals are rebuilt.
  SampleMatrix select(std::span<const std::size_t> keep) const {
    SampleMatrix m;
    m.days = days;
    m.firms = keep.size();
    m.seed = seed;
    m.values.resize(days * keep.size());
    for (std::size_t d = 0; d < days; ++d) {
      for (std::size_t j = 0; j < keep.size(); ++j) {
        m.values[d * m.firms + j] = at(d, keep[j]);
      }
    }
    m.rebuild_totals();
    return m;
  }

  /// Sums columns within each block; the collective demand column is copied
  /// from this matrix so both views share bit-identical totals.
  SampleMatrix aggregate_blocks(const std::vector<std::vector<std::size_t>>& blocks) const {
    SampleMatrix m;
    m.days = days;
    m.firms = blocks.size();
    m.seed = seed;
    m.values.resize(days * blocks.size());
    for (std::size_t d = 0; d < days; ++d) {
      for (std::size_t b = 0; b < blocks.size(); ++b) {
        double s = 0.0;
        for (std::size_t k : blocks[b]) s += at(d, k);
        m.values[d * m.firms + b] = s;
      }
    }
    m.xc = xc;
    return m;
  }
};

namespace detail {

/// Cholesky factor tolerant of positive-semidefinite input (exhausted pivots
/// produce zero columns, e.g. correlation exactly 1).
inline std::vector<double> cholesky_psd(const std::vector<double>& a, std::size_t n) {
  std::vector<double> L(n * n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    double d = a[j * n + j];
    for (std::size_t k = 0; k < j; ++k) d -= L[j * n + k] * L[j * n + k];
    if (d > 1e-12) {
      const double root = std::sqrt(d);
      L[j * n + j] = root;
      for (std::size_t i = j + 1; i < n; ++i) {
        double s = a[i * n + j];
        for (std::size_t k = 0; k < j; ++k) s -= L[i * n + k] * L[j * n + k];
        L[i * n + j] = s / root;
      }
    } else if (d > -1e-8) {
      // semidefinite direction already spanned by earlier columns
      L[j * n + j] = 0.0;
    } else {
      throw std::invalid_argument("correlation matrix is not positive semidefinite");
    }
  }
  return L;
}

inline void validate_correlation(const std::vector<double>& c, std::size_t n) {
  if (c.size() != n * n) throw std::invalid_argument("correlation: wrong size");
  for (std::size_t i = 0; i < n; ++i) {
    if (std::abs(c[i * n + i] - 1.0) > 1e-12) {
      throw std::invalid_argument("correlation: diagonal must be 1");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (std::abs(c[i * n + j] - c[j * n + i]) > 1e-12) {
        throw std::invalid_argument("correlation: must be symmetric");
      }
    }
  }
}

}  // namespace detail

/// Joint daily demand law for n firms. Immutable; sampling is pure given a
/// seed and bit-identical under any thread count.
class DemandModel {
 public:
  enum class Coupling { independent, gaussian_copula, w_trig, paired_empirical, augmented };

  static DemandModel independent(std::vector<Distribution> marginals) {
    require_firms(marginals.size());
    DemandModel m(Coupling::independent);
    m.marginals_ = std::move(marginals);
    return m;
  }

  static DemandModel gaussian_copula(std::vector<Distribution> marginals,
                                     std::vector<double> correlation) {
    require_firms(marginals.size());
    const std::size_t n = marginals.size();
    if (n > 64) throw std::invalid_argument("gaussian-copula: at most 64 firms");
    detail::validate_correlation(correlation, n);
    DemandModel m(Coupling::gaussian_copula);
    m.chol_ = detail::cholesky_psd(correlation, n);
    m.marginals_ = std::move(marginals);
    return m;
  }

  static DemandModel gaussian_copula_equicorr(std::vector<Distribution> marginals, double rho) {
    const std::size_t n = marginals.size();
    std::vector<double> c(n * n, rho);
    for (std::size_t i = 0; i < n; ++i) c[i * n + i] = 1.0;
    return gaussian_copula(std::move(marginals), std::move(c));
  }

  /// Two firms driven by one uniform draw W on [0, range]:
  /// X1 = W sin^2 W and X2 = W - X1, so the collective demand is exactly W.
  static DemandModel w_trig(double range = 10.0) {
    if (!(range > 0.0)) throw std::invalid_argument("w-trig: range must be > 0");
    DemandModel m(Coupling::w_trig);
    m.range_ = range;
    m.marginals_.push_back(Distribution::transform_of_uniform("w-sin2", range));
    m.marginals_.push_back(Distribution::transform_of_uniform("w-cos2", range));
    return m;
  }

  /// Day-paired historical demands; sampling bootstraps whole days so the
  /// cross-firm coupling observed in the data is preserved.
  static DemandModel paired_empirical(std::size_t firms, std::vector<double> day_rows) {
    require_firms(firms);
    if (day_rows.empty() || day_rows.size() % firms != 0) {
      throw std::invalid_argument("paired-empirical: row data must be days*firms");
    }
    const std::size_t rows = day_rows.size() / firms;
    if (rows < 2) throw std::invalid_argument("paired-empirical: need at least 2 days");
    for (double v : day_rows) {
      if (!(v >= 0.0) || !std::isfinite(v)) {
        throw std::invalid_argument("paired-empirical: entries must be finite and >= 0");
      }
    }
    DemandModel m(Coupling::paired_empirical);
    m.data_ = std::move(day_rows);
    m.data_rows_ = rows;
    for (std::size_t k = 0; k < firms; ++k) {
      std::vector<double> col(rows);
      for (std::size_t r = 0; r < rows; ++r) col[r] = m.data_[r * firms + k];
      m.marginals_.push_back(Distribution::empirical(std::move(col)));
    }
    return m;
  }

  /// Extends this model with one more firm. rho couples the entrant to the
  /// copula when the base model is a Gaussian copula; otherwise the entrant
  /// draws independently.
  DemandModel with_entrant(Distribution entrant, double rho = 0.0) const {
    if (coupling_ == Coupling::independent && rho == 0.0) {
      auto margs = marginals_;
      margs.push_back(std::move(entrant));
      return independent(std::move(margs));
    }
    if (coupling_ == Coupling::gaussian_copula || coupling_ == Coupling::independent) {
      const std::size_t n = marginals_.size();
      std::vector<double> corr((n + 1) * (n + 1), 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          corr[i * (n + 1) + j] = coupling_ == Coupling::independent
                                      ? (i == j ? 1.0 : 0.0)
                                      : base_correlation_entry(i, j);
        }
      }
      for (std::size_t i = 0; i < n; ++i) {
        corr[i * (n + 1) + n] = rho;
        corr[n * (n + 1) + i] = rho;
      }
      corr[n * (n + 1) + n] = 1.0;
      auto margs = marginals_;
      margs.push_back(std::move(entrant));
      return gaussian_copula(std::move(margs), std::move(corr));
    }
    if (rho != 0.0) {
      throw std::invalid_argument("with_entrant: correlated entrant needs a copula base");
    }
    DemandModel m(Coupling::augmented);
    m.base_ = std::make_shared<DemandModel>(*this);
    m.marginals_ = marginals_;
    m.marginals_.push_back(std::move(entrant));
    return m;
  }

  Coupling coupling() const { return coupling_; }
  std::size_t firms() const { return marginals_.size(); }
  const std::vector<Distribution>& marginals() const { return marginals_; }

  SampleMatrix sample(std::size_t days, std::uint64_t seed) const {
    if (days < 1) throw std::invalid_argument("sample: days must be >= 1");
    SampleMatrix m;
    m.days = days;
    m.firms = firms();
    m.seed = seed;
    m.values.resize(days * m.firms);
    m.xc.resize(days);
    par::for_each_chunk(days, par::kChunk, [&](std::size_t, std::size_t b, std::size_t e) {
      for (std::size_t d = b; d < e; ++d) {
        rng::Stream stream = rng::day_stream(seed, d);
        double* out = m.values.data() + d * m.firms;
        sample_row(stream, out);
        double s = 0.0;
        for (std::size_t k = 0; k < m.firms; ++k) s += out[k];
        m.xc[d] = s;
      }
    });
    return m;
  }

 private:
  explicit DemandModel(Coupling c) : coupling_(c) {}

  static void require_firms(std::size_t n) {
    if (n < 1) throw std::invalid_argument("demand model: need at least one firm");
  }

  double base_correlation_entry(std::size_t i, std::size_t j) const {
    // recover A = L L^T from the stored factor
    const std::size_t n = marginals_.size();
    double s = 0.0;
    for (std::size_t k = 0; k < n; ++k) s += chol_[i * n + k] * chol_[j * n + k];
    return s;
  }

  void sample_row(rng::Stream& stream, double* out) const {
    const std::size_t n = firms();
    switch (coupling_) {
      case Coupling::independent:
        for (std::size_t k = 0; k < n; ++k) out[k] = marginals_[k].quantile(stream.next_unit());
        return;
      case Coupling::gaussian_copula: {
        double z[64];
        double y[64];
        for (std::size_t k = 0; k < n; ++k) z[k] = stream.next_normal();
        for (std::size_t i = 0; i < n; ++i) {
          double s = 0.0;
          for (std::size_t k = 0; k <= i; ++k) s += chol_[i * n + k] * z[k];
          y[i] = s;
        }
        for (std::size_t k = 0; k < n; ++k) {
          out[k] = marginals_[k].quantile(math::normal_cdf(y[k]));
        }
        return;
      }
      case Coupling::w_trig: {
        const double w = stream.next_unit() * range_;
        const double s = std::sin(w);
        out[0] = w * s * s;
        out[1] = w - out[0];
        return;
      }
      case Coupling::paired_empirical: {
        const double u = stream.next_unit();
        std::size_t r = static_cast<std::size_t>(u * static_cast<double>(data_rows_));
        if (r >= data_rows_) r = data_rows_ - 1;
        const double* src = data_.data() + r * n;
        for (std::size_t k = 0; k < n; ++k) out[k] = src[k];
        return;
      }
      case Coupling::augmented: {
        base_->sample_row(stream, out);
        out[n - 1] = marginals_.back().quantile(stream.next_unit());
        return;
      }
    }
  }

  Coupling coupling_;
  std::vector<Distribution> marginals_;
  std::vector<double> chol_;
  double range_ = 0.0;
  std::vector<double> data_;
  std::size_t data_rows_ = 0;
  std::shared_ptr<const DemandModel> base_;
};

}  // namespace storshare
