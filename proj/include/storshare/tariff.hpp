// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <stdexcept>

#include "storshare/common.hpp"

namespace storshare {

/// Two-period time-of-use tariff. Prices are currency-cents per kWh; pi_s is
/// the capital cost of one kWh of storage capacity amortized per day.
/// Validated at construction; downstream code assumes a valid tariff.
class Tariff {
 public:
  Tariff(double peak, double off_peak, double storage_per_day)
      : pi_h_(peak), pi_l_(off_peak), pi_s_(storage_per_day) {
    if (!(std::isfinite(pi_h_) && std::isfinite(pi_l_) && std::isfinite(pi_s_))) {
      throw std::invalid_argument("tariff: prices must be finite");
    }
    if (!(pi_l_ >= 0.0)) throw std::invalid_argument("tariff: pi_l must be >= 0");
    if (!(pi_h_ > pi_l_)) throw std::invalid_argument("tariff: pi_h must exceed pi_l");
    if (!(pi_s_ >= 0.0)) throw std::invalid_argument("tariff: pi_s must be >= 0");
  }

  double pi_h() const { return pi_h_; }
  double pi_l() const { return pi_l_; }
  double pi_s() const { return pi_s_; }

  /// Arbitrage price: the peak/off-peak spread.
  double pi_delta() const { return pi_h_ - pi_l_; }

  /// True iff storage can pay for itself by shifting peak demand off-peak.
  bool arbitrage_viable() const { return pi_s_ < pi_delta(); }

 private:
  double pi_h_;
  double pi_l_;
  double pi_s_;
};

/// Charge/discharge efficiencies in (0,1]; (1,1) is ideal storage.
class Efficiency {
 public:
  Efficiency() = default;
  Efficiency(double charge, double discharge) : eta_i_(charge), eta_o_(discharge) {
    if (!(eta_i_ > 0.0 && eta_i_ <= 1.0)) {
      throw std::invalid_argument("efficiency: eta_i must be in (0,1]");
    }
    if (!(eta_o_ > 0.0 && eta_o_ <= 1.0)) {
      throw std::invalid_argument("efficiency: eta_o must be in (0,1]");
    }
  }

  double eta_i() const { return eta_i_; }
  double eta_o() const { return eta_o_; }
  bool ideal() const { return eta_i_ == 1.0 && eta_o_ == 1.0; }

 private:
  double eta_i_ = 1.0;
  double eta_o_ = 1.0;
};

/// Arbitrage constant gamma = (pi_delta - pi_s) / pi_delta, the critical
/// fractile that fixes optimal storage as a demand quantile.
inline double arbitrage_constant(const Tariff& t) {
  if (!t.arbitrage_viable()) {
    throw no_arbitrage_error("no arbitrage: pi_s >= pi_h - pi_l");
  }
  return (t.pi_delta() - t.pi_s()) / t.pi_delta();
}

/// Critical fractile with non-ideal storage. Charging inefficiency inflates
/// the off-peak price, discharging inefficiency discounts the peak price;
/// reduces to arbitrage_constant when both efficiencies are 1.
inline double lossy_threshold(const Tariff& t, const Efficiency& e) {
  const double spread = t.pi_h() * e.eta_o() - t.pi_l() / e.eta_i();
  const double numer = spread - t.pi_s();
  if (!(numer > 0.0)) {
    throw no_arbitrage_error("no arbitrage with lossy storage: pi_h*eta_o - pi_l/eta_i <= pi_s");
  }
  return numer / spread;
}

}  // namespace storshare
