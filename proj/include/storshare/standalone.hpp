// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "storshare/distribution.hpp"
#include "storshare/parallel.hpp"
#include "storshare/tariff.hpp"

namespace storshare {

/// Optimal storage purchase for a firm that does not share.
struct StandaloneSolution {
  double c_opt = 0.0;       // kWh of capacity
  double j_opt = 0.0;       // expected daily cost, currency/day
  double gamma_used = 0.0;  // critical fractile that fixed c_opt
};

/// Expected daily cost of a standalone firm holding capacity c:
/// capital outlay, deficit bought at peak price, recharge at off-peak price.
inline double standalone_cost(const Tariff& t, const Distribution& dist, double c) {
  const double excess = dist.expected_excess(c);
  return t.pi_s() * c + t.pi_h() * excess + t.pi_l() * (dist.mean() - excess);
}

/// Monte-Carlo version over observed daily demands.
inline double standalone_cost(const Tariff& t, std::span<const double> demand, double c) {
  return par::mean_over(demand.size(), [&](std::size_t i) {
    const double x = demand[i];
    const double deficit = x > c ? x - c : 0.0;
    return t.pi_s() * c + t.pi_h() * deficit + t.pi_l() * std::min(c, x);
  });
}

/// Capacity at the critical fractile plus the resulting cost, expressed as
/// off-peak energy cost plus the storage premium on tail demand.
inline StandaloneSolution optimal_standalone(const Tariff& t, const Distribution& dist) {
  const double gamma = arbitrage_constant(t);
  const double c = dist.quantile(gamma);
  const double j = t.pi_l() * dist.mean() + t.pi_s() * dist.tail_conditional_mean(c);
  return {c, j, gamma};
}

/// Daily cost with charge/discharge losses. A full store can deliver only
/// eta_o * c to the peak period, and replacing every delivered kWh costs
/// pi_l / (eta_i * eta_o) off-peak.
inline double standalone_cost_lossy(const Tariff& t, const Efficiency& e,
                                    const Distribution& dist, double c) {
  const double usable = e.eta_o() * c;
  const double excess = dist.expected_excess(usable);
  const double delivered = dist.mean() - excess;  // E[min(eta_o c, X)]
  return t.pi_s() * c + t.pi_h() * excess + t.pi_l() / (e.eta_i() * e.eta_o()) * delivered;
}

inline double standalone_cost_lossy(const Tariff& t, const Efficiency& e,
                                    std::span<const double> demand, double c) {
  const double usable = e.eta_o() * c;
  return par::mean_over(demand.size(), [&](std::size_t i) {
    const double x = demand[i];
    const double deficit = x > usable ? x - usable : 0.0;
    return t.pi_s() * c + t.pi_h() * deficit +
           t.pi_l() / (e.eta_i() * e.eta_o()) * std::min(usable, x);
  });
}

/// Optimal sizing with non-ideal storage: the usable energy eta_o * c sits at
/// the lossy critical fractile of demand.
inline StandaloneSolution optimal_standalone_lossy(const Tariff& t, const Efficiency& e,
                                                   const Distribution& dist) {
  const double threshold = lossy_threshold(t, e);
  const double c = dist.quantile(threshold) / e.eta_o();
  return {c, standalone_cost_lossy(t, e, dist, c), threshold};
}

}  // namespace storshare
