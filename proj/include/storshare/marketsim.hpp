// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>
#include <vector>

#include "storshare/sharing.hpp"

namespace storshare {

/// Day-by-day record of the sharing spot market for a fixed allocation.
/// Storage fully discharges each peak period (unsold surplus goes to the
/// book at the off-peak price), so days are independent and no storage state
/// carries over.
struct MarketLedger {
  std::size_t days = 0;
  std::size_t firms = 0;
  std::vector<double> allocation;  // C_k
  double total_capacity = 0.0;

  // per day
  std::vector<double> surplus;  // S
  std::vector<double> deficit;  // D
  std::vector<double> price;    // clearing price

  // per day x firm
  std::vector<double> bought;  // kWh bought at the clearing price
  std::vector<double> sold;    // kWh sold at the clearing price
  std::vector<double> cost;    // realized daily cost

  struct Summary {
    std::vector<double> mean_cost;
    std::vector<double> mean_cost_se;
    std::vector<double> mean_demand;
    std::vector<double> delta_s;  // savings vs buying everything at peak
    double mean_price = 0.0;
    double mean_price_se = 0.0;
  } summary;
};

/// Clears the market every day: surplus and deficit decide the price, every
/// firm settles its imbalance at that price and recharges at off-peak.
inline MarketLedger simulate(const Tariff& t, const SampleMatrix& s, const Allocation& alloc) {
  if (alloc.capacities.size() != s.firms) {
    throw std::invalid_argument("simulate: allocation must have one capacity per firm");
  }
  MarketLedger led;
  led.days = s.days;
  led.firms = s.firms;
  led.allocation = alloc.capacities;
  led.total_capacity = alloc.total;
  led.surplus.resize(s.days);
  led.deficit.resize(s.days);
  led.price.resize(s.days);
  led.bought.resize(s.days * s.firms);
  led.sold.resize(s.days * s.firms);
  led.cost.resize(s.days * s.firms);

  par::for_each_chunk(s.days, par::kChunk, [&](std::size_t, std::size_t b, std::size_t e) {
    for (std::size_t d = b; d < e; ++d) {
      double surplus = 0.0, deficit = 0.0;
      for (std::size_t k = 0; k < s.firms; ++k) {
        const double x = s.at(d, k);
        const double c = alloc.capacities[k];
        if (c >= x) {
          surplus += c - x;
        } else {
          deficit += x - c;
        }
      }
      const double price = s.xc[d] > alloc.total ? t.pi_h() : t.pi_l();
      led.surplus[d] = surplus;
      led.deficit[d] = deficit;
      led.price[d] = price;
      for (std::size_t k = 0; k < s.firms; ++k) {
        const double x = s.at(d, k);
        const double c = alloc.capacities[k];
        led.bought[d * s.firms + k] = x > c ? x - c : 0.0;
        led.sold[d * s.firms + k] = c > x ? c - x : 0.0;
        led.cost[d * s.firms + k] = t.pi_s() * c + t.pi_l() * c + price * (x - c);
      }
    }
  });

  led.summary.mean_cost.resize(s.firms);
  led.summary.mean_cost_se.resize(s.firms);
  led.summary.mean_demand.resize(s.firms);
  led.summary.delta_s.resize(s.firms);
  const double denom = std::max(static_cast<double>(s.days - 1), 1.0);
  for (std::size_t k = 0; k < s.firms; ++k) {
    const double mc =
        par::mean_over(s.days, [&](std::size_t d) { return led.cost[d * s.firms + k]; });
    const double vc = par::mean_over(s.days, [&](std::size_t d) {
      const double v = led.cost[d * s.firms + k] - mc;
      return v * v;
    });
    led.summary.mean_cost[k] = mc;
    led.summary.mean_cost_se[k] = std::sqrt(vc / denom);
    led.summary.mean_demand[k] =
        par::mean_over(s.days, [&](std::size_t d) { return s.at(d, k); });
    led.summary.delta_s[k] = t.pi_h() * led.summary.mean_demand[k] - led.summary.mean_cost[k];
  }
  led.summary.mean_price = par::mean_over(s.days, [&](std::size_t d) { return led.price[d]; });
  const double vp = par::mean_over(s.days, [&](std::size_t d) {
    const double v = led.price[d] - led.summary.mean_price;
    return v * v;
  });
  led.summary.mean_price_se = std::sqrt(vp / denom);
  return led;
}

/// One CSV row per day per firm; stable schema for downstream diffing.
inline void write_ledger_csv(const MarketLedger& led, const SampleMatrix& s, std::ostream& os) {
  os << "day,firm,demand_kwh,capacity_kwh,surplus_kwh,deficit_kwh,price,bought_kwh,sold_kwh,cost\n";
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    os << buf;
  };
  for (std::size_t d = 0; d < led.days; ++d) {
    for (std::size_t k = 0; k < led.firms; ++k) {
      os << d << ',' << k << ',';
      num(s.at(d, k));
      os << ',';
      num(led.allocation[k]);
      os << ',';
      num(led.surplus[d]);
      os << ',';
      num(led.deficit[d]);
      os << ',';
      num(led.price[d]);
      os << ',';
      num(led.bought[d * led.firms + k]);
      os << ',';
      num(led.sold[d * led.firms + k]);
      os << ',';
      num(led.cost[d * led.firms + k]);
      os << '\n';
    }
  }
}

/// Per-firm comparison of the three regimes: no storage, optimal standalone
/// storage, and the sharing equilibrium.
struct SavingsRow {
  std::size_t firm = 0;
  double mean_demand = 0.0;
  double j_none = 0.0;           // peak-price cost with no storage
  Estimate j_standalone;         // optimal standalone cost
  Estimate j_nash;               // equilibrium cost under sharing
  double c_standalone = 0.0;
  double c_nash = 0.0;
  double delta_ns = 0.0;         // j_none - j_standalone
  double delta_s = 0.0;          // j_none - j_nash
};

struct SavingsReport {
  std::vector<SavingsRow> firms;
  double mean_delta_ns = 0.0;
  double mean_delta_s = 0.0;
  double standalone_total_capacity = 0.0;
  double nash_total_capacity = 0.0;
  NashSolution nash;
};

/// Arbitrage savings per firm, both without sharing and at the sharing
/// equilibrium, from one shared sample matrix.
inline SavingsReport savings_report(const Tariff& t, const SampleMatrix& s,
                                    const NashOptions& opt_in = {}) {
  NashOptions opt = opt_in;
  opt.verify = false;
  SavingsReport rep;
  rep.nash = nash_equilibrium(t, s, opt);
  const double gamma = rep.nash.gamma;

  rep.firms.resize(s.firms);
  par::for_each_chunk(s.firms, 1, [&](std::size_t, std::size_t kb, std::size_t ke) {
    for (std::size_t k = kb; k < ke; ++k) {
      SavingsRow& row = rep.firms[k];
      row.firm = k;
      std::vector<double> col = s.column(k);
      std::vector<double> sorted = col;
      std::sort(sorted.begin(), sorted.end());
      const double h = gamma * static_cast<double>(s.days - 1);
      const std::size_t i = std::min(static_cast<std::size_t>(h), s.days - 2);
      const double c_opt =
          sorted[i] + (h - static_cast<double>(i)) * (sorted[i + 1] - sorted[i]);

      double mean = 0.0, tail = 0.0;
      std::size_t n_tail = 0;
      for (double v : col) {
        mean += v;
        if (v >= c_opt) {
          tail += v;
          ++n_tail;
        }
      }
      mean /= static_cast<double>(s.days);
      const double tail_mean = n_tail ? tail / static_cast<double>(n_tail) : 0.0;

      row.mean_demand = mean;
      row.j_none = t.pi_h() * mean;
      row.c_standalone = c_opt;
      row.j_standalone.value = t.pi_l() * mean + t.pi_s() * tail_mean;
      row.c_nash = rep.nash.allocation.capacities[k];
      row.j_nash = rep.nash.j_star[k];

      // bootstrap the standalone cost (threshold held fixed)
      const int B = std::max(opt.bootstrap, 2);
      double rsum = 0.0, rsq = 0.0;
      for (int r = 0; r < B; ++r) {
        const std::uint64_t key = rng::fmix64(s.seed + 0x73617665 + k) + rng::kGolden * (r + 1);
        double wm = 0.0, wc = 0.0, wt = 0.0, wtc = 0.0;
        for (std::size_t d = 0; d < s.days; ++d) {
          const int w = rng::poisson1(rng::fmix64(key ^ (0x9e37 + d)));
          if (w == 0) continue;
          wm += w * col[d];
          wc += w;
          if (col[d] >= c_opt) {
            wt += w * col[d];
            wtc += w;
          }
        }
        const double m = wc > 0.0 ? wm / wc : 0.0;
        const double tm = wtc > 0.0 ? wt / wtc : 0.0;
        const double v = t.pi_l() * m + t.pi_s() * tm;
        rsum += v;
        rsq += v * v;
      }
      const double rmean = rsum / B;
      row.j_standalone.se = std::sqrt(std::max(rsq / B - rmean * rmean, 0.0) *
                                      (static_cast<double>(B) / (B - 1)));

      row.delta_ns = row.j_none - row.j_standalone.value;
      row.delta_s = row.j_none - row.j_nash.value;
    }
  });

  for (const SavingsRow& row : rep.firms) {
    rep.mean_delta_ns += row.delta_ns;
    rep.mean_delta_s += row.delta_s;
    rep.standalone_total_capacity += row.c_standalone;
  }
  rep.mean_delta_ns /= static_cast<double>(s.firms);
  rep.mean_delta_s /= static_cast<double>(s.firms);
  rep.nash_total_capacity = rep.nash.allocation.total;
  return rep;
}

}  // namespace storshare
