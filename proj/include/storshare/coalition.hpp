// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "storshare/sharing.hpp"

namespace storshare {

/// Disjoint firm-index blocks covering {0..n-1}.
struct Partition {
  std::vector<std::vector<std::size_t>> blocks;

  static Partition of(std::vector<std::vector<std::size_t>> blocks, std::size_t n_firms) {
    std::vector<bool> seen(n_firms, false);
    std::size_t covered = 0;
    for (const auto& b : blocks) {
      if (b.empty()) throw std::invalid_argument("partition: empty block");
      for (std::size_t k : b) {
        if (k >= n_firms) throw std::invalid_argument("partition: firm index out of range");
        if (seen[k]) throw std::invalid_argument("partition: blocks must be disjoint");
        seen[k] = true;
        ++covered;
      }
    }
    if (covered != n_firms) throw std::invalid_argument("partition: blocks must cover all firms");
    return Partition{std::move(blocks)};
  }

  static Partition singletons(std::size_t n_firms) {
    std::vector<std::vector<std::size_t>> b(n_firms);
    for (std::size_t k = 0; k < n_firms; ++k) b[k] = {k};
    return Partition{std::move(b)};
  }
};

/// Equilibrium of the game induced by treating each block as one player with
/// the block's summed demand. The collective demand column is shared with
/// the original sample, so block capacities match member sums up to
/// estimator linearity.
inline NashSolution induced_game_nash(const Tariff& t, const SampleMatrix& s,
                                      const Partition& partition, const NashOptions& opt = {}) {
  Partition::of(partition.blocks, s.firms);  // validate against this sample
  const SampleMatrix grouped = s.aggregate_blocks(partition.blocks);
  return nash_equilibrium(t, grouped, opt);
}

struct BlockStability {
  std::vector<std::size_t> members;
  double cost_in_grand = 0.0;  // sum of members' equilibrium costs
  double cost_alone = 0.0;     // block running its own sharing coalition
  double surplus = 0.0;        // cost_alone - cost_in_grand
  double se = 0.0;
  bool ok = true;              // surplus >= -4 se
};

struct StabilityReport {
  NashSolution grand;
  std::vector<BlockStability> blocks;
  bool stable = true;
};

/// Compares each block's total cost inside the grand coalition against the
/// block operating as its own sharing coalition. Under alignment every block
/// weakly prefers to stay.
inline StabilityReport stability_report(const Tariff& t, const SampleMatrix& s,
                                        const Partition& partition, const NashOptions& opt_in = {}) {
  Partition::of(partition.blocks, s.firms);
  NashOptions opt = opt_in;
  opt.verify = false;
  StabilityReport report;
  report.grand = nash_equilibrium(t, s, opt);
  const double gamma = report.grand.gamma;
  const double q_grand = report.grand.q.value;

  for (const auto& members : partition.blocks) {
    BlockStability bs;
    bs.members = members;
    for (std::size_t k : members) bs.cost_in_grand += report.grand.j_star[k].value;

    // block demand per day
    std::vector<double> xa(s.days);
    for (std::size_t d = 0; d < s.days; ++d) {
      double v = 0.0;
      for (std::size_t k : members) v += s.at(d, k);
      xa[d] = v;
    }
    std::vector<double> xa_sorted = xa;
    std::sort(xa_sorted.begin(), xa_sorted.end());
    const double h = gamma * static_cast<double>(s.days - 1);
    const std::size_t i = std::min(static_cast<std::size_t>(h), s.days - 2);
    const double q_alone =
        xa_sorted[i] + (h - static_cast<double>(i)) * (xa_sorted[i + 1] - xa_sorted[i]);

    double mean = 0.0, tail_own = 0.0, tail_joint = 0.0;
    std::size_t n_own = 0, n_joint = 0;
    for (std::size_t d = 0; d < s.days; ++d) {
      mean += xa[d];
      if (xa[d] >= q_alone) {
        tail_own += xa[d];
        ++n_own;
      }
      if (s.xc[d] >= q_grand) {
        tail_joint += xa[d];
        ++n_joint;
      }
    }
    mean /= static_cast<double>(s.days);
    const double tmean_own = n_own ? tail_own / static_cast<double>(n_own) : 0.0;
    const double tmean_joint = n_joint ? tail_joint / static_cast<double>(n_joint) : 0.0;
    bs.cost_alone = t.pi_l() * mean + t.pi_s() * tmean_own;
    bs.surplus = t.pi_s() * (tmean_own - tmean_joint);

    // bootstrap the tail-mean gap with shared day weights
    const int B = std::max(opt.bootstrap, 2);
    std::vector<double> reps(static_cast<std::size_t>(B));
    for (int r = 0; r < B; ++r) {
      const std::uint64_t key = rng::fmix64(s.seed + 0x73746162) + rng::kGolden * (r + 1);
      double so = 0.0, co = 0.0, sj = 0.0, cj = 0.0;
      for (std::size_t d = 0; d < s.days; ++d) {
        const int w = rng::poisson1(rng::fmix64(key ^ (0x9e37 + d)));
        if (w == 0) continue;
        if (xa[d] >= q_alone) {
          so += w * xa[d];
          co += w;
        }
        if (s.xc[d] >= q_grand) {
          sj += w * xa[d];
          cj += w;
        }
      }
      const double own = co > 0.0 ? so / co : 0.0;
      const double joint = cj > 0.0 ? sj / cj : 0.0;
      reps[static_cast<std::size_t>(r)] = t.pi_s() * (own - joint);
    }
    double rmean = 0.0;
    for (double v : reps) rmean += v;
    rmean /= static_cast<double>(reps.size());
    double rvar = 0.0;
    for (double v : reps) rvar += (v - rmean) * (v - rmean);
    bs.se = std::sqrt(rvar / static_cast<double>(reps.size() - 1));
    bs.ok = bs.surplus >= -(4.0 * bs.se + 1e-12);
    if (!bs.ok) report.stable = false;
    report.blocks.push_back(std::move(bs));
  }
  return report;
}

/// Outcome of one firm joining an existing sharing coalition.
struct JoinOutcome {
  Estimate q_before;
  Estimate q_after;
  double delta_capacity = 0.0;            // additional collective storage to buy
  double entrant_capacity = 0.0;
  std::vector<double> capacity_before;    // incumbents, old equilibrium
  std::vector<double> capacity_after;     // incumbents + entrant, new equilibrium
  std::vector<double> reallocation;       // per-incumbent capacity change
  std::vector<double> payment_per_day;    // reallocation valued at pi_s
  std::vector<Estimate> j_before;         // incumbents
  std::vector<Estimate> j_after;          // incumbents + entrant
  std::vector<std::size_t> worse_off;     // incumbents whose cost rose beyond noise
};

/// Re-solves the investment game after an entrant joins. The collective
/// optimum can only grow, so incumbents top up rather than divest; their
/// individual shares shift, settled as capacity deltas valued at the
/// amortized storage price.
inline JoinOutcome join(const Tariff& t, const SampleMatrix& before, const SampleMatrix& after,
                        const NashOptions& opt_in = {}) {
  if (after.firms != before.firms + 1) {
    throw std::invalid_argument("join: 'after' must have exactly one extra firm");
  }
  NashOptions opt = opt_in;
  opt.verify = false;
  opt.check_alignment = false;
  const NashSolution a = nash_equilibrium(t, before, opt);
  const NashSolution b = nash_equilibrium(t, after, opt);

  JoinOutcome out;
  out.q_before = a.q;
  out.q_after = b.q;
  out.delta_capacity = b.q.value - a.q.value;
  out.capacity_before = a.allocation.capacities;
  out.capacity_after = b.allocation.capacities;
  out.entrant_capacity = b.allocation.capacities.back();
  out.j_before = a.j_star;
  out.j_after = b.j_star;
  out.reallocation.resize(before.firms);
  out.payment_per_day.resize(before.firms + 1);
  for (std::size_t k = 0; k < before.firms; ++k) {
    out.reallocation[k] = b.allocation.capacities[k] - a.allocation.capacities[k];
    out.payment_per_day[k] = t.pi_s() * out.reallocation[k];
    const double se =
        std::sqrt(a.j_star[k].se * a.j_star[k].se + b.j_star[k].se * b.j_star[k].se);
    if (b.j_star[k].value > a.j_star[k].value + 4.0 * se) out.worse_off.push_back(k);
  }
  out.payment_per_day[before.firms] = t.pi_s() * out.entrant_capacity;
  return out;
}

}  // namespace storshare
