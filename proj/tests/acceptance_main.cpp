// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite: end-to-end checks of the library's headline guarantees,
// one pass/fail line per criterion. Exit code is the number of failures.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "storshare/coalition.hpp"
#include "storshare/marketsim.hpp"
#include "storshare/storshare.hpp"

using namespace storshare;

namespace {

struct Harness {
  int failures = 0;
  std::vector<std::string> notes;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      ++failures;
      notes.push_back(what);
    }
  }
  void near(double got, double want, double tol, const std::string& what) {
    if (!(std::abs(got - want) <= tol)) {
      ++failures;
      char buf[256];
      std::snprintf(buf, sizeof(buf), "%s: got %.6g, want %.6g +- %.3g", what.c_str(), got, want,
                    tol);
      notes.push_back(buf);
    }
  }
};

int g_failed = 0;

void run(int id, const std::string& name, const std::function<void(Harness&)>& fn,
         double time_limit_secs = 0.0) {
  Harness h;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    fn(h);
  } catch (const std::exception& e) {
    h.check(false, std::string("exception: ") + e.what());
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (time_limit_secs > 0.0 && secs > time_limit_secs) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "runtime %.1fs exceeds the %.0fs budget", secs,
                  time_limit_secs);
    h.check(false, buf);
  }
  if (h.failures == 0) {
    std::printf("[PASS] %02d %s (%.1fs)\n", id, name.c_str(), secs);
  } else {
    ++g_failed;
    std::printf("[FAIL] %02d %s (%.1fs)\n", id, name.c_str(), secs);
    for (const auto& n : h.notes) std::printf("       - %s\n", n.c_str());
  }
  std::fflush(stdout);
}

double sum2_quantile_closed_form(double g) {
  return g <= 0.5 ? std::sqrt(2.0 * g) : 2.0 - std::sqrt(2.0 - 2.0 * g);
}

double type7(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double h = p * static_cast<double>(v.size() - 1);
  const std::size_t i = std::min(static_cast<std::size_t>(h), v.size() - 2);
  return v[i] + (h - static_cast<double>(i)) * (v[i + 1] - v[i]);
}

// shared generator for randomized aligned demand models
Distribution random_marginal(rng::Stream& g) {
  const double pick = g.next_unit();
  if (pick < 0.34) {
    const double a = 0.3 * g.next_unit();
    return Distribution::uniform(a, a + 0.5 + 2.5 * g.next_unit());
  }
  if (pick < 0.67) {
    return Distribution::truncated_gaussian(1.0 + 3.0 * g.next_unit(),
                                            0.3 + 1.0 * g.next_unit());
  }
  return Distribution::lognormal(-0.3 + 1.0 * g.next_unit(), 0.25 + 0.3 * g.next_unit());
}

DemandModel random_aligned_model(rng::Stream& g, std::size_t n) {
  std::vector<Distribution> margs;
  for (std::size_t k = 0; k < n; ++k) margs.push_back(random_marginal(g));
  return DemandModel::gaussian_copula_equicorr(std::move(margs), 0.1 + 0.5 * g.next_unit());
}

Tariff random_tariff(rng::Stream& g) {
  const double pil = 5.0 + 20.0 * g.next_unit();
  const double delta = 10.0 + 30.0 * g.next_unit();
  const double gamma = 0.3 + 0.5 * g.next_unit();
  return Tariff(pil + delta, pil, (1.0 - gamma) * delta);
}

void criterion_pooling_curves(Harness& h) {
  const Distribution firm = Distribution::uniform(0.0, 1.0);
  const Distribution agg = Distribution::sum_of_uniforms(2);
  for (int i = 1; i <= 9; ++i) {
    const double gamma = 0.1 * i;
    h.near(firm.quantile(gamma), gamma, 1e-6, "per-firm optimum, analytic");
    const double d_exact = sum2_quantile_closed_form(gamma);
    h.near(agg.quantile(gamma), d_exact, 1e-6, "aggregate optimum, analytic");
    const double gap = 2.0 * gamma - d_exact;  // standalone pair minus pooled
    if (gamma < 0.5) h.check(gap < 0.0, "pooled optimum exceeds the pair below 0.5");
    if (gamma > 0.5) h.check(gap > 0.0, "pooled optimum trails the pair above 0.5");
  }
  h.near(agg.quantile(0.5), 1.0, 1e-6, "curves cross at 0.5");

  const DemandModel m = DemandModel::independent(
      {Distribution::uniform(0.0, 1.0), Distribution::uniform(0.0, 1.0)});
  const SampleMatrix s = m.sample(1000000, 20260808);
  const std::vector<double> col0 = s.column(0);
  std::vector<double> xc = s.xc;
  for (int i = 1; i <= 9; ++i) {
    const double gamma = 0.1 * i;
    h.near(type7(col0, gamma), gamma, 1e-2, "per-firm optimum, Monte Carlo");
    h.near(type7(xc, gamma), sum2_quantile_closed_form(gamma), 1e-2,
           "aggregate optimum, Monte Carlo");
  }
}

void criterion_no_nash(Harness& h) {
  const Tariff t(1.1, 0.1, 0.3);  // spread 1, storage 0.3 -> gamma 0.7
  const SampleMatrix s = DemandModel::w_trig(10.0).sample(1000000, 20260808);
  NashOptions opt;
  opt.grid_resolution = 512;
  const NashSolution sol = nash_equilibrium(t, s, opt);
  h.near(sol.q.value, 7.0, 0.02, "collective optimum Q");
  h.near(sol.allocation.capacities[0], 3.02, 0.05, "firm 1 candidate capacity");
  h.near(sol.allocation.capacities[1], 3.98, 0.05, "firm 2 candidate capacity");
  h.check(!sol.alignment.aligned, "alignment violation detected");
  h.check(sol.verification_run && !sol.verification[0].pass,
          "firm 1 candidate rejected by the grid check");
  h.check(sol.verification[0].improvement > 4.0 * sol.verification[0].se,
          "deviation improves firm 1 by more than 4 standard errors");
}

void criterion_no_arbitrage_identity(Harness& h) {
  rng::Stream g(0xACCE5701, 0);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + static_cast<std::size_t>(g.next_unit() * 4.0);
    const DemandModel m = random_aligned_model(g, n);
    const Tariff t = random_tariff(g);
    const SampleMatrix s = m.sample(100000, g.next_u64());
    NashOptions opt;
    opt.verify = false;
    opt.check_alignment = false;
    const NashSolution sol = nash_equilibrium(t, s, opt);
    const Estimate p = expected_clearing_price(t, s, sol.q.value);
    h.near(p.value, t.pi_s() + t.pi_l(), 4.0 * p.se + 1e-9,
           "mean clearing price at the equilibrium (trial " + std::to_string(trial) + ")");
  }
}

void criterion_sum_constraint(Harness& h) {
  rng::Stream g(0xACCE5702, 0);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + static_cast<std::size_t>(g.next_unit() * 4.0);
    const DemandModel m = random_aligned_model(g, n);
    const Tariff t = random_tariff(g);
    const SampleMatrix s = m.sample(100000, g.next_u64());
    NashOptions opt;
    opt.verify = false;
    opt.check_alignment = false;
    const NashSolution sol = nash_equilibrium(t, s, opt);
    double var = 0.0;
    for (double se : sol.capacity_se) var += se * se;
    h.near(sol.allocation.total, sol.q.value, 4.0 * std::sqrt(var) + 1e-9,
           "capacities sum to Q (trial " + std::to_string(trial) + ")");
  }
}

void criterion_rationality_and_stability(Harness& h) {
  rng::Stream g(0xACCE5703, 0);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 3 + static_cast<std::size_t>(g.next_unit() * 3.0);
    const DemandModel m = random_aligned_model(g, n);
    const Tariff t = random_tariff(g);
    const SampleMatrix s = m.sample(100000, g.next_u64());

    NashOptions opt;
    opt.verify = false;
    // individual rationality: each singleton block weakly prefers to stay
    const StabilityReport singles =
        stability_report(t, s, Partition::singletons(n), opt);
    h.check(singles.grand.alignment.aligned,
            "model is aligned (trial " + std::to_string(trial) + ")");
    for (const auto& b : singles.blocks) {
      h.check(b.ok, "firm " + std::to_string(b.members[0]) + " individually rational (trial " +
                        std::to_string(trial) + ")");
    }

    // one random 2-block partition
    std::vector<std::vector<std::size_t>> blocks(2);
    for (std::size_t k = 0; k < n; ++k) blocks[g.next_unit() < 0.5 ? 0 : 1].push_back(k);
    if (blocks[0].empty() || blocks[1].empty()) {
      blocks[0] = {0};
      blocks[1].clear();
      for (std::size_t k = 1; k < n; ++k) blocks[1].push_back(k);
    }
    NashOptions quiet = opt;
    quiet.check_alignment = false;
    const StabilityReport rep = stability_report(t, s, Partition::of(blocks, n), quiet);
    for (const auto& b : rep.blocks) {
      h.check(b.ok, "block stays in the coalition (trial " + std::to_string(trial) + ")");
    }
  }
}

void criterion_extensivity(Harness& h) {
  // pinned three-uniform case against the piecewise-CDF bisection oracle
  {
    const Tariff t(2.0, 1.0, 0.7);  // gamma 0.3
    const DemandModel base = DemandModel::independent(
        {Distribution::uniform(0.0, 1.0), Distribution::uniform(0.0, 1.0)});
    const DemandModel ext = base.with_entrant(Distribution::uniform(0.0, 1.0));
    const SampleMatrix before = base.sample(1000000, 20260808);
    const SampleMatrix after = ext.sample(1000000, 20260808);
    NashOptions opt;
    opt.bootstrap = 8;
    const JoinOutcome jo = join(t, before, after, opt);
    h.near(jo.q_before.value, oracle::bisect_quantile(oracle::sum2_cdf, 0.3, 0.0, 2.0), 0.01,
           "two-firm optimum vs piecewise oracle");
    h.near(jo.q_after.value, oracle::bisect_quantile(oracle::sum3_cdf, 0.3, 0.0, 3.0), 0.01,
           "three-firm optimum vs piecewise oracle");
    h.near(jo.q_after.value, 1.224, 0.01, "three-firm optimum literal value");
    h.check(jo.q_after.value >= jo.q_before.value, "joining grows the collective optimum");
  }

  rng::Stream g(0xACCE5706, 0);
  int violations = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + static_cast<std::size_t>(g.next_unit() * 2.0);
    const DemandModel base = random_aligned_model(g, n);
    const DemandModel ext = base.with_entrant(random_marginal(g), 0.0);
    const Tariff t = random_tariff(g);
    const std::uint64_t seed = g.next_u64();
    const SampleMatrix before = base.sample(20000, seed);
    const SampleMatrix after = ext.sample(20000, seed);
    NashOptions opt;
    opt.bootstrap = 8;
    const JoinOutcome jo = join(t, before, after, opt);
    const double tol =
        4.0 * std::sqrt(jo.q_before.se * jo.q_before.se + jo.q_after.se * jo.q_after.se);
    if (!(jo.q_after.value >= jo.q_before.value - tol)) ++violations;
  }
  h.check(violations == 0,
          "extensivity violated on " + std::to_string(violations) + " of 200 draws");
}

void criterion_single_firm_reduction(Harness& h) {
  const Tariff t(3.0, 1.0, 1.0);
  const SampleMatrix s =
      DemandModel::independent({Distribution::uniform(0.0, 1.0)}).sample(100000, 20260808);
  const std::vector<double> col = s.column(0);
  for (double c : {0.0, 0.37, 0.8}) {
    const MarketLedger led = simulate(t, s, Allocation::of({c}));
    const double direct = standalone_cost(t, std::span<const double>(col), c);
    h.near(led.summary.mean_cost[0], direct, 1e-12,
           "ledger mean equals the no-sharing cost at c=" + std::to_string(c));
  }
}

void criterion_lossy_storage(Harness& h) {
  const Tariff t(3.0, 1.0, 1.0);
  const Efficiency ideal(1.0, 1.0);
  const std::vector<Distribution> dists = {
      Distribution::uniform(0.0, 1.0), Distribution::truncated_gaussian(2.0, 0.8),
      Distribution::lognormal(0.0, 0.5), Distribution::sum_of_uniforms(2)};
  for (const auto& d : dists) {
    const StandaloneSolution a = optimal_standalone(t, d);
    const StandaloneSolution b = optimal_standalone_lossy(t, ideal, d);
    h.near(b.c_opt, a.c_opt, 1e-12, "ideal efficiency capacity, " + d.kind());
    h.near(b.j_opt, a.j_opt, 1e-12 * (1.0 + std::abs(a.j_opt)),
           "ideal efficiency cost, " + d.kind());
  }

  const Efficiency e(0.9, 0.8);
  const Distribution u = Distribution::uniform(0.0, 1.0);
  const StandaloneSolution s = optimal_standalone_lossy(t, e, u);
  h.near(s.c_opt, 0.2802, 2e-4, "lossy optimum on uniform demand");
  const double hi = 1.0 / e.eta_o() * 1.3;
  const auto [argmin, minval] = oracle::grid_min(
      [&](double c) { return standalone_cost_lossy(t, e, u, c); }, 0.0, hi, 20001);
  const double step = hi / 20000.0;
  h.near(s.c_opt, argmin, 2.0 * step, "quantile rule matches grid minimization");
  h.check(s.j_opt <= minval + 1e-9, "cost at the quantile rule is the grid minimum");
}

void criterion_cohort_savings(Harness& h) {
  const Tariff t(54.0, 21.5, 10.0);  // gamma ~ 0.692, above the pooling crossover
  rng::Stream g(0xACCE5709, 0);
  std::vector<Distribution> margs;
  for (int k = 0; k < 50; ++k) {
    margs.push_back(Distribution::lognormal(-0.2 + 0.8 * g.next_unit(), 0.5));
  }
  const DemandModel m = DemandModel::gaussian_copula_equicorr(std::move(margs), 0.5);
  const SampleMatrix s = m.sample(100000, 20260808);

  // measured mean pairwise correlation of the cohort
  std::vector<double> mean(s.firms, 0.0), sd(s.firms, 0.0);
  for (std::size_t k = 0; k < s.firms; ++k) {
    for (std::size_t d = 0; d < s.days; ++d) mean[k] += s.at(d, k);
    mean[k] /= static_cast<double>(s.days);
  }
  std::vector<double> centered(s.days * s.firms);
  for (std::size_t d = 0; d < s.days; ++d) {
    for (std::size_t k = 0; k < s.firms; ++k) {
      centered[d * s.firms + k] = s.at(d, k) - mean[k];
    }
  }
  for (std::size_t k = 0; k < s.firms; ++k) {
    double v = 0.0;
    for (std::size_t d = 0; d < s.days; ++d) {
      v += centered[d * s.firms + k] * centered[d * s.firms + k];
    }
    sd[k] = std::sqrt(v);
  }
  double corr_sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < s.firms; ++i) {
    for (std::size_t j = i + 1; j < s.firms; ++j) {
      double cov = 0.0;
      for (std::size_t d = 0; d < s.days; ++d) {
        cov += centered[d * s.firms + i] * centered[d * s.firms + j];
      }
      corr_sum += cov / (sd[i] * sd[j]);
      ++pairs;
    }
  }
  h.near(corr_sum / static_cast<double>(pairs), 0.5, 0.1, "mean pairwise demand correlation");

  NashOptions opt;
  opt.check_alignment = false;
  const SavingsReport rep = savings_report(t, s, opt);
  h.check(rep.mean_delta_s >= rep.mean_delta_ns - 1e-9,
          "sharing savings at least match standalone savings");
  // above the crossover fractile, pooling needs less storage than going alone
  h.check(rep.nash_total_capacity <= rep.standalone_total_capacity + 4.0 * rep.nash.q.se,
          "cohort equilibrium storage does not exceed the standalone total");
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "cohort storage: equilibrium %.1f kWh vs standalone %.1f kWh; savings %.1f vs %.1f "
                "cents/day",
                rep.nash_total_capacity, rep.standalone_total_capacity, rep.mean_delta_s,
                rep.mean_delta_ns);
  std::printf("       . %s\n", buf);
}

void criterion_convexity_first_order(Harness& h) {
  rng::Stream g(0xACCE570A, 0);
  for (int trial = 0; trial < 10; ++trial) {
    const Distribution d = random_marginal(g);
    const Tariff t = random_tariff(g);
    const StandaloneSolution sol = optimal_standalone(t, d);
    const double hi = std::max(d.quantile(0.999) * 1.2, sol.c_opt * 1.5 + 0.1);
    double prev_slope = -1e300;
    bool convex = true;
    for (int i = 0; i + 1 < 40; ++i) {
      const double a = hi * i / 39.0;
      const double b = hi * (i + 1) / 39.0;
      const double slope = (standalone_cost(t, d, b) - standalone_cost(t, d, a)) / (b - a);
      if (slope < prev_slope - 1e-7 * t.pi_h()) convex = false;
      prev_slope = slope;
    }
    h.check(convex, "cost slopes non-decreasing (trial " + std::to_string(trial) + ")");
    const double step = std::max(1e-4 * hi, 1e-8);
    const double foc =
        (standalone_cost(t, d, sol.c_opt + step) - standalone_cost(t, d, sol.c_opt - step)) /
        (2.0 * step);
    h.near(foc / t.pi_h(), 0.0, 1e-4,
           "relative first-order condition at the optimum (trial " + std::to_string(trial) + ")");
  }
}

}  // namespace

int main() {
  par::set_max_threads(par::max_threads());
  std::printf("storshare acceptance suite\n");

  run(1, "pooled vs standalone optima on the two-uniform example", criterion_pooling_curves,
      10.0);
  run(2, "equilibrium nonexistence on the trig transform model", criterion_no_nash, 30.0);
  run(3, "mean clearing price equals pi_s + pi_l at equilibrium", criterion_no_arbitrage_identity);
  run(4, "equilibrium capacities sum to the collective optimum", criterion_sum_constraint);
  run(5, "individual rationality and coalition stability", criterion_rationality_and_stability);
  run(6, "joining a coalition never shrinks the optimum", criterion_extensivity);
  run(7, "one-firm market reduces exactly to the no-sharing cost",
      criterion_single_firm_reduction);
  run(8, "non-ideal storage sizing", criterion_lossy_storage);
  run(9, "cohort savings and investment direction", criterion_cohort_savings);
  run(10, "no-sharing cost convexity and first-order optimality",
      criterion_convexity_first_order);

  if (g_failed == 0) {
    std::printf("all criteria passed\n");
  } else {
    std::printf("%d criteria FAILED\n", g_failed);
  }
  return g_failed;
}
