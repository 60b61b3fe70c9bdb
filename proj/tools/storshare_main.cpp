// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: scenario-driven storage sizing, equilibrium
// computation, market simulation, savings comparison, coalition joining and
// meter-data ingestion. Every statistical number in the outputs carries its
// Monte-Carlo standard error, and (scenario, seed) determines every output
// byte.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "storshare/coalition.hpp"
#include "storshare/marketsim.hpp"
#include "storshare/scenario.hpp"
#include "storshare/storshare.hpp"

namespace ss = storshare;
using ss::json;

namespace {

struct CommonArgs {
  std::string scenario_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> days;
  std::string out = ".";
  unsigned threads = 0;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool needs_scenario = true) {
  auto* opt = cmd->add_option("--scenario", args.scenario_path, "Scenario JSON file");
  if (needs_scenario) opt->required();
  cmd->add_option("--seed", [&args](const std::vector<std::string>& v) {
        args.seed = std::stoull(v.back());
        return true;
      },
      "Override monte_carlo.seed");
  cmd->add_option("--days", [&args](const std::vector<std::string>& v) {
        args.days = std::stoull(v.back());
        return true;
      },
      "Override monte_carlo.days");
  cmd->add_option("--out", args.out, "Output directory (default .)");
  cmd->add_option("--threads", args.threads, "Worker thread cap (results are unaffected)");
}

ss::Scenario load(const CommonArgs& args) {
  if (args.threads) ss::par::set_max_threads(args.threads);
  return ss::load_scenario(args.scenario_path, args.seed, args.days);
}

void check_equilibrium_days(const ss::Scenario& sc) {
  if (sc.days < 1000) {
    throw ss::config_error("monte_carlo.days: equilibrium commands need at least 1000 days");
  }
  if (sc.days < 100000) {
    std::cerr << "warning: monte_carlo.days = " << sc.days
              << " is below 100000; estimates will be noisy\n";
  }
}

json stat_json(const ss::Estimate& e) {
  return json{{"estimate", e.value}, {"stderr", e.se}};
}

json output_header(const char* command, const ss::Scenario& sc) {
  json j;
  j["schema_version"] = ss::kSchemaVersion;
  j["command"] = command;
  j["scenario_hash"] = sc.hash;
  j["seed"] = sc.seed;
  j["days"] = sc.days;
  return j;
}

void emit(const CommonArgs& args, const std::string& filename, const json& j) {
  std::filesystem::create_directories(args.out);
  const std::string path = args.out + "/" + filename;
  std::ofstream f(path);
  if (!f) throw ss::data_error("cannot write '" + path + "'");
  f << j.dump(2) << "\n";
  std::cout << j.dump(2) << "\n";
}

json nash_json(const ss::NashSolution& sol, const std::vector<std::string>& ids) {
  json j;
  j["gamma"] = sol.gamma;
  j["bandwidth"] = sol.bandwidth;
  j["q"] = stat_json(sol.q);
  j["total_capacity"] = sol.allocation.total;
  json firms = json::array();
  for (std::size_t k = 0; k < sol.allocation.capacities.size(); ++k) {
    json f;
    f["firm"] = k;
    if (k < ids.size()) f["id"] = ids[k];
    f["capacity"] = json{{"estimate", sol.allocation.capacities[k]},
                         {"stderr", sol.capacity_se[k]}};
    f["j_star"] = stat_json(sol.j_star[k]);
    firms.push_back(std::move(f));
  }
  j["firms"] = std::move(firms);

  json al;
  al["checked"] = sol.alignment_checked;
  if (sol.alignment_checked) {
    al["aligned"] = sol.alignment.aligned;
    al["grid"] = sol.alignment.grid;
    json afirms = json::array();
    for (const auto& fa : sol.alignment.firms) {
      json f;
      f["firm"] = fa.firm;
      f["violating"] = fa.violating;
      json segs = json::array();
      for (const auto& seg : fa.segments) {
        segs.push_back(json{{"beta_lo", seg.beta_lo},
                            {"beta_hi", seg.beta_hi},
                            {"slope", seg.slope},
                            {"slope_stderr", seg.slope_se},
                            {"violating", seg.violating}});
      }
      f["segments"] = std::move(segs);
      afirms.push_back(std::move(f));
    }
    al["firms"] = std::move(afirms);
  }
  j["alignment"] = std::move(al);

  json ver;
  ver["run"] = sol.verification_run;
  if (sol.verification_run) {
    ver["all_pass"] = sol.all_verified;
    json vfirms = json::array();
    for (const auto& v : sol.verification) {
      vfirms.push_back(json{{"firm", v.firm},
                            {"pass", v.pass},
                            {"candidate_capacity", v.candidate_capacity},
                            {"candidate_cost", v.candidate_cost},
                            {"best_capacity", v.best_capacity},
                            {"best_cost", v.best_cost},
                            {"improvement", v.improvement},
                            {"stderr", v.se},
                            {"tolerance", v.tolerance}});
    }
    ver["firms"] = std::move(vfirms);
  }
  j["verification"] = std::move(ver);
  return j;
}

int run_standalone(const CommonArgs& args) {
  const ss::Scenario sc = load(args);
  json out = output_header("standalone", sc);
  const bool lossy = !sc.efficiency.ideal();
  out["lossy"] = lossy;
  out["gamma"] = lossy ? ss::lossy_threshold(sc.tariff, sc.efficiency)
                       : ss::arbitrage_constant(sc.tariff);
  json firms = json::array();
  double total = 0.0;
  for (std::size_t k = 0; k < sc.model.firms(); ++k) {
    const ss::StandaloneSolution s =
        lossy ? ss::optimal_standalone_lossy(sc.tariff, sc.efficiency, sc.model.marginals()[k])
              : ss::optimal_standalone(sc.tariff, sc.model.marginals()[k]);
    total += s.c_opt;
    firms.push_back(json{{"firm", k},
                         {"id", sc.firm_ids[k]},
                         {"c_opt", s.c_opt},
                         {"j_opt", s.j_opt}});
  }
  out["firms"] = std::move(firms);
  out["total_capacity"] = total;
  emit(args, "standalone.json", out);
  return 0;
}

int run_nash(const CommonArgs& args) {
  const ss::Scenario sc = load(args);
  check_equilibrium_days(sc);
  const ss::SampleMatrix samples = sc.model.sample(sc.days, sc.seed);
  const ss::NashSolution sol = ss::nash_equilibrium(sc.tariff, samples, sc.nash_options());
  json out = output_header("nash", sc);
  out.update(nash_json(sol, sc.firm_ids));

  if (!sc.analysis.stability_partitions.empty()) {
    json stab = json::array();
    for (const auto& blocks : sc.analysis.stability_partitions) {
      const ss::Partition p = ss::Partition::of(blocks, samples.firms);
      const ss::StabilityReport rep =
          ss::stability_report(sc.tariff, samples, p, sc.nash_options());
      json pj;
      pj["partition"] = blocks;
      pj["stable"] = rep.stable;
      json bj = json::array();
      for (const auto& b : rep.blocks) {
        bj.push_back(json{{"members", b.members},
                          {"cost_in_grand", b.cost_in_grand},
                          {"cost_alone", b.cost_alone},
                          {"surplus", b.surplus},
                          {"stderr", b.se},
                          {"ok", b.ok}});
      }
      pj["blocks"] = std::move(bj);
      stab.push_back(std::move(pj));
    }
    out["stability"] = std::move(stab);
  }
  emit(args, "nash.json", out);
  return 0;
}

int run_verify(const CommonArgs& args) {
  const ss::Scenario sc = load(args);
  check_equilibrium_days(sc);
  const ss::SampleMatrix samples = sc.model.sample(sc.days, sc.seed);
  ss::NashOptions opt = sc.nash_options();
  opt.verify = true;
  const ss::NashSolution sol = ss::nash_equilibrium(sc.tariff, samples, opt);
  json out = output_header("verify", sc);
  out.update(nash_json(sol, sc.firm_ids));
  emit(args, "verify.json", out);
  return 0;
}

int run_simulate(const CommonArgs& args, const std::string& allocation_source) {
  const ss::Scenario sc = load(args);
  const ss::SampleMatrix samples = sc.model.sample(sc.days, sc.seed);

  ss::Allocation alloc;
  std::string source = allocation_source;
  if (allocation_source == "nash") {
    check_equilibrium_days(sc);
    ss::NashOptions opt = sc.nash_options();
    opt.verify = false;
    opt.check_alignment = false;
    alloc = ss::nash_equilibrium(sc.tariff, samples, opt).allocation;
  } else if (allocation_source == "standalone") {
    const double gamma = ss::arbitrage_constant(sc.tariff);
    std::vector<double> caps;
    for (const auto& m : sc.model.marginals()) caps.push_back(m.quantile(gamma));
    alloc = ss::Allocation::of(std::move(caps));
  } else {
    std::ifstream f(allocation_source);
    if (!f) throw ss::config_error("cannot open allocation file '" + allocation_source + "'");
    json aj = json::parse(f);
    if (!aj.contains("capacities") || !aj["capacities"].is_array()) {
      throw ss::config_error("allocation file: expected {\"capacities\": [...]}");
    }
    std::vector<double> caps;
    for (const auto& e : aj["capacities"]) caps.push_back(e.get<double>());
    if (caps.size() != samples.firms) {
      throw ss::config_error("allocation file: capacity count does not match firm count");
    }
    alloc = ss::Allocation::of(std::move(caps));
    source = "file";
  }

  const ss::MarketLedger led = ss::simulate(sc.tariff, samples, alloc);
  std::filesystem::create_directories(args.out);
  {
    std::ofstream f(args.out + "/ledger.csv");
    if (!f) throw ss::data_error("cannot write ledger.csv");
    ss::write_ledger_csv(led, samples, f);
  }

  json out = output_header("simulate", sc);
  out["allocation_source"] = source;
  out["allocation"] = led.allocation;
  out["total_capacity"] = led.total_capacity;
  out["mean_price"] = json{{"estimate", led.summary.mean_price},
                           {"stderr", led.summary.mean_price_se}};
  json firms = json::array();
  for (std::size_t k = 0; k < led.firms; ++k) {
    firms.push_back(json{{"firm", k},
                         {"id", sc.firm_ids[k]},
                         {"capacity", led.allocation[k]},
                         {"mean_demand", led.summary.mean_demand[k]},
                         {"mean_cost", json{{"estimate", led.summary.mean_cost[k]},
                                            {"stderr", led.summary.mean_cost_se[k]}}},
                         {"delta_s", led.summary.delta_s[k]}});
  }
  out["firms"] = std::move(firms);
  out["ledger"] = "ledger.csv";
  emit(args, "simulate.json", out);
  return 0;
}

int run_savings(const CommonArgs& args) {
  const ss::Scenario sc = load(args);
  check_equilibrium_days(sc);
  const ss::SampleMatrix samples = sc.model.sample(sc.days, sc.seed);
  const ss::SavingsReport rep = ss::savings_report(sc.tariff, samples, sc.nash_options());

  std::filesystem::create_directories(args.out);
  {
    std::ofstream f(args.out + "/savings.csv");
    if (!f) throw ss::data_error("cannot write savings.csv");
    f << "firm,id,mean_demand,j_none,j_standalone,j_standalone_stderr,j_nash,j_nash_stderr,"
         "c_standalone,c_nash,delta_ns,delta_s\n";
    char buf[64];
    auto num = [&](double v) {
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      f << buf;
    };
    for (const auto& r : rep.firms) {
      f << r.firm << ',' << sc.firm_ids[r.firm] << ',';
      num(r.mean_demand); f << ',';
      num(r.j_none); f << ',';
      num(r.j_standalone.value); f << ',';
      num(r.j_standalone.se); f << ',';
      num(r.j_nash.value); f << ',';
      num(r.j_nash.se); f << ',';
      num(r.c_standalone); f << ',';
      num(r.c_nash); f << ',';
      num(r.delta_ns); f << ',';
      num(r.delta_s); f << '\n';
    }
  }

  json out = output_header("savings", sc);
  out["gamma"] = rep.nash.gamma;
  out["q"] = stat_json(rep.nash.q);
  out["mean_delta_ns"] = rep.mean_delta_ns;
  out["mean_delta_s"] = rep.mean_delta_s;
  out["standalone_total_capacity"] = rep.standalone_total_capacity;
  out["nash_total_capacity"] = rep.nash_total_capacity;
  json firms = json::array();
  for (const auto& r : rep.firms) {
    firms.push_back(json{{"firm", r.firm},
                         {"id", sc.firm_ids[r.firm]},
                         {"mean_demand", r.mean_demand},
                         {"j_none", r.j_none},
                         {"j_standalone", stat_json(r.j_standalone)},
                         {"j_nash", stat_json(r.j_nash)},
                         {"c_standalone", r.c_standalone},
                         {"c_nash", r.c_nash},
                         {"delta_ns", r.delta_ns},
                         {"delta_s", r.delta_s}});
  }
  out["firms"] = std::move(firms);
  out["table"] = "savings.csv";
  emit(args, "savings.json", out);
  return 0;
}

int run_join(const CommonArgs& args, const std::string& entrant_path) {
  const ss::Scenario sc = load(args);
  check_equilibrium_days(sc);

  json entrant_spec;
  if (!entrant_path.empty()) {
    std::ifstream f(entrant_path);
    if (!f) throw ss::config_error("cannot open entrant file '" + entrant_path + "'");
    entrant_spec = json::parse(f);
  } else if (sc.analysis.join_entrant) {
    entrant_spec = *sc.analysis.join_entrant;
  } else {
    throw ss::config_error("join: provide analysis.join_entrant in the scenario or --entrant");
  }
  auto [entrant, rho] = ss::parse_entrant(entrant_spec);
  const ss::DemandModel extended = sc.model.with_entrant(std::move(entrant), rho);

  const ss::SampleMatrix before = sc.model.sample(sc.days, sc.seed);
  const ss::SampleMatrix after = extended.sample(sc.days, sc.seed);
  const ss::JoinOutcome jo = ss::join(sc.tariff, before, after, sc.nash_options());

  json out = output_header("join", sc);
  out["q_before"] = stat_json(jo.q_before);
  out["q_after"] = stat_json(jo.q_after);
  out["delta_capacity"] = jo.delta_capacity;
  out["entrant_capacity"] = jo.entrant_capacity;
  json firms = json::array();
  for (std::size_t k = 0; k < jo.capacity_before.size(); ++k) {
    firms.push_back(json{{"firm", k},
                         {"id", sc.firm_ids[k]},
                         {"capacity_before", jo.capacity_before[k]},
                         {"capacity_after", jo.capacity_after[k]},
                         {"reallocation", jo.reallocation[k]},
                         {"payment_per_day", jo.payment_per_day[k]},
                         {"j_before", stat_json(jo.j_before[k])},
                         {"j_after", stat_json(jo.j_after[k])}});
  }
  firms.push_back(json{{"firm", jo.capacity_before.size()},
                       {"id", "entrant"},
                       {"capacity_after", jo.entrant_capacity},
                       {"payment_per_day", jo.payment_per_day.back()},
                       {"j_after", stat_json(jo.j_after.back())}});
  out["firms"] = std::move(firms);
  out["worse_off"] = jo.worse_off;
  emit(args, "join.json", out);
  return 0;
}

int run_ingest(const std::vector<std::string>& data_paths, const std::string& schema_path,
               const std::string& window_str, bool weekdays_only, std::size_t min_common_days,
               const CommonArgs& args) {
  ss::CsvSchema schema;
  if (!schema_path.empty()) {
    std::ifstream f(schema_path);
    if (!f) throw ss::config_error("cannot open schema '" + schema_path + "'");
    const json sj = json::parse(f);
    if (sj.contains("timestamp_column")) schema.timestamp_column = sj["timestamp_column"];
    if (sj.contains("firm_column")) schema.firm_column = sj["firm_column"];
    if (sj.contains("power_column")) schema.power_column = sj["power_column"];
    if (sj.contains("power_unit")) schema.power_unit = sj["power_unit"];
  }

  ss::PeakWindow window;
  if (!window_str.empty()) {
    int h1, m1, h2, m2;
    if (std::sscanf(window_str.c_str(), "%d:%d-%d:%d", &h1, &m1, &h2, &m2) != 4) {
      throw ss::config_error("--window: expected HH:MM-HH:MM");
    }
    window.start_minute = h1 * 60 + m1;
    window.end_minute = h2 * 60 + m2;
  }
  window.weekdays_only = weekdays_only;
  window.validate();

  std::vector<std::pair<std::string, ss::DailyEnergy>> per_firm;
  json gaps = json::array();
  json dropped = json::array();
  for (const auto& path : data_paths) {
    const ss::LoadResult loaded = ss::load_csv(path, schema);
    for (const auto& g : loaded.gaps) {
      gaps.push_back(json{{"firm", g.firm}, {"from", g.from}, {"to", g.to}});
    }
    for (const auto& series : loaded.series) {
      ss::DailyEnergy de = ss::daily_peak_energy(series, window);
      for (const auto& dd : de.dropped) {
        dropped.push_back(json{{"firm", series.firm}, {"day", dd.day}, {"reason", dd.reason}});
      }
      per_firm.emplace_back(series.firm, std::move(de));
    }
  }
  const ss::BuiltModel built = ss::build_model(per_firm, min_common_days);

  std::filesystem::create_directories(args.out);
  {
    std::ofstream f(args.out + "/model_matrix.csv");
    ss::write_matrix_csv(built, f);
  }
  {
    json cj;
    cj["firms"] = built.firm_ids;
    json rows = json::array();
    const std::size_t n = built.firm_ids.size();
    for (std::size_t i = 0; i < n; ++i) {
      rows.push_back(std::vector<double>(built.correlation.begin() + i * n,
                                         built.correlation.begin() + (i + 1) * n));
    }
    cj["matrix"] = std::move(rows);
    std::ofstream f(args.out + "/correlation.json");
    f << cj.dump(2) << "\n";
  }
  for (std::size_t k = 0; k < built.firm_ids.size(); ++k) {
    std::ofstream f(args.out + "/cdf_" + built.firm_ids[k] + ".csv");
    f << "kwh,cdf\n";
    std::vector<double> col(built.days.size());
    for (std::size_t r = 0; r < built.days.size(); ++r) {
      col[r] = built.matrix[r * built.firm_ids.size() + k];
    }
    std::sort(col.begin(), col.end());
    char buf[64];
    for (std::size_t i = 0; i < col.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g", col[i]);
      f << buf << ',';
      std::snprintf(buf, sizeof(buf), "%.17g",
                    (static_cast<double>(i) + 1.0) / static_cast<double>(col.size()));
      f << buf << '\n';
    }
  }

  json config;
  config["data"] = data_paths;
  config["window"] = json{{"start_minute", window.start_minute},
                          {"end_minute", window.end_minute},
                          {"weekdays_only", window.weekdays_only}};
  config["schema"] = json{{"timestamp_column", schema.timestamp_column},
                          {"firm_column", schema.firm_column},
                          {"power_column", schema.power_column},
                          {"power_unit", schema.power_unit}};
  config["min_common_days"] = min_common_days;

  json out;
  out["schema_version"] = ss::kSchemaVersion;
  out["command"] = "ingest";
  out["scenario_hash"] = ss::fnv1a_hex(config.dump());
  out["config"] = std::move(config);
  out["firms"] = built.firm_ids;
  out["common_days"] = built.days.size();
  out["mean_offpeak_kwh"] = built.mean_offpeak_kwh;
  out["gaps"] = std::move(gaps);
  out["dropped_days"] = std::move(dropped);
  out["model_matrix"] = "model_matrix.csv";
  out["correlation"] = "correlation.json";
  emit(args, "ingest.json", out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Electricity-storage investment and sharing-market analysis"};
  app.require_subcommand(1);

  CommonArgs args;

  auto* cmd_standalone = app.add_subcommand("standalone", "Optimal storage without sharing");
  add_common(cmd_standalone, args);

  auto* cmd_nash = app.add_subcommand("nash", "Equilibrium of the storage investment game");
  add_common(cmd_nash, args);

  auto* cmd_verify = app.add_subcommand("verify", "Grid-check the equilibrium best responses");
  add_common(cmd_verify, args);

  std::string allocation_source = "nash";
  auto* cmd_simulate = app.add_subcommand("simulate", "Run the daily spot market");
  add_common(cmd_simulate, args);
  cmd_simulate->add_option("--allocation", allocation_source,
                           "nash | standalone | path to {\"capacities\": [...]}");

  auto* cmd_savings = app.add_subcommand("savings", "Per-firm arbitrage savings comparison");
  add_common(cmd_savings, args);

  std::string entrant_path;
  auto* cmd_join = app.add_subcommand("join", "Add one firm to the sharing coalition");
  add_common(cmd_join, args);
  cmd_join->add_option("--entrant", entrant_path, "Entrant spec JSON (overrides scenario)");

  std::vector<std::string> data_paths;
  std::string schema_path, window_str;
  bool weekdays_only = false;
  std::size_t min_common_days = 30;
  auto* cmd_ingest = app.add_subcommand("ingest", "Build a demand model from meter CSVs");
  add_common(cmd_ingest, args, false);
  cmd_ingest->add_option("--data", data_paths, "Meter CSV file(s)")->required();
  cmd_ingest->add_option("--schema", schema_path, "Column schema JSON");
  cmd_ingest->add_option("--window", window_str, "Peak window HH:MM-HH:MM (default 12:00-18:00)");
  cmd_ingest->add_flag("--weekdays-only", weekdays_only, "Skip Saturdays and Sundays");
  cmd_ingest->add_option("--min-common-days", min_common_days,
                         "Minimum common complete days (default 30)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (cmd_standalone->parsed()) return run_standalone(args);
    if (cmd_nash->parsed()) return run_nash(args);
    if (cmd_verify->parsed()) return run_verify(args);
    if (cmd_simulate->parsed()) return run_simulate(args, allocation_source);
    if (cmd_savings->parsed()) return run_savings(args);
    if (cmd_join->parsed()) return run_join(args, entrant_path);
    if (cmd_ingest->parsed()) {
      if (args.threads) ss::par::set_max_threads(args.threads);
      return run_ingest(data_paths, schema_path, window_str, weekdays_only, min_common_days, args);
    }
  } catch (const ss::no_arbitrage_error& e) {
    std::cerr << "no-arbitrage: " << e.what()
              << " (storage cannot pay for itself; raise pi_delta or lower pi_s)\n";
    return 2;
  } catch (const ss::config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const ss::data_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
