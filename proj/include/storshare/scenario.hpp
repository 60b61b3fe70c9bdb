// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "storshare/coalition.hpp"
#include "storshare/common.hpp"
#include "storshare/demand_model.hpp"
#include "storshare/ingest.hpp"
#include "storshare/sharing.hpp"
#include "storshare/tariff.hpp"

namespace storshare {

using json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

/// FNV-1a 64 over the canonical scenario serialization; echoed in every
/// output so results can be traced back to their exact configuration.
inline std::string fnv1a_hex(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace detail_scenario {

inline double need_number(const json& j, const std::string& key, const std::string& path) {
  if (!j.contains(key) || !j[key].is_number()) {
    throw config_error(path + "." + key + ": expected a number");
  }
  return j[key].get<double>();
}

inline double number_or(const json& j, const std::string& key, double fallback) {
  return j.contains(key) ? j[key].get<double>() : fallback;
}

inline Distribution marginal_from_json(const json& j, const std::string& path) {
  if (!j.is_object() || !j.contains("kind") || !j["kind"].is_string()) {
    throw config_error(path + ": expected an object with a 'kind' string");
  }
  const std::string kind = j["kind"].get<std::string>();
  try {
    if (kind == "uniform") {
      return Distribution::uniform(need_number(j, "a", path), need_number(j, "b", path));
    }
    if (kind == "truncated-gaussian") {
      return Distribution::truncated_gaussian(need_number(j, "mu", path),
                                              need_number(j, "sigma", path));
    }
    if (kind == "lognormal") {
      return Distribution::lognormal(need_number(j, "mu", path), need_number(j, "sigma", path));
    }
    if (kind == "sum-uniforms") {
      return Distribution::sum_of_uniforms(static_cast<int>(need_number(j, "count", path)),
                                           number_or(j, "scale", 1.0));
    }
    if (kind == "transform") {
      if (!j.contains("id") || !j["id"].is_string()) {
        throw config_error(path + ".id: expected a transform id string");
      }
      return Distribution::transform_of_uniform(
          j["id"].get<std::string>(), need_number(j, "range", path),
          static_cast<std::size_t>(number_or(j, "resolution", 200000)));
    }
    if (kind == "empirical") {
      if (!j.contains("samples") || !j["samples"].is_array()) {
        throw config_error(path + ".samples: expected an array of numbers");
      }
      std::vector<double> v;
      for (const auto& e : j["samples"]) v.push_back(e.get<double>());
      return Distribution::empirical(std::move(v));
    }
  } catch (const std::invalid_argument& e) {
    throw config_error(path + ": " + e.what());
  }
  throw config_error(path + ".kind: unknown marginal kind '" + kind + "'");
}

}  // namespace detail_scenario

/// A fully resolved run configuration: tariff, demand source, Monte-Carlo
/// settings and analysis toggles, plus the canonical JSON used for hashing.
struct Scenario {
  Tariff tariff{1.0, 0.0, 0.0};
  Efficiency efficiency;
  DemandModel model = DemandModel::independent({Distribution::uniform(0.0, 1.0)});
  std::vector<std::string> firm_ids;
  std::size_t days = 100000;
  std::uint64_t seed = 1;

  struct Analysis {
    bool alignment = true;
    bool verify = true;
    std::size_t grid_resolution = 256;
    std::size_t alignment_points = 17;
    int bootstrap = 48;
    double bandwidth = 0.0;  // 0 = automatic
    std::vector<std::vector<std::vector<std::size_t>>> stability_partitions;
    std::optional<json> join_entrant;
  } analysis;

  json resolved;     // canonical form, includes overrides
  std::string hash;  // fnv1a of resolved

  NashOptions nash_options() const {
    NashOptions o;
    o.bandwidth = analysis.bandwidth;
    o.check_alignment = analysis.alignment;
    o.verify = analysis.verify;
    o.grid_resolution = analysis.grid_resolution;
    o.alignment_points = analysis.alignment_points;
    o.bootstrap = analysis.bootstrap;
    return o;
  }
};

/// Parses and validates a scenario file. Optional seed/days overrides are
/// folded in before hashing, so the hash pins exactly what ran.
inline Scenario load_scenario(const std::string& path,
                              std::optional<std::uint64_t> seed_override = std::nullopt,
                              std::optional<std::size_t> days_override = std::nullopt) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open scenario '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const std::exception& e) {
    throw config_error("scenario '" + path + "': " + e.what());
  }

  Scenario sc;

  if (!j.contains("tariff") || !j["tariff"].is_object()) {
    throw config_error("tariff: required object with pi_h, pi_l, pi_s");
  }
  {
    const json& t = j["tariff"];
    try {
      sc.tariff = Tariff(detail_scenario::need_number(t, "pi_h", "tariff"),
                         detail_scenario::need_number(t, "pi_l", "tariff"),
                         detail_scenario::need_number(t, "pi_s", "tariff"));
    } catch (const std::invalid_argument& e) {
      throw config_error(std::string("tariff: ") + e.what());
    }
  }

  if (j.contains("efficiency")) {
    const json& e = j["efficiency"];
    try {
      sc.efficiency = Efficiency(detail_scenario::need_number(e, "eta_i", "efficiency"),
                                 detail_scenario::need_number(e, "eta_o", "efficiency"));
    } catch (const std::invalid_argument& ex) {
      throw config_error(std::string("efficiency: ") + ex.what());
    }
  }

  if (!j.contains("demand") || !j["demand"].is_object()) {
    throw config_error("demand: required object with exactly one of 'model' or 'data'");
  }
  const json& demand = j["demand"];
  const bool has_model = demand.contains("model");
  const bool has_data = demand.contains("data");
  if (has_model == has_data) {
    throw config_error("demand: specify exactly one of 'model' or 'data'");
  }
  if (has_model) {
    const json& m = demand["model"];
    if (!m.contains("coupling") || !m["coupling"].is_string()) {
      throw config_error("demand.model.coupling: required string");
    }
    const std::string coupling = m["coupling"].get<std::string>();
    if (coupling == "w-trig") {
      sc.model = DemandModel::w_trig(detail_scenario::number_or(m, "range", 10.0));
    } else {
      if (!m.contains("marginals") || !m["marginals"].is_array() || m["marginals"].empty()) {
        throw config_error("demand.model.marginals: required non-empty array");
      }
      std::vector<Distribution> margs;
      for (std::size_t i = 0; i < m["marginals"].size(); ++i) {
        margs.push_back(detail_scenario::marginal_from_json(
            m["marginals"][i], "demand.model.marginals[" + std::to_string(i) + "]"));
      }
      if (coupling == "independent") {
        sc.model = DemandModel::independent(std::move(margs));
      } else if (coupling == "gaussian-copula") {
        try {
          if (m.contains("correlation")) {
            const json& c = m["correlation"];
            const std::size_t n = margs.size();
            std::vector<double> corr;
            if (!c.is_array() || c.size() != n) {
              throw config_error("demand.model.correlation: expected an n x n matrix");
            }
            for (const auto& row : c) {
              if (!row.is_array() || row.size() != n) {
                throw config_error("demand.model.correlation: expected an n x n matrix");
              }
              for (const auto& e : row) corr.push_back(e.get<double>());
            }
            sc.model = DemandModel::gaussian_copula(std::move(margs), std::move(corr));
          } else {
            sc.model = DemandModel::gaussian_copula_equicorr(
                std::move(margs), detail_scenario::need_number(m, "rho", "demand.model"));
          }
        } catch (const std::invalid_argument& e) {
          throw config_error(std::string("demand.model: ") + e.what());
        }
      } else {
        throw config_error("demand.model.coupling: unknown coupling '" + coupling + "'");
      }
    }
    for (std::size_t k = 0; k < sc.model.firms(); ++k) {
      sc.firm_ids.push_back("firm_" + std::to_string(k));
    }
  } else {
    const json& d = demand["data"];
    const bool has_matrix = d.contains("matrix");
    const bool has_meters = d.contains("meters");
    if (has_matrix == has_meters) {
      throw config_error("demand.data: specify exactly one of 'matrix' or 'meters'");
    }
    if (has_matrix) {
      if (!d["matrix"].is_string()) {
        throw config_error("demand.data.matrix: required path to a matrix CSV");
      }
      auto [model, ids] = load_matrix_csv(d["matrix"].get<std::string>());
      sc.model = std::move(model);
      sc.firm_ids = std::move(ids);
    } else {
      // raw meter files plus a peak window: run the ingest pipeline inline
      if (!d["meters"].is_array() || d["meters"].empty()) {
        throw config_error("demand.data.meters: required array of CSV paths");
      }
      CsvSchema schema;
      if (d.contains("schema")) {
        const json& sj = d["schema"];
        if (sj.contains("timestamp_column")) schema.timestamp_column = sj["timestamp_column"];
        if (sj.contains("firm_column")) schema.firm_column = sj["firm_column"];
        if (sj.contains("power_column")) schema.power_column = sj["power_column"];
        if (sj.contains("power_unit")) schema.power_unit = sj["power_unit"];
      }
      PeakWindow window;
      if (d.contains("window")) {
        int h1, m1, h2, m2;
        if (std::sscanf(d["window"].get<std::string>().c_str(), "%d:%d-%d:%d", &h1, &m1, &h2,
                        &m2) != 4) {
          throw config_error("demand.data.window: expected HH:MM-HH:MM");
        }
        window.start_minute = h1 * 60 + m1;
        window.end_minute = h2 * 60 + m2;
      }
      if (d.contains("weekdays_only")) window.weekdays_only = d["weekdays_only"].get<bool>();
      window.validate();
      std::vector<std::pair<std::string, DailyEnergy>> per_firm;
      for (const auto& pj : d["meters"]) {
        const LoadResult loaded = load_csv(pj.get<std::string>(), schema);
        for (const auto& series : loaded.series) {
          per_firm.emplace_back(series.firm, daily_peak_energy(series, window));
        }
      }
      const std::size_t min_days =
          d.contains("min_common_days") ? d["min_common_days"].get<std::size_t>() : 30;
      BuiltModel built = build_model(per_firm, min_days);
      sc.model = std::move(built.model);
      sc.firm_ids = std::move(built.firm_ids);
    }
  }

  if (j.contains("monte_carlo")) {
    const json& mc = j["monte_carlo"];
    if (mc.contains("days")) sc.days = mc["days"].get<std::size_t>();
    if (mc.contains("seed")) sc.seed = mc["seed"].get<std::uint64_t>();
  }
  if (seed_override) sc.seed = *seed_override;
  if (days_override) sc.days = *days_override;
  if (sc.days < 1) throw config_error("monte_carlo.days: must be >= 1");

  if (j.contains("analysis")) {
    const json& a = j["analysis"];
    if (a.contains("alignment")) sc.analysis.alignment = a["alignment"].get<bool>();
    if (a.contains("verify")) sc.analysis.verify = a["verify"].get<bool>();
    if (a.contains("grid_resolution")) {
      sc.analysis.grid_resolution = a["grid_resolution"].get<std::size_t>();
      if (sc.analysis.grid_resolution < 2) {
        throw config_error("analysis.grid_resolution: must be >= 2");
      }
    }
    if (a.contains("alignment_points")) {
      sc.analysis.alignment_points = a["alignment_points"].get<std::size_t>();
      if (sc.analysis.alignment_points < 2) {
        throw config_error("analysis.alignment_points: must be >= 2");
      }
    }
    if (a.contains("bootstrap")) sc.analysis.bootstrap = a["bootstrap"].get<int>();
    if (a.contains("bandwidth")) {
      if (a["bandwidth"].is_string()) {
        if (a["bandwidth"].get<std::string>() != "auto") {
          throw config_error("analysis.bandwidth: expected 'auto' or a positive number");
        }
      } else {
        sc.analysis.bandwidth = a["bandwidth"].get<double>();
        if (!(sc.analysis.bandwidth > 0.0)) {
          throw config_error("analysis.bandwidth: expected 'auto' or a positive number");
        }
      }
    }
    if (a.contains("stability_partitions")) {
      for (const auto& p : a["stability_partitions"]) {
        std::vector<std::vector<std::size_t>> blocks;
        for (const auto& b : p) {
          std::vector<std::size_t> block;
          for (const auto& e : b) block.push_back(e.get<std::size_t>());
          blocks.push_back(std::move(block));
        }
        try {
          Partition::of(blocks, sc.model.firms());
        } catch (const std::invalid_argument& e) {
          throw config_error(std::string("analysis.stability_partitions: ") + e.what());
        }
        sc.analysis.stability_partitions.push_back(std::move(blocks));
      }
    }
    if (a.contains("join_entrant")) {
      const json& je = a["join_entrant"];
      if (!je.is_object() || !je.contains("marginal")) {
        throw config_error("analysis.join_entrant: expected {marginal, rho?}");
      }
      detail_scenario::marginal_from_json(je["marginal"], "analysis.join_entrant.marginal");
      sc.analysis.join_entrant = je;
    }
  }

  // canonical resolved form
  json r = j;
  r["monte_carlo"] = json{{"days", sc.days}, {"seed", sc.seed}};
  r["schema_version"] = kSchemaVersion;
  sc.resolved = r;
  sc.hash = fnv1a_hex(r.dump());
  return sc;
}

/// Entrant distribution (and copula link) from analysis.join_entrant.
inline std::pair<Distribution, double> parse_entrant(const json& je) {
  const Distribution d = detail_scenario::marginal_from_json(je["marginal"], "join_entrant.marginal");
  const double rho = je.contains("rho") ? je["rho"].get<double>() : 0.0;
  return {d, rho};
}

}  // namespace storshare
