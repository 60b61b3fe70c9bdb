// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "storshare/common.hpp"
#include "storshare/demand_model.hpp"

namespace storshare {

/// Column layout and units of a meter-reading CSV (long format:
/// one row per timestamp per firm).
struct CsvSchema {
  std::string timestamp_column = "timestamp";
  std::string firm_column = "firm";
  std::string power_column = "kw";
  std::string power_unit = "kW";  // "kW" or "W"
  char delimiter = ',';
};

/// Regularly sampled power readings for one firm. Gaps are permitted in the
/// file and reported; the step is the modal spacing.
struct MeterSeries {
  std::string firm;
  std::vector<std::int64_t> t;  // epoch seconds, strictly increasing
  std::vector<double> kw;
  int step_minutes = 0;
};

struct GapReport {
  std::string firm;
  std::int64_t from = 0;  // last reading before the gap
  std::int64_t to = 0;    // first reading after the gap
};

struct LoadResult {
  std::vector<MeterSeries> series;
  std::vector<GapReport> gaps;
};

namespace detail_ingest {

inline std::int64_t days_from_civil(int y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

inline std::optional<std::int64_t> parse_timestamp(const std::string& s) {
  if (s.find('-') == std::string::npos) {
    // plain epoch seconds
    char* end = nullptr;
    const long long v = std::strtoll(s.c_str(), &end, 10);
    if (end == s.c_str() || *end != '\0') return std::nullopt;
    return static_cast<std::int64_t>(v);
  }
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, se = 0;
  const int n = std::sscanf(s.c_str(), "%d-%d-%d %d:%d:%d", &y, &mo, &d, &h, &mi, &se);
  if (n < 5) return std::nullopt;
  if (mo < 1 || mo > 12 || d < 1 || d > 31 || h < 0 || h > 23 || mi < 0 || mi > 59 || se < 0 ||
      se > 59) {
    return std::nullopt;
  }
  return days_from_civil(y, static_cast<unsigned>(mo), static_cast<unsigned>(d)) * 86400 +
         h * 3600 + mi * 60 + se;
}

inline std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == delim) {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace detail_ingest

/// Reads a long-format meter CSV into one series per firm. Rows must be
/// time-ordered within each firm; malformed rows, negative readings and
/// non-monotone timestamps are reported with their line number.
inline LoadResult load_csv(const std::string& path, const CsvSchema& schema = {}) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open '" + path + "'");

  double unit_scale = 1.0;
  if (schema.power_unit == "kW") {
    unit_scale = 1.0;
  } else if (schema.power_unit == "W") {
    unit_scale = 1e-3;
  } else {
    throw config_error("schema.power_unit: expected 'kW' or 'W', got '" + schema.power_unit + "'");
  }

  std::string line;
  if (!std::getline(in, line)) throw data_error(path + ": empty file");
  const auto header = detail_ingest::split_line(line, schema.delimiter);
  auto col_of = [&](const std::string& name) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    throw data_error(path + ": header has no column '" + name + "'");
  };
  const std::size_t ct = col_of(schema.timestamp_column);
  const std::size_t cf = col_of(schema.firm_column);
  const std::size_t cp = col_of(schema.power_column);

  std::map<std::string, MeterSeries> by_firm;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = detail_ingest::split_line(line, schema.delimiter);
    if (cells.size() <= std::max({ct, cf, cp})) {
      throw data_error(path + ":" + std::to_string(line_no) + ": too few columns");
    }
    const auto ts = detail_ingest::parse_timestamp(cells[ct]);
    if (!ts) {
      throw data_error(path + ":" + std::to_string(line_no) + ": bad timestamp '" + cells[ct] + "'");
    }
    char* end = nullptr;
    const double kw = std::strtod(cells[cp].c_str(), &end) * unit_scale;
    if (end == cells[cp].c_str() || !std::isfinite(kw)) {
      throw data_error(path + ":" + std::to_string(line_no) + ": bad power value '" + cells[cp] + "'");
    }
    if (kw < 0.0) {
      throw data_error(path + ":" + std::to_string(line_no) + ": negative power reading");
    }
    MeterSeries& ms = by_firm[cells[cf]];
    ms.firm = cells[cf];
    if (!ms.t.empty() && *ts <= ms.t.back()) {
      throw data_error(path + ":" + std::to_string(line_no) + ": non-monotone timestamp for firm '" +
                       cells[cf] + "'");
    }
    ms.t.push_back(*ts);
    ms.kw.push_back(kw);
  }

  LoadResult out;
  for (auto& [firm, ms] : by_firm) {
    if (ms.t.size() < 2) throw data_error(path + ": firm '" + firm + "' has fewer than 2 readings");
    // modal spacing
    std::map<std::int64_t, std::size_t> diff_count;
    for (std::size_t i = 1; i < ms.t.size(); ++i) ++diff_count[ms.t[i] - ms.t[i - 1]];
    std::int64_t step = 0;
    std::size_t best = 0;
    for (const auto& [d, c] : diff_count) {
      if (c > best) {
        best = c;
        step = d;
      }
    }
    if (step <= 0 || step % 60 != 0) {
      throw data_error(path + ": firm '" + firm + "' has no regular minute-aligned interval");
    }
    ms.step_minutes = static_cast<int>(step / 60);
    for (std::size_t i = 1; i < ms.t.size(); ++i) {
      if (ms.t[i] - ms.t[i - 1] != step) {
        out.gaps.push_back({firm, ms.t[i - 1], ms.t[i]});
      }
    }
    out.series.push_back(std::move(ms));
  }
  return out;
}

/// Daily peak window, minutes from midnight. Default noon to 6 pm.
struct PeakWindow {
  int start_minute = 12 * 60;
  int end_minute = 18 * 60;
  bool weekdays_only = false;

  void validate() const {
    if (!(start_minute >= 0 && end_minute <= 24 * 60 && start_minute < end_minute)) {
      throw config_error("peak window: need 0 <= start < end <= 24:00");
    }
  }
};

struct DroppedDay {
  std::int64_t day = 0;  // days since epoch
  std::string reason;
};

/// Per-day peak and off-peak energies for one firm. Off-peak is NaN on days
/// without full off-window coverage.
struct DailyEnergy {
  std::vector<std::int64_t> day;
  std::vector<double> peak_kwh;
  std::vector<double> offpeak_kwh;
  std::vector<DroppedDay> dropped;
};

/// Integrates power over the peak window with the trapezoid rule on the
/// regular grid. Days missing any in-window reading are dropped and listed.
inline DailyEnergy daily_peak_energy(const MeterSeries& series, const PeakWindow& window) {
  window.validate();
  if (series.t.empty()) throw data_error("daily_peak_energy: empty series");
  const int step = series.step_minutes;
  if ((window.end_minute - window.start_minute) % step != 0) {
    throw data_error("daily_peak_energy: window not aligned to the sampling interval");
  }

  auto value_at = [&](std::int64_t t) -> std::optional<double> {
    const auto it = std::lower_bound(series.t.begin(), series.t.end(), t);
    if (it == series.t.end() || *it != t) return std::nullopt;
    return series.kw[static_cast<std::size_t>(it - series.t.begin())];
  };
  auto integrate = [&](std::int64_t t0, int minutes) -> std::optional<double> {
    // trapezoid over [t0, t0 + minutes], endpoints included
    double acc = 0.0;
    auto prev = value_at(t0);
    if (!prev) return std::nullopt;
    for (int m = step; m <= minutes; m += step) {
      const auto cur = value_at(t0 + static_cast<std::int64_t>(m) * 60);
      if (!cur) return std::nullopt;
      acc += 0.5 * (*prev + *cur) * (static_cast<double>(step) / 60.0);
      prev = cur;
    }
    return acc;
  };

  const std::int64_t day_first = series.t.front() / 86400;
  const std::int64_t day_last = series.t.back() / 86400;
  DailyEnergy out;
  for (std::int64_t day = day_first; day <= day_last; ++day) {
    if (window.weekdays_only) {
      const int dow = static_cast<int>(((day % 7) + 7 + 4) % 7);  // 0 = Sunday
      if (dow == 0 || dow == 6) continue;
    }
    const std::int64_t base = day * 86400;
    const auto peak =
        integrate(base + static_cast<std::int64_t>(window.start_minute) * 60,
                  window.end_minute - window.start_minute);
    if (!peak) {
      out.dropped.push_back({day, "missing readings inside the peak window"});
      continue;
    }
    const auto whole = integrate(base, 24 * 60);
    out.day.push_back(day);
    out.peak_kwh.push_back(*peak);
    out.offpeak_kwh.push_back(whole ? *whole - *peak
                                    : std::numeric_limits<double>::quiet_NaN());
  }
  if (out.day.empty()) throw data_error("daily_peak_energy: no complete days");
  return out;
}

/// Day-paired demand model built from per-firm daily energies.
struct BuiltModel {
  std::vector<std::string> firm_ids;
  std::vector<std::int64_t> days;   // common complete days, ascending
  std::vector<double> matrix;       // days x firms, peak kWh
  std::vector<double> correlation;  // firms x firms, Pearson
  std::vector<double> mean_offpeak_kwh;
  DemandModel model = DemandModel::independent({Distribution::uniform(0.0, 1.0)});
};

/// Intersects the firms' complete days, preserves the day pairing, and fits
/// the paired-empirical model plus the pairwise correlation matrix.
inline BuiltModel build_model(const std::vector<std::pair<std::string, DailyEnergy>>& firms,
                              std::size_t min_common_days = 30) {
  if (firms.empty()) throw data_error("build_model: no firms");
  const std::size_t n = firms.size();
  {
    std::set<std::string> ids;
    for (const auto& [id, de] : firms) {
      if (!ids.insert(id).second) throw data_error("build_model: duplicate firm id '" + id + "'");
    }
  }

  std::map<std::int64_t, std::size_t> day_hits;
  for (const auto& [id, de] : firms) {
    for (std::int64_t d : de.day) ++day_hits[d];
  }
  std::vector<std::int64_t> common;
  for (const auto& [d, hits] : day_hits) {
    if (hits == n) common.push_back(d);
  }
  if (common.size() < min_common_days) {
    throw data_error("build_model: only " + std::to_string(common.size()) +
                     " common complete days; need at least " + std::to_string(min_common_days));
  }

  BuiltModel out;
  out.days = common;
  out.matrix.assign(common.size() * n, 0.0);
  out.mean_offpeak_kwh.assign(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    const auto& de = firms[k].second;
    out.firm_ids.push_back(firms[k].first);
    std::map<std::int64_t, std::size_t> index;
    for (std::size_t i = 0; i < de.day.size(); ++i) index[de.day[i]] = i;
    double off_sum = 0.0;
    std::size_t off_n = 0;
    for (std::size_t r = 0; r < common.size(); ++r) {
      const std::size_t i = index.at(common[r]);
      out.matrix[r * n + k] = de.peak_kwh[i];
      if (!std::isnan(de.offpeak_kwh[i])) {
        off_sum += de.offpeak_kwh[i];
        ++off_n;
      }
    }
    out.mean_offpeak_kwh[k] = off_n ? off_sum / static_cast<double>(off_n) : 0.0;
  }

  // Pearson correlations over the common days
  const std::size_t rows = common.size();
  std::vector<double> mean(n, 0.0), sd(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t r = 0; r < rows; ++r) mean[k] += out.matrix[r * n + k];
    mean[k] /= static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      const double d = out.matrix[r * n + k] - mean[k];
      sd[k] += d * d;
    }
    sd[k] = std::sqrt(sd[k] / static_cast<double>(rows - 1));
  }
  out.correlation.assign(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    out.correlation[i * n + i] = 1.0;
    for (std::size_t j = 0; j < i; ++j) {
      double cov = 0.0;
      for (std::size_t r = 0; r < rows; ++r) {
        cov += (out.matrix[r * n + i] - mean[i]) * (out.matrix[r * n + j] - mean[j]);
      }
      cov /= static_cast<double>(rows - 1);
      const double denom = sd[i] * sd[j];
      const double c = denom > 0.0 ? cov / denom : 0.0;
      out.correlation[i * n + j] = c;
      out.correlation[j * n + i] = c;
    }
  }

  out.model = DemandModel::paired_empirical(n, out.matrix);
  return out;
}

/// Matrix file: header row of firm ids, one row of peak kWh per day.
inline void write_matrix_csv(const BuiltModel& built, std::ostream& os) {
  for (std::size_t k = 0; k < built.firm_ids.size(); ++k) {
    if (k) os << ',';
    os << built.firm_ids[k];
  }
  os << '\n';
  char buf[64];
  const std::size_t n = built.firm_ids.size();
  for (std::size_t r = 0; r < built.days.size(); ++r) {
    for (std::size_t k = 0; k < n; ++k) {
      if (k) os << ',';
      std::snprintf(buf, sizeof(buf), "%.17g", built.matrix[r * n + k]);
      os << buf;
    }
    os << '\n';
  }
}

/// Loads a matrix file written by write_matrix_csv into a paired model.
inline std::pair<DemandModel, std::vector<std::string>> load_matrix_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw data_error(path + ": empty file");
  const auto ids = detail_ingest::split_line(line, ',');
  if (ids.empty()) throw data_error(path + ": empty header");
  std::vector<double> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = detail_ingest::split_line(line, ',');
    if (cells.size() != ids.size()) {
      throw data_error(path + ":" + std::to_string(line_no) + ": wrong column count");
    }
    for (const auto& cell : cells) {
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str() || !std::isfinite(v) || v < 0.0) {
        throw data_error(path + ":" + std::to_string(line_no) + ": bad value '" + cell + "'");
      }
      rows.push_back(v);
    }
  }
  return {DemandModel::paired_empirical(ids.size(), std::move(rows)),
          std::vector<std::string>(ids.begin(), ids.end())};
}

}  // namespace storshare
