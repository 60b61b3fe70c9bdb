// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace storshare {

/// Thrown when the tariff leaves no arbitrage opportunity
/// (amortized storage price at or above the peak/off-peak spread).
struct no_arbitrage_error : std::domain_error {
  using std::domain_error::domain_error;
};

/// Scenario or schema validation failure; the message carries the field path.
struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed input data (CSV rows, timestamps, units).
struct data_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Point estimate with its standard error. Analytic quantities carry se = 0.
struct Estimate {
  double value = 0.0;
  double se = 0.0;
};

}  // namespace storshare
