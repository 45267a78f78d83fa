#pragma once

#include <cstdint>
#include <vector>

#include "nowcast/date.hpp"
#include "nowcast/triangle.hpp"

namespace nowcast {

enum class CurveShape { LogQuadratic, Changepoint };

// Synthetic epidemic with known reporting delays.
struct SynthConfig {
  int num_bins = 30;
  int max_delay = 6;
  int bin_width = 7;
  Date origin = Date{std::chrono::year{2020} / 3 / 2};

  // Expected total per bin. LogQuadratic: log mu(x) = level + slope x +
  // curvature x^2 with x = t / (num_bins - 1). Changepoint: slope_before per
  // bin until `changepoint`, slope_after afterwards.
  CurveShape curve = CurveShape::LogQuadratic;
  double level = 4.5;
  double slope = 1.5;
  double curvature = -1.0;
  int changepoint = 15;
  double slope_before = 0.08;
  double slope_after = -0.05;

  // Base delay weights (length max_delay + 1, positive, summing to 1). Empty
  // means a geometric profile with ratio 0.55. Drift tilts the profile per
  // bin: p_d(t) proportional to w_d * exp(drift * t * d / max_delay).
  std::vector<double> delay_weights;
  double drift = 0.0;

  double r_true = 50.0;
  std::uint64_t seed = 1;

  void validate() const;
  std::vector<double> base_weights() const;
  std::vector<double> delay_probs(int t) const;
  double expected_total(int t) const;
};

struct SynthResult {
  std::vector<ReleaseSnapshot> snapshots;  // one per bin boundary, num_bins + max_delay of them
  ReportingTriangle truth;                 // complete counts, fully observed
  std::vector<std::int64_t> totals;        // n_t
  std::vector<double> expected;            // mu_t
};

SynthResult simulate(const SynthConfig& cfg);

// Key-value file ([synth] section) for the CLI.
SynthConfig read_synth_config(std::istream& in);
void write_synth_config(std::ostream& out, const SynthConfig& cfg);

}  // namespace nowcast
