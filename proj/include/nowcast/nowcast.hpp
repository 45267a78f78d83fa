#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "nowcast/models.hpp"
#include "nowcast/sampler.hpp"
#include "nowcast/triangle.hpp"

namespace nowcast {

// Completion keeps observed cells at their data values; replication redraws
// every cell from the posterior predictive.
enum class PredictiveMode { Completion, Replication };

struct PredictiveOptions {
  PredictiveMode mode = PredictiveMode::Completion;
  std::uint64_t seed = 1;
  // Use every `thin`-th posterior draw.
  int thin = 1;
};

// Completed triangles, one per posterior draw, each num_bins x num_delays
// time-major.
class PredictiveDraws {
 public:
  PredictiveDraws() = default;
  PredictiveDraws(int num_bins, int num_delays, std::size_t num_draws);

  int num_bins() const noexcept { return num_bins_; }
  int num_delays() const noexcept { return num_delays_; }
  std::size_t num_draws() const noexcept { return num_draws_; }

  std::span<const std::int64_t> draw(std::size_t s) const;
  std::span<std::int64_t> draw(std::size_t s);
  std::int64_t at(std::size_t s, int t, int d) const { return draw(s)[cell(t, d)]; }
  std::int64_t row_total(std::size_t s, int t) const;

  // Deterministic completion of a triangle whose every cell is known.
  static PredictiveDraws from_triangle(const ReportingTriangle& tri);

 private:
  std::size_t cell(int t, int d) const { return std::size_t(t) * std::size_t(num_delays_) + std::size_t(d); }
  int num_bins_ = 0;
  int num_delays_ = 0;
  std::size_t num_draws_ = 0;
  std::vector<std::int64_t> values_;
};

PredictiveDraws predictive_complete(const PosteriorDraws& draws, const Model& model,
                                    const ReportingTriangle& tri, const PredictiveOptions& opts = {});

struct NowcastSummary {
  std::vector<double> mean;
  std::vector<double> q025;
  std::vector<double> q25;
  std::vector<double> q50;
  std::vector<double> q75;
  std::vector<double> q975;
  std::vector<double> observed_partial;  // sum over observed cells

  std::size_t size() const noexcept { return mean.size(); }
};

// Per-draw totals n_t, as [draw][t].
std::vector<std::vector<double>> draw_totals(const PredictiveDraws& pred);

NowcastSummary nowcast_totals(const PredictiveDraws& pred, const ReportingTriangle& tri);
NowcastSummary summarize_totals(const std::vector<std::vector<double>>& totals,
                                std::vector<double> observed_partial);

// Natural cubic spline through (x, y), linear beyond the end knots.
class NaturalSpline {
 public:
  NaturalSpline(std::vector<double> x, std::vector<double> y);
  double operator()(double v) const;

 private:
  std::vector<double> x_;
  std::vector<double> y_;
  std::vector<double> m_;  // second derivatives at the knots
};

struct DailyOptions {
  int bin_width = 7;
  // Per-draw: spline every draw, then summarise. Otherwise spline the
  // weekly summary quantiles directly.
  bool per_draw = true;
};

struct DailySeries {
  std::vector<double> mean;
  std::vector<double> q025;
  std::vector<double> q25;
  std::vector<double> q50;
  std::vector<double> q75;
  std::vector<double> q975;
  int clipped = 0;  // negative spline values set to 0

  std::size_t size() const noexcept { return mean.size(); }
};

// One weekly series to days: value / bin_width anchored at day bin_width / 2
// of each bin. Negative excursions are clipped and counted in *clipped.
std::vector<double> daily_interpolate(std::span<const double> weekly, int bin_width = 7, int* clipped = nullptr);

DailySeries daily_from_draws(const std::vector<std::vector<double>>& totals, const DailyOptions& opts = {});
DailySeries daily_from_summary(const NowcastSummary& summary, const DailyOptions& opts = {});

}  // namespace nowcast
