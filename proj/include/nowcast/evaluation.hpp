#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nowcast/date.hpp"
#include "nowcast/nowcast.hpp"
#include "nowcast/priors.hpp"
#include "nowcast/sampler.hpp"
#include "nowcast/triangle.hpp"

namespace nowcast {

struct RmseResult {
  double value = 0.0;
  bool fallback = false;  // weights summed to zero, unweighted value returned
};

RmseResult rmse(std::span<const double> pred, std::span<const double> truth,
                std::span<const double> weights = {});

// Weights max(truth - raw, 0): the part of each bin still unreported.
std::vector<double> unreported_weights(std::span<const double> truth, std::span<const double> raw);

// Sample CRPS, mean|X - y| - 0.5 mean|X - X'|, via the sorted form.
double crps(std::span<const double> samples, double truth);

struct BacktestPlan {
  std::vector<Date> dates;
  std::vector<ModelSpec> models;
  int window = 10;
  int min_training_bins = 15;
  int max_delay = 10;
  int bin_width = 7;
  std::optional<Date> origin;      // default: earliest event date in the snapshots
  std::optional<Date> truth_date;  // default: latest snapshot
  SamplerConfig sampler;
  std::uint64_t seed = 1;

  void validate() const;
};

struct BinScore {
  int t = 0;
  Date bin_start;
  double truth = 0.0;
  double raw = 0.0;
  double mean = 0.0;
  double q025 = 0.0;
  double q975 = 0.0;
  double crps = 0.0;
};

struct ScoreRow {
  std::string model;
  Date date;
  bool ok = false;
  std::string status;  // "ok" or the failure message
  double rmse = 0.0;
  double weighted_rmse = 0.0;
  bool weighted_fallback = false;
  double crps = 0.0;
  double max_rhat = 0.0;
  std::size_t divergences = 0;
  std::vector<BinScore> bins;
};

struct ModelAggregate {
  std::string model;
  int scored = 0;
  int failed = 0;
  double mean_rmse = 0.0;
  double mean_weighted_rmse = 0.0;
  double mean_crps = 0.0;
  double coverage95 = 0.0;  // share of scored bins whose 95% interval holds the truth
};

struct ScoreCard {
  std::vector<ScoreRow> rows;  // model-major, dates in plan order

  std::vector<ModelAggregate> aggregates() const;
};

// The triangle as known on `date`, binned from `origin`.
ReportingTriangle triangle_as_of(std::span<const ReleaseSnapshot> snapshots, Date date, Date origin,
                                 int max_delay, int bin_width);

// Fits one model to one triangle and scores the last `window` bins.
ScoreRow score_nowcast(const ModelSpec& spec, const ReportingTriangle& tri, std::span<const double> truth,
                       int window, const SamplerConfig& sampler, std::uint64_t seed);

// Cells run on `jobs` workers (0 = hardware concurrency); the result does not
// depend on `jobs`.
ScoreCard run_backtest(const BacktestPlan& plan, std::span<const ReleaseSnapshot> snapshots, int jobs = 0);

void write_scorecard(std::ostream& out, const ScoreCard& card);
// One row per (model, date, bin, metric) for plotting.
void write_scorecard_long(std::ostream& out, const ScoreCard& card);

struct PlanFile {
  BacktestPlan plan;
  std::filesystem::path manifest;  // snapshot manifest, resolved against the plan's directory
};

PlanFile read_plan(std::istream& in, const std::filesystem::path& base_dir = {});
PlanFile load_plan(const std::filesystem::path& path);
void write_plan(std::ostream& out, const PlanFile& plan);

struct SensitivityRow {
  std::string label;  // "base" or the override text
  bool ok = false;
  std::string status;
  std::vector<std::pair<std::string, double>> posterior_means;  // non-latent parameters
  double max_rhat = 0.0;
  bool flagged = false;  // failed the R-hat gate
  NowcastSummary nowcast;
  double mean_width95 = 0.0;  // averaged over bins with any unobserved cell
};

// Base fit plus one fit per override. Every override is checked against the
// base priors before anything runs.
std::vector<SensitivityRow> sensitivity_sweep(const ModelSpec& base, std::span<const PriorOverride> overrides,
                                              const ReportingTriangle& tri, const SamplerConfig& sampler,
                                              std::uint64_t seed);

void write_sensitivity(std::ostream& out, const std::vector<SensitivityRow>& rows);

}  // namespace nowcast
