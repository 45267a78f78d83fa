#include "nowcast/nowcast.hpp"

#include <algorithm>
#include <cmath>

#include "nowcast/error.hpp"
#include "nowcast/nb.hpp"
#include "nowcast/rng.hpp"
#include "nowcast/stats.hpp"

namespace nowcast {

PredictiveDraws::PredictiveDraws(int num_bins, int num_delays, std::size_t num_draws)
    : num_bins_(num_bins),
      num_delays_(num_delays),
      num_draws_(num_draws),
      values_(std::size_t(num_bins) * std::size_t(num_delays) * num_draws, 0) {}

std::span<const std::int64_t> PredictiveDraws::draw(std::size_t s) const {
  const std::size_t n = std::size_t(num_bins_) * std::size_t(num_delays_);
  return {values_.data() + s * n, n};
}

std::span<std::int64_t> PredictiveDraws::draw(std::size_t s) {
  const std::size_t n = std::size_t(num_bins_) * std::size_t(num_delays_);
  return {values_.data() + s * n, n};
}

std::int64_t PredictiveDraws::row_total(std::size_t s, int t) const {
  const auto d = draw(s);
  std::int64_t sum = 0;
  for (int k = 0; k < num_delays_; ++k) sum += d[cell(t, k)];
  return sum;
}

PredictiveDraws PredictiveDraws::from_triangle(const ReportingTriangle& tri) {
  PredictiveDraws out(tri.num_bins(), tri.num_delays(), 1);
  std::copy(tri.counts().begin(), tri.counts().end(), out.draw(0).begin());
  return out;
}

PredictiveDraws predictive_complete(const PosteriorDraws& draws, const Model& model,
                                    const ReportingTriangle& tri, const PredictiveOptions& opts) {
  if (draws.total_draws() == 0) throw DomainError("predictive_complete: no posterior draws");
  if (opts.thin < 1) throw DomainError("predictive_complete: thin must be >= 1");
  if (model.num_bins() != tri.num_bins() || model.num_delays() != tri.num_delays()) {
    throw DomainError("predictive_complete: model and triangle disagree on shape");
  }
  std::vector<std::pair<int, int>> picks;
  std::size_t k = 0;
  for (int c = 0; c < draws.num_chains(); ++c) {
    for (int i = 0; i < draws.draws_per_chain(); ++i, ++k) {
      if (k % std::size_t(opts.thin) == 0) picks.emplace_back(c, i);
    }
  }
  PredictiveDraws out(tri.num_bins(), tri.num_delays(), picks.size());
  std::vector<double> eta(model.num_cells());
  for (std::size_t s = 0; s < picks.size(); ++s) {
    const auto u = draws.unconstrained(picks[s].first, picks[s].second);
    model.log_rates(u, eta);
    const double r = model.dispersion(u);
    Rng rng = make_stream(opts.seed, kPredictiveStream, s);
    auto cells = out.draw(s);
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (opts.mode == PredictiveMode::Completion && tri.mask()[c]) {
        cells[c] = tri.counts()[c];
      } else {
        cells[c] = sample_nb(rng, std::max(std::exp(eta[c]), kRateFloor), r);
      }
    }
  }
  return out;
}

std::vector<std::vector<double>> draw_totals(const PredictiveDraws& pred) {
  std::vector<std::vector<double>> out(pred.num_draws(), std::vector<double>(std::size_t(pred.num_bins())));
  for (std::size_t s = 0; s < pred.num_draws(); ++s) {
    for (int t = 0; t < pred.num_bins(); ++t) out[s][std::size_t(t)] = static_cast<double>(pred.row_total(s, t));
  }
  return out;
}

NowcastSummary summarize_totals(const std::vector<std::vector<double>>& totals,
                                std::vector<double> observed_partial) {
  if (totals.empty()) throw DomainError("nowcast summary needs at least one draw");
  const std::size_t T = totals.front().size();
  NowcastSummary s;
  s.observed_partial = std::move(observed_partial);
  if (s.observed_partial.size() != T) throw DomainError("observed partial sums have the wrong length");
  std::vector<double> col(totals.size());
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t k = 0; k < totals.size(); ++k) col[k] = totals[k][t];
    std::sort(col.begin(), col.end());
    s.mean.push_back(mean(col));
    s.q025.push_back(quantile_sorted(col, 0.025));
    s.q25.push_back(quantile_sorted(col, 0.25));
    s.q50.push_back(quantile_sorted(col, 0.5));
    s.q75.push_back(quantile_sorted(col, 0.75));
    s.q975.push_back(quantile_sorted(col, 0.975));
  }
  return s;
}

NowcastSummary nowcast_totals(const PredictiveDraws& pred, const ReportingTriangle& tri) {
  return summarize_totals(draw_totals(pred), marginal_totals(tri).values);
}

NaturalSpline::NaturalSpline(std::vector<double> x, std::vector<double> y) : x_(std::move(x)), y_(std::move(y)) {
  const std::size_t n = x_.size();
  if (n < 3 || y_.size() != n) throw DomainError("spline needs at least 3 anchors");
  for (std::size_t i = 1; i < n; ++i) {
    if (!(x_[i] > x_[i - 1])) throw DomainError("spline anchors must be increasing");
  }
  // Tridiagonal system for the interior second derivatives (Thomas algorithm).
  m_.assign(n, 0.0);
  std::vector<double> c(n, 0.0), d(n, 0.0);
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double h0 = x_[i] - x_[i - 1];
    const double h1 = x_[i + 1] - x_[i];
    const double a = h0 / 6.0;
    double b = (h0 + h1) / 3.0;
    const double cc = h1 / 6.0;
    double rhs = (y_[i + 1] - y_[i]) / h1 - (y_[i] - y_[i - 1]) / h0;
    if (i > 1) {
      b -= a * c[i - 1];
      rhs -= a * d[i - 1];
    }
    c[i] = cc / b;
    d[i] = rhs / b;
  }
  for (std::size_t i = n - 2; i >= 1; --i) {
    m_[i] = d[i] - c[i] * m_[i + 1];
    if (i == 1) break;
  }
}

double NaturalSpline::operator()(double v) const {
  const std::size_t n = x_.size();
  if (v <= x_.front()) {
    const double h = x_[1] - x_[0];
    const double slope = (y_[1] - y_[0]) / h - h * (2.0 * m_[0] + m_[1]) / 6.0;
    return y_[0] + slope * (v - x_[0]);
  }
  if (v >= x_.back()) {
    const double h = x_[n - 1] - x_[n - 2];
    const double slope = (y_[n - 1] - y_[n - 2]) / h + h * (m_[n - 2] + 2.0 * m_[n - 1]) / 6.0;
    return y_[n - 1] + slope * (v - x_[n - 1]);
  }
  const auto it = std::upper_bound(x_.begin(), x_.end(), v);
  const std::size_t i = std::size_t(it - x_.begin()) - 1;
  const double h = x_[i + 1] - x_[i];
  const double a = (x_[i + 1] - v) / h;
  const double b = (v - x_[i]) / h;
  return a * y_[i] + b * y_[i + 1] + ((a * a * a - a) * m_[i] + (b * b * b - b) * m_[i + 1]) * h * h / 6.0;
}

std::vector<double> daily_interpolate(std::span<const double> weekly, int bin_width, int* clipped) {
  if (weekly.size() < 3) throw DomainError("daily interpolation needs at least 3 weekly values");
  if (bin_width < 1) throw DomainError("bin width must be >= 1");
  std::vector<double> x, y;
  for (std::size_t t = 0; t < weekly.size(); ++t) {
    x.push_back(static_cast<double>(t) * bin_width + bin_width / 2);
    y.push_back(weekly[t] / bin_width);
  }
  const NaturalSpline spline(x, y);
  std::vector<double> out(weekly.size() * std::size_t(bin_width));
  for (std::size_t day = 0; day < out.size(); ++day) {
    double v = spline(static_cast<double>(day));
    if (v < 0.0) {
      v = 0.0;
      if (clipped) ++*clipped;
    }
    out[day] = v;
  }
  return out;
}

namespace {

DailySeries summarize_days(const std::vector<std::vector<double>>& daily) {
  DailySeries s;
  const std::size_t n = daily.front().size();
  std::vector<double> col(daily.size());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < daily.size(); ++k) col[k] = daily[k][i];
    std::sort(col.begin(), col.end());
    s.mean.push_back(mean(col));
    s.q025.push_back(quantile_sorted(col, 0.025));
    s.q25.push_back(quantile_sorted(col, 0.25));
    s.q50.push_back(quantile_sorted(col, 0.5));
    s.q75.push_back(quantile_sorted(col, 0.75));
    s.q975.push_back(quantile_sorted(col, 0.975));
  }
  return s;
}

}  // namespace

DailySeries daily_from_draws(const std::vector<std::vector<double>>& totals, const DailyOptions& opts) {
  if (totals.empty()) throw DomainError("daily interpolation needs at least one draw");
  int clipped = 0;
  std::vector<std::vector<double>> daily;
  daily.reserve(totals.size());
  for (const auto& w : totals) daily.push_back(daily_interpolate(w, opts.bin_width, &clipped));
  auto s = summarize_days(daily);
  s.clipped = clipped;
  return s;
}

DailySeries daily_from_summary(const NowcastSummary& summary, const DailyOptions& opts) {
  DailySeries s;
  int clipped = 0;
  s.mean = daily_interpolate(summary.mean, opts.bin_width, &clipped);
  s.q025 = daily_interpolate(summary.q025, opts.bin_width, &clipped);
  s.q25 = daily_interpolate(summary.q25, opts.bin_width, &clipped);
  s.q50 = daily_interpolate(summary.q50, opts.bin_width, &clipped);
  s.q75 = daily_interpolate(summary.q75, opts.bin_width, &clipped);
  s.q975 = daily_interpolate(summary.q975, opts.bin_width, &clipped);
  s.clipped = clipped;
  return s;
}

}  // namespace nowcast
