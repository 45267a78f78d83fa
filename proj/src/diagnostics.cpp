#include "nowcast/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "nowcast/csv.hpp"
#include "nowcast/error.hpp"
#include "nowcast/stats.hpp"

namespace nowcast {

namespace {

void check_shape(const ChainSeries& chains) {
  if (chains.size() < 1) throw DomainError("diagnostics need at least one chain");
  const std::size_t n = chains.front().size();
  for (const auto& c : chains) {
    if (c.size() != n) throw DomainError("chains have unequal lengths");
  }
  if (n < 4) throw DomainError("diagnostics need at least 4 draws per chain");
}

bool is_constant(const ChainSeries& chains) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& c : chains) {
    for (double v : c) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  return !(hi - lo >= 1e-15 * std::max(1.0, std::abs(hi)));
}

ChainSeries indicator(const ChainSeries& chains, double threshold) {
  ChainSeries out = chains;
  for (auto& c : out) {
    for (auto& v : c) v = v <= threshold ? 1.0 : 0.0;
  }
  return out;
}

std::vector<double> pooled(const ChainSeries& chains) {
  std::vector<double> all;
  for (const auto& c : chains) all.insert(all.end(), c.begin(), c.end());
  return all;
}

}  // namespace

ChainSeries split_chains(const ChainSeries& chains) {
  ChainSeries out;
  for (const auto& c : chains) {
    const std::size_t half = c.size() / 2;
    out.emplace_back(c.begin(), c.begin() + std::ptrdiff_t(half));
    out.emplace_back(c.end() - std::ptrdiff_t(half), c.end());
  }
  return out;
}

ChainSeries rank_normalize(const ChainSeries& chains) {
  const auto all = pooled(chains);
  const auto ranks = average_ranks(all);
  const double s = static_cast<double>(all.size());
  ChainSeries out = chains;
  std::size_t k = 0;
  for (auto& c : out) {
    for (auto& v : c) v = normal_quantile((ranks[k++] - 0.375) / (s + 0.25));
  }
  return out;
}

double rhat_raw(const ChainSeries& chains) {
  const double n = static_cast<double>(chains.front().size());
  std::vector<double> means, vars;
  for (const auto& c : chains) {
    means.push_back(mean(c));
    vars.push_back(variance(c));
  }
  const double b = n * variance(means);
  const double w = mean(vars);
  return std::sqrt((n - 1.0) / n + b / (n * w));
}

DiagValue split_rhat(const ChainSeries& chains) {
  check_shape(chains);
  if (chains.size() < 2) throw DomainError("split R-hat needs at least 2 chains");
  const auto split = split_chains(chains);
  for (const auto& c : split) {
    if (variance(c) == 0.0) return {std::numeric_limits<double>::infinity(), true};
  }
  return {rhat_raw(rank_normalize(split)), false};
}

// Autocorrelation-sum ESS with Geyer's initial positive and monotone
// sequences; autocovariances are computed lag by lag as needed.
DiagValue ess_raw(const ChainSeries& chains) {
  const std::size_t m = chains.size();
  const std::size_t n = chains.front().size();
  const double total = static_cast<double>(m * n);
  if (is_constant(chains)) return {total, true};

  std::vector<double> cmean(m);
  for (std::size_t c = 0; c < m; ++c) cmean[c] = mean(chains[c]);
  auto mean_acov = [&](std::size_t lag) {
    double acc = 0.0;
    for (std::size_t c = 0; c < m; ++c) {
      const auto& x = chains[c];
      double s = 0.0;
      for (std::size_t i = 0; i + lag < n; ++i) s += (x[i] - cmean[c]) * (x[i + lag] - cmean[c]);
      acc += s / static_cast<double>(n);
    }
    return acc / static_cast<double>(m);
  };

  const double nd = static_cast<double>(n);
  const double mean_var = mean_acov(0) * nd / (nd - 1.0);
  double var_plus = mean_var * (nd - 1.0) / nd;
  if (m > 1) var_plus += variance(cmean);

  std::vector<double> rho(n, 0.0);
  double rho_even = 1.0;
  rho[0] = rho_even;
  double rho_odd = 1.0 - (mean_var - mean_acov(1)) / var_plus;
  rho[1] = rho_odd;

  std::size_t t = 1;
  while (t + 3 < n && (rho_even + rho_odd) > 0.0) {
    rho_even = 1.0 - (mean_var - mean_acov(t + 1)) / var_plus;
    rho_odd = 1.0 - (mean_var - mean_acov(t + 2)) / var_plus;
    if ((rho_even + rho_odd) >= 0.0) {
      rho[t + 1] = rho_even;
      rho[t + 2] = rho_odd;
    }
    t += 2;
  }
  // max_t may be -1 for very short chains; follow the signed arithmetic.
  const long max_t = static_cast<long>(t) - 2;
  const long len = static_cast<long>(n);
  if (rho_even > 0 && max_t + 1 < len) rho[std::size_t(max_t + 1)] = rho_even;

  for (long k = 1; k <= max_t - 2; k += 2) {
    const auto i = std::size_t(k);
    if (rho[i + 1] + rho[i + 2] > rho[i - 1] + rho[i]) {
      rho[i + 1] = 0.5 * (rho[i - 1] + rho[i]);
      rho[i + 2] = rho[i + 1];
    }
  }

  double tau = -1.0;
  for (long k = 0; k <= max_t && k < len; ++k) tau += 2.0 * rho[std::size_t(k)];
  if (max_t + 1 < len) tau += rho[std::size_t(max_t + 1)];
  tau = std::max(tau, 1.0 / std::log10(total));
  for (double r : rho) {
    if (std::isnan(r)) return {std::numeric_limits<double>::quiet_NaN(), false};
  }
  return {total / tau, false};
}

DiagValue ess_bulk(const ChainSeries& chains) {
  check_shape(chains);
  if (is_constant(chains)) return {static_cast<double>(chains.size() * chains.front().size()), true};
  return ess_raw(rank_normalize(split_chains(chains)));
}

DiagValue ess_tail(const ChainSeries& chains) {
  check_shape(chains);
  const auto all = pooled(chains);
  if (is_constant(chains)) return {static_cast<double>(all.size()), true};
  std::vector<double> sorted = all;
  std::sort(sorted.begin(), sorted.end());
  const auto lo = ess_raw(split_chains(indicator(chains, quantile_sorted(sorted, 0.05))));
  const auto hi = ess_raw(split_chains(indicator(chains, quantile_sorted(sorted, 0.95))));
  return lo.value <= hi.value ? lo : hi;
}

ParamSummary summarize(const std::string& name, const ChainSeries& chains) {
  ParamSummary s;
  s.name = name;
  auto all = pooled(chains);
  s.mean = mean(all);
  s.sd = std::sqrt(variance(all));
  std::sort(all.begin(), all.end());
  s.q03 = quantile_sorted(all, 0.03);
  s.q97 = quantile_sorted(all, 0.97);
  s.ess_bulk = ess_bulk(chains);
  s.ess_tail = ess_tail(chains);
  if (chains.size() >= 2) {
    s.r_hat = split_rhat(chains);
  } else {
    s.r_hat = {std::numeric_limits<double>::quiet_NaN(), true};
  }
  return s;
}

DiagnosticsTable summarize(const PosteriorDraws& draws, const SummaryOptions& opts) {
  DiagnosticsTable table;
  const auto names = draws.layout().constrained_names();
  const auto latent = draws.layout().constrained_latent_mask();
  for (std::size_t p = 0; p < names.size(); ++p) {
    if (latent[p] && !opts.include_latent) continue;
    auto row = summarize(names[p], draws.series(p));
    row.latent = latent[p];
    table.rows.push_back(std::move(row));
  }
  for (const auto& s : draws.stats) table.divergences.push_back(s.divergences);
  return table;
}

double DiagnosticsTable::max_rhat() const {
  double worst = 0.0;
  for (const auto& r : rows) {
    if (r.latent) continue;
    const double v = r.r_hat.degenerate ? std::numeric_limits<double>::infinity() : r.r_hat.value;
    worst = std::max(worst, std::isnan(v) ? std::numeric_limits<double>::infinity() : v);
  }
  return worst;
}

bool DiagnosticsTable::passes_gate(double threshold) const { return max_rhat() < threshold; }

std::vector<std::string> DiagnosticsTable::failing(double threshold) const {
  std::vector<std::string> out;
  for (const auto& r : rows) {
    if (r.latent) continue;
    if (r.r_hat.degenerate || !(r.r_hat.value < threshold)) out.push_back(r.name);
  }
  return out;
}

void write_diagnostics(std::ostream& out, const DiagnosticsTable& table) {
  using csv::format_double;
  auto diag = [](const DiagValue& v) { return v.degenerate ? std::string("nan") : format_double(v.value); };
  out << "param,mean,sd,hdi_3%,hdi_97%,ess_bulk,ess_tail,r_hat\n";
  for (const auto& r : table.rows) {
    out << r.name << ',' << format_double(r.mean) << ',' << format_double(r.sd) << ',' << format_double(r.q03)
        << ',' << format_double(r.q97) << ',' << diag(r.ess_bulk) << ',' << diag(r.ess_tail) << ','
        << diag(r.r_hat) << '\n';
  }
}

}  // namespace nowcast
