#include "nowcast/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <functional>
#include <ostream>
#include <set>
#include <thread>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "nowcast/csv.hpp"
#include "nowcast/diagnostics.hpp"
#include "nowcast/error.hpp"
#include "nowcast/models.hpp"
#include "nowcast/rng.hpp"
#include "nowcast/stats.hpp"

namespace nowcast {

RmseResult rmse(std::span<const double> pred, std::span<const double> truth, std::span<const double> weights) {
  if (pred.size() != truth.size()) throw SizeError("rmse: prediction and truth lengths differ");
  if (pred.empty()) throw SizeError("rmse: empty input");
  if (!weights.empty() && weights.size() != pred.size()) throw SizeError("rmse: weight length differs");
  RmseResult out;
  double wsum = 0.0;
  for (double w : weights) {
    if (w < 0 || !std::isfinite(w)) throw DomainError("rmse: weights must be finite and >= 0");
    wsum += w;
  }
  const bool weighted = !weights.empty() && wsum > 0;
  out.fallback = !weights.empty() && !weighted;
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = pred[i] - truth[i];
    acc += (weighted ? weights[i] : 1.0) * e * e;
  }
  out.value = std::sqrt(acc / (weighted ? wsum : static_cast<double>(pred.size())));
  return out;
}

std::vector<double> unreported_weights(std::span<const double> truth, std::span<const double> raw) {
  if (truth.size() != raw.size()) throw SizeError("weights: truth and raw lengths differ");
  std::vector<double> w(truth.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::max(truth[i] - raw[i], 0.0);
  return w;
}

double crps(std::span<const double> samples, double truth) {
  const std::size_t n = samples.size();
  if (n < 1) throw SizeError("crps: no samples");
  std::vector<double> x(samples.begin(), samples.end());
  std::sort(x.begin(), x.end());
  double abs_err = 0.0;
  double pair = 0.0;  // sum over i of x_(i) * (2i - n - 1), i 1-based
  for (std::size_t i = 0; i < n; ++i) {
    abs_err += std::abs(x[i] - truth);
    pair += x[i] * (2.0 * static_cast<double>(i + 1) - static_cast<double>(n) - 1.0);
  }
  const double nd = static_cast<double>(n);
  // sum_{i,j} |x_i - x_j| = 2 * pair
  return abs_err / nd - pair / (nd * nd);
}

void BacktestPlan::validate() const {
  if (dates.empty()) throw ConfigError("backtest plan has no nowcast dates");
  if (models.empty()) throw ConfigError("backtest plan has no models");
  if (window < 1) throw ConfigError("backtest window must be >= 1");
  if (min_training_bins < 1) throw ConfigError("min_training_bins must be >= 1");
  if (max_delay < 1) throw ConfigError("max_delay must be >= 1");
  if (bin_width < 1) throw ConfigError("bin_width must be >= 1");
  sampler.validate();
}

std::vector<ModelAggregate> ScoreCard::aggregates() const {
  std::vector<ModelAggregate> out;
  for (const auto& row : rows) {
    auto it = std::find_if(out.begin(), out.end(), [&](const ModelAggregate& a) { return a.model == row.model; });
    if (it == out.end()) {
      out.push_back({});
      out.back().model = row.model;
      it = out.end() - 1;
    }
    if (!row.ok) {
      ++it->failed;
      continue;
    }
    ++it->scored;
    it->mean_rmse += row.rmse;
    it->mean_weighted_rmse += row.weighted_rmse;
    it->mean_crps += row.crps;
  }
  for (auto& a : out) {
    if (a.scored == 0) continue;
    a.mean_rmse /= a.scored;
    a.mean_weighted_rmse /= a.scored;
    a.mean_crps /= a.scored;
    int bins = 0, hits = 0;
    for (const auto& row : rows) {
      if (row.model != a.model || !row.ok) continue;
      for (const auto& b : row.bins) {
        ++bins;
        if (b.truth >= b.q025 && b.truth <= b.q975) ++hits;
      }
    }
    a.coverage95 = bins > 0 ? static_cast<double>(hits) / bins : 0.0;
  }
  return out;
}

ReportingTriangle triangle_as_of(std::span<const ReleaseSnapshot> snapshots, Date date, Date origin,
                                 int max_delay, int bin_width) {
  TriangleOptions opts;
  opts.max_delay = max_delay;
  opts.bin_width = bin_width;
  opts.now = date;
  opts.origin = origin;
  return build_triangle(snapshots, opts);
}

ScoreRow score_nowcast(const ModelSpec& spec, const ReportingTriangle& tri, std::span<const double> truth,
                       int window, const SamplerConfig& sampler, std::uint64_t seed) {
  ScoreRow row;
  row.model = variant_name(spec.variant);
  row.date = tri.now();
  if (truth.size() != std::size_t(tri.num_bins())) throw SizeError("score_nowcast: truth length differs from T");

  const auto model = make_model(spec, tri);
  SamplerConfig cfg = sampler;
  cfg.seed = seed;
  const auto draws = run_chains(*model, cfg);
  row.max_rhat = summarize(draws, {.include_latent = false}).max_rhat();
  row.divergences = draws.total_divergences();

  PredictiveOptions popts;
  popts.seed = seed;
  const auto pred = predictive_complete(draws, *model, tri, popts);
  const auto totals = draw_totals(pred);
  const auto raw = marginal_totals(tri).values;

  const int T = tri.num_bins();
  const int w = std::min(window, T);
  std::vector<double> p, y, r;
  std::vector<double> col(totals.size());
  for (int t = T - w; t < T; ++t) {
    for (std::size_t s = 0; s < totals.size(); ++s) col[s] = totals[s][std::size_t(t)];
    std::sort(col.begin(), col.end());
    BinScore b;
    b.t = t;
    b.bin_start = tri.bin_start(t);
    b.truth = truth[std::size_t(t)];
    b.raw = raw[std::size_t(t)];
    b.mean = mean(col);
    b.q025 = quantile_sorted(col, 0.025);
    b.q975 = quantile_sorted(col, 0.975);
    b.crps = crps(col, b.truth);
    row.bins.push_back(b);
    p.push_back(b.mean);
    y.push_back(b.truth);
    r.push_back(b.raw);
  }
  row.rmse = rmse(p, y).value;
  const auto weights = unreported_weights(y, r);
  const auto wr = rmse(p, y, weights);
  row.weighted_rmse = wr.value;
  row.weighted_fallback = wr.fallback;
  double c = 0.0;
  for (const auto& b : row.bins) c += b.crps;
  row.crps = c / static_cast<double>(row.bins.size());
  row.ok = true;
  row.status = "ok";
  return row;
}

namespace {

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  if (jobs <= 0) jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  jobs = static_cast<int>(std::min<std::size_t>(std::size_t(jobs), std::max<std::size_t>(n, 1)));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) fn(i);
  };
  if (jobs == 1) {
    worker();
    return;
  }
  std::vector<std::thread> pool;
  for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
}

Date default_origin(std::span<const ReleaseSnapshot> snapshots) {
  bool any = false;
  Date origin{};
  for (const auto& s : snapshots) {
    for (const auto& row : s.rows) {
      if (!any || row.event_date < origin) origin = row.event_date;
      any = true;
    }
  }
  if (!any) throw DomainError("snapshots contain no event dates; set an explicit origin");
  return origin;
}

}  // namespace

ScoreCard run_backtest(const BacktestPlan& plan, std::span<const ReleaseSnapshot> snapshots, int jobs) {
  plan.validate();
  if (snapshots.empty()) throw DomainError("backtest needs snapshots");
  const Date origin = plan.origin ? *plan.origin : default_origin(snapshots);

  const ReleaseSnapshot* truth = &snapshots.back();
  if (plan.truth_date) {
    truth = nullptr;
    for (const auto& s : snapshots) {
      if (s.release_date == *plan.truth_date) truth = &s;
    }
    if (!truth) throw DomainError("no snapshot released on truth date " + format_date(*plan.truth_date));
  }
  for (const Date& d : plan.dates) {
    const long days = days_between(origin, d);
    if (days % plan.bin_width != 0 || days <= 0) {
      throw ConfigError("nowcast date " + format_date(d) + " is not a bin boundary after the origin " +
                        format_date(origin));
    }
    if (days / plan.bin_width < plan.min_training_bins) {
      throw ConfigError("nowcast date " + format_date(d) + " has fewer than " +
                        std::to_string(plan.min_training_bins) + " training bins");
    }
    if (d > truth->release_date) {
      throw ConfigError("nowcast date " + format_date(d) + " is after the truth release " +
                        format_date(truth->release_date));
    }
  }

  const std::size_t nd = plan.dates.size();
  const std::size_t cells = plan.models.size() * nd;
  ScoreCard card;
  card.rows.resize(cells);
  const int pool = jobs > 0 ? jobs : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  SamplerConfig sampler = plan.sampler;
  // Parallelism goes to cells; each fit runs its chains serially unless
  // there is only one worker.
  if (pool > 1 && cells > 1) sampler.jobs = 1;

  parallel_for(cells, pool, [&](std::size_t k) {
    const auto& spec = plan.models[k / nd];
    const Date date = plan.dates[k % nd];
    Rng seeder = make_stream(plan.seed, kBacktestStream, k);
    const std::uint64_t seed = seeder();
    ScoreRow row;
    try {
      const auto tri = triangle_as_of(snapshots, date, origin, plan.max_delay, plan.bin_width);
      const auto y = binned_totals(*truth, origin, plan.bin_width, tri.num_bins());
      row = score_nowcast(spec, tri, y, plan.window, sampler, seed);
    } catch (const Error& e) {
      row = ScoreRow{};
      row.status = std::string(e.category()) + ": " + e.what();
    } catch (const std::exception& e) {
      row = ScoreRow{};
      row.status = e.what();
    }
    row.model = variant_name(spec.variant);
    row.date = date;
    card.rows[k] = std::move(row);
  });
  return card;
}

namespace {

std::string num(double v) { return csv::format_double(v); }

std::string status_field(const std::string& s) {
  std::string out = s;
  std::replace(out.begin(), out.end(), ',', ';');
  std::replace(out.begin(), out.end(), '\n', ' ');
  return out;
}

}  // namespace

void write_scorecard(std::ostream& out, const ScoreCard& card) {
  csv::write_metadata(out, {{"format", "nowcast-scorecard/1"}});
  out << "model,date,rmse,weighted_rmse,crps,status\n";
  for (const auto& row : card.rows) {
    out << row.model << ',' << format_date(row.date) << ',';
    if (row.ok) {
      out << num(row.rmse) << ',' << num(row.weighted_rmse) << ',' << num(row.crps) << ','
          << (row.weighted_fallback ? "ok_unweighted" : "ok");
    } else {
      out << "nan,nan,nan,failed: " << status_field(row.status);
    }
    out << '\n';
  }
  for (const auto& a : card.aggregates()) {
    out << a.model << ",mean,";
    if (a.scored > 0) {
      out << num(a.mean_rmse) << ',' << num(a.mean_weighted_rmse) << ',' << num(a.mean_crps);
    } else {
      out << "nan,nan,nan";
    }
    out << ",aggregate " << a.scored << " scored " << a.failed << " failed\n";
  }
}

void write_scorecard_long(std::ostream& out, const ScoreCard& card) {
  csv::write_metadata(out, {{"format", "nowcast-scorecard-long/1"}});
  out << "model,date,bin_start,metric,value\n";
  for (const auto& row : card.rows) {
    if (!row.ok) continue;
    const std::string head = row.model + ',' + format_date(row.date) + ',';
    out << head << ",rmse," << num(row.rmse) << '\n';
    out << head << ",weighted_rmse," << num(row.weighted_rmse) << '\n';
    out << head << ",crps," << num(row.crps) << '\n';
    for (const auto& b : row.bins) {
      const std::string bh = head + format_date(b.bin_start) + ',';
      out << bh << "truth," << num(b.truth) << '\n';
      out << bh << "raw," << num(b.raw) << '\n';
      out << bh << "mean," << num(b.mean) << '\n';
      out << bh << "q2.5," << num(b.q025) << '\n';
      out << bh << "q97.5," << num(b.q975) << '\n';
      out << bh << "crps," << num(b.crps) << '\n';
    }
  }
}

namespace {

namespace pt = boost::property_tree;

double to_number(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing");
    return x;
  } catch (const std::exception&) {
    throw ConfigError("plan: bad number for '" + key + "': " + v);
  }
}

int to_int(const std::string& key, const std::string& v) {
  const double x = to_number(key, v);
  if (x != std::floor(x)) throw ConfigError("plan: '" + key + "' must be an integer");
  return static_cast<int>(x);
}

std::vector<std::string> list(const std::string& v) {
  std::vector<std::string> out;
  for (const auto& item : csv::split(v, ',')) {
    const auto s = std::string(csv::trim(item));
    if (!s.empty()) out.push_back(s);
  }
  return out;
}

}  // namespace

PlanFile read_plan(std::istream& in, const std::filesystem::path& base_dir) {
  pt::ptree tree;
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("plan: ") + e.what());
  }
  PlanFile file;
  auto& plan = file.plan;
  const auto* sec = tree.get_child_optional("plan").get_ptr();
  if (!sec) throw ConfigError("plan: missing [plan] section");
  std::vector<std::string> model_names;
  std::optional<Date> first, last;
  for (const auto& [key, node] : *sec) {
    const std::string v(csv::trim(node.get_value<std::string>()));
    if (key == "manifest") file.manifest = v;
    else if (key == "dates") {
      for (const auto& d : list(v)) plan.dates.push_back(parse_date(d));
    } else if (key == "first_date") first = parse_date(v);
    else if (key == "last_date") last = parse_date(v);
    else if (key == "models") model_names = list(v);
    else if (key == "window") plan.window = to_int(key, v);
    else if (key == "min_training_bins") plan.min_training_bins = to_int(key, v);
    else if (key == "max_delay") plan.max_delay = to_int(key, v);
    else if (key == "bin_width") plan.bin_width = to_int(key, v);
    else if (key == "origin") plan.origin = parse_date(v);
    else if (key == "truth_date") plan.truth_date = parse_date(v);
    else if (key == "seed") plan.seed = static_cast<std::uint64_t>(to_number(key, v));
    else throw ConfigError("plan: unknown key '" + key + "' in [plan]");
  }
  if (first || last) {
    if (!first || !last) throw ConfigError("plan: first_date and last_date go together");
    if (!plan.dates.empty()) throw ConfigError("plan: give either dates or first_date/last_date");
    for (Date d = *first; d <= *last; d = add_days(d, plan.bin_width)) plan.dates.push_back(d);
  }
  if (auto s = tree.get_child_optional("sampler")) {
    for (const auto& [key, node] : *s) {
      set_sampler_option(plan.sampler, key, csv::trim(node.get_value<std::string>()));
    }
  }
  std::set<std::string> seen;
  for (const auto& name : model_names) {
    ModelSpec spec = default_model_spec(parse_variant(name));
    const std::string vname = variant_name(spec.variant);
    if (!seen.insert(vname).second) throw ConfigError("plan: model '" + vname + "' listed twice");
    if (auto m = tree.get_child_optional(pt::ptree::path_type("model." + vname, '/'))) {
      for (const auto& [key, node] : *m) {
        const std::string v(csv::trim(node.get_value<std::string>()));
        if (key == "latent") spec.latent = parse_latent_layout(v);
        else if (key == "jitter") spec.jitter = to_number(key, v);
        else throw ConfigError("plan: unknown key '" + key + "' in [model." + vname + "]");
      }
    }
    if (auto p = tree.get_child_optional(pt::ptree::path_type("priors." + vname, '/'))) {
      for (const auto& [key, node] : *p) spec.priors.set(key, parse_prior(node.get_value<std::string>()));
    }
    plan.models.push_back(std::move(spec));
  }
  if (!file.manifest.empty() && file.manifest.is_relative() && !base_dir.empty()) {
    file.manifest = base_dir / file.manifest;
  }
  plan.validate();
  return file;
}

PlanFile load_plan(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open plan file " + path.string());
  return read_plan(in, path.parent_path());
}

void write_plan(std::ostream& out, const PlanFile& file) {
  const auto& plan = file.plan;
  out << "[plan]\n";
  if (!file.manifest.empty()) out << "manifest = " << file.manifest.generic_string() << '\n';
  out << "dates = ";
  for (std::size_t i = 0; i < plan.dates.size(); ++i) out << (i ? ", " : "") << format_date(plan.dates[i]);
  out << "\nmodels = ";
  for (std::size_t i = 0; i < plan.models.size(); ++i) out << (i ? ", " : "") << variant_name(plan.models[i].variant);
  out << "\nwindow = " << plan.window << "\nmin_training_bins = " << plan.min_training_bins
      << "\nmax_delay = " << plan.max_delay << "\nbin_width = " << plan.bin_width << '\n';
  if (plan.origin) out << "origin = " << format_date(*plan.origin) << '\n';
  if (plan.truth_date) out << "truth_date = " << format_date(*plan.truth_date) << '\n';
  out << "seed = " << plan.seed << "\n\n[sampler]\n";
  const auto& c = plan.sampler;
  out << "chains = " << c.chains << "\niterations = " << c.iterations << "\nwarmup = " << c.warmup
      << "\ntarget_accept = " << num(c.target_accept) << "\ntrajectory_time = " << num(c.trajectory_time)
      << "\nmax_leapfrog = " << c.max_leapfrog << '\n';
  for (const auto& spec : plan.models) {
    const std::string vname = variant_name(spec.variant);
    out << "\n[model." << vname << "]\nlatent = " << to_string(spec.latent) << "\njitter = " << num(spec.jitter)
        << "\n\n[priors." << vname << "]\n";
    for (const auto& [name, prior] : spec.priors.entries()) out << name << " = " << to_string(prior) << '\n';
  }
}

std::vector<SensitivityRow> sensitivity_sweep(const ModelSpec& base, std::span<const PriorOverride> overrides,
                                              const ReportingTriangle& tri, const SamplerConfig& sampler,
                                              std::uint64_t seed) {
  std::vector<std::pair<std::string, ModelSpec>> runs{{"base", base}};
  for (const auto& o : overrides) {
    ModelSpec spec = base;
    spec.priors.set(o.name, o.prior);
    runs.emplace_back(o.name + "=" + to_string(o.prior), std::move(spec));
  }
  std::vector<SensitivityRow> rows;
  for (std::size_t k = 0; k < runs.size(); ++k) {
    SensitivityRow row;
    row.label = runs[k].first;
    try {
      const auto model = make_model(runs[k].second, tri);
      SamplerConfig cfg = sampler;
      cfg.seed = seed;
      const auto draws = run_chains(*model, cfg);
      const auto table = summarize(draws, {.include_latent = false});
      for (const auto& p : table.rows) {
        if (!p.latent) row.posterior_means.emplace_back(p.name, p.mean);
      }
      row.max_rhat = table.max_rhat();
      row.flagged = !table.passes_gate();
      PredictiveOptions popts;
      popts.seed = seed;
      row.nowcast = nowcast_totals(predictive_complete(draws, *model, tri, popts), tri);
      double width = 0.0;
      int n = 0;
      for (int t = 0; t < tri.num_bins(); ++t) {
        bool open = false;
        for (int d = 0; d < tri.num_delays(); ++d) open = open || !tri.observed(t, d);
        if (!open) continue;
        width += row.nowcast.q975[std::size_t(t)] - row.nowcast.q025[std::size_t(t)];
        ++n;
      }
      row.mean_width95 = n > 0 ? width / n : 0.0;
      row.ok = true;
      row.status = "ok";
    } catch (const Error& e) {
      row.status = std::string(e.category()) + ": " + e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_sensitivity(std::ostream& out, const std::vector<SensitivityRow>& rows) {
  csv::write_metadata(out, {{"format", "nowcast-sensitivity/1"}});
  out << "config,quantity,value\n";
  for (const auto& row : rows) {
    const std::string label = status_field(row.label);
    if (!row.ok) {
      out << label << ",status,failed: " << status_field(row.status) << '\n';
      continue;
    }
    out << label << ",status," << (row.flagged ? "rhat_flagged" : "ok") << '\n';
    out << label << ",max_rhat," << num(row.max_rhat) << '\n';
    out << label << ",mean_width95," << num(row.mean_width95) << '\n';
    for (const auto& [name, v] : row.posterior_means) out << label << ",mean:" << name << ',' << num(v) << '\n';
    for (std::size_t t = 0; t < row.nowcast.size(); ++t) {
      out << label << ",nowcast_mean[" << t << "]," << num(row.nowcast.mean[t]) << '\n';
    }
  }
}

}  // namespace nowcast
