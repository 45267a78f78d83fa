#include "cli.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <json.hpp>

#include "nowcast/csv.hpp"
#include "nowcast/diagnostics.hpp"
#include "nowcast/error.hpp"
#include "nowcast/evaluation.hpp"
#include "nowcast/io.hpp"
#include "nowcast/models.hpp"
#include "nowcast/nowcast.hpp"
#include "nowcast/priors.hpp"
#include "nowcast/sampler.hpp"
#include "nowcast/simulate.hpp"
#include "nowcast/triangle.hpp"

#ifndef NOWCAST_VERSION
#define NOWCAST_VERSION "0.0.0"
#endif

namespace nowcast::cli {

namespace fs = std::filesystem;
namespace pt = boost::property_tree;
using json = nlohmann::json;

namespace {

// Convergence-gate failure under --strict.
class GateFailure : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "convergence"; }
};

struct Common {
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
};

struct SamplerFlags {
  std::optional<int> chains;
  std::optional<int> iterations;
  std::optional<int> warmup;
  std::optional<double> target_accept;
  std::optional<double> trajectory_time;
  std::optional<int> max_leapfrog;
};

struct ModelFlags {
  std::optional<std::string> model;
  std::string config;
  std::vector<std::string> priors;
};

std::string fmt(double v) { return csv::format_double(v); }

void add_common(CLI::App* app, Common& c) {
  app->add_option("--seed", c.seed, "Master random seed")->envname("NOWCAST_SEED")->default_str("1");
  app->add_option("--jobs", c.jobs, "Worker threads (0 = logical cores)")
      ->envname("NOWCAST_JOBS")
      ->default_str("0");
}

void add_sampler_flags(CLI::App* app, SamplerFlags& f) {
  const SamplerConfig d;
  app->add_option("--chains", f.chains, "Number of chains")->envname("NOWCAST_CHAINS")->default_str(std::to_string(d.chains));
  app->add_option("--iterations", f.iterations, "Iterations per chain, warm-up included")
      ->envname("NOWCAST_ITERATIONS")
      ->default_str(std::to_string(d.iterations));
  app->add_option("--warmup", f.warmup, "Warm-up iterations per chain")
      ->envname("NOWCAST_WARMUP")
      ->default_str(std::to_string(d.warmup));
  app->add_option("--target-accept", f.target_accept, "Step-size adaptation target")
      ->envname("NOWCAST_TARGET_ACCEPT")
      ->default_str(fmt(d.target_accept));
  app->add_option("--trajectory-time", f.trajectory_time, "Leapfrog steps are capped at ceil(time / step size)")
      ->envname("NOWCAST_TRAJECTORY_TIME")
      ->default_str(fmt(d.trajectory_time));
  app->add_option("--max-leapfrog", f.max_leapfrog, "Hard cap on leapfrog steps")
      ->envname("NOWCAST_MAX_LEAPFROG")
      ->default_str(std::to_string(d.max_leapfrog));
}

void add_model_flags(CLI::App* app, ModelFlags& f) {
  app->add_option("--model", f.model, "Model variant (se_1d, se_se_1d, se_mat12_1d, se_mat32_1d, se_se_split_1d, additive_2d, nobbs)")
      ->envname("NOWCAST_MODEL")
      ->default_str("additive_2d");
  app->add_option("--config", f.config, "Run config with [model], [priors] and [sampler] sections")
      ->check(CLI::ExistingFile);
  app->add_option("--prior", f.priors, "Prior override name=prior, repeatable");
}

void apply(SamplerConfig& cfg, const SamplerFlags& f) {
  if (f.chains) cfg.chains = *f.chains;
  if (f.iterations) cfg.iterations = *f.iterations;
  if (f.warmup) cfg.warmup = *f.warmup;
  if (f.target_accept) cfg.target_accept = *f.target_accept;
  if (f.trajectory_time) cfg.trajectory_time = *f.trajectory_time;
  if (f.max_leapfrog) cfg.max_leapfrog = *f.max_leapfrog;
}

int resolve_jobs(const Common& c) {
  int jobs = c.jobs.value_or(0);
  if (jobs < 0) throw ConfigError("--jobs must be >= 0");
  if (jobs == 0) jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  return jobs;
}

struct RunSettings {
  ModelSpec spec;
  SamplerConfig sampler;
  std::uint64_t seed = 1;
};

// Layers: variant defaults < config file < environment < flags.
RunSettings resolve_run(const ModelFlags& mf, const SamplerFlags& sf, const Common& common) {
  RunSettings rs;
  pt::ptree tree;
  if (!mf.config.empty()) {
    std::ifstream in(mf.config);
    if (!in) throw IoError("cannot open '" + mf.config + "'");
    try {
      pt::ini_parser::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
      throw ConfigError(std::string("run config: ") + e.what());
    }
  }
  std::string variant = "additive_2d";
  if (auto v = tree.get_optional<std::string>("model.variant")) variant = std::string(csv::trim(*v));
  if (mf.model) variant = *mf.model;
  variant = variant_name(parse_variant(variant));

  pt::ptree model_tree;
  for (const auto& [key, node] : tree) {
    if (key == "sampler") {
      for (const auto& [k, v] : node) set_sampler_option(rs.sampler, k, csv::trim(v.get_value<std::string>()));
    } else if (key == "run") {
      for (const auto& [k, v] : node) {
        const std::string value(csv::trim(v.get_value<std::string>()));
        if (k == "seed") {
          try {
            rs.seed = std::stoull(value);
          } catch (const std::exception&) {
            throw ConfigError("run config: bad seed '" + value + "'");
          }
        } else {
          throw ConfigError("run config: unknown key '" + k + "' in [run]");
        }
      }
    } else {
      model_tree.add_child(key, node);
    }
  }
  model_tree.put("model.variant", variant);
  std::stringstream ini;
  pt::ini_parser::write_ini(ini, model_tree);
  rs.spec = read_model_config(ini);
  for (const auto& text : mf.priors) {
    const auto o = parse_prior_override(text);
    rs.spec.priors.set(o.name, o.prior);
  }
  apply(rs.sampler, sf);
  if (common.seed) rs.seed = *common.seed;
  rs.sampler.seed = rs.seed;
  rs.sampler.validate();
  return rs;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory '" + dir.string() + "'");
}

void write_file(const fs::path& path, const std::function<void(std::ostream&)>& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  body(out);
  out.flush();
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json sampler_json(const SamplerConfig& c) {
  return {{"algorithm", "static-hmc"},      {"chains", c.chains},
          {"iterations", c.iterations},     {"warmup", c.warmup},
          {"target_accept", c.target_accept}, {"trajectory_time", c.trajectory_time},
          {"max_leapfrog", c.max_leapfrog}, {"seed", c.seed}};
}

json model_json(const ModelSpec& spec) {
  json priors = json::object();
  for (const auto& [name, prior] : spec.priors.entries()) priors[name] = to_string(prior);
  return {{"variant", variant_name(spec.variant)},
          {"latent", to_string(spec.latent)},
          {"jitter", spec.jitter},
          {"priors", priors}};
}

struct Manifest {
  std::string command;
  std::vector<std::string> argv;
  std::string config;
  std::uint64_t seed = 1;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  json settings = json::object();
};

void write_manifest(const fs::path& dir, const Manifest& m) {
  json j;
  j["command"] = m.command;
  j["argv"] = m.argv;
  j["config"] = m.config.empty() ? json(nullptr) : json(m.config);
  j["seed"] = m.seed;
  j["inputs"] = m.inputs;
  j["outputs"] = m.outputs;
  j["settings"] = m.settings;
  j["engine_version"] = NOWCAST_VERSION;
  j["timestamp"] = utc_timestamp();
  write_file(dir / "manifest.json", [&](std::ostream& out) { out << j.dump(2) << '\n'; });
}

void warn_sampler(const PosteriorDraws& draws, std::ostream& err) {
  for (const auto& w : draws.warnings) err << "warning[sampler]: " << w << '\n';
}

// Reports the R-hat gate; throws GateFailure under --strict.
void check_gate(const DiagnosticsTable& table, bool strict, std::ostream& err) {
  if (table.passes_gate()) return;
  std::string names;
  for (const auto& n : table.failing()) names += (names.empty() ? "" : " ") + n;
  const std::string msg = "R-hat >= 1.01 for: " + names;
  if (strict) throw GateFailure(msg);
  err << "warning[convergence]: " << msg << '\n';
}

void write_sampler_stats(std::ostream& out, const PosteriorDraws& draws) {
  csv::write_metadata(out, {{"format", "nowcast-sampler/1"}, {"algorithm", "static-hmc"}});
  out << "chain,step_size,max_leapfrog,mean_accept,divergences,warmup_divergences\n";
  for (std::size_t c = 0; c < draws.stats.size(); ++c) {
    const auto& s = draws.stats[c];
    out << c << ',' << fmt(s.step_size) << ',' << s.max_leapfrog << ',' << fmt(s.mean_accept()) << ','
        << s.divergences << ',' << s.warmup_divergences << '\n';
  }
}

csv::Metadata run_metadata(const RunSettings& rs, const ReportingTriangle& tri) {
  return {{"model", variant_name(rs.spec.variant)},
          {"seed", std::to_string(rs.seed)},
          {"origin", format_date(tri.origin())},
          {"now", format_date(tri.now())},
          {"bin_width", std::to_string(tri.bin_width())},
          {"sampler", "static-hmc"}};
}

struct FitResult {
  std::unique_ptr<Model> model;
  PosteriorDraws draws;
  DiagnosticsTable table;
};

FitResult fit(const RunSettings& rs, const ReportingTriangle& tri, int jobs) {
  FitResult r;
  r.model = make_model(rs.spec, tri);
  SamplerConfig cfg = rs.sampler;
  cfg.jobs = jobs;
  r.draws = run_chains(*r.model, cfg);
  r.table = summarize(r.draws, {.include_latent = false});
  return r;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Bayesian nowcasting of delayed count data", "nowcast"};
  app.require_subcommand(1);
  app.set_version_flag("--version", NOWCAST_VERSION);
  std::vector<std::string> args(argv, argv + argc);
  if (!args.empty()) args[0] = "nowcast";

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Build a reporting triangle from release snapshots");
  std::string in_manifest, in_out, in_now, in_origin;
  int in_max_delay = 10, in_bin_width = 7;
  ingest->add_option("--manifest", in_manifest, "Snapshot manifest (release_date,path)")->required();
  ingest->add_option("--out", in_out, "Output directory")->required();
  ingest->add_option("--max-delay", in_max_delay, "Maximum delay D in bins")->capture_default_str();
  ingest->add_option("--bin-width", in_bin_width, "Days per bin")->capture_default_str();
  ingest->add_option("--now", in_now, "Nowcast date (default: latest release)");
  ingest->add_option("--origin", in_origin, "Start of bin 0 (default: earliest event date)");

  // fit
  auto* fitc = app.add_subcommand("fit", "Sample a model's posterior for one triangle");
  Common fit_common;
  SamplerFlags fit_sampler;
  ModelFlags fit_model;
  std::string fit_triangle, fit_out;
  bool fit_strict = false, fit_latent = false;
  fitc->add_option("--triangle", fit_triangle, "Triangle file")->required();
  fitc->add_option("--out", fit_out, "Output directory")->required();
  add_model_flags(fitc, fit_model);
  add_sampler_flags(fitc, fit_sampler);
  add_common(fitc, fit_common);
  fitc->add_flag("--strict", fit_strict, "Exit 3 when any R-hat >= 1.01");
  fitc->add_flag("--latent", fit_latent, "Also write latent-field draws");

  // nowcast
  auto* nc = app.add_subcommand("nowcast", "Fit, complete the triangle and summarise totals");
  Common nc_common;
  SamplerFlags nc_sampler;
  ModelFlags nc_model;
  std::string nc_triangle, nc_out, nc_mode = "completion", nc_daily_mode = "per-draw";
  bool nc_strict = false, nc_daily = false, nc_draws = false;
  int nc_thin = 1;
  nc->add_option("--triangle", nc_triangle, "Triangle file")->required();
  nc->add_option("--out", nc_out, "Output directory")->required();
  add_model_flags(nc, nc_model);
  add_sampler_flags(nc, nc_sampler);
  add_common(nc, nc_common);
  nc->add_option("--mode", nc_mode, "Predictive mode")
      ->check(CLI::IsMember({"completion", "replication"}))
      ->capture_default_str();
  nc->add_option("--thin", nc_thin, "Use every k-th posterior draw")->capture_default_str();
  nc->add_flag("--daily", nc_daily, "Also write the daily spline interpolation");
  nc->add_option("--daily-mode", nc_daily_mode, "Spline each draw, or the weekly summary")
      ->check(CLI::IsMember({"per-draw", "summary"}))
      ->capture_default_str();
  nc->add_flag("--write-draws", nc_draws, "Also write posterior draws");
  nc->add_flag("--strict", nc_strict, "Exit 3 when any R-hat >= 1.01");

  // backtest
  auto* bt = app.add_subcommand("backtest", "Score models over a forward-chained plan");
  Common bt_common;
  SamplerFlags bt_sampler;
  std::string bt_plan, bt_out;
  bool bt_strict = false;
  bt->add_option("--plan", bt_plan, "Plan file")->required();
  bt->add_option("--out", bt_out, "Output directory")->required();
  add_sampler_flags(bt, bt_sampler);
  add_common(bt, bt_common);
  bt->add_flag("--strict", bt_strict, "Exit 3 when any fit has R-hat >= 1.01");

  // simulate
  auto* sim = app.add_subcommand("simulate", "Write synthetic release snapshots with known truth");
  Common sim_common;
  std::string sim_config, sim_out;
  sim->add_option("--config", sim_config, "Synthetic config ([synth] section)")->check(CLI::ExistingFile);
  sim->add_option("--out", sim_out, "Output directory")->required();
  sim->add_option("--seed", sim_common.seed, "Seed (overrides the config)")->envname("NOWCAST_SEED")->default_str("1");

  // diagnose
  auto* dg = app.add_subcommand("diagnose", "Recompute R-hat and ESS from a draws file");
  std::string dg_draws, dg_out;
  bool dg_strict = false, dg_latent = false;
  dg->add_option("--draws", dg_draws, "Draws file (chain,iter,param,value)")->required();
  dg->add_option("--out", dg_out, "Output directory (default: print to stdout)");
  dg->add_flag("--latent", dg_latent, "Include latent parameters in the table");
  dg->add_flag("--strict", dg_strict, "Exit 3 when any R-hat >= 1.01");

  for (auto* sub : app.get_subcommands({})) sub->fallthrough(false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    for (char& c : msg) {
      if (c == '\n') c = ' ';
    }
    err << "error[usage]: " << msg << '\n';
    err << "run 'nowcast --help' for usage\n";
    return kUsage;
  }

  try {
    Manifest mf;
    mf.argv = args;

    if (*ingest) {
      mf.command = "ingest";
      const auto snapshots = load_manifest(in_manifest);
      if (snapshots.empty()) throw DomainError("manifest lists no releases");
      TriangleOptions opts;
      opts.max_delay = in_max_delay;
      opts.bin_width = in_bin_width;
      opts.now = in_now.empty() ? snapshots.back().release_date : parse_date(in_now);
      if (!in_origin.empty()) opts.origin = parse_date(in_origin);
      const auto tri = build_triangle(snapshots, opts);
      const fs::path dir = in_out;
      ensure_dir(dir);
      write_file(dir / "triangle.csv", [&](std::ostream& o) { write_triangle(o, tri); });
      if (tri.negatives_clamped() > 0) {
        err << "warning[data]: " << tri.negatives_clamped() << " negative increments clipped to 0\n";
      }
      mf.inputs = {in_manifest};
      mf.outputs = {"triangle.csv"};
      mf.settings = {{"max_delay", in_max_delay},
                     {"bin_width", in_bin_width},
                     {"now", format_date(tri.now())},
                     {"origin", format_date(tri.origin())}};
      write_manifest(dir, mf);
      return kOk;
    }

    if (*fitc) {
      mf.command = "fit";
      const auto rs = resolve_run(fit_model, fit_sampler, fit_common);
      const int jobs = resolve_jobs(fit_common);
      const auto tri = load_triangle(fit_triangle);
      const fs::path dir = fit_out;
      ensure_dir(dir);
      auto r = fit(rs, tri, jobs);
      warn_sampler(r.draws, err);
      const auto meta = run_metadata(rs, tri);
      write_file(dir / "draws.csv", [&](std::ostream& o) { write_draws(o, r.draws, meta, fit_latent); });
      write_file(dir / "diagnostics.csv", [&](std::ostream& o) { write_diagnostics(o, r.table); });
      write_file(dir / "sampler.csv", [&](std::ostream& o) { write_sampler_stats(o, r.draws); });
      write_file(dir / "model.cfg", [&](std::ostream& o) { write_model_config(o, rs.spec); });
      mf.config = fit_model.config;
      mf.seed = rs.seed;
      mf.inputs = {fit_triangle};
      mf.outputs = {"draws.csv", "diagnostics.csv", "sampler.csv", "model.cfg"};
      mf.settings = {{"model", model_json(rs.spec)}, {"sampler", sampler_json(rs.sampler)}};
      write_manifest(dir, mf);
      check_gate(r.table, fit_strict, err);
      return kOk;
    }

    if (*nc) {
      mf.command = "nowcast";
      const auto rs = resolve_run(nc_model, nc_sampler, nc_common);
      const int jobs = resolve_jobs(nc_common);
      if (nc_thin < 1) throw ConfigError("--thin must be >= 1");
      const auto tri = load_triangle(nc_triangle);
      const fs::path dir = nc_out;
      ensure_dir(dir);
      auto r = fit(rs, tri, jobs);
      warn_sampler(r.draws, err);
      PredictiveOptions popts;
      popts.seed = rs.seed;
      popts.thin = nc_thin;
      popts.mode = nc_mode == "replication" ? PredictiveMode::Replication : PredictiveMode::Completion;
      const auto pred = predictive_complete(r.draws, *r.model, tri, popts);
      const auto totals = draw_totals(pred);
      const auto summary = summarize_totals(totals, marginal_totals(tri).values);
      auto meta = run_metadata(rs, tri);
      meta.emplace_back("mode", nc_mode);
      write_file(dir / "nowcast.csv", [&](std::ostream& o) { write_nowcast(o, summary, meta); });
      write_file(dir / "diagnostics.csv", [&](std::ostream& o) { write_diagnostics(o, r.table); });
      write_file(dir / "sampler.csv", [&](std::ostream& o) { write_sampler_stats(o, r.draws); });
      mf.outputs = {"nowcast.csv", "diagnostics.csv", "sampler.csv"};
      if (nc_daily) {
        DailyOptions dopts;
        dopts.bin_width = tri.bin_width();
        dopts.per_draw = nc_daily_mode == "per-draw";
        const auto daily = dopts.per_draw ? daily_from_draws(totals, dopts) : daily_from_summary(summary, dopts);
        auto dmeta = meta;
        dmeta.emplace_back("daily_mode", nc_daily_mode);
        write_file(dir / "daily.csv", [&](std::ostream& o) { write_daily(o, daily, tri.origin(), dmeta); });
        if (daily.clipped > 0) err << "warning[daily]: " << daily.clipped << " negative spline values clipped to 0\n";
        mf.outputs.push_back("daily.csv");
      }
      if (nc_draws) {
        write_file(dir / "draws.csv", [&](std::ostream& o) { write_draws(o, r.draws, meta); });
        mf.outputs.push_back("draws.csv");
      }
      mf.config = nc_model.config;
      mf.seed = rs.seed;
      mf.inputs = {nc_triangle};
      mf.settings = {{"model", model_json(rs.spec)},
                     {"sampler", sampler_json(rs.sampler)},
                     {"mode", nc_mode},
                     {"thin", nc_thin}};
      write_manifest(dir, mf);
      check_gate(r.table, nc_strict, err);
      return kOk;
    }

    if (*bt) {
      mf.command = "backtest";
      auto file = load_plan(bt_plan);
      apply(file.plan.sampler, bt_sampler);
      if (bt_common.seed) file.plan.seed = *bt_common.seed;
      file.plan.validate();
      if (file.manifest.empty()) throw ConfigError("plan: missing manifest entry");
      const int jobs = resolve_jobs(bt_common);
      const auto snapshots = load_manifest(file.manifest);
      const auto card = run_backtest(file.plan, snapshots, jobs);
      const fs::path dir = bt_out;
      ensure_dir(dir);
      write_file(dir / "scorecard.csv", [&](std::ostream& o) { write_scorecard(o, card); });
      write_file(dir / "scorecard_long.csv", [&](std::ostream& o) { write_scorecard_long(o, card); });
      write_file(dir / "plan.cfg", [&](std::ostream& o) { write_plan(o, file); });
      mf.config = bt_plan;
      mf.seed = file.plan.seed;
      mf.inputs = {bt_plan, file.manifest.string()};
      mf.outputs = {"scorecard.csv", "scorecard_long.csv", "plan.cfg"};
      mf.settings = {{"sampler", sampler_json(file.plan.sampler)}};
      write_manifest(dir, mf);
      int failed = 0;
      std::string unconverged;
      for (const auto& row : card.rows) {
        if (!row.ok) {
          ++failed;
          err << "warning[backtest]: " << row.model << ' ' << format_date(row.date) << " failed: " << row.status
              << '\n';
        } else if (!(row.max_rhat < 1.01)) {
          unconverged += (unconverged.empty() ? "" : " ") + row.model + '@' + format_date(row.date);
        }
      }
      if (!unconverged.empty()) {
        const std::string msg = "R-hat >= 1.01 in: " + unconverged;
        if (bt_strict) throw GateFailure(msg);
        err << "warning[convergence]: " << msg << '\n';
      }
      return kOk;
    }

    if (*sim) {
      mf.command = "simulate";
      SynthConfig cfg;
      if (!sim_config.empty()) {
        std::ifstream in(sim_config);
        if (!in) throw IoError("cannot open '" + sim_config + "'");
        cfg = read_synth_config(in);
      }
      if (sim_common.seed) cfg.seed = *sim_common.seed;
      const auto result = simulate(cfg);
      const fs::path dir = sim_out;
      ensure_dir(dir / "releases");
      std::ostringstream manifest;
      manifest << "release_date,path\n";
      for (const auto& s : result.snapshots) {
        const std::string name = "releases/" + format_date(s.release_date) + ".csv";
        write_file(dir / name, [&](std::ostream& o) { write_release(o, s); });
        manifest << format_date(s.release_date) << ',' << name << '\n';
      }
      write_file(dir / "releases.csv", [&](std::ostream& o) { o << manifest.str(); });
      write_file(dir / "truth_triangle.csv", [&](std::ostream& o) { write_triangle(o, result.truth); });
      write_file(dir / "truth_totals.csv", [&](std::ostream& o) {
        csv::write_metadata(o, {{"format", "nowcast-truth/1"}, {"seed", std::to_string(cfg.seed)}});
        o << "t,bin_start,total,expected\n";
        for (std::size_t t = 0; t < result.totals.size(); ++t) {
          o << t << ',' << format_date(result.truth.bin_start(static_cast<int>(t))) << ',' << result.totals[t] << ','
            << fmt(result.expected[t]) << '\n';
        }
      });
      write_file(dir / "synth.cfg", [&](std::ostream& o) { write_synth_config(o, cfg); });
      mf.config = sim_config;
      mf.seed = cfg.seed;
      if (!sim_config.empty()) mf.inputs = {sim_config};
      mf.outputs = {"releases.csv", "releases/", "truth_triangle.csv", "truth_totals.csv", "synth.cfg"};
      write_manifest(dir, mf);
      return kOk;
    }

    if (*dg) {
      mf.command = "diagnose";
      std::ifstream in(dg_draws);
      if (!in) throw IoError("cannot open '" + dg_draws + "'");
      const auto draws = read_draws(in, dg_draws);
      const auto table = summarize(draws, {.include_latent = dg_latent});
      if (dg_out.empty()) {
        write_diagnostics(out, table);
      } else {
        const fs::path dir = dg_out;
        ensure_dir(dir);
        write_file(dir / "diagnostics.csv", [&](std::ostream& o) { write_diagnostics(o, table); });
        mf.inputs = {dg_draws};
        mf.outputs = {"diagnostics.csv"};
        write_manifest(dir, mf);
      }
      check_gate(table, dg_strict, err);
      return kOk;
    }
  } catch (const GateFailure& e) {
    err << "error[" << e.category() << "]: " << e.what() << '\n';
    return kConvergence;
  } catch (const ConfigError& e) {
    err << "error[" << e.category() << "]: " << e.what() << '\n';
    return kUsage;
  } catch (const Error& e) {
    err << "error[" << e.category() << "]: " << e.what() << '\n';
    return kDataError;
  } catch (const std::exception& e) {
    err << "error[internal]: " << e.what() << '\n';
    return kDataError;
  }
  return kUsage;
}

}  // namespace nowcast::cli
