#include "nowcast/simulate.hpp"

#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "nowcast/csv.hpp"
#include "nowcast/error.hpp"
#include "nowcast/nb.hpp"
#include "nowcast/rng.hpp"

namespace nowcast {

void SynthConfig::validate() const {
  if (num_bins < 1) throw ConfigError("synth: num_bins must be >= 1");
  if (max_delay < 1) throw ConfigError("synth: max_delay must be >= 1");
  if (bin_width < 1) throw ConfigError("synth: bin_width must be >= 1");
  if (!(r_true > 0)) throw ConfigError("synth: r_true must be > 0");
  if (!delay_weights.empty()) {
    if (delay_weights.size() != std::size_t(max_delay) + 1) {
      throw ConfigError("synth: need max_delay + 1 delay weights");
    }
    double s = 0.0;
    for (double w : delay_weights) {
      if (!(w > 0)) throw ConfigError("synth: delay weights must be positive");
      s += w;
    }
    if (std::abs(s - 1.0) > 1e-9) throw ConfigError("synth: delay weights must sum to 1");
  }
}

std::vector<double> SynthConfig::base_weights() const {
  if (!delay_weights.empty()) return delay_weights;
  std::vector<double> w(std::size_t(max_delay) + 1);
  double v = 1.0;
  for (auto& x : w) {
    x = v;
    v *= 0.55;
  }
  const double s = std::accumulate(w.begin(), w.end(), 0.0);
  for (auto& x : w) x /= s;
  return w;
}

std::vector<double> SynthConfig::delay_probs(int t) const {
  auto w = base_weights();
  double s = 0.0;
  for (std::size_t d = 0; d < w.size(); ++d) {
    w[d] *= std::exp(drift * t * static_cast<double>(d) / max_delay);
    s += w[d];
  }
  for (auto& x : w) x /= s;
  return w;
}

double SynthConfig::expected_total(int t) const {
  if (curve == CurveShape::LogQuadratic) {
    const double x = num_bins > 1 ? static_cast<double>(t) / (num_bins - 1) : 0.0;
    return std::exp(level + slope * x + curvature * x * x);
  }
  const int before = std::min(t, changepoint);
  const int after = std::max(0, t - changepoint);
  return std::exp(level + slope_before * before + slope_after * after);
}

SynthResult simulate(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng = make_stream(cfg.seed, kSimulateStream, 0);
  const int T = cfg.num_bins;
  const int width = cfg.max_delay + 1;
  SynthResult out;
  const Date now = add_days(cfg.origin, static_cast<long>(T + cfg.max_delay) * cfg.bin_width);
  out.truth = ReportingTriangle(T, cfg.max_delay, cfg.bin_width, cfg.origin, now, MaskShape::Full);
  std::vector<std::int64_t> counts(std::size_t(T) * std::size_t(width), 0);
  for (int t = 0; t < T; ++t) {
    const double mu = cfg.expected_total(t);
    const std::int64_t n = sample_nb(rng, mu, cfg.r_true);
    out.expected.push_back(mu);
    out.totals.push_back(n);
    // Multinomial by sequential binomials.
    const auto p = cfg.delay_probs(t);
    std::int64_t left = n;
    double mass = 1.0;
    for (int d = 0; d < width; ++d) {
      std::int64_t k = left;
      if (d + 1 < width && left > 0) {
        const double q = std::clamp(p[std::size_t(d)] / mass, 0.0, 1.0);
        std::binomial_distribution<std::int64_t> binom(left, q);
        k = binom(rng);
      }
      counts[std::size_t(t) * std::size_t(width) + std::size_t(d)] = k;
      out.truth.set_count(t, d, k);
      left -= k;
      mass -= p[std::size_t(d)];
    }
  }
  out.snapshots =
      snapshots_from_counts(counts, T, cfg.max_delay, cfg.bin_width, cfg.origin, T + cfg.max_delay);
  return out;
}

SynthConfig read_synth_config(std::istream& in) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("synth config: ") + e.what());
  }
  SynthConfig cfg;
  const auto* sec = tree.get_child_optional("synth").get_ptr();
  if (!sec) throw ConfigError("synth config: missing [synth] section");
  for (const auto& [key, node] : *sec) {
    const std::string v(csv::trim(node.get_value<std::string>()));
    auto num = [&] {
      try {
        std::size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing");
        return x;
      } catch (const std::exception&) {
        throw ConfigError("synth config: bad number for '" + key + "': " + v);
      }
    };
    auto integer = [&] {
      const double x = num();
      if (x != std::floor(x)) throw ConfigError("synth config: '" + key + "' must be an integer");
      return static_cast<long long>(x);
    };
    if (key == "num_bins") cfg.num_bins = int(integer());
    else if (key == "max_delay") cfg.max_delay = int(integer());
    else if (key == "bin_width") cfg.bin_width = int(integer());
    else if (key == "origin") cfg.origin = parse_date(v);
    else if (key == "curve") {
      if (v == "log_quadratic") cfg.curve = CurveShape::LogQuadratic;
      else if (v == "changepoint") cfg.curve = CurveShape::Changepoint;
      else throw ConfigError("synth config: unknown curve '" + v + "'");
    } else if (key == "level") cfg.level = num();
    else if (key == "slope") cfg.slope = num();
    else if (key == "curvature") cfg.curvature = num();
    else if (key == "changepoint") cfg.changepoint = int(integer());
    else if (key == "slope_before") cfg.slope_before = num();
    else if (key == "slope_after") cfg.slope_after = num();
    else if (key == "delay_weights") {
      cfg.delay_weights.clear();
      for (auto part : csv::split(v)) {
        try {
          cfg.delay_weights.push_back(std::stod(std::string(csv::trim(part))));
        } catch (const std::exception&) {
          throw ConfigError("synth config: bad delay weight '" + std::string(part) + "'");
        }
      }
    } else if (key == "drift") cfg.drift = num();
    else if (key == "r_true") cfg.r_true = num();
    else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(integer());
    else throw ConfigError("synth config: unknown key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

void write_synth_config(std::ostream& out, const SynthConfig& cfg) {
  using csv::format_double;
  out << "[synth]\n";
  out << "num_bins = " << cfg.num_bins << '\n';
  out << "max_delay = " << cfg.max_delay << '\n';
  out << "bin_width = " << cfg.bin_width << '\n';
  out << "origin = " << format_date(cfg.origin) << '\n';
  out << "curve = " << (cfg.curve == CurveShape::LogQuadratic ? "log_quadratic" : "changepoint") << '\n';
  out << "level = " << format_double(cfg.level) << '\n';
  out << "slope = " << format_double(cfg.slope) << '\n';
  out << "curvature = " << format_double(cfg.curvature) << '\n';
  out << "changepoint = " << cfg.changepoint << '\n';
  out << "slope_before = " << format_double(cfg.slope_before) << '\n';
  out << "slope_after = " << format_double(cfg.slope_after) << '\n';
  if (!cfg.delay_weights.empty()) {
    out << "delay_weights = ";
    for (std::size_t i = 0; i < cfg.delay_weights.size(); ++i) {
      out << (i ? ", " : "") << format_double(cfg.delay_weights[i]);
    }
    out << '\n';
  }
  out << "drift = " << format_double(cfg.drift) << '\n';
  out << "r_true = " << format_double(cfg.r_true) << '\n';
  out << "seed = " << cfg.seed << '\n';
}

}  // namespace nowcast
