#include "nowcast/priors.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <ostream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "nowcast/csv.hpp"
#include "nowcast/error.hpp"

namespace nowcast {

namespace {

struct VariantName {
  Variant variant;
  const char* name;
};

constexpr VariantName kVariantNames[] = {
    {Variant::SE_1D, "se_1d"},
    {Variant::SE_SE_1D, "se_se_1d"},
    {Variant::SE_MAT12_1D, "se_mat12_1d"},
    {Variant::SE_MAT32_1D, "se_mat32_1d"},
    {Variant::SE_SE_SPLIT_1D, "se_se_split_1d"},
    {Variant::ADDITIVE_2D, "additive_2d"},
    {Variant::NOBBS, "nobbs"},
};

double parse_number(std::string_view text) {
  text = csv::trim(text);
  double v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) {
    throw ConfigError("invalid number '" + std::string(text) + "'");
  }
  return v;
}

PriorArg parse_arg(std::string_view text) {
  text = csv::trim(text);
  PriorArg arg;
  auto dim_of = [](std::string_view s) {
    if (s == "T") return PriorArg::Dim::T;
    if (s == "D") return PriorArg::Dim::D;
    return PriorArg::Dim::None;
  };
  if (const auto star = text.find('*'); star != std::string_view::npos) {
    arg.value = parse_number(text.substr(0, star));
    arg.dim = dim_of(csv::trim(text.substr(star + 1)));
    if (arg.dim == PriorArg::Dim::None) throw ConfigError("expected T or D after '*' in '" + std::string(text) + "'");
    return arg;
  }
  if (auto dim = dim_of(text); dim != PriorArg::Dim::None) {
    arg.value = 1.0;
    arg.dim = dim;
    return arg;
  }
  arg.value = parse_number(text);
  return arg;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

}  // namespace

std::string variant_name(Variant v) {
  for (const auto& [variant, name] : kVariantNames) {
    if (variant == v) return name;
  }
  return "?";
}

Variant parse_variant(std::string_view name) {
  for (const auto& [variant, n] : kVariantNames) {
    if (name == n) return variant;
  }
  throw ConfigError("unknown model variant '" + std::string(name) + "'");
}

double PriorArg::resolve(int num_bins, int max_delay) const {
  switch (dim) {
    case Dim::None: return value;
    case Dim::T: return value * num_bins;
    case Dim::D: return value * max_delay;
  }
  return value;
}

std::string PriorArg::str() const {
  const char* sym = dim == Dim::T ? "T" : dim == Dim::D ? "D" : nullptr;
  if (!sym) return csv::format_double(value);
  if (value == 1.0) return sym;
  return csv::format_double(value) + "*" + sym;
}

Prior parse_prior(std::string_view text) {
  text = csv::trim(text);
  const auto open = text.find('(');
  if (open == std::string_view::npos || text.back() != ')') {
    throw ConfigError("invalid prior '" + std::string(text) + "'");
  }
  const auto name = csv::trim(text.substr(0, open));
  const auto args = csv::split(text.substr(open + 1, text.size() - open - 2));
  Prior p;
  auto expect = [&](std::size_t n) {
    if (args.size() != n) {
      throw ConfigError("prior '" + std::string(text) + "' expects " + std::to_string(n) + " argument(s)");
    }
  };
  if (name == "gamma") {
    expect(2);
    p.kind = PriorKind::Gamma;
  } else if (name == "normal") {
    expect(2);
    p.kind = PriorKind::Normal;
  } else if (name == "dirichlet") {
    expect(1);
    p.kind = PriorKind::Dirichlet;
  } else if (name == "fixed") {
    expect(1);
    p.kind = PriorKind::Fixed;
  } else {
    throw ConfigError("unknown prior family '" + std::string(name) + "'");
  }
  p.a = parse_arg(args[0]);
  if (args.size() > 1) p.b = parse_arg(args[1]);
  if ((p.kind == PriorKind::Gamma || p.kind == PriorKind::Normal) && p.b.dim == PriorArg::Dim::None &&
      !(p.b.value > 0)) {
    throw ConfigError("prior '" + std::string(text) + "' needs a positive second argument");
  }
  if (p.kind == PriorKind::Gamma && p.a.dim == PriorArg::Dim::None && !(p.a.value > 0)) {
    throw ConfigError("gamma shape must be positive");
  }
  if (p.kind == PriorKind::Dirichlet && !(p.a.value > 0)) {
    throw ConfigError("dirichlet concentration must be positive");
  }
  return p;
}

std::string to_string(const Prior& prior) {
  switch (prior.kind) {
    case PriorKind::Gamma: return "gamma(" + prior.a.str() + ", " + prior.b.str() + ")";
    case PriorKind::Normal: return "normal(" + prior.a.str() + ", " + prior.b.str() + ")";
    case PriorKind::Dirichlet: return "dirichlet(" + prior.a.str() + ")";
    case PriorKind::Fixed: return "fixed(" + prior.a.str() + ")";
  }
  return "?";
}

BoundPrior bind(const Prior& prior, int num_bins, int max_delay) {
  return {prior.kind, prior.a.resolve(num_bins, max_delay), prior.b.resolve(num_bins, max_delay)};
}

double log_prior_density(const BoundPrior& prior, double x, bool positive, double* dx) {
  switch (prior.kind) {
    case PriorKind::Gamma: {
      const double shape = prior.a, rate = prior.b;
      if (dx) *dx = (shape - 1.0) / x - rate;
      return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
    }
    case PriorKind::Normal: {
      const double mu = prior.a, sd = prior.b;
      const double u = (x - mu) / sd;
      if (dx) *dx = -u / sd;
      double lp = -0.5 * std::log(2.0 * std::numbers::pi) - std::log(sd) - 0.5 * u * u;
      if (positive) lp -= std::log(normal_cdf(mu / sd));
      return lp;
    }
    case PriorKind::Dirichlet:
    case PriorKind::Fixed:
      break;
  }
  throw ConfigError("prior family has no scalar density");
}

bool PriorSet::contains(std::string_view name) const {
  for (const auto& e : entries_) {
    if (e.first == name) return true;
  }
  return false;
}

const Prior& PriorSet::at(std::string_view name) const {
  for (const auto& e : entries_) {
    if (e.first == name) return e.second;
  }
  throw ConfigError("no prior entry named '" + std::string(name) + "'");
}

void PriorSet::set(std::string_view name, const Prior& prior) {
  for (auto& e : entries_) {
    if (e.first == name) {
      e.second = prior;
      return;
    }
  }
  throw ConfigError("no prior entry named '" + std::string(name) + "'");
}

PriorSet default_priors(Variant v) {
  auto P = [](std::string_view s) { return parse_prior(s); };
  switch (v) {
    case Variant::SE_1D:
      return PriorSet({{"r", P("gamma(500, 2)")},
                       {"alpha", P("normal(1, 1)")},
                       {"rho", P("normal(3, 1)")},
                       {"delta", P("normal(0, 1e-6)")},
                       {"z", P("normal(0, 0.1)")}});
    case Variant::SE_SE_1D:
    case Variant::SE_MAT12_1D:
    case Variant::SE_MAT32_1D: {
      const bool se = v == Variant::SE_SE_1D;
      return PriorSet({{"r", P("gamma(500, 2)")},
                       {"alpha_long", P("normal(15, 2)")},
                       {"alpha_short", P(se ? "normal(5, 2)" : "normal(5, 1)")},
                       {"rho_long", P("normal(T, 0.1)")},
                       {"rho_short", P("normal(1, 0.01)")},
                       {"delta", P("normal(0, 1e-6)")},
                       {"z", P("normal(0, 0.1)")}});
    }
    case Variant::SE_SE_SPLIT_1D:
      return PriorSet({{"r", P("gamma(500, 2)")},
                       {"alpha1_long", P("normal(15, 2)")},
                       {"alpha2_long", P("normal(20, 2)")},
                       {"alpha1_short", P("normal(5, 1)")},
                       {"alpha2_short", P("normal(3, 1)")},
                       {"rho1_long", P("normal(T, 0.1)")},
                       {"rho2_long", P("normal(D, 0.1)")},
                       {"rho1_short", P("normal(1, 0.01)")},
                       {"rho2_short", P("normal(1, 0.01)")},
                       {"delta1", P("normal(0, 1e-6)")},
                       {"delta2", P("normal(0, 1e-6)")},
                       {"z", P("normal(0, 0.1)")}});
    case Variant::ADDITIVE_2D:
      return PriorSet({{"r", P("gamma(200, 2)")},
                       {"alpha1_t", P("normal(T, 1)")},
                       {"alpha2_t", P("normal(D, 1)")},
                       {"alpha1_d", P("normal(0, 1)")},
                       {"alpha2_d", P("normal(0, 1)")},
                       {"rho1_t", P("fixed(T)")},
                       {"rho2_t", P("fixed(1)")},
                       {"rho1_d", P("fixed(D)")},
                       {"rho2_d", P("fixed(1)")},
                       {"delta1", P("normal(0, 1e-7)")},
                       {"delta2", P("normal(0, 1e-7)")},
                       {"z", P("normal(0, 0.1)")}});
    case Variant::NOBBS:
      return PriorSet({{"r", P("gamma(500, 2)")},
                       {"tau", P("gamma(0.01, 0.01)")},
                       {"a1", Prior{PriorKind::Normal, {0.0}, {std::sqrt(1.0 / 0.001)}}},
                       {"beta", P("dirichlet(0.1)")}});
  }
  throw ConfigError("unknown variant");
}

std::string to_string(LatentLayout layout) {
  switch (layout) {
    case LatentLayout::Auto: return "auto";
    case LatentLayout::Joint: return "joint";
    case LatentLayout::Factored: return "factored";
  }
  return "?";
}

LatentLayout parse_latent_layout(std::string_view text) {
  if (text == "auto") return LatentLayout::Auto;
  if (text == "joint") return LatentLayout::Joint;
  if (text == "factored") return LatentLayout::Factored;
  throw ConfigError("unknown latent layout '" + std::string(text) + "'");
}

ModelSpec default_model_spec(Variant v) {
  ModelSpec spec;
  spec.variant = v;
  spec.priors = default_priors(v);
  return spec;
}

ModelSpec read_model_config(std::istream& in) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  const auto variant = tree.get_optional<std::string>("model.variant");
  if (!variant) throw ConfigError("model config: missing [model] variant");
  ModelSpec spec = default_model_spec(parse_variant(csv::trim(*variant)));
  if (auto latent = tree.get_optional<std::string>("model.latent")) {
    spec.latent = parse_latent_layout(csv::trim(*latent));
  }
  if (auto jitter = tree.get_optional<std::string>("model.jitter")) {
    spec.jitter = parse_number(*jitter);
    if (!(spec.jitter > 0)) throw ConfigError("model config: jitter must be > 0");
  }
  if (auto priors = tree.get_child_optional("priors")) {
    for (const auto& [key, node] : *priors) {
      spec.priors.set(key, parse_prior(node.get_value<std::string>()));
    }
  }
  for (const auto& [key, node] : tree) {
    if (key != "model" && key != "priors") throw ConfigError("model config: unknown section [" + key + "]");
  }
  return spec;
}

ModelSpec load_model_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return read_model_config(in);
}

void write_model_config(std::ostream& out, const ModelSpec& spec) {
  out << "[model]\n";
  out << "variant = " << variant_name(spec.variant) << '\n';
  out << "latent = " << to_string(spec.latent) << '\n';
  out << "jitter = " << csv::format_double(spec.jitter) << '\n';
  out << "\n[priors]\n";
  for (const auto& [name, prior] : spec.priors.entries()) {
    out << name << " = " << to_string(prior) << '\n';
  }
}

PriorOverride parse_prior_override(std::string_view text) {
  const auto eq = text.find('=');
  if (eq == std::string_view::npos) throw ConfigError("override '" + std::string(text) + "' must be name=prior");
  return {std::string(csv::trim(text.substr(0, eq))), parse_prior(text.substr(eq + 1))};
}

}  // namespace nowcast
