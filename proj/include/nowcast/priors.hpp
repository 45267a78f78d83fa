#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace nowcast {

enum class Variant { SE_1D, SE_SE_1D, SE_MAT12_1D, SE_MAT32_1D, SE_SE_SPLIT_1D, ADDITIVE_2D, NOBBS };

inline constexpr Variant kAllVariants[] = {Variant::SE_1D,          Variant::SE_SE_1D,
                                           Variant::SE_MAT12_1D,    Variant::SE_MAT32_1D,
                                           Variant::SE_SE_SPLIT_1D, Variant::ADDITIVE_2D,
                                           Variant::NOBBS};

std::string variant_name(Variant v);
Variant parse_variant(std::string_view name);

// A prior argument: a number, optionally multiplying the triangle's number
// of time bins (T) or maximum delay (D), e.g. "30", "T", "0.5*D".
struct PriorArg {
  enum class Dim { None, T, D };
  double value = 0.0;
  Dim dim = Dim::None;

  double resolve(int num_bins, int max_delay) const;
  std::string str() const;
};

enum class PriorKind { Gamma, Normal, Dirichlet, Fixed };

// gamma(shape, rate) | normal(mean, sd) | dirichlet(concentration) | fixed(value).
// A normal prior on a positive parameter is truncated at zero.
struct Prior {
  PriorKind kind = PriorKind::Normal;
  PriorArg a;
  PriorArg b;
};

Prior parse_prior(std::string_view text);
std::string to_string(const Prior& prior);

// A prior with T and D substituted.
struct BoundPrior {
  PriorKind kind = PriorKind::Normal;
  double a = 0.0;
  double b = 1.0;
};

BoundPrior bind(const Prior& prior, int num_bins, int max_delay);

// Log density on the constrained scale; `positive` selects the zero-truncated
// form of the normal. Writes d/dx into `dx` when non-null.
double log_prior_density(const BoundPrior& prior, double x, bool positive, double* dx = nullptr);

class PriorSet {
 public:
  using Entry = std::pair<std::string, Prior>;

  PriorSet() = default;
  explicit PriorSet(std::vector<Entry> entries) : entries_(std::move(entries)) {}

  bool contains(std::string_view name) const;
  const Prior& at(std::string_view name) const;
  // Replaces an existing entry; throws ConfigError for unknown names.
  void set(std::string_view name, const Prior& prior);
  const std::vector<Entry>& entries() const noexcept { return entries_; }

 private:
  std::vector<Entry> entries_;
};

PriorSet default_priors(Variant v);

enum class LatentLayout { Auto, Joint, Factored };

std::string to_string(LatentLayout layout);
LatentLayout parse_latent_layout(std::string_view text);

struct ModelSpec {
  Variant variant = Variant::ADDITIVE_2D;
  PriorSet priors;
  // Auto: factored latent fields when every lengthscale is fixed, otherwise
  // one joint Cholesky over the summed Gram.
  LatentLayout latent = LatentLayout::Auto;
  double jitter = 1e-6;
};

ModelSpec default_model_spec(Variant v);

// Key-value configuration with [model] and [priors] sections. Entries not
// present in the file keep the variant's defaults.
ModelSpec read_model_config(std::istream& in);
ModelSpec load_model_config(const std::filesystem::path& path);
void write_model_config(std::ostream& out, const ModelSpec& spec);

// "name=prior" override, as used by sensitivity sweeps and --prior flags.
struct PriorOverride {
  std::string name;
  Prior prior;
};

PriorOverride parse_prior_override(std::string_view text);

}  // namespace nowcast
