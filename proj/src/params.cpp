#include "nowcast/params.hpp"

#include <cmath>

#include "nowcast/error.hpp"

namespace nowcast {

namespace {

double inv_logit(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

double logit(double p) { return std::log(p) - std::log1p(-p); }

}  // namespace

std::size_t ParamLayout::add(std::string name, Transform transform, std::size_t size, bool latent,
                             double loc, double scale) {
  if (size == 0) throw DomainError("parameter block '" + name + "' has zero size");
  if (!(scale > 0) || !std::isfinite(scale) || !std::isfinite(loc)) {
    throw DomainError("parameter block '" + name + "' has invalid loc/scale");
  }
  if (transform == Transform::Simplex && size < 2) throw DomainError("simplex needs >= 2 components");
  if (contains(name)) throw DomainError("duplicate parameter '" + name + "'");
  ParamBlock block{std::move(name), transform, size, unconstrained_dim_, constrained_dim_, latent, loc, scale};
  unconstrained_dim_ += block.unconstrained_size();
  constrained_dim_ += block.size;
  blocks_.push_back(std::move(block));
  return blocks_.size() - 1;
}

const ParamBlock& ParamLayout::block(std::string_view name) const {
  for (const auto& b : blocks_) {
    if (b.name == name) return b;
  }
  throw DomainError("no parameter named '" + std::string(name) + "'");
}

bool ParamLayout::contains(std::string_view name) const {
  for (const auto& b : blocks_) {
    if (b.name == name) return true;
  }
  return false;
}

std::vector<std::string> ParamLayout::constrained_names() const {
  std::vector<std::string> names;
  names.reserve(constrained_dim_);
  for (const auto& b : blocks_) {
    if (b.size == 1 && b.transform != Transform::Simplex) {
      names.push_back(b.name);
      continue;
    }
    for (std::size_t i = 0; i < b.size; ++i) names.push_back(b.name + "[" + std::to_string(i) + "]");
  }
  return names;
}

std::vector<bool> ParamLayout::constrained_latent_mask() const {
  std::vector<bool> mask;
  mask.reserve(constrained_dim_);
  for (const auto& b : blocks_) mask.insert(mask.end(), b.size, b.latent);
  return mask;
}

void ParamLayout::constrain(std::span<const double> u, std::span<double> x) const {
  if (u.size() != unconstrained_dim_ || x.size() != constrained_dim_) {
    throw DomainError("constrain: size mismatch");
  }
  for (const auto& b : blocks_) {
    const auto in = u.subspan(b.offset, b.unconstrained_size());
    const auto out = x.subspan(b.constrained_offset, b.size);
    switch (b.transform) {
      case Transform::Log:
        for (std::size_t i = 0; i < b.size; ++i) out[i] = std::exp(b.loc + b.scale * in[i]);
        break;
      case Transform::Identity:
        for (std::size_t i = 0; i < b.size; ++i) out[i] = b.loc + b.scale * in[i];
        break;
      case Transform::Simplex:
        simplex_constrain(in, out);
        break;
    }
  }
}

void ParamLayout::unconstrain(std::span<const double> x, std::span<double> u) const {
  if (u.size() != unconstrained_dim_ || x.size() != constrained_dim_) {
    throw DomainError("unconstrain: size mismatch");
  }
  for (const auto& b : blocks_) {
    const auto in = x.subspan(b.constrained_offset, b.size);
    const auto out = u.subspan(b.offset, b.unconstrained_size());
    switch (b.transform) {
      case Transform::Log:
        for (std::size_t i = 0; i < b.size; ++i) {
          if (!(in[i] > 0)) throw DomainError("parameter '" + b.name + "' must be positive");
          out[i] = (std::log(in[i]) - b.loc) / b.scale;
        }
        break;
      case Transform::Identity:
        for (std::size_t i = 0; i < b.size; ++i) out[i] = (in[i] - b.loc) / b.scale;
        break;
      case Transform::Simplex:
        simplex_unconstrain(in, out);
        break;
    }
  }
}

// Stick-breaking with the offset log(K - k - 1) so that y = 0 maps to the
// uniform simplex.
double simplex_constrain(std::span<const double> y, std::span<double> x) {
  const std::size_t k_total = x.size();
  double stick = 1.0;
  double log_jac = 0.0;
  for (std::size_t k = 0; k + 1 < k_total; ++k) {
    const double adj = y[k] - std::log(static_cast<double>(k_total - k - 1));
    const double zk = inv_logit(adj);
    x[k] = stick * zk;
    log_jac += std::log(stick) + std::log(zk) + std::log1p(-zk);
    stick -= x[k];
  }
  x[k_total - 1] = stick;
  return log_jac;
}

void simplex_unconstrain(std::span<const double> x, std::span<double> y) {
  const std::size_t k_total = x.size();
  double stick = 1.0;
  for (std::size_t k = 0; k + 1 < k_total; ++k) {
    const double zk = x[k] / stick;
    y[k] = logit(zk) + std::log(static_cast<double>(k_total - k - 1));
    stick -= x[k];
  }
}

void simplex_backprop(std::span<const double> y, std::span<const double> x_grad,
                      std::span<double> y_grad) {
  const std::size_t k_total = x_grad.size();
  const std::size_t m = k_total - 1;
  std::vector<double> stick(m + 1), z(m);
  stick[0] = 1.0;
  for (std::size_t k = 0; k < m; ++k) {
    z[k] = inv_logit(y[k] - std::log(static_cast<double>(k_total - k - 1)));
    stick[k + 1] = stick[k] * (1.0 - z[k]);
  }
  // Reverse sweep; stick[m] is the last component.
  double stick_adj = x_grad[m];
  for (std::size_t kk = m; kk-- > 0;) {
    // stick[k+1] = stick[k] - x[k]
    const double x_adj = x_grad[kk] - stick_adj;
    double s_adj = stick_adj;
    // x[k] = stick[k] * z[k]
    s_adj += x_adj * z[kk];
    double z_adj = x_adj * stick[kk];
    // log-Jacobian terms
    s_adj += 1.0 / stick[kk];
    z_adj += 1.0 / z[kk] - 1.0 / (1.0 - z[kk]);
    y_grad[kk] += z_adj * z[kk] * (1.0 - z[kk]);
    stick_adj = s_adj;
  }
}

}  // namespace nowcast
