#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace nowcast {

// How a named block maps between the sampler's unconstrained vector and the
// constrained parameter values. `loc` and `scale` recentre the unconstrained
// coordinate so that u = 0 sits at the prior's location and one unit of u is
// about one prior sd; the simplex ignores them.
enum class Transform {
  Log,       // positive: x = exp(loc + scale * u)
  Identity,  // real: x = loc + scale * u
  Simplex,   // K-simplex from K-1 reals by stick-breaking
};

struct ParamBlock {
  std::string name;
  Transform transform = Transform::Identity;
  std::size_t size = 1;            // constrained length
  std::size_t offset = 0;          // into the unconstrained vector
  std::size_t constrained_offset = 0;
  bool latent = false;             // excluded from the convergence gate
  double loc = 0.0;
  double scale = 1.0;

  std::size_t unconstrained_size() const {
    return transform == Transform::Simplex ? size - 1 : size;
  }
};

class ParamLayout {
 public:
  std::size_t add(std::string name, Transform transform, std::size_t size = 1, bool latent = false,
                  double loc = 0.0, double scale = 1.0);

  const std::vector<ParamBlock>& blocks() const noexcept { return blocks_; }
  const ParamBlock& block(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::size_t unconstrained_dim() const noexcept { return unconstrained_dim_; }
  std::size_t constrained_dim() const noexcept { return constrained_dim_; }

  // Expanded scalar names: "r", "beta[0]", "z[12]".
  std::vector<std::string> constrained_names() const;
  std::vector<bool> constrained_latent_mask() const;

  void constrain(std::span<const double> u, std::span<double> x) const;
  void unconstrain(std::span<const double> x, std::span<double> u) const;

 private:
  std::vector<ParamBlock> blocks_;
  std::size_t unconstrained_dim_ = 0;
  std::size_t constrained_dim_ = 0;
};

// Stick-breaking simplex map (K-1 reals to K-simplex). Returns the log
// absolute Jacobian determinant.
double simplex_constrain(std::span<const double> y, std::span<double> x);
void simplex_unconstrain(std::span<const double> x, std::span<double> y);

// Accumulates into `y_grad` the gradient with respect to y of
// f(x(y)) + logJ(y), given df/dx in `x_grad`.
void simplex_backprop(std::span<const double> y, std::span<const double> x_grad,
                      std::span<double> y_grad);

}  // namespace nowcast
