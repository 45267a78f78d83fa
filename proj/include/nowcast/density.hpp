#pragma once

#include <cstddef>
#include <span>

namespace nowcast {

// A differentiable log density over an unconstrained real vector. Evaluation
// must be safe to call concurrently from several threads.
class LogDensity {
 public:
  virtual ~LogDensity() = default;
  virtual std::size_t dim() const = 0;
  // Returns log p(u) and writes its gradient into `grad` (size dim()).
  // May return a non-finite value or throw nowcast::Error; the sampler
  // treats both as a rejected proposal.
  virtual double log_density_grad(std::span<const double> u, std::span<double> grad) const = 0;
};

}  // namespace nowcast
