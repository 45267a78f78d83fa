#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nowcast/density.hpp"
#include "nowcast/params.hpp"
#include "nowcast/priors.hpp"
#include "nowcast/triangle.hpp"

namespace nowcast {

// Posterior of one model variant bound to a reporting triangle. The
// unconstrained vector starts with the sampled scalar hyperparameters (in
// prior-table order), followed by the latent blocks.
class Model : public LogDensity {
 public:
  ~Model() override = default;

  Variant variant() const noexcept { return spec_.variant; }
  const ModelSpec& spec() const noexcept { return spec_; }
  const ParamLayout& layout() const noexcept { return layout_; }
  LatentLayout latent_layout() const noexcept { return latent_; }
  int num_bins() const noexcept { return num_bins_; }
  int num_delays() const noexcept { return num_delays_; }
  std::size_t num_cells() const noexcept { return counts_.size(); }
  std::size_t dim() const override { return layout_.unconstrained_dim(); }

  // log(lambda) for every cell, time-major.
  virtual void log_rates(std::span<const double> u, std::span<double> eta) const = 0;
  // lambda as a num_bins x num_delays matrix, floored like the likelihood.
  Eigen::MatrixXd rate_surface(std::span<const double> u) const;
  double dispersion(std::span<const double> u) const;

  double log_likelihood(std::span<const double> u) const;
  // Priors plus change-of-variable terms: log_density - log_likelihood.
  double log_prior(std::span<const double> u) const;
  double log_density_grad(std::span<const double> u, std::span<double> grad) const override;

  // Value of a scalar hyperparameter, sampled or fixed.
  double hyper(std::span<const double> u, std::string_view name) const;

 protected:
  struct Hyper {
    std::string name;
    BoundPrior prior;
    bool fixed = false;
    double value = 0.0;       // when fixed
    std::size_t offset = 0;   // into u when sampled
    double loc = 0.0;
    double scale = 1.0;
  };

  Model(ModelSpec spec, const ReportingTriangle& tri, std::initializer_list<std::string_view> special);

  // Appends a Log block for every sampled hyperparameter.
  void add_hyper_blocks();
  int hyper_index(std::string_view name) const;
  std::vector<double> hyper_values(std::span<const double> u) const;
  BoundPrior bound_prior(std::string_view name) const;

  // Log likelihood over observed cells; adds d/d eta into g_eta and
  // d/d r into *g_r when those are given.
  double likelihood(std::span<const double> eta, double r, std::span<double> g_eta, double* g_r) const;

  // Variant-specific part: rates, likelihood and latent priors. Writes the
  // gradient for latent blocks into `grad` and d/dx of each hyper into
  // `g_hyper`, both only when `want_grad`.
  virtual double evaluate(std::span<const double> u, std::span<const double> h, bool with_likelihood,
                          bool want_grad, std::span<double> grad,
                          std::span<double> g_hyper) const = 0;

  std::string describe_hypers(std::span<const double> h) const;

  ModelSpec spec_;
  ParamLayout layout_;
  LatentLayout latent_ = LatentLayout::Joint;
  int num_bins_ = 0;
  int num_delays_ = 0;
  int r_index_ = -1;
  std::vector<Hyper> hypers_;
  std::vector<std::int64_t> counts_;
  std::vector<std::size_t> observed_;
  std::vector<double> log_factorial_;

 private:
  double total(std::span<const double> u, bool with_likelihood, std::span<double> grad) const;
};

std::unique_ptr<Model> make_model(const ModelSpec& spec, const ReportingTriangle& tri);

}  // namespace nowcast
