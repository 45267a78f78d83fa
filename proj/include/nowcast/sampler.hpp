#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nowcast/density.hpp"
#include "nowcast/params.hpp"
#include "nowcast/rng.hpp"

namespace nowcast {

class Model;

struct SamplerConfig {
  int chains = 4;
  int iterations = 1000;  // per chain, warm-up included
  int warmup = 400;
  double target_accept = 0.8;
  int max_leapfrog = 1024;
  std::uint64_t seed = 1;
  int jobs = 0;  // worker threads; 0 = hardware concurrency
  // Steps per transition are uniform on [1, L_max] with
  // L_max = ceil(trajectory_time / eps).
  double trajectory_time = 1.5;
  double divergence_threshold = 1000.0;
  double init_radius = 0.5;

  void validate() const;
};

// Sets one field by its config-file name (chains, iterations, warmup,
// target_accept, trajectory_time, max_leapfrog, divergence_threshold,
// init_radius).
void set_sampler_option(SamplerConfig& cfg, std::string_view key, std::string_view value);

struct ChainStats {
  double step_size = 0.0;
  std::vector<double> inv_metric;
  int max_leapfrog = 1;
  int divergences = 0;         // post-warm-up
  int warmup_divergences = 0;
  std::vector<double> accept_stat;  // post-warm-up, per iteration
  std::vector<int> leapfrog_steps;
  std::vector<std::uint8_t> divergent;

  double mean_accept() const;
};

// Post-warm-up draws, stored on the unconstrained scale.
class PosteriorDraws {
 public:
  PosteriorDraws() = default;
  PosteriorDraws(ParamLayout layout, int chains, int draws_per_chain);

  const ParamLayout& layout() const noexcept { return layout_; }
  int num_chains() const noexcept { return chains_; }
  int draws_per_chain() const noexcept { return draws_; }
  std::size_t total_draws() const noexcept { return std::size_t(chains_) * std::size_t(draws_); }

  std::span<const double> unconstrained(int chain, int iter) const;
  std::span<double> unconstrained(int chain, int iter);
  std::vector<double> constrained(int chain, int iter) const;

  // One constrained scalar (index into layout().constrained_names()) as
  // per-chain series.
  std::vector<std::vector<double>> series(std::size_t param) const;

  std::vector<ChainStats> stats;
  std::vector<std::string> warnings;

  std::size_t total_divergences() const;

 private:
  ParamLayout layout_;
  int chains_ = 0;
  int draws_ = 0;
  std::vector<double> values_;  // [chain][iter][dim]
};

// Runs `cfg.chains` independent HMC chains. Results depend only on the
// target, the layout and cfg (not on cfg.jobs).
PosteriorDraws run_chains(const LogDensity& target, const ParamLayout& layout, const SamplerConfig& cfg);
PosteriorDraws run_chains(const Model& model, const SamplerConfig& cfg);

// Building blocks, exposed for tests.
struct PhasePoint {
  std::vector<double> q;
  std::vector<double> p;
  std::vector<double> grad;
  double log_density = 0.0;
};

// Evaluates the target at pt.q, filling grad and log_density. Errors from the
// target become -inf.
void evaluate(const LogDensity& target, PhasePoint& pt);

double hamiltonian(const PhasePoint& pt, std::span<const double> inv_metric);

// `steps` leapfrog steps of size eps; stops early if the density becomes
// non-finite. Returns false in that case.
bool leapfrog(const LogDensity& target, PhasePoint& pt, std::span<const double> inv_metric, double eps, int steps);

// Warm-up adaptation windows for the mass matrix as [begin, end) iteration
// ranges.
std::vector<std::pair<int, int>> metric_windows(int warmup);

}  // namespace nowcast
