#pragma once

#include <cstdint>

#include "nowcast/rng.hpp"

namespace nowcast {

// Negative binomial in mean/dispersion form: variance = mean + mean^2 / r.
inline constexpr double kRateFloor = 1e-10;

double nb_log_pmf(std::int64_t n, double mean, double r);

struct NbTerm {
  double log_pmf = 0.0;
  double d_log_mean = 0.0;  // d/d log(mean); zero when the mean is floored
  double d_r = 0.0;
};

// Per-dispersion constants shared by every cell of one evaluation.
struct NbDispersion {
  explicit NbDispersion(double r);
  double r;
  double lgamma_r;
  double digamma_r;
};

// Log pmf and its derivatives with the rate given on the log scale.
NbTerm nb_log_pmf_grad(std::int64_t n, double log_mean, double r);
// `log_factorial` is lgamma(n + 1), which callers evaluating the same counts
// repeatedly can precompute.
NbTerm nb_log_pmf_grad(std::int64_t n, double log_mean, const NbDispersion& disp, double log_factorial);

// Digamma; uses the asymptotic series for large arguments.
double digamma(double x);

// Gamma-Poisson draw. A non-positive mean gives 0.
std::int64_t sample_nb(Rng& rng, double mean, double r);

}  // namespace nowcast
