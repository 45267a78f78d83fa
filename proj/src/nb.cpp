#include "nowcast/nb.hpp"

#include <cmath>
#include <random>

#include <boost/math/special_functions/digamma.hpp>

#include "nowcast/error.hpp"

namespace nowcast {

namespace {

constexpr std::int64_t kSmallCount = 8;

// Extreme sampler proposals (r underflowing to 0, say) must come back as
// non-finite values the sampler rejects, not as exceptions.
using QuietPolicy = boost::math::policies::policy<
    boost::math::policies::domain_error<boost::math::policies::ignore_error>,
    boost::math::policies::pole_error<boost::math::policies::ignore_error>,
    boost::math::policies::overflow_error<boost::math::policies::ignore_error>,
    boost::math::policies::evaluation_error<boost::math::policies::ignore_error>>;

double digamma_sum(std::int64_t n, double r) {
  double s = 0.0;
  for (std::int64_t k = 0; k < n; ++k) s += 1.0 / (r + static_cast<double>(k));
  return s;
}

double log_rising_sum(std::int64_t n, double r) {
  double s = 0.0;
  for (std::int64_t k = 0; k < n; ++k) s += std::log(r + static_cast<double>(k));
  return s;
}

// log Gamma(n + r) - log Gamma(r), exact as a short sum when n is small so
// that huge r (the Poisson limit) does not cancel catastrophically.
double log_rising(std::int64_t n, double r) {
  if (n <= kSmallCount) return log_rising_sum(n, r);
  return std::lgamma(static_cast<double>(n) + r) - std::lgamma(r);
}

double log_pmf_at(std::int64_t n, double lambda, double r) {
  const double nd = static_cast<double>(n);
  double lp = log_rising(n, r) - std::lgamma(nd + 1.0) - r * std::log1p(lambda / r);
  if (n > 0) lp += nd * (std::log(lambda) - std::log(r + lambda));
  return lp;
}

}  // namespace

double digamma(double x) {
  if (!(x >= 8.0)) return boost::math::digamma(x, QuietPolicy());
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  const double series =
      inv2 * (1.0 / 12 -
              inv2 * (1.0 / 120 -
                      inv2 * (1.0 / 252 -
                              inv2 * (1.0 / 240 - inv2 * (1.0 / 132 - inv2 * (691.0 / 32760 - inv2 / 12))))));
  return std::log(x) - 0.5 * inv - series;
}

NbDispersion::NbDispersion(double r_) : r(r_), lgamma_r(std::lgamma(r_)), digamma_r(digamma(r_)) {}

double nb_log_pmf(std::int64_t n, double mean, double r) {
  if (n < 0) throw DomainError("nb_log_pmf: negative count");
  if (!(r > 0)) throw DomainError("nb_log_pmf: dispersion must be > 0");
  return log_pmf_at(n, std::max(mean, kRateFloor), r);
}

NbTerm nb_log_pmf_grad(std::int64_t n, double log_mean, double r) {
  NbTerm out;
  double lambda = std::exp(log_mean);
  const bool floored = !(lambda > kRateFloor);
  if (floored) lambda = kRateFloor;
  const double nd = static_cast<double>(n);
  out.log_pmf = log_pmf_at(n, lambda, r);
  out.d_log_mean = floored ? 0.0 : r * (nd - lambda) / (r + lambda);
  const double dg = n <= kSmallCount ? digamma_sum(n, r) : digamma(nd + r) - digamma(r);
  out.d_r = dg - std::log1p(lambda / r) + (lambda - nd) / (r + lambda);
  return out;
}

NbTerm nb_log_pmf_grad(std::int64_t n, double log_mean, const NbDispersion& disp, double log_factorial) {
  const double r = disp.r;
  NbTerm out;
  double lambda = std::exp(log_mean);
  const bool floored = !(lambda > kRateFloor);
  if (floored) {
    lambda = kRateFloor;
    log_mean = std::log(kRateFloor);
  }
  const double nd = static_cast<double>(n);
  double rising = 0.0;
  double dg = 0.0;
  if (n <= kSmallCount) {
    rising = log_rising_sum(n, r);
    dg = digamma_sum(n, r);
  } else {
    rising = std::lgamma(nd + r) - disp.lgamma_r;
    dg = digamma(nd + r) - disp.digamma_r;
  }
  const double log1p_ratio = std::log1p(lambda / r);
  out.log_pmf = rising - log_factorial - r * log1p_ratio;
  if (n > 0) out.log_pmf += nd * (log_mean - std::log(r + lambda));
  out.d_log_mean = floored ? 0.0 : r * (nd - lambda) / (r + lambda);
  out.d_r = dg - log1p_ratio + (lambda - nd) / (r + lambda);
  return out;
}

std::int64_t sample_nb(Rng& rng, double mean, double r) {
  if (!(mean > 0) || !std::isfinite(mean)) return 0;
  std::gamma_distribution<double> gamma(r, mean / r);
  const double rate = gamma(rng);
  if (!(rate > 0)) return 0;
  std::poisson_distribution<std::int64_t> poisson(rate);
  return poisson(rng);
}

}  // namespace nowcast
