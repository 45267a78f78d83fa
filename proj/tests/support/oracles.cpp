#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>
#include <ceres/ceres.h>

namespace oracle {

using hp = boost::multiprecision::cpp_bin_float_50;

double kernel_hp(nowcast::KernelKind kind, double alpha, double rho, double r) {
  const hp a(alpha), p(rho), d(r);
  const hp a2 = a * a;
  switch (kind) {
    case nowcast::KernelKind::SquaredExponential:
      return static_cast<double>(a2 * exp(-(d * d) / (2 * p * p)));
    case nowcast::KernelKind::Matern12:
      return static_cast<double>(a2 * exp(-d / p));
    case nowcast::KernelKind::Matern32: {
      const hp s = sqrt(hp(3)) * d / p;
      return static_cast<double>(a2 * (1 + s) * exp(-s));
    }
    case nowcast::KernelKind::WhiteNoise:
      return r == 0.0 ? alpha * alpha : 0.0;
  }
  return 0.0;
}

std::vector<std::vector<double>> dense_gram(nowcast::KernelKind kind, double alpha, double rho,
                                            std::span<const double> points) {
  const std::size_t n = points.size();
  std::vector<std::vector<double>> k(n, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double r = std::abs(points[i] - points[j]);
      double v = 0.0;
      if (kind == nowcast::KernelKind::SquaredExponential) v = alpha * alpha * std::exp(-r * r / (2 * rho * rho));
      if (kind == nowcast::KernelKind::Matern12) v = alpha * alpha * std::exp(-r / rho);
      if (kind == nowcast::KernelKind::Matern32) {
        const double s = std::sqrt(3.0) * r / rho;
        v = alpha * alpha * (1 + s) * std::exp(-s);
      }
      k[i][j] = v;
    }
  }
  return k;
}

bool cholesky(std::vector<std::vector<double>>& a) {
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double s = a[i][j];
      for (std::size_t k = 0; k < j; ++k) s -= a[i][k] * a[j][k];
      if (i == j) {
        if (!(s > 0)) return false;
        a[i][i] = std::sqrt(s);
      } else {
        a[i][j] = s / a[j][j];
      }
    }
    for (std::size_t j = i + 1; j < n; ++j) a[i][j] = 0.0;
  }
  return true;
}

std::vector<double> lower_times(const std::vector<std::vector<double>>& l, std::span<const double> z) {
  std::vector<double> out(l.size(), 0.0);
  for (std::size_t i = 0; i < l.size(); ++i) {
    for (std::size_t j = 0; j <= i; ++j) out[i] += l[i][j] * z[j];
  }
  return out;
}

namespace {

Chains halve(const Chains& chains) {
  Chains out;
  const std::size_t n = chains.front().size();
  const std::size_t h = n / 2;
  for (const auto& c : chains) {
    out.emplace_back(c.begin(), c.begin() + static_cast<long>(h));
    out.emplace_back(c.end() - static_cast<long>(h), c.end());
  }
  return out;
}

Chains z_scale(const Chains& chains) {
  std::vector<std::pair<double, std::size_t>> all;
  for (const auto& c : chains) {
    for (double v : c) all.emplace_back(v, all.size());
  }
  std::sort(all.begin(), all.end());
  std::vector<double> rank(all.size());
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    while (j < all.size() && all[j].first == all[i].first) ++j;
    const double avg = 0.5 * static_cast<double>(i + 1 + j);  // ranks i+1..j
    for (std::size_t k = i; k < j; ++k) rank[all[k].second] = avg;
    i = j;
  }
  const boost::math::normal std_normal;
  const double s = static_cast<double>(all.size());
  Chains out = chains;
  std::size_t k = 0;
  for (auto& c : out) {
    for (auto& v : c) v = boost::math::quantile(std_normal, (rank[k++] - 0.375) / (s + 0.25));
  }
  return out;
}

double avg(const std::vector<double>& x) { return std::accumulate(x.begin(), x.end(), 0.0) / double(x.size()); }

double var1(const std::vector<double>& x) {
  const double m = avg(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / double(x.size() - 1);
}

double rhat_plain(const Chains& c) {
  const double n = double(c.front().size());
  std::vector<double> means, vars;
  for (const auto& x : c) {
    means.push_back(avg(x));
    vars.push_back(var1(x));
  }
  const double b = n * var1(means);
  const double w = avg(vars);
  return std::sqrt((b / w + n - 1) / n);
}

// Stan-style ESS: biased autocovariance per chain, combined autocorrelation
// rho_t = 1 - (W - mean acov_t) / var+, Geyer pairing and monotone fix.
double ess_plain(const Chains& c) {
  const std::size_t m = c.size(), n = c.front().size();
  std::vector<std::vector<double>> acov(m, std::vector<double>(n));
  std::vector<double> means(m);
  for (std::size_t j = 0; j < m; ++j) {
    means[j] = avg(c[j]);
    for (std::size_t t = 0; t < n; ++t) {
      double s = 0.0;
      for (std::size_t i = 0; i + t < n; ++i) s += (c[j][i] - means[j]) * (c[j][i + t] - means[j]);
      acov[j][t] = s / double(n);
    }
  }
  auto mean_acov = [&](std::size_t t) {
    double s = 0.0;
    for (std::size_t j = 0; j < m; ++j) s += acov[j][t];
    return s / double(m);
  };
  const double nd = double(n);
  const double w = mean_acov(0) * nd / (nd - 1);
  double var_plus = w * (nd - 1) / nd;
  if (m > 1) var_plus += var1(means);

  std::vector<double> rho(n, 0.0);
  rho[0] = 1.0;
  double even = 1.0, odd = 1.0 - (w - mean_acov(1)) / var_plus;
  rho[1] = odd;
  long t = 1;
  while (t < long(n) - 3 && even + odd > 0) {
    even = 1.0 - (w - mean_acov(std::size_t(t + 1))) / var_plus;
    odd = 1.0 - (w - mean_acov(std::size_t(t + 2))) / var_plus;
    if (even + odd >= 0) {
      rho[std::size_t(t + 1)] = even;
      rho[std::size_t(t + 2)] = odd;
    }
    t += 2;
  }
  const long max_t = t - 2;
  if (even > 0) rho[std::size_t(max_t + 1)] = even;
  for (long k = 1; k <= max_t - 2; k += 2) {
    const double prev = rho[std::size_t(k - 1)] + rho[std::size_t(k)];
    if (rho[std::size_t(k + 1)] + rho[std::size_t(k + 2)] > prev) {
      rho[std::size_t(k + 1)] = prev / 2;
      rho[std::size_t(k + 2)] = prev / 2;
    }
  }
  const double total = double(m * n);
  double tau = -1.0 + rho[std::size_t(max_t + 1)];
  for (long k = 0; k <= max_t; ++k) tau += 2 * rho[std::size_t(k)];
  tau = std::max(tau, 1.0 / std::log10(total));
  return total / tau;
}

double type7(std::vector<double> x, double p) {
  std::sort(x.begin(), x.end());
  const double h = (double(x.size()) - 1) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, x.size() - 1);
  return x[lo] + (h - double(lo)) * (x[hi] - x[lo]);
}

}  // namespace

double rhat(const Chains& chains) { return rhat_plain(z_scale(halve(chains))); }

double ess_bulk(const Chains& chains) { return ess_plain(z_scale(halve(chains))); }

double ess_tail(const Chains& chains) {
  std::vector<double> all;
  for (const auto& c : chains) all.insert(all.end(), c.begin(), c.end());
  double best = 0.0;
  bool first = true;
  for (double p : {0.05, 0.95}) {
    const double q = type7(all, p);
    Chains ind = chains;
    for (auto& c : ind) {
      for (auto& v : c) v = v <= q ? 1.0 : 0.0;
    }
    const double e = ess_plain(halve(ind));
    best = first ? e : std::min(best, e);
    first = false;
  }
  return best;
}

double crps_brute(std::span<const double> x, double y) {
  const double n = double(x.size());
  double a = 0.0, b = 0.0;
  for (double xi : x) a += std::abs(xi - y);
  for (double xi : x) {
    for (double xj : x) b += std::abs(xi - xj);
  }
  return a / n - 0.5 * b / (n * n);
}

double crps_gaussian(double mu, double sigma, double y) {
  const boost::math::normal std_normal;
  const double z = (y - mu) / sigma;
  return sigma * (z * (2 * boost::math::cdf(std_normal, z) - 1) + 2 * boost::math::pdf(std_normal, z) -
                  1 / std::sqrt(M_PI));
}

KsResult ks_test(std::vector<double> x, const std::function<double(double)>& cdf) {
  std::sort(x.begin(), x.end());
  const double n = double(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = cdf(x[i]);
    d = std::max({d, double(i + 1) / n - f, f - double(i) / n});
  }
  // Kolmogorov limiting distribution with the Stephens small-sample factor.
  const double lambda = (std::sqrt(n) + 0.12 + 0.11 / std::sqrt(n)) * d;
  double p = 0.0;
  for (int k = 1; k <= 200; ++k) {
    const double term = 2 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
    p += term;
    if (std::abs(term) < 1e-16) break;
  }
  return {d, std::clamp(p, 0.0, 1.0)};
}

std::vector<double> fd_gradient(const nowcast::LogDensity& target, std::span<const double> u, double h) {
  std::vector<double> x(u.begin(), u.end()), g(u.size()), scratch(u.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = target.log_density_grad(x, scratch);
    x[i] = keep - h;
    const double down = target.log_density_grad(x, scratch);
    x[i] = keep;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

double nb_log_pmf_ref(std::int64_t n, double mean, double r) {
  const hp nn(n), mu(mean), rr(r);
  const hp v = boost::math::lgamma(nn + rr) - boost::math::lgamma(rr) - boost::math::lgamma(nn + 1) +
               rr * log(rr / (rr + mu)) + nn * log(mu / (rr + mu));
  return static_cast<double>(v);
}

namespace {

class Objective : public ceres::FirstOrderFunction {
 public:
  Objective(const std::function<double(std::span<const double>, std::span<double>)>& f, int n) : f_(f), n_(n) {}
  bool Evaluate(const double* x, double* cost, double* gradient) const override {
    std::vector<double> g(static_cast<std::size_t>(n_));
    double v = 0;
    try {
      v = f_({x, static_cast<std::size_t>(n_)}, g);
    } catch (const std::exception&) {
      return false;
    }
    if (!std::isfinite(v)) return false;
    *cost = v;
    if (gradient) std::copy(g.begin(), g.end(), gradient);
    return true;
  }
  int NumParameters() const override { return n_; }

 private:
  std::function<double(std::span<const double>, std::span<double>)> f_;
  int n_;
};

}  // namespace

std::vector<double> minimize(const std::function<double(std::span<const double>, std::span<double>)>& f,
                             std::vector<double> x0, double gradient_tolerance) {
  ceres::GradientProblem problem(new Objective(f, static_cast<int>(x0.size())));
  ceres::GradientProblemSolver::Options options;
  options.line_search_direction_type = ceres::LBFGS;
  options.max_num_iterations = 20000;
  options.gradient_tolerance = gradient_tolerance;
  options.function_tolerance = 1e-16;
  options.parameter_tolerance = 1e-14;
  ceres::GradientProblemSolver::Summary summary;
  ceres::Solve(options, problem, x0.data(), &summary);
  return x0;
}

}  // namespace oracle
