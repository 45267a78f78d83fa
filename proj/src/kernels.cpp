#include "nowcast/kernels.hpp"

#include <cmath>

#include "nowcast/error.hpp"

namespace nowcast {

namespace {

constexpr double kSqrt3 = 1.7320508075688772935;

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace

std::string to_string(KernelKind kind) {
  switch (kind) {
    case KernelKind::SquaredExponential: return "se";
    case KernelKind::Matern12: return "matern12";
    case KernelKind::Matern32: return "matern32";
    case KernelKind::WhiteNoise: return "white";
  }
  return "?";
}

void validate(const KernelSpec& spec) {
  if (spec.kind == KernelKind::WhiteNoise) {
    if (!(spec.sigma >= 0.0) || !std::isfinite(spec.sigma)) {
      throw DomainError("white-noise kernel needs finite sigma >= 0");
    }
    return;
  }
  if (!(spec.alpha > 0.0) || !std::isfinite(spec.alpha)) throw DomainError("kernel alpha must be > 0");
  if (!(spec.rho > 0.0) || !std::isfinite(spec.rho)) throw DomainError("kernel rho must be > 0");
}

double kernel_at_distance(KernelKind kind, double alpha, double rho, double r) {
  const double a2 = alpha * alpha;
  switch (kind) {
    case KernelKind::SquaredExponential: {
      const double u = r / rho;
      return a2 * std::exp(-0.5 * u * u);
    }
    case KernelKind::Matern12: return a2 * std::exp(-r / rho);
    case KernelKind::Matern32: {
      const double u = kSqrt3 * r / rho;
      return a2 * (1.0 + u) * std::exp(-u);
    }
    case KernelKind::WhiteNoise: return r == 0.0 ? a2 : 0.0;
  }
  return 0.0;
}

double kernel_drho_at_distance(KernelKind kind, double alpha, double rho, double r) {
  const double a2 = alpha * alpha;
  switch (kind) {
    case KernelKind::SquaredExponential: {
      const double u = r / rho;
      return a2 * std::exp(-0.5 * u * u) * u * u / rho;
    }
    case KernelKind::Matern12: return a2 * std::exp(-r / rho) * r / (rho * rho);
    case KernelKind::Matern32: {
      // d/drho of (1+u)e^{-u} with u = sqrt3 r / rho is u^2 e^{-u} / rho.
      const double u = kSqrt3 * r / rho;
      return a2 * u * u * std::exp(-u) / rho;
    }
    case KernelKind::WhiteNoise: return 0.0;
  }
  return 0.0;
}

double kernel_eval(const KernelSpec& spec, double x1, double x2) {
  if (!std::isfinite(x1) || !std::isfinite(x2)) throw DomainError("kernel_eval: non-finite input");
  validate(spec);
  if (spec.kind == KernelKind::WhiteNoise) return x1 == x2 ? spec.sigma * spec.sigma : 0.0;
  return kernel_at_distance(spec.kind, spec.alpha, spec.rho, std::abs(x1 - x2));
}

GramMatrix gram(const CompositeKernelSpec& spec, std::span<const double> points) {
  if (points.empty()) throw DomainError("gram: need at least one point");
  if (spec.terms.empty()) throw DomainError("gram: composite kernel has no terms");
  for (double p : points) {
    if (!std::isfinite(p)) throw DomainError("gram: non-finite point");
  }
  for (const auto& term : spec.terms) validate(term);
  const auto n = static_cast<Eigen::Index>(points.size());
  GramMatrix out;
  out.values = Eigen::MatrixXd::Zero(n, n);
  for (const auto& term : spec.terms) {
    if (term.kind == KernelKind::WhiteNoise) {
      out.values.diagonal().array() += term.sigma * term.sigma;
      continue;
    }
    for (Eigen::Index j = 0; j < n; ++j) {
      out.values(j, j) += term.alpha * term.alpha;
      for (Eigen::Index i = j + 1; i < n; ++i) {
        const double v = kernel_at_distance(term.kind, term.alpha, term.rho,
                                            std::abs(points[std::size_t(i)] - points[std::size_t(j)]));
        out.values(i, j) += v;
        out.values(j, i) += v;
      }
    }
  }
  return out;
}

GramMatrix kron_gram(const GramMatrix& kt, const GramMatrix& kd, std::size_t max_dim) {
  const auto p = kt.values.rows();
  const auto q = kd.values.rows();
  if (kt.values.cols() != p || kd.values.cols() != q) throw DomainError("kron_gram: non-square input");
  const auto n = static_cast<std::size_t>(p) * static_cast<std::size_t>(q);
  if (n > max_dim) {
    throw SizeError("kron_gram: dimension " + std::to_string(n) + " exceeds cap " +
                    std::to_string(max_dim));
  }
  GramMatrix out;
  out.values.resize(p * q, p * q);
  for (Eigen::Index i = 0; i < p; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) {
      out.values.block(i * q, j * q, q, q) = kt.values(i, j) * kd.values;
    }
  }
  return out;
}

GramMatrix gram_separable(const SeparableKernelSpec& spec, std::span<const double> time_points,
                          std::span<const double> delay_points, std::size_t max_dim) {
  if (spec.components.empty()) throw DomainError("separable kernel needs at least one component");
  GramMatrix out;
  for (const auto& c : spec.components) {
    const auto kt = gram(CompositeKernelSpec{{c.time}}, time_points);
    const auto kd = gram(CompositeKernelSpec{{c.delay}}, delay_points);
    auto k = kron_gram(kt, kd, max_dim);
    if (out.values.size() == 0) {
      out.values = std::move(k.values);
    } else {
      out.values += k.values;
    }
  }
  out.values.diagonal().array() += spec.noise_sigma * spec.noise_sigma;
  return out;
}

CholeskyFactor cholesky_jitter(const Eigen::MatrixXd& k, double base_jitter) {
  if (k.rows() != k.cols()) throw DomainError("cholesky_jitter: non-square matrix");
  if (!(base_jitter > 0.0)) throw DomainError("cholesky_jitter: base jitter must be > 0");
  double jitter = base_jitter;
  for (int rung = 0; rung <= 6; ++rung, jitter *= 10.0) {
    Eigen::MatrixXd shifted = k;
    shifted.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd, Eigen::Lower> llt(shifted);
    if (llt.info() != Eigen::Success) continue;
    CholeskyFactor out;
    out.lower = llt.matrixL();
    if (!out.lower.allFinite() || (out.lower.diagonal().array() <= 0.0).any()) continue;
    out.jitter = jitter;
    out.escalations = rung;
    return out;
  }
  throw NotPositiveDefinite("matrix is not positive definite after jitter " +
                            std::to_string(jitter / 10.0));
}

CholeskyFactor cholesky_jitter(const GramMatrix& k, double base_jitter) {
  return cholesky_jitter(k.values, base_jitter);
}

void kron_matvec(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, std::span<const double> z,
                 std::span<double> out, bool transpose) {
  const auto p = a.rows();
  const auto q = b.rows();
  Eigen::Map<const RowMajor> zm(z.data(), p, q);
  Eigen::Map<RowMajor> om(out.data(), p, q);
  if (transpose) {
    om.noalias() = a.transpose() * zm * b;
  } else {
    om.noalias() = a * zm * b.transpose();
  }
}

}  // namespace nowcast
