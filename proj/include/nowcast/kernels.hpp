#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace nowcast {

enum class KernelKind { SquaredExponential, Matern12, Matern32, WhiteNoise };

std::string to_string(KernelKind kind);

// Stationary covariance over a scalar input. `alpha` is the amplitude (the
// kernel scales with alpha^2), `rho` the lengthscale in bins. White noise
// uses only `sigma`.
struct KernelSpec {
  KernelKind kind = KernelKind::SquaredExponential;
  double alpha = 1.0;
  double rho = 1.0;
  double sigma = 0.0;
};

// Sum of kernels over one input dimension.
struct CompositeKernelSpec {
  std::vector<KernelSpec> terms;
};

// One additive component of a 2D separable kernel: k_time(t,t') * k_delay(d,d').
struct SeparableComponent {
  KernelSpec time;
  KernelSpec delay;
};

struct SeparableKernelSpec {
  std::vector<SeparableComponent> components;
  double noise_sigma = 0.0;  // added to the diagonal of the summed 2D Gram
};

struct GramMatrix {
  Eigen::MatrixXd values;
  double jitter_applied = 0.0;
};

struct CholeskyFactor {
  Eigen::MatrixXd lower;
  double jitter = 0.0;
  int escalations = 0;
};

inline constexpr std::size_t kDefaultKronCap = 20000;

void validate(const KernelSpec& spec);

double kernel_eval(const KernelSpec& spec, double x1, double x2);

// Kernel value as a function of distance r >= 0, without validation; used in
// the hot paths of the models.
double kernel_at_distance(KernelKind kind, double alpha, double rho, double r);

// d k / d rho at distance r.
double kernel_drho_at_distance(KernelKind kind, double alpha, double rho, double r);

GramMatrix gram(const CompositeKernelSpec& spec, std::span<const double> points);

// Block (i,j) = kt(i,j) * kd; flattened index = t * kd.rows() + d.
GramMatrix kron_gram(const GramMatrix& kt, const GramMatrix& kd,
                     std::size_t max_dim = kDefaultKronCap);

GramMatrix gram_separable(const SeparableKernelSpec& spec, std::span<const double> time_points,
                          std::span<const double> delay_points,
                          std::size_t max_dim = kDefaultKronCap);

// Factor K + jitter*I, trying jitter = base * 10^k for k = 0..6.
// Throws NotPositiveDefinite when every rung fails.
CholeskyFactor cholesky_jitter(const GramMatrix& k, double base_jitter);
CholeskyFactor cholesky_jitter(const Eigen::MatrixXd& k, double base_jitter);

// (A kron B) * vec(Z) with Z stored row-major as A.rows() x B.rows(), i.e.
// vec(A Z B^T). `transpose` applies (A kron B)^T instead.
void kron_matvec(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, std::span<const double> z,
                 std::span<double> out, bool transpose = false);

}  // namespace nowcast
