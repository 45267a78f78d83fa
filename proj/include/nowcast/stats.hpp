#pragma once

#include <span>
#include <vector>

namespace nowcast {

// Linear interpolation between order statistics (Hyndman-Fan type 7).
// `sorted` must be ascending and non-empty.
double quantile_sorted(std::span<const double> sorted, double p);
double quantile(std::span<const double> values, double p);

double mean(std::span<const double> values);
// Sample variance with n - 1 in the denominator; 0 for fewer than 2 values.
double variance(std::span<const double> values);

double normal_quantile(double p);
double normal_cdf(double x);

// Average ranks (1-based), ties share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> values);

}  // namespace nowcast
