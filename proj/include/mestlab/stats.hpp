#pragma once

#include <span>
#include <vector>

namespace mestlab::stats {

double normal_cdf(double x);
double normal_pdf(double x);
/// Inverse standard normal CDF; p must lie in (0, 1).
double normal_quantile(double p);
/// Quantile of Student's t with `df` degrees of freedom; p in (0, 1).
double student_t_quantile(double df, double p);

double mean(std::span<const double> xs);
/// Unbiased (n-1 denominator) sample variance; 0 for fewer than 2 values.
double sample_variance(std::span<const double> xs);
double sample_sd(std::span<const double> xs);
/// Linear-interpolation quantile (type 7). Input need not be sorted.
double quantile(std::span<const double> xs, double q);
double median(std::span<const double> xs);

/// Standard error of a sample mean.
double mean_se(std::span<const double> xs);

}  // namespace mestlab::stats
