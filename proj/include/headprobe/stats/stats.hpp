#pragma once

#include <span>
#include <vector>

namespace headprobe::stats {

struct RegressionResult {
  double slope = 0.0;  // coefficient of the first regressor
  double intercept = 0.0;
  double se_slope = 0.0;
  double t = 0.0;
  double p = 1.0;  // two-sided
  double r2 = 0.0;
  int n = 0;
  double aic = 0.0;  // n ln(SSE / n) + 2k
  int df = 0;        // n - k
  double sse = 0.0;
  std::vector<double> coefficients;  // intercept, x, extra columns...
  std::vector<double> std_errors;
};

struct TTestResult {
  double t = 0.0;
  int df = 0;
  double p_one_tailed = 0.5;  // P(T_df > t)
  double mean_diff = 0.0;
};

// Least squares of y on [1, x, extra_columns...]; each extra column holds n
// values. Throws ArgumentError on length mismatch or n <= k, DegenerateError on
// a rank-deficient design.
RegressionResult ols(std::span<const double> x, std::span<const double> y,
                     const std::vector<std::vector<double>>& extra_columns = {});

// One-tailed paired t-test of mean(a - b) > 0. If every difference is exactly
// zero the result is t = 0, p = 0.5; differences that are constant but
// nonzero raise DegenerateError.
TTestResult paired_t_one_tailed(std::span<const double> a, std::span<const double> b);

// Benjamini-Hochberg adjusted p-values, in input order.
std::vector<double> bh_fdr(std::span<const double> p);

// (v - mean) / population sd.
std::vector<double> zscore(std::span<const double> v);

double pearson(std::span<const double> x, std::span<const double> y);

double mean(std::span<const double> v);
double sample_sd(std::span<const double> v);
// Standard error of the mean (sample sd / sqrt(n)); 0 for n < 2.
double standard_error(std::span<const double> v);

// Regularized incomplete beta I_x(a, b).
double incomplete_beta(double a, double b, double x);

// P(T_df <= t) and P(T_df > t) for Student's t.
double student_t_cdf(double t, double df);
double student_t_sf(double t, double df);

}  // namespace headprobe::stats
