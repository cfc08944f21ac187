#pragma once

#include <vector>

namespace headprobe::oracle {

struct ReferenceFit {
  std::vector<double> coefficients;
  std::vector<double> std_errors;
  double sse = 0.0;
  double r2 = 0.0;
  double aic = 0.0;
};

// Normal equations (X^T X) b = X^T y solved by Gauss-Jordan elimination.
// `columns` excludes the intercept, which is added first.
ReferenceFit reference_ols(const std::vector<std::vector<double>>& columns, const std::vector<double>& y);

double reference_paired_t(const std::vector<double>& a, const std::vector<double>& b);

// P(T_df > t) by adaptive Simpson integration of the density.
double reference_t_sf(double t, double df);

// Adjusted p_i = min over ranks j >= rank(i) of m p_(j) / j, clipped at 1.
std::vector<double> reference_bh(const std::vector<double>& p);

std::vector<double> reference_zscore(const std::vector<double>& v);

// cov(x, y) / (sd(x) sd(y)), all with n - 1.
double reference_pearson(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace headprobe::oracle
