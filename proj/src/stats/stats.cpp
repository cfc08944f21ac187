#include "headprobe/stats/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "headprobe/error.hpp"

namespace headprobe::stats {

namespace {

void require_finite(std::span<const double> v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw ArgumentError(std::string(what) + ": non-finite input");
  }
}

// Lentz's continued fraction for the incomplete beta function.
double beta_continued_fraction(double a, double b, double x) {
  constexpr double kTiny = 1e-300;
  constexpr double kEps = 1e-15;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 1000; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return h;
  }
  throw NumericError("incomplete beta: continued fraction did not converge");
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw ArgumentError("incomplete_beta: shape parameters must be positive");
  if (!(x >= 0.0 && x <= 1.0)) throw ArgumentError("incomplete_beta: x outside [0, 1]");
  if (x == 0.0 || x == 1.0) return x;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  if (x < (a + 1.0) / (a + b + 2.0)) return std::exp(log_front) * beta_continued_fraction(a, b, x) / a;
  return 1.0 - std::exp(log_front) * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_sf(double t, double df) {
  if (!(df > 0.0)) throw ArgumentError("student_t: df must be positive");
  if (std::isnan(t)) throw ArgumentError("student_t: t is NaN");
  if (std::isinf(t)) return t > 0 ? 0.0 : 1.0;
  const double tail = 0.5 * incomplete_beta(0.5 * df, 0.5, df / (df + t * t));
  return t > 0 ? tail : 1.0 - tail;
}

double student_t_cdf(double t, double df) {
  if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
  if (t == 0.0) return 0.5;
  return t < 0 ? student_t_sf(-t, df) : 1.0 - student_t_sf(t, df);
}

double mean(std::span<const double> v) {
  if (v.empty()) throw ArgumentError("mean of empty sample");
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_sd(std::span<const double> v) {
  if (v.size() < 2) throw ArgumentError("sample sd needs at least 2 values");
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

double standard_error(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  return sample_sd(v) / std::sqrt(static_cast<double>(v.size()));
}

RegressionResult ols(std::span<const double> x, std::span<const double> y,
                     const std::vector<std::vector<double>>& extra_columns) {
  const std::size_t n = y.size();
  if (x.size() != n) throw ArgumentError("ols: x and y lengths differ");
  for (const auto& col : extra_columns) {
    if (col.size() != n) throw ArgumentError("ols: extra column length differs from y");
    require_finite(col, "ols");
  }
  require_finite(x, "ols");
  require_finite(y, "ols");
  const std::size_t k = 2 + extra_columns.size();
  if (n <= k) {
    throw ArgumentError("ols: need more observations (" + std::to_string(n) + ") than coefficients (" +
                        std::to_string(k) + ")");
  }

  // Column-major design matrix, reduced in place by Householder reflections.
  std::vector<std::vector<double>> a(k, std::vector<double>(n, 1.0));
  a[1].assign(x.begin(), x.end());
  for (std::size_t j = 0; j < extra_columns.size(); ++j) a[2 + j] = extra_columns[j];
  std::vector<double> col_norm(k);
  for (std::size_t j = 0; j < k; ++j) {
    double s = 0.0;
    for (double v : a[j]) s += v * v;
    col_norm[j] = std::sqrt(s);
  }
  std::vector<double> qty(y.begin(), y.end());

  for (std::size_t j = 0; j < k; ++j) {
    double norm = 0.0;
    for (std::size_t i = j; i < n; ++i) norm += a[j][i] * a[j][i];
    norm = std::sqrt(norm);
    if (norm <= 1e-10 * std::max(col_norm[j], 1e-300)) {
      throw DegenerateError(j == 1 ? "ols: regressor is constant or collinear with the intercept"
                                   : "ols: design matrix is rank deficient");
    }
    const double alpha = a[j][j] > 0 ? -norm : norm;
    std::vector<double> v(n, 0.0);
    for (std::size_t i = j; i < n; ++i) v[i] = a[j][i];
    v[j] -= alpha;
    double vv = 0.0;
    for (std::size_t i = j; i < n; ++i) vv += v[i] * v[i];
    auto reflect = [&](std::vector<double>& c) {
      double s = 0.0;
      for (std::size_t i = j; i < n; ++i) s += v[i] * c[i];
      s = 2.0 * s / vv;
      for (std::size_t i = j; i < n; ++i) c[i] -= s * v[i];
    };
    for (std::size_t c = j; c < k; ++c) reflect(a[c]);
    reflect(qty);
  }

  // Back substitution R b = Q^T y; R(i, j) = a[j][i].
  std::vector<double> beta(k, 0.0);
  for (std::size_t i = k; i-- > 0;) {
    double s = qty[i];
    for (std::size_t j = i + 1; j < k; ++j) s -= a[j][i] * beta[j];
    beta[i] = s / a[i][i];
  }
  // R^-1, upper triangular, so (X^T X)^-1 = R^-1 R^-T.
  std::vector<std::vector<double>> rinv(k, std::vector<double>(k, 0.0));
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t i = c + 1; i-- > 0;) {
      double s = i == c ? 1.0 : 0.0;
      for (std::size_t j = i + 1; j <= c; ++j) s -= a[j][i] * rinv[j][c];
      rinv[i][c] = s / a[i][i];
    }
  }

  double sse = 0.0;
  const double ybar = mean(y);
  double sst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double fit = beta[0] + beta[1] * x[i];
    for (std::size_t j = 0; j < extra_columns.size(); ++j) fit += beta[2 + j] * extra_columns[j][i];
    sse += (y[i] - fit) * (y[i] - fit);
    sst += (y[i] - ybar) * (y[i] - ybar);
  }

  RegressionResult r;
  r.n = static_cast<int>(n);
  r.df = static_cast<int>(n - k);
  r.sse = sse;
  r.coefficients = beta;
  r.intercept = beta[0];
  r.slope = beta[1];
  const double sigma2 = sse / r.df;
  r.std_errors.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    double s = 0.0;
    for (std::size_t c = i; c < k; ++c) s += rinv[i][c] * rinv[i][c];
    r.std_errors[i] = std::sqrt(sigma2 * s);
  }
  r.se_slope = r.std_errors[1];
  if (r.se_slope > 0.0) {
    r.t = r.slope / r.se_slope;
    r.p = std::min(1.0, 2.0 * student_t_sf(std::abs(r.t), r.df));
  } else {
    r.t = r.slope == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), r.slope);
    r.p = r.slope == 0.0 ? 1.0 : 0.0;
  }
  r.r2 = sst > 0.0 ? std::clamp(1.0 - sse / sst, 0.0, 1.0) : 0.0;
  r.aic = static_cast<double>(n) * std::log(sse / static_cast<double>(n)) + 2.0 * static_cast<double>(k);
  return r;
}

TTestResult paired_t_one_tailed(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ArgumentError("paired t-test: samples differ in length");
  if (a.size() < 2) throw ArgumentError("paired t-test: need at least 2 pairs");
  require_finite(a, "paired t-test");
  require_finite(b, "paired t-test");
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];

  TTestResult r;
  r.df = static_cast<int>(d.size()) - 1;
  r.mean_diff = mean(d);
  if (std::all_of(d.begin(), d.end(), [](double v) { return v == 0.0; })) {
    r.t = 0.0;
    r.p_one_tailed = 0.5;
    return r;
  }
  const double sd = sample_sd(d);
  if (sd == 0.0) throw DegenerateError("paired t-test: differences have zero variance");
  r.t = r.mean_diff / (sd / std::sqrt(static_cast<double>(d.size())));
  r.p_one_tailed = student_t_sf(r.t, r.df);
  return r;
}

std::vector<double> bh_fdr(std::span<const double> p) {
  const std::size_t m = p.size();
  for (double v : p) {
    if (!(v >= 0.0 && v <= 1.0)) throw ArgumentError("bh_fdr: p-value outside [0, 1]");
  }
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return p[i] < p[j]; });
  std::vector<double> out(m);
  double running = 1.0;
  for (std::size_t r = m; r-- > 0;) {
    const std::size_t i = order[r];
    running = std::min(running, p[i] * static_cast<double>(m) / static_cast<double>(r + 1));
    out[i] = std::max(running, p[i]);
  }
  return out;
}

std::vector<double> zscore(std::span<const double> v) {
  if (v.size() < 2) throw ArgumentError("zscore: need at least 2 values");
  require_finite(v, "zscore");
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  const double sd = std::sqrt(ss / static_cast<double>(v.size()));
  if (sd == 0.0) throw DegenerateError("zscore: zero variance");
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - m) / sd;
  return out;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ArgumentError("pearson: lengths differ");
  if (x.size() < 2) throw ArgumentError("pearson: need at least 2 values");
  require_finite(x, "pearson");
  require_finite(y, "pearson");
  const double mx = mean(x), my = mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw DegenerateError("pearson: zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

}  // namespace headprobe::stats
