#include "headprobe/oracle/reference_stats.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>

namespace headprobe::oracle {

namespace {

std::vector<std::vector<double>> invert(std::vector<std::vector<double>> m) {
  const std::size_t k = m.size();
  std::vector<std::vector<double>> inv(k, std::vector<double>(k, 0.0));
  for (std::size_t i = 0; i < k; ++i) inv[i][i] = 1.0;
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < k; ++r) {
      if (std::abs(m[r][c]) > std::abs(m[piv][c])) piv = r;
    }
    if (m[piv][c] == 0.0) throw std::runtime_error("singular normal equations");
    std::swap(m[piv], m[c]);
    std::swap(inv[piv], inv[c]);
    const double d = m[c][c];
    for (std::size_t j = 0; j < k; ++j) {
      m[c][j] /= d;
      inv[c][j] /= d;
    }
    for (std::size_t r = 0; r < k; ++r) {
      if (r == c) continue;
      const double f = m[r][c];
      for (std::size_t j = 0; j < k; ++j) {
        m[r][j] -= f * m[c][j];
        inv[r][j] -= f * inv[c][j];
      }
    }
  }
  return inv;
}

double avg(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

double simpson(const std::function<double(double)>& f, double a, double b, double fa, double fm, double fb,
               double whole, double eps, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  if (depth <= 0 || std::abs(left + right - whole) <= 15.0 * eps) return left + right + (left + right - whole) / 15.0;
  return simpson(f, a, m, fa, flm, fm, left, eps / 2, depth - 1) + simpson(f, m, b, fm, frm, fb, right, eps / 2, depth - 1);
}

}  // namespace

ReferenceFit reference_ols(const std::vector<std::vector<double>>& columns, const std::vector<double>& y) {
  const std::size_t n = y.size(), k = columns.size() + 1;
  auto col = [&](std::size_t j, std::size_t i) { return j == 0 ? 1.0 : columns[j - 1][i]; };
  std::vector<std::vector<double>> xtx(k, std::vector<double>(k, 0.0));
  std::vector<double> xty(k, 0.0);
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t i = 0; i < n; ++i) {
      xty[a] += col(a, i) * y[i];
      for (std::size_t b = 0; b < k; ++b) xtx[a][b] += col(a, i) * col(b, i);
    }
  }
  const auto inv = invert(xtx);
  ReferenceFit fit;
  fit.coefficients.assign(k, 0.0);
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = 0; b < k; ++b) fit.coefficients[a] += inv[a][b] * xty[b];
  }
  const double ybar = avg(y);
  double sst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double pred = 0.0;
    for (std::size_t a = 0; a < k; ++a) pred += fit.coefficients[a] * col(a, i);
    fit.sse += (y[i] - pred) * (y[i] - pred);
    sst += (y[i] - ybar) * (y[i] - ybar);
  }
  const double s2 = fit.sse / static_cast<double>(n - k);
  for (std::size_t a = 0; a < k; ++a) fit.std_errors.push_back(std::sqrt(s2 * inv[a][a]));
  fit.r2 = 1.0 - fit.sse / sst;
  fit.aic = n * std::log(fit.sse / n) + 2.0 * k;
  return fit;
}

double reference_paired_t(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> d;
  for (std::size_t i = 0; i < a.size(); ++i) d.push_back(a[i] - b[i]);
  const double m = avg(d);
  double ss = 0.0;
  for (double v : d) ss += (v - m) * (v - m);
  const double sd = std::sqrt(ss / (d.size() - 1));
  return m / (sd / std::sqrt(static_cast<double>(d.size())));
}

double reference_t_sf(double t, double df) {
  const double c = std::exp(std::lgamma((df + 1) / 2) - std::lgamma(df / 2)) / std::sqrt(df * M_PI);
  const std::function<double(double)> pdf = [&](double x) { return c * std::pow(1.0 + x * x / df, -(df + 1) / 2); };
  const double lo = std::min(0.0, t), hi = std::max(0.0, t);
  const double mid = 0.5 * (lo + hi);
  const double fa = pdf(lo), fm = pdf(mid), fb = pdf(hi);
  const double area = simpson(pdf, lo, hi, fa, fm, fb, (hi - lo) / 6.0 * (fa + 4 * fm + fb), 1e-15, 50);
  return t >= 0 ? 0.5 - area : 0.5 + area;
}

std::vector<double> reference_bh(const std::vector<double>& p) {
  const std::size_t m = p.size();
  std::vector<double> sorted = p;
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> out(m);
  for (std::size_t i = 0; i < m; ++i) {
    // Rank of p[i]: the last position holding its value, so ties share a rank.
    const std::size_t rank = static_cast<std::size_t>(std::upper_bound(sorted.begin(), sorted.end(), p[i]) - sorted.begin());
    double best = 1.0;
    for (std::size_t j = rank; j <= m; ++j) best = std::min(best, sorted[j - 1] * m / j);
    out[i] = best;
  }
  return out;
}

std::vector<double> reference_zscore(const std::vector<double>& v) {
  const double m = avg(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  const double sd = std::sqrt(ss / v.size());
  std::vector<double> out;
  for (double x : v) out.push_back((x - m) / sd);
  return out;
}

double reference_pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double mx = avg(x), my = avg(y);
  double cov = 0.0, vx = 0.0, vy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    cov += (x[i] - mx) * (y[i] - my);
    vx += (x[i] - mx) * (x[i] - mx);
    vy += (y[i] - my) * (y[i] - my);
  }
  const double nm1 = static_cast<double>(x.size() - 1);
  return (cov / nm1) / (std::sqrt(vx / nm1) * std::sqrt(vy / nm1));
}

}  // namespace headprobe::oracle
