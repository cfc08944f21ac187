#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "catch_amalgamated.hpp"
#include "headprobe/error.hpp"
#include "headprobe/oracle/reference_stats.hpp"
#include "headprobe/stats/stats.hpp"
#include "helpers.hpp"

using namespace headprobe;
using namespace headprobe::stats;
using testing::close;

TEST_CASE("student t tail matches tabulated values", "[stats]") {
  // scipy.stats.t.sf
  struct Row {
    double t, df, sf;
  };
  const Row rows[] = {{0.5, 1, 0.3524163823495668},   {1.0, 3, 0.19550110947788527}, {2.5, 10, 0.015723422118304388},
                      {-1.7, 4, 0.917822529364975},   {3.0, 100, 0.0017039576716647257}, {10.0, 2, 0.004926228511662846},
                      {0.1, 1000, 0.4601821845118021}, {25, 5, 9.553388921977128e-07}};
  for (const auto& r : rows) {
    INFO(r.t << " df=" << r.df);
    CHECK(std::abs(student_t_sf(r.t, r.df) - r.sf) <= 1e-12 * std::max(r.sf, 1e-3));
    CHECK(std::abs(oracle::reference_t_sf(r.t, r.df) - r.sf) <= 1e-9);
    CHECK(std::abs(student_t_cdf(r.t, r.df) + r.sf - 1.0) <= 1e-12);
  }
  CHECK(student_t_sf(0.0, 7) == 0.5);
}

TEST_CASE("ols on an exact line", "[stats]") {
  const std::vector<double> x{0, 1, 2, 3, 4}, y{1, 3, 5, 7, 9};
  const auto r = ols(x, y);
  CHECK(close(r.slope, 2.0, 1e-12));
  CHECK(close(r.intercept, 1.0, 1e-12));
  CHECK(close(r.r2, 1.0, 1e-12));
  CHECK(r.p < 1e-6);
}

TEST_CASE("ols matches hand-solved normal equations", "[stats]") {
  // x = [1,2,3,4], y = [1,3,2,5]: Sxy = 5.5, Sxx = 5 -> slope 1.1, intercept 0.
  const std::vector<double> x{1, 2, 3, 4}, y{1, 3, 2, 5};
  const auto r = ols(x, y);
  CHECK(std::abs(r.slope - 1.1) <= 1e-9);
  CHECK(std::abs(r.intercept) <= 1e-9);
  // residuals [-0.1, 0.8, -1.3, 0.6]: SSE = 2.7, s^2 = 1.35, se = sqrt(1.35 / 5); SST = 8.75
  CHECK(std::abs(r.sse - 2.7) <= 1e-9);
  CHECK(std::abs(r.se_slope - std::sqrt(1.35 / 5.0)) <= 1e-9);
  CHECK(std::abs(r.r2 - (1.0 - 2.7 / 8.75)) <= 1e-9);
  CHECK(std::abs(r.aic - (4.0 * std::log(2.7 / 4.0) + 4.0)) <= 1e-9);
  CHECK(std::abs(r.p - 0.16847816) <= 1e-7);
  CHECK(r.df == 2);
}

TEST_CASE("ols agrees with the normal-equation oracle on random designs", "[stats][oracle]") {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> z;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 4 + trial % 7;
    const std::size_t extra = trial % 3 == 0 ? 0 : std::min<std::size_t>(trial % 3, n - 3);
    std::vector<double> x(n), y(n);
    std::vector<std::vector<double>> cols(extra, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = z(rng);
      y[i] = 0.3 + 1.7 * x[i] + z(rng);
      for (auto& c : cols) c[i] = z(rng);
    }
    const auto r = ols(x, y, cols);
    std::vector<std::vector<double>> all{x};
    all.insert(all.end(), cols.begin(), cols.end());
    const auto ref = oracle::reference_ols(all, y);
    for (std::size_t j = 0; j < ref.coefficients.size(); ++j) {
      REQUIRE(close(r.coefficients[j], ref.coefficients[j], 1e-9));
      REQUIRE(close(r.std_errors[j], ref.std_errors[j], 1e-9));
    }
    REQUIRE(close(r.r2, ref.r2, 1e-9));
    REQUIRE(close(r.aic, ref.aic, 1e-9));
    REQUIRE(close(r.p, 2.0 * oracle::reference_t_sf(std::abs(r.t), r.df), 1e-8));

    // Residuals are orthogonal to every design column.
    std::vector<double> resid(n);
    for (std::size_t i = 0; i < n; ++i) {
      double fit = r.coefficients[0] + r.coefficients[1] * x[i];
      for (std::size_t j = 0; j < extra; ++j) fit += r.coefficients[2 + j] * cols[j][i];
      resid[i] = y[i] - fit;
    }
    REQUIRE(std::abs(std::accumulate(resid.begin(), resid.end(), 0.0)) <= 1e-8);
    for (const auto& c : all) REQUIRE(std::abs(std::inner_product(c.begin(), c.end(), resid.begin(), 0.0)) <= 1e-8);

    if (extra == 0) REQUIRE(close(std::pow(pearson(x, y), 2), r.r2, 1e-12));
  }
}

TEST_CASE("ols errors", "[stats]") {
  const std::vector<double> c{2, 2, 2, 2}, y{1, 2, 3, 4};
  CHECK_THROWS_AS(ols(c, y), DegenerateError);
  const std::vector<double> x{1, 2, 3, 4};
  CHECK_THROWS_AS(ols(x, y, {{2, 4, 6, 8}}), DegenerateError);
  CHECK_THROWS_AS(ols(std::vector<double>{1, 2}, std::vector<double>{1, 2}), ArgumentError);
  CHECK_THROWS_AS(ols(x, std::vector<double>{1, 2, 3}), ArgumentError);
}

TEST_CASE("paired t-test", "[stats]") {
  const std::vector<double> a{0.3, 0.5, 0.2};
  const auto same = paired_t_one_tailed(a, a);
  CHECK(same.t == 0.0);
  CHECK(same.p_one_tailed == 0.5);
  CHECK(same.df == 2);

  // d = [1, 1, 1, -1]: mean 0.5, sd 1, t = 0.5 / (1 / 2) = 1
  const auto r = paired_t_one_tailed(std::vector<double>{1, 1, 1, -1}, std::vector<double>{0, 0, 0, 0});
  CHECK(close(r.t, 1.0, 1e-12));
  CHECK(close(r.p_one_tailed, 0.19550110947788527, 1e-12));
  CHECK(r.df == 3);

  // d = [0.1, 0.2, 0.3]: mean 0.2, sd 0.1, t = 0.2 / (0.1 / sqrt 3)
  const auto q = paired_t_one_tailed(std::vector<double>{0.1, 0.2, 0.3}, std::vector<double>{0, 0, 0});
  CHECK(close(q.t, 2.0 * std::sqrt(3.0), 1e-12));
  CHECK(close(q.p_one_tailed, 0.03708995011372425, 1e-10));

  CHECK_THROWS_AS(paired_t_one_tailed(std::vector<double>{1}, std::vector<double>{0}), ArgumentError);
  CHECK_THROWS_AS(paired_t_one_tailed(std::vector<double>{1, 1}, std::vector<double>{0, 0}), DegenerateError);

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> x(5 + trial % 5), y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] = u(rng);
      y[i] = u(rng);
    }
    REQUIRE(close(paired_t_one_tailed(x, y).t, oracle::reference_paired_t(x, y), 1e-9));
  }
}

TEST_CASE("bh_fdr", "[stats]") {
  const std::vector<double> p{0.01, 0.04, 0.03, 0.005};
  const auto adj = bh_fdr(p);
  const std::vector<double> expected{0.02, 0.04, 0.04, 0.02};
  for (std::size_t i = 0; i < 4; ++i) CHECK(close(adj[i], expected[i], 1e-12));
  CHECK(bh_fdr(std::vector<double>{0.3}) == std::vector<double>{0.3});
  CHECK(bh_fdr(std::vector<double>{1, 1, 1}) == std::vector<double>{1, 1, 1});
  CHECK_THROWS_AS(bh_fdr(std::vector<double>{0.5, 1.2}), ArgumentError);
  CHECK_THROWS_AS(bh_fdr(std::vector<double>{-0.1}), ArgumentError);
}

TEST_CASE("bh_fdr properties under permutation", "[stats][property]") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> p(1 + trial % 30);
    for (auto& v : p) v = trial % 4 == 0 ? std::round(u(rng) * 10) / 10 : u(rng) * u(rng);
    const auto adj = bh_fdr(p);
    const auto ref = oracle::reference_bh(p);
    for (std::size_t i = 0; i < p.size(); ++i) {
      REQUIRE(close(adj[i], ref[i], 1e-12));
      REQUIRE(adj[i] >= p[i]);
      REQUIRE(adj[i] <= 1.0);
      for (std::size_t j = 0; j < p.size(); ++j) {
        if (p[i] < p[j]) REQUIRE(adj[i] <= adj[j]);
      }
    }
    std::vector<std::size_t> perm(p.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<double> shuffled(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) shuffled[i] = p[perm[i]];
    const auto adj2 = bh_fdr(shuffled);
    for (std::size_t i = 0; i < p.size(); ++i) REQUIRE(adj2[i] == adj[perm[i]]);
  }
}

TEST_CASE("zscore", "[stats]") {
  CHECK(zscore(std::vector<double>{0, 1}) == std::vector<double>{-1, 1});
  // [1,2,3,4]: mean 2.5, population sd sqrt(1.25)
  const auto z = zscore(std::vector<double>{1, 2, 3, 4});
  const double sd = std::sqrt(1.25);
  const std::vector<double> expected{-1.5 / sd, -0.5 / sd, 0.5 / sd, 1.5 / sd};
  for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(z[i] - expected[i]) <= 1e-12);
  CHECK_THROWS_AS(zscore(std::vector<double>{3, 3, 3}), DegenerateError);
  CHECK_THROWS_AS(zscore(std::vector<double>{3}), ArgumentError);

  std::mt19937_64 rng(8);
  std::normal_distribution<double> n;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> v(2 + trial % 20), w(v.size());
    const double a = std::exp(n(rng)), b = 10 * n(rng);
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] = n(rng);
      w[i] = a * v[i] + b;
    }
    const auto zv = zscore(v), zw = zscore(w), ref = oracle::reference_zscore(v);
    double m = 0.0, ss = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      REQUIRE(std::abs(zv[i] - zw[i]) <= 1e-9);
      REQUIRE(std::abs(zv[i] - ref[i]) <= 1e-12);
      m += zv[i];
      ss += zv[i] * zv[i];
    }
    REQUIRE(std::abs(m / v.size()) <= 1e-9);
    REQUIRE(std::abs(ss / v.size() - 1.0) <= 1e-9);
  }
}

TEST_CASE("pearson", "[stats]") {
  const std::vector<double> x{1, 4, 2, 8}, neg{-1, -4, -2, -8};
  CHECK(close(pearson(x, x), 1.0, 1e-15));
  CHECK(close(pearson(x, neg), -1.0, 1e-15));
  CHECK_THROWS_AS(pearson(x, std::vector<double>{1, 1, 1, 1}), DegenerateError);
  std::mt19937_64 rng(123);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> a(3 + trial % 10), b(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i] = u(rng);
      b[i] = u(rng) + 0.5 * a[i];
    }
    REQUIRE(std::abs(pearson(a, b) - oracle::reference_pearson(a, b)) <= 1e-12);
  }
}
