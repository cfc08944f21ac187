#include "headprobe/oracle/suites.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <random>

#include "headprobe/error.hpp"
#include "headprobe/neox/engine.hpp"
#include "headprobe/oracle/random_model.hpp"
#include "headprobe/oracle/reference_model.hpp"
#include "headprobe/oracle/reference_stats.hpp"
#include "headprobe/stats/stats.hpp"

namespace headprobe::oracle {

bool SuiteResult::passed() const { return failures() == 0 && !checks.empty(); }

std::size_t SuiteResult::failures() const {
  return static_cast<std::size_t>(std::count_if(checks.begin(), checks.end(), [](const Check& c) { return !c.passed; }));
}

namespace {

using Clock = std::chrono::steady_clock;

double rel_err(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1.0); }

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

// Runs `body`, turning exceptions into a failed check.
void check(SuiteResult& suite, const std::string& name, const std::function<std::string(bool&)>& body) {
  Check c{name, false, ""};
  try {
    bool ok = true;
    c.detail = body(ok);
    c.passed = ok;
  } catch (const std::exception& e) {
    c.detail = std::string("threw: ") + e.what();
  }
  suite.checks.push_back(std::move(c));
}

}  // namespace

SuiteResult run_engine_oracle(const EngineOracleOptions& o) {
  const auto start = Clock::now();
  SuiteResult suite{"engine", {}, 0.0};
  std::mt19937_64 rng(o.seed);
  for (int m = 0; m < o.n_models; ++m) {
    const neox::ModelConfig c = random_tiny_config(rng, o.max_layers, o.max_heads, o.max_d);
    neox::ModelWeights w = random_weights(c, rng, 0.6);
    std::uniform_int_distribution<int> len(1, o.max_tokens), tok(0, c.vocab_size - 1);
    std::uniform_int_distribution<int> pick_layer(0, c.n_layers - 1), pick_head(0, c.n_heads - 1);
    std::vector<int> tokens(static_cast<std::size_t>(len(rng)));
    for (auto& t : tokens) t = tok(rng);
    const int zl = pick_layer(rng), zh = pick_head(rng);
    const std::string tag = "model " + std::to_string(m + 1) + " (L" + std::to_string(c.n_layers) + " H" +
                            std::to_string(c.n_heads) + " d" + std::to_string(c.d_model) + " T" +
                            std::to_string(tokens.size()) + ")";

    check(suite, tag + " parity", [&](bool& ok) {
      neox::CaptureSpec all;
      all.want_logits = true;
      const auto tr = neox::forward(c, w, tokens, all);
      const auto ref = reference_forward(c, w, tokens);
      const int T = static_cast<int>(tokens.size());
      double worst = 0.0;
      for (int l = 0; l <= c.n_layers; ++l) {
        for (int t = 0; t < T; ++t) {
          for (int i = 0; i < c.d_model; ++i) worst = std::max(worst, rel_err(tr.hidden_state(l, t)[i], ref.hidden[l][t][i]));
        }
      }
      for (int l = 0; l < c.n_layers; ++l) {
        for (int h = 0; h < c.n_heads; ++h) {
          for (int q = 0; q < T; ++q) {
            for (int k = 0; k < T; ++k) {
              worst = std::max(worst, rel_err(tr.attention_weight(l, h, q, k), ref.attention[l][h][q][k]));
            }
          }
        }
      }
      for (int t = 0; t < T; ++t) {
        for (int v = 0; v < c.vocab_size; ++v) worst = std::max(worst, rel_err(tr.logits_at(t)[v], ref.logits[t][v]));
      }
      if (T >= 2) {
        worst = std::max(worst, rel_err(neox::sentence_log_prob(c, w, tokens), reference_log_prob(c, w, tokens)));
      }
      ok = worst <= o.tolerance;
      return "max relative error " + sci(worst);
    });

    check(suite, tag + " zero-QK head (" + std::to_string(zl + 1) + "," + std::to_string(zh + 1) + ")", [&](bool& ok) {
      for (auto which : {neox::Projection::kQuery, neox::Projection::kKey}) {
        for (auto& v : neox::head_weight_rows(c, w.layers[zl], zh, which)) v = 0.0f;
        for (auto& v : neox::head_bias(c, w.layers[zl], zh, which)) v = 0.0f;
      }
      neox::CaptureSpec att;
      att.want_hidden = false;
      const auto tr = neox::forward(c, w, tokens, att);
      const int T = static_cast<int>(tokens.size());
      int bad = 0;
      for (int q = 0; q < T; ++q) {
        for (int k = 0; k < T; ++k) {
          const float expected = k <= q ? 1.0f / static_cast<float>(q + 1) : 0.0f;
          if (tr.attention_weight(zl, zh, q, k) != expected) ++bad;
        }
      }
      ok = bad == 0;
      return bad == 0 ? "rows exactly uniform" : std::to_string(bad) + " entries differ from 1/(q+1)";
    });
  }
  suite.seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return suite;
}

SuiteResult run_stats_oracle(const StatsOracleOptions& o) {
  const auto start = Clock::now();
  SuiteResult suite{"stats", {}, 0.0};
  std::mt19937_64 rng(o.seed);

  check(suite, "ols: y = 2x + 1 exactly", [&](bool& ok) {
    const std::vector<double> x{0, 1, 2, 3, 4}, y{1, 3, 5, 7, 9};
    const auto r = stats::ols(x, y);
    ok = std::abs(r.slope - 2) <= 1e-12 && std::abs(r.intercept - 1) <= 1e-12 && std::abs(r.r2 - 1) <= 1e-12;
    return "slope " + sci(r.slope) + " intercept " + sci(r.intercept) + " r2 " + sci(r.r2);
  });

  check(suite, "ols: x=[1,2,3,4] y=[1,3,2,5] against normal equations", [&](bool& ok) {
    const std::vector<double> x{1, 2, 3, 4}, y{1, 3, 2, 5};
    const auto r = stats::ols(x, y);
    const auto ref = reference_ols({x}, y);
    double worst = std::max({std::abs(r.intercept - ref.coefficients[0]), std::abs(r.slope - ref.coefficients[1]),
                             std::abs(r.se_slope - ref.std_errors[1]), std::abs(r.sse - ref.sse),
                             std::abs(r.r2 - ref.r2), std::abs(r.aic - ref.aic)});
    ok = worst <= 1e-9;
    return "max abs diff " + sci(worst);
  });

  check(suite, "ols: random designs with extra columns", [&](bool& ok) {
    std::normal_distribution<double> z;
    double worst = 0.0;
    for (int trial = 0; trial < o.random_trials; ++trial) {
      const std::size_t n = 6 + trial % 20;
      const int extra = trial % 3;
      std::vector<double> x(n), y(n);
      std::vector<std::vector<double>> cols(static_cast<std::size_t>(extra), std::vector<double>(n));
      for (std::size_t i = 0; i < n; ++i) {
        x[i] = z(rng);
        y[i] = 0.5 * x[i] + z(rng);
        for (auto& c : cols) {
          c[i] = z(rng);
          y[i] += 0.3 * c[i];
        }
      }
      std::vector<std::vector<double>> all{x};
      all.insert(all.end(), cols.begin(), cols.end());
      const auto r = stats::ols(x, y, cols);
      const auto ref = reference_ols(all, y);
      for (std::size_t k = 0; k < ref.coefficients.size(); ++k) {
        worst = std::max(worst, rel_err(r.coefficients[k], ref.coefficients[k]));
        worst = std::max(worst, rel_err(r.std_errors[k], ref.std_errors[k]));
      }
      worst = std::max({worst, rel_err(r.r2, ref.r2), rel_err(r.aic, ref.aic)});
    }
    ok = worst <= 1e-9;
    return "max relative error " + sci(worst);
  });

  check(suite, "paired t: a == b gives t = 0, p = 0.5", [&](bool& ok) {
    const std::vector<double> a{0.3, 0.5, 0.2};
    const auto r = stats::paired_t_one_tailed(a, a);
    ok = r.t == 0.0 && r.p_one_tailed == 0.5;
    return "t " + sci(r.t) + " p " + sci(r.p_one_tailed);
  });

  check(suite, "paired t: d = [1,1,1,-1] textbook formula", [&](bool& ok) {
    const std::vector<double> d{1, 1, 1, -1}, zero(4, 0.0);
    const double mean = 0.5;
    double ss = 0;
    for (double v : d) ss += (v - mean) * (v - mean);
    const double t = mean / (std::sqrt(ss / 3.0) / 2.0);
    const auto r = stats::paired_t_one_tailed(d, zero);
    const double p_ref = reference_t_sf(t, 3);
    ok = std::abs(r.t - t) <= 1e-12 && std::abs(r.p_one_tailed - p_ref) <= 1e-9 && r.df == 3;
    return "t " + sci(r.t) + " p " + sci(r.p_one_tailed) + " reference p " + sci(p_ref);
  });

  check(suite, "paired t: n = 1 is an argument error", [&](bool& ok) {
    try {
      stats::paired_t_one_tailed(std::vector<double>{1}, std::vector<double>{0});
      ok = false;
      return std::string("no error");
    } catch (const ArgumentError&) {
      return std::string("ArgumentError");
    }
  });

  check(suite, "paired t: random samples against the reference", [&](bool& ok) {
    std::uniform_real_distribution<double> u;
    double worst = 0.0, worst_p = 0.0;
    for (int trial = 0; trial < o.random_trials; ++trial) {
      std::vector<double> a(static_cast<std::size_t>(3 + trial % 12)), b(a.size());
      for (std::size_t i = 0; i < a.size(); ++i) {
        a[i] = u(rng);
        b[i] = u(rng);
      }
      const auto r = stats::paired_t_one_tailed(a, b);
      const double t = reference_paired_t(a, b);
      worst = std::max(worst, rel_err(r.t, t));
      if (trial % 20 == 0) worst_p = std::max(worst_p, std::abs(r.p_one_tailed - reference_t_sf(t, r.df)));
    }
    ok = worst <= 1e-9 && worst_p <= 1e-8;
    return "t " + sci(worst) + ", p " + sci(worst_p);
  });

  check(suite, "bh_fdr: documented examples", [&](bool& ok) {
    const auto adj = stats::bh_fdr(std::vector<double>{0.01, 0.04, 0.03, 0.005});
    const std::vector<double> expected{0.02, 0.04, 0.04, 0.02};
    const auto ref = reference_bh({0.01, 0.04, 0.03, 0.005});
    double worst = 0.0;
    for (std::size_t i = 0; i < 4; ++i) worst = std::max({worst, std::abs(adj[i] - expected[i]), std::abs(ref[i] - expected[i])});
    ok = worst <= 1e-12 && stats::bh_fdr(std::vector<double>{0.3}) == std::vector<double>{0.3} &&
         stats::bh_fdr(std::vector<double>{1, 1, 1}) == std::vector<double>{1, 1, 1};
    return "max abs diff " + sci(worst);
  });

  check(suite, "bh_fdr: " + std::to_string(o.permutations) + " random permutations", [&](bool& ok) {
    std::uniform_real_distribution<double> u;
    int violations = 0;
    double worst = 0.0;
    for (int trial = 0; trial < o.permutations; ++trial) {
      std::vector<double> p(static_cast<std::size_t>(1 + trial % 40));
      // every fifth trial has ties
      for (auto& v : p) v = trial % 5 == 0 ? std::round(u(rng) * 10) / 10 : u(rng) * u(rng);
      const auto adj = stats::bh_fdr(p);
      const auto ref = reference_bh(p);
      std::vector<std::size_t> perm(p.size());
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      std::vector<double> shuffled(p.size());
      for (std::size_t i = 0; i < p.size(); ++i) shuffled[i] = p[perm[i]];
      const auto adj2 = stats::bh_fdr(shuffled);
      for (std::size_t i = 0; i < p.size(); ++i) {
        worst = std::max(worst, std::abs(adj[i] - ref[i]));
        if (adj[i] < p[i] || adj[i] > 1.0) ++violations;
        if (adj2[i] != adj[perm[i]]) ++violations;
        for (std::size_t j = 0; j < p.size(); ++j) {
          if (p[i] < p[j] && adj[i] > adj[j]) ++violations;
        }
      }
    }
    ok = violations == 0 && worst <= 1e-12;
    return std::to_string(violations) + " violations, max diff from reference " + sci(worst);
  });

  check(suite, "zscore: [0,1] and [1,2,3,4]", [&](bool& ok) {
    const auto a = stats::zscore(std::vector<double>{0, 1});
    const auto b = stats::zscore(std::vector<double>{1, 2, 3, 4});
    const double sd = std::sqrt(1.25);
    const std::vector<double> expected{-1.5 / sd, -0.5 / sd, 0.5 / sd, 1.5 / sd};
    double worst = std::max(std::abs(a[0] + 1), std::abs(a[1] - 1));
    for (std::size_t i = 0; i < 4; ++i) worst = std::max(worst, std::abs(b[i] - expected[i]));
    ok = worst <= 1e-12;
    return "max abs diff " + sci(worst);
  });

  check(suite, "zscore: reference and positive affine invariance", [&](bool& ok) {
    std::normal_distribution<double> n;
    double worst_ref = 0.0, worst_affine = 0.0;
    for (int trial = 0; trial < o.random_trials; ++trial) {
      std::vector<double> v(static_cast<std::size_t>(2 + trial % 20)), w(v.size());
      const double a = std::exp(n(rng)), b = 10 * n(rng);
      for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = n(rng);
        w[i] = a * v[i] + b;
      }
      const auto zv = stats::zscore(v), zw = stats::zscore(w), ref = reference_zscore(v);
      for (std::size_t i = 0; i < v.size(); ++i) {
        worst_ref = std::max(worst_ref, std::abs(zv[i] - ref[i]));
        worst_affine = std::max(worst_affine, std::abs(zv[i] - zw[i]));
      }
    }
    ok = worst_ref <= 1e-12 && worst_affine <= 1e-9;
    return "reference " + sci(worst_ref) + ", affine " + sci(worst_affine);
  });

  check(suite, "pearson: identity, negation and covariance reference", [&](bool& ok) {
    const std::vector<double> x{1, 4, 2, 8}, neg{-1, -4, -2, -8};
    double worst = std::max(std::abs(stats::pearson(x, x) - 1), std::abs(stats::pearson(x, neg) + 1));
    std::uniform_real_distribution<double> u(-1, 1);
    for (int trial = 0; trial < o.random_trials; ++trial) {
      std::vector<double> a(static_cast<std::size_t>(3 + trial % 10)), b(a.size());
      for (std::size_t i = 0; i < a.size(); ++i) {
        a[i] = u(rng);
        b[i] = u(rng) + 0.5 * a[i];
      }
      worst = std::max(worst, std::abs(stats::pearson(a, b) - reference_pearson(a, b)));
    }
    ok = worst <= 1e-12;
    return "max abs diff " + sci(worst);
  });

  suite.seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return suite;
}

}  // namespace headprobe::oracle
