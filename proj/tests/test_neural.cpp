#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>

#include "amod/autodiff.hpp"
#include "amod/dirichlet.hpp"
#include "amod/env.hpp"
#include "amod/nets.hpp"
#include "amod/optim.hpp"
#include "amod/rng.hpp"
#include "amod/special.hpp"

using namespace amod;

namespace {

constexpr double kGradTol = 1e-4;

Mat rand_mat(Rng& rng, int r, int c, double lo = -1.0, double hi = 1.0) {
  Mat m(r, c);
  for (double& x : m.v) x = lo + (hi - lo) * rng.uniform();
  return m;
}

// Values with |x| >= margin, both signs: safe distance from ReLU/min kinks.
Mat rand_mat_off_zero(Rng& rng, int r, int c, double margin = 0.05) {
  Mat m(r, c);
  for (double& x : m.v) {
    const double mag = margin + (1.0 - margin) * rng.uniform();
    x = rng.uniform() < 0.5 ? -mag : mag;
  }
  return m;
}

// Analytic gradient vs central differences on random parameter coordinates.
// Retries with a smaller step before flagging a probe, so a rare near-kink
// draw does not produce a spurious failure.
double fd_max_err(const std::vector<ParamTensor*>& params,
                  const std::function<NodeId(Tape&)>& build, Rng& rng,
                  int probes) {
  zero_grads(params);
  {
    Tape t;
    NodeId loss = build(t);
    REQUIRE(t.value(loss).rows == 1);
    REQUIRE(t.value(loss).cols == 1);
    t.backward(loss);
  }
  double worst = 0.0;
  for (int i = 0; i < probes; ++i) {
    ParamTensor* p = params[rng.uniform_below(params.size())];
    const std::size_t k = rng.uniform_below(p->value.size());
    const double x0 = p->value.v[k];
    const double analytic = p->grad.v[k];
    double best = std::numeric_limits<double>::infinity();
    for (double h : {1e-5, 1e-6}) {
      double fp, fm;
      p->value.v[k] = x0 + h;
      {
        Tape t(false);
        fp = t.value(build(t)).v[0];
      }
      p->value.v[k] = x0 - h;
      {
        Tape t(false);
        fm = t.value(build(t)).v[0];
      }
      p->value.v[k] = x0;
      const double fd = (fp - fm) / (2.0 * h);
      const double err = std::abs(analytic - fd) /
                         std::max({1.0, std::abs(analytic), std::abs(fd)});
      best = std::min(best, err);
      if (best < 1e-7) break;
    }
    worst = std::max(worst, best);
  }
  return worst;
}

// Weighted scalarization so every output entry gets a distinct upstream
// gradient instead of the uniform one sum() would give.
NodeId weighted_sum(Tape& t, NodeId y, const Mat& weights) {
  return t.sum(t.mul(y, t.input(weights)));
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("matmul and transpose free functions") {
  Mat a(2, 3);
  a.v = {1, 2, 3, 4, 5, 6};
  Mat b(3, 2);
  b.v = {7, 8, 9, 10, 11, 12};
  Mat c = matmul(a, b);
  CHECK(c.rows == 2);
  CHECK(c.cols == 2);
  CHECK(c(0, 0) == 58);
  CHECK(c(0, 1) == 64);
  CHECK(c(1, 0) == 139);
  CHECK(c(1, 1) == 154);
  Mat at = transpose(a);
  CHECK(at.rows == 3);
  CHECK(at(2, 1) == 6);
  CHECK_THROWS_AS(matmul(a, a), Error);
}

TEST_CASE("elementwise binary ops match finite differences") {
  Rng rng(101);
  ParamTensor a{"a", rand_mat(rng, 3, 4)};
  ParamTensor b{"b", rand_mat(rng, 3, 4)};
  const Mat w = rand_mat(rng, 3, 4);

  CHECK(fd_max_err({&a, &b},
                   [&](Tape& t) {
                     return weighted_sum(t, t.add(t.param(a), t.param(b)), w);
                   },
                   rng, 10) < kGradTol);
  CHECK(fd_max_err({&a, &b},
                   [&](Tape& t) {
                     return weighted_sum(t, t.sub(t.param(a), t.param(b)), w);
                   },
                   rng, 10) < kGradTol);
  CHECK(fd_max_err({&a, &b},
                   [&](Tape& t) {
                     return weighted_sum(t, t.mul(t.param(a), t.param(b)), w);
                   },
                   rng, 10) < kGradTol);
}

TEST_CASE("scale and add_const match finite differences") {
  Rng rng(102);
  ParamTensor a{"a", rand_mat(rng, 2, 5)};
  const Mat w = rand_mat(rng, 2, 5);
  CHECK(fd_max_err({&a},
                   [&](Tape& t) {
                     return weighted_sum(t, t.scale(t.param(a), -1.7), w);
                   },
                   rng, 8) < kGradTol);
  CHECK(fd_max_err({&a},
                   [&](Tape& t) {
                     return weighted_sum(t, t.add_const(t.param(a), 0.37), w);
                   },
                   rng, 8) < kGradTol);
}

TEST_CASE("matmul gradients match finite differences") {
  Rng rng(103);
  ParamTensor a{"a", rand_mat(rng, 3, 4)};
  ParamTensor b{"b", rand_mat(rng, 4, 2)};
  const Mat w = rand_mat(rng, 3, 2);
  CHECK(fd_max_err({&a, &b},
                   [&](Tape& t) {
                     return weighted_sum(t, t.matmul(t.param(a), t.param(b)), w);
                   },
                   rng, 16) < kGradTol);
}

TEST_CASE("broadcast ops match finite differences") {
  Rng rng(104);
  ParamTensor a{"a", rand_mat(rng, 3, 4)};
  ParamTensor row{"row", rand_mat(rng, 1, 4)};
  ParamTensor col{"col", rand_mat(rng, 3, 1)};
  const Mat w = rand_mat(rng, 3, 4);
  CHECK(fd_max_err({&a, &row},
                   [&](Tape& t) {
                     return weighted_sum(
                         t, t.add_row_broadcast(t.param(a), t.param(row)), w);
                   },
                   rng, 12) < kGradTol);
  CHECK(fd_max_err({&a, &col},
                   [&](Tape& t) {
                     return weighted_sum(
                         t, t.mul_col_broadcast(t.param(a), t.param(col)), w);
                   },
                   rng, 12) < kGradTol);
}

TEST_CASE("unary nonlinearities match finite differences") {
  Rng rng(105);
  const Mat w = rand_mat(rng, 3, 4);

  ParamTensor r{"r", rand_mat_off_zero(rng, 3, 4)};
  CHECK(fd_max_err(
            {&r},
            [&](Tape& t) { return weighted_sum(t, t.relu(t.param(r)), w); },
            rng, 12) < kGradTol);

  ParamTensor s{"s", rand_mat(rng, 3, 4, -4.0, 4.0)};
  s.value(0, 0) = 35.0;  // exercises the overflow-safe branch
  s.value(0, 1) = -35.0;
  CHECK(fd_max_err(
            {&s},
            [&](Tape& t) { return weighted_sum(t, t.softplus(t.param(s)), w); },
            rng, 12) < kGradTol);

  ParamTensor lg{"lg", rand_mat(rng, 3, 4, 0.2, 3.0)};
  CHECK(fd_max_err(
            {&lg},
            [&](Tape& t) { return weighted_sum(t, t.log(t.param(lg)), w); },
            rng, 10) < kGradTol);
  CHECK(fd_max_err(
            {&lg},
            [&](Tape& t) { return weighted_sum(t, t.lgamma(t.param(lg)), w); },
            rng, 10) < kGradTol);

  ParamTensor e{"e", rand_mat(rng, 3, 4, -2.0, 2.0)};
  CHECK(fd_max_err(
            {&e},
            [&](Tape& t) { return weighted_sum(t, t.exp(t.param(e)), w); },
            rng, 10) < kGradTol);
}

TEST_CASE("reductions match finite differences") {
  Rng rng(106);
  ParamTensor a{"a", rand_mat(rng, 3, 5)};
  CHECK(fd_max_err({&a}, [&](Tape& t) { return t.sum(t.param(a)); }, rng, 8) <
        kGradTol);
  CHECK(fd_max_err({&a}, [&](Tape& t) { return t.mean(t.param(a)); }, rng, 8) <
        kGradTol);
  const Mat w = rand_mat(rng, 3, 1);
  CHECK(fd_max_err(
            {&a},
            [&](Tape& t) { return weighted_sum(t, t.row_sum(t.param(a)), w); },
            rng, 8) < kGradTol);
}

TEST_CASE("shape ops match finite differences") {
  Rng rng(107);
  ParamTensor a{"a", rand_mat(rng, 3, 2)};
  ParamTensor b{"b", rand_mat(rng, 3, 3)};
  const Mat wc = rand_mat(rng, 3, 5);
  CHECK(fd_max_err({&a, &b},
                   [&](Tape& t) {
                     return weighted_sum(
                         t, t.col_concat(t.param(a), t.param(b)), wc);
                   },
                   rng, 12) < kGradTol);

  ParamTensor c{"c", rand_mat(rng, 3, 5)};
  const Mat ws = rand_mat(rng, 3, 3);
  CHECK(fd_max_err({&c},
                   [&](Tape& t) {
                     return weighted_sum(t, t.slice_cols(t.param(c), 1, 4), ws);
                   },
                   rng, 10) < kGradTol);

  const Mat wr = rand_mat(rng, 2, 6);
  ParamTensor d{"d", rand_mat(rng, 3, 4)};
  CHECK(fd_max_err({&d},
                   [&](Tape& t) {
                     return weighted_sum(t, t.reshape(t.param(d), 2, 6), wr);
                   },
                   rng, 10) < kGradTol);
}

TEST_CASE("min_elem and max_with match finite differences away from ties") {
  Rng rng(108);
  ParamTensor a{"a", rand_mat(rng, 3, 4)};
  ParamTensor b{"b", Mat(3, 4)};
  for (std::size_t k = 0; k < b.value.size(); ++k) {
    const double gap = 0.01 + 0.99 * rng.uniform();
    b.value.v[k] = a.value.v[k] + (rng.uniform() < 0.5 ? -gap : gap);
  }
  const Mat w = rand_mat(rng, 3, 4);
  CHECK(fd_max_err({&a, &b},
                   [&](Tape& t) {
                     return weighted_sum(t, t.min_elem(t.param(a), t.param(b)), w);
                   },
                   rng, 14) < kGradTol);

  Mat floor_mat(3, 4);
  for (std::size_t k = 0; k < floor_mat.size(); ++k) {
    const double gap = 0.01 + 0.99 * rng.uniform();
    floor_mat.v[k] = a.value.v[k] + (rng.uniform() < 0.5 ? -gap : gap);
  }
  CHECK(fd_max_err({&a},
                   [&](Tape& t) {
                     return weighted_sum(t, t.max_with(t.param(a), floor_mat), w);
                   },
                   rng, 14) < kGradTol);
}

TEST_CASE("min_elem ties route the gradient to the first argument") {
  ParamTensor a{"a", Mat(1, 2, 2.0)};
  ParamTensor b{"b", Mat(1, 2, 2.0)};
  Tape t;
  t.backward(t.sum(t.min_elem(t.param(a), t.param(b))));
  CHECK(a.grad.v[0] == 1.0);
  CHECK(a.grad.v[1] == 1.0);
  CHECK(b.grad.v[0] == 0.0);
  CHECK(b.grad.v[1] == 0.0);
}

TEST_CASE("max_with keeps the gradient at equality") {
  ParamTensor a{"a", Mat(1, 3)};
  a.value.v = {1.0, 2.0, 3.0};
  Mat floor_mat(1, 3);
  floor_mat.v = {2.0, 2.0, 2.0};  // below, equal, above
  Tape t;
  t.backward(t.sum(t.max_with(t.param(a), floor_mat)));
  CHECK(a.grad.v[0] == 0.0);
  CHECK(a.grad.v[1] == 1.0);
  CHECK(a.grad.v[2] == 1.0);
}

TEST_CASE("row_logsumexp is stable and matches finite differences") {
  Rng rng(109);
  ParamTensor a{"a", rand_mat(rng, 3, 5, -3.0, 3.0)};
  // A row of huge magnitudes must not overflow.
  for (int j = 0; j < 5; ++j) a.value(2, j) = 700.0 + j;
  {
    Tape t(false);
    const Mat& out = t.value(t.row_logsumexp(t.input(a.value)));
    CHECK(out.rows == 3);
    CHECK(out.cols == 1);
    CHECK(std::isfinite(out.v[2]));
    CHECK(out.v[2] == doctest::Approx(704.0 + std::log((std::exp(-4.0) + std::exp(-3.0) + std::exp(-2.0) + std::exp(-1.0) + 1.0))).epsilon(1e-12));
  }
  const Mat w = rand_mat(rng, 3, 1);
  CHECK(fd_max_err({&a},
                   [&](Tape& t) {
                     return weighted_sum(t, t.row_logsumexp(t.param(a)), w);
                   },
                   rng, 12) < kGradTol);
}

TEST_CASE("block ops match finite differences") {
  Rng rng(110);
  ParamTensor x{"x", rand_mat(rng, 6, 4)};  // two graphs of three nodes
  Mat adj = rand_mat(rng, 3, 3, 0.0, 1.0);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < i; ++j) adj(i, j) = adj(j, i);  // symmetric
  const Mat w = rand_mat(rng, 6, 4);
  CHECK(fd_max_err({&x},
                   [&](Tape& t) {
                     return weighted_sum(t, t.block_adj_mul(t.param(x), adj), w);
                   },
                   rng, 14) < kGradTol);
  const Mat wb = rand_mat(rng, 2, 4);
  CHECK(fd_max_err({&x},
                   [&](Tape& t) {
                     return weighted_sum(t, t.block_row_sum(t.param(x), 3), wb);
                   },
                   rng, 12) < kGradTol);

  // Block application equals per-block dense matmul.
  Tape t(false);
  const Mat& out = t.value(t.block_adj_mul(t.input(x.value), adj));
  Mat top(3, 4), bot(3, 4);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j) {
      top(i, j) = x.value(i, j);
      bot(i, j) = x.value(3 + i, j);
    }
  Mat ref_top = matmul(adj, top), ref_bot = matmul(adj, bot);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j) {
      CHECK(out(i, j) == doctest::Approx(ref_top(i, j)).epsilon(1e-12));
      CHECK(out(3 + i, j) == doctest::Approx(ref_bot(i, j)).epsilon(1e-12));
    }
}

TEST_CASE("a composed expression differentiates correctly end to end") {
  Rng rng(111);
  ParamTensor a{"a", rand_mat(rng, 4, 3, 0.3, 2.0)};
  ParamTensor b{"b", rand_mat(rng, 3, 3)};
  const Mat w = rand_mat(rng, 4, 1);
  auto build = [&](Tape& t) {
    NodeId z = t.matmul(t.log(t.param(a)), t.param(b));
    z = t.softplus(z);
    z = t.row_logsumexp(z);
    return weighted_sum(t, z, w);
  };
  CHECK(fd_max_err({&a, &b}, build, rng, 30) < kGradTol);
}

TEST_CASE("backward accumulates until zero_grad") {
  ParamTensor w{"w", Mat(1, 3)};
  w.value.v = {1.0, 2.0, 3.0};
  auto run = [&] {
    Tape t;
    t.backward(t.sum(t.mul(t.param(w), t.param(w))));
  };
  w.zero_grad();
  run();
  CHECK(w.grad.v[0] == 2.0);
  CHECK(w.grad.v[1] == 4.0);
  CHECK(w.grad.v[2] == 6.0);
  run();  // accumulates on top
  CHECK(w.grad.v[0] == 4.0);
  CHECK(w.grad.v[1] == 8.0);
  CHECK(w.grad.v[2] == 12.0);
  w.zero_grad();
  CHECK(w.grad.v[0] == 0.0);
}

TEST_CASE("a loss that cancels its parameter yields exactly zero gradient") {
  ParamTensor w{"w", Mat(2, 2, 1.5)};
  w.zero_grad();
  Tape t;
  NodeId p = t.param(w);
  t.backward(t.sum(t.sub(p, p)));
  for (double g : w.grad.v) CHECK(g == 0.0);
}

TEST_CASE("backward rejects non-scalar losses") {
  ParamTensor w{"w", Mat(2, 2, 1.0)};
  Tape t;
  NodeId p = t.param(w);
  CHECK_THROWS_AS(t.backward(p), Error);
}

TEST_CASE("digamma reference values") {
  // digamma(1) = -EulerGamma.
  CHECK(digamma(1.0) == doctest::Approx(-0.5772156649015329).epsilon(1e-10));
  CHECK(digamma(0.5) == doctest::Approx(-1.9635100260214235).epsilon(1e-10));
  CHECK(digamma(2.0) == doctest::Approx(0.4227843350984671).epsilon(1e-10));
  CHECK(digamma(10.0) == doctest::Approx(2.2517525890667211).epsilon(1e-10));

  // Recurrence digamma(x+1) = digamma(x) + 1/x.
  Rng rng(112);
  for (int i = 0; i < 50; ++i) {
    const double x = 0.1 + 20.0 * rng.uniform();
    CHECK(digamma(x + 1.0) == doctest::Approx(digamma(x) + 1.0 / x).epsilon(1e-11));
  }

  // digamma is the derivative of lgamma.
  for (int i = 0; i < 50; ++i) {
    const double x = 0.2 + 8.0 * rng.uniform();
    const double h = 1e-6 * std::max(1.0, x);
    const double fd = (std::lgamma(x + h) - std::lgamma(x - h)) / (2.0 * h);
    CHECK(digamma(x) == doctest::Approx(fd).epsilon(1e-7));
  }
}

TEST_CASE("dirichlet mean and closed-form log densities") {
  CHECK(dirichlet_mean({{3.0, 1.0}}) == std::vector<double>{0.75, 0.25});

  // Uniform concentration on the 3-simplex: density Gamma(3) = 2 everywhere.
  DirichletDist uniform3{{1.0, 1.0, 1.0}};
  CHECK(dirichlet_log_prob(uniform3, {0.2, 0.3, 0.5}) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-9));
  CHECK(dirichlet_log_prob(uniform3, {1.0 / 3, 1.0 / 3, 1.0 / 3}) ==
        doctest::Approx(0.6931471805599453).epsilon(1e-9));

  DirichletDist sym2{{2.0, 2.0}};
  CHECK(dirichlet_log_prob(sym2, {0.5, 0.5}) ==
        doctest::Approx(std::log(6.0 * 0.25)).epsilon(1e-9));
  CHECK(dirichlet_log_prob(sym2, {0.5, 0.5}) ==
        doctest::Approx(0.4054651081081644).epsilon(1e-9));

  CHECK_THROWS_AS(dirichlet_log_prob(uniform3, {0.5, 0.5}), DimensionMismatch);
}

TEST_CASE("clamp_simplex_interior handles boundary points") {
  auto x = clamp_simplex_interior({1.0, 0.0, 0.0});
  double sum = 0.0;
  for (double v : x) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
    sum += v;
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  // Interior points stay put.
  auto y = clamp_simplex_interior({0.25, 0.75});
  CHECK(y[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(y[1] == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("batched dirichlet log density agrees with the scalar form") {
  Rng rng(113);
  const int batch = 4, n = 3;
  Mat conc(batch, n), xs(batch, n);
  for (int b = 0; b < batch; ++b) {
    std::vector<double> c(n);
    for (int j = 0; j < n; ++j) c[j] = 0.5 + 2.5 * rng.uniform();
    auto x = clamp_simplex_interior(rng.dirichlet({1.0, 1.0, 1.0}));
    for (int j = 0; j < n; ++j) {
      conc(b, j) = c[j];
      xs(b, j) = x[j];
    }
  }
  Tape t(false);
  const Mat& lp = t.value(
      dirichlet_log_prob_node(t, t.input(conc), t.input(xs)));
  CHECK(lp.rows == batch);
  CHECK(lp.cols == 1);
  for (int b = 0; b < batch; ++b) {
    std::vector<double> c(n), x(n);
    for (int j = 0; j < n; ++j) {
      c[j] = conc(b, j);
      x[j] = xs(b, j);
    }
    CHECK(lp.v[b] == doctest::Approx(dirichlet_log_prob({c}, x)).epsilon(1e-12));
  }
}

TEST_CASE("batched dirichlet log density gradients match finite differences") {
  Rng rng(114);
  const int batch = 3, n = 4;
  ParamTensor conc{"conc", rand_mat(rng, batch, n, 0.5, 3.0)};
  Mat xs(batch, n);
  for (int b = 0; b < batch; ++b) {
    auto x = clamp_simplex_interior(rng.dirichlet(std::vector<double>(n, 1.0)));
    for (int j = 0; j < n; ++j) xs(b, j) = x[j];
  }
  const Mat w = rand_mat(rng, batch, 1);
  CHECK(fd_max_err({&conc},
                   [&](Tape& t) {
                     return weighted_sum(
                         t, dirichlet_log_prob_node(t, t.param(conc), t.input(xs)), w);
                   },
                   rng, 24) < kGradTol);
}

TEST_CASE("dirichlet sampler moments match beta marginals") {
  Rng rng(115);
  const std::vector<double> c = {2.0, 3.0, 5.0};
  const double c0 = 10.0;
  const int n = 100000;
  std::vector<double> mean(3, 0.0), m2(3, 0.0);
  for (int i = 0; i < n; ++i) {
    auto x = rng.dirichlet(c);
    for (int j = 0; j < 3; ++j) {
      mean[j] += x[j];
      m2[j] += x[j] * x[j];
    }
  }
  for (int j = 0; j < 3; ++j) {
    mean[j] /= n;
    m2[j] /= n;
    const double var = m2[j] - mean[j] * mean[j];
    // Marginal is Beta(c_j, c0 - c_j): raw moments give exact 3-sigma bands.
    const double alpha = c[j], beta = c0 - c[j];
    const double mu = alpha / c0;
    auto raw = [&](int k) {
      double r = 1.0;
      for (int t = 0; t < k; ++t) r *= (alpha + t) / (c0 + t);
      return r;
    };
    const double mu2 = raw(2) - mu * mu;
    const double mu4 = raw(4) - 4 * mu * raw(3) + 6 * mu * mu * raw(2) - 3 * mu * mu * mu * mu;
    CHECK(std::abs(mean[j] - mu) < 3.0 * std::sqrt(mu2 / n));
    CHECK(std::abs(var - mu2) < 3.0 * std::sqrt((mu4 - mu2 * mu2) / n));
  }
}

TEST_CASE("adam hand-checked steps") {
  SUBCASE("zero gradient leaves parameters untouched") {
    ParamTensor w{"w", Mat(2, 2, 1.25)};
    w.zero_grad();
    adam_step({&w}, AdamConfig{});
    for (double v : w.value.v) CHECK(v == 1.25);
  }

  SUBCASE("first step moves by almost exactly -lr") {
    ParamTensor w{"w", Mat(1, 1, 0.0)};
    w.grad.v[0] = 1.0;
    AdamConfig cfg;
    cfg.lr = 0.1;
    adam_step({&w}, cfg);
    // Bias correction makes m_hat = v_hat = 1, so the step is lr/(1+eps).
    CHECK(w.value.v[0] == doctest::Approx(-0.1).epsilon(1e-6));
  }

  SUBCASE("converges on a quadratic") {
    ParamTensor w{"w", Mat(1, 1, 0.0)};
    AdamConfig cfg;
    cfg.lr = 1e-2;
    for (int i = 0; i < 5000; ++i) {
      w.zero_grad();
      w.grad.v[0] = 2.0 * (w.value.v[0] - 3.0);
      adam_step({&w}, cfg);
    }
    CHECK(std::abs(w.value.v[0] - 3.0) < 1e-3);
  }

  SUBCASE("rejects non-finite gradients by name") {
    ParamTensor w{"theta.fc1.W", Mat(1, 1, 0.0)};
    w.grad.v[0] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_WITH_AS(adam_step({&w}, AdamConfig{}),
                         doctest::Contains("theta.fc1.W"), NonFiniteGradient);
  }
}

TEST_CASE("polyak update and copy are exact") {
  ParamTensor tgt{"t", Mat(2, 2)};
  ParamTensor src{"s", Mat(2, 2)};
  tgt.value.v = {1.0, 2.0, 3.0, 4.0};
  src.value.v = {5.0, 6.0, 7.0, 8.0};
  polyak_update({&tgt}, {&src}, 0.005);
  CHECK(tgt.value.v[0] == doctest::Approx(0.995 * 1.0 + 0.005 * 5.0).epsilon(1e-15));
  CHECK(tgt.value.v[3] == doctest::Approx(0.995 * 4.0 + 0.005 * 8.0).epsilon(1e-15));
  polyak_update({&tgt}, {&src}, 1.0);
  CHECK(tgt.value.v == src.value.v);
  tgt.value.v = {0, 0, 0, 0};
  copy_params({&tgt}, {&src});
  CHECK(tgt.value.v == src.value.v);
  ParamTensor bad{"b", Mat(1, 4)};
  CHECK_THROWS_AS(polyak_update({&bad}, {&src}, 0.5), Error);
}

TEST_CASE("actor produces positive concentrations above the floor") {
  Rng rng(116);
  ActorNet actor("actor", 6, 8, rng);
  Mat x = rand_mat(rng, 4, 6);
  Mat adj(4, 4, 0.25);
  Tape t(false);
  const Mat& conc = t.value(actor.concentration(t, t.input(x), adj, 4));
  CHECK(conc.rows == 1);
  CHECK(conc.cols == 4);
  for (double c : conc.v) CHECK(c > kConcentrationFloor);
}

TEST_CASE("zeroed output layer gives softplus(0) plus the floor") {
  Rng rng(117);
  ActorNet actor("actor", 5, 7, rng);
  auto params = actor.parameters();
  for (ParamTensor* p : params)
    if (p->name == "actor.fc3.W" || p->name == "actor.fc3.b")
      std::fill(p->value.v.begin(), p->value.v.end(), 0.0);
  Mat x = rand_mat(rng, 3, 5);
  Mat adj(3, 3, 1.0 / 3.0);
  Tape t(false);
  const Mat& conc = t.value(actor.concentration(t, t.input(x), adj, 3));
  for (double c : conc.v)
    CHECK(c == doctest::Approx(std::log(2.0) + kConcentrationFloor).epsilon(1e-12));
}

TEST_CASE("actor is permutation equivariant") {
  Rng rng(118);
  const int n = 5, f = 6;
  ActorNet actor("actor", f, 9, rng);
  Mat x = rand_mat(rng, n, f);
  Mat adj = rand_mat(rng, n, n, 0.0, 1.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < i; ++j) adj(i, j) = adj(j, i);

  const std::vector<int> perm = {3, 0, 4, 1, 2};
  Mat xp(n, f);
  Mat adjp(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < f; ++j) xp(i, j) = x(perm[i], j);
    for (int j = 0; j < n; ++j) adjp(i, j) = adj(perm[i], perm[j]);
  }

  Tape t(false);
  const Mat c0 = t.value(actor.concentration(t, t.input(x), adj, n));
  const Mat c1 = t.value(actor.concentration(t, t.input(xp), adjp, n));
  for (int i = 0; i < n; ++i)
    CHECK(c1.v[i] == doctest::Approx(c0.v[perm[i]]).epsilon(1e-12));
}

TEST_CASE("actor gradients match finite differences") {
  Rng rng(119);
  const int n = 3, f = 5, batch = 2;
  ActorNet actor("actor", f, 6, rng);
  Mat x = rand_mat(rng, batch * n, f);
  Mat adj(n, n, 1.0 / n);
  const Mat w = rand_mat(rng, batch, n);
  CHECK(fd_max_err(actor.parameters(),
                   [&](Tape& t) {
                     return weighted_sum(
                         t, actor.concentration(t, t.input(x), adj, n), w);
                   },
                   rng, 40) < kGradTol);
}

TEST_CASE("actor flags non-finite concentrations") {
  Rng rng(120);
  ActorNet actor("actor", 4, 5, rng);
  for (ParamTensor* p : actor.parameters())
    if (p->name == "actor.fc3.b")
      p->value.v[0] = std::numeric_limits<double>::quiet_NaN();
  Observation obs;
  obs.node_features = Grid2<double>(3, 4, 0.5);
  obs.adjacency = Grid2<double>(3, 3, 1.0 / 3.0);
  CHECK_THROWS_AS(actor.distribution(obs), NonFiniteOutput);
}

TEST_CASE("select_action modes") {
  Rng rng(121);
  ActorNet actor("actor", 4, 5, rng);
  Observation obs;
  obs.node_features = Grid2<double>(3, 4, 0.3);
  obs.adjacency = Grid2<double>(3, 3, 1.0 / 3.0);
  Rng action_rng(7);
  auto mean = select_action(actor, obs, ActionMode::Mean, action_rng);
  auto mean2 = select_action(actor, obs, ActionMode::Mean, action_rng);
  CHECK(mean == mean2);  // mean ignores rng state
  double s = 0.0;
  for (double v : mean) s += v;
  CHECK(s == doctest::Approx(1.0).epsilon(1e-12));

  auto sampled = select_action(actor, obs, ActionMode::Sample, action_rng);
  s = 0.0;
  for (double v : sampled) {
    CHECK(v >= 0.0);
    s += v;
  }
  CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("critic variant names round-trip and reject unknowns") {
  for (auto v : {CriticVariant::Critic1, CriticVariant::Critic2,
                 CriticVariant::Critic3, CriticVariant::Critic4,
                 CriticVariant::Critic1v2, CriticVariant::Critic3v2})
    CHECK(parse_critic_variant(critic_variant_name(v)) == v);
  CHECK_THROWS_AS(parse_critic_variant("critic9"), UnknownVariant);
}

TEST_CASE("every critic variant matches finite differences") {
  const int n = 3, f = 5, h = 6, batch = 2;
  for (auto v : {CriticVariant::Critic1, CriticVariant::Critic2,
                 CriticVariant::Critic3, CriticVariant::Critic4,
                 CriticVariant::Critic1v2, CriticVariant::Critic3v2}) {
    CAPTURE(critic_variant_name(v));
    Rng rng(130 + static_cast<int>(v));
    CriticNet critic("q", f, h, n, v, rng);
    Mat x = rand_mat(rng, batch * n, f);
    Mat adj(n, n, 1.0 / n);
    Mat a = rand_mat(rng, batch * n, 1, 0.05, 1.0);
    const Mat w = rand_mat(rng, batch, 1);
    const double err =
        fd_max_err(critic.parameters(),
                   [&](Tape& t) {
                     return weighted_sum(
                         t,
                         critic.q_value(t, t.input(x), t.input(a), adj, n), w);
                   },
                   rng, 40);
    CHECK(err < kGradTol);
  }
}

TEST_CASE("critic gradients flow into the action") {
  // The actor update needs dQ/da, so probe the action as a parameter too.
  const int n = 3, f = 4, h = 5;
  for (auto v : {CriticVariant::Critic1, CriticVariant::Critic2,
                 CriticVariant::Critic3, CriticVariant::Critic4,
                 CriticVariant::Critic1v2, CriticVariant::Critic3v2}) {
    CAPTURE(critic_variant_name(v));
    Rng rng(140 + static_cast<int>(v));
    CriticNet critic("q", f, h, n, v, rng);
    Mat x = rand_mat(rng, n, f);
    Mat adj(n, n, 1.0 / n);
    ParamTensor act{"a", rand_mat(rng, n, 1, 0.05, 1.0)};
    const double err = fd_max_err(
        {&act},
        [&](Tape& t) {
          return critic.q_value(t, t.input(x), t.param(act), adj, n);
        },
        rng, 9);
    CHECK(err < kGradTol);
  }
}

TEST_CASE("graph critics are invariant to node permutations, critic2 is not") {
  Rng base_rng(150);
  const int n = 4, f = 5, h = 6;
  Mat x = rand_mat(base_rng, n, f);
  Mat adj(n, n, 1.0 / n);
  Mat a = rand_mat(base_rng, n, 1, 0.05, 1.0);
  const std::vector<int> perm = {2, 0, 3, 1};
  Mat xp(n, f), ap(n, 1);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < f; ++j) xp(i, j) = x(perm[i], j);
    ap(i, 0) = a(perm[i], 0);
  }

  auto q_of = [&](CriticNet& critic, const Mat& xs, const Mat& as) {
    Tape t(false);
    return t.value(critic.q_value(t, t.input(xs), t.input(as), adj, n)).v[0];
  };

  for (auto v : {CriticVariant::Critic1, CriticVariant::Critic3,
                 CriticVariant::Critic4, CriticVariant::Critic1v2,
                 CriticVariant::Critic3v2}) {
    CAPTURE(critic_variant_name(v));
    Rng rng(160 + static_cast<int>(v));
    CriticNet critic("q", f, h, n, v, rng);
    CHECK(q_of(critic, x, a) == doctest::Approx(q_of(critic, xp, ap)).epsilon(1e-10));
  }

  // Critic2 consumes the raw action vector after pooling, so reordering
  // stations changes its output.
  Rng rng(170);
  CriticNet c2("q", f, h, n, CriticVariant::Critic2, rng);
  CHECK(std::abs(q_of(c2, x, a) - q_of(c2, xp, ap)) > 1e-6);
}

TEST_CASE("encode-once fast path equals the full forward pass") {
  Rng rng(180);
  const int n = 3, f = 5, h = 6, batch = 2;
  for (auto v : {CriticVariant::Critic1, CriticVariant::Critic2,
                 CriticVariant::Critic3, CriticVariant::Critic4,
                 CriticVariant::Critic1v2, CriticVariant::Critic3v2}) {
    CAPTURE(critic_variant_name(v));
    CriticNet critic("q", f, h, n, v, rng);
    Mat x = rand_mat(rng, batch * n, f);
    Mat adj(n, n, 1.0 / n);
    Mat a1 = rand_mat(rng, batch * n, 1, 0.05, 1.0);
    Mat a2 = rand_mat(rng, batch * n, 1, 0.05, 1.0);
    Tape t(false);
    NodeId xid = t.input(x);
    auto enc = critic.encode(t, xid, adj, n);
    const Mat q1 = t.value(critic.q_from_encoding(t, enc, t.input(a1)));
    const Mat q2 = t.value(critic.q_from_encoding(t, enc, t.input(a2)));
    Tape t2(false);
    const Mat r1 = t2.value(critic.q_value(t2, t2.input(x), t2.input(a1), adj, n));
    Tape t3(false);
    const Mat r2 = t3.value(critic.q_value(t3, t3.input(x), t3.input(a2), adj, n));
    CHECK(q1.v == r1.v);
    CHECK(q2.v == r2.v);
    CHECK(q1.rows == batch);
  }
}

TEST_CASE("stacked batches reproduce per-observation outputs") {
  Rng rng(190);
  const int f = 6;
  SynthSpec spec;
  spec.n_stations = 3;
  Scenario sc = make_synthetic_scenario(spec, 99);
  AmodEnv env(sc);
  Observation o1 = env.reset(1);
  AmodEnv env2(sc);
  Observation o2 = env2.reset(2);
  REQUIRE(o1.node_features.cols() == o2.node_features.cols());

  ActorNet actor("actor", o1.node_features.cols(), 8, rng);
  Mat stacked = stack_features({&o1, &o2});
  Mat adj = mat_of_grid(o1.adjacency);
  Tape t(false);
  const Mat both = t.value(actor.concentration(t, t.input(stacked), adj, 3));
  const Mat first = t.value(
      actor.concentration(t, t.input(features_of(o1)), adj, 3));
  const Mat second = t.value(
      actor.concentration(t, t.input(features_of(o2)), adj, 3));
  CHECK(both.rows == 2);
  for (int j = 0; j < 3; ++j) {
    CHECK(both(0, j) == doctest::Approx(first(0, j)).epsilon(1e-12));
    CHECK(both(1, j) == doctest::Approx(second(0, j)).epsilon(1e-12));
  }
  (void)f;
}

TEST_CASE("stack_features validates its input") {
  CHECK_THROWS_AS(stack_features({}), EmptyBatch);
  Observation a, b;
  a.node_features = Grid2<double>(3, 4, 0.0);
  b.node_features = Grid2<double>(3, 5, 0.0);
  CHECK_THROWS_AS(stack_features({&a, &b}), DimensionMismatch);
}

TEST_CASE("checkpoint round-trips bit-exactly") {
  Rng rng(200);
  ActorNet actor("actor", 5, 7, rng);
  const auto path = temp_file("amod_test_ckpt_roundtrip.json");
  save_params(const_view(actor.parameters()), path.string());

  Rng rng2(999);
  ActorNet other("actor", 5, 7, rng2);
  CHECK(params_checksum(const_view(other.parameters())) !=
        params_checksum(const_view(actor.parameters())));
  load_params(other.parameters(), path.string());
  CHECK(params_checksum(const_view(other.parameters())) ==
        params_checksum(const_view(actor.parameters())));
  auto pa = actor.parameters();
  auto pb = other.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->value.v == pb[i]->value.v);
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint error paths") {
  Rng rng(201);
  ActorNet actor("actor", 4, 5, rng);

  CHECK_THROWS_AS(load_params(actor.parameters(), "/nonexistent/ckpt.json"),
                  CheckpointMissing);

  const auto garbage = temp_file("amod_test_ckpt_garbage.json");
  {
    std::ofstream out(garbage);
    out << "not json at all {";
  }
  CHECK_THROWS_AS(load_params(actor.parameters(), garbage.string()), ParseError);
  std::filesystem::remove(garbage);

  const auto wrong_version = temp_file("amod_test_ckpt_version.json");
  {
    std::ofstream out(wrong_version);
    out << R"({"format":"amod-params","version":2,"params":{}})";
  }
  CHECK_THROWS_AS(load_params(actor.parameters(), wrong_version.string()),
                  VersionMismatch);
  std::filesystem::remove(wrong_version);

  // Shape mismatch: same layer names, different hidden width.
  const auto narrow = temp_file("amod_test_ckpt_narrow.json");
  Rng rng2(202);
  ActorNet small("actor", 4, 3, rng2);
  save_params(const_view(small.parameters()), narrow.string());
  CHECK_THROWS_AS(load_params(actor.parameters(), narrow.string()), ShapeMismatch);
  std::filesystem::remove(narrow);

  // Missing parameter name.
  const auto renamed = temp_file("amod_test_ckpt_renamed.json");
  Rng rng3(203);
  ActorNet differently("other", 4, 5, rng3);
  save_params(const_view(differently.parameters()), renamed.string());
  CHECK_THROWS_AS(load_params(actor.parameters(), renamed.string()), ParseError);
  std::filesystem::remove(renamed);
}

TEST_CASE("params_checksum is sensitive to single-bit value changes") {
  Rng rng(204);
  ActorNet actor("actor", 4, 5, rng);
  const auto before = params_checksum(const_view(actor.parameters()));
  double& cell = actor.parameters()[0]->value.v[0];
  cell = std::nextafter(cell, 1e9);  // one ulp
  const auto after = params_checksum(const_view(actor.parameters()));
  CHECK(before != after);
}
