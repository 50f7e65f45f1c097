#include <gtest/gtest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <numbers>

#include "tssb/kernels.hpp"
#include "tssb/stats.hpp"

using namespace tssb;

TEST(DirichletKernel, SymmetricRootMean) {
  DirichletKernel k(3, 3.0);
  Rng rng(1);
  const int n = 100000;
  std::vector<double> first(n);
  for (int i = 0; i < n; ++i) {
    Theta t = k.sample_root(rng);
    double s = t[0] + t[1] + t[2];
    ASSERT_NEAR(s, 1.0, 1e-12);
    first[i] = t[0];
  }
  // Var of a Dir(3,3,3) component: (1/3)(2/3)/10
  double sd = std::sqrt((1.0 / 3) * (2.0 / 3) / 10.0 / n);
  EXPECT_NEAR(mean(first), 1.0 / 3, 3 * sd);
}

TEST(DirichletKernel, LargeKappaConcentratesAtParent) {
  DirichletKernel k(4, 1e4);
  Rng rng(2);
  Theta parent{0.1, 0.2, 0.3, 0.4};
  double l1 = 0.0;
  for (int i = 0; i < 1000; ++i) {
    Theta c = k.sample_child(parent, rng);
    for (int j = 0; j < 4; ++j) l1 += std::abs(c[j] - parent[j]);
  }
  EXPECT_LT(l1 / 1000, 0.05);
}

TEST(DirichletKernel, TinyConcentrationsStayOnSimplex) {
  DirichletKernel k(5, 0.01);
  Rng rng(3);
  Theta parent{0.96, 0.01, 0.01, 0.01, 0.01};
  for (int i = 0; i < 2000; ++i) {
    Theta c = k.sample_child(parent, rng);
    double s = 0.0;
    for (double v : c) {
      EXPECT_GT(v, 0.0);
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
    EXPECT_TRUE(std::isfinite(k.log_density_child(c, parent)));
  }
}

TEST(DirichletKernel, UniformDensityIsZeroLog) {
  DirichletKernel k(2, 2.0);
  Theta half{0.5, 0.5};
  EXPECT_NEAR(k.log_density_child(half, half), 0.0, 1e-14);
}

TEST(DirichletKernel, DensityIntegratesToOne) {
  // Concentrations >= 1 keep the density bounded, so the 1e-12 log floor
  // does not remove mass near the simplex edges.
  const std::vector<std::pair<double, double>> cells{{2, 0.5}, {5, 0.2}, {5, 0.5}, {10, 0.9}, {3, 0.5}};
  for (auto [kappa, p0] : cells) {
    DirichletKernel k(2, kappa);
    Theta parent{p0, 1 - p0};
    auto f = [&](double t) {
      Theta c{t, 1 - t};
      return std::exp(k.log_density_child(c, parent));
    };
    double v = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, 0.0, 1.0, 15, 1e-12);
    EXPECT_NEAR(v, 1.0, 1e-6) << kappa << " " << p0;
  }
  DirichletKernel root(2, 1.5);
  auto g = [&](double t) { return std::exp(root.log_density_root(std::vector<double>{t, 1 - t})); };
  EXPECT_NEAR((boost::math::quadrature::gauss_kronrod<double, 61>::integrate(g, 0.0, 1.0, 15, 1e-12)), 1.0, 1e-6);
}

TEST(DirichletKernel, RejectsOffSimplex) {
  DirichletKernel k(2, 2.0);
  Rng rng(1);
  EXPECT_THROW(k.sample_child(std::vector<double>{0.7, 0.7}, rng), numerical_error);
  EXPECT_THROW(k.sample_child(std::vector<double>{1.0}, rng), invariant_error);
}

TEST(GaussianKernel, RootVarianceEtaZero) {
  GaussianKernel k(1, 1.0, 0.0);
  Rng rng(4);
  std::vector<double> x(100000);
  for (double& v : x) v = k.sample_root(rng)[0];
  EXPECT_NEAR(variance(x), 1.0, 0.02);
}

TEST(GaussianKernel, StationaryRootVariance) {
  GaussianKernel k(1, 1.0, 0.5);
  EXPECT_DOUBLE_EQ(k.root_var(0), 4.0 / 3);
  Rng rng(5);
  std::vector<double> x(100000);
  for (double& v : x) v = k.sample_root(rng)[0];
  EXPECT_NEAR(variance(x), 4.0 / 3, 0.03);
}

TEST(GaussianKernel, ChildFromZeroParent) {
  GaussianKernel k(2, 0.25, 1.0);
  Rng rng(6);
  std::vector<double> x(50000);
  Theta zero{0.0, 0.0};
  for (double& v : x) v = k.sample_child(zero, rng)[1];
  EXPECT_NEAR(mean(x), 0.0, 3 * 0.5 / std::sqrt(50000.0));
  EXPECT_NEAR(variance(x), 0.25, 0.01);
}

TEST(GaussianKernel, ChainVarianceFollowsGeometricSeries) {
  const double eta = 0.7, lam = 0.5;
  GaussianKernel k(1, lam, eta);
  Rng rng(7);
  const int reps = 40000;
  for (int depth : {1, 3, 6}) {
    std::vector<double> x(reps);
    for (int r = 0; r < reps; ++r) {
      // chain that starts from a zero "pre-root" so the depth-d node has
      // variance Lambda (1 - eta^(2d+2)) / (1 - eta^2)
      Theta t{0.0};
      for (int j = 0; j <= depth; ++j) t = k.sample_child(t, rng);
      x[r] = t[0];
    }
    double expect = lam * (1 - std::pow(eta, 2 * depth + 2)) / (1 - eta * eta);
    EXPECT_NEAR(variance(x), expect, 4 * expect * std::sqrt(2.0 / reps));
    EXPECT_LT(variance(x), k.root_var(0) * (1 + 4 * std::sqrt(2.0 / reps)));
  }
}

TEST(GaussianKernel, LogDensityAtMean) {
  GaussianKernel k(1, 1.0, 1.0);
  Theta a{0.3};
  EXPECT_NEAR(k.log_density_child(a, a), -0.5 * std::log(2 * std::numbers::pi), 1e-15);
}

TEST(GaussianKernel, DensityIntegratesToOne) {
  for (double eta : {0.0, 0.6, 1.0}) {
    GaussianKernel k(1, 0.3, eta);
    Theta parent{0.8};
    auto f = [&](double t) { return std::exp(k.log_density_child(std::vector<double>{t}, parent)); };
    auto g = [&](double t) { return std::exp(k.log_density_root(std::vector<double>{t})); };
    double a = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, -20.0, 20.0, 15, 1e-12);
    double b = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(g, -40.0, 40.0, 15, 1e-12);
    EXPECT_NEAR(a, 1.0, 1e-6);
    EXPECT_NEAR(b, 1.0, 1e-6);
  }
}

TEST(GaussianKernel, GradientMatchesFiniteDifferences) {
  Rng rng(8);
  for (int t = 0; t < 100; ++t) {
    const std::size_t M = 1 + static_cast<std::size_t>(rng.uniform() * 5);
    GaussianKernel k(M, 1.0, rng.uniform());
    for (auto& v : k.lambda_diag) v = rng.uniform(0.05, 2.0);
    Theta c(M), p(M);
    for (std::size_t d = 0; d < M; ++d) {
      c[d] = rng.normal(0, 2);
      p[d] = rng.normal(0, 2);
    }
    std::vector<double> gc(M, 0.0), gp(M, 0.0), gr(M, 0.0);
    k.grad_log_density_child(c, p, gc, gp);
    k.grad_log_density_root(c, gr);
    const double h = 1e-5;
    for (std::size_t d = 0; d < M; ++d) {
      auto shift = [&](Theta v, double by) {
        v[d] += by;
        return v;
      };
      double fc = (k.log_density_child(shift(c, h), p) - k.log_density_child(shift(c, -h), p)) / (2 * h);
      double fp = (k.log_density_child(c, shift(p, h)) - k.log_density_child(c, shift(p, -h))) / (2 * h);
      double fr = (k.log_density_root(shift(c, h)) - k.log_density_root(shift(c, -h))) / (2 * h);
      EXPECT_NEAR(gc[d], fc, 1e-5 * std::max(1.0, std::abs(fc)));
      EXPECT_NEAR(gp[d], fp, 1e-5 * std::max(1.0, std::abs(fp)));
      EXPECT_NEAR(gr[d], fr, 1e-5 * std::max(1.0, std::abs(fr)));
    }
  }
}

TEST(GaussianKernel, RejectsBadConfiguration) {
  EXPECT_THROW(GaussianKernel(2, 0.0), config_error);
  EXPECT_THROW(GaussianKernel(2, 1.0, 1.5), config_error);
  GaussianKernel k(2, 1.0);
  EXPECT_THROW(k.log_density_child(std::vector<double>{NAN, 0}, std::vector<double>{0, 0}), numerical_error);
}
