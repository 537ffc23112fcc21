// Copyright 2026 The HMK Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "hmk/inference.hpp"
#include "hmk/parallel.hpp"
#include "hmk/spectral.hpp"
#include "support.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace hmk;
using namespace hmk::inference;
using linalg::CMatrix;
using linalg::RMatrix;
using linalg::RVector;

namespace {

struct Problem {
  HMKParams kernel;
  InducingFrequencies z;
  Inputs x;
  RVector y;
};

InducingFrequencies spread_frequencies(Rng& rng, const HMKParams& k, int per_component) {
  InducingFrequencies z;
  z.dim = k.dim();
  for (const auto& c : k.components) {
    std::vector<double> f;
    for (int j = 0; j < per_component; ++j) {
      for (int d = 0; d < z.dim; ++d) {
        const double mu = c.mu[static_cast<std::size_t>((j % c.num_freqs()) * z.dim + d)];
        f.push_back(mu + rng.uniform(-0.6, 0.6));
      }
    }
    z.freqs.push_back(std::move(f));
  }
  return z;
}

Inputs random_inputs(Rng& rng, Index n, int dim, double half_width = 1.0) {
  Inputs x(n, dim);
  for (Index i = 0; i < n; ++i) {
    for (int d = 0; d < dim; ++d) x(i, d) = rng.uniform(-half_width, half_width);
  }
  return x;
}

RVector sample_prior(Rng& rng, const RMatrix& k, double noise) {
  const Index n = k.rows();
  const Eigen::LLT<RMatrix> llt(k + (noise + 1e-9) * RMatrix::Identity(n, n));
  RVector e(n);
  for (Index i = 0; i < n; ++i) e(i) = rng.normal();
  return llt.matrixL() * e;
}

Problem make_problem(Rng& rng, Index n, int p, int q, int mp, double noise) {
  Problem pr;
  pr.kernel = testing::random_hmk(rng, 1, p, q, true);
  pr.z = spread_frequencies(rng, pr.kernel, mp);
  pr.x = random_inputs(rng, n, 1);
  pr.y = sample_prior(rng, par::gram_real(pr.kernel, pr.x), noise);
  return pr;
}

/// Redraws until the feature prior is well conditioned. Adjoints through
/// K_uu^{-1} lose about cond(K_uu) * eps absolute accuracy, which swamps
/// finite-difference comparisons of tiny gradients.
Problem conditioned_problem(Rng& rng, Index n, int p, int q, int mp, double noise) {
  for (;;) {
    auto pr = make_problem(rng, n, p, q, mp, noise);
    const VffModel model(pr.kernel, pr.z);
    const RMatrix k = model.kuu();
    const auto ev = Eigen::SelfAdjointEigenSolver<RMatrix>(k).eigenvalues();
    if (ev.minCoeff() > 1e-5 * ev.maxCoeff()) return pr;
  }
}

double dense_lml(const RMatrix& kff, const RVector& y, double noise) {
  const Index n = y.size();
  const Eigen::LLT<RMatrix> llt(kff + noise * RMatrix::Identity(n, n));
  REQUIRE(llt.info() == Eigen::Success);
  const RVector a = llt.matrixL().solve(y);
  double logdet = 0.0;
  for (Index i = 0; i < n; ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
  return -0.5 * a.squaredNorm() - 0.5 * logdet - 0.5 * static_cast<double>(n) * std::log(2.0 * kPi);
}

/// Random q(v) with covariance L L^T + 0.05 I.
VariationalState random_state(Rng& rng, Index m) {
  VariationalState q;
  q.mean = RVector(m);
  for (Index i = 0; i < m; ++i) q.mean(i) = 0.3 * rng.normal();
  const RMatrix l = 0.3 * testing::random_real(rng, m, m);
  q.cov = l * l.transpose() + 0.05 * RMatrix::Identity(m, m);
  return q;
}

double min_eig(const RMatrix& m) {
  return Eigen::SelfAdjointEigenSolver<RMatrix>(0.5 * (m + m.transpose())).eigenvalues().minCoeff();
}

}  // namespace

// ---------------------------------------------------------------------------
// Covariances

TEST_CASE("compute_kuu is block diagonal with GSD blocks") {
  Rng rng(1);
  for (bool real : {false, true}) {
    const auto k = testing::random_hmk(rng, 1, 2, 2, real);
    const auto z = spread_frequencies(rng, k, 3);
    const auto kuu = compute_kuu(k, z);
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        CHECK(kuu(i, 3 + j) == cplx(0.0, 0.0));
        CHECK(kuu(3 + i, j) == cplx(0.0, 0.0));
      }
    }
    CHECK(linalg::min_eigenvalue(kuu) >= -1e-8 * kuu.trace());
  }
}

TEST_CASE("single frequency blocks equal component GSD values") {
  Rng rng(2);
  const auto k = testing::random_hmk(rng, 1, 2, 2, false);
  InducingFrequencies z{1, {{0.7}, {-0.4}}};
  const auto kuu = compute_kuu(k, z);
  for (int p = 0; p < 2; ++p) {
    const double w = z.freqs[p][0];
    const auto g = spectral::component_gsd<double, double>(k.components[p], {&w, 1}, {&w, 1});
    CHECK(std::abs(kuu(p, p) - cplx(g.re, g.im)) < 1e-14);
    HMKParams single{{k.components[p]}, false};
    single.components[0].center = {0.0};
    CHECK(std::abs(kuu(p, p) - spectral::gsd_hmk({&w, 1}, {&w, 1}, single)) < 1e-12 * std::abs(kuu(p, p)));
  }
}

TEST_CASE("compute_kuu rejects non-integrable kernels") {
  Rng rng(3);
  auto k = testing::random_hmk(rng, 1, 1, 1, true);
  k.components[0].sigma1 = {0.0};
  InducingFrequencies z{1, {{0.1}}};
  CHECK_THROWS_AS(compute_kuu(k, z), spectral::NotIntegrable);
}

TEST_CASE("compute_kfu matches Fourier quadrature of the kernel") {
  Rng rng(4);
  for (int draw = 0; draw < 4; ++draw) {
    const auto k = testing::random_hmk(rng, 1, 1, 2, false);
    HMKParams unshifted = k;
    unshifted.components[0].center = {0.0};
    const auto window = spectral::input_window(unshifted, 7.0, 1200);
    InducingFrequencies z{1, {{}}};
    Inputs x(20, 1);
    for (int t = 0; t < 20; ++t) {
      x(t, 0) = rng.uniform(-1.0, 1.0);
      z.freqs[0].push_back(rng.uniform(-3.0, 3.0));
    }
    const CMatrix kfu = compute_kfu(k, x, z);
    const auto& c = k.components[0];
    // cov(u(w), f(x)) = integral k_p(t, x - x_p) exp(-2 i pi w t) dt and cov(f, u) is its conjugate.
    const spectral::ScalarKernel kt = [&](double a, double b) { return eval_hmk({&a, 1}, {&b, 1}, unshifted); };
    for (int t = 0; t < 20; ++t) {
      const double y = x(t, 0) - c.center[0];
      const cplx oracle = std::conj(spectral::fourier_cross_oracle(kt, y, z.freqs[0][t], window));
      const double scale = std::max(std::abs(oracle), 1e-3);
      CHECK(std::abs(kfu(t, t) - oracle) / scale < 1e-3);
    }
  }
}

TEST_CASE("zero amplitude component contributes zero columns") {
  Rng rng(5);
  auto k = testing::random_hmk(rng, 1, 2, 2, true);
  for (auto& e : k.components[1].b_chol) e = Cx<double>(0.0, 0.0);
  const auto z = spread_frequencies(rng, k, 3);
  const CMatrix kfu = compute_kfu(k, random_inputs(rng, 7, 1), z);
  CHECK(kfu.rightCols(3).norm() == 0.0);
  CHECK(kfu.leftCols(3).norm() > 0.0);
}

TEST_CASE("stacked covariances match a discretised Fourier transform of the process") {
  // Re u = sum_k g(y_k) cos(2 pi w y_k) dy, Im u = -sum_k g(y_k) sin(2 pi w y_k) dy.
  Rng rng(6);
  for (int draw = 0; draw < 3; ++draw) {
    const auto k = testing::random_hmk(rng, 1, 1, 2, true);
    const auto& c = k.components[0];
    HMKParams unshifted = k;
    unshifted.components[0].center = {0.0};
    const auto z = spread_frequencies(rng, k, 3);
    const VffModel model(k, z);
    const Inputs x = random_inputs(rng, 5, 1);

    const auto win = spectral::input_window(unshifted, 7.0, 900);
    const int g = win.nodes;
    const double h = (win.hi - win.lo) / (g - 1);
    Inputs grid(g, 1);
    for (int i = 0; i < g; ++i) grid(i, 0) = win.lo + h * i;
    const RMatrix kgg = par::gram_real(unshifted, grid);
    RMatrix kgx(g, x.rows());
    for (int i = 0; i < g; ++i) {
      for (Index j = 0; j < x.rows(); ++j) {
        const double xs = x(j, 0) - c.center[0];
        kgx(i, j) = eval_hmk(par::row(grid, i), {&xs, 1}, unshifted).real();
      }
    }
    const int m = z.count(0);
    RMatrix phi(2 * m, g);
    for (int j = 0; j < m; ++j) {
      for (int i = 0; i < g; ++i) {
        const double wt = (i == 0 || i == g - 1) ? 0.5 * h : h;
        const double th = 2.0 * kPi * z.freqs[0][j] * grid(i, 0);
        phi(j, i) = wt * std::cos(th);
        phi(m + j, i) = -wt * std::sin(th);
      }
    }
    const RMatrix kuu_oracle = phi * kgg * phi.transpose();
    const RMatrix kuf_oracle = phi * kgx;
    const double scale_u = kuu_oracle.cwiseAbs().maxCoeff();
    const double scale_f = kuf_oracle.cwiseAbs().maxCoeff();
    CHECK((model.kuu() - kuu_oracle).cwiseAbs().maxCoeff() < 1e-6 * scale_u);
    CHECK((model.kuf(x) - kuf_oracle).cwiseAbs().maxCoeff() < 1e-6 * scale_f);
  }
}

TEST_CASE("joint prior of f and stacked features is positive semidefinite") {
  Rng rng(7);
  for (int draw = 0; draw < 20; ++draw) {
    const auto k = testing::random_hmk(rng, 1, 2, 2, true);
    const auto z = spread_frequencies(rng, k, 3);
    const VffModel model(k, z);
    const Inputs x = random_inputs(rng, 15, 1);
    const RMatrix kuu = model.kuu();
    const RMatrix kuf = model.kuf(x);
    const RMatrix kff = par::gram_real(k, x);
    const Index m = kuu.rows(), n = kff.rows();
    RMatrix joint(m + n, m + n);
    joint << kuu, kuf, kuf.transpose(), kff;
    CHECK(min_eig(joint) >= -1e-9 * joint.trace());
    CHECK((model.kdiag(x) - kff.diagonal()).cwiseAbs().maxCoeff() < 1e-14);
  }
}

// ---------------------------------------------------------------------------
// Conditionals

TEST_CASE("prior state recovers the prior marginals") {
  Rng rng(8);
  const auto pr = make_problem(rng, 12, 2, 2, 4, 0.1);
  const VffModel model(pr.kernel, pr.z);
  const auto q = prior_state(model);
  const auto f = conditional(model, pr.x, q);
  const RVector kd = model.kdiag(pr.x);
  CHECK(f.mean.cwiseAbs().maxCoeff() == 0.0);
  for (Index i = 0; i < kd.size(); ++i) CHECK(std::abs(f.var(i) - kd(i)) <= 1e-12 * kd(i));
}

TEST_CASE("single inducing point matches the scalar formula") {
  Rng rng(9);
  const auto sm = testing::random_sm(rng, 1, 2);
  Inputs z(1, 1);
  z(0, 0) = 0.2;
  const InducingPointModel model(sm, z, true);
  const Inputs x = random_inputs(rng, 6, 1);
  const double kuu = model.kuu()(0, 0);
  const Prior prior(model.kuu(), model.blocks());
  const double ku = prior.k_tilde(0, 0);
  CHECK(std::abs(ku - kuu) <= 1e-9 * kuu);
  VariationalState q{RVector::Constant(1, 0.7), RMatrix::Constant(1, 1, 0.3 * kuu)};
  const auto f = conditional(model, x, q);
  const RMatrix kuf = model.kuf(x);
  const RVector kd = model.kdiag(x);
  for (Index i = 0; i < x.rows(); ++i) {
    const double a = kuf(0, i);
    CHECK(std::abs(f.mean(i) - a * 0.7 / ku) < 1e-12);
    CHECK(std::abs(f.var(i) - (kd(i) - a * a * (ku - q.cov(0, 0)) / (ku * ku))) < 1e-12);
  }
}

TEST_CASE("single frequency matches the two by two stacked formula") {
  Rng rng(10);
  const auto k = testing::random_hmk(rng, 1, 1, 2, true);
  InducingFrequencies z{1, {{k.components[0].mu[0]}}};
  const VffModel model(k, z);
  const Inputs x = random_inputs(rng, 5, 1);
  const Prior prior(model.kuu(), model.blocks());
  const RMatrix& kt = prior.k_tilde;
  const double det = kt(0, 0) * kt(1, 1) - kt(0, 1) * kt(1, 0);
  RMatrix inv(2, 2);
  inv << kt(1, 1) / det, -kt(0, 1) / det, -kt(1, 0) / det, kt(0, 0) / det;
  VariationalState q{RVector(2), 0.4 * kt};
  q.mean << 0.5, -0.2;
  const auto f = conditional(model, x, q);
  const RMatrix kuf = model.kuf(x);
  const RVector kd = model.kdiag(x);
  for (Index i = 0; i < x.rows(); ++i) {
    const RVector a = inv * kuf.col(i);
    CHECK(std::abs(f.mean(i) - a.dot(q.mean)) < 1e-10 * std::max(1.0, std::abs(f.mean(i))));
    const double v = kd(i) - a.dot((kt - q.cov) * a);
    CHECK(std::abs(f.var(i) - v) < 1e-10 * kd(i));
  }
}

TEST_CASE("variance never exceeds the prior when S is below K_uu") {
  Rng rng(11);
  for (int draw = 0; draw < 50; ++draw) {
    const auto pr = make_problem(rng, 8, 2, 2, 3, 0.1);
    const VffModel model(pr.kernel, pr.z);
    const Prior prior(model.kuu(), model.blocks());
    const Index m = prior.k.rows();
    // S = K^(1/2) C K^(1/2) with 0 <= C <= I.
    const RMatrix l = prior.chol.lower();
    const RMatrix a = testing::random_real(rng, m, m);
    const Eigen::SelfAdjointEigenSolver<RMatrix> es(a * a.transpose());
    const RVector lam = es.eigenvalues() / es.eigenvalues().maxCoeff();
    const RMatrix c = es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
    const RMatrix s = l * c * l.transpose();
    CHECK(min_eig(prior.k_tilde - s) >= -1e-10 * prior.k_tilde.trace());
    VariationalState q{RVector::Zero(m), 0.5 * (s + s.transpose())};
    const auto f = conditional(model, pr.x, q);
    const RVector kd = model.kdiag(pr.x);
    for (Index i = 0; i < kd.size(); ++i) CHECK(f.var(i) <= kd(i) * (1.0 + 1e-10));
  }
}

TEST_CASE("large negative predictive variance raises") {
  Rng rng(12);
  const auto pr = make_problem(rng, 5, 1, 1, 3, 0.1);
  const VffModel model(pr.kernel, pr.z);
  auto q = prior_state(model);
  q.cov *= -1.0;
  CHECK_THROWS_AS(conditional(model, pr.x, q), linalg::NotPositiveDefinite);
}

// ---------------------------------------------------------------------------
// Bounds

TEST_CASE("KL vanishes at the prior and is positive elsewhere") {
  Rng rng(13);
  const auto pr = make_problem(rng, 10, 2, 2, 3, 0.1);
  const VffModel model(pr.kernel, pr.z);
  const Prior prior(model.kuu(), model.blocks());
  const Likelihood lik{Likelihood::Kind::kGaussian, 0.1, 20};
  const auto at_prior = elbo_terms(prior, model.kuf(pr.x), model.kdiag(pr.x), pr.y, lik, prior_state(model), 1.0,
                                   false);
  CHECK(std::abs(at_prior.kl) < 1e-10);
  for (int t = 0; t < 20; ++t) {
    const auto q = random_state(rng, prior.k.rows());
    const auto r = elbo_terms(prior, model.kuf(pr.x), model.kdiag(pr.x), pr.y, lik, q, 1.0, false);
    CHECK(r.kl > 0.0);
  }
}

TEST_CASE("both bounds stay below the dense log marginal likelihood") {
  Rng rng(14);
  for (int draw = 0; draw < 25; ++draw) {
    const double noise = rng.uniform(0.05, 0.5);
    const auto pr = make_problem(rng, 20, 2, 2, 3, noise);
    const VffModel model(pr.kernel, pr.z);
    const Prior prior(model.kuu(), model.blocks());
    const RMatrix kuf = model.kuf(pr.x);
    const RVector kd = model.kdiag(pr.x);
    const double lml = dense_lml(par::gram_real(pr.kernel, pr.x), pr.y, noise);

    const auto col = collapsed_terms(prior, kuf, kd, pr.y, noise, false);
    CHECK(col.value <= lml + 1e-9 * std::abs(lml));
    CHECK(col.trace_term >= -1e-12);

    const Likelihood lik{Likelihood::Kind::kGaussian, noise, 20};
    const auto q = random_state(rng, prior.k.rows());
    CHECK(elbo_terms(prior, kuf, kd, pr.y, lik, q, 1.0, false).value <= lml);
    // The closed-form q attains the collapsed value.
    const auto opt = elbo_terms(prior, kuf, kd, pr.y, lik, col.optimal, 1.0, false);
    CHECK(std::abs(opt.value - col.value) < 1e-7 * std::max(1.0, std::abs(col.value)));
    CHECK(collapsed_bound(pr.kernel, pr.z, pr.x, pr.y, noise) == doctest::Approx(col.value).epsilon(1e-12));
  }
}

TEST_CASE("trace term equals the Schur complement trace and is non-negative") {
  Rng rng(15);
  for (int draw = 0; draw < 10; ++draw) {
    const auto pr = make_problem(rng, 15, 2, 2, 3, 0.2);
    const VffModel model(pr.kernel, pr.z);
    const Prior prior(model.kuu(), model.blocks());
    const RMatrix kuf = model.kuf(pr.x);
    const RMatrix kff = par::gram_real(pr.kernel, pr.x);
    const RMatrix schur = kff - kuf.transpose() * prior.chol.solve(kuf);
    CHECK(min_eig(schur) >= -1e-9 * kff.trace());
    const auto r = collapsed_terms(prior, kuf, model.kdiag(pr.x), pr.y, 0.2, false);
    CHECK(r.trace_term >= 0.0);
    CHECK(std::abs(r.trace_term - 0.5 * schur.trace() / 0.2) < 1e-9 * kff.trace());
  }
}

TEST_CASE("nested frequency sets never decrease the collapsed bound") {
  Rng rng(16);
  const auto pr = make_problem(rng, 30, 1, 2, 9, 0.1);
  double previous = -std::numeric_limits<double>::infinity();
  for (int m : {3, 6, 9}) {
    InducingFrequencies z{1, {std::vector<double>(pr.z.freqs[0].begin(), pr.z.freqs[0].begin() + m)}};
    const double f = collapsed_bound(pr.kernel, z, pr.x, pr.y, 0.1);
    CHECK(f >= previous - 1e-8 * std::abs(f));
    previous = f;
  }
}

TEST_CASE("blockwise and dense prior solves agree") {
  Rng rng(17);
  const auto pr = make_problem(rng, 5, 3, 2, 3, 0.1);
  const VffModel model(pr.kernel, pr.z);
  const Prior prior(model.kuu(), model.blocks());
  const RMatrix rhs = testing::random_real(rng, prior.k.rows(), 4);
  const RMatrix dense = prior.k_tilde.llt().solve(rhs);
  const RMatrix block = prior.chol.solve(rhs);
  CHECK((dense - block).norm() <= 1e-9 * dense.norm());
  CHECK(std::abs(prior.chol.logdet() - 2.0 * prior.k_tilde.llt().matrixLLT().diagonal().array().log().sum()) <
        1e-9 * std::max(1.0, std::abs(prior.chol.logdet())));
}

// ---------------------------------------------------------------------------
// Likelihood helpers

TEST_CASE("Gauss-Hermite rule integrates polynomials exactly") {
  std::vector<double> x, w;
  gauss_hermite(20, x, w);
  double m0 = 0.0, m2 = 0.0, m4 = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    m0 += w[k];
    m2 += w[k] * x[k] * x[k];
    m4 += w[k] * std::pow(x[k], 4);
  }
  CHECK(m0 == doctest::Approx(std::sqrt(kPi)).epsilon(1e-13));
  CHECK(m2 == doctest::Approx(std::sqrt(kPi) / 2.0).epsilon(1e-13));
  CHECK(m4 == doctest::Approx(3.0 * std::sqrt(kPi) / 4.0).epsilon(1e-12));
}

TEST_CASE("Bernoulli expectation agrees between 20 and 50 nodes") {
  Rng rng(18);
  for (int t = 0; t < 50; ++t) {
    Inputs dummy(1, 1);
    const double mu = rng.uniform(-3.0, 3.0);
    const double var = rng.uniform(0.01, 2.0);
    // Exercise the expectation through a one-point problem with Kuu = 1.
    const Prior prior(RMatrix::Identity(1, 1), {1});
    const RMatrix kuf = RMatrix::Constant(1, 1, 1.0);
    const RVector kd = RVector::Constant(1, 1.0);
    VariationalState q{RVector::Constant(1, mu), RMatrix::Constant(1, 1, var)};
    const RVector y = RVector::Constant(1, t % 2 == 0 ? 1.0 : -1.0);
    Likelihood a{Likelihood::Kind::kBernoulli, 1.0, 20};
    Likelihood b{Likelihood::Kind::kBernoulli, 1.0, 50};
    const double ea = elbo_terms(prior, kuf, kd, y, a, q, 1.0, false).expected_loglik;
    const double eb = elbo_terms(prior, kuf, kd, y, b, q, 1.0, false).expected_loglik;
    CHECK(std::abs(ea - eb) < 1e-6);
  }
}

TEST_CASE("log normal CDF is accurate and smooth across branches") {
  CHECK(log_normal_cdf(0.0) == doctest::Approx(std::log(0.5)).epsilon(1e-15));
  CHECK(log_normal_cdf(-5.0) == doctest::Approx(std::log(2.866515718791939e-07)).epsilon(1e-12));
  CHECK(std::abs(log_normal_cdf(-30.0 - 1e-9) - log_normal_cdf(-30.0 + 1e-9)) < 1e-6);
  CHECK(std::isfinite(log_normal_cdf(-1e4)));
  CHECK(log_normal_cdf(40.0) == 0.0);
  for (double z : {-40.0, -29.0, -3.0, 0.0, 2.5}) {
    const double h = 1e-5;
    const double fd = (log_normal_cdf(z + h) - log_normal_cdf(z - h)) / (2.0 * h);
    CHECK(inverse_mills(z) == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("Bernoulli targets are validated and normalised") {
  RVector pm(3), zo(3), bad(3);
  pm << -1.0, 1.0, 1.0;
  zo << 0.0, 1.0, 1.0;
  bad << 0.0, 2.0, 1.0;
  CHECK(probit_signs(pm) == pm);
  CHECK(probit_signs(zo) == pm);
  CHECK_THROWS_AS(probit_signs(bad), InvalidTargets);
}

// ---------------------------------------------------------------------------
// Gradients

namespace {

double relative_gap(double a, double b, double floor) { return std::abs(a - b) / std::max({std::abs(b), floor}); }

}  // namespace

TEST_CASE("collapsed bound gradients match finite differences") {
  Rng rng(19);
  const auto pr = conditioned_problem(rng, 12, 2, 2, 3, 0.2);
  VffModel model(pr.kernel, pr.z);
  const double noise = 0.2;
  const auto eval = [&](const VffModel& m, double s) {
    const Prior prior(m.kuu(), m.blocks());
    return collapsed_terms(prior, m.kuf(pr.x), m.kdiag(pr.x), pr.y, s, true);
  };
  const auto base = eval(model, noise);
  const auto g = model.backprop(pr.x, base.g_kuu, base.g_kuf, base.g_kdiag);
  const auto raw = model.params();
  const double h = 1e-6;
  for (std::size_t k = 0; k < raw.size(); ++k) {
    auto rp = raw, rm = raw;
    rp[k] += h;
    rm[k] -= h;
    VffModel mp = model, mm = model;
    mp.set_params(rp);
    mm.set_params(rm);
    const double fd = (eval(mp, noise).value - eval(mm, noise).value) / (2.0 * h);
    INFO("k=", k, " analytic=", g[k], " fd=", fd);
    CHECK(relative_gap(g[k], fd, 1e-2) < 1e-4);
  }
  const double fd_noise = (eval(model, noise + h).value - eval(model, noise - h).value) / (2.0 * h);
  CHECK(relative_gap(base.g_noise, fd_noise, 1e-2) < 1e-5);
}

TEST_CASE("ELBO gradients match finite differences") {
  Rng rng(20);
  for (auto kind : {Likelihood::Kind::kGaussian, Likelihood::Kind::kBernoulli}) {
    auto pr = conditioned_problem(rng, 10, 2, 2, 2, 0.2);
    if (kind == Likelihood::Kind::kBernoulli) {
      for (Index i = 0; i < pr.y.size(); ++i) pr.y(i) = pr.y(i) > 0.0 ? 1.0 : 0.0;
    }
    const Likelihood lik{kind, 0.3, 20};
    const double scale = 2.5;
    VffModel model(pr.kernel, pr.z);
    const Index m = model.num_inducing();
    const auto q = random_state(rng, m);
    const auto eval = [&](const VffModel& mod, const VariationalState& qq, const Likelihood& l) {
      const Prior prior(mod.kuu(), mod.blocks());
      return elbo_terms(prior, mod.kuf(pr.x), mod.kdiag(pr.x), pr.y, l, qq, scale, true);
    };
    const auto base = eval(model, q, lik);
    const double h = 1e-6;

    for (Index i = 0; i < m; ++i) {
      auto qp = q, qm = q;
      qp.mean(i) += h;
      qm.mean(i) -= h;
      const double fd = (eval(model, qp, lik).value - eval(model, qm, lik).value) / (2.0 * h);
      CHECK(relative_gap(base.g_mean(i), fd, 1e-2) < 1e-5);
    }
    for (Index i = 0; i < m; ++i) {
      for (Index j = 0; j <= i; ++j) {
        auto qp = q, qm = q;
        qp.cov(i, j) += h;
        qm.cov(i, j) -= h;
        if (i != j) {
          qp.cov(j, i) += h;
          qm.cov(j, i) -= h;
        }
        const double fd = (eval(model, qp, lik).value - eval(model, qm, lik).value) / (2.0 * h);
        const double an = (i == j ? 1.0 : 2.0) * base.g_cov(i, j);
        CHECK(relative_gap(an, fd, 1e-2) < 1e-5);
      }
    }
    const auto g = model.backprop(pr.x, base.g_kuu, base.g_kuf, base.g_kdiag);
    const auto raw = model.params();
    for (std::size_t k = 0; k < raw.size(); ++k) {
      auto rp = raw, rm = raw;
      rp[k] += h;
      rm[k] -= h;
      VffModel mp = model, mm = model;
      mp.set_params(rp);
      mm.set_params(rm);
      const double fd = (eval(mp, q, lik).value - eval(mm, q, lik).value) / (2.0 * h);
      CHECK(relative_gap(g[k], fd, 1e-2) < 1e-4);
    }
    if (kind == Likelihood::Kind::kGaussian) {
      Likelihood lp = lik, lm = lik;
      lp.noise_var += h;
      lm.noise_var -= h;
      const double fd = (eval(model, q, lp).value - eval(model, q, lm).value) / (2.0 * h);
      CHECK(relative_gap(base.g_noise, fd, 1e-2) < 1e-5);
    }
  }
}

TEST_CASE("inducing point model gradients match finite differences") {
  Rng rng(21);
  const auto sm = testing::random_sm(rng, 1, 2);
  const Inputs x = random_inputs(rng, 12, 1);
  const RVector y = sample_prior(rng, par::gram_sm(sm, x, x), 0.1);
  const Inputs z = random_inputs(rng, 5, 1);
  for (bool train_means : {false, true}) {
    InducingPointModel model(sm, z, train_means);
    const auto eval = [&](const InducingPointModel& m) {
      const Prior prior(m.kuu(), m.blocks());
      return collapsed_terms(prior, m.kuf(x), m.kdiag(x), y, 0.1, true);
    };
    const auto base = eval(model);
    const auto g = model.backprop(x, base.g_kuu, base.g_kuf, base.g_kdiag);
    const auto raw = model.params();
    REQUIRE(g.size() == raw.size());
    const double h = 1e-6;
    for (std::size_t k = 0; k < raw.size(); ++k) {
      auto rp = raw, rm = raw;
      rp[k] += h;
      rm[k] -= h;
      InducingPointModel mp = model, mm = model;
      mp.set_params(rp);
      mm.set_params(rm);
      const double fd = (eval(mp).value - eval(mm).value) / (2.0 * h);
      CHECK(relative_gap(g[k], fd, 1e-2) < 1e-4);
    }
  }
}

TEST_CASE("parameter round trip through the unconstrained layout") {
  Rng rng(22);
  const auto pr = make_problem(rng, 3, 2, 3, 2, 0.1);
  VffModel model(pr.kernel, pr.z);
  const auto raw = model.params();
  VffModel other = model;
  other.set_params(raw);
  for (int p = 0; p < 2; ++p) {
    const auto a = flatten(model.kernel().components[p]);
    const auto b = flatten(other.kernel().components[p]);
    for (std::size_t k = 0; k < a.size(); ++k) CHECK(b[k] == doctest::Approx(a[k]).epsilon(1e-9));
  }
  CHECK(softplus(softplus_inv(1e-3)) == doctest::Approx(1e-3).epsilon(1e-12));
  CHECK(softplus(softplus_inv(50.0)) == 50.0);
}

// ---------------------------------------------------------------------------
// Prediction and state

TEST_CASE("prior state predicts probability one half") {
  Rng rng(23);
  const auto pr = make_problem(rng, 9, 2, 2, 3, 0.1);
  const VffModel model(pr.kernel, pr.z);
  const Likelihood lik{Likelihood::Kind::kBernoulli, 1.0, 20};
  const auto out = predict(model, prior_state(model), lik, random_inputs(rng, 40, 1, 3.0));
  for (Index i = 0; i < out.prob.size(); ++i) CHECK(out.prob(i) == 0.5);
}

TEST_CASE("probabilities stay in the unit interval") {
  Rng rng(24);
  const auto pr = make_problem(rng, 9, 2, 2, 3, 0.1);
  const VffModel model(pr.kernel, pr.z);
  const Likelihood lik{Likelihood::Kind::kBernoulli, 1.0, 20};
  for (int t = 0; t < 10; ++t) {
    auto q = random_state(rng, model.num_inducing());
    q.mean *= 50.0;
    const auto out = predict(model, q, lik, random_inputs(rng, 50, 1, 4.0));
    CHECK(out.prob.minCoeff() >= 0.0);
    CHECK(out.prob.maxCoeff() <= 1.0);
  }
}

TEST_CASE("regression fit reproduces training targets") {
  Rng rng(25);
  auto k = testing::random_hmk(rng, 1, 1, 2, true);
  InducingFrequencies z{1, {{}}};
  for (int j = 0; j < 10; ++j) z.freqs[0].push_back(-2.5 + 5.0 * j / 9.0);
  const Inputs x = random_inputs(rng, 10, 1, 0.8);
  const double noise = 1e-4;
  const RVector y = sample_prior(rng, par::gram_real(k, x), noise);
  const VffModel model(k, z);
  const Prior prior(model.kuu(), model.blocks());
  const auto col = collapsed_terms(prior, model.kuf(x), model.kdiag(x), y, noise, false);
  const Likelihood lik{Likelihood::Kind::kGaussian, noise, 20};
  const auto out = predict(model, col.optimal, lik, x);
  for (Index i = 0; i < x.rows(); ++i) CHECK(std::abs(out.mean(i) - y(i)) <= 3.0 * std::sqrt(out.var(i)));
}

TEST_CASE("predictions are invariant to component and frequency order") {
  Rng rng(26);
  const auto pr = make_problem(rng, 15, 3, 2, 4, 0.1);
  const Inputs xt = random_inputs(rng, 20, 1, 1.5);
  const Likelihood lik{Likelihood::Kind::kGaussian, 0.1, 20};
  const auto fit = [&](const HMKParams& k, const InducingFrequencies& z) {
    const VffModel model(k, z);
    const Prior prior(model.kuu(), model.blocks());
    const auto col = collapsed_terms(prior, model.kuf(pr.x), model.kdiag(pr.x), pr.y, 0.1, false);
    return std::make_pair(col.value, predict(model, col.optimal, lik, xt));
  };
  const auto [f0, p0] = fit(pr.kernel, pr.z);

  HMKParams k = pr.kernel;
  InducingFrequencies z = pr.z;
  std::swap(k.components[0], k.components[2]);
  std::swap(z.freqs[0], z.freqs[2]);
  std::reverse(z.freqs[1].begin(), z.freqs[1].end());
  const auto [f1, p1] = fit(k, z);
  CHECK(std::abs(f1 - f0) < 1e-8 * std::abs(f0));
  CHECK((p1.mean - p0.mean).cwiseAbs().maxCoeff() < 1e-8 * std::max(1.0, p0.mean.cwiseAbs().maxCoeff()));
  CHECK((p1.var - p0.var).cwiseAbs().maxCoeff() < 1e-8 * p0.var.maxCoeff());
}

TEST_CASE("checkpoint round trip is exact") {
  Rng rng(27);
  const auto pr = make_problem(rng, 10, 2, 2, 3, 0.1);
  SparseGPState s{pr.kernel, pr.z, random_state(rng, 12), {Likelihood::Kind::kGaussian, 0.137, 20}};
  const std::string text = to_json(s).dump();
  const auto back = state_from_json(nlohmann::json::parse(text));
  CHECK(back.q.mean == s.q.mean);
  CHECK(back.q.cov == s.q.cov);
  CHECK(back.lik.noise_var == s.lik.noise_var);
  const Inputs xt = random_inputs(rng, 8, 1);
  const auto a = predict(s, xt);
  const auto b = predict(back, xt);
  CHECK(a.mean == b.mean);
  CHECK(a.var == b.var);
  CHECK(to_json(back).dump() == text);

  const auto sm = testing::random_sm(rng, 2, 3);
  const auto sm_back = sm_from_json(nlohmann::json::parse(to_json(sm).dump()));
  CHECK(sm_back.weights == sm.weights);
  CHECK(sm_back.means == sm.means);
  CHECK(sm_back.variances == sm.variances);
}

TEST_CASE("stochastic bound scales the batch term") {
  Rng rng(28);
  const auto pr = make_problem(rng, 20, 2, 2, 3, 0.1);
  SparseGPState s{pr.kernel, pr.z, random_state(rng, 12), {Likelihood::Kind::kGaussian, 0.1, 20}};
  const double full = elbo_stochastic(s, pr.x, pr.y, 20);
  // Two half batches scaled by 2 average to the full bound.
  const Inputs x1 = pr.x.topRows(10), x2 = pr.x.bottomRows(10);
  const RVector y1 = pr.y.head(10), y2 = pr.y.tail(10);
  const double avg = 0.5 * (elbo_stochastic(s, x1, y1, 20) + elbo_stochastic(s, x2, y2, 20));
  CHECK(avg == doctest::Approx(full).epsilon(1e-10));
  CHECK_THROWS(elbo_stochastic(s, Inputs(0, 1), RVector(0), 20));
  s.lik.kind = Likelihood::Kind::kBernoulli;
  CHECK_THROWS_AS(elbo_stochastic(s, pr.x, pr.y, 20), InvalidTargets);
}

TEST_CASE("complex kernels are rejected by the stacked model") {
  Rng rng(29);
  const auto k = testing::random_hmk(rng, 1, 1, 2, false);
  InducingFrequencies z{1, {{0.1, 0.2}}};
  CHECK_THROWS_AS(VffModel(k, z), InvalidParameters);
  CHECK_THROWS_AS(compute_kuu_pseudo(k, z), InvalidParameters);
}
