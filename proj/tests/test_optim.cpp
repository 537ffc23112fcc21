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

#include "hmk/optim.hpp"
#include "hmk/parallel.hpp"
#include "support.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <Eigen/Dense>

#include <cmath>

using namespace hmk;
using namespace hmk::optim;
using inference::Prior;
using inference::VffModel;
using linalg::RMatrix;
using linalg::RVector;

namespace {

struct Problem {
  HMKParams kernel;
  inference::InducingFrequencies z;
  Inputs x;
  RVector y;
};

Problem make_problem(Rng& rng, Index n, int p, int q, int mp, double noise) {
  Problem pr;
  pr.kernel = testing::random_hmk(rng, 1, p, q, true);
  pr.z = init_inducing(pr.kernel, mp, 0.5, rng);
  pr.x.resize(n, 1);
  for (Index i = 0; i < n; ++i) pr.x(i, 0) = rng.uniform(-1.0, 1.0);
  const RMatrix k = par::gram_real(pr.kernel, pr.x) + (noise + 1e-9) * RMatrix::Identity(n, n);
  const Eigen::LLT<RMatrix> llt(k);
  RVector e(n);
  for (Index i = 0; i < n; ++i) e(i) = rng.normal();
  pr.y = llt.matrixL() * e;
  return pr;
}

inference::ElboResult full_terms(const VffModel& model, const Problem& pr, const Likelihood& lik,
                                 const VariationalState& q) {
  const Prior prior(model.kuu(), model.blocks());
  return inference::elbo_terms(prior, model.kuf(pr.x), model.kdiag(pr.x), pr.y, lik, q, 1.0, true);
}

RVector to_signs(const RVector& y) {
  RVector s(y.size());
  for (Index i = 0; i < y.size(); ++i) s(i) = y(i) > 0.0 ? 1.0 : -1.0;
  return s;
}

}  // namespace

TEST_CASE("Adam leaves parameters alone under a zero gradient") {
  std::vector<double> p{1.0, -2.0, 3.5};
  const auto before = p;
  AdamState s;
  for (int i = 0; i < 10; ++i) adam_step(p, std::vector<double>(3, 0.0), s, {});
  CHECK(p == before);
}

TEST_CASE("first Adam step under a constant gradient moves by the learning rate") {
  const AdamConfig cfg{0.05, 0.9, 0.999, 1e-8};
  std::vector<double> p{0.0, 1.0};
  AdamState s;
  const std::vector<double> g{2.0, -0.3};
  adam_step(p, g, s, cfg);
  CHECK(p[0] == doctest::Approx(-0.05).epsilon(1e-6));
  CHECK(p[1] == doctest::Approx(1.05).epsilon(1e-6));
  for (int i = 0; i < 999; ++i) {
    const double before = p[0];
    adam_step(p, g, s, cfg);
    // bias correction keeps every step at lr for a constant gradient
    CHECK(std::abs(before - p[0]) == doctest::Approx(0.05).epsilon(1e-3));
  }
}

TEST_CASE("Adam trajectories are reproducible") {
  Rng rng(12);
  std::vector<std::vector<double>> grads;
  for (int i = 0; i < 50; ++i) grads.push_back({rng.normal(), rng.normal(), rng.normal()});
  auto run = [&]() {
    std::vector<double> p{0.1, 0.2, 0.3};
    AdamState s;
    for (const auto& g : grads) adam_step(p, g, s, {});
    return p;
  };
  CHECK(run() == run());
}

TEST_CASE("Adam rejects invalid configurations and mismatched sizes") {
  std::vector<double> p{0.0};
  AdamState s;
  CHECK_THROWS_AS(adam_step(p, std::vector<double>{1.0}, s, {0.0, 0.9, 0.999, 1e-8}), InvalidParameters);
  CHECK_THROWS_AS(adam_step(p, std::vector<double>{1.0}, s, {0.1, 1.0, 0.999, 1e-8}), InvalidParameters);
  CHECK_THROWS_AS(adam_step(p, std::vector<double>{1.0, 2.0}, s, {}), linalg::ShapeMismatch);
}

TEST_CASE("unit natural gradient step reaches the conjugate optimum") {
  Rng rng(1);
  for (Index n : {5, 30}) {
    const auto pr = make_problem(rng, n, 2, 2, 3, 0.1);
    const VffModel model(pr.kernel, pr.z);
    const Likelihood lik{Likelihood::Kind::kGaussian, 0.1, 20};
    auto q = inference::prior_state(model);
    const auto e = full_terms(model, pr, lik, q);
    CHECK(natgrad_step(q, e.g_mean, e.g_cov, 1.0) == 1.0);

    const Prior prior(model.kuu(), model.blocks());
    const auto opt = inference::collapsed_terms(prior, model.kuf(pr.x), model.kdiag(pr.x), pr.y, lik.noise_var, false);
    const double scale = opt.optimal.cov.cwiseAbs().maxCoeff();
    CHECK((q.mean - opt.optimal.mean).cwiseAbs().maxCoeff() < 1e-6 * std::max(1.0, opt.optimal.mean.cwiseAbs().maxCoeff()));
    CHECK((q.cov - opt.optimal.cov).cwiseAbs().maxCoeff() < 1e-6 * scale);
    CHECK(full_terms(model, pr, lik, q).value == doctest::Approx(opt.value).epsilon(1e-8));
  }
}

TEST_CASE("natural gradient step is the identity under a zero gradient") {
  Rng rng(2);
  VariationalState q{testing::random_real(rng, 4, 1).col(0), testing::random_real(rng, 4, 4)};
  q.cov = q.cov * q.cov.transpose() + RMatrix::Identity(4, 4);
  const auto before = q;
  natgrad_step(q, RVector::Zero(4), RMatrix::Zero(4, 4), 0.1);
  CHECK(q.mean == before.mean);
  CHECK(q.cov == before.cov);
}

TEST_CASE("natural gradient ascent is monotone and keeps S positive definite") {
  Rng rng(3);
  for (auto kind : {Likelihood::Kind::kGaussian, Likelihood::Kind::kBernoulli}) {
    auto pr = make_problem(rng, 40, 2, 2, 3, 0.1);
    if (kind == Likelihood::Kind::kBernoulli) pr.y = to_signs(pr.y);
    const VffModel model(pr.kernel, pr.z);
    const Likelihood lik{kind, 0.1, 20};
    auto q = inference::prior_state(model);
    double prev = full_terms(model, pr, lik, q).value;
    for (int it = 0; it < 50; ++it) {
      const auto e = full_terms(model, pr, lik, q);
      natgrad_step(q, e.g_mean, e.g_cov, 0.1);
      const double cur = full_terms(model, pr, lik, q).value;
      CHECK(cur >= prev - 1e-9 * std::abs(prev));
      prev = cur;
      CHECK(Eigen::LLT<RMatrix>(q.cov).info() == Eigen::Success);
    }
  }
}

TEST_CASE("natural gradient step halves until S stays positive definite") {
  VariationalState q{RVector::Zero(2), RMatrix::Identity(2, 2)};
  RMatrix g = RMatrix::Zero(2, 2);
  g(0, 0) = 1.0;  // new precision 1 - 2 gamma
  const double used = natgrad_step(q, RVector::Zero(2), g, 1.0);
  CHECK(used == 0.25);
  CHECK(q.cov(0, 0) == doctest::Approx(2.0));

  VariationalState q2{RVector::Zero(2), RMatrix::Identity(2, 2)};
  CHECK_THROWS_AS(natgrad_step(q2, RVector::Zero(2), 1e6 * g, 1.0, 3), StepFailed);
}

TEST_CASE("gradient checker accepts exact gradients and flags wrong ones") {
  const RMatrix a = (RMatrix(3, 3) << 3.0, 0.5, -0.2, 0.5, 2.0, 0.1, -0.2, 0.1, 1.0).finished();
  const Loss loss = [&](std::span<const double> p) {
    const Eigen::Map<const RVector> v(p.data(), 3);
    return 0.5 * v.dot(a * v) + std::sin(v(0));
  };
  const std::vector<double> p{0.3, -1.2, 0.7};
  const Eigen::Map<const RVector> v(p.data(), 3);
  RVector g = a * v;
  g(0) += std::cos(p[0]);
  std::vector<double> good(g.data(), g.data() + 3);
  const auto ok = gradcheck(loss, p, good);
  CHECK(ok.pass);
  CHECK(ok.max_rel_error < 1e-7);

  auto bad = good;
  bad[1] *= 1.01;
  const auto fail = gradcheck(loss, p, bad);
  CHECK_FALSE(fail.pass);
  CHECK(fail.rel_error[1] > 5e-3);
  CHECK(fail.rel_error[0] < 1e-7);
}

TEST_CASE("recovering a kernel from its own parameters keeps zero error") {
  Rng rng(4);
  const auto truth = testing::random_hmk(rng, 1, 2, 2, true);
  Inputs grid(20, 1);
  for (Index i = 0; i < 20; ++i) grid(i, 0) = -1.0 + 2.0 * static_cast<double>(i) / 19.0;
  const TargetKernel target = [&](std::span<const double> a, std::span<const double> b) {
    return eval_hmk(a, b, truth).real();
  };
  RecoveryConfig cfg;
  cfg.iterations = 30;
  cfg.restarts = 1;
  const auto r = recover_kernel(target, truth, grid, cfg);
  CHECK(r.trace.front().objective < 1e-28);
  CHECK(r.mse < 1e-12);
  CHECK(r.restart_mse.size() == 1);
}

TEST_CASE("recovery reduces the error and is deterministic under a seed") {
  Rng rng(5);
  const auto truth = testing::random_hmk(rng, 1, 1, 2, true);
  Inputs grid(15, 1);
  for (Index i = 0; i < 15; ++i) grid(i, 0) = -1.0 + 2.0 * static_cast<double>(i) / 14.0;
  const TargetKernel target = [&](std::span<const double> a, std::span<const double> b) {
    return eval_hmk(a, b, truth).real();
  };
  RMatrix t(15, 15);
  for (Index i = 0; i < 15; ++i) {
    for (Index j = 0; j < 15; ++j) t(i, j) = target(par::row(grid, i), par::row(grid, j));
  }
  Rng init_rng(6);
  const auto init = random_recovery_init(grid, t, 1, 2, init_rng);
  RecoveryConfig cfg;
  cfg.iterations = 200;
  cfg.restarts = 2;
  cfg.seed = 9;
  const auto a = recover_kernel(target, init, grid, cfg);
  const auto b = recover_kernel(target, init, grid, cfg);
  CHECK(a.mse < recovery_mse(init, grid, t));
  CHECK(a.mse == b.mse);
  CHECK(a.restart_mse == b.restart_mse);
  CHECK_FALSE(a.trace.empty());
}

TEST_CASE("k-means recovers separated clusters") {
  Rng rng(7);
  Inputs x(90, 2);
  const double centres[3][2] = {{-5.0, 0.0}, {0.0, 5.0}, {5.0, 0.0}};
  for (Index i = 0; i < 90; ++i) {
    for (int d = 0; d < 2; ++d) x(i, d) = centres[i % 3][d] + 0.1 * rng.normal();
  }
  const auto c = kmeans(x, 3, rng);
  REQUIRE(c.rows() == 3);
  for (const auto& ctr : centres) {
    double best = 1e9;
    for (Index k = 0; k < 3; ++k) best = std::min(best, std::hypot(c(k, 0) - ctr[0], c(k, 1) - ctr[1]));
    CHECK(best < 0.1);
  }
  CHECK_THROWS_AS(kmeans(x, 0, rng), InvalidParameters);
}

TEST_CASE("dominant frequencies find a planted sinusoid") {
  Inputs x(200, 1);
  RVector r(200);
  for (Index i = 0; i < 200; ++i) {
    x(i, 0) = 0.05 * static_cast<double>(i);
    r(i) = std::cos(2.0 * M_PI * 0.7 * x(i, 0)) + 0.3 * std::cos(2.0 * M_PI * 1.6 * x(i, 0));
  }
  const auto f = dominant_frequencies(x, r, 2, 2.0);
  REQUIRE(f.size() == 2);
  CHECK(f[0] == doctest::Approx(0.7).epsilon(0.03));
  CHECK(f[1] == doctest::Approx(1.6).epsilon(0.03));
}

TEST_CASE("zero alternating rounds leave the state unchanged") {
  Rng rng(8);
  const auto pr = make_problem(rng, 30, 2, 2, 2, 0.1);
  inference::SparseGPState s{pr.kernel, pr.z, {}, {Likelihood::Kind::kGaussian, 0.2, 20}};
  s.q = inference::prior_state(VffModel(s.kernel, s.inducing));
  const auto before = inference::to_json(s);
  TrainConfig cfg;
  cfg.schedule.alternating_rounds = 0;
  const auto trace = train_alternating(s, pr.x, pr.y, cfg);
  CHECK(trace.size() == 1);
  CHECK(inference::to_json(s) == before);
}

TEST_CASE("alternating training is deterministic and improves the bound") {
  Rng rng(9);
  const auto pr = make_problem(rng, 60, 2, 2, 2, 0.1);
  TrainConfig cfg;
  cfg.schedule = {20, 40, 20};
  cfg.seed = 11;
  auto run = [&]() {
    inference::SparseGPState s{pr.kernel, pr.z, {}, {Likelihood::Kind::kGaussian, 0.2, 20}};
    s.q = inference::prior_state(VffModel(s.kernel, s.inducing));
    const auto t = train_alternating(s, pr.x, pr.y, cfg);
    return std::make_pair(t, inference::to_json(s));
  };
  const auto [ta, sa] = run();
  const auto [tb, sb] = run();
  CHECK(sa == sb);
  REQUIRE(ta.size() == 61);
  for (std::size_t i = 0; i < ta.size(); ++i) {
    CHECK(std::isfinite(ta[i].objective));
    CHECK(ta[i].objective == tb[i].objective);
  }
  CHECK(ta.back().objective > ta.front().objective);
}

TEST_CASE("collapsed training increases the bound") {
  Rng rng(10);
  const auto pr = make_problem(rng, 40, 2, 2, 2, 0.1);
  VffModel model(pr.kernel, pr.z);
  double noise = 0.5;
  CollapsedConfig cfg;
  cfg.iterations = 60;
  const auto t = train_collapsed(model, noise, pr.x, pr.y, cfg);
  REQUIRE(t.size() == 61);
  CHECK(t.back().objective > t.front().objective);
  CHECK(noise > cfg.min_noise);
}
