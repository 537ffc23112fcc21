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

#include "hmk/ad.hpp"
#include "hmk/parallel.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

namespace hmk::optim {

using inference::sigmoid;
using inference::softplus;
using inference::softplus_inv;

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

RMatrix sym(const RMatrix& a) { return 0.5 * (a + a.transpose()); }

}  // namespace

// ---------------------------------------------------------------------------
// Adam

void AdamConfig::validate() const {
  if (!(lr > 0.0)) throw InvalidParameters("adam: lr must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw InvalidParameters("adam: betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw InvalidParameters("adam: eps must be positive");
}

void adam_step(std::vector<double>& params, std::span<const double> grads, AdamState& state,
               const AdamConfig& cfg) {
  cfg.validate();
  if (grads.size() != params.size()) throw linalg::ShapeMismatch("adam_step: gradient size");
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  if (state.m.size() != params.size()) throw linalg::ShapeMismatch("adam_step: state size");
  ++state.t;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    state.m[k] = cfg.beta1 * state.m[k] + (1.0 - cfg.beta1) * grads[k];
    state.v[k] = cfg.beta2 * state.v[k] + (1.0 - cfg.beta2) * grads[k] * grads[k];
    const double mh = state.m[k] / c1;
    const double vh = state.v[k] / c2;
    params[k] -= cfg.lr * mh / (std::sqrt(vh) + cfg.eps);
  }
}

// ---------------------------------------------------------------------------
// Natural gradients

double natgrad_step(VariationalState& q, const RVector& g_mean, const RMatrix& g_cov, double gamma,
                    int max_halvings) {
  const Index m = q.mean.size();
  if (g_mean.size() != m || g_cov.rows() != m || g_cov.cols() != m || q.cov.rows() != m) {
    throw linalg::ShapeMismatch("natgrad_step: size mismatch");
  }
  if (!(gamma > 0.0)) throw InvalidParameters("natgrad_step: step size must be positive");
  if (g_mean.cwiseAbs().maxCoeff() == 0.0 && g_cov.cwiseAbs().maxCoeff() == 0.0) return gamma;

  const auto ls = linalg::cholesky_hermitian(linalg::HermitianMatrix<double>(q.cov), 0.0);
  const RMatrix prec = linalg::inverse(ls);
  const RVector theta1 = prec * q.mean;
  const RMatrix gs = sym(g_cov);
  const RVector d1 = g_mean - 2.0 * gs * q.mean;

  double g = gamma;
  for (int h = 0; h <= max_halvings; ++h, g *= 0.5) {
    const RMatrix new_prec = sym(prec - 2.0 * g * gs);
    try {
      const auto lp = linalg::cholesky_hermitian(linalg::HermitianMatrix<double>(new_prec), 0.0);
      RMatrix s = linalg::inverse(lp);
      linalg::cholesky_hermitian(linalg::HermitianMatrix<double>(s), 0.0);
      q.mean = s * (theta1 + g * d1);
      q.cov = std::move(s);
      return g;
    } catch (const linalg::NotPositiveDefinite&) {
    }
  }
  throw StepFailed("natgrad_step: covariance not positive definite after step halving");
}

// ---------------------------------------------------------------------------
// Gradient check

GradCheckReport gradcheck(const Loss& loss, std::span<const double> params, std::span<const double> analytic,
                          double h_fd) {
  if (params.size() != analytic.size()) throw linalg::ShapeMismatch("gradcheck: gradient size");
  GradCheckReport r;
  r.rel_error.assign(params.size(), 0.0);
  std::vector<double> p(params.begin(), params.end());
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double h = h_fd * (1.0 + std::abs(params[k]));
    p[k] = params[k] + h;
    const double fp = loss(p);
    p[k] = params[k] - h;
    const double fm = loss(p);
    p[k] = params[k];
    const double fd = (fp - fm) / (2.0 * h);
    const double scale = std::max(std::abs(analytic[k]), std::abs(fd));
    if (scale > 1e-8) r.rel_error[k] = std::abs(analytic[k] - fd) / scale;
    if (!std::isfinite(fd) || !std::isfinite(analytic[k])) r.rel_error[k] = std::numeric_limits<double>::infinity();
    r.max_rel_error = std::max(r.max_rel_error, r.rel_error[k]);
  }
  r.pass = r.max_rel_error < 1e-4;
  return r;
}

// ---------------------------------------------------------------------------
// Initialisation

Inputs kmeans(const Inputs& x, int k, Rng& rng, int iterations) {
  const Index n = x.rows();
  if (k < 1 || n < k) throw InvalidParameters("kmeans: need 1 <= k <= n");
  Inputs c(k, x.cols());
  // k-means++ seeding.
  c.row(0) = x.row(static_cast<Index>(rng.below(static_cast<std::uint64_t>(n))));
  RVector d2 = (x.rowwise() - c.row(0)).rowwise().squaredNorm();
  for (int j = 1; j < k; ++j) {
    const double total = d2.sum();
    Index pick = n - 1;
    if (total > 0.0) {
      double u = rng.uniform() * total;
      for (Index i = 0; i < n; ++i) {
        u -= d2(i);
        if (u < 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<Index>(rng.below(static_cast<std::uint64_t>(n)));
    }
    c.row(j) = x.row(pick);
    d2 = d2.cwiseMin((x.rowwise() - c.row(j)).rowwise().squaredNorm());
  }
  std::vector<int> label(static_cast<std::size_t>(n), -1);
  for (int it = 0; it < iterations; ++it) {
    bool changed = false;
    for (Index i = 0; i < n; ++i) {
      Index best = 0;
      (c.rowwise() - x.row(i)).rowwise().squaredNorm().minCoeff(&best);
      if (label[i] != static_cast<int>(best)) {
        label[i] = static_cast<int>(best);
        changed = true;
      }
    }
    if (!changed) break;
    Inputs sum = Inputs::Zero(k, x.cols());
    std::vector<int> count(static_cast<std::size_t>(k), 0);
    for (Index i = 0; i < n; ++i) {
      sum.row(label[i]) += x.row(i);
      ++count[label[i]];
    }
    for (int j = 0; j < k; ++j) {
      if (count[j] > 0) c.row(j) = sum.row(j) / count[j];
    }
  }
  return c;
}

std::vector<double> dominant_frequencies(const Inputs& x, const RVector& r, int count, double max_freq, int scan) {
  if (x.cols() != 1) throw InvalidParameters("dominant_frequencies: one-dimensional inputs only");
  if (count < 1 || scan < 3 || !(max_freq > 0.0)) throw InvalidParameters("dominant_frequencies: bad arguments");
  std::vector<double> freq(static_cast<std::size_t>(scan)), power(static_cast<std::size_t>(scan));
  for (int s = 0; s < scan; ++s) {
    const double f = max_freq * (s + 1) / scan;
    double re = 0.0, im = 0.0;
    for (Index i = 0; i < x.rows(); ++i) {
      const double th = 2.0 * kPi * f * x(i, 0);
      re += r(i) * std::cos(th);
      im -= r(i) * std::sin(th);
    }
    freq[s] = f;
    power[s] = re * re + im * im;
  }
  std::vector<int> peaks;
  for (int s = 0; s < scan; ++s) {
    const bool left = s == 0 || power[s] >= power[s - 1];
    const bool right = s == scan - 1 || power[s] >= power[s + 1];
    if (left && right) peaks.push_back(s);
  }
  std::stable_sort(peaks.begin(), peaks.end(), [&](int a, int b) { return power[a] > power[b]; });
  std::vector<double> out;
  for (int s : peaks) {
    if (static_cast<int>(out.size()) == count) break;
    out.push_back(freq[s]);
  }
  for (int s = 0; static_cast<int>(out.size()) < count; ++s) out.push_back(freq[static_cast<std::size_t>(s % scan)]);
  return out;
}

namespace {

double variance(const RVector& y) {
  const double mean = y.mean();
  return (y.array() - mean).square().mean();
}

std::vector<Cx<double>> diagonal_factor(int q, double scale, Rng& rng) {
  std::vector<Cx<double>> l(static_cast<std::size_t>(q * q), Cx<double>(0.0, 0.0));
  for (int i = 0; i < q; ++i) {
    for (int j = 0; j <= i; ++j) {
      l[static_cast<std::size_t>(i * q + j)] =
          i == j ? Cx<double>(scale * rng.uniform(0.7, 1.3), 0.0) : Cx<double>(0.05 * scale * rng.normal(), 0.0);
    }
  }
  return l;
}

}  // namespace

HMKParams init_hmk(const Inputs& x, const RVector& y, const HMKInitConfig& cfg, Rng& rng) {
  const int dim = static_cast<int>(x.cols());
  const int p = cfg.components;
  const int q = cfg.freqs;
  if (p < 1 || q < 1) throw InvalidParameters("init_hmk: components and freqs must be positive");
  const Inputs centres = kmeans(x, p, rng);
  std::vector<double> sd(static_cast<std::size_t>(dim));
  for (int d = 0; d < dim; ++d) {
    const double mean = x.col(d).mean();
    sd[d] = std::max(std::sqrt((x.col(d).array() - mean).square().mean()), 1e-12);
  }
  std::vector<double> peaks;
  if (dim == 1) peaks = dominant_frequencies(x, (y.array() - y.mean()).matrix(), p * q, cfg.max_freq);
  const double amp = std::sqrt(std::max(variance(y), 1e-12) / (p * q));

  HMKParams k;
  k.real_valued = true;
  for (int c = 0; c < p; ++c) {
    HMKComponent comp;
    comp.lambda2 = rng.uniform(0.03, 0.15);
    for (int d = 0; d < dim; ++d) {
      comp.center.push_back(centres(c, d));
      comp.gamma.push_back(1.0 / sd[d]);
      comp.sigma1.push_back(4.0 * comp.lambda2 * rng.uniform(0.05, 0.3));
    }
    for (int j = 0; j < q; ++j) {
      for (int d = 0; d < dim; ++d) {
        const double base = dim == 1 ? peaks[static_cast<std::size_t>(c * q + j)]
                                     : (j == 0 ? 0.0 : rng.uniform(-0.5, 0.5) / sd[d]);
        comp.mu.push_back(base + cfg.freq_noise * rng.normal() / sd[d]);
      }
    }
    comp.b_chol = diagonal_factor(q, amp, rng);
    k.components.push_back(std::move(comp));
  }
  validate(k);
  return k;
}

inference::InducingFrequencies init_inducing(const HMKParams& k, int per_component, double spread, Rng& rng) {
  if (per_component < 1) throw InvalidParameters("init_inducing: need at least one frequency per component");
  inference::InducingFrequencies z;
  z.dim = k.dim();
  for (const auto& c : k.components) {
    std::vector<double> f;
    const int q = c.num_freqs();
    for (int j = 0; j < per_component; ++j) {
      for (int d = 0; d < z.dim; ++d) {
        f.push_back(c.mu[static_cast<std::size_t>((j % q) * z.dim + d)] + spread * rng.normal());
      }
    }
    z.freqs.push_back(std::move(f));
  }
  return z;
}

SMParams init_sm(const Inputs& x, const RVector& y, int components, double max_freq, Rng& rng) {
  const int dim = static_cast<int>(x.cols());
  if (components < 1) throw InvalidParameters("init_sm: need at least one component");
  std::vector<double> peaks;
  if (dim == 1) peaks = dominant_frequencies(x, (y.array() - y.mean()).matrix(), components, max_freq);
  SMParams s;
  const double w = std::max(variance(y), 1e-12) / components;
  for (int c = 0; c < components; ++c) {
    s.weights.push_back(w * rng.uniform(0.7, 1.3));
    for (int d = 0; d < dim; ++d) {
      const double mean = x.col(d).mean();
      const double sd = std::max(std::sqrt((x.col(d).array() - mean).square().mean()), 1e-12);
      s.means.push_back(dim == 1 ? peaks[static_cast<std::size_t>(c)] : rng.uniform(0.0, 0.5) / sd);
      const double ell = std::exp(rng.uniform(std::log(0.02), 0.0)) * sd;
      s.variances.push_back(1.0 / (4.0 * kPi * kPi * ell * ell));
    }
  }
  validate(s);
  return s;
}

// ---------------------------------------------------------------------------
// Kernel recovery

double recovery_mse(const HMKParams& p, const Inputs& grid, const RMatrix& target) {
  const RMatrix k = par::gram_real(p, grid);
  return (k - target).squaredNorm() / static_cast<double>(k.size());
}

HMKParams random_recovery_init(const Inputs& grid, const RMatrix& target, int components, int freqs, Rng& rng) {
  const int dim = static_cast<int>(grid.cols());
  const Inputs centres = kmeans(grid, components, rng);
  const double scale = std::max(target.diagonal().cwiseAbs().maxCoeff(), 1e-12);
  HMKParams k;
  k.real_valued = true;
  for (int c = 0; c < components; ++c) {
    HMKComponent comp;
    comp.lambda2 = rng.uniform(0.02, 0.3);
    for (int d = 0; d < dim; ++d) {
      const double range = std::max(grid.col(d).maxCoeff() - grid.col(d).minCoeff(), 1e-12);
      comp.center.push_back(centres(c, d));
      comp.gamma.push_back(1.0 / range);
      comp.sigma1.push_back(4.0 * comp.lambda2 * rng.uniform(0.05, 0.5));
    }
    for (int j = 0; j < freqs; ++j) {
      for (int d = 0; d < dim; ++d) {
        const double range = std::max(grid.col(d).maxCoeff() - grid.col(d).minCoeff(), 1e-12);
        comp.mu.push_back(rng.uniform(0.0, 3.0) / range);
      }
    }
    comp.b_chol = diagonal_factor(freqs, std::sqrt(scale / (components * freqs)), rng);
    k.components.push_back(std::move(comp));
  }
  return k;
}

namespace {

template <int N>
void recovery_component_grad(const HMKComponent& c, const Inputs& grid, const std::vector<std::pair<Index, Index>>& pairs,
                             const RVector& coef, std::vector<double>& g) {
  const int lc = component_param_count(c);
  const auto lifted = lift<N>(c, 0);
  const Index b = static_cast<Index>(pairs.size());
  RMatrix buf(lc, b);
  par::for_each_index(
      b,
      [&](Index t) {
        const auto kv = component_kernel<ad::Dual<N>>(lifted, par::row(grid, pairs[t].first),
                                                      par::row(grid, pairs[t].second));
        for (int k = 0; k < lc; ++k) buf(k, t) = coef(t) * kv.re.d[k];
      },
      par::Exec::kOpenMP);
  for (Index t = 0; t < b; ++t) {
    for (int k = 0; k < lc; ++k) g[k] += buf(k, t);
  }
}

/// Raw recovery parameters: component_to_raw blocks concatenated.
struct RawLayout {
  std::vector<double> raw;
  std::vector<std::size_t> offsets;

  explicit RawLayout(const HMKParams& k) {
    for (const auto& c : k.components) {
      offsets.push_back(raw.size());
      const auto r = inference::component_to_raw(c);
      raw.insert(raw.end(), r.begin(), r.end());
    }
  }

  std::span<const double> block(const HMKParams& k, std::size_t p) const {
    return std::span<const double>(raw).subspan(offsets[p], static_cast<std::size_t>(component_param_count(k.components[p])));
  }

  void unpack(HMKParams& k) const {
    for (std::size_t p = 0; p < k.components.size(); ++p) {
      auto& c = k.components[p];
      c = inference::component_from_raw(block(k, p), k.dim(), c.num_freqs());
    }
  }
};

/// Mean squared error over `pairs` and its gradient w.r.t. the raw layout.
double pairs_objective(const HMKParams& k, const RawLayout& layout, const Inputs& grid, const RMatrix& target,
                       const std::vector<std::pair<Index, Index>>& pairs, std::vector<double>& g) {
  const auto b = static_cast<Index>(pairs.size());
  RVector resid(b);
  for (Index t = 0; t < b; ++t) {
    const auto& [i, j] = pairs[static_cast<std::size_t>(t)];
    resid(t) = eval_hmk(par::row(grid, i), par::row(grid, j), k).real() - target(i, j);
  }
  const RVector coef = resid * (2.0 / static_cast<double>(b));
  g.assign(layout.raw.size(), 0.0);
  for (std::size_t p = 0; p < k.components.size(); ++p) {
    const auto& c = k.components[p];
    const int lc = component_param_count(c);
    std::vector<double> gc(static_cast<std::size_t>(lc), 0.0);
    ad::dispatch_lanes(lc, [&]<int N>() { recovery_component_grad<N>(c, grid, pairs, coef, gc); });
    inference::component_raw_gradient(layout.block(k, p), gc, k.dim(), c.num_freqs(),
                                      std::span<double>(g).subspan(layout.offsets[p], static_cast<std::size_t>(lc)));
  }
  return resid.squaredNorm() / static_cast<double>(b);
}

struct RecoveryRun {
  HMKParams params;
  double mse;
  Trace trace;
};

RecoveryRun recover_once(const HMKParams& init, const Inputs& grid, const RMatrix& target, const RecoveryConfig& cfg,
                         Rng rng) {
  const auto start = Clock::now();
  HMKParams k = init;
  k.real_valued = true;
  RawLayout layout(k);
  layout.unpack(k);

  RecoveryRun run{k, recovery_mse(k, grid, target), {}};
  run.trace.push_back({0, run.mse, elapsed_ms(start)});
  const Index n = grid.rows();
  AdamState st;
  std::vector<std::pair<Index, Index>> pairs(static_cast<std::size_t>(cfg.batch));
  std::vector<double> g;
  for (int it = 1; it <= cfg.iterations; ++it) {
    for (auto& pr : pairs) {
      pr.first = static_cast<Index>(rng.below(static_cast<std::uint64_t>(n)));
      pr.second = static_cast<Index>(rng.below(static_cast<std::uint64_t>(n)));
    }
    pairs_objective(k, layout, grid, target, pairs, g);
    adam_step(layout.raw, g, st, cfg.adam);
    layout.unpack(k);
    if (it % cfg.trace_every == 0 || it == cfg.iterations) {
      const double mse = recovery_mse(k, grid, target);
      run.trace.push_back({it, mse, elapsed_ms(start)});
      if (mse < run.mse) {
        run.mse = mse;
        run.params = k;
      }
    }
  }
  return run;
}

}  // namespace

std::vector<double> recovery_raw(const HMKParams& k) { return RawLayout(k).raw; }

HMKParams recovery_from_raw(const HMKParams& shape, std::span<const double> raw) {
  RawLayout layout(shape);
  if (raw.size() != layout.raw.size()) throw linalg::ShapeMismatch("recovery_from_raw: size");
  layout.raw.assign(raw.begin(), raw.end());
  HMKParams k = shape;
  k.real_valued = true;
  layout.unpack(k);
  return k;
}

double recovery_objective(const HMKParams& k, const Inputs& grid, const RMatrix& target, std::vector<double>& grad) {
  const Index n = grid.rows();
  if (target.rows() != n || target.cols() != n) throw linalg::ShapeMismatch("recovery_objective: target size");
  std::vector<std::pair<Index, Index>> pairs;
  pairs.reserve(static_cast<std::size_t>(n * n));
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) pairs.emplace_back(i, j);
  }
  return pairs_objective(k, RawLayout(k), grid, target, pairs, grad);
}

RecoveryResult recover_kernel(const TargetKernel& target, const HMKParams& init, const Inputs& grid,
                              const RecoveryConfig& cfg) {
  cfg.adam.validate();
  if (cfg.restarts < 1 || cfg.batch < 1 || cfg.iterations < 0) throw InvalidParameters("recover_kernel: bad config");
  validate(init);
  const Index n = grid.rows();
  RMatrix t(n, n);
  par::assemble(t, [&](Index i, Index j) { return target(par::row(grid, i), par::row(grid, j)); },
                par::Exec::kSerial);

  Rng rng(cfg.seed);
  RecoveryResult best;
  best.mse = std::numeric_limits<double>::infinity();
  for (int r = 0; r < cfg.restarts; ++r) {
    Rng stream = rng.split();
    const HMKParams start =
        r == 0 ? init : random_recovery_init(grid, t, init.num_components(), init.components[0].num_freqs(), stream);
    auto run = recover_once(start, grid, t, cfg, stream.split());
    best.restart_mse.push_back(run.mse);
    if (run.mse < best.mse) {
      best.mse = run.mse;
      best.params = std::move(run.params);
      best.trace = std::move(run.trace);
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Sparse GP training

namespace {

/// Uniform minibatches without replacement within each epoch.
class Batcher {
 public:
  Batcher(Index n, int batch, Rng& rng) : n_(n), batch_(std::min<Index>(batch, n)), rng_(rng) {}

  void next(const Inputs& x, const RVector& y, Inputs& xb, RVector& yb) {
    xb.resize(batch_, x.cols());
    yb.resize(batch_);
    for (Index t = 0; t < batch_; ++t) {
      if (pos_ >= order_.size()) {
        order_ = rng_.permutation(static_cast<std::size_t>(n_));
        pos_ = 0;
      }
      const auto i = static_cast<Index>(order_[pos_++]);
      xb.row(t) = x.row(i);
      yb(t) = y(i);
    }
  }

  Index batch() const { return batch_; }

 private:
  Index n_, batch_;
  Rng& rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

double full_elbo(const SparseModel& model, const VariationalState& q, const Likelihood& lik, const Inputs& x,
                 const RVector& y) {
  const inference::Prior prior(model.kuu(), model.blocks());
  return inference::elbo_terms(prior, model.kuf(x), model.kdiag(x), y, lik, q, 1.0, false).value;
}

}  // namespace

Trace train_alternating(SparseModel& model, VariationalState& q, Likelihood& lik, const Inputs& x,
                        const RVector& y, const TrainConfig& cfg) {
  cfg.adam.validate();
  if (cfg.schedule.alternating_rounds < 0 || cfg.schedule.natgrad_warmup_iters < 0 || cfg.schedule.batch < 1) {
    throw InvalidParameters("train_alternating: bad schedule");
  }
  if (x.rows() == 0 || x.rows() != y.size()) throw linalg::ShapeMismatch("train_alternating: data size");
  const auto start = Clock::now();
  Trace trace;
  trace.push_back({0, full_elbo(model, q, lik, x, y), elapsed_ms(start)});
  if (cfg.schedule.alternating_rounds == 0) return trace;

  Rng rng(cfg.seed);
  Batcher batcher(x.rows(), cfg.schedule.batch, rng);
  const double scale = static_cast<double>(x.rows()) / static_cast<double>(batcher.batch());
  const bool noise = cfg.train_noise && lik.kind == Likelihood::Kind::kGaussian;

  std::vector<double> params = model.params();
  if (noise) params.push_back(softplus_inv(lik.noise_var));
  AdamState adam;
  Inputs xb;
  RVector yb;
  int iter = 0;

  auto natgrad = [&]() {
    const inference::Prior prior(model.kuu(), model.blocks());
    const auto e = inference::elbo_terms(prior, model.kuf(xb), model.kdiag(xb), yb, lik, q, scale, true);
    natgrad_step(q, e.g_mean, e.g_cov, cfg.natgrad_gamma);
  };

  for (int w = 0; w < cfg.schedule.natgrad_warmup_iters; ++w) {
    batcher.next(x, y, xb, yb);
    natgrad();
    trace.push_back({++iter, full_elbo(model, q, lik, x, y), elapsed_ms(start)});
  }
  for (int r = 0; r < cfg.schedule.alternating_rounds; ++r) {
    batcher.next(x, y, xb, yb);
    natgrad();
    const inference::Prior prior(model.kuu(), model.blocks());
    const auto e = inference::elbo_terms(prior, model.kuf(xb), model.kdiag(xb), yb, lik, q, scale, true);
    std::vector<double> g = model.backprop(xb, e.g_kuu, e.g_kuf, e.g_kdiag);
    if (noise) g.push_back(e.g_noise * sigmoid(params.back()));
    for (double& v : g) v = -v;
    adam_step(params, g, adam, cfg.adam);
    model.set_params(std::span<const double>(params).first(static_cast<std::size_t>(model.num_params())));
    if (noise) lik.noise_var = softplus(params.back());
    trace.push_back({++iter, full_elbo(model, q, lik, x, y), elapsed_ms(start)});
  }
  return trace;
}

Trace train_alternating(inference::SparseGPState& state, const Inputs& x, const RVector& y, const TrainConfig& cfg) {
  inference::VffModel model(state.kernel, state.inducing);
  Trace t = train_alternating(model, state.q, state.lik, x, y, cfg);
  state.kernel = model.kernel();
  state.inducing = model.inducing();
  return t;
}

Trace train_collapsed(SparseModel& model, double& noise_var, const Inputs& x, const RVector& y,
                      const CollapsedConfig& cfg) {
  cfg.adam.validate();
  if (!(noise_var > cfg.min_noise)) throw InvalidParameters("train_collapsed: noise below its floor");
  const auto start = Clock::now();
  std::vector<double> params = model.params();
  if (cfg.train_noise) params.push_back(softplus_inv(noise_var - cfg.min_noise));
  AdamState adam;
  Trace trace;
  for (int it = 0;; ++it) {
    const inference::Prior prior(model.kuu(), model.blocks());
    const bool last = it == cfg.iterations;
    const auto r = inference::collapsed_terms(prior, model.kuf(x), model.kdiag(x), y, noise_var, !last);
    trace.push_back({it, r.value, elapsed_ms(start)});
    if (last) break;
    std::vector<double> g = model.backprop(x, r.g_kuu, r.g_kuf, r.g_kdiag);
    if (cfg.train_noise) g.push_back(r.g_noise * sigmoid(params.back()));
    for (double& v : g) v = -v;
    adam_step(params, g, adam, cfg.adam);
    model.set_params(std::span<const double>(params).first(static_cast<std::size_t>(model.num_params())));
    if (cfg.train_noise) noise_var = cfg.min_noise + softplus(params.back());
  }
  return trace;
}

}  // namespace hmk::optim
