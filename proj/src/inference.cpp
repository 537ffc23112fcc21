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

#include "hmk/spectral.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

namespace hmk::inference {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

RMatrix sym(const RMatrix& a) { return 0.5 * (a + a.transpose()); }

RMatrix identity(Index n) { return RMatrix::Identity(n, n); }

void require_shape(bool ok, const char* what) {
  if (!ok) throw linalg::ShapeMismatch(what);
}

}  // namespace

// ---------------------------------------------------------------------------
// Inducing frequencies and complex covariances

int InducingFrequencies::total() const {
  int t = 0;
  for (int p = 0; p < num_components(); ++p) t += count(p);
  return t;
}

std::vector<Index> InducingFrequencies::stacked_blocks() const {
  std::vector<Index> b;
  for (int p = 0; p < num_components(); ++p) b.push_back(2 * count(p));
  return b;
}

void InducingFrequencies::validate(int num_components_expected) const {
  if (dim < 1) throw InvalidParameters("InducingFrequencies: dim must be positive");
  if (num_components() != num_components_expected) {
    throw InvalidParameters("InducingFrequencies: one frequency set per component required");
  }
  for (const auto& f : freqs) {
    if (f.empty() || f.size() % static_cast<std::size_t>(dim) != 0) {
      throw InvalidParameters("InducingFrequencies: each set needs a positive multiple of dim values");
    }
    for (double v : f) {
      if (!std::isfinite(v)) throw InvalidParameters("InducingFrequencies: non-finite frequency");
    }
  }
}

namespace {

template <typename Entry>
CMatrix block_diagonal(const HMKParams& kernel, const InducingFrequencies& z, Entry entry) {
  const int m = z.total();
  CMatrix out = CMatrix::Zero(m, m);
  Index off = 0;
  for (int p = 0; p < kernel.num_components(); ++p) {
    const int mp = z.count(p);
    for (int i = 0; i < mp; ++i) {
      for (int j = 0; j < mp; ++j) {
        const Cx<double> v = entry(kernel.components[p], z.at(p, i), z.at(p, j));
        out(off + i, off + j) = cplx(v.re, v.im);
      }
    }
    off += mp;
  }
  return out;
}

void check_inputs(const HMKParams& kernel, const InducingFrequencies& z) {
  validate(kernel);
  spectral::require_integrable(kernel);
  z.validate(kernel.num_components());
  if (z.dim != kernel.dim()) throw InvalidParameters("inducing frequency dimension mismatch");
}

}  // namespace

linalg::HermitianMatrix<cplx> compute_kuu(const HMKParams& kernel, const InducingFrequencies& z) {
  check_inputs(kernel, z);
  const bool real = kernel.real_valued;
  return linalg::HermitianMatrix<cplx>(block_diagonal(
      kernel, z, [real](const HMKComponent& c, std::span<const double> a, std::span<const double> b) {
        return real ? spectral::component_gsd_real<double, double>(c, a, b)
                    : spectral::component_gsd<double, double>(c, a, b);
      }));
}

CMatrix compute_kuu_pseudo(const HMKParams& kernel, const InducingFrequencies& z) {
  check_inputs(kernel, z);
  if (!kernel.real_valued) throw InvalidParameters("compute_kuu_pseudo: defined for real-valued kernels only");
  return block_diagonal(kernel, z, [](const HMKComponent& c, std::span<const double> a, std::span<const double> b) {
    std::vector<double> nb(b.begin(), b.end());
    for (double& v : nb) v = -v;
    return spectral::component_gsd_real<double, double>(c, a, std::span<const double>(nb));
  });
}

CMatrix compute_kfu(const HMKParams& kernel, const Inputs& x, const InducingFrequencies& z) {
  check_inputs(kernel, z);
  require_shape(x.cols() == kernel.dim(), "compute_kfu: input dimension mismatch");
  const Index n = x.rows();
  CMatrix out(n, z.total());
  par::for_each_index(
      n,
      [&](Index i) {
        Index col = 0;
        for (int p = 0; p < kernel.num_components(); ++p) {
          for (int j = 0; j < z.count(p); ++j, ++col) {
            const auto v = spectral::component_cross_cov<double, double>(kernel.components[p], par::row(x, i),
                                                                         z.at(p, j), kernel.real_valued);
            out(i, col) = cplx(v.re, v.im);
          }
        }
      },
      par::Exec::kOpenMP);
  return out;
}

RMatrix stack_kuu(const CMatrix& kuu, const CMatrix& pseudo, const InducingFrequencies& z) {
  const int m = z.total();
  require_shape(kuu.rows() == m && kuu.cols() == m && pseudo.rows() == m && pseudo.cols() == m,
                "stack_kuu: size mismatch");
  RMatrix out = RMatrix::Zero(2 * m, 2 * m);
  Index off = 0;
  for (int p = 0; p < z.num_components(); ++p) {
    const int mp = z.count(p);
    const Index o2 = 2 * off;
    for (int i = 0; i < mp; ++i) {
      for (int j = 0; j < mp; ++j) {
        const cplx k = kuu(off + i, off + j);
        const cplx q = pseudo(off + i, off + j);
        out(o2 + i, o2 + j) = 0.5 * (k.real() + q.real());
        out(o2 + mp + i, o2 + mp + j) = 0.5 * (k.real() - q.real());
        out(o2 + i, o2 + mp + j) = 0.5 * (q.imag() - k.imag());
        out(o2 + mp + j, o2 + i) = out(o2 + i, o2 + mp + j);
      }
    }
    off += mp;
  }
  return out;
}

RMatrix stack_kuf(const CMatrix& kfu, const InducingFrequencies& z) {
  const int m = z.total();
  require_shape(kfu.cols() == m, "stack_kuf: size mismatch");
  RMatrix out(2 * m, kfu.rows());
  Index off = 0;
  for (int p = 0; p < z.num_components(); ++p) {
    const int mp = z.count(p);
    for (int j = 0; j < mp; ++j) {
      out.row(2 * off + j) = kfu.col(off + j).real().transpose();
      out.row(2 * off + mp + j) = -kfu.col(off + j).imag().transpose();
    }
    off += mp;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Prior

Prior::Prior(const RMatrix& kuu, const std::vector<Index>& blocks)
    : k(sym(kuu)), chol(k, blocks, false) {
  k_tilde = k;
  const auto jit = chol.jitters();
  const auto& off = chol.offsets();
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    for (Index i = 0; i < blocks[b]; ++i) k_tilde(off[b] + i, off[b] + i) += jit[b];
  }
}

RMatrix Prior::chain_jitter(const RMatrix& g) const {
  RMatrix out = g;
  const auto jit = chol.jitters();
  const auto& off = chol.offsets();
  for (std::size_t b = 0; b < jit.size(); ++b) {
    if (jit[b] == 0.0) continue;
    const Index end = b + 1 < off.size() ? off[b + 1] : k.rows();
    const Index n = end - off[b];
    const double trace = k.diagonal().segment(off[b], n).sum();
    const double coef = g.diagonal().segment(off[b], n).sum() * jit[b] / trace;
    for (Index i = off[b]; i < end; ++i) out(i, i) += coef;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Collapsed bound

CollapsedResult collapsed_terms(const Prior& prior, const RMatrix& kuf, const RVector& kdiag, const RVector& y,
                                double noise, bool grads) {
  const Index m = prior.k.rows();
  const Index n = y.size();
  require_shape(kuf.rows() == m && kuf.cols() == n && kdiag.size() == n, "collapsed_terms: size mismatch");
  if (!(noise > 0.0)) throw InvalidParameters("collapsed_terms: noise variance must be positive");
  const double s = noise;
  const double sd = std::sqrt(s);

  const RMatrix a = prior.chol.solve_lower(kuf) / sd;
  const RMatrix b = identity(m) + a * a.transpose();
  const auto lb = linalg::cholesky_hermitian(linalg::HermitianMatrix<double>(b), 0.0);
  const RVector ay = a * y;
  const RVector c = linalg::solve_lower(lb, RMatrix(ay)).col(0) / sd;

  const double yy = y.squaredNorm();
  const double kd = kdiag.sum();
  const double aa = a.squaredNorm();

  CollapsedResult r;
  r.trace_term = 0.5 * (kd / s - aa);
  r.value = -0.5 * static_cast<double>(n) * (kLog2Pi + std::log(s)) - 0.5 * linalg::logdet(lb) - 0.5 * yy / s +
            0.5 * c.squaredNorm() - r.trace_term;

  // q*(v): S = L B^{-1} L^T, m = L B^{-1} A y / sigma.
  const RMatrix w = linalg::solve_lower(lb, identity(m));  // W with B^{-1} = W^T W
  const RMatrix l = prior.chol.lower();
  const RMatrix wl = w * l.transpose();
  r.optimal.cov = sym(wl.transpose() * wl);
  r.optimal.mean = l * (w.transpose() * (w * ay)) / sd;

  if (!grads) return r;

  const RMatrix kinv = sym(prior.chol.solve(identity(m)));
  const RMatrix v = w * prior.chol.solve_lower(identity(m));
  const RMatrix sinv = v.transpose() * v;  // (K + U U^T / s)^{-1}
  const RVector uy = kuf * y;
  const RVector alpha = sinv * uy;
  const RMatrix uut = kuf * kuf.transpose();
  const RMatrix kinv_u = kinv * kuf;
  const RVector uut_alpha = uut * alpha;

  r.g_kuu = prior.chain_jitter(
      sym(0.5 * (kinv - sinv - alpha * alpha.transpose() / (s * s) - kinv_u * kinv_u.transpose() / s)));
  r.g_kuf = -sinv * kuf / s + alpha * y.transpose() / (s * s) - alpha * (alpha.transpose() * kuf) / (s * s * s) +
            kinv_u / s;
  r.g_kdiag = RVector::Constant(n, -0.5 / s);
  r.g_noise = 0.5 * (sinv.cwiseProduct(uut)).sum() / (s * s) - 0.5 * static_cast<double>(n) / s +
              0.5 * yy / (s * s) - uy.dot(alpha) / (s * s * s) + 0.5 * alpha.dot(uut_alpha) / (s * s * s * s) +
              0.5 * kd / (s * s) - 0.5 * (kinv.cwiseProduct(uut)).sum() / (s * s);
  return r;
}

double collapsed_bound(const HMKParams& kernel, const InducingFrequencies& z, const Inputs& x, const RVector& y,
                       double noise_var) {
  const VffModel model(kernel, z);
  const Prior prior(model.kuu(), model.blocks());
  return collapsed_terms(prior, model.kuf(x), model.kdiag(x), y, noise_var, false).value;
}

// ---------------------------------------------------------------------------
// Likelihood helpers

RVector probit_signs(const RVector& y) {
  bool pm = true, zo = true;
  for (Index i = 0; i < y.size(); ++i) {
    pm = pm && (y(i) == 1.0 || y(i) == -1.0);
    zo = zo && (y(i) == 0.0 || y(i) == 1.0);
  }
  if (!pm && !zo) throw InvalidTargets("Bernoulli targets must be in {-1, +1} or {0, 1}");
  if (pm) return y;
  return (2.0 * y.array() - 1.0).matrix();
}

void gauss_hermite(int n, std::vector<double>& nodes, std::vector<double>& weights) {
  if (n < 1) throw InvalidParameters("gauss_hermite: need at least one node");
  RMatrix jac = RMatrix::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    jac(k, k - 1) = jac(k - 1, k) = std::sqrt(0.5 * k);
  }
  const Eigen::SelfAdjointEigenSolver<RMatrix> es(jac);
  nodes.resize(static_cast<std::size_t>(n));
  weights.resize(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    nodes[k] = es.eigenvalues()(k);
    const double v0 = es.eigenvectors()(0, k);
    weights[k] = std::sqrt(kPi) * v0 * v0;
  }
}

double log_normal_cdf(double z) {
  if (z < -30.0) {
    // log Phi(z) ~ -z^2/2 - log(-z) - log sqrt(2 pi) + log(1 - 1/z^2 + 3/z^4)
    const double z2 = z * z;
    return -0.5 * z2 - std::log(-z) - 0.5 * kLog2Pi + std::log1p(-1.0 / z2 + 3.0 / (z2 * z2));
  }
  if (z < 0.0) return std::log(0.5 * std::erfc(-z / std::numbers::sqrt2));
  return std::log1p(-0.5 * std::erfc(z / std::numbers::sqrt2));
}

double inverse_mills(double z) {
  if (z < -30.0) {
    const double z2 = z * z;
    const double t = 1.0 - 1.0 / z2 + 3.0 / (z2 * z2);
    const double dt = 2.0 / (z2 * z) - 12.0 / (z2 * z2 * z);
    return -z - 1.0 / z + dt / t;
  }
  const double pdf = std::exp(-0.5 * z * z - 0.5 * kLog2Pi);
  return pdf / (0.5 * std::erfc(-z / std::numbers::sqrt2));
}

// ---------------------------------------------------------------------------
// Uncollapsed bound

namespace {

struct PointTerms {
  double value, g_mean, g_var;
};

PointTerms bernoulli_terms(double y, double mu, double var, const std::vector<double>& x,
                           const std::vector<double>& w) {
  const double v = std::max(var, 1e-300);
  const double r2 = std::sqrt(2.0 * v);
  PointTerms t{0.0, 0.0, 0.0};
  const double norm = 1.0 / std::sqrt(kPi);
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double z = y * (mu + r2 * x[k]);
    const double wk = w[k] * norm;
    const double ratio = inverse_mills(z);
    t.value += wk * log_normal_cdf(z);
    t.g_mean += wk * y * ratio;
    t.g_var += wk * y * ratio * x[k] / r2;
  }
  return t;
}

}  // namespace

ElboResult elbo_terms(const Prior& prior, const RMatrix& kuf, const RVector& kdiag, const RVector& y,
                      const Likelihood& lik, const VariationalState& q, double scale, bool grads) {
  const Index m = prior.k.rows();
  const Index n = y.size();
  require_shape(kuf.rows() == m && kuf.cols() == n && kdiag.size() == n, "elbo_terms: size mismatch");
  require_shape(q.mean.size() == m && q.cov.rows() == m && q.cov.cols() == m, "elbo_terms: q size mismatch");

  const RMatrix p = prior.chol.solve(kuf);
  const RVector mu = p.transpose() * q.mean;
  const RMatrix sp = q.cov * p;
  const RVector var = kdiag - kuf.cwiseProduct(p).colwise().sum().transpose() +
                      p.cwiseProduct(sp).colwise().sum().transpose();

  RVector gmu(n), gvar(n);
  double ell = 0.0;
  if (lik.kind == Likelihood::Kind::kGaussian) {
    if (!(lik.noise_var > 0.0)) throw InvalidParameters("elbo_terms: noise variance must be positive");
    const double s2 = lik.noise_var;
    for (Index i = 0; i < n; ++i) {
      const double r = y(i) - mu(i);
      ell += -0.5 * kLog2Pi - 0.5 * std::log(s2) - 0.5 * (r * r + var(i)) / s2;
      gmu(i) = r / s2;
      gvar(i) = -0.5 / s2;
    }
  } else {
    const RVector signs = probit_signs(y);
    std::vector<double> x, w;
    gauss_hermite(lik.quadrature_nodes, x, w);
    for (Index i = 0; i < n; ++i) {
      const auto t = bernoulli_terms(signs(i), mu(i), var(i), x, w);
      ell += t.value;
      gmu(i) = t.g_mean;
      gvar(i) = t.g_var;
    }
  }
  gmu *= scale;
  gvar *= scale;

  const auto ls = linalg::cholesky_hermitian(linalg::HermitianMatrix<double>(q.cov), 0.0);
  const RMatrix kinv = sym(prior.chol.solve(identity(m)));
  const RVector km = kinv * q.mean;

  ElboResult r;
  r.expected_loglik = scale * ell;
  r.kl = 0.5 * (kinv.cwiseProduct(q.cov).sum() + q.mean.dot(km) - static_cast<double>(m) + prior.chol.logdet() -
                linalg::logdet(ls));
  r.value = r.expected_loglik - r.kl;
  if (!grads) return r;

  const RMatrix sinv = sym(linalg::inverse(ls));
  const RVector pg = p * gmu;
  const RMatrix pd = p * gvar.asDiagonal();  // P diag(gs)
  const RMatrix pdp = pd * p.transpose();
  const RMatrix ksp_d = kinv * sp * gvar.asDiagonal();

  r.g_mean = pg - km;
  r.g_cov = sym(pdp - 0.5 * (kinv - sinv));
  r.g_kuf = km * gmu.transpose() - 2.0 * pd + 2.0 * ksp_d;
  r.g_kuu = prior.chain_jitter(sym(-pg * km.transpose() + pdp - 2.0 * ksp_d * p.transpose() +
                                   0.5 * (kinv * q.cov * kinv + km * km.transpose() - kinv)));
  r.g_kdiag = gvar;
  if (lik.kind == Likelihood::Kind::kGaussian) {
    const double s2 = lik.noise_var;
    double g = 0.0;
    for (Index i = 0; i < n; ++i) {
      const double res = y(i) - mu(i);
      g += -0.5 / s2 + 0.5 * (res * res + var(i)) / (s2 * s2);
    }
    r.g_noise = scale * g;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Conditionals and prediction

VariationalState prior_state(const SparseModel& model) {
  const Prior prior(model.kuu(), model.blocks());
  return {RVector::Zero(prior.k.rows()), prior.k_tilde};
}

Marginals conditional(const SparseModel& model, const Inputs& x, const VariationalState& q) {
  const Prior prior(model.kuu(), model.blocks());
  const Index m = prior.k.rows();
  require_shape(q.mean.size() == m && q.cov.rows() == m && q.cov.cols() == m, "conditional: q size mismatch");
  const RMatrix u = model.kuf(x);
  const RVector kd = model.kdiag(x);
  const RMatrix p = prior.chol.solve(u);
  Marginals out;
  out.mean = p.transpose() * q.mean;
  const RMatrix diff = q.cov - prior.k_tilde;
  out.var = kd + p.cwiseProduct(diff * p).colwise().sum().transpose();
  for (Index i = 0; i < out.var.size(); ++i) {
    if (out.var(i) >= 0.0) continue;
    if (out.var(i) >= -1e-8 * std::abs(kd(i))) {
      out.var(i) = 0.0;
    } else {
      throw linalg::NotPositiveDefinite("conditional: negative predictive variance");
    }
  }
  return out;
}

Marginals conditional(const Inputs& x, const SparseGPState& state) {
  return conditional(VffModel(state.kernel, state.inducing), x, state.q);
}

Prediction predict(const SparseModel& model, const VariationalState& q, const Likelihood& lik, const Inputs& x) {
  const Marginals f = conditional(model, x, q);
  Prediction out;
  out.mean = f.mean;
  if (lik.kind == Likelihood::Kind::kGaussian) {
    out.var = (f.var.array() + lik.noise_var).matrix();
  } else {
    out.var = f.var;
    out.prob.resize(f.mean.size());
    for (Index i = 0; i < f.mean.size(); ++i) {
      out.prob(i) = 0.5 * std::erfc(-f.mean(i) / std::sqrt(1.0 + f.var(i)) / std::numbers::sqrt2);
    }
  }
  return out;
}

Prediction predict(const SparseGPState& state, const Inputs& x) {
  return predict(VffModel(state.kernel, state.inducing), state.q, state.lik, x);
}

double elbo_stochastic(const SparseGPState& state, const Inputs& x, const RVector& y, std::size_t n_total) {
  if (x.rows() == 0 || x.rows() != y.size()) throw linalg::ShapeMismatch("elbo_stochastic: empty or mismatched batch");
  const VffModel model(state.kernel, state.inducing);
  const Prior prior(model.kuu(), model.blocks());
  const double scale = static_cast<double>(n_total) / static_cast<double>(x.rows());
  return elbo_terms(prior, model.kuf(x), model.kdiag(x), y, state.lik, state.q, scale, false).value;
}

}  // namespace hmk::inference
