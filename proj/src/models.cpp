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

#include "hmk/ad.hpp"
#include "hmk/inference.hpp"
#include "hmk/spectral.hpp"

#include <cmath>

namespace hmk::inference {

double softplus(double r) { return r > 30.0 ? r : std::log1p(std::exp(r)); }

double softplus_inv(double v) {
  if (!(v > 0.0)) throw InvalidParameters("softplus_inv: value must be positive");
  return v > 30.0 ? v : std::log(std::expm1(v));
}

double sigmoid(double r) {
  if (r >= 0.0) return 1.0 / (1.0 + std::exp(-r));
  const double e = std::exp(r);
  return e / (1.0 + e);
}

namespace {

double logit(double s) {
  s = std::clamp(s, 1e-12, 1.0 - 1e-12);
  return std::log(s / (1.0 - s));
}

// Offsets of the per-component blocks inside flatten() order.
struct Layout {
  int dim, q, center, gamma, mu, chol, sigma1, lambda2, count;
  explicit Layout(int d, int nq) : dim(d), q(nq) {
    center = 0;
    gamma = center + d;
    mu = gamma + d;
    chol = mu + nq * d;
    sigma1 = chol + nq * nq;
    lambda2 = sigma1 + d;
    count = lambda2 + 1;
  }
};

}  // namespace

std::vector<double> component_to_raw(const HMKComponent& c) {
  const Layout l(c.dim(), c.num_freqs());
  std::vector<double> r = flatten(c);
  for (int d = 0; d < l.dim; ++d) {
    r[l.gamma + d] = softplus_inv(c.gamma[d]);
    r[l.sigma1 + d] = logit(c.sigma1[d] / (4.0 * c.lambda2));
  }
  r[l.lambda2] = softplus_inv(c.lambda2);
  return r;
}

HMKComponent component_from_raw(std::span<const double> r, int dim, int q) {
  const Layout l(dim, q);
  std::vector<double> flat(r.begin(), r.begin() + l.count);
  const double lambda2 = softplus(r[l.lambda2]);
  for (int d = 0; d < dim; ++d) {
    flat[l.gamma + d] = softplus(r[l.gamma + d]);
    flat[l.sigma1 + d] = 4.0 * lambda2 * sigmoid(r[l.sigma1 + d]);
  }
  flat[l.lambda2] = lambda2;
  return unflatten(flat, dim, q);
}

void component_raw_gradient(std::span<const double> raw, std::span<const double> g_flat, int dim, int q,
                            std::span<double> out) {
  const Layout l(dim, q);
  for (int k = 0; k < l.count; ++k) out[k] = g_flat[k];
  const double lambda2 = softplus(raw[l.lambda2]);
  const double dlam = sigmoid(raw[l.lambda2]);
  double g_lam = g_flat[l.lambda2];
  for (int d = 0; d < dim; ++d) {
    out[l.gamma + d] = g_flat[l.gamma + d] * sigmoid(raw[l.gamma + d]);
    const double s = sigmoid(raw[l.sigma1 + d]);
    out[l.sigma1 + d] = g_flat[l.sigma1 + d] * 4.0 * lambda2 * s * (1.0 - s);
    g_lam += g_flat[l.sigma1 + d] * 4.0 * s;
  }
  out[l.lambda2] = g_lam * dlam;
}

namespace {

template <int N>
std::vector<ad::Dual<N>> dual_point(std::span<const double> w, int lane0, double sign) {
  std::vector<ad::Dual<N>> v(w.size());
  for (std::size_t d = 0; d < w.size(); ++d) {
    v[d] = ad::Dual<N>::variable(w[d], lane0 + static_cast<int>(d));
    if (sign < 0.0) v[d] = -v[d];
  }
  return v;
}

/// Prior-covariance and diagonal adjoints for one VFF component. gc is in
/// flatten order, gz is m_p x D.
template <int N>
void vff_component_backprop(const HMKComponent& c, const InducingFrequencies& z, int p, const Inputs& x,
                            const RMatrix& g_kuu, const RVector& g_kdiag, Index row0, std::vector<double>& gc,
                            std::vector<double>& gz) {
  using D = ad::Dual<N>;
  const int dim = c.dim();
  const int lc = component_param_count(c);
  const int m = z.count(p);
  const auto lifted = lift<N>(c, 0);

  for (int i = 0; i < m; ++i) {
    const auto wi = dual_point<N>(z.at(p, i), lc, 1.0);
    for (int j = 0; j < m; ++j) {
      const double gaa = g_kuu(row0 + i, row0 + j);
      const double gbb = g_kuu(row0 + m + i, row0 + m + j);
      const double gab = g_kuu(row0 + i, row0 + m + j) + g_kuu(row0 + m + j, row0 + i);
      if (gaa == 0.0 && gbb == 0.0 && gab == 0.0) continue;
      const auto wj = dual_point<N>(z.at(p, j), lc + dim, 1.0);
      const auto nj = dual_point<N>(z.at(p, j), lc + dim, -1.0);
      const auto k = spectral::component_gsd_real<D, D>(lifted, std::span<const D>(wi), std::span<const D>(wj));
      const auto pp = spectral::component_gsd_real<D, D>(lifted, std::span<const D>(wi), std::span<const D>(nj));
      auto lane = [&](int t) {
        return 0.5 * (gaa * (k.re.d[t] + pp.re.d[t]) + gbb * (k.re.d[t] - pp.re.d[t]) +
                      gab * (pp.im.d[t] - k.im.d[t]));
      };
      for (int t = 0; t < lc; ++t) gc[t] += lane(t);
      for (int d = 0; d < dim; ++d) {
        gz[i * dim + d] += lane(lc + d);
        gz[j * dim + d] += lane(lc + dim + d);
      }
    }
  }

  // Diagonal, one buffer column per input so the reduction order is fixed
  // regardless of thread count.
  const Index n = x.rows();
  RMatrix buf = RMatrix::Zero(lc, n);
  par::for_each_index(
      n,
      [&](Index i) {
        if (g_kdiag(i) == 0.0) return;
        const auto xi = par::row(x, i);
        const auto kv = component_kernel<D>(lifted, xi, xi);
        for (int t = 0; t < lc; ++t) buf(t, i) = g_kdiag(i) * kv.re.d[t];
      },
      par::Exec::kOpenMP);
  for (Index i = 0; i < n; ++i) {
    for (int t = 0; t < lc; ++t) gc[t] += buf(t, i);
  }
}

/// Lanes over every parameter except the amplitude factor, which stays
/// constant; cross-covariance gradients w.r.t. the factor are formed from the
/// linear dependence on B instead.
template <int N>
BasicHMKComponent<ad::Dual<N>> lift_without_chol(const HMKComponent& c) {
  using D = ad::Dual<N>;
  BasicHMKComponent<D> out;
  int lane = 0;
  auto lift_all = [&](const std::vector<double>& src, std::vector<D>& dst) {
    for (double v : src) dst.push_back(D::variable(v, lane++));
  };
  lift_all(c.center, out.center);
  lift_all(c.gamma, out.gamma);
  lift_all(c.mu, out.mu);
  for (const auto& e : c.b_chol) out.b_chol.emplace_back(D(e.re), D(e.im));
  lift_all(c.sigma1, out.sigma1);
  out.lambda2 = D::variable(c.lambda2, lane++);
  return out;
}

/// Cross-covariance adjoints. For J = sum ga Re c - gb Im c with
/// c = (G(w) + conj G(-w)) / 2 and G = sum_ij b_ij A_ij, J = Re sum_ij b_ij W_ij
/// with W = ga (A(w) + A(-w)) / 2 + i gb (A(-w) - A(w)) / 2.
template <int N>
void vff_cross_backprop(const HMKComponent& c, const InducingFrequencies& z, int p, const Inputs& x,
                        const RMatrix& g_kuf, Index row0, std::vector<double>& gc, std::vector<double>& gz) {
  using D = ad::Dual<N>;
  const int dim = c.dim();
  const int q = c.num_freqs();
  const int lc = component_param_count(c);
  const int chol_off = 2 * dim + q * dim;
  const int lnc = lc - q * q;
  const int m = z.count(p);
  const auto lifted = lift_without_chol<N>(c);
  const auto b = amplitude_matrix(c);

  const Index n = x.rows();
  const int w_off = lnc + m * dim;
  const int width = w_off + 2 * q * q;
  RMatrix buf = RMatrix::Zero(width, n);
  par::for_each_index(
      n,
      [&](Index i) {
        const auto xi = par::row(x, i);
        double* col = buf.col(i).data();
        std::vector<Cx<D>> aw(static_cast<std::size_t>(q * q)), an(static_cast<std::size_t>(q * q));
        for (int j = 0; j < m; ++j) {
          const double ga = g_kuf(row0 + j, i);
          const double gb = g_kuf(row0 + m + j, i);
          if (ga == 0.0 && gb == 0.0) continue;
          const auto w = dual_point<N>(z.at(p, j), lnc, 1.0);
          const auto wn = dual_point<N>(z.at(p, j), lnc, -1.0);
          const auto fw = spectral::fourier_cross_factors<D, D>(lifted, xi, std::span<const D>(w));
          const auto fn = spectral::fourier_cross_factors<D, D>(lifted, xi, std::span<const D>(wn));
          Cx<D> gw(D(0.0), D(0.0)), gn(D(0.0), D(0.0));
          for (int a = 0; a < q; ++a) {
            for (int bb = 0; bb < q; ++bb) {
              const std::size_t k = static_cast<std::size_t>(a * q + bb);
              aw[k] = ad::scale(fw.alpha[a] * fw.beta[bb], fw.decay);
              an[k] = ad::scale(fn.alpha[a] * fn.beta[bb], fn.decay);
              const double br = b[k].real(), bi = b[k].imag();
              gw += Cx<D>(br * aw[k].re - bi * aw[k].im, br * aw[k].im + bi * aw[k].re);
              gn += Cx<D>(br * an[k].re - bi * an[k].im, br * an[k].im + bi * an[k].re);
              col[w_off + 2 * k] += 0.5 * ga * (aw[k].re.v + an[k].re.v) - 0.5 * gb * (an[k].im.v - aw[k].im.v);
              col[w_off + 2 * k + 1] += 0.5 * ga * (aw[k].im.v + an[k].im.v) + 0.5 * gb * (an[k].re.v - aw[k].re.v);
            }
          }
          // c.re = (gw.re + gn.re) / 2, c.im = (gn.im - gw.im) / 2
          for (int t = 0; t < lnc; ++t) {
            col[t] += 0.5 * ga * (gw.re.d[t] + gn.re.d[t]) - 0.5 * gb * (gn.im.d[t] - gw.im.d[t]);
          }
          for (int d = 0; d < dim; ++d) {
            const int t = lnc + d;
            col[lnc + j * dim + d] += 0.5 * ga * (gw.re.d[t] + gn.re.d[t]) - 0.5 * gb * (gn.im.d[t] - gw.im.d[t]);
          }
        }
      },
      par::Exec::kOpenMP);

  std::vector<double> g_nc(static_cast<std::size_t>(lnc), 0.0);
  std::vector<cplx> wsum(static_cast<std::size_t>(q * q), 0.0);
  for (Index i = 0; i < n; ++i) {
    for (int t = 0; t < lnc; ++t) g_nc[t] += buf(t, i);
    for (int t = 0; t < m * dim; ++t) gz[t] += buf(lnc + t, i);
    for (int k = 0; k < q * q; ++k) wsum[k] += cplx(buf(w_off + 2 * k, i), buf(w_off + 2 * k + 1, i));
  }
  for (int t = 0; t < lnc; ++t) gc[t < chol_off ? t : t + q * q] += g_nc[t];

  // dJ/dRe L_ab = Re sum_j W_aj conj(L_jb) + Re sum_i W_ia L_ib
  // dJ/dIm L_ab = -Im sum_j W_aj conj(L_jb) + Im sum_i W_ia L_ib
  auto l = [&](int i, int j) { return j <= i ? cplx(c.chol(i, j).re, c.chol(i, j).im) : cplx(0.0, 0.0); };
  int k = chol_off;
  for (int a = 0; a < q; ++a) {
    for (int bb = 0; bb <= a; ++bb) {
      cplx s1 = 0.0, s2 = 0.0;
      for (int j = 0; j < q; ++j) s1 += wsum[static_cast<std::size_t>(a * q + j)] * std::conj(l(j, bb));
      for (int i = 0; i < q; ++i) s2 += wsum[static_cast<std::size_t>(i * q + a)] * l(i, bb);
      gc[k++] += s1.real() + s2.real();
      if (a != bb) gc[k++] += -s1.imag() + s2.imag();
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// VffModel

VffModel::VffModel(HMKParams kernel, InducingFrequencies z) : kernel_(std::move(kernel)), z_(std::move(z)) {
  validate(kernel_);
  if (!kernel_.real_valued) throw InvalidParameters("VffModel: inference requires a real-valued HMK");
  spectral::require_integrable(kernel_);
  z_.validate(kernel_.num_components());
  if (z_.dim != kernel_.dim()) throw InvalidParameters("VffModel: inducing frequency dimension mismatch");
}

RMatrix VffModel::kuu() const {
  return stack_kuu(compute_kuu(kernel_, z_).matrix(), compute_kuu_pseudo(kernel_, z_), z_);
}

RMatrix VffModel::kuf(const Inputs& x) const { return stack_kuf(compute_kfu(kernel_, x, z_), z_); }

RVector VffModel::kdiag(const Inputs& x) const {
  RVector d(x.rows());
  par::for_each_index(
      x.rows(),
      [&](Index i) {
        double v = 0.0;
        for (const auto& c : kernel_.components) v += component_kernel(c, par::row(x, i), par::row(x, i)).re;
        d(i) = v;
      },
      par::Exec::kOpenMP);
  return d;
}

int VffModel::num_params() const {
  int n = 0;
  for (const auto& c : kernel_.components) n += component_param_count(c);
  return n + z_.total() * z_.dim;
}

std::vector<double> VffModel::params() const {
  std::vector<double> r;
  r.reserve(static_cast<std::size_t>(num_params()));
  for (const auto& c : kernel_.components) {
    const auto v = component_to_raw(c);
    r.insert(r.end(), v.begin(), v.end());
  }
  for (const auto& f : z_.freqs) r.insert(r.end(), f.begin(), f.end());
  return r;
}

void VffModel::set_params(std::span<const double> raw) {
  if (static_cast<int>(raw.size()) != num_params()) throw linalg::ShapeMismatch("VffModel::set_params: size");
  std::size_t off = 0;
  for (auto& c : kernel_.components) {
    const int lc = component_param_count(c);
    c = component_from_raw(raw.subspan(off, static_cast<std::size_t>(lc)), c.dim(), c.num_freqs());
    off += static_cast<std::size_t>(lc);
  }
  for (auto& f : z_.freqs) {
    std::copy(raw.begin() + static_cast<long>(off), raw.begin() + static_cast<long>(off + f.size()), f.begin());
    off += f.size();
  }
}

std::vector<double> VffModel::backprop(const Inputs& x, const RMatrix& g_kuu, const RMatrix& g_kuf,
                                       const RVector& g_kdiag) const {
  const auto raw = params();
  std::vector<double> g(raw.size(), 0.0);
  std::size_t off = 0;
  std::size_t zoff = raw.size() - static_cast<std::size_t>(z_.total() * z_.dim);
  Index row0 = 0;
  for (int p = 0; p < kernel_.num_components(); ++p) {
    const auto& c = kernel_.components[p];
    const int lc = component_param_count(c);
    const int m = z_.count(p);
    std::vector<double> gc(static_cast<std::size_t>(lc), 0.0);
    std::vector<double> gz(static_cast<std::size_t>(m * z_.dim), 0.0);
    ad::dispatch_lanes(lc + 2 * z_.dim, [&]<int N>() {
      vff_component_backprop<N>(c, z_, p, x, g_kuu, g_kdiag, row0, gc, gz);
    });
    const int lnc = lc - c.num_freqs() * c.num_freqs();
    ad::dispatch_lanes(lnc + z_.dim, [&]<int N>() { vff_cross_backprop<N>(c, z_, p, x, g_kuf, row0, gc, gz); });
    component_raw_gradient(std::span<const double>(raw).subspan(off, static_cast<std::size_t>(lc)), gc, c.dim(),
                 c.num_freqs(), std::span<double>(g).subspan(off, static_cast<std::size_t>(lc)));
    std::copy(gz.begin(), gz.end(), g.begin() + static_cast<long>(zoff));
    off += static_cast<std::size_t>(lc);
    zoff += gz.size();
    row0 += 2 * m;
  }
  return g;
}

// ---------------------------------------------------------------------------
// InducingPointModel

InducingPointModel::InducingPointModel(SMParams kernel, Inputs z, bool train_means)
    : kernel_(std::move(kernel)), z_(std::move(z)), train_means_(train_means) {
  validate(kernel_);
  if (z_.rows() < 1 || z_.cols() != kernel_.dim()) throw InvalidParameters("InducingPointModel: bad points");
  if (kernel_.dim() > 8) throw InvalidParameters("InducingPointModel: at most 8 input dimensions");
}

namespace {

template <typename T>
T sm_at(const BasicSMParams<T>& p, std::span<const double> a, std::span<const double> b) {
  double tau[8];
  const std::size_t dim = a.size();
  for (std::size_t d = 0; d < dim; ++d) tau[d] = a[d] - b[d];
  return sm_kernel<T, double>(std::span<const double>(tau, dim), p);
}

}  // namespace

RMatrix InducingPointModel::kuu() const {
  RMatrix k(z_.rows(), z_.rows());
  par::assemble(k, [&](Index i, Index j) { return sm_at(kernel_, par::row(z_, i), par::row(z_, j)); },
                par::Exec::kOpenMP);
  return k;
}

RMatrix InducingPointModel::kuf(const Inputs& x) const {
  RMatrix k(z_.rows(), x.rows());
  par::assemble(k, [&](Index i, Index j) { return sm_at(kernel_, par::row(z_, i), par::row(x, j)); },
                par::Exec::kOpenMP);
  return k;
}

RVector InducingPointModel::kdiag(const Inputs& x) const {
  double total = 0.0;
  for (double w : kernel_.weights) total += w;
  return RVector::Constant(x.rows(), total);
}

int InducingPointModel::num_params() const {
  const int q = kernel_.num_components();
  const int dim = kernel_.dim();
  return q + (train_means_ ? q * dim : 0) + q * dim + static_cast<int>(z_.size());
}

std::vector<double> InducingPointModel::params() const {
  std::vector<double> r;
  for (double w : kernel_.weights) r.push_back(softplus_inv(w));
  if (train_means_) r.insert(r.end(), kernel_.means.begin(), kernel_.means.end());
  for (double v : kernel_.variances) r.push_back(softplus_inv(v));
  r.insert(r.end(), z_.data(), z_.data() + z_.size());
  return r;
}

void InducingPointModel::set_params(std::span<const double> raw) {
  if (static_cast<int>(raw.size()) != num_params()) {
    throw linalg::ShapeMismatch("InducingPointModel::set_params: size");
  }
  std::size_t k = 0;
  for (double& w : kernel_.weights) w = softplus(raw[k++]);
  if (train_means_) {
    for (double& m : kernel_.means) m = raw[k++];
  }
  for (double& v : kernel_.variances) v = softplus(raw[k++]);
  for (Index i = 0; i < z_.size(); ++i) z_.data()[i] = raw[k++];
}

namespace {

template <int N>
void sm_backprop(const SMParams& p, const Inputs& z, const Inputs& x, const RMatrix& g_kuu, const RMatrix& g_kuf,
                 std::vector<double>& g_kernel, std::vector<double>& g_z) {
  using D = ad::Dual<N>;
  const int q = p.num_components();
  const int dim = p.dim();
  const int lk = q * (1 + 2 * dim);
  BasicSMParams<D> lifted;
  int lane = 0;
  for (double w : p.weights) lifted.weights.push_back(D::variable(w, lane++));
  for (double m : p.means) lifted.means.push_back(D::variable(m, lane++));
  for (double v : p.variances) lifted.variances.push_back(D::variable(v, lane++));

  const Index mz = z.rows();
  const Index n = x.rows();
  const int width = lk + static_cast<int>(mz) * dim;
  RMatrix buf = RMatrix::Zero(width, mz);
  par::for_each_index(
      mz,
      [&](Index a) {
        double* col = buf.col(a).data();
        std::vector<D> tau(static_cast<std::size_t>(dim));
        for (Index b = 0; b < mz + n; ++b) {
          const bool inducing = b < mz;
          const double g = inducing ? g_kuu(a, b) : g_kuf(a, b - mz);
          if (g == 0.0) continue;
          for (int d = 0; d < dim; ++d) {
            const D za = D::variable(z(a, d), lk + d);
            tau[d] = inducing ? za - D::variable(z(b, d), lk + dim + d) : za - x(b - mz, d);
          }
          const D k = sm_kernel<D, D>(std::span<const D>(tau), lifted);
          for (int t = 0; t < lk; ++t) col[t] += g * k.d[t];
          for (int d = 0; d < dim; ++d) {
            col[lk + a * dim + d] += g * k.d[lk + d];
            if (inducing) col[lk + b * dim + d] += g * k.d[lk + dim + d];
          }
        }
      },
      par::Exec::kOpenMP);
  for (Index a = 0; a < mz; ++a) {
    for (int t = 0; t < lk; ++t) g_kernel[t] += buf(t, a);
    for (Index t = 0; t < mz * dim; ++t) g_z[t] += buf(lk + t, a);
  }
}

}  // namespace

std::vector<double> InducingPointModel::backprop(const Inputs& x, const RMatrix& g_kuu, const RMatrix& g_kuf,
                                                 const RVector& g_kdiag) const {
  const int q = kernel_.num_components();
  const int dim = kernel_.dim();
  const int lk = q * (1 + 2 * dim);
  std::vector<double> gk(static_cast<std::size_t>(lk), 0.0);
  std::vector<double> gz(static_cast<std::size_t>(z_.size()), 0.0);
  ad::dispatch_lanes(lk + 2 * dim, [&]<int N>() { sm_backprop<N>(kernel_, z_, x, g_kuu, g_kuf, gk, gz); });
  const double gd = g_kdiag.sum();
  for (int k = 0; k < q; ++k) gk[k] += gd;

  const auto raw = params();
  std::vector<double> g;
  g.reserve(raw.size());
  std::size_t r = 0;
  for (int k = 0; k < q; ++k) g.push_back(gk[k] * sigmoid(raw[r++]));
  if (train_means_) {
    for (int k = 0; k < q * dim; ++k) {
      g.push_back(gk[q + k]);
      ++r;
    }
  }
  for (int k = 0; k < q * dim; ++k) g.push_back(gk[q + q * dim + k] * sigmoid(raw[r++]));
  g.insert(g.end(), gz.begin(), gz.end());
  return g;
}

}  // namespace hmk::inference
