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

#pragma once

// Kernel families: locally stationary Gaussian (LSG), sparse spectrum (SS),
// spectral mixture (SM), generalized spectral (GS), harmonizable mixture
// (HMK), and the fixed recovery targets (GSM via Gibbs, time-inverted fBM).
//
// Inputs are D-vectors; frequencies are in cycles per input unit, so every
// exponent carries 2*pi explicitly.

#include "hmk/ad.hpp"

#include <complex>
#include <functional>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hmk {

using cplx = std::complex<double>;
using ad::Cx;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPiSq = 2.0 * kPi * kPi;

class NonPositiveLengthscale : public std::domain_error {
 public:
  explicit NonPositiveLengthscale(const std::string& w) : std::domain_error(w) {}
};

class DomainViolation : public std::domain_error {
 public:
  explicit DomainViolation(const std::string& w) : std::domain_error(w) {}
};

class InvalidParameters : public std::invalid_argument {
 public:
  explicit InvalidParameters(const std::string& w) : std::invalid_argument(w) {}
};

/// Zero-mean normal density N(v | 0, var).
template <typename T>
T normal_pdf(const T& v, const T& var) {
  using std::exp;
  using std::sqrt;
  return exp(-0.5 * v * v / var) / sqrt(2.0 * kPi * var);
}

// ---------------------------------------------------------------------------
// Locally stationary Gaussian

/// Sigma1 = diag(sigma1) acts on the centroid, Sigma2 = lambda2 * I on the lag.
/// The kernel is positive definite only when sigma1_d <= 4 lambda2 for all d:
/// it factors as g(x) g(x') exp(4 pi^2 (lambda2 - sigma1/4) x x').
struct LSGParams {
  std::vector<double> sigma1;
  double lambda2 = 1.0;

  int dim() const { return static_cast<int>(sigma1.size()); }
};

double eval_lsg(std::span<const double> x, std::span<const double> x2, const LSGParams& p);

/// Throws InvalidParameters unless 0 <= sigma1_d <= 4 lambda2 and lambda2 > 0.
void validate(const LSGParams& p);

// ---------------------------------------------------------------------------
// Harmonizable mixture kernel

/// One HMK component. The amplitude matrix B = L L^H is stored through its
/// lower Cholesky factor L (row-major Q x Q, strict upper part unused and the
/// diagonal kept real).
template <typename T>
struct BasicHMKComponent {
  std::vector<T> center;       // x_p, D
  std::vector<T> gamma;        // input scaling, D
  std::vector<T> mu;           // Q x D row-major frequencies
  std::vector<Cx<T>> b_chol;   // Q x Q row-major lower factor
  std::vector<T> sigma1;       // centroid widths, D
  T lambda2{};                 // lag width

  int dim() const { return static_cast<int>(center.size()); }
  int num_freqs() const { return dim() == 0 ? 0 : static_cast<int>(mu.size()) / dim(); }
  const Cx<T>& chol(int i, int j) const { return b_chol[static_cast<std::size_t>(i * num_freqs() + j)]; }
};

using HMKComponent = BasicHMKComponent<double>;

struct HMKParams {
  std::vector<HMKComponent> components;
  bool real_valued = true;

  int dim() const { return components.empty() ? 0 : components.front().dim(); }
  int num_components() const { return static_cast<int>(components.size()); }
};

/// Throws InvalidParameters on inconsistent shapes, non-positive widths or
/// sigma1 > 4 lambda2.
void validate(const HMKComponent& c);
void validate(const HMKParams& p);

/// Number of scalar parameters in the flat layout of one component:
/// center(D), gamma(D), mu(Q*D), chol (Q real diagonal + 2 per strict-lower
/// entry), sigma1(D), lambda2.
int component_param_count(int dim, int num_freqs);
inline int component_param_count(const HMKComponent& c) {
  return component_param_count(c.dim(), c.num_freqs());
}

/// Flat (constrained-space) values in the layout above.
std::vector<double> flatten(const HMKComponent& c);
/// Inverse of flatten for a component of the given shape.
HMKComponent unflatten(std::span<const double> v, int dim, int num_freqs);

/// Amplitude matrix B = L L^H.
std::vector<cplx> amplitude_matrix(const HMKComponent& c);

/// Component with every parameter promoted to a dual variable on consecutive
/// lanes starting at `lane0`, in flatten() order.
template <int N>
BasicHMKComponent<ad::Dual<N>> lift(const HMKComponent& c, int lane0) {
  using D = ad::Dual<N>;
  const auto flat = flatten(c);
  std::vector<D> v(flat.size());
  for (std::size_t k = 0; k < flat.size(); ++k) v[k] = D::variable(flat[k], lane0 + static_cast<int>(k));
  const int dim = c.dim();
  const int q = c.num_freqs();
  BasicHMKComponent<D> out;
  std::size_t k = 0;
  auto take = [&](std::vector<D>& dst, int n) {
    dst.assign(v.begin() + static_cast<long>(k), v.begin() + static_cast<long>(k + n));
    k += static_cast<std::size_t>(n);
  };
  take(out.center, dim);
  take(out.gamma, dim);
  take(out.mu, q * dim);
  out.b_chol.assign(static_cast<std::size_t>(q * q), Cx<D>(D(0.0), D(0.0)));
  for (int i = 0; i < q; ++i) {
    for (int j = 0; j <= i; ++j) {
      auto& e = out.b_chol[static_cast<std::size_t>(i * q + j)];
      e.re = v[k++];
      if (i != j) e.im = v[k++];
    }
  }
  take(out.sigma1, dim);
  out.lambda2 = v[k++];
  return out;
}

/// k_p(x - x_p, x2 - x_p), complex valued.
template <typename T>
Cx<T> component_kernel(const BasicHMKComponent<T>& c, std::span<const double> x,
                       std::span<const double> x2) {
  using std::exp;
  const int dim = c.dim();
  const int q = c.num_freqs();
  T quad(0.0);
  std::vector<T> y(static_cast<std::size_t>(dim)), y2(static_cast<std::size_t>(dim));
  for (int d = 0; d < dim; ++d) {
    y[d] = x[d] - c.center[d];
    y2[d] = x2[d] - c.center[d];
    const T g2 = c.gamma[d] * c.gamma[d];
    const T centroid = 0.5 * (y[d] + y2[d]);
    const T lag = y[d] - y2[d];
    quad += g2 * (c.sigma1[d] * centroid * centroid + c.lambda2 * lag * lag);
  }
  const T envelope = exp(-kTwoPiSq * quad);

  // sum_ij b_ij e_i conj(e'_j) = sum_k (L^T e)_k conj((L^T e')_k)
  std::vector<Cx<T>> e(static_cast<std::size_t>(q)), e2(static_cast<std::size_t>(q));
  for (int i = 0; i < q; ++i) {
    T ph(0.0), ph2(0.0);
    for (int d = 0; d < dim; ++d) {
      ph += c.mu[i * dim + d] * y[d];
      ph2 += c.mu[i * dim + d] * y2[d];
    }
    e[i] = ad::expi<T>(2.0 * kPi * ph);
    e2[i] = ad::expi<T>(2.0 * kPi * ph2);
  }
  Cx<T> total(T(0.0), T(0.0));
  for (int k = 0; k < q; ++k) {
    Cx<T> v(T(0.0), T(0.0)), w(T(0.0), T(0.0));
    for (int i = k; i < q; ++i) {
      v += c.chol(i, k) * e[i];
      w += c.chol(i, k) * e2[i];
    }
    total += v * ad::conj(w);
  }
  return ad::scale(total, envelope);
}

/// HMK value; when p.real_valued the result is Re k (imaginary part zero).
cplx eval_hmk(std::span<const double> x, std::span<const double> x2, const HMKParams& p);

// ---------------------------------------------------------------------------
// Stationary families

/// Sum_q a_q exp(2 i pi w_q.tau); with `cosine` the real cosine form.
cplx eval_ss(std::span<const double> tau, std::span<const double> weights,
             std::span<const double> freqs, bool cosine = false);

/// Stationary envelope h evaluated at a scaled lag; h(0) must be 1.
using StationaryEnvelope = std::function<cplx(std::span<const double>)>;

/// Sum_q a_q h(tau o gamma_q) exp(2 i pi w_q.tau). freqs and gammas are Q x D.
cplx eval_gs(std::span<const double> tau, std::span<const double> weights,
             std::span<const double> freqs, std::span<const double> gammas,
             const StationaryEnvelope& h);

/// Spectral mixture parameters; means and variances are Q x D row-major.
template <typename T>
struct BasicSMParams {
  std::vector<T> weights;
  std::vector<T> means;
  std::vector<T> variances;

  int num_components() const { return static_cast<int>(weights.size()); }
  int dim() const { return weights.empty() ? 0 : static_cast<int>(means.size() / weights.size()); }
};

using SMParams = BasicSMParams<double>;

void validate(const SMParams& p);

template <typename T, typename X>
T sm_kernel(std::span<const X> tau, const BasicSMParams<T>& p) {
  using std::cos;
  using std::exp;
  const int dim = p.dim();
  T total(0.0);
  for (int q = 0; q < p.num_components(); ++q) {
    T quad(0.0), phase(0.0);
    for (int d = 0; d < dim; ++d) {
      quad += p.variances[q * dim + d] * tau[d] * tau[d];
      phase += p.means[q * dim + d] * tau[d];
    }
    total += p.weights[q] * exp(-kTwoPiSq * quad) * cos(2.0 * kPi * phase);
  }
  return total;
}

double eval_sm(std::span<const double> tau, const SMParams& p);

// ---------------------------------------------------------------------------
// Recovery targets (one-dimensional)

/// Input-dependent amplitude, lengthscale and frequency of a GSM target.
struct GSMFunctions {
  std::function<double(double)> w = [](double) { return 1.0; };
  std::function<double(double)> ell = [](double) { return 0.3; };
  std::function<double(double)> mu = [](double x) { return 0.5 + 0.4 * x; };
};

double eval_gibbs(double x, double x2, const std::function<double(double)>& ell);
double eval_gsm_target(double x, double x2, const GSMFunctions& f);

/// Covariance of a time-inverted fractional Brownian motion on (0.1, 1.1].
double eval_ifbm_target(double t, double s, double hurst);

}  // namespace hmk
