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

// Closed-form generalized spectral densities (GSD) and Wigner distribution
// functions (WDF) of the LSG and HMK families, spectral densities of SM
// kernels, and trapezoid-rule Fourier oracles used to validate them.
//
// Conventions:
//   GSD  S(w, v) = double integral of k(x, x') exp(-2 i pi (w.x - v.x')) dx dx'
//   WDF  W(x, w) = integral of k(x + t/2, x - t/2) exp(-2 i pi w.t) dt
// For the LSG kernel the lag width pairs with the mean frequency (w + v)/2 and
// the centroid width with the frequency difference w - v; the quadrature
// oracle tests pin this pairing.

#include "hmk/kernels.hpp"

#include <complex>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hmk::spectral {

class NotIntegrable : public std::domain_error {
 public:
  explicit NotIntegrable(const std::string& w) : std::domain_error(w) {}
};

class WindowTooSmall : public std::runtime_error {
 public:
  explicit WindowTooSmall(const std::string& w) : std::runtime_error(w) {}
};

/// Uniform lattice, one axis per input dimension.
struct FrequencyGrid {
  std::vector<double> lo;
  std::vector<double> hi;
  std::vector<int> points;

  void validate() const;
  int dim() const { return static_cast<int>(lo.size()); }
  double at(int d, int k) const { return lo[d] + (hi[d] - lo[d]) * k / (points[d] - 1); }
  std::vector<double> axis(int d) const;
};

// ---------------------------------------------------------------------------
// LSG

double gsd_lsg(std::span<const double> omega, std::span<const double> xi, const LSGParams& p);
double wdf_lsg(std::span<const double> x, std::span<const double> omega, const LSGParams& p);

// ---------------------------------------------------------------------------
// HMK components (templated so inference can differentiate through them)

/// Amplitude entries b_ij = sum_k L_ik conj(L_jk).
template <typename T>
std::vector<Cx<T>> amplitude_entries(const BasicHMKComponent<T>& c) {
  const int q = c.num_freqs();
  std::vector<Cx<T>> b(static_cast<std::size_t>(q * q), Cx<T>(T(0.0), T(0.0)));
  for (int i = 0; i < q; ++i) {
    for (int j = 0; j < q; ++j) {
      for (int k = 0; k <= std::min(i, j); ++k) b[i * q + j] += c.chol(i, k) * ad::conj(c.chol(j, k));
    }
  }
  return b;
}

/// GSD of the unshifted component k_p (no exp(-2 i pi x_p.(w - v)) phase).
template <typename T, typename F>
Cx<T> component_gsd(const BasicHMKComponent<T>& c, std::span<const F> omega, std::span<const F> xi) {
  const int dim = c.dim();
  const int q = c.num_freqs();
  const auto b = amplitude_entries(c);
  Cx<T> total(T(0.0), T(0.0));
  for (int i = 0; i < q; ++i) {
    for (int j = 0; j < q; ++j) {
      T dens(1.0);
      for (int d = 0; d < dim; ++d) {
        const T a = (omega[d] - c.mu[i * dim + d]) / c.gamma[d];
        const T v = (xi[d] - c.mu[j * dim + d]) / c.gamma[d];
        dens = dens * normal_pdf<T>(0.5 * (a + v), c.lambda2) * normal_pdf<T>(a - v, c.sigma1[d]) /
               (c.gamma[d] * c.gamma[d]);
      }
      total += ad::scale(b[i * q + j], dens);
    }
  }
  return total;
}

/// GSD of Re k_p: (S(w, v) + conj(S(-w, -v))) / 2.
template <typename T, typename F>
Cx<T> component_gsd_real(const BasicHMKComponent<T>& c, std::span<const F> omega, std::span<const F> xi) {
  std::vector<F> nw(omega.size()), nv(xi.size());
  for (std::size_t d = 0; d < omega.size(); ++d) {
    nw[d] = -1.0 * omega[d];
    nv[d] = -1.0 * xi[d];
  }
  const Cx<T> s = component_gsd<T, F>(c, omega, xi);
  const Cx<T> m = component_gsd<T, F>(c, std::span<const F>(nw), std::span<const F>(nv));
  return {0.5 * (s.re + m.re), 0.5 * (s.im - m.im)};
}

/// WDF of the component evaluated at raw input x (shift applied inside).
template <typename T>
T component_wdf(const BasicHMKComponent<T>& c, std::span<const double> x, std::span<const double> omega) {
  using std::cos;
  using std::exp;
  using std::sin;
  const int dim = c.dim();
  const int q = c.num_freqs();
  const auto b = amplitude_entries(c);
  std::vector<T> y(static_cast<std::size_t>(dim));
  T envelope(1.0);
  for (int d = 0; d < dim; ++d) {
    y[d] = x[d] - c.center[d];
    envelope = envelope * exp(-kTwoPiSq * c.sigma1[d] * c.gamma[d] * c.gamma[d] * y[d] * y[d]) / c.gamma[d];
  }
  T total(0.0);
  for (int i = 0; i < q; ++i) {
    for (int j = 0; j < q; ++j) {
      T phase(0.0);
      T dens(1.0);
      for (int d = 0; d < dim; ++d) {
        phase += (c.mu[i * dim + d] - c.mu[j * dim + d]) * y[d];
        const T mid = 0.5 * (c.mu[i * dim + d] + c.mu[j * dim + d]);
        dens = dens * normal_pdf<T>((omega[d] - mid) / c.gamma[d], c.lambda2);
      }
      phase = 2.0 * kPi * phase;
      const auto& bij = b[i * q + j];
      total += (bij.re * cos(phase) - bij.im * sin(phase)) * dens;
    }
  }
  return total * envelope;
}

/// Factors of G(y, w) = integral of k_p(t, y) exp(-2 i pi w.t) dt for the
/// unshifted component: G = decay * sum_ij b_ij alpha_i beta_j, with
/// y = x - x_p formed from the raw input x.
template <typename T>
struct CrossFactors {
  T decay;
  std::vector<Cx<T>> alpha, beta;
};

template <typename T, typename F>
CrossFactors<T> fourier_cross_factors(const BasicHMKComponent<T>& c, std::span<const double> x,
                                      std::span<const F> omega) {
  using std::exp;
  const int dim = c.dim();
  const int q = c.num_freqs();
  std::vector<T> y(static_cast<std::size_t>(dim)), t0(static_cast<std::size_t>(dim)),
      width(static_cast<std::size_t>(dim));
  T decay_quad(0.0);
  for (int d = 0; d < dim; ++d) {
    y[d] = x[d] - c.center[d];
    const T g2 = c.gamma[d] * c.gamma[d];
    const T s1 = g2 * c.sigma1[d];
    const T s2 = g2 * c.lambda2;
    width[d] = 0.25 * s1 + s2;
    t0[d] = (4.0 * s2 - s1) / (s1 + 4.0 * s2) * y[d];
    decay_quad += s1 * s2 / width[d] * y[d] * y[d];
  }
  CrossFactors<T> f{exp(-kTwoPiSq * decay_quad), std::vector<Cx<T>>(static_cast<std::size_t>(q)),
                    std::vector<Cx<T>>(static_cast<std::size_t>(q))};
  for (int i = 0; i < q; ++i) {
    T ph_a(0.0), ph_b(0.0), dens(1.0);
    for (int d = 0; d < dim; ++d) {
      const T shift = omega[d] - c.mu[i * dim + d];
      ph_a += shift * t0[d];
      ph_b += c.mu[i * dim + d] * y[d];
      dens = dens * normal_pdf<T>(shift, width[d]);
    }
    f.alpha[i] = ad::scale(ad::expi<T>(-2.0 * kPi * ph_a), dens);
    f.beta[i] = ad::expi<T>(-2.0 * kPi * ph_b);
  }
  return f;
}

/// G(y, w) above. cov(f(x), u(w)) for the complex process is conj(G).
template <typename T, typename F>
Cx<T> component_fourier_cross(const BasicHMKComponent<T>& c, std::span<const double> x,
                              std::span<const F> omega) {
  const int q = c.num_freqs();
  const auto f = fourier_cross_factors<T, F>(c, x, omega);
  // sum_ij b_ij alpha_i beta_j = sum_k (sum_i L_ik alpha_i)(sum_j conj(L_jk) beta_j)
  Cx<T> total(T(0.0), T(0.0));
  for (int k = 0; k < q; ++k) {
    Cx<T> a(T(0.0), T(0.0)), bb(T(0.0), T(0.0));
    for (int i = k; i < q; ++i) {
      a += c.chol(i, k) * f.alpha[i];
      bb += ad::conj(c.chol(i, k)) * f.beta[i];
    }
    total += a * bb;
  }
  return ad::scale(total, f.decay);
}

/// cov(f(x), u(w)) where u is the Fourier transform of the component process.
/// With `real_valued` the process has kernel Re k_p.
template <typename T, typename F>
Cx<T> component_cross_cov(const BasicHMKComponent<T>& c, std::span<const double> x,
                          std::span<const F> omega, bool real_valued) {
  const Cx<T> g = component_fourier_cross<T, F>(c, x, omega);
  if (!real_valued) return ad::conj(g);
  std::vector<F> neg(omega.size());
  for (std::size_t d = 0; d < omega.size(); ++d) neg[d] = -1.0 * omega[d];
  const Cx<T> gn = component_fourier_cross<T, F>(c, x, std::span<const F>(neg));
  return {0.5 * (g.re + gn.re), 0.5 * (gn.im - g.im)};
}

/// Throws NotIntegrable if any centroid width is zero.
void require_integrable(const HMKComponent& c);
void require_integrable(const HMKParams& p);

cplx gsd_hmk(std::span<const double> omega, std::span<const double> xi, const HMKParams& p);
double wdf_hmk(std::span<const double> x, std::span<const double> omega, const HMKParams& p);

// ---------------------------------------------------------------------------
// Spectral mixture

double sd_sm(std::span<const double> xi, const SMParams& p);

// ---------------------------------------------------------------------------
// Quadrature oracles (one-dimensional inputs)

struct QuadratureConfig {
  double lo = -1.0;
  double hi = 1.0;
  int nodes = 400;
};

using ScalarKernel = std::function<cplx(double, double)>;

/// Trapezoid value of integral k(x + t/2, x - t/2) exp(-2 i pi w t) dt.
cplx wigner_oracle(const ScalarKernel& k, double x, double omega, const QuadratureConfig& q);

/// Trapezoid value of the double integral defining the GSD.
cplx gsd_oracle(const ScalarKernel& k, double omega, double xi, const QuadratureConfig& q);

/// GSD oracle on a set of (w, v) pairs, sharing one kernel tabulation.
std::vector<cplx> gsd_oracle_pairs(const ScalarKernel& k, std::span<const double> omegas,
                                   std::span<const double> xis, const QuadratureConfig& q);

/// Trapezoid value of integral k(t, x) exp(-2 i pi w t) dt.
cplx fourier_cross_oracle(const ScalarKernel& k, double x, double omega, const QuadratureConfig& q);

/// Window of +-`sigmas` standard deviations of the widest Gaussian factor of
/// an HMK (1-D) in input space.
QuadratureConfig input_window(const HMKParams& p, double sigmas = 6.0, int nodes = 400);
QuadratureConfig input_window(const LSGParams& p, double sigmas = 6.0, int nodes = 400);
/// Symmetric window over the lag t for the Wigner oracle.
QuadratureConfig lag_window(const HMKParams& p, double sigmas = 6.0, int nodes = 400);
QuadratureConfig lag_window(const LSGParams& p, double sigmas = 6.0, int nodes = 400);

}  // namespace hmk::spectral
