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

#include "hmk/spectral.hpp"

#include "hmk/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace hmk::spectral {

void FrequencyGrid::validate() const {
  if (lo.empty() || lo.size() != hi.size() || lo.size() != points.size()) {
    throw std::invalid_argument("FrequencyGrid: inconsistent axis count");
  }
  for (std::size_t d = 0; d < lo.size(); ++d) {
    if (!(lo[d] < hi[d])) throw std::invalid_argument("FrequencyGrid: min must be < max");
    if (points[d] < 2) throw std::invalid_argument("FrequencyGrid: need at least 2 points per axis");
  }
}

std::vector<double> FrequencyGrid::axis(int d) const {
  std::vector<double> a(static_cast<std::size_t>(points[d]));
  for (int k = 0; k < points[d]; ++k) a[k] = at(d, k);
  return a;
}

double gsd_lsg(std::span<const double> omega, std::span<const double> xi, const LSGParams& p) {
  double v = 1.0;
  for (int d = 0; d < p.dim(); ++d) {
    if (!(p.sigma1[d] > 0.0)) throw NotIntegrable("gsd_lsg: zero centroid width has no GSD");
    v *= normal_pdf(0.5 * (omega[d] + xi[d]), p.lambda2) * normal_pdf(omega[d] - xi[d], p.sigma1[d]);
  }
  return v;
}

double wdf_lsg(std::span<const double> x, std::span<const double> omega, const LSGParams& p) {
  double v = 1.0;
  for (int d = 0; d < p.dim(); ++d) {
    v *= normal_pdf(omega[d], p.lambda2) * std::exp(-kTwoPiSq * p.sigma1[d] * x[d] * x[d]);
  }
  return v;
}

void require_integrable(const HMKComponent& c) {
  for (double s : c.sigma1) {
    if (!(s > 0.0)) throw NotIntegrable("HMK component with zero centroid width has no GSD");
  }
}

void require_integrable(const HMKParams& p) {
  for (const auto& c : p.components) require_integrable(c);
}

cplx gsd_hmk(std::span<const double> omega, std::span<const double> xi, const HMKParams& p) {
  require_integrable(p);
  const int dim = p.dim();
  cplx total = 0.0;
  for (const auto& c : p.components) {
    const auto s = p.real_valued ? component_gsd_real<double, double>(c, omega, xi)
                                 : component_gsd<double, double>(c, omega, xi);
    double shift = 0.0;
    for (int d = 0; d < dim; ++d) shift += c.center[d] * (omega[d] - xi[d]);
    total += cplx(s.re, s.im) * std::polar(1.0, -2.0 * kPi * shift);
  }
  return total;
}

double wdf_hmk(std::span<const double> x, std::span<const double> omega, const HMKParams& p) {
  double total = 0.0;
  std::vector<double> neg(omega.begin(), omega.end());
  for (double& w : neg) w = -w;
  for (const auto& c : p.components) {
    const double w = component_wdf<double>(c, x, omega);
    total += p.real_valued ? 0.5 * (w + component_wdf<double>(c, x, neg)) : w;
  }
  return total;
}

double sd_sm(std::span<const double> xi, const SMParams& p) {
  const int dim = p.dim();
  double total = 0.0;
  for (int q = 0; q < p.num_components(); ++q) {
    double pos = 1.0, neg = 1.0;
    for (int d = 0; d < dim; ++d) {
      const double var = p.variances[q * dim + d];
      const double m = p.means[q * dim + d];
      pos *= normal_pdf(xi[d] - m, var);
      neg *= normal_pdf(xi[d] + m, var);
    }
    total += 0.5 * p.weights[q] * (pos + neg);
  }
  return total;
}

namespace {

std::vector<double> nodes_of(const QuadratureConfig& q) {
  if (q.nodes < 2 || !(q.lo < q.hi)) throw std::invalid_argument("QuadratureConfig: bad window");
  std::vector<double> t(static_cast<std::size_t>(q.nodes));
  for (int k = 0; k < q.nodes; ++k) t[k] = q.lo + (q.hi - q.lo) * k / (q.nodes - 1);
  return t;
}

double step_of(const QuadratureConfig& q) { return (q.hi - q.lo) / (q.nodes - 1); }

double trap_weight(int k, int n) { return (k == 0 || k == n - 1) ? 0.5 : 1.0; }

void check_window(double boundary, double peak, const char* who) {
  if (peak > 0.0 && boundary > 1e-6 * peak) {
    std::ostringstream os;
    os << who << ": integrand at window edge is " << boundary / peak << " of its peak";
    throw WindowTooSmall(os.str());
  }
}

}  // namespace

cplx wigner_oracle(const ScalarKernel& k, double x, double omega, const QuadratureConfig& q) {
  const auto t = nodes_of(q);
  const int n = q.nodes;
  cplx sum = 0.0;
  double peak = 0.0, boundary = 0.0;
  for (int j = 0; j < n; ++j) {
    const cplx v = k(x + 0.5 * t[j], x - 0.5 * t[j]);
    const double a = std::abs(v);
    peak = std::max(peak, a);
    if (j == 0 || j == n - 1) boundary = std::max(boundary, a);
    sum += trap_weight(j, n) * v * std::polar(1.0, -2.0 * kPi * omega * t[j]);
  }
  check_window(boundary, peak, "wigner_oracle");
  return sum * step_of(q);
}

std::vector<cplx> gsd_oracle_pairs(const ScalarKernel& k, std::span<const double> omegas,
                                   std::span<const double> xis, const QuadratureConfig& q) {
  if (omegas.size() != xis.size()) throw std::invalid_argument("gsd_oracle_pairs: length mismatch");
  const auto t = nodes_of(q);
  const int n = q.nodes;
  linalg::CMatrix table(n, n);
  double peak = 0.0, boundary = 0.0;
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) {
      const cplx v = k(t[a], t[b]);
      const double m = std::abs(v);
      peak = std::max(peak, m);
      if (a == 0 || b == 0 || a == n - 1 || b == n - 1) boundary = std::max(boundary, m);
      table(a, b) = trap_weight(a, n) * trap_weight(b, n) * v;
    }
  }
  check_window(boundary, peak, "gsd_oracle");
  const double h = step_of(q);
  std::vector<cplx> out(omegas.size());
  linalg::CVector ew(n), ev(n);
  for (std::size_t p = 0; p < omegas.size(); ++p) {
    for (int a = 0; a < n; ++a) {
      ew[a] = std::polar(1.0, 2.0 * kPi * omegas[p] * t[a]);
      ev[a] = std::polar(1.0, 2.0 * kPi * xis[p] * t[a]);
    }
    out[p] = ew.dot(table * ev) * (h * h);
  }
  return out;
}

cplx gsd_oracle(const ScalarKernel& k, double omega, double xi, const QuadratureConfig& q) {
  const double w[1] = {omega};
  const double v[1] = {xi};
  return gsd_oracle_pairs(k, w, v, q).front();
}

cplx fourier_cross_oracle(const ScalarKernel& k, double x, double omega, const QuadratureConfig& q) {
  const auto t = nodes_of(q);
  const int n = q.nodes;
  cplx sum = 0.0;
  double peak = 0.0, boundary = 0.0;
  for (int j = 0; j < n; ++j) {
    const cplx v = k(t[j], x);
    const double a = std::abs(v);
    peak = std::max(peak, a);
    if (j == 0 || j == n - 1) boundary = std::max(boundary, a);
    sum += trap_weight(j, n) * v * std::polar(1.0, -2.0 * kPi * omega * t[j]);
  }
  check_window(boundary, peak, "fourier_cross_oracle");
  return sum * step_of(q);
}

namespace {

// Standard deviations, in input units, of the centroid and lag envelopes.
double centroid_sd(double sigma1, double gamma) { return 1.0 / (2.0 * kPi * gamma * std::sqrt(sigma1)); }
double lag_sd(double lambda2, double gamma) { return 1.0 / (2.0 * kPi * gamma * std::sqrt(lambda2)); }

}  // namespace

QuadratureConfig input_window(const HMKParams& p, double sigmas, int nodes) {
  if (p.dim() != 1) throw std::invalid_argument("input_window: one-dimensional kernels only");
  require_integrable(p);
  double lo = 0.0, hi = 0.0;
  bool first = true;
  for (const auto& c : p.components) {
    const double r = sigmas * (centroid_sd(c.sigma1[0], c.gamma[0]) + lag_sd(c.lambda2, c.gamma[0]));
    lo = first ? c.center[0] - r : std::min(lo, c.center[0] - r);
    hi = first ? c.center[0] + r : std::max(hi, c.center[0] + r);
    first = false;
  }
  return {lo, hi, nodes};
}

QuadratureConfig input_window(const LSGParams& p, double sigmas, int nodes) {
  if (p.dim() != 1) throw std::invalid_argument("input_window: one-dimensional kernels only");
  if (!(p.sigma1[0] > 0.0)) throw NotIntegrable("input_window: zero centroid width");
  const double r = sigmas * (centroid_sd(p.sigma1[0], 1.0) + lag_sd(p.lambda2, 1.0));
  return {-r, r, nodes};
}

QuadratureConfig lag_window(const HMKParams& p, double sigmas, int nodes) {
  double r = 0.0;
  for (const auto& c : p.components) r = std::max(r, sigmas * lag_sd(c.lambda2, c.gamma[0]));
  return {-r, r, nodes};
}

QuadratureConfig lag_window(const LSGParams& p, double sigmas, int nodes) {
  const double r = sigmas * lag_sd(p.lambda2, 1.0);
  return {-r, r, nodes};
}

}  // namespace hmk::spectral
