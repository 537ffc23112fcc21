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

#include "hmk/kernels.hpp"

#include <cmath>
#include <sstream>

namespace hmk {

double eval_lsg(std::span<const double> x, std::span<const double> x2, const LSGParams& p) {
  double quad = 0.0;
  for (int d = 0; d < p.dim(); ++d) {
    const double centroid = 0.5 * (x[d] + x2[d]);
    const double lag = x[d] - x2[d];
    quad += p.sigma1[d] * centroid * centroid + p.lambda2 * lag * lag;
  }
  return std::exp(-kTwoPiSq * quad);
}

void validate(const LSGParams& p) {
  if (p.sigma1.empty()) throw InvalidParameters("LSG: empty sigma1");
  if (!(p.lambda2 > 0.0)) throw InvalidParameters("LSG: lambda2 must be positive");
  for (double s : p.sigma1) {
    if (!(s >= 0.0)) throw InvalidParameters("LSG: sigma1 must be non-negative");
    if (s > 4.0 * p.lambda2 * (1.0 + 1e-12)) {
      throw InvalidParameters("LSG: positive definiteness requires sigma1 <= 4 lambda2");
    }
  }
}

void validate(const HMKComponent& c) {
  const int dim = c.dim();
  if (dim <= 0) throw InvalidParameters("HMK component: empty center");
  if (static_cast<int>(c.gamma.size()) != dim || static_cast<int>(c.sigma1.size()) != dim) {
    throw InvalidParameters("HMK component: gamma/sigma1 size mismatch");
  }
  if (c.mu.empty() || c.mu.size() % static_cast<std::size_t>(dim) != 0) {
    throw InvalidParameters("HMK component: mu must be Q x D with Q >= 1");
  }
  const int q = c.num_freqs();
  if (static_cast<int>(c.b_chol.size()) != q * q) {
    throw InvalidParameters("HMK component: b_chol must be Q x Q");
  }
  for (int d = 0; d < dim; ++d) {
    if (!(c.gamma[d] > 0.0)) throw InvalidParameters("HMK component: gamma must be positive");
    if (!(c.sigma1[d] >= 0.0)) throw InvalidParameters("HMK component: sigma1 must be non-negative");
  }
  if (!(c.lambda2 > 0.0)) throw InvalidParameters("HMK component: lambda2 must be positive");
  for (int d = 0; d < dim; ++d) {
    if (c.sigma1[d] > 4.0 * c.lambda2 * (1.0 + 1e-12)) {
      throw InvalidParameters("HMK component: positive definiteness requires sigma1 <= 4 lambda2");
    }
  }
  for (int i = 0; i < q; ++i) {
    if (c.chol(i, i).im != 0.0) throw InvalidParameters("HMK component: chol diagonal must be real");
    for (int j = i + 1; j < q; ++j) {
      if (c.chol(i, j).re != 0.0 || c.chol(i, j).im != 0.0) {
        throw InvalidParameters("HMK component: chol must be lower triangular");
      }
    }
  }
}

void validate(const HMKParams& p) {
  if (p.components.empty()) throw InvalidParameters("HMK: need at least one component");
  const int dim = p.dim();
  for (const auto& c : p.components) {
    validate(c);
    if (c.dim() != dim) throw InvalidParameters("HMK: components disagree on input dimension");
  }
}

int component_param_count(int dim, int num_freqs) {
  return 3 * dim + num_freqs * dim + num_freqs * num_freqs + 1;
}

std::vector<double> flatten(const HMKComponent& c) {
  std::vector<double> v;
  v.reserve(static_cast<std::size_t>(component_param_count(c)));
  v.insert(v.end(), c.center.begin(), c.center.end());
  v.insert(v.end(), c.gamma.begin(), c.gamma.end());
  v.insert(v.end(), c.mu.begin(), c.mu.end());
  const int q = c.num_freqs();
  for (int i = 0; i < q; ++i) {
    for (int j = 0; j <= i; ++j) {
      v.push_back(c.chol(i, j).re);
      if (i != j) v.push_back(c.chol(i, j).im);
    }
  }
  v.insert(v.end(), c.sigma1.begin(), c.sigma1.end());
  v.push_back(c.lambda2);
  return v;
}

HMKComponent unflatten(std::span<const double> v, int dim, int num_freqs) {
  if (static_cast<int>(v.size()) != component_param_count(dim, num_freqs)) {
    throw InvalidParameters("unflatten: wrong parameter count");
  }
  HMKComponent c;
  std::size_t k = 0;
  auto take = [&](std::vector<double>& dst, int n) {
    dst.assign(v.begin() + static_cast<long>(k), v.begin() + static_cast<long>(k + n));
    k += static_cast<std::size_t>(n);
  };
  take(c.center, dim);
  take(c.gamma, dim);
  take(c.mu, num_freqs * dim);
  c.b_chol.assign(static_cast<std::size_t>(num_freqs * num_freqs), Cx<double>(0.0, 0.0));
  for (int i = 0; i < num_freqs; ++i) {
    for (int j = 0; j <= i; ++j) {
      auto& e = c.b_chol[static_cast<std::size_t>(i * num_freqs + j)];
      e.re = v[k++];
      if (i != j) e.im = v[k++];
    }
  }
  take(c.sigma1, dim);
  c.lambda2 = v[k++];
  return c;
}

std::vector<cplx> amplitude_matrix(const HMKComponent& c) {
  const int q = c.num_freqs();
  std::vector<cplx> b(static_cast<std::size_t>(q * q));
  for (int i = 0; i < q; ++i) {
    for (int j = 0; j < q; ++j) {
      cplx s = 0.0;
      for (int k = 0; k <= std::min(i, j); ++k) {
        s += cplx(c.chol(i, k).re, c.chol(i, k).im) * std::conj(cplx(c.chol(j, k).re, c.chol(j, k).im));
      }
      b[static_cast<std::size_t>(i * q + j)] = s;
    }
  }
  return b;
}

cplx eval_hmk(std::span<const double> x, std::span<const double> x2, const HMKParams& p) {
  cplx total = 0.0;
  for (const auto& c : p.components) {
    const auto v = component_kernel(c, x, x2);
    total += cplx(v.re, v.im);
  }
  if (p.real_valued) return {total.real(), 0.0};
  return total;
}

cplx eval_ss(std::span<const double> tau, std::span<const double> weights,
             std::span<const double> freqs, bool cosine) {
  const std::size_t q = weights.size();
  const std::size_t dim = tau.size();
  if (freqs.size() != q * dim) throw InvalidParameters("eval_ss: freqs must be Q x D");
  cplx total = 0.0;
  for (std::size_t k = 0; k < q; ++k) {
    double phase = 0.0;
    for (std::size_t d = 0; d < dim; ++d) phase += freqs[k * dim + d] * tau[d];
    phase *= 2.0 * kPi;
    total += cosine ? cplx(weights[k] * std::cos(phase), 0.0) : weights[k] * std::polar(1.0, phase);
  }
  return total;
}

cplx eval_gs(std::span<const double> tau, std::span<const double> weights,
             std::span<const double> freqs, std::span<const double> gammas,
             const StationaryEnvelope& h) {
  const std::size_t q = weights.size();
  const std::size_t dim = tau.size();
  if (freqs.size() != q * dim || gammas.size() != q * dim) {
    throw InvalidParameters("eval_gs: freqs and gammas must be Q x D");
  }
  std::vector<double> scaled(dim);
  cplx total = 0.0;
  for (std::size_t k = 0; k < q; ++k) {
    double phase = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
      phase += freqs[k * dim + d] * tau[d];
      scaled[d] = tau[d] * gammas[k * dim + d];
    }
    total += weights[k] * h(scaled) * std::polar(1.0, 2.0 * kPi * phase);
  }
  return total;
}

void validate(const SMParams& p) {
  const std::size_t q = p.weights.size();
  if (q == 0) throw InvalidParameters("SM: need at least one component");
  if (p.means.size() != p.variances.size() || p.means.size() % q != 0 || p.means.empty()) {
    throw InvalidParameters("SM: means/variances must be Q x D");
  }
  for (double w : p.weights) {
    if (!(w > 0.0)) throw InvalidParameters("SM: weights must be positive");
  }
  for (double v : p.variances) {
    if (!(v > 0.0)) throw InvalidParameters("SM: variances must be positive");
  }
}

double eval_sm(std::span<const double> tau, const SMParams& p) { return sm_kernel<double, double>(tau, p); }

double eval_gibbs(double x, double x2, const std::function<double(double)>& ell) {
  const double l1 = ell(x);
  const double l2 = ell(x2);
  if (!(l1 > 0.0) || !(l2 > 0.0)) {
    std::ostringstream os;
    os << "Gibbs kernel: non-positive lengthscale at x=" << (l1 > 0.0 ? x2 : x);
    throw NonPositiveLengthscale(os.str());
  }
  const double s = l1 * l1 + l2 * l2;
  const double d = x - x2;
  return std::sqrt(2.0 * l1 * l2 / s) * std::exp(-d * d / s);
}

double eval_gsm_target(double x, double x2, const GSMFunctions& f) {
  const double g = eval_gibbs(x, x2, f.ell);
  return f.w(x) * f.w(x2) * g * std::cos(2.0 * kPi * (f.mu(x) * x - f.mu(x2) * x2));
}

double eval_ifbm_target(double t, double s, double hurst) {
  auto in_domain = [](double v) { return v > 0.1 && v <= 1.1; };
  if (!in_domain(t) || !in_domain(s)) {
    std::ostringstream os;
    os << "IFBM kernel: arguments (" << t << ", " << s << ") outside (0.1, 1.1]";
    throw DomainViolation(os.str());
  }
  if (!(hurst > 0.0 && hurst < 1.0)) throw DomainViolation("IFBM kernel: hurst must be in (0, 1)");
  const double e = 2.0 * hurst;
  return 0.5 * (std::pow(t, -e) + std::pow(s, -e) - std::pow(std::abs(1.0 / t - 1.0 / s), e));
}

}  // namespace hmk
