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

#include "hmk/kernels.hpp"
#include "hmk/linalg.hpp"
#include "hmk/rng.hpp"

#include <Eigen/Dense>

namespace hmk::testing {

inline linalg::CMatrix random_complex(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  linalg::CMatrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = cplx(rng.normal(), rng.normal());
  }
  return m;
}

inline linalg::RMatrix random_real(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  linalg::RMatrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
  }
  return m;
}

/// Well-conditioned Hermitian positive definite matrix.
inline linalg::CMatrix random_hpd(Rng& rng, Eigen::Index n) {
  const linalg::CMatrix a = random_complex(rng, n, n);
  return a * a.adjoint() + static_cast<double>(n) * linalg::CMatrix::Identity(n, n);
}

struct ComponentRanges {
  double center = 0.5;
  double gamma_lo = 0.6, gamma_hi = 1.4;
  double mu = 2.0;
  double lambda_lo = 0.08, lambda_hi = 0.4;
  // sigma1 = ratio * 4 lambda2 keeps the envelope positive definite.
  double ratio_lo = 0.15, ratio_hi = 1.0;
  bool complex_b = true;
};

inline HMKComponent random_component(Rng& rng, int dim, int q, const ComponentRanges& r = {}) {
  HMKComponent c;
  c.lambda2 = rng.uniform(r.lambda_lo, r.lambda_hi);
  for (int d = 0; d < dim; ++d) {
    c.center.push_back(rng.uniform(-r.center, r.center));
    c.gamma.push_back(rng.uniform(r.gamma_lo, r.gamma_hi));
    c.sigma1.push_back(4.0 * c.lambda2 * rng.uniform(r.ratio_lo, r.ratio_hi));
  }
  for (int k = 0; k < q * dim; ++k) c.mu.push_back(rng.uniform(-r.mu, r.mu));
  c.b_chol.assign(static_cast<std::size_t>(q * q), Cx<double>(0.0, 0.0));
  for (int i = 0; i < q; ++i) {
    for (int j = 0; j <= i; ++j) {
      auto& e = c.b_chol[static_cast<std::size_t>(i * q + j)];
      if (i == j) {
        e = Cx<double>(rng.uniform(0.3, 1.0), 0.0);
      } else {
        e = Cx<double>(0.4 * rng.normal(), r.complex_b ? 0.4 * rng.normal() : 0.0);
      }
    }
  }
  return c;
}

inline HMKParams random_hmk(Rng& rng, int dim, int p, int q, bool real_valued,
                            const ComponentRanges& r = {}) {
  HMKParams h;
  h.real_valued = real_valued;
  for (int k = 0; k < p; ++k) h.components.push_back(random_component(rng, dim, q, r));
  return h;
}

inline SMParams random_sm(Rng& rng, int dim, int q) {
  SMParams s;
  for (int k = 0; k < q; ++k) {
    s.weights.push_back(rng.uniform(0.2, 1.5));
    for (int d = 0; d < dim; ++d) {
      s.means.push_back(rng.uniform(0.0, 2.0));
      s.variances.push_back(rng.uniform(0.05, 0.5));
    }
  }
  return s;
}

/// Largest |a - b| / max(|b|, floor) over entries with |b| above floor.
template <typename A, typename B>
double max_rel_error(const A& a, const B& b, double floor) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < b.size(); ++i) {
    const double ref = std::abs(b(i));
    if (ref < floor) continue;
    worst = std::max(worst, std::abs(a(i) - b(i)) / ref);
  }
  return worst;
}

}  // namespace hmk::testing
