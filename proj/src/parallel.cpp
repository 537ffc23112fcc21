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

#include "hmk/parallel.hpp"

#include "hmk/spectral.hpp"

namespace hmk::par {

linalg::CMatrix gram(const HMKParams& p, const Inputs& x, const Inputs& x2, Exec exec) {
  linalg::CMatrix k(x.rows(), x2.rows());
  assemble(k, [&](Index i, Index j) { return eval_hmk(row(x, i), row(x2, j), p); }, exec);
  return k;
}

linalg::RMatrix gram_real(const HMKParams& p, const Inputs& x, Exec exec) {
  linalg::RMatrix k(x.rows(), x.rows());
  assemble(
      k,
      [&](Index i, Index j) {
        double v = 0.0;
        for (const auto& c : p.components) v += component_kernel(c, row(x, i), row(x, j)).re;
        return v;
      },
      exec);
  return k;
}

linalg::RMatrix gram_sm(const SMParams& p, const Inputs& x, const Inputs& x2, Exec exec) {
  linalg::RMatrix k(x.rows(), x2.rows());
  const auto dim = static_cast<std::size_t>(x.cols());
  assemble(
      k,
      [&](Index i, Index j) {
        double tau[8];
        for (std::size_t d = 0; d < dim; ++d) tau[d] = x(i, static_cast<Index>(d)) - x2(j, static_cast<Index>(d));
        return eval_sm(std::span<const double>(tau, dim), p);
      },
      exec);
  return k;
}

linalg::CMatrix gsd_grid(const HMKParams& p, const Inputs& omegas, const Inputs& xis, Exec exec) {
  spectral::require_integrable(p);
  linalg::CMatrix s(omegas.rows(), xis.rows());
  assemble(s, [&](Index i, Index j) { return spectral::gsd_hmk(row(omegas, i), row(xis, j), p); }, exec);
  return s;
}

linalg::RMatrix wdf_grid(const HMKParams& p, const Inputs& xs, const Inputs& omegas, Exec exec) {
  linalg::RMatrix w(xs.rows(), omegas.rows());
  assemble(w, [&](Index i, Index j) { return spectral::wdf_hmk(row(xs, i), row(omegas, j), p); }, exec);
  return w;
}

}  // namespace hmk::par
