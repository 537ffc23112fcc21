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

// Data-parallel assembly of kernel matrices and spectral grids. Every entry is
// computed independently and written to its own slot, so the OpenMP and serial
// paths produce bit-identical output; the serial path is the reference the
// tests and benchmark compare against.

#include "hmk/kernels.hpp"
#include "hmk/linalg.hpp"

#include <Eigen/Dense>

#include <span>

namespace hmk::par {

enum class Exec { kSerial, kOpenMP };

using Index = Eigen::Index;
/// n x D inputs, one row per point; rows are contiguous.
using Inputs = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline std::span<const double> row(const Inputs& x, Index i) {
  return {x.data() + i * x.cols(), static_cast<std::size_t>(x.cols())};
}

/// Calls f(i) for i in [0, n).
template <typename F>
void for_each_index(Index n, F&& f, Exec exec) {
  if (exec == Exec::kSerial) {
    for (Index i = 0; i < n; ++i) f(i);
    return;
  }
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < n; ++i) f(i);
}

/// out(i, j) = f(i, j) for the full rows x cols range.
template <typename Out, typename F>
void assemble(Out& out, F&& f, Exec exec) {
  const Index rows = out.rows();
  const Index cols = out.cols();
  if (exec == Exec::kSerial) {
    for (Index i = 0; i < rows; ++i) {
      for (Index j = 0; j < cols; ++j) out(i, j) = f(i, j);
    }
    return;
  }
#pragma omp parallel for collapse(2) schedule(static)
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) out(i, j) = f(i, j);
  }
}

linalg::CMatrix gram(const HMKParams& p, const Inputs& x, const Inputs& x2, Exec exec = Exec::kOpenMP);

/// Re k on x, the Gram matrix of the real-valued HMK.
linalg::RMatrix gram_real(const HMKParams& p, const Inputs& x, Exec exec = Exec::kOpenMP);

linalg::RMatrix gram_sm(const SMParams& p, const Inputs& x, const Inputs& x2, Exec exec = Exec::kOpenMP);

/// GSD on the tensor grid omegas x xis (rows x cols), both 1-D per row of
/// the given input sets.
linalg::CMatrix gsd_grid(const HMKParams& p, const Inputs& omegas, const Inputs& xis,
                         Exec exec = Exec::kOpenMP);

/// WDF on xs x omegas.
linalg::RMatrix wdf_grid(const HMKParams& p, const Inputs& xs, const Inputs& omegas,
                         Exec exec = Exec::kOpenMP);

}  // namespace hmk::par
