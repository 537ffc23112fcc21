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

// Serial reference vs OpenMP assembly of Gram matrices and spectral grids.

#include "hmk/parallel.hpp"
#include "hmk/rng.hpp"

#include <benchmark/benchmark.h>

namespace {

using hmk::par::Exec;

hmk::HMKParams make_kernel() {
  hmk::Rng rng(7);
  hmk::HMKParams p;
  p.real_valued = true;
  for (int k = 0; k < 3; ++k) {
    hmk::HMKComponent c;
    c.lambda2 = rng.uniform(0.1, 0.4);
    c.center = {rng.uniform(-0.5, 0.5)};
    c.gamma = {rng.uniform(0.6, 1.4)};
    c.sigma1 = {2.0 * c.lambda2};
    c.mu = {rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)};
    c.b_chol = {{1.0, 0.0}, {0.0, 0.0}, {0.3, 0.2}, {0.7, 0.0}};
    p.components.push_back(c);
  }
  return p;
}

hmk::par::Inputs grid(hmk::par::Index n, double lo, double hi) {
  hmk::par::Inputs x(n, 1);
  for (hmk::par::Index i = 0; i < n; ++i) x(i, 0) = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  return x;
}

template <Exec E>
void BM_Gram(benchmark::State& state) {
  const auto p = make_kernel();
  const auto x = grid(state.range(0), -2.0, 2.0);
  for (auto _ : state) benchmark::DoNotOptimize(hmk::par::gram(p, x, x, E));
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(0));
}

template <Exec E>
void BM_GramSM(benchmark::State& state) {
  hmk::SMParams sm;
  sm.weights = {1.0, 0.5, 0.3};
  sm.means = {0.5, 1.2, 2.0};
  sm.variances = {0.1, 0.05, 0.2};
  const auto x = grid(state.range(0), -2.0, 2.0);
  for (auto _ : state) benchmark::DoNotOptimize(hmk::par::gram_sm(sm, x, x, E));
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(0));
}

template <Exec E>
void BM_GsdGrid(benchmark::State& state) {
  const auto p = make_kernel();
  const auto w = grid(state.range(0), -3.0, 3.0);
  for (auto _ : state) benchmark::DoNotOptimize(hmk::par::gsd_grid(p, w, w, E));
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(0));
}

template <Exec E>
void BM_WdfGrid(benchmark::State& state) {
  const auto p = make_kernel();
  const auto x = grid(state.range(0), -2.0, 2.0);
  const auto w = grid(state.range(0), -3.0, 3.0);
  for (auto _ : state) benchmark::DoNotOptimize(hmk::par::wdf_grid(p, x, w, E));
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(0));
}

}  // namespace

BENCHMARK(BM_Gram<Exec::kSerial>)->Arg(100)->Arg(400);
BENCHMARK(BM_Gram<Exec::kOpenMP>)->Arg(100)->Arg(400);
BENCHMARK(BM_GramSM<Exec::kSerial>)->Arg(100)->Arg(400);
BENCHMARK(BM_GramSM<Exec::kOpenMP>)->Arg(100)->Arg(400);
BENCHMARK(BM_GsdGrid<Exec::kSerial>)->Arg(100)->Arg(200);
BENCHMARK(BM_GsdGrid<Exec::kOpenMP>)->Arg(100)->Arg(200);
BENCHMARK(BM_WdfGrid<Exec::kSerial>)->Arg(100)->Arg(200);
BENCHMARK(BM_WdfGrid<Exec::kOpenMP>)->Arg(100)->Arg(200);

BENCHMARK_MAIN();
