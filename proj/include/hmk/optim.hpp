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

// Training: Adam, natural gradients for q(v), kernel recovery by minibatch
// MSE, the alternating natgrad/Adam schedule, collapsed-bound training and a
// finite-difference gradient checker. All randomness flows from Rng seeds.

#include "hmk/inference.hpp"
#include "hmk/rng.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hmk::optim {

using inference::Inputs;
using inference::Likelihood;
using inference::SparseModel;
using inference::VariationalState;
using linalg::Index;
using linalg::RMatrix;
using linalg::RVector;

class StepFailed : public std::runtime_error {
 public:
  explicit StepFailed(const std::string& w) : std::runtime_error(w) {}
};

struct AdamConfig {
  double lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
};

struct AdamState {
  std::vector<double> m, v;
  std::int64_t t = 0;
};

/// One bias-corrected Adam step that decreases a loss with gradient `grads`.
void adam_step(std::vector<double>& params, std::span<const double> grads, AdamState& state,
               const AdamConfig& cfg);

/// Natural-gradient ascent step on q(v) = N(m, S) given dF/dm and the
/// symmetric dF/dS. Works in natural parameters (S^{-1} m, -S^{-1}/2) with the
/// gradient taken w.r.t. expectation parameters. On a non-positive-definite
/// result the step is halved, up to `max_halvings` times, before StepFailed.
/// Returns the accepted step size.
double natgrad_step(VariationalState& q, const RVector& g_mean, const RMatrix& g_cov, double gamma,
                    int max_halvings = 10);

struct GradCheckReport {
  std::vector<double> rel_error;  // per parameter; 0 where both gradients are below the floor
  double max_rel_error = 0.0;
  bool pass = false;
};

using Loss = std::function<double(std::span<const double>)>;

/// Central differences with step h_fd * (1 + |theta_k|). Relative error is
/// |a - fd| / max(|a|, |fd|) on parameters whose gradient exceeds 1e-8.
GradCheckReport gradcheck(const Loss& loss, std::span<const double> params, std::span<const double> analytic,
                          double h_fd = 1e-5);

struct TraceRow {
  int iter = 0;
  double objective = 0.0;
  double wallclock_ms = 0.0;
};
using Trace = std::vector<TraceRow>;

// ---------------------------------------------------------------------------
// Initialisation

/// Lloyd's k-means with k-means++ seeding; returns k x D centres.
Inputs kmeans(const Inputs& x, int k, Rng& rng, int iterations = 50);

/// The `count` strongest frequencies of the periodogram of (x, r) scanned on
/// (0, max_freq], one-dimensional inputs only. Returned in decreasing power.
std::vector<double> dominant_frequencies(const Inputs& x, const RVector& r, int count, double max_freq,
                                         int scan = 400);

struct HMKInitConfig {
  int components = 4;
  int freqs = 2;
  double freq_noise = 0.1;  // sd of the Gaussian perturbation added to DFT peaks
  double max_freq = 2.0;    // periodogram range, cycles per input unit
};

/// Real-valued HMK initialised from data: k-means centres, gamma from the
/// input spread, frequencies from DFT peaks (1-D) or random draws, amplitudes
/// matching the target variance.
HMKParams init_hmk(const Inputs& x, const RVector& y, const HMKInitConfig& cfg, Rng& rng);

/// m_p inducing frequencies per component around its frequency means.
inference::InducingFrequencies init_inducing(const HMKParams& k, int per_component, double spread, Rng& rng);

SMParams init_sm(const Inputs& x, const RVector& y, int components, double max_freq, Rng& rng);

// ---------------------------------------------------------------------------
// Kernel recovery

using TargetKernel = std::function<double(std::span<const double>, std::span<const double>)>;

struct RecoveryConfig {
  int iterations = 3000;
  int batch = 256;  // grid pairs per step
  int restarts = 5;
  AdamConfig adam{2e-2, 0.9, 0.999, 1e-8};
  std::uint64_t seed = 0;
  int trace_every = 50;
};

struct RecoveryResult {
  HMKParams params;
  double mse = 0.0;
  std::vector<double> restart_mse;
  Trace trace;  // best restart, full-grid MSE
};

double recovery_mse(const HMKParams& p, const Inputs& grid, const RMatrix& target);

/// Fits a real-valued HMK to target(grid_i, grid_j). Restart 0 starts from
/// `init`; later restarts use random initialisations of the same shape. Each
/// restart keeps its lowest full-grid MSE among the trace checkpoints.
RecoveryResult recover_kernel(const TargetKernel& target, const HMKParams& init, const Inputs& grid,
                              const RecoveryConfig& cfg);

/// Unconstrained recovery parameters: component_to_raw blocks in order.
std::vector<double> recovery_raw(const HMKParams& k);
HMKParams recovery_from_raw(const HMKParams& shape, std::span<const double> raw);

/// Full-grid MSE and its gradient w.r.t. recovery_raw(k).
double recovery_objective(const HMKParams& k, const Inputs& grid, const RMatrix& target, std::vector<double>& grad);

/// Random recovery initialisation with the given shape.
HMKParams random_recovery_init(const Inputs& grid, const RMatrix& target, int components, int freqs, Rng& rng);

// ---------------------------------------------------------------------------
// Sparse GP training

struct ScheduleConfig {
  int natgrad_warmup_iters = 200;
  int alternating_rounds = 700;
  int batch = 100;
};

struct TrainConfig {
  AdamConfig adam;
  double natgrad_gamma = 0.1;
  ScheduleConfig schedule;
  std::uint64_t seed = 0;
  bool train_noise = true;
};

/// Warmup natgrad steps, then rounds of (natgrad on q, Adam on model and
/// likelihood parameters) on minibatches. The trace holds the full-data bound
/// before training and after every step. With zero rounds nothing changes.
Trace train_alternating(SparseModel& model, VariationalState& q, Likelihood& lik, const Inputs& x,
                        const RVector& y, const TrainConfig& cfg);

/// Convenience overload on a VFF state.
Trace train_alternating(inference::SparseGPState& state, const Inputs& x, const RVector& y,
                        const TrainConfig& cfg);

struct CollapsedConfig {
  AdamConfig adam;
  int iterations = 500;
  bool train_noise = true;
  double min_noise = 1e-6;
};

/// Full-batch Adam on the collapsed bound over model parameters and the noise
/// variance. The trace records the bound before each step and at the end.
Trace train_collapsed(SparseModel& model, double& noise_var, const Inputs& x, const RVector& y,
                      const CollapsedConfig& cfg);

}  // namespace hmk::optim
