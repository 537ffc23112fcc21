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

// Sparse variational GP inference with inter-domain Fourier features.
//
// The inducing variables of component p are u_pj = integral g_p(y)
// exp(-2 i pi w_pj.y) dy, the Fourier transform of the unshifted component
// process g_p (f = sum_p g_p(x - x_p)). For a real-valued kernel u is complex
// and improper, so inference works on the stacked real vector
// v = [Re u_1; Im u_1; Re u_2; Im u_2; ...] of length 2m, whose prior
// covariance is block diagonal with one 2 m_p block per component:
//
//   E[Re u Re u^T] = Re(K + P) / 2     E[Im u Im u^T] = Re(K - P) / 2
//   E[Re u Im u^T] = (Im P - Im K) / 2
//
// with K = E[u u^H] (the component GSD) and P = E[u u^T] (the GSD at
// (w_i, -w_j)). cov(f(x), Re u) = Re K_fu and cov(f(x), Im u) = -Im K_fu.
//
// Prior covariances are factored with the jitter ladder; the jittered matrix
// K~ is the prior actually used (KL, conditionals and optimal q all refer to
// it), which keeps the marginal of f exact and every bound valid.

#include "hmk/kernels.hpp"
#include "hmk/linalg.hpp"
#include "hmk/parallel.hpp"

#include <nlohmann/json_fwd.hpp>

#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hmk::inference {

using linalg::CMatrix;
using linalg::Index;
using linalg::RMatrix;
using linalg::RVector;
using par::Inputs;

class InvalidTargets : public std::invalid_argument {
 public:
  explicit InvalidTargets(const std::string& w) : std::invalid_argument(w) {}
};

/// m_p frequencies per component, each m_p x D row-major.
struct InducingFrequencies {
  int dim = 1;
  std::vector<std::vector<double>> freqs;

  int num_components() const { return static_cast<int>(freqs.size()); }
  int count(int p) const { return static_cast<int>(freqs[p].size()) / dim; }
  int total() const;
  std::span<const double> at(int p, int j) const {
    return {freqs[p].data() + static_cast<std::size_t>(j * dim), static_cast<std::size_t>(dim)};
  }
  /// Block sizes of the stacked real representation (2 m_p each).
  std::vector<Index> stacked_blocks() const;
  void validate(int num_components) const;
};

// ---------------------------------------------------------------------------
// Complex covariances

/// Block-diagonal E[u u^H].
linalg::HermitianMatrix<cplx> compute_kuu(const HMKParams& kernel, const InducingFrequencies& z);
/// Block-diagonal E[u u^T]; zero outside diagonal blocks.
CMatrix compute_kuu_pseudo(const HMKParams& kernel, const InducingFrequencies& z);
/// n x m matrix cov(f(x_i), u_j).
CMatrix compute_kfu(const HMKParams& kernel, const Inputs& x, const InducingFrequencies& z);

/// Stacked real prior covariance from E[u u^H] and E[u u^T].
RMatrix stack_kuu(const CMatrix& kuu, const CMatrix& pseudo, const InducingFrequencies& z);
/// Stacked real cross covariance, 2m x n.
RMatrix stack_kuf(const CMatrix& kfu, const InducingFrequencies& z);

// ---------------------------------------------------------------------------
// Feature models: anything exposing a prior covariance over real inducing
// variables, their cross covariance with f, and adjoint backpropagation into
// unconstrained parameters.

class SparseModel {
 public:
  virtual ~SparseModel() = default;

  virtual Index num_inducing() const = 0;
  virtual std::vector<Index> blocks() const = 0;
  virtual RMatrix kuu() const = 0;
  /// M x n.
  virtual RMatrix kuf(const Inputs& x) const = 0;
  virtual RVector kdiag(const Inputs& x) const = 0;

  virtual int num_params() const = 0;
  virtual std::vector<double> params() const = 0;
  virtual void set_params(std::span<const double> raw) = 0;
  /// Gradient w.r.t. params() given adjoints of kuu (M x M, every entry
  /// treated as independent), kuf (M x n) and kdiag (n).
  virtual std::vector<double> backprop(const Inputs& x, const RMatrix& g_kuu, const RMatrix& g_kuf,
                                       const RVector& g_kdiag) const = 0;
  virtual std::unique_ptr<SparseModel> clone() const = 0;
};

/// Stable softplus, its inverse and derivative.
double softplus(double r);
double softplus_inv(double v);
double sigmoid(double r);

/// Unconstrained form of one component in flatten() order: gamma and lambda2
/// through softplus, sigma1 as 4 lambda2 sigmoid(r), everything else as is.
std::vector<double> component_to_raw(const HMKComponent& c);
HMKComponent component_from_raw(std::span<const double> raw, int dim, int num_freqs);
/// Chain rule from a flatten()-order gradient to the unconstrained one.
void component_raw_gradient(std::span<const double> raw, std::span<const double> g_flat, int dim, int num_freqs,
                            std::span<double> out);

/// Real-valued HMK with variational Fourier features. Unconstrained layout
/// per component: center, log-free gamma (softplus), mu, Cholesky entries,
/// sigma1 as 4 lambda2 sigmoid(r), lambda2 (softplus); then all inducing
/// frequencies in declaration order.
class VffModel : public SparseModel {
 public:
  VffModel(HMKParams kernel, InducingFrequencies z);

  const HMKParams& kernel() const { return kernel_; }
  const InducingFrequencies& inducing() const { return z_; }

  Index num_inducing() const override { return 2 * z_.total(); }
  std::vector<Index> blocks() const override { return z_.stacked_blocks(); }
  RMatrix kuu() const override;
  RMatrix kuf(const Inputs& x) const override;
  RVector kdiag(const Inputs& x) const override;

  int num_params() const override;
  std::vector<double> params() const override;
  void set_params(std::span<const double> raw) override;
  std::vector<double> backprop(const Inputs& x, const RMatrix& g_kuu, const RMatrix& g_kuf,
                               const RVector& g_kdiag) const override;
  std::unique_ptr<SparseModel> clone() const override { return std::make_unique<VffModel>(*this); }

 private:
  HMKParams kernel_;
  InducingFrequencies z_;
};

/// Stationary SM (or SE) kernel with inducing points. Layout: weights
/// (softplus), means (only when trained), variances (softplus), points.
class InducingPointModel : public SparseModel {
 public:
  InducingPointModel(SMParams kernel, Inputs z, bool train_means);

  const SMParams& kernel() const { return kernel_; }
  const Inputs& points() const { return z_; }

  Index num_inducing() const override { return z_.rows(); }
  std::vector<Index> blocks() const override { return {z_.rows()}; }
  RMatrix kuu() const override;
  RMatrix kuf(const Inputs& x) const override;
  RVector kdiag(const Inputs& x) const override;

  int num_params() const override;
  std::vector<double> params() const override;
  void set_params(std::span<const double> raw) override;
  std::vector<double> backprop(const Inputs& x, const RMatrix& g_kuu, const RMatrix& g_kuf,
                               const RVector& g_kdiag) const override;
  std::unique_ptr<SparseModel> clone() const override { return std::make_unique<InducingPointModel>(*this); }

 private:
  SMParams kernel_;
  Inputs z_;
  bool train_means_;
};

/// Factored prior over the inducing variables.
struct Prior {
  RMatrix k;       // raw covariance
  RMatrix k_tilde; // jittered covariance actually factored
  linalg::BlockCholesky<double> chol;

  Prior(const RMatrix& kuu, const std::vector<Index>& blocks);

  /// Maps an adjoint w.r.t. k_tilde to one w.r.t. k. Each block's jitter is a
  /// fixed multiple of its trace, so it contributes tr(G_b) * jitter_b /
  /// trace_b to every diagonal entry of the block.
  RMatrix chain_jitter(const RMatrix& g) const;
};

// ---------------------------------------------------------------------------
// Objectives

struct Likelihood {
  enum class Kind { kGaussian, kBernoulli };
  Kind kind = Kind::kGaussian;
  double noise_var = 1.0;
  int quadrature_nodes = 20;
};

/// Gaussian q(v) = N(mean, cov) over the stacked real inducing vector.
struct VariationalState {
  RVector mean;
  RMatrix cov;
};

struct CollapsedResult {
  double value = 0.0;
  double trace_term = 0.0;  // tr(K_ff - Q_ff) / (2 noise), non-negative
  RMatrix g_kuu, g_kuf;
  RVector g_kdiag;
  double g_noise = 0.0;
  VariationalState optimal;  // closed-form q(v)
};

/// Collapsed (Titsias) bound and, with `grads`, its adjoints.
CollapsedResult collapsed_terms(const Prior& prior, const RMatrix& kuf, const RVector& kdiag,
                                const RVector& y, double noise, bool grads);

double collapsed_bound(const HMKParams& kernel, const InducingFrequencies& z, const Inputs& x,
                       const RVector& y, double noise_var);

struct ElboResult {
  double value = 0.0;
  double expected_loglik = 0.0;  // already scaled by n_total / batch
  double kl = 0.0;
  RMatrix g_kuu, g_kuf;
  RVector g_kdiag;
  RVector g_mean;
  RMatrix g_cov;  // symmetric dF/dS
  double g_noise = 0.0;
};

/// Uncollapsed bound on a batch; `scale` = n_total / batch size.
ElboResult elbo_terms(const Prior& prior, const RMatrix& kuf, const RVector& kdiag, const RVector& y,
                      const Likelihood& lik, const VariationalState& q, double scale, bool grads);

/// Bernoulli targets in {-1, +1} or {0, 1} mapped to signs; throws InvalidTargets.
RVector probit_signs(const RVector& y);

/// Gauss-Hermite nodes and weights for weight exp(-x^2).
void gauss_hermite(int n, std::vector<double>& nodes, std::vector<double>& weights);

double log_normal_cdf(double z);
/// d log Phi(z) / dz.
double inverse_mills(double z);

// ---------------------------------------------------------------------------
// State, conditionals and prediction

struct SparseGPState {
  HMKParams kernel;
  InducingFrequencies inducing;
  VariationalState q;
  Likelihood lik;
};

/// q(v) equal to the (jittered) prior.
VariationalState prior_state(const SparseModel& model);

struct Marginals {
  RVector mean;
  RVector var;
};

/// Marginals of q(f); variances in [-1e-8 k(x,x), 0) are clamped to 0 and
/// anything lower throws NotPositiveDefinite.
Marginals conditional(const SparseModel& model, const Inputs& x, const VariationalState& q);
Marginals conditional(const Inputs& x, const SparseGPState& state);

struct Prediction {
  RVector mean;
  RVector var;   // including the noise variance for regression
  RVector prob;  // class-1 probability for classification, else empty
};

Prediction predict(const SparseModel& model, const VariationalState& q, const Likelihood& lik, const Inputs& x);
Prediction predict(const SparseGPState& state, const Inputs& x);

double elbo_stochastic(const SparseGPState& state, const Inputs& x, const RVector& y, std::size_t n_total);

// ---------------------------------------------------------------------------
// Serialization

nlohmann::json to_json(const HMKParams& p);
HMKParams hmk_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SMParams& p);
SMParams sm_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SparseGPState& s);
SparseGPState state_from_json(const nlohmann::json& j);

}  // namespace hmk::inference
