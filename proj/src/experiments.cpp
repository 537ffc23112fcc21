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

#include "hmk/experiments.hpp"

#include "hmk/parallel.hpp"
#include "hmk/spectral.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#ifndef HMK_VERSION
#define HMK_VERSION "unknown"
#endif

namespace hmk::experiments {

namespace fs = std::filesystem;
using inference::InducingFrequencies;
using inference::InducingPointModel;
using inference::Likelihood;
using inference::Prior;
using inference::SparseModel;
using inference::VariationalState;
using inference::VffModel;
using json = nlohmann::json;
using linalg::Index;
using linalg::RMatrix;
using linalg::RVector;
using optim::Inputs;

namespace {

// ---------------------------------------------------------------------------
// Config parsing

json adam_json(double lr) { return {{"lr", lr}, {"beta1", 0.9}, {"beta2", 0.999}, {"eps", 1e-8}}; }

optim::AdamConfig adam_from(const json& j) {
  optim::AdamConfig a{j.at("lr").get<double>(), j.at("beta1").get<double>(), j.at("beta2").get<double>(),
                      j.at("eps").get<double>()};
  try {
    a.validate();
  } catch (const InvalidParameters& e) {
    throw ConfigError(e.what());
  }
  return a;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

std::string resolve(const std::string& base, const std::string& p) {
  if (p.empty() || fs::path(p).is_absolute() || base.empty()) return p;
  return (fs::path(base) / p).lexically_normal().string();
}

DataSpec data_from(const json& j, const std::string& base) {
  DataSpec d;
  d.path = resolve(base, j.at("path").get<std::string>());
  require(!d.path.empty(), "data.path is required");
  require(fs::exists(d.path), "data file not found: " + d.path);
  d.schema.inputs = j.at("inputs").get<std::vector<std::string>>();
  d.schema.target = j.at("target").get<std::string>();
  const json& split = j.at("split");
  if (split.is_string()) {
    const std::string path = resolve(base, split.get<std::string>());
    std::ifstream f(path);
    require(static_cast<bool>(f), "split file not found: " + path);
    json sj;
    try {
      sj = json::parse(f);
    } catch (const json::exception& e) {
      throw data::ParseError("split file " + path + ": " + e.what(), 0);
    }
    d.split = data::split_from_json(sj);
  } else {
    d.split = data::split_from_json(split);
  }
  return d;
}

optim::HMKInitConfig hmk_init_from(const json& j) {
  optim::HMKInitConfig c;
  c.components = j.at("components").get<int>();
  c.freqs = j.at("freqs").get<int>();
  c.freq_noise = j.at("freq_noise").get<double>();
  c.max_freq = j.at("max_freq").get<double>();
  require(c.components >= 1 && c.freqs >= 1, "components and freqs must be at least 1");
  require(c.max_freq > 0.0 && c.freq_noise >= 0.0, "max_freq must be positive and freq_noise non-negative");
  return c;
}

void parse_sections(ExperimentConfig& cfg, const std::string& base) {
  const json& d = cfg.doc;
  const std::string& e = cfg.experiment;
  if (e == "recover") {
    auto& r = cfg.recover;
    r.target = d.at("target").get<std::string>();
    require(r.target == "ifbm" || r.target == "gsm" || r.target == "sm" || r.target == "self",
            "target must be one of ifbm, gsm, sm, self");
    r.grid_points = d.at("grid").at("points").get<int>();
    r.grid_lo = d.at("grid").value("lo", 0.0);
    r.grid_hi = d.at("grid").value("hi", 0.0);
    require(r.grid_points >= 2, "grid.points must be at least 2");
    r.hurst = d.at("hurst").get<double>();
    require(r.hurst > 0.0 && r.hurst < 1.0, "hurst must lie in (0, 1)");
    r.components = d.at("kernel").at("components").get<int>();
    r.freqs = d.at("kernel").at("freqs").get<int>();
    require(r.components >= 1 && r.freqs >= 1, "kernel.components and kernel.freqs must be at least 1");
    try {
      r.sm_target = inference::sm_from_json(d.at("sm_target"));
    } catch (const InvalidParameters& ex) {
      throw ConfigError(std::string("sm_target: ") + ex.what());
    }
    const json& o = d.at("optimizer");
    r.optimizer.iterations = o.at("iterations").get<int>();
    r.optimizer.batch = o.at("batch").get<int>();
    r.optimizer.restarts = o.at("restarts").get<int>();
    r.optimizer.trace_every = o.at("trace_every").get<int>();
    r.optimizer.adam = adam_from(o.at("adam"));
    r.optimizer.seed = cfg.seed;
    require(r.optimizer.iterations >= 0 && r.optimizer.batch >= 1 && r.optimizer.restarts >= 1 &&
                r.optimizer.trace_every >= 1,
            "optimizer: iterations >= 0, batch, restarts and trace_every >= 1");
  } else if (e == "classify") {
    auto& c = cfg.classify;
    c.data = data_from(d.at("data"), base);
    c.kernel = hmk_init_from(d.at("kernel"));
    c.inducing_per_component = d.at("inducing").at("per_component").get<std::vector<int>>();
    require(!c.inducing_per_component.empty(), "inducing.per_component must list at least one value");
    for (int m : c.inducing_per_component) require(m >= 1, "inducing.per_component entries must be at least 1");
    c.inducing_spread = d.at("inducing").at("spread").get<double>();
    c.amplitude_scale = d.at("amplitude_scale").get<double>();
    c.restarts = d.at("restarts").get<int>();
    c.quadrature_nodes = d.at("quadrature_nodes").get<int>();
    require(c.restarts >= 1 && c.quadrature_nodes >= 2 && c.amplitude_scale > 0.0,
            "restarts >= 1, quadrature_nodes >= 2, amplitude_scale > 0");
    const json& o = d.at("optimizer");
    c.train.adam = adam_from(o.at("adam"));
    c.train.natgrad_gamma = o.at("natgrad_gamma").get<double>();
    c.train.schedule.natgrad_warmup_iters = o.at("warmup").get<int>();
    c.train.schedule.alternating_rounds = o.at("rounds").get<int>();
    c.train.schedule.batch = o.at("batch").get<int>();
    require(c.train.natgrad_gamma > 0.0 && c.train.schedule.natgrad_warmup_iters >= 0 &&
                c.train.schedule.alternating_rounds >= 0 && c.train.schedule.batch >= 1,
            "optimizer: natgrad_gamma > 0, warmup and rounds >= 0, batch >= 1");
    c.grid_resolution = d.at("grid").at("resolution").get<int>();
    c.grid_pad = d.at("grid").at("pad").get<double>();
    require(c.grid_resolution >= 2, "grid.resolution must be at least 2");
  } else if (e == "regress") {
    auto& r = cfg.regress;
    r.data = data_from(d.at("data"), base);
    r.hmk = hmk_init_from(d.at("hmk"));
    r.hmk_inducing_per_component = d.at("hmk").at("inducing_per_component").get<int>();
    r.hmk_inducing_spread = d.at("hmk").at("spread").get<double>();
    r.sm_components = d.at("sm").at("components").get<int>();
    r.sm_inducing = d.at("sm").at("inducing").get<int>();
    r.max_freq = d.at("sm").at("max_freq").get<double>();
    r.se_inducing = d.at("se").at("inducing").get<int>();
    r.restarts = d.at("restarts").get<int>();
    r.init_noise = d.at("init_noise").get<double>();
    require(r.hmk_inducing_per_component >= 1 && r.sm_components >= 1 && r.sm_inducing >= 1 && r.se_inducing >= 1,
            "inducing counts and components must be at least 1");
    require(r.restarts >= 1 && r.init_noise > 0.0 && r.max_freq > 0.0, "restarts >= 1, init_noise > 0, max_freq > 0");
    const json& o = d.at("optimizer");
    r.optimizer.adam = adam_from(o.at("adam"));
    r.optimizer.iterations = o.at("iterations").get<int>();
    r.optimizer.train_noise = o.at("train_noise").get<bool>();
    r.optimizer.min_noise = o.at("min_noise").get<double>();
    require(r.optimizer.iterations >= 0 && r.optimizer.min_noise >= 0.0 && r.init_noise > r.optimizer.min_noise,
            "optimizer: iterations >= 0 and init_noise above min_noise");
    r.grid_points = d.at("grid").at("points").get<int>();
    require(r.grid_points >= 2, "grid.points must be at least 2");
  } else if (e == "dump-spectral") {
    auto& s = cfg.dump;
    s.kernel = d.at("kernel").get<std::string>();
    require(s.kernel == "se" || s.kernel == "lsg" || s.kernel == "hmk" || s.kernel == "checkpoint",
            "kernel must be one of se, lsg, hmk, checkpoint");
    s.checkpoint = resolve(base, d.at("checkpoint").get<std::string>());
    if (s.kernel == "checkpoint") require(fs::exists(s.checkpoint), "checkpoint not found: " + s.checkpoint);
    s.resolution = d.at("resolution").get<int>();
    require(s.resolution >= 2, "resolution must be at least 2");
    s.x_lo = d.at("x_range").at(0).get<double>();
    s.x_hi = d.at("x_range").at(1).get<double>();
    s.freq_lo = d.at("freq_range").at(0).get<double>();
    s.freq_hi = d.at("freq_range").at(1).get<double>();
    require(s.x_lo < s.x_hi && s.freq_lo < s.freq_hi, "ranges must be increasing");
    s.components = d.at("components").get<int>();
    s.freqs = d.at("freqs").get<int>();
    require(s.components >= 1 && s.freqs >= 1, "components and freqs must be at least 1");
    s.lengthscale = d.at("se").at("lengthscale").get<double>();
    s.variance = d.at("se").at("variance").get<double>();
    require(s.lengthscale > 0.0 && s.variance > 0.0, "se lengthscale and variance must be positive");
    s.lsg.sigma1 = {d.at("lsg").at("sigma1").get<double>()};
    s.lsg.lambda2 = d.at("lsg").at("lambda2").get<double>();
    try {
      validate(s.lsg);
    } catch (const InvalidParameters& ex) {
      throw ConfigError(std::string("lsg: ") + ex.what());
    }
  } else if (e == "gradcheck") {
    auto& g = cfg.gradcheck;
    g.points = d.at("points").get<int>();
    g.h_fd = d.at("h_fd").get<double>();
    g.n = d.at("n").get<int>();
    g.components = d.at("components").get<int>();
    g.freqs = d.at("freqs").get<int>();
    g.inducing_per_component = d.at("inducing_per_component").get<int>();
    require(g.points >= 1 && g.h_fd > 0.0 && g.n >= 2 && g.components >= 1 && g.freqs >= 1 &&
                g.inducing_per_component >= 1,
            "gradcheck settings must be positive");
  }
}

// ---------------------------------------------------------------------------
// Shared helpers

std::string path_in(const ExperimentConfig& cfg, const std::string& name) {
  return (fs::path(cfg.output_dir) / name).string();
}

void write_json(const std::string& path, const json& j) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << j.dump(2) << '\n';
}

RVector linspace(double lo, double hi, int n) { return RVector::LinSpaced(n, lo, hi); }

void require_finite(double v, const std::string& what) {
  if (!std::isfinite(v)) throw NumericalFailure(what + " is not finite");
}

void require_finite(const optim::Trace& t, const std::string& what) {
  for (const auto& r : t) require_finite(r.objective, what + " trace");
}

double accuracy(const RVector& prob, const RVector& signs) {
  Index ok = 0;
  for (Index i = 0; i < prob.size(); ++i) ok += (prob(i) > 0.5) == (signs(i) > 0.0);
  return static_cast<double>(ok) / static_cast<double>(prob.size());
}

/// Random real-valued HMK with positive definite envelopes.
HMKParams random_kernel(Rng& rng, int dim, int p, int q) {
  HMKParams h;
  h.real_valued = true;
  for (int k = 0; k < p; ++k) {
    HMKComponent c;
    c.lambda2 = rng.uniform(0.08, 0.4);
    for (int d = 0; d < dim; ++d) {
      c.center.push_back(rng.uniform(-0.5, 0.5));
      c.gamma.push_back(rng.uniform(0.6, 1.4));
      c.sigma1.push_back(4.0 * c.lambda2 * rng.uniform(0.15, 1.0));
    }
    for (int j = 0; j < q * dim; ++j) c.mu.push_back(rng.uniform(-2.0, 2.0));
    c.b_chol.assign(static_cast<std::size_t>(q * q), Cx<double>(0.0, 0.0));
    for (int i = 0; i < q; ++i) {
      for (int j = 0; j <= i; ++j) {
        c.b_chol[static_cast<std::size_t>(i * q + j)] =
            i == j ? Cx<double>(rng.uniform(0.3, 1.0), 0.0) : Cx<double>(0.4 * rng.normal(), 0.4 * rng.normal());
      }
    }
    h.components.push_back(std::move(c));
  }
  return h;
}

// ---------------------------------------------------------------------------
// recover

std::pair<double, double> recovery_range(const RecoverSpec& r) {
  if (r.grid_lo != r.grid_hi) return {r.grid_lo, r.grid_hi};
  if (r.target == "ifbm") return {0.1, 1.1};
  return {-1.0, 1.0};
}

}  // namespace

json run_recover(const ExperimentConfig& cfg) {
  const auto& r = cfg.recover;
  const auto [lo, hi] = recovery_range(r);
  const int n = r.grid_points;
  Inputs grid(n, 1);
  for (int i = 0; i < n; ++i) {
    // the IFBM grid is left-open: (lo, hi]
    grid(i, 0) = r.target == "ifbm" ? lo + (hi - lo) * (i + 1) / n : lo + (hi - lo) * i / (n - 1);
  }

  Rng rng(cfg.seed);
  HMKParams truth;
  if (r.target == "self") truth = random_kernel(rng, 1, r.components, r.freqs);
  const GSMFunctions gsm;
  optim::TargetKernel target;
  if (r.target == "ifbm") {
    target = [h = r.hurst](std::span<const double> a, std::span<const double> b) { return eval_ifbm_target(a[0], b[0], h); };
  } else if (r.target == "gsm") {
    target = [&gsm](std::span<const double> a, std::span<const double> b) { return eval_gsm_target(a[0], b[0], gsm); };
  } else if (r.target == "sm") {
    target = [&r](std::span<const double> a, std::span<const double> b) {
      const double tau = a[0] - b[0];
      return eval_sm(std::span<const double>(&tau, 1), r.sm_target);
    };
  } else {
    target = [&truth](std::span<const double> a, std::span<const double> b) { return eval_hmk(a, b, truth).real(); };
  }
  RMatrix t(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) t(i, j) = target(par::row(grid, i), par::row(grid, j));
  }
  const HMKParams init = r.target == "self" ? truth : optim::random_recovery_init(grid, t, r.components, r.freqs, rng);
  const auto res = optim::recover_kernel(target, init, grid, r.optimizer);
  require_finite(res.mse, "recovery MSE");

  const RMatrix k = par::gram_real(res.params, grid);
  RMatrix rows(static_cast<Index>(n) * n, 4);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) rows.row(static_cast<Index>(i) * n + j) << grid(i, 0), grid(j, 0), t(i, j), k(i, j);
  }
  data::write_csv(path_in(cfg, "kernel_grid.csv"), {"x", "x2", "target", "recovered"}, rows);
  write_json(path_in(cfg, "recovered_params.json"), inference::to_json(res.params));
  write_trace(path_in(cfg, "trace.csv"), res.trace);

  json out = {{"experiment", "recover"},
              {"target", r.target},
              {"grid", {{"points", n}, {"lo", lo}, {"hi", hi}}},
              {"components", r.components},
              {"freqs", r.freqs},
              {"iterations", r.optimizer.iterations},
              {"restarts", r.optimizer.restarts},
              {"mse", res.mse},
              {"restart_mse", res.restart_mse}};
  // reference values are the published recovery errors; gates are looser
  if (r.target == "ifbm") {
    out["reference_mse"] = 0.0008;
    out["gate_mse"] = 5e-3;
  } else if (r.target == "gsm") {
    out["reference_mse"] = 0.0033;
    out["gate_mse"] = 1e-2;
  } else if (r.target == "self") {
    out["gate_mse"] = 1e-12;
  }
  if (out.contains("gate_mse")) out["pass"] = res.mse <= out["gate_mse"].get<double>();
  return out;
}

// ---------------------------------------------------------------------------
// classify

json run_classify(const ExperimentConfig& cfg) {
  const auto& c = cfg.classify;
  const auto ds = data::load_csv_dataset(c.data.path, c.data.schema, c.data.split);
  const Inputs xtr = ds.x_stats.apply(ds.x_rows(ds.train));
  const RVector ytr = inference::probit_signs(ds.y_rows(ds.train));
  const Inputs xte = ds.test.empty() ? Inputs() : Inputs(ds.x_stats.apply(ds.x_rows(ds.test)));
  const RVector yte = ds.test.empty() ? RVector() : inference::probit_signs(ds.y_rows(ds.test));
  const int dim = static_cast<int>(xtr.cols());

  // boundary grid over the padded raw input range (two-dimensional inputs)
  Inputs grid_raw;
  if (dim == 2) {
    const int g = c.grid_resolution;
    grid_raw.resize(static_cast<Index>(g) * g, 2);
    RVector ax[2];
    for (int d = 0; d < 2; ++d) {
      const double lo = ds.x.col(d).minCoeff(), hi = ds.x.col(d).maxCoeff();
      const double pad = c.grid_pad * (hi - lo);
      ax[d] = linspace(lo - pad, hi + pad, g);
    }
    for (int i = 0; i < g; ++i) {
      for (int j = 0; j < g; ++j) grid_raw.row(static_cast<Index>(i) * g + j) << ax[0](i), ax[1](j);
    }
  }

  Rng rng(cfg.seed);
  json runs = json::array();
  for (int mp : c.inducing_per_component) {
    struct Best {
      inference::SparseGPState state;
      optim::Trace trace;
      double acc = -1.0;
    } best;
    std::vector<double> restart_acc;
    for (int r = 0; r < c.restarts; ++r) {
      Rng stream = rng.split();
      HMKParams k = optim::init_hmk(xtr, ytr, c.kernel, stream);
      for (auto& comp : k.components) {
        for (auto& e : comp.b_chol) e = Cx<double>(c.amplitude_scale * e.re, c.amplitude_scale * e.im);
      }
      inference::SparseGPState s{k, optim::init_inducing(k, mp, c.inducing_spread, stream), {},
                                 {Likelihood::Kind::kBernoulli, 1.0, c.quadrature_nodes}};
      s.q = inference::prior_state(VffModel(s.kernel, s.inducing));
      optim::TrainConfig tc = c.train;
      tc.seed = stream.next_u64();
      auto trace = optim::train_alternating(s, xtr, ytr, tc);
      require_finite(trace, "ELBO");
      const double acc = accuracy(inference::predict(s, xtr).prob, ytr);
      restart_acc.push_back(acc);
      if (acc > best.acc) best = {std::move(s), std::move(trace), acc};
    }

    const std::string dir = "mp_" + std::to_string(mp);
    fs::create_directories(path_in(cfg, dir));
    write_trace(path_in(cfg, dir + "/trace.csv"), best.trace);
    write_json(path_in(cfg, dir + "/state.json"), inference::to_json(best.state));

    json run = {{"inducing_per_component", mp},
                {"train_accuracy", best.acc},
                {"restart_train_accuracy", restart_acc},
                {"elbo_initial", best.trace.front().objective},
                {"elbo_final", best.trace.back().objective}};
    if (xte.rows() > 0) run["test_accuracy"] = accuracy(inference::predict(best.state, xte).prob, yte);
    if (dim == 2) {
      const RVector prob = inference::predict(best.state, ds.x_stats.apply(grid_raw)).prob;
      RMatrix rows(grid_raw.rows(), 3);
      rows << grid_raw, prob;
      data::write_csv(path_in(cfg, dir + "/boundary.csv"), {"x1", "x2", "prob"}, rows);
      run["grid_prob_min"] = prob.minCoeff();
      run["grid_prob_max"] = prob.maxCoeff();
    }
    runs.push_back(std::move(run));
  }
  return {{"experiment", "classify"},
          {"n_train", ds.train.size()},
          {"n_test", ds.test.size()},
          {"components", c.kernel.components},
          {"freqs", c.kernel.freqs},
          {"runs", runs}};
}

// ---------------------------------------------------------------------------
// regress

namespace {

struct Fitted {
  std::unique_ptr<SparseModel> model;
  double noise = 0.0;
  optim::Trace trace;
};

}  // namespace

json run_regress(const ExperimentConfig& cfg) {
  const auto& r = cfg.regress;
  const auto ds = data::load_csv_dataset(r.data.path, r.data.schema, r.data.split);
  if (ds.test.empty()) throw data::SchemaMismatch("regression needs a non-empty test split");
  const Inputs xtr = ds.x_stats.apply(ds.x_rows(ds.train));
  const Inputs xte = ds.x_stats.apply(ds.x_rows(ds.test));
  const RVector ytr_raw = ds.y_rows(ds.train), yte_raw = ds.y_rows(ds.test);
  const auto y_stats = data::Standardizer::fit(ytr_raw);
  const RVector ytr = y_stats.apply(ytr_raw);
  const double ym = y_stats.mean(0), ys = y_stats.scale(0);

  Inputs grid_raw(r.grid_points, ds.x.cols());
  for (Index d = 0; d < ds.x.cols(); ++d) grid_raw.col(d) = linspace(ds.x.col(d).minCoeff(), ds.x.col(d).maxCoeff(), r.grid_points);
  const Inputs grid = ds.x_stats.apply(grid_raw);

  Rng rng(cfg.seed);
  auto make = [&](const std::string& name, Rng& s) -> std::unique_ptr<SparseModel> {
    if (name == "hmk") {
      HMKParams k = optim::init_hmk(xtr, ytr, r.hmk, s);
      auto z = optim::init_inducing(k, r.hmk_inducing_per_component, r.hmk_inducing_spread, s);
      return std::make_unique<VffModel>(std::move(k), std::move(z));
    }
    const bool se = name == "se";
    SMParams k = optim::init_sm(xtr, ytr, se ? 1 : r.sm_components, r.max_freq, s);
    if (se) std::fill(k.means.begin(), k.means.end(), 0.0);
    Inputs z = optim::kmeans(xtr, std::min<int>(se ? r.se_inducing : r.sm_inducing, static_cast<int>(xtr.rows())), s);
    return std::make_unique<InducingPointModel>(std::move(k), std::move(z), !se);
  };

  json models = json::object();
  for (const std::string name : {"se", "sm", "hmk"}) {
    Fitted best;
    std::vector<double> restart_bounds;
    for (int k = 0; k < r.restarts; ++k) {
      Rng stream = rng.split();
      Fitted f{make(name, stream), r.init_noise, {}};
      f.trace = optim::train_collapsed(*f.model, f.noise, xtr, ytr, r.optimizer);
      require_finite(f.trace, name + " bound");
      restart_bounds.push_back(f.trace.back().objective);
      if (!best.model || f.trace.back().objective > best.trace.back().objective) best = std::move(f);
    }
    const SparseModel& m = *best.model;
    const Prior prior(m.kuu(), m.blocks());
    const auto col = inference::collapsed_terms(prior, m.kuf(xtr), m.kdiag(xtr), ytr, best.noise, false);
    const Likelihood lik{Likelihood::Kind::kGaussian, best.noise, 20};

    const auto ptr = inference::predict(m, col.optimal, lik, xtr);
    const auto pte = inference::predict(m, col.optimal, lik, xte);
    const auto pg = inference::predict(m, col.optimal, lik, grid);
    const RVector mtr = ptr.mean * ys + RVector::Constant(ptr.mean.size(), ym);
    const RVector mte = pte.mean * ys + RVector::Constant(pte.mean.size(), ym);
    double covered = 0.0, loglik = 0.0;
    for (Index i = 0; i < mtr.size(); ++i) covered += std::abs(ytr_raw(i) - mtr(i)) <= 1.96 * std::sqrt(ptr.var(i)) * ys;
    for (Index i = 0; i < mte.size(); ++i) {
      const double v = pte.var(i) * ys * ys;
      const double e = yte_raw(i) - mte(i);
      loglik += -0.5 * (std::log(2.0 * kPi * v) + e * e / v);
    }
    for (Index i = 0; i < pg.var.size(); ++i) require_finite(pg.var(i), name + " predictive variance");

    RMatrix rows(grid_raw.rows(), grid_raw.cols() + 3);
    const RVector half = 1.96 * pg.var.cwiseSqrt() * ys;
    const RVector mean = pg.mean * ys + RVector::Constant(pg.mean.size(), ym);
    rows << grid_raw, mean, mean - half, mean + half;
    std::vector<std::string> header = r.data.schema.inputs;
    header.insert(header.end(), {"mean", "lower", "upper"});
    data::write_csv(path_in(cfg, "predictions_" + name + ".csv"), header, rows);
    write_trace(path_in(cfg, "trace_" + name + ".csv"), best.trace);
    if (const auto* v = dynamic_cast<const VffModel*>(&m)) {
      const inference::SparseGPState st{v->kernel(), v->inducing(), col.optimal, lik};
      write_json(path_in(cfg, "state_" + name + ".json"), inference::to_json(st));
    } else if (const auto* ip = dynamic_cast<const InducingPointModel*>(&m)) {
      std::vector<double> z(ip->points().data(), ip->points().data() + ip->points().size());
      write_json(path_in(cfg, "params_" + name + ".json"),
                 {{"kernel", inference::to_json(ip->kernel())}, {"inducing_points", z}, {"noise_var", best.noise}});
    }

    models[name] = {{"train_rmse", std::sqrt((mtr - ytr_raw).squaredNorm() / static_cast<double>(mtr.size()))},
                    {"test_rmse", std::sqrt((mte - yte_raw).squaredNorm() / static_cast<double>(mte.size()))},
                    {"test_loglik", loglik / static_cast<double>(mte.size())},
                    {"train_coverage_95", covered / static_cast<double>(mtr.size())},
                    {"bound_initial", best.trace.front().objective},
                    {"bound_final", best.trace.back().objective},
                    {"restart_bounds", restart_bounds},
                    {"noise_var", best.noise * ys * ys},
                    {"num_inducing", m.num_inducing()}};
  }
  return {{"experiment", "regress"},
          {"n_train", ds.train.size()},
          {"n_test", ds.test.size()},
          {"models", models},
          {"hmk_test_rmse_le_sm", models["hmk"]["test_rmse"].get<double>() <= models["sm"]["test_rmse"].get<double>()}};
}

// ---------------------------------------------------------------------------
// dump-spectral

namespace {

/// Single stationary-envelope component equal to v exp(-tau^2 / (2 l^2)).
HMKParams se_as_hmk(double lengthscale, double variance) {
  HMKComponent c;
  c.center = {0.0};
  c.gamma = {1.0};
  c.sigma1 = {0.0};
  c.lambda2 = 1.0 / (4.0 * kPi * kPi * lengthscale * lengthscale);
  c.mu = {0.0};
  c.b_chol = {Cx<double>(std::sqrt(variance), 0.0)};
  return {{c}, true};
}

HMKParams lsg_as_hmk(const LSGParams& p) {
  HMKComponent c;
  c.center = {0.0};
  c.gamma = {1.0};
  c.sigma1 = p.sigma1;
  c.lambda2 = p.lambda2;
  c.mu = {0.0};
  c.b_chol = {Cx<double>(1.0, 0.0)};
  return {{c}, true};
}

}  // namespace

json run_dump_spectral(const ExperimentConfig& cfg) {
  const auto& s = cfg.dump;
  HMKParams kernel;
  std::optional<InducingFrequencies> inducing;
  if (s.kernel == "se") {
    kernel = se_as_hmk(s.lengthscale, s.variance);
  } else if (s.kernel == "lsg") {
    kernel = lsg_as_hmk(s.lsg);
  } else if (s.kernel == "hmk") {
    Rng rng(cfg.seed);
    kernel = random_kernel(rng, 1, s.components, s.freqs);
  } else {
    std::ifstream f(s.checkpoint);
    json j;
    try {
      j = json::parse(f);
    } catch (const json::exception& e) {
      throw data::ParseError("checkpoint " + s.checkpoint + ": " + e.what(), 0);
    }
    if (j.contains("format")) {
      auto st = inference::state_from_json(j);
      kernel = std::move(st.kernel);
      inducing = std::move(st.inducing);
    } else {
      kernel = inference::hmk_from_json(j);
    }
  }
  if (kernel.dim() != 1) throw ConfigError("dump-spectral supports one-dimensional kernels only");

  const int g = s.resolution;
  const RVector xs = linspace(s.x_lo, s.x_hi, g);
  const RVector ws = linspace(s.freq_lo, s.freq_hi, g);
  const Inputs xin = xs, win = ws;
  const Index gg = static_cast<Index>(g) * g;

  const linalg::CMatrix k = par::gram(kernel, xin, xin);
  RMatrix rows(gg, 4);
  for (int i = 0; i < g; ++i) {
    for (int j = 0; j < g; ++j) rows.row(static_cast<Index>(i) * g + j) << xs(i), xs(j), k(i, j).real(), k(i, j).imag();
  }
  data::write_csv(path_in(cfg, "kernel.csv"), {"x", "x2", "k_re", "k_im"}, rows);

  const RMatrix w = par::wdf_grid(kernel, xin, win);
  rows.resize(gg, 3);
  for (int i = 0; i < g; ++i) {
    for (int j = 0; j < g; ++j) rows.row(static_cast<Index>(i) * g + j) << xs(i), ws(j), w(i, j);
  }
  data::write_csv(path_in(cfg, "wdf.csv"), {"x", "omega", "wdf"}, rows);

  json out = {{"experiment", "dump-spectral"}, {"kernel", s.kernel}, {"resolution", g}, {"kernel_params", inference::to_json(kernel)}};

  // Stationary kernels have a spectral measure on the diagonal only; the
  // dump then holds the one-dimensional spectral density instead.
  bool stationary = true;
  for (const auto& c : kernel.components) stationary = stationary && c.sigma1[0] == 0.0;
  if (stationary) {
    rows.resize(g, 2);
    for (int j = 0; j < g; ++j) {
      const double om = ws(j);
      rows.row(j) << om, spectral::wdf_hmk(std::span<const double>(&s.x_lo, 1), std::span<const double>(&om, 1), kernel);
    }
    data::write_csv(path_in(cfg, "sd.csv"), {"omega", "sd"}, rows);
    double var = 0.0;
    for (Index j = 0; j < g; ++j) var = std::max(var, (w.col(j).array() - w(0, j)).abs().maxCoeff());
    out["wdf_max_variation_along_x"] = var;
  } else {
    const linalg::CMatrix sg = par::gsd_grid(kernel, win, win);
    rows.resize(gg, 4);
    double asym = 0.0;
    for (int i = 0; i < g; ++i) {
      for (int j = 0; j < g; ++j) {
        rows.row(static_cast<Index>(i) * g + j) << ws(i), ws(j), sg(i, j).real(), sg(i, j).imag();
        asym = std::max(asym, std::abs(sg(i, j) - std::conj(sg(j, i))));
      }
    }
    data::write_csv(path_in(cfg, "gsd.csv"), {"omega", "xi", "gsd_re", "gsd_im"}, rows);
    out["gsd_max_hermitian_residual"] = asym;
  }

  if (s.kernel == "lsg") {
    double diff = 0.0;
    for (int i = 0; i < g; ++i) {
      for (int j = 0; j < g; ++j) {
        const double a = xs(i), b = xs(j), om = ws(i), xi = ws(j);
        const auto sa = std::span<const double>(&a, 1), sb = std::span<const double>(&b, 1);
        const auto so = std::span<const double>(&om, 1), sx = std::span<const double>(&xi, 1);
        diff = std::max(diff, std::abs(k(i, j).real() - eval_lsg(sa, sb, s.lsg)));
        diff = std::max(diff, std::abs(w(i, j) - spectral::wdf_lsg(sa, sx, s.lsg)));
        diff = std::max(diff, std::abs(spectral::gsd_hmk(so, sx, kernel) - spectral::gsd_lsg(so, sx, s.lsg)));
      }
    }
    out["lsg_closed_form_max_abs_diff"] = diff;
  }

  if (inducing) {
    RMatrix z(inducing->total(), 2);
    Index row = 0;
    for (int p = 0; p < inducing->num_components(); ++p) {
      for (int j = 0; j < inducing->count(p); ++j) z.row(row++) << p, inducing->at(p, j)[0];
    }
    data::write_csv(path_in(cfg, "inducing.csv"), {"component", "omega"}, z);
    out["num_inducing_frequencies"] = inducing->total();
  }
  return out;
}

// ---------------------------------------------------------------------------
// gradcheck

namespace {

struct GcProblem {
  HMKParams kernel;
  InducingFrequencies z;
  Inputs x;
  RVector y;
};

bool well_conditioned(const RMatrix& k) {
  const auto ev = Eigen::SelfAdjointEigenSolver<RMatrix>(k).eigenvalues();
  return ev.minCoeff() > 1e-5 * ev.maxCoeff();
}

/// Random problem whose feature prior is well conditioned: adjoints through
/// K_uu^{-1} lose about cond(K_uu) * eps absolute accuracy.
GcProblem gc_problem(Rng& rng, const GradcheckSpec& g) {
  for (;;) {
    GcProblem pr;
    pr.kernel = random_kernel(rng, 1, g.components, g.freqs);
    pr.z.dim = 1;
    for (const auto& c : pr.kernel.components) {
      std::vector<double> f;
      for (int j = 0; j < g.inducing_per_component; ++j) f.push_back(c.mu[static_cast<std::size_t>(j % g.freqs)] + rng.uniform(-0.6, 0.6));
      pr.z.freqs.push_back(std::move(f));
    }
    pr.x.resize(g.n, 1);
    for (Index i = 0; i < g.n; ++i) pr.x(i, 0) = rng.uniform(-1.0, 1.0);
    const RMatrix k = par::gram_real(pr.kernel, pr.x) + 0.2 * RMatrix::Identity(g.n, g.n);
    const Eigen::LLT<RMatrix> llt(k);
    RVector e(g.n);
    for (Index i = 0; i < g.n; ++i) e(i) = rng.normal();
    pr.y = llt.matrixL() * e;
    if (well_conditioned(VffModel(pr.kernel, pr.z).kuu())) return pr;
  }
}

std::vector<double> lower_entries(const RMatrix& a) {
  std::vector<double> out;
  for (Index i = 0; i < a.rows(); ++i) {
    for (Index j = 0; j <= i; ++j) out.push_back(a(i, j));
  }
  return out;
}

RMatrix from_lower(std::span<const double> v, Index m) {
  RMatrix l = RMatrix::Zero(m, m);
  std::size_t t = 0;
  for (Index i = 0; i < m; ++i) {
    for (Index j = 0; j <= i; ++j) l(i, j) = v[t++];
  }
  return l;
}

using Objective = std::function<double(std::span<const double>, std::vector<double>*)>;

/// Collapsed bound over model parameters followed by the raw noise.
Objective collapsed_objective(const SparseModel& proto, const Inputs& x, const RVector& y) {
  return [&proto, &x, &y](std::span<const double> th, std::vector<double>* grad) {
    auto m = proto.clone();
    const auto np = static_cast<std::size_t>(m->num_params());
    m->set_params(th.first(np));
    const double noise = inference::softplus(th[np]);
    const Prior prior(m->kuu(), m->blocks());
    const auto r = inference::collapsed_terms(prior, m->kuf(x), m->kdiag(x), y, noise, grad != nullptr);
    if (grad) {
      *grad = m->backprop(x, r.g_kuu, r.g_kuf, r.g_kdiag);
      grad->push_back(r.g_noise * inference::sigmoid(th[np]));
    }
    return r.value;
  };
}

/// ELBO over (m, lower(L), model parameters, raw noise) with S = L L^T.
Objective elbo_objective(const SparseModel& proto, const Inputs& x, const RVector& y, Likelihood::Kind kind) {
  return [&proto, &x, &y, kind](std::span<const double> th, std::vector<double>* grad) {
    auto m = proto.clone();
    const Index mm = m->num_inducing();
    const auto nl = static_cast<std::size_t>(mm * (mm + 1) / 2);
    const auto np = static_cast<std::size_t>(m->num_params());
    VariationalState q;
    q.mean = Eigen::Map<const RVector>(th.data(), mm);
    const RMatrix l = from_lower(th.subspan(static_cast<std::size_t>(mm), nl), mm);
    q.cov = l * l.transpose();
    m->set_params(th.subspan(static_cast<std::size_t>(mm) + nl, np));
    const bool gaussian = kind == Likelihood::Kind::kGaussian;
    const double raw_noise = gaussian ? th[static_cast<std::size_t>(mm) + nl + np] : 0.0;
    const Likelihood lik{kind, gaussian ? inference::softplus(raw_noise) : 1.0, 20};
    const Prior prior(m->kuu(), m->blocks());
    const auto r = inference::elbo_terms(prior, m->kuf(x), m->kdiag(x), y, lik, q, 1.0, grad != nullptr);
    if (grad) {
      grad->assign(r.g_mean.data(), r.g_mean.data() + mm);
      const auto gl = lower_entries(2.0 * r.g_cov * l);
      grad->insert(grad->end(), gl.begin(), gl.end());
      const auto gp = m->backprop(x, r.g_kuu, r.g_kuf, r.g_kdiag);
      grad->insert(grad->end(), gp.begin(), gp.end());
      if (gaussian) grad->push_back(r.g_noise * inference::sigmoid(raw_noise));
    }
    return r.value;
  };
}

json check_objective(const Objective& f, const std::vector<double>& theta, double h_fd) {
  std::vector<double> g;
  f(theta, &g);
  const auto rep = optim::gradcheck([&f](std::span<const double> t) { return f(t, nullptr); }, theta, g, h_fd);
  return {{"params", theta.size()}, {"max_rel_error", rep.max_rel_error}, {"pass", rep.pass}};
}

}  // namespace

json run_gradcheck(const ExperimentConfig& cfg) {
  const auto& g = cfg.gradcheck;
  Rng rng(cfg.seed);
  json objectives = json::object();
  auto record = [&](const std::string& name, json point) {
    auto& o = objectives[name];
    if (o.is_null()) o = {{"points", json::array()}, {"max_rel_error", 0.0}, {"pass", true}};
    o["max_rel_error"] = std::max(o["max_rel_error"].get<double>(), point["max_rel_error"].get<double>());
    o["pass"] = o["pass"].get<bool>() && point["pass"].get<bool>();
    o["points"].push_back(std::move(point));
  };

  for (int p = 0; p < g.points; ++p) {
    const auto pr = gc_problem(rng, g);
    const VffModel vff(pr.kernel, pr.z);
    std::vector<double> theta = vff.params();
    theta.push_back(inference::softplus_inv(rng.uniform(0.1, 0.5)));
    record("collapsed_vff", check_objective(collapsed_objective(vff, pr.x, pr.y), theta, g.h_fd));

    SMParams sm;
    for (int q = 0; q < g.components; ++q) {
      sm.weights.push_back(rng.uniform(0.2, 1.5));
      sm.means.push_back(rng.uniform(0.0, 2.0));
      sm.variances.push_back(rng.uniform(0.05, 0.5));
    }
    Inputs zp(g.components * g.inducing_per_component, 1);
    for (Index i = 0; i < zp.rows(); ++i) zp(i, 0) = rng.uniform(-1.0, 1.0);
    const InducingPointModel ipm(sm, zp, true);
    theta = ipm.params();
    theta.push_back(inference::softplus_inv(rng.uniform(0.1, 0.5)));
    record("collapsed_inducing_points", check_objective(collapsed_objective(ipm, pr.x, pr.y), theta, g.h_fd));

    for (auto kind : {Likelihood::Kind::kGaussian, Likelihood::Kind::kBernoulli}) {
      const bool gaussian = kind == Likelihood::Kind::kGaussian;
      const RVector y = gaussian ? pr.y : inference::probit_signs(pr.y.unaryExpr([](double v) { return v > 0.0 ? 1.0 : -1.0; }));
      const Index m = vff.num_inducing();
      theta.clear();
      for (Index i = 0; i < m; ++i) theta.push_back(0.3 * rng.normal());
      RMatrix l = RMatrix::Zero(m, m);
      for (Index i = 0; i < m; ++i) {
        for (Index j = 0; j < i; ++j) l(i, j) = 0.1 * rng.normal();
        l(i, i) = rng.uniform(0.3, 0.8);
      }
      const auto le = lower_entries(l);
      theta.insert(theta.end(), le.begin(), le.end());
      const auto kp = vff.params();
      theta.insert(theta.end(), kp.begin(), kp.end());
      if (gaussian) theta.push_back(inference::softplus_inv(rng.uniform(0.1, 0.5)));
      record(gaussian ? "elbo_gaussian" : "elbo_bernoulli", check_objective(elbo_objective(vff, pr.x, y, kind), theta, g.h_fd));
    }

    const int ng = 12;
    Inputs grid(ng, 1);
    for (int i = 0; i < ng; ++i) grid(i, 0) = -1.0 + 2.0 * i / (ng - 1);
    const HMKParams truth = random_kernel(rng, 1, g.components, g.freqs);
    const RMatrix t = par::gram_real(truth, grid);
    const HMKParams start = optim::random_recovery_init(grid, t, g.components, g.freqs, rng);
    const Objective rec = [&](std::span<const double> th, std::vector<double>* grad) {
      const HMKParams k = optim::recovery_from_raw(start, th);
      std::vector<double> gg;
      const double v = optim::recovery_objective(k, grid, t, gg);
      if (grad) *grad = std::move(gg);
      return v;
    };
    record("recovery_mse", check_objective(rec, optim::recovery_raw(start), g.h_fd));
  }

  bool pass = true;
  for (const auto& [name, o] : objectives.items()) pass = pass && o["pass"].get<bool>();
  return {{"experiment", "gradcheck"}, {"points", g.points}, {"h_fd", g.h_fd}, {"objectives", objectives}, {"pass", pass}};
}

// ---------------------------------------------------------------------------
// Config, manifest, dispatch

json default_config(const std::string& e) {
  json d = {{"experiment", e}, {"seed", 0}, {"output_dir", "out/" + e}};
  const json data_stub = {{"path", ""}, {"inputs", json::array()}, {"target", ""}, {"split", json::object()}};
  if (e == "recover") {
    d.update({{"target", "ifbm"},
              {"grid", {{"points", 60}}},
              {"hurst", 0.5},
              {"kernel", {{"components", 2}, {"freqs", 2}}},
              {"sm_target", {{"weights", {1.0, 0.5}}, {"means", {{0.5}, {1.5}}}, {"variances", {{0.05}, {0.2}}}}},
              {"optimizer", {{"iterations", 4000}, {"batch", 256}, {"restarts", 5}, {"trace_every", 50}, {"adam", adam_json(2e-2)}}}});
  } else if (e == "classify") {
    d.update({{"data", data_stub},
              {"kernel", {{"components", 4}, {"freqs", 2}, {"freq_noise", 0.1}, {"max_freq", 2.0}}},
              {"inducing", {{"per_component", {2, 8}}, {"spread", 0.3}}},
              {"amplitude_scale", 2.0},
              {"restarts", 1},
              {"quadrature_nodes", 20},
              {"optimizer", {{"adam", adam_json(1e-2)}, {"natgrad_gamma", 0.1}, {"warmup", 200}, {"rounds", 700}, {"batch", 100}}},
              {"grid", {{"resolution", 60}, {"pad", 0.1}}}});
  } else if (e == "regress") {
    d.update({{"data", data_stub},
              {"hmk",
               {{"components", 6},
                {"freqs", 3},
                {"freq_noise", 0.02},
                {"max_freq", 20.0},
                {"inducing_per_component", 8},
                {"spread", 0.3}}},
              {"sm", {{"components", 4}, {"inducing", 50}, {"max_freq", 20.0}}},
              {"se", {{"inducing", 50}}},
              {"restarts", 1},
              {"init_noise", 0.1},
              {"optimizer", {{"adam", adam_json(1e-2)}, {"iterations", 500}, {"train_noise", true}, {"min_noise", 1e-6}}},
              {"grid", {{"points", 500}}}});
  } else if (e == "dump-spectral") {
    d.update({{"kernel", "hmk"},
              {"checkpoint", ""},
              {"resolution", 41},
              {"x_range", {-2.0, 2.0}},
              {"freq_range", {-3.0, 3.0}},
              {"components", 2},
              {"freqs", 2},
              {"se", {{"lengthscale", 0.5}, {"variance", 1.0}}},
              {"lsg", {{"sigma1", 0.2}, {"lambda2", 0.1}}}});
  } else if (e == "gradcheck") {
    d.update({{"points", 5}, {"h_fd", 1e-5}, {"n", 12}, {"components", 2}, {"freqs", 2}, {"inducing_per_component", 3}});
  } else {
    throw ConfigError("unknown experiment '" + e + "'");
  }
  return d;
}

ExperimentConfig parse_config(const json& doc, const std::string& experiment, const std::string& base_dir) {
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  if (doc.contains("experiment") && doc["experiment"] != experiment) {
    throw ConfigError("config is for '" + doc["experiment"].get<std::string>() + "', not '" + experiment + "'");
  }
  ExperimentConfig cfg;
  cfg.experiment = experiment;
  cfg.doc = default_config(experiment);
  cfg.doc.merge_patch(doc);
  try {
    cfg.seed = cfg.doc.at("seed").get<std::uint64_t>();
    cfg.output_dir = resolve(base_dir, cfg.doc.at("output_dir").get<std::string>());
    parse_sections(cfg, base_dir);
  } catch (const json::exception& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path, const std::string& experiment, std::optional<std::uint64_t> seed,
                             std::optional<std::string> output_dir) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config " + path);
  json doc;
  try {
    doc = json::parse(f);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
  if (seed) doc["seed"] = *seed;
  const std::string base = fs::path(path).parent_path().string();
  auto cfg = parse_config(doc, experiment, base);
  if (output_dir) {
    cfg.output_dir = *output_dir;
    cfg.doc["output_dir"] = *output_dir;
  }
  return cfg;
}

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string config_hash(const ExperimentConfig& cfg) {
  json d = cfg.doc;
  d["seed"] = cfg.seed;
  d.erase("output_dir");
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(d.dump())));
  return buf;
}

void write_trace(const std::string& path, const optim::Trace& trace) {
  RMatrix rows(static_cast<Index>(trace.size()), 3);
  for (std::size_t i = 0; i < trace.size(); ++i) {
    rows.row(static_cast<Index>(i)) << trace[i].iter, trace[i].objective, trace[i].wallclock_ms;
  }
  data::write_csv(path, {"iter", "objective", "wallclock_ms"}, rows);
}

json run_experiment(const ExperimentConfig& cfg) {
  fs::create_directories(cfg.output_dir);
  const auto start = std::chrono::steady_clock::now();
  json results;
  const std::string& e = cfg.experiment;
  if (e == "recover") {
    results = run_recover(cfg);
  } else if (e == "classify") {
    results = run_classify(cfg);
  } else if (e == "regress") {
    results = run_regress(cfg);
  } else if (e == "dump-spectral") {
    results = run_dump_spectral(cfg);
  } else if (e == "gradcheck") {
    results = run_gradcheck(cfg);
  } else {
    throw ConfigError("unknown experiment '" + e + "'");
  }
  results["seed"] = cfg.seed;
  results["config_hash"] = config_hash(cfg);
  write_json(path_in(cfg, "results.json"), results);

  std::vector<std::string> outputs;
  for (const auto& entry : fs::recursive_directory_iterator(cfg.output_dir)) {
    if (entry.is_regular_file() && entry.path().filename() != "manifest.json") {
      outputs.push_back(fs::relative(entry.path(), cfg.output_dir).string());
    }
  }
  std::sort(outputs.begin(), outputs.end());
  const json manifest = {
      {"experiment", e},
      {"config_hash", config_hash(cfg)},
      {"seed", cfg.seed},
      {"config", cfg.doc},
      {"versions",
       {{"hmk", HMK_VERSION},
        {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                      std::to_string(EIGEN_MINOR_VERSION)},
        {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." + std::to_string(NLOHMANN_JSON_VERSION_MINOR) +
                              "." + std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
        {"compiler", __VERSION__},
        {"openmp", _OPENMP}}},
      {"wall_time_s", std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()},
      {"outputs", outputs}};
  write_json(path_in(cfg, "manifest.json"), manifest);
  return results;
}

int exit_code_for_current_exception() {
  try {
    throw;
  } catch (const ConfigError&) {
    return kConfigError;
  } catch (const json::exception&) {
    return kConfigError;
  } catch (const data::ParseError&) {
    return kDataError;
  } catch (const data::SchemaMismatch&) {
    return kDataError;
  } catch (const inference::InvalidTargets&) {
    return kDataError;
  } catch (const InvalidParameters&) {
    return kConfigError;
  } catch (const linalg::NotPositiveDefinite&) {
    return kNumericalError;
  } catch (const optim::StepFailed&) {
    return kNumericalError;
  } catch (const NumericalFailure&) {
    return kNumericalError;
  } catch (const spectral::NotIntegrable&) {
    return kNumericalError;
  } catch (...) {
    return 1;
  }
}

}  // namespace hmk::experiments
