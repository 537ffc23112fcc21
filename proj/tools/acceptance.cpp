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

// hmk_acceptance: checks the closed forms, bounds, gradients, training runs
// and determinism end to end, printing one PASS/FAIL line per criterion.
//
// Usage: hmk_acceptance <source-dir> <hmk-cli> <work-dir>

#include "hmk/experiments.hpp"
#include "hmk/inference.hpp"
#include "hmk/optim.hpp"
#include "hmk/parallel.hpp"
#include "hmk/spectral.hpp"
#include "support.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

using namespace hmk;
using inference::InducingFrequencies;
using inference::Likelihood;
using inference::Prior;
using inference::VariationalState;
using inference::VffModel;
using linalg::CMatrix;
using optim::Inputs;
using linalg::Index;
using linalg::RMatrix;
using linalg::RVector;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Paths {
  fs::path source, cli, work;
};

std::vector<double> linspace(double lo, double hi, int n) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) v[i] = lo + (hi - lo) * i / (n - 1);
  return v;
}

spectral::ScalarKernel as_scalar(const HMKParams& p) {
  return [p](double a, double b) { return eval_hmk({&a, 1}, {&b, 1}, p); };
}

spectral::ScalarKernel as_scalar(const LSGParams& p) {
  return [p](double a, double b) { return cplx(eval_lsg({&a, 1}, {&b, 1}, p)); };
}

LSGParams random_lsg(Rng& rng) {
  const double lam = rng.uniform(0.1, 1.0);
  return {{4.0 * lam * rng.uniform(0.1, 1.0)}, lam};
}

/// Worst relative error over entries whose oracle magnitude is at least 1%
/// of the peak.
double significant_error(const std::vector<cplx>& closed, const std::vector<cplx>& oracle) {
  double peak = 0.0;
  for (const auto& o : oracle) peak = std::max(peak, std::abs(o));
  double worst = 0.0;
  for (std::size_t k = 0; k < oracle.size(); ++k) {
    if (std::abs(oracle[k]) < 0.01 * peak) continue;
    worst = std::max(worst, std::abs(closed[k] - oracle[k]) / std::abs(oracle[k]));
  }
  return worst;
}

template <class Params, class Closed>
double gsd_error(const Params& p, Closed closed) {
  std::vector<double> ws, vs;
  for (double w : linspace(-2.5, 2.5, 13)) {
    for (double v : linspace(-2.5, 2.5, 13)) {
      ws.push_back(w);
      vs.push_back(v);
    }
  }
  const auto oracle = spectral::gsd_oracle_pairs(as_scalar(p), ws, vs, spectral::input_window(p));
  std::vector<cplx> c;
  for (std::size_t k = 0; k < ws.size(); ++k) c.push_back(closed(&ws[k], &vs[k]));
  return significant_error(c, oracle);
}

template <class Params, class Closed>
double wdf_error(const Params& p, Closed closed) {
  std::vector<cplx> c, o;
  for (double x : linspace(-0.8, 0.8, 15)) {
    for (double w : linspace(-3.0, 3.0, 15)) {
      c.emplace_back(closed(&x, &w));
      o.push_back(spectral::wigner_oracle(as_scalar(p), x, w, spectral::lag_window(p)));
    }
  }
  return significant_error(c, o);
}

bool spectral_oracles() {
  Rng rng(101);
  double worst[4] = {0, 0, 0, 0};
  for (int draw = 0; draw < 5; ++draw) {
    const auto lsg = random_lsg(rng);
    const auto hmk = testing::random_hmk(rng, 1, 2, 2, false);
    auto real_hmk = hmk;
    real_hmk.real_valued = true;
    worst[0] = std::max(worst[0], gsd_error(lsg, [&](const double* w, const double* v) {
                          return cplx(spectral::gsd_lsg({w, 1}, {v, 1}, lsg));
                        }));
    worst[1] = std::max(worst[1], gsd_error(hmk, [&](const double* w, const double* v) {
                          return spectral::gsd_hmk({w, 1}, {v, 1}, hmk);
                        }));
    worst[2] = std::max(worst[2], wdf_error(lsg, [&](const double* x, const double* w) {
                          return spectral::wdf_lsg({x, 1}, {w, 1}, lsg);
                        }));
    for (const HMKParams* p : {&hmk, static_cast<const HMKParams*>(&real_hmk)}) {
      worst[3] = std::max(worst[3], wdf_error(*p, [&](const double* x, const double* w) {
                            return spectral::wdf_hmk({x, 1}, {w, 1}, *p);
                          }));
    }
  }
  std::printf("  max relative error: gsd_lsg %.2e  gsd_hmk %.2e  wdf_lsg %.2e  wdf_hmk %.2e\n", worst[0], worst[1],
              worst[2], worst[3]);
  return std::max({worst[0], worst[1], worst[2], worst[3]}) < 2e-3;
}

double trapezoid(const std::function<double(double)>& f, double lo, double hi) {
  const int n = 4001;
  const double h = (hi - lo) / (n - 1);
  double s = 0.0;
  for (int k = 0; k < n; ++k) s += ((k == 0 || k == n - 1) ? 0.5 : 1.0) * f(lo + h * k);
  return s * h;
}

bool wigner_marginal() {
  Rng rng(102);
  const auto lsg = random_lsg(rng);
  const auto hmk = testing::random_hmk(rng, 1, 2, 3, true);
  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    const double x = rng.uniform(-1.0, 1.0);
    const double m1 = trapezoid([&](double w) { return spectral::wdf_lsg({&x, 1}, {&w, 1}, lsg); }, -15, 15);
    const double m2 = trapezoid([&](double w) { return spectral::wdf_hmk({&x, 1}, {&w, 1}, hmk); }, -15, 15);
    worst = std::max(worst, std::abs(m1 - eval_lsg({&x, 1}, {&x, 1}, lsg)));
    worst = std::max(worst, std::abs(m2 - eval_hmk({&x, 1}, {&x, 1}, hmk).real()));
  }
  std::printf("  max |marginal - k(x,x)| = %.2e\n", worst);
  return worst < 1e-3;
}

double relative_min_eig(const CMatrix& g) {
  const CMatrix h = 0.5 * (g + g.adjoint());
  const double tr = std::max(h.trace().real(), 1e-300);
  return Eigen::SelfAdjointEigenSolver<CMatrix>(h).eigenvalues().minCoeff() / tr;
}

CMatrix gram_1d(const std::function<cplx(double, double)>& k, const std::vector<double>& x) {
  const auto n = static_cast<Index>(x.size());
  CMatrix g(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) g(i, j) = k(x[i], x[j]);
  }
  return g;
}

bool psd_suite() {
  Rng rng(103);
  std::map<std::string, double> worst;
  auto record = [&](const std::string& name, const CMatrix& g) {
    const double e = relative_min_eig(g);
    auto it = worst.find(name);
    if (it == worst.end() || e < it->second) worst[name] = e;
  };
  const auto unit = [](std::span<const double> t) {
    double s = 0.0;
    for (double v : t) s += v * v;
    return cplx(std::exp(-0.5 * s));
  };
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 10 + static_cast<int>(rng.below(31));
    std::vector<double> x(static_cast<std::size_t>(n)), t(static_cast<std::size_t>(n));
    for (auto& v : x) v = rng.uniform(-1.0, 1.0);
    for (auto& v : t) v = rng.uniform(0.1001, 1.1);

    const auto lsg = random_lsg(rng);
    record("lsg", gram_1d([&](double a, double b) { return cplx(eval_lsg({&a, 1}, {&b, 1}, lsg)); }, x));
    const SMParams sm = testing::random_sm(rng, 1, 3);
    record("sm", gram_1d([&](double a, double b) { const double d = a - b; return cplx(eval_sm({&d, 1}, sm)); }, x));
    const double w[3] = {rng.uniform(0.1, 1), rng.uniform(0.1, 1), rng.uniform(0.1, 1)};
    const double f[3] = {rng.normal(), rng.normal(), rng.normal()};
    const double g[3] = {rng.uniform(0.1, 2), rng.uniform(0.1, 2), rng.uniform(0.1, 2)};
    record("ss", gram_1d([&](double a, double b) { const double d = a - b; return eval_ss({&d, 1}, w, f); }, x));
    record("gs", gram_1d([&](double a, double b) { const double d = a - b; return eval_gs({&d, 1}, w, f, g, unit); }, x));
    const auto hc = testing::random_hmk(rng, 1, 1 + static_cast<int>(rng.below(3)), 1 + static_cast<int>(rng.below(3)), false);
    auto hr = hc;
    hr.real_valued = true;
    record("hmk_complex", gram_1d([&](double a, double b) { return eval_hmk({&a, 1}, {&b, 1}, hc); }, x));
    record("hmk_real", gram_1d([&](double a, double b) { return eval_hmk({&a, 1}, {&b, 1}, hr); }, x));
    GSMFunctions gsm;
    const double a0 = rng.uniform(0.2, 0.5), a1 = rng.uniform(-0.1, 0.1);
    gsm.ell = [=](double v) { return a0 + a1 * v; };
    record("gsm", gram_1d([&](double a, double b) { return cplx(eval_gsm_target(a, b, gsm)); }, x));
    const double hurst = rng.uniform(0.1, 0.9);
    record("ifbm", gram_1d([&](double a, double b) { return cplx(eval_ifbm_target(a, b, hurst)); }, t));

    const auto z = optim::init_inducing(hr, 1 + static_cast<int>(rng.below(4)), 0.5, rng);
    record("kuu_complex", inference::compute_kuu(hc, z).matrix());
    record("kuu_stacked", VffModel(hr, z).kuu().cast<cplx>());
  }
  bool ok = true;
  std::printf("  min eigenvalue / trace:");
  for (const auto& [name, e] : worst) {
    std::printf(" %s %.1e", name.c_str(), e);
    ok = ok && e >= -1e-8;
  }
  std::printf("\n");
  return ok;
}

struct Problem {
  HMKParams kernel;
  InducingFrequencies z;
  Inputs x;
  RVector y;
};

Problem make_problem(Rng& rng, Index n, double noise) {
  Problem pr;
  pr.kernel = testing::random_hmk(rng, 1, 2, 2, true);
  pr.z = optim::init_inducing(pr.kernel, 3, 0.5, rng);
  pr.x.resize(n, 1);
  for (Index i = 0; i < n; ++i) pr.x(i, 0) = rng.uniform(-1.0, 1.0);
  const RMatrix k = par::gram_real(pr.kernel, pr.x) + (noise + 1e-9) * RMatrix::Identity(n, n);
  const Eigen::LLT<RMatrix> llt(k);
  RVector e(n);
  for (Index i = 0; i < n; ++i) e(i) = rng.normal();
  pr.y = llt.matrixL() * e;
  return pr;
}

double dense_lml(const RMatrix& kff, const RVector& y, double noise) {
  const Index n = y.size();
  const Eigen::LLT<RMatrix> llt(kff + noise * RMatrix::Identity(n, n));
  const RVector a = llt.matrixL().solve(y);
  double logdet = 0.0;
  for (Index i = 0; i < n; ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
  return -0.5 * a.squaredNorm() - 0.5 * logdet - 0.5 * static_cast<double>(n) * std::log(2.0 * kPi);
}

bool bound_property() {
  Rng rng(104);
  double worst_collapsed = -1e300, worst_elbo = -1e300;
  for (int draw = 0; draw < 10; ++draw) {
    const double noise = rng.uniform(0.05, 0.5);
    const Index n = 20 + static_cast<Index>(rng.below(31));
    const auto pr = make_problem(rng, n, noise);
    const double lml = dense_lml(par::gram_real(pr.kernel, pr.x), pr.y, noise);
    const double col = inference::collapsed_bound(pr.kernel, pr.z, pr.x, pr.y, noise);
    worst_collapsed = std::max(worst_collapsed, col - lml);

    const VffModel model(pr.kernel, pr.z);
    const Index m = model.num_inducing();
    for (int s = 0; s < 25; ++s) {
      inference::SparseGPState st{pr.kernel, pr.z, {}, {Likelihood::Kind::kGaussian, noise, 20}};
      st.q.mean = RVector(m);
      for (Index i = 0; i < m; ++i) st.q.mean(i) = 0.3 * rng.normal();
      const RMatrix l = 0.3 * testing::random_real(rng, m, m);
      st.q.cov = l * l.transpose() + 0.05 * RMatrix::Identity(m, m);
      const double e = inference::elbo_stochastic(st, pr.x, pr.y, static_cast<std::size_t>(n));
      worst_elbo = std::max(worst_elbo, e - lml);
    }
  }
  std::printf("  max bound - lml: collapsed %.2e  elbo %.2e\n", worst_collapsed, worst_elbo);
  return worst_collapsed <= 1e-8 && worst_elbo <= 1e-8;
}

bool gradient_suite(const Paths& paths) {
  auto cfg = experiments::load_config((paths.source / "configs/gradcheck.json").string(), "gradcheck", std::nullopt,
                                      (paths.work / "gradcheck").string());
  cfg.gradcheck.points = 5;
  const auto r = experiments::run_experiment(cfg);
  for (const auto& [name, o] : r.at("objectives").items()) {
    std::printf("  %-26s max relative error %.2e\n", name.c_str(), o.at("max_rel_error").get<double>());
  }
  return r.at("pass").get<bool>();
}

bool natgrad_exactness() {
  Rng rng(105);
  const auto pr = make_problem(rng, 5, 0.1);
  const VffModel model(pr.kernel, pr.z);
  const Likelihood lik{Likelihood::Kind::kGaussian, 0.1, 20};
  const Prior prior(model.kuu(), model.blocks());
  auto q = inference::prior_state(model);
  const auto e = inference::elbo_terms(prior, model.kuf(pr.x), model.kdiag(pr.x), pr.y, lik, q, 1.0, true);
  optim::natgrad_step(q, e.g_mean, e.g_cov, 1.0);
  const auto opt = inference::collapsed_terms(prior, model.kuf(pr.x), model.kdiag(pr.x), pr.y, lik.noise_var, false);
  const double dm = (q.mean - opt.optimal.mean).cwiseAbs().maxCoeff() /
                    std::max(1.0, opt.optimal.mean.cwiseAbs().maxCoeff());
  const double ds = (q.cov - opt.optimal.cov).cwiseAbs().maxCoeff() / opt.optimal.cov.cwiseAbs().maxCoeff();
  std::printf("  relative deviation from the optimum: mean %.2e  covariance %.2e\n", dm, ds);
  return dm < 1e-6 && ds < 1e-6;
}

// ---------------------------------------------------------------------------
// CLI runs

struct Run {
  std::string subcommand, config;
};

const std::vector<Run> kRuns = {
    {"recover", "recover_ifbm"},  {"recover", "recover_gsm"},      {"recover", "recover_sm"},
    {"recover", "recover_self"},  {"classify", "classify_banana"}, {"regress", "regress_solar"},
    {"dump-spectral", "dump_se"}, {"dump-spectral", "dump_lsg"},   {"dump-spectral", "dump_hmk"},
    {"gradcheck", "gradcheck"},
};

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

/// Runs the CLI and returns the results file, or an empty string on a
/// non-zero exit.
std::string run_cli(const Paths& paths, const Run& run, const fs::path& out) {
  fs::remove_all(out);
  fs::create_directories(out.parent_path());
  const std::string cmd = "\"" + paths.cli.string() + "\" " + run.subcommand + " --config \"" +
                          (paths.source / "configs" / (run.config + ".json")).string() + "\" --out \"" +
                          out.string() + "\" > \"" + (out.string() + ".log") + "\" 2>&1";
  const auto t0 = std::chrono::steady_clock::now();
  const int rc = std::system(cmd.c_str());
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("  ran %-16s in %6.1f s (exit %d)\n", run.config.c_str(), secs, rc);
  return rc == 0 ? slurp(out / "results.json") : std::string();
}

bool recovery(const std::map<std::string, json>& results) {
  bool ok = true;
  for (const char* name : {"recover_ifbm", "recover_gsm"}) {
    const auto& r = results.at(name);
    const double mse = r.at("mse").get<double>();
    const double gate = r.at("gate_mse").get<double>();
    std::printf("  %s: mse %.3e  gate %.0e  reference %.4f\n", name, mse, gate, r.at("reference_mse").get<double>());
    ok = ok && mse <= gate;
  }
  return ok;
}

bool classification(const std::map<std::string, json>& results, const fs::path& out) {
  const auto& runs = results.at("classify_banana").at("runs");
  std::map<int, double> acc;
  bool valid = true;
  for (const auto& r : runs) {
    const int mp = r.at("inducing_per_component").get<int>();
    acc[mp] = r.at("train_accuracy").get<double>();
    valid = valid && r.at("grid_prob_min").get<double>() >= 0.0 && r.at("grid_prob_max").get<double>() <= 1.0;
  }
  if (!acc.count(2) || !acc.count(8)) return false;
  const bool grids_differ = slurp(out / "mp_2" / "boundary.csv") != slurp(out / "mp_8" / "boundary.csv");
  std::printf("  train accuracy m_p=2 %.3f  m_p=8 %.3f  probabilities valid %s  boundaries differ %s\n", acc[2], acc[8],
              valid ? "yes" : "no", grids_differ ? "yes" : "no");
  return acc[8] >= 0.85 && acc[8] >= acc[2] - 0.02 && valid && grids_differ;
}

bool regression(const std::map<std::string, json>& results) {
  const auto& m = results.at("regress_solar").at("models");
  const double hmk = m.at("hmk").at("test_rmse").get<double>();
  const double sm = m.at("sm").at("test_rmse").get<double>();
  bool rising = true;
  for (const char* name : {"hmk", "sm"}) {
    const auto& r = m.at(name);
    std::printf("  %s: test rmse %.4f  bound %.2f -> %.2f\n", name, r.at("test_rmse").get<double>(),
                r.at("bound_initial").get<double>(), r.at("bound_final").get<double>());
    rising = rising && r.at("bound_final").get<double>() > r.at("bound_initial").get<double>();
  }
  return hmk <= sm && rising;
}

void report(int id, const char* name, bool pass, int& failures) {
  std::printf("[%s] %2d %s\n\n", pass ? "PASS" : "FAIL", id, name);
  std::fflush(stdout);
  if (!pass) ++failures;
}

template <class F>
bool guarded(F&& f) {
  try {
    return f();
  } catch (const std::exception& e) {
    std::printf("  error: %s\n", e.what());
    return false;
  }
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 4) {
    std::fprintf(stderr, "usage: %s <source-dir> <hmk-cli> <work-dir>\n", argv[0]);
    return 2;
  }
  const Paths paths{argv[1], argv[2], argv[3]};
  fs::create_directories(paths.work);
  int failures = 0;

  report(1, "spectral closed forms match quadrature oracles", guarded(spectral_oracles), failures);
  report(2, "Wigner marginal recovers k(x,x)", guarded(wigner_marginal), failures);
  report(3, "Gram and K_uu matrices are PSD", guarded(psd_suite), failures);
  report(4, "variational bounds stay below the exact log marginal likelihood", guarded(bound_property), failures);
  report(5, "analytic gradients match central differences", guarded([&] { return gradient_suite(paths); }),
         failures);

  std::map<std::string, json> first;
  std::map<std::string, std::string> bytes;
  bool all_ran = true;
  for (const auto& run : kRuns) {
    bytes[run.config] = run_cli(paths, run, paths.work / "a" / run.config);
    all_ran = all_ran && !bytes[run.config].empty();
    if (!bytes[run.config].empty()) first[run.config] = json::parse(bytes[run.config]);
  }
  std::printf("\n");

  report(6, "kernel recovery meets the MSE gates", all_ran && guarded([&] { return recovery(first); }), failures);
  report(7, "banana classification",
         all_ran && guarded([&] { return classification(first, paths.work / "a" / "classify_banana"); }), failures);
  report(8, "solar regression: HMK RMSE <= SM RMSE and bounds rise",
         all_ran && guarded([&] { return regression(first); }), failures);
  report(9, "unit natural gradient step reaches the conjugate optimum", guarded(natgrad_exactness), failures);

  bool identical = all_ran;
  for (const auto& run : kRuns) {
    const std::string again = run_cli(paths, run, paths.work / "b" / run.config);
    const bool same = !again.empty() && again == bytes[run.config];
    if (!same) std::printf("  %s: results differ between runs\n", run.config.c_str());
    identical = identical && same;
  }
  report(10, "reruns reproduce results.json byte for byte", identical, failures);

  std::printf("%d of 10 criteria passed\n", 10 - failures);
  return failures == 0 ? 0 : 1;
}
