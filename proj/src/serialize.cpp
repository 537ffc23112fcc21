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

#include "hmk/inference.hpp"

#include <nlohmann/json.hpp>

namespace hmk::inference {

using nlohmann::json;

namespace {

constexpr const char* kStateFormat = "hmk-sparse-gp/1";

json matrix_rows(const RMatrix& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    rows.push_back(std::move(r));
  }
  return rows;
}

RMatrix rows_matrix(const json& j) {
  const Index r = static_cast<Index>(j.size());
  const Index c = r == 0 ? 0 : static_cast<Index>(j.at(0).size());
  RMatrix m(r, c);
  for (Index i = 0; i < r; ++i) {
    if (static_cast<Index>(j.at(i).size()) != c) throw InvalidParameters("ragged matrix in JSON");
    for (Index k = 0; k < c; ++k) m(i, k) = j.at(i).at(k).get<double>();
  }
  return m;
}

json nested(const std::vector<double>& v, int cols) {
  json rows = json::array();
  for (std::size_t i = 0; i < v.size(); i += static_cast<std::size_t>(cols)) {
    rows.push_back(std::vector<double>(v.begin() + static_cast<long>(i), v.begin() + static_cast<long>(i + cols)));
  }
  return rows;
}

std::vector<double> flat(const json& rows) {
  std::vector<double> v;
  for (const auto& r : rows) {
    for (const auto& x : r) v.push_back(x.get<double>());
  }
  return v;
}

}  // namespace

json to_json(const HMKParams& p) {
  json comps = json::array();
  for (const auto& c : p.components) {
    const int q = c.num_freqs();
    RMatrix re = RMatrix::Zero(q, q), im = RMatrix::Zero(q, q);
    for (int i = 0; i < q; ++i) {
      for (int j = 0; j <= i; ++j) {
        re(i, j) = c.chol(i, j).re;
        im(i, j) = c.chol(i, j).im;
      }
    }
    comps.push_back({{"center", c.center},
                     {"gamma", c.gamma},
                     {"mu", nested(c.mu, c.dim())},
                     {"b_chol_re", matrix_rows(re)},
                     {"b_chol_im", matrix_rows(im)},
                     {"sigma1", c.sigma1},
                     {"lambda2", c.lambda2}});
  }
  return {{"real_valued", p.real_valued}, {"components", comps}};
}

HMKParams hmk_from_json(const json& j) {
  HMKParams p;
  p.real_valued = j.value("real_valued", true);
  for (const auto& jc : j.at("components")) {
    HMKComponent c;
    c.center = jc.at("center").get<std::vector<double>>();
    c.gamma = jc.at("gamma").get<std::vector<double>>();
    c.mu = flat(jc.at("mu"));
    c.sigma1 = jc.at("sigma1").get<std::vector<double>>();
    c.lambda2 = jc.at("lambda2").get<double>();
    const RMatrix re = rows_matrix(jc.at("b_chol_re"));
    const RMatrix im = jc.contains("b_chol_im") ? rows_matrix(jc.at("b_chol_im")) : RMatrix::Zero(re.rows(), re.cols());
    const int q = static_cast<int>(re.rows());
    if (re.cols() != q || im.rows() != q || im.cols() != q) throw InvalidParameters("b_chol must be square");
    c.b_chol.assign(static_cast<std::size_t>(q * q), Cx<double>(0.0, 0.0));
    for (int a = 0; a < q; ++a) {
      for (int b = 0; b <= a; ++b) {
        c.b_chol[static_cast<std::size_t>(a * q + b)] = Cx<double>(re(a, b), a == b ? 0.0 : im(a, b));
      }
    }
    p.components.push_back(std::move(c));
  }
  validate(p);
  return p;
}

json to_json(const SMParams& p) {
  return {{"weights", p.weights}, {"means", nested(p.means, p.dim())}, {"variances", nested(p.variances, p.dim())}};
}

SMParams sm_from_json(const json& j) {
  SMParams p;
  p.weights = j.at("weights").get<std::vector<double>>();
  p.means = flat(j.at("means"));
  p.variances = flat(j.at("variances"));
  validate(p);
  return p;
}

json to_json(const SparseGPState& s) {
  json freqs = json::array();
  for (const auto& f : s.inducing.freqs) freqs.push_back(nested(f, s.inducing.dim));
  const bool gaussian = s.lik.kind == Likelihood::Kind::kGaussian;
  return {{"format", kStateFormat},
          {"ordering", "per component: real parts of u then imaginary parts of u"},
          {"kernel", to_json(s.kernel)},
          {"inducing", {{"dim", s.inducing.dim}, {"frequencies", freqs}}},
          {"variational",
           {{"mean", std::vector<double>(s.q.mean.data(), s.q.mean.data() + s.q.mean.size())},
            {"cov", matrix_rows(s.q.cov)}}},
          {"likelihood",
           {{"kind", gaussian ? "gaussian" : "bernoulli"},
            {"noise_var", s.lik.noise_var},
            {"quadrature_nodes", s.lik.quadrature_nodes}}}};
}

SparseGPState state_from_json(const json& j) {
  if (j.value("format", std::string()) != kStateFormat) throw InvalidParameters("unrecognised state format");
  SparseGPState s;
  s.kernel = hmk_from_json(j.at("kernel"));
  s.inducing.dim = j.at("inducing").at("dim").get<int>();
  for (const auto& f : j.at("inducing").at("frequencies")) s.inducing.freqs.push_back(flat(f));
  s.inducing.validate(s.kernel.num_components());
  const auto mean = j.at("variational").at("mean").get<std::vector<double>>();
  s.q.mean = Eigen::Map<const RVector>(mean.data(), static_cast<Index>(mean.size()));
  s.q.cov = rows_matrix(j.at("variational").at("cov"));
  const auto& lj = j.at("likelihood");
  const auto kind = lj.at("kind").get<std::string>();
  if (kind == "gaussian") {
    s.lik.kind = Likelihood::Kind::kGaussian;
  } else if (kind == "bernoulli") {
    s.lik.kind = Likelihood::Kind::kBernoulli;
  } else {
    throw InvalidParameters("unknown likelihood kind: " + kind);
  }
  s.lik.noise_var = lj.value("noise_var", 1.0);
  s.lik.quadrature_nodes = lj.value("quadrature_nodes", 20);
  const Index m = 2 * s.inducing.total();
  if (s.q.mean.size() != m || s.q.cov.rows() != m || s.q.cov.cols() != m) {
    throw linalg::ShapeMismatch("variational state size does not match the inducing set");
  }
  return s;
}

}  // namespace hmk::inference
