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

#include "hmk/linalg.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <sstream>

namespace hmk::linalg {

namespace {

double real_part(double v) { return v; }
double real_part(const cplx& v) { return v.real(); }
double abs_sq(double v) { return v * v; }
double abs_sq(const cplx& v) { return std::norm(v); }
double conj_of(double v) { return v; }
cplx conj_of(const cplx& v) { return std::conj(v); }

}  // namespace

template <typename Scalar>
HermitianMatrix<Scalar>::HermitianMatrix(const MatrixType& m, double tol) {
  if (m.rows() != m.cols()) {
    throw ShapeMismatch("HermitianMatrix: not square");
  }
  if (!m.allFinite()) {
    throw NotHermitian("HermitianMatrix: non-finite entries");
  }
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  const double asym = (m - m.adjoint()).cwiseAbs().maxCoeff();
  if (m.size() > 0 && asym > tol * scale) {
    std::ostringstream os;
    os << "HermitianMatrix: asymmetry " << asym << " exceeds tolerance";
    throw NotHermitian(os.str());
  }
  m_ = (m + m.adjoint()) * 0.5;
}

template <typename Scalar>
HermitianMatrix<Scalar> HermitianMatrix<Scalar>::identity(Index n) {
  return HermitianMatrix(MatrixType::Identity(n, n));
}

template <typename Scalar>
double HermitianMatrix<Scalar>::trace() const {
  double t = 0.0;
  for (Index i = 0; i < m_.rows(); ++i) t += real_part(m_(i, i));
  return t;
}

template <typename Scalar>
CholeskyFactor<Scalar> cholesky_hermitian(const HermitianMatrix<Scalar>& m, double jitter) {
  if (jitter < 0.0) throw std::invalid_argument("cholesky_hermitian: negative jitter");
  const Index n = m.dim();
  const auto& a = m.matrix();
  Matrix<Scalar> l = Matrix<Scalar>::Zero(n, n);
  for (Index j = 0; j < n; ++j) {
    double d = real_part(a(j, j)) + jitter;
    for (Index k = 0; k < j; ++k) d -= abs_sq(l(j, k));
    if (!(d > 0.0) || !std::isfinite(d)) {
      std::ostringstream os;
      os << "cholesky_hermitian: pivot " << j << " is " << d << " (jitter " << jitter << ")";
      throw NotPositiveDefinite(os.str());
    }
    const double ljj = std::sqrt(d);
    l(j, j) = ljj;
    for (Index i = j + 1; i < n; ++i) {
      Scalar s = a(i, j);
      for (Index k = 0; k < j; ++k) s -= l(i, k) * conj_of(l(j, k));
      l(i, j) = s / ljj;
    }
  }
  return {std::move(l), jitter};
}

template <typename Scalar>
CholeskyFactor<Scalar> cholesky_with_ladder(const HermitianMatrix<Scalar>& m, bool try_zero_first) {
  if (try_zero_first) {
    try {
      return cholesky_hermitian(m, 0.0);
    } catch (const NotPositiveDefinite&) {
    }
  }
  const double base = m.dim() > 0 ? std::abs(m.trace()) / static_cast<double>(m.dim()) : 0.0;
  const double unit = base > 0.0 ? base : 1.0;
  for (double rel = 1e-10; rel <= 1e-4 * (1.0 + 1e-9); rel *= 10.0) {
    try {
      return cholesky_hermitian(m, rel * unit);
    } catch (const NotPositiveDefinite&) {
    }
  }
  throw NotPositiveDefinite("cholesky_with_ladder: not positive definite after 1e-4*trace/dim jitter");
}

template <typename Scalar>
Matrix<Scalar> solve_lower(const CholeskyFactor<Scalar>& factor, const Matrix<Scalar>& rhs) {
  if (rhs.rows() != factor.dim()) {
    std::ostringstream os;
    os << "solve: factor dim " << factor.dim() << " vs rhs rows " << rhs.rows();
    throw ShapeMismatch(os.str());
  }
  return factor.lower.template triangularView<Eigen::Lower>().solve(rhs);
}

template <typename Scalar>
Matrix<Scalar> solve_hermitian(const CholeskyFactor<Scalar>& factor, const Matrix<Scalar>& rhs) {
  Matrix<Scalar> y = solve_lower(factor, rhs);
  return factor.lower.adjoint().template triangularView<Eigen::Upper>().solve(y);
}

template <typename Scalar>
Matrix<Scalar> inverse(const CholeskyFactor<Scalar>& factor) {
  const Index n = factor.dim();
  Matrix<Scalar> inv = solve_hermitian(factor, Matrix<Scalar>(Matrix<Scalar>::Identity(n, n)));
  return (inv + inv.adjoint()) * 0.5;
}

template <typename Scalar>
double logdet(const CholeskyFactor<Scalar>& factor) {
  double s = 0.0;
  for (Index i = 0; i < factor.dim(); ++i) s += std::log(real_part(factor.lower(i, i)));
  return 2.0 * s;
}

template <typename Scalar>
double min_eigenvalue(const HermitianMatrix<Scalar>& m) {
  if (m.dim() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(m.matrix(), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

template <typename Scalar>
BlockCholesky<Scalar>::BlockCholesky(const Matrix<Scalar>& m, const std::vector<Index>& sizes,
                                     bool try_zero_first) {
  if (m.rows() != m.cols()) throw ShapeMismatch("BlockCholesky: not square");
  Index off = 0;
  for (Index s : sizes) {
    if (s <= 0 || off + s > m.rows()) throw ShapeMismatch("BlockCholesky: bad block sizes");
    offsets_.push_back(off);
    HermitianMatrix<Scalar> block(Matrix<Scalar>(m.block(off, off, s, s)));
    blocks_.push_back(cholesky_with_ladder(block, try_zero_first));
    off += s;
  }
  if (off != m.rows()) throw ShapeMismatch("BlockCholesky: block sizes do not cover matrix");
  dim_ = off;
}

template <typename Scalar>
Matrix<Scalar> BlockCholesky<Scalar>::solve(const Matrix<Scalar>& rhs) const {
  if (rhs.rows() != dim_) throw ShapeMismatch("BlockCholesky::solve: rhs rows");
  Matrix<Scalar> out(rhs.rows(), rhs.cols());
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const Index s = blocks_[b].dim();
    out.middleRows(offsets_[b], s) =
        solve_hermitian(blocks_[b], Matrix<Scalar>(rhs.middleRows(offsets_[b], s)));
  }
  return out;
}

template <typename Scalar>
Matrix<Scalar> BlockCholesky<Scalar>::solve_lower(const Matrix<Scalar>& rhs) const {
  if (rhs.rows() != dim_) throw ShapeMismatch("BlockCholesky::solve_lower: rhs rows");
  Matrix<Scalar> out(rhs.rows(), rhs.cols());
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const Index s = blocks_[b].dim();
    out.middleRows(offsets_[b], s) =
        linalg::solve_lower(blocks_[b], Matrix<Scalar>(rhs.middleRows(offsets_[b], s)));
  }
  return out;
}

template <typename Scalar>
Matrix<Scalar> BlockCholesky<Scalar>::lower() const {
  Matrix<Scalar> l = Matrix<Scalar>::Zero(dim_, dim_);
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const Index s = blocks_[b].dim();
    l.block(offsets_[b], offsets_[b], s, s) = blocks_[b].lower;
  }
  return l;
}

template <typename Scalar>
double BlockCholesky<Scalar>::logdet() const {
  double s = 0.0;
  for (const auto& b : blocks_) s += linalg::logdet(b);
  return s;
}

template <typename Scalar>
std::vector<double> BlockCholesky<Scalar>::jitters() const {
  std::vector<double> j;
  for (const auto& b : blocks_) j.push_back(b.jitter);
  return j;
}

#define HMK_INSTANTIATE(S)                                                                      \
  template class HermitianMatrix<S>;                                                           \
  template CholeskyFactor<S> cholesky_hermitian(const HermitianMatrix<S>&, double);            \
  template CholeskyFactor<S> cholesky_with_ladder(const HermitianMatrix<S>&, bool);            \
  template Matrix<S> solve_hermitian(const CholeskyFactor<S>&, const Matrix<S>&);              \
  template Matrix<S> solve_lower(const CholeskyFactor<S>&, const Matrix<S>&);                  \
  template Matrix<S> inverse(const CholeskyFactor<S>&);                                        \
  template double logdet(const CholeskyFactor<S>&);                                            \
  template double min_eigenvalue(const HermitianMatrix<S>&);                                   \
  template class BlockCholesky<S>;

HMK_INSTANTIATE(double)
HMK_INSTANTIATE(cplx)

#undef HMK_INSTANTIATE

}  // namespace hmk::linalg
