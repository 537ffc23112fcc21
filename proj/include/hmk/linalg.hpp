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

// Hermitian (and real symmetric) dense linear algebra used by every
// covariance computation: checked construction, jittered Cholesky,
// triangular solves, log-determinants and a block-diagonal variant.

#include <Eigen/Dense>

#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace hmk::linalg {

using cplx = std::complex<double>;
using Index = Eigen::Index;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using CMatrix = Matrix<cplx>;
using RMatrix = Matrix<double>;
using CVector = Eigen::VectorXcd;
using RVector = Eigen::VectorXd;

class NotPositiveDefinite : public std::runtime_error {
 public:
  explicit NotPositiveDefinite(const std::string& what) : std::runtime_error(what) {}
};

class ShapeMismatch : public std::invalid_argument {
 public:
  explicit ShapeMismatch(const std::string& what) : std::invalid_argument(what) {}
};

class NotHermitian : public std::invalid_argument {
 public:
  explicit NotHermitian(const std::string& what) : std::invalid_argument(what) {}
};

/// Square matrix with M(i,j) == conj(M(j,i)) exactly.
///
/// Construction symmetrizes inputs whose asymmetry is below `tol` relative to
/// the largest entry and rejects anything worse.
template <typename Scalar>
class HermitianMatrix {
 public:
  using MatrixType = Matrix<Scalar>;

  HermitianMatrix() = default;
  explicit HermitianMatrix(const MatrixType& m, double tol = 1e-10);

  static HermitianMatrix identity(Index n);

  Index dim() const { return m_.rows(); }
  const MatrixType& matrix() const { return m_; }
  const Scalar& operator()(Index i, Index j) const { return m_(i, j); }
  double trace() const;

 private:
  MatrixType m_;
};

/// Lower factor L with L L^H = M + jitter * I.
template <typename Scalar>
struct CholeskyFactor {
  Matrix<Scalar> lower;
  double jitter = 0.0;

  Index dim() const { return lower.rows(); }
};

/// Single attempt at M + jitter I = L L^H. Throws NotPositiveDefinite.
template <typename Scalar>
CholeskyFactor<Scalar> cholesky_hermitian(const HermitianMatrix<Scalar>& m, double jitter);

/// Jitter ladder: optionally 0, then 1e-10 * trace/dim, x10 up to 1e-4 * trace/dim.
template <typename Scalar>
CholeskyFactor<Scalar> cholesky_with_ladder(const HermitianMatrix<Scalar>& m,
                                            bool try_zero_first = true);

/// X with (L L^H) X = B.
template <typename Scalar>
Matrix<Scalar> solve_hermitian(const CholeskyFactor<Scalar>& factor, const Matrix<Scalar>& rhs);

/// L^{-1} B.
template <typename Scalar>
Matrix<Scalar> solve_lower(const CholeskyFactor<Scalar>& factor, const Matrix<Scalar>& rhs);

/// (L L^H)^{-1}, assembled from the factor.
template <typename Scalar>
Matrix<Scalar> inverse(const CholeskyFactor<Scalar>& factor);

template <typename Scalar>
double logdet(const CholeskyFactor<Scalar>& factor);

template <typename Scalar>
double min_eigenvalue(const HermitianMatrix<Scalar>& m);

/// Block-diagonal Hermitian matrix factored block by block.
template <typename Scalar>
class BlockCholesky {
 public:
  /// `sizes` partitions the diagonal; off-block entries of `m` are ignored.
  BlockCholesky(const Matrix<Scalar>& m, const std::vector<Index>& sizes,
                bool try_zero_first = true);

  Index dim() const { return dim_; }
  Matrix<Scalar> solve(const Matrix<Scalar>& rhs) const;
  Matrix<Scalar> solve_lower(const Matrix<Scalar>& rhs) const;
  Matrix<Scalar> lower() const;
  double logdet() const;
  /// Jitter added to each block, in block order.
  std::vector<double> jitters() const;
  const std::vector<Index>& offsets() const { return offsets_; }

 private:
  std::vector<CholeskyFactor<Scalar>> blocks_;
  std::vector<Index> offsets_;
  Index dim_ = 0;
};

}  // namespace hmk::linalg
