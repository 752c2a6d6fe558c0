// Copyright 2026 The idealmix Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef IDEALMIX_LINALG_HPP_
#define IDEALMIX_LINALG_HPP_

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Jacobi>

#include "idealmix/error.hpp"

namespace idealmix {

using Index = Eigen::Index;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatrixXd = Matrix<double>;
using VectorXd = Vector<double>;

/// Orthonormal eigenvectors (columns) and eigenvalues sorted descending.
template <typename Scalar>
struct EigenPair {
  Matrix<Scalar> vectors;
  Vector<Scalar> values;
};

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.allFinite();
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// The input is symmetrized before rotating; an asymmetry larger than 1e-9
/// relative to the largest entry is rejected. Eigenvalues come back sorted
/// descending with ties kept in their original diagonal order. Throws
/// kNumericalFailure when the off-diagonal mass has not vanished after
/// `max_sweeps` sweeps.
template <typename Derived>
EigenPair<typename Derived::Scalar> sym_eig(const Eigen::MatrixBase<Derived>& input,
                                            int max_sweeps = 100) {
  using Scalar = typename Derived::Scalar;
  using std::abs;
  using std::sqrt;
  require(input.rows() == input.cols(), ErrorKind::kInvalidInput,
          "sym_eig: matrix is " + std::to_string(input.rows()) + "x" +
              std::to_string(input.cols()) + ", expected square");
  require(input.allFinite(), ErrorKind::kInvalidInput, "sym_eig: non-finite entry");

  const Index n = input.rows();
  Matrix<Scalar> a = input;
  if (n > 0) {
    const Scalar scale = std::max<Scalar>(Scalar(1), a.cwiseAbs().maxCoeff());
    const Scalar asym = (a - a.transpose()).cwiseAbs().maxCoeff();
    require(asym <= Scalar(1e-9) * scale, ErrorKind::kInvalidInput,
            "sym_eig: matrix is not symmetric");
  }
  a = (a + a.transpose()) / Scalar(2);
  Matrix<Scalar> v = Matrix<Scalar>::Identity(n, n);

  const Scalar eps = std::numeric_limits<Scalar>::epsilon();
  const Scalar fro = a.norm();
  auto off_diagonal = [&a, n]() {
    Scalar s(0);
    for (Index q = 1; q < n; ++q)
      for (Index p = 0; p < q; ++p) s += a(p, q) * a(p, q);
    return sqrt(Scalar(2) * s);
  };

  bool converged = false;
  for (int sweep = 0; sweep <= max_sweeps; ++sweep) {
    if (off_diagonal() <= Scalar(4) * eps * fro) {
      converged = true;
      break;
    }
    if (sweep == max_sweeps) break;
    for (Index p = 0; p + 1 < n; ++p) {
      for (Index q = p + 1; q < n; ++q) {
        if (a(p, q) == Scalar(0)) continue;
        Eigen::JacobiRotation<Scalar> rot;
        rot.makeJacobi(a, p, q);
        a.applyOnTheLeft(p, q, rot.adjoint());
        a.applyOnTheRight(p, q, rot);
        v.applyOnTheRight(p, q, rot);
      }
    }
  }
  require(converged, ErrorKind::kNumericalFailure,
          "sym_eig: Jacobi iteration did not converge in " +
              std::to_string(max_sweeps) + " sweeps");

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&a](Index i, Index j) { return a(i, i) > a(j, j); });

  EigenPair<Scalar> out{Matrix<Scalar>(n, n), Vector<Scalar>(n)};
  for (Index k = 0; k < n; ++k) {
    const Index src = order[static_cast<std::size_t>(k)];
    out.values(k) = a(src, src);
    out.vectors.col(k) = v.col(src);
  }
  return out;
}

/// Explicit Kronecker product. Only meant for small operands.
template <typename DA, typename DB>
Matrix<typename DA::Scalar> kron(const Eigen::MatrixBase<DA>& a,
                                 const Eigen::MatrixBase<DB>& b) {
  Matrix<typename DA::Scalar> out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

/// (a ⊗ b) v without forming the Kronecker product, using
/// (a ⊗ b) vec(V) = vec(b V aᵀ) with V of shape cols(b) × cols(a),
/// vec being column-major stacking.
template <typename DA, typename DB, typename DV>
Vector<typename DA::Scalar> kron_matvec(const Eigen::MatrixBase<DA>& a,
                                        const Eigen::MatrixBase<DB>& b,
                                        const Eigen::MatrixBase<DV>& v) {
  using Scalar = typename DA::Scalar;
  require(v.cols() == 1 && v.size() == a.cols() * b.cols(),
          ErrorKind::kInvalidInput,
          "kron_matvec: vector length " + std::to_string(v.size()) +
              " does not match " + std::to_string(a.cols()) + "*" +
              std::to_string(b.cols()));
  const Vector<Scalar> flat = v;
  Eigen::Map<const Matrix<Scalar>> shaped(flat.data(), b.cols(), a.cols());
  const Matrix<Scalar> product = b * shaped * a.transpose();
  return Eigen::Map<const Vector<Scalar>>(product.data(), product.size());
}

}  // namespace idealmix

#endif  // IDEALMIX_LINALG_HPP_
