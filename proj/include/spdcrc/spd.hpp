#pragma once

#include <Eigen/Dense>
#include <vector>

#include "spdcrc/errors.hpp"

namespace spdcrc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

inline constexpr double kDefaultEigenFloor = 1e-12;

/// Dense symmetric matrix. Construction symmetrizes as (M + M^T)/2, so the
/// stored entries satisfy entries(i,j) == entries(j,i) exactly.
class SymMatrix {
 public:
  explicit SymMatrix(Matrix m);

  Index dim() const { return mat_.rows(); }
  const Matrix& mat() const { return mat_; }
  double operator()(Index i, Index j) const { return mat_(i, j); }

 private:
  Matrix mat_;
};

/// Symmetric positive definite matrix: all eigenvalues >= eigen_floor().
/// Obtained through make_spd / matrix_exp / covariance modeling, never
/// constructed from raw data directly.
class SpdMatrix {
 public:
  Index dim() const { return base_.dim(); }
  const Matrix& mat() const { return base_.mat(); }
  const SymMatrix& base() const { return base_; }
  double eigen_floor() const { return eigen_floor_; }

  /// Wraps a matrix the caller has already verified to have eigenvalues
  /// >= floor. No validation is performed here.
  static SpdMatrix from_verified(SymMatrix m, double floor) {
    return SpdMatrix(std::move(m), floor);
  }

 private:
  SpdMatrix(SymMatrix m, double floor) : base_(std::move(m)), eigen_floor_(floor) {}

  SymMatrix base_;
  double eigen_floor_;
};

/// Full row-major vectorization of a symmetric matrix, length dim^2.
struct TangentVector {
  Index dim = 0;
  Vector data;
};

/// Log-Euclidean Gaussian kernel parameter.
struct KernelParams {
  double beta = 1.0;
};

/// Eigendecomposes m, clamps eigenvalues below `floor` up to `floor`, and
/// reconstructs. Already-compliant matrices are passed through unchanged.
SpdMatrix make_spd(const SymMatrix& m, double floor = kDefaultEigenFloor);

/// Matrix logarithm U log(S) U^T via symmetric eigendecomposition.
SymMatrix matrix_log(const SpdMatrix& x);

/// Matrix exponential U exp(S) U^T; the result is positive definite.
SpdMatrix matrix_exp(const SymMatrix& s);

/// Row-major flattening of matrix_log(x).
TangentVector vectorize_log(const SpdMatrix& x);

/// Log-Euclidean metric: ||log(xi) - log(xj)||_F.
double lem_distance(const SpdMatrix& xi, const SpdMatrix& xj);

/// Gaussian kernel on the log embedding: exp(-beta * lem_distance^2), in (0,1].
double le_kernel(const SpdMatrix& xi, const SpdMatrix& xj, const KernelParams& p);

/// N x N matrix of pairwise kernel values; symmetric with unit diagonal.
SymMatrix gram_matrix(const std::vector<SpdMatrix>& gallery, const KernelParams& p);

/// Length-N vector of kernel values k(gallery[i], query).
Vector cross_kernel(const std::vector<SpdMatrix>& gallery, const SpdMatrix& query,
                    const KernelParams& p);

}  // namespace spdcrc
