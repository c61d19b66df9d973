#include "spdcrc/spd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

namespace spdcrc {

namespace {

Eigen::SelfAdjointEigenSolver<Matrix> decompose(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(m);
  if (solver.info() != Eigen::Success) {
    throw NumericalDegeneracy("symmetric eigendecomposition failed to converge");
  }
  return solver;
}

}  // namespace

SymMatrix::SymMatrix(Matrix m) {
  if (m.rows() != m.cols()) {
    throw DimensionMismatch("symmetric matrix must be square, got " +
                            std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
  }
  if (m.rows() < 1) {
    throw InvalidMatrix("matrix dimension must be >= 1");
  }
  mat_ = 0.5 * (m + m.transpose());
}

SpdMatrix make_spd(const SymMatrix& m, double floor) {
  if (!(floor > 0.0)) {
    throw InvalidSpec("eigenvalue floor must be positive");
  }
  if (!m.mat().allFinite()) {
    throw InvalidMatrix("matrix has non-finite entries");
  }
  auto eig = decompose(m.mat());
  if (eig.eigenvalues().minCoeff() >= floor) {
    return SpdMatrix::from_verified(m, floor);
  }
  Vector clamped = eig.eigenvalues().cwiseMax(floor);
  Matrix rebuilt = eig.eigenvectors() * clamped.asDiagonal() * eig.eigenvectors().transpose();
  return SpdMatrix::from_verified(SymMatrix(std::move(rebuilt)), floor);
}

SymMatrix matrix_log(const SpdMatrix& x) {
  auto eig = decompose(x.mat());
  // Slack absorbs re-decomposition roundoff on matrices clamped exactly at
  // the floor.
  if (eig.eigenvalues().minCoeff() < x.eigen_floor() * (1.0 - 1e-9)) {
    throw NumericalDegeneracy("eigenvalue below floor " + std::to_string(x.eigen_floor()) +
                              " in matrix logarithm");
  }
  Vector logged = eig.eigenvalues().array().log();
  return SymMatrix(eig.eigenvectors() * logged.asDiagonal() * eig.eigenvectors().transpose());
}

SpdMatrix matrix_exp(const SymMatrix& s) {
  if (!s.mat().allFinite()) {
    throw InvalidMatrix("matrix has non-finite entries");
  }
  auto eig = decompose(s.mat());
  Vector exped = eig.eigenvalues().array().exp();
  Matrix rebuilt = eig.eigenvectors() * exped.asDiagonal() * eig.eigenvectors().transpose();
  double smallest = exped.minCoeff() * (1.0 - 1e-9);
  double floor = std::max(std::min(kDefaultEigenFloor, smallest),
                          std::numeric_limits<double>::min());
  return SpdMatrix::from_verified(SymMatrix(std::move(rebuilt)), floor);
}

TangentVector vectorize_log(const SpdMatrix& x) {
  SymMatrix lg = matrix_log(x);
  Index d = lg.dim();
  TangentVector t;
  t.dim = d;
  t.data.resize(d * d);
  for (Index i = 0; i < d; ++i) {
    for (Index j = 0; j < d; ++j) {
      t.data[i * d + j] = lg(i, j);
    }
  }
  return t;
}

double lem_distance(const SpdMatrix& xi, const SpdMatrix& xj) {
  if (xi.dim() != xj.dim()) {
    throw DimensionMismatch("lem_distance: operands have dims " + std::to_string(xi.dim()) +
                            " and " + std::to_string(xj.dim()));
  }
  return (matrix_log(xi).mat() - matrix_log(xj).mat()).norm();
}

double le_kernel(const SpdMatrix& xi, const SpdMatrix& xj, const KernelParams& p) {
  if (xi.dim() != xj.dim()) {
    throw DimensionMismatch("le_kernel: operands have dims " + std::to_string(xi.dim()) +
                            " and " + std::to_string(xj.dim()));
  }
  if (!(p.beta > 0.0)) {
    throw InvalidSpec("kernel beta must be positive");
  }
  double d2 = (matrix_log(xi).mat() - matrix_log(xj).mat()).squaredNorm();
  return std::exp(-p.beta * d2);
}

SymMatrix gram_matrix(const std::vector<SpdMatrix>& gallery, const KernelParams& p) {
  if (gallery.empty()) {
    throw EmptyGallery("gram_matrix: gallery is empty");
  }
  if (!(p.beta > 0.0)) {
    throw InvalidSpec("kernel beta must be positive");
  }
  const Index n = static_cast<Index>(gallery.size());
  std::vector<Matrix> logs;
  logs.reserve(gallery.size());
  for (const auto& x : gallery) {
    if (x.dim() != gallery.front().dim()) {
      throw DimensionMismatch("gram_matrix: gallery dimensions are not uniform");
    }
    logs.push_back(matrix_log(x).mat());
  }
  Matrix k(n, n);
  for (Index i = 0; i < n; ++i) {
    k(i, i) = 1.0;
    for (Index j = i + 1; j < n; ++j) {
      double v = std::exp(-p.beta * (logs[i] - logs[j]).squaredNorm());
      k(i, j) = v;
      k(j, i) = v;
    }
  }
  return SymMatrix(std::move(k));
}

Vector cross_kernel(const std::vector<SpdMatrix>& gallery, const SpdMatrix& query,
                    const KernelParams& p) {
  if (gallery.empty()) {
    throw EmptyGallery("cross_kernel: gallery is empty");
  }
  if (!(p.beta > 0.0)) {
    throw InvalidSpec("kernel beta must be positive");
  }
  Matrix lq = matrix_log(query).mat();
  Vector out(static_cast<Index>(gallery.size()));
  for (std::size_t i = 0; i < gallery.size(); ++i) {
    if (gallery[i].dim() != query.dim()) {
      throw DimensionMismatch("cross_kernel: gallery/query dimensions differ");
    }
    out[static_cast<Index>(i)] =
        std::exp(-p.beta * (matrix_log(gallery[i]).mat() - lq).squaredNorm());
  }
  return out;
}

}  // namespace spdcrc
