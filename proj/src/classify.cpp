#include "spdcrc/classify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

namespace spdcrc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Eigen::SelfAdjointEigenSolver<Matrix> decompose(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(m);
  if (solver.info() != Eigen::Success) {
    throw NumericalDegeneracy("symmetric eigendecomposition failed to converge");
  }
  return solver;
}

// Row-major flatten; for symmetric input this equals the column-major read.
Vector flatten(const Matrix& m) {
  Vector v(m.rows() * m.cols());
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      v[i * m.cols() + j] = m(i, j);
    }
  }
  return v;
}

// Upper-triangular pairwise squared LEM distances, ascending-sorted.
std::vector<double> pairwise_sq_dists(const std::vector<Matrix>& logs) {
  std::vector<double> d2;
  d2.reserve(logs.size() * (logs.size() - 1) / 2);
  for (std::size_t i = 0; i < logs.size(); ++i) {
    for (std::size_t j = i + 1; j < logs.size(); ++j) {
      d2.push_back((logs[i] - logs[j]).squaredNorm());
    }
  }
  std::sort(d2.begin(), d2.end());
  return d2;
}

// Lower median of the positive pairwise squared distances; 1.0 fallback.
double median_beta(const std::vector<double>& sorted_d2) {
  if (sorted_d2.empty()) return 1.0;
  double med = sorted_d2[(sorted_d2.size() - 1) / 2];
  if (med > 0.0) return 1.0 / med;
  auto it = std::upper_bound(sorted_d2.begin(), sorted_d2.end(), 0.0);
  if (it != sorted_d2.end()) return 1.0 / *it;
  return 1.0;
}

ClassificationResult classify_columns(const Matrix& a, const std::vector<int>& dense_labels,
                                      const std::vector<int>& class_ids, const Vector& y,
                                      double lambda, double eps) {
  ClassificationResult r;
  r.coefficients = ridge_solve(a, y, lambda);
  r.per_class_error = classwise_residuals(a, dense_labels, y, r.coefficients, eps);
  std::size_t best = 0;
  for (std::size_t c = 1; c < r.per_class_error.size(); ++c) {
    if (r.per_class_error[c] < r.per_class_error[best]) best = c;
  }
  r.label = class_ids[best];
  return r;
}

}  // namespace

Gallery::Gallery(std::vector<SpdMatrix> descriptors, std::vector<int> labels)
    : descriptors_(std::move(descriptors)), labels_(std::move(labels)) {
  if (descriptors_.empty()) {
    throw EmptyGallery("gallery needs at least one descriptor");
  }
  if (labels_.size() != descriptors_.size()) {
    throw DimensionMismatch("gallery has " + std::to_string(descriptors_.size()) +
                            " descriptors but " + std::to_string(labels_.size()) + " labels");
  }
  for (const auto& x : descriptors_) {
    if (x.dim() != descriptors_.front().dim()) {
      throw DimensionMismatch("gallery descriptor dimensions are not uniform");
    }
  }
  class_ids_ = labels_;
  std::sort(class_ids_.begin(), class_ids_.end());
  class_ids_.erase(std::unique(class_ids_.begin(), class_ids_.end()), class_ids_.end());
  dense_labels_.reserve(labels_.size());
  for (int l : labels_) {
    auto it = std::lower_bound(class_ids_.begin(), class_ids_.end(), l);
    dense_labels_.push_back(static_cast<int>(it - class_ids_.begin()));
  }
}

void Gallery::fit_tangent() {
  const Index d = dim();
  Matrix cols(d * d, size());
  for (Index i = 0; i < size(); ++i) {
    cols.col(i) = vectorize_log(descriptors_[static_cast<std::size_t>(i)]).data;
  }
  tangent_cache_ = std::move(cols);
}

void Gallery::fit_kernel(std::optional<double> beta_override) {
  std::vector<Matrix> logs;
  logs.reserve(descriptors_.size());
  for (const auto& x : descriptors_) logs.push_back(matrix_log(x).mat());

  double beta = beta_override ? *beta_override : median_beta(pairwise_sq_dists(logs));
  if (!(beta > 0.0)) {
    throw InvalidSpec("kernel beta must be positive");
  }

  const Index n = size();
  Matrix k(n, n);
  for (Index i = 0; i < n; ++i) {
    k(i, i) = 1.0;
    for (Index j = i + 1; j < n; ++j) {
      double v = std::exp(-beta * (logs[static_cast<std::size_t>(i)] -
                                   logs[static_cast<std::size_t>(j)])
                                      .squaredNorm());
      k(i, j) = v;
      k(j, i) = v;
    }
  }
  SymMatrix gram(std::move(k));
  KernelEmbedding emb = kernel_embed(gram);
  emb.beta = beta;
  kernel_cache_.emplace(KernelCache{std::move(gram), std::move(emb), beta});
}

const Matrix& Gallery::tangent_columns() const {
  if (!tangent_cache_) throw Error("tangent cache not fitted");
  return *tangent_cache_;
}

const SymMatrix& Gallery::gram() const {
  if (!kernel_cache_) throw Error("kernel cache not fitted");
  return kernel_cache_->gram;
}

const KernelEmbedding& Gallery::embedding() const {
  if (!kernel_cache_) throw Error("kernel cache not fitted");
  return kernel_cache_->embedding;
}

double Gallery::beta() const {
  if (!kernel_cache_) throw Error("kernel cache not fitted");
  return kernel_cache_->beta;
}

double Gallery::median_heuristic_beta() const {
  std::vector<Matrix> logs;
  logs.reserve(descriptors_.size());
  for (const auto& x : descriptors_) logs.push_back(matrix_log(x).mat());
  return median_beta(pairwise_sq_dists(logs));
}

Vector ridge_solve(const Matrix& a, const Vector& y, double lambda) {
  if (a.rows() != y.size()) {
    throw DimensionMismatch("ridge_solve: matrix has " + std::to_string(a.rows()) +
                            " rows but target has " + std::to_string(y.size()));
  }
  if (lambda < 0.0) {
    throw InvalidSpec("ridge regularizer must be >= 0");
  }
  Vector aty = a.transpose() * y;
  if (lambda > 0.0) {
    Matrix gram = a.transpose() * a;
    gram.diagonal().array() += lambda;
    Eigen::LLT<Matrix> llt(gram);
    if (llt.info() != Eigen::Success) {
      throw NumericalDegeneracy("ridge normal matrix failed Cholesky factorization");
    }
    Vector w = llt.solve(aty);
    // One refinement step keeps the normal-equation residual near machine
    // precision even when lambda is tiny relative to the spectrum.
    w += llt.solve(aty - gram * w);
    return w;
  }
  if (a.cols() > a.rows()) {
    throw SingularSystem("ridge_solve: underdetermined system at lambda == 0");
  }
  Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& sv = svd.singularValues();
  double smax = sv.size() > 0 ? sv(0) : 0.0;
  double tol = static_cast<double>(std::max(a.rows(), a.cols())) *
               std::numeric_limits<double>::epsilon() * smax;
  if (smax == 0.0 || sv(sv.size() - 1) <= tol) {
    throw SingularSystem("ridge_solve: rank-deficient system at lambda == 0");
  }
  Vector t = svd.matrixU().transpose() * y;
  t.array() /= sv.array();
  return svd.matrixV() * t;
}

std::vector<double> classwise_residuals(const Matrix& a, const std::vector<int>& labels,
                                        const Vector& y, const Vector& w, double eps) {
  const Index n = a.cols();
  if (static_cast<Index>(labels.size()) != n || w.size() != n || a.rows() != y.size()) {
    throw DimensionMismatch("classwise_residuals: inconsistent shapes");
  }
  int k = 0;
  for (int l : labels) {
    if (l < 0) throw DimensionMismatch("classwise_residuals: negative class index");
    k = std::max(k, l + 1);
  }
  std::vector<Vector> recon(static_cast<std::size_t>(k), Vector::Zero(a.rows()));
  std::vector<double> wsq(static_cast<std::size_t>(k), 0.0);
  for (Index i = 0; i < n; ++i) {
    auto c = static_cast<std::size_t>(labels[static_cast<std::size_t>(i)]);
    recon[c] += a.col(i) * w[i];
    wsq[c] += w[i] * w[i];
  }
  std::vector<double> err(static_cast<std::size_t>(k), kInf);
  for (std::size_t c = 0; c < err.size(); ++c) {
    double wn = std::sqrt(wsq[c]);
    if (wn < eps) continue;
    err[c] = (y - recon[c]).norm() / wn;
  }
  return err;
}

ClassificationResult log_crc_classify(const Gallery& g, const SpdMatrix& query,
                                      const CrcConfig& cfg) {
  if (query.dim() != g.dim()) {
    throw DimensionMismatch("query dimension " + std::to_string(query.dim()) +
                            " does not match gallery dimension " + std::to_string(g.dim()));
  }
  Vector y = vectorize_log(query).data;
  if (g.has_tangent_cache()) {
    return classify_columns(g.tangent_columns(), g.dense_labels(), g.class_ids(), y, cfg.lambda1,
                            cfg.residual_epsilon);
  }
  Matrix cols(g.dim() * g.dim(), g.size());
  for (Index i = 0; i < g.size(); ++i) {
    cols.col(i) = vectorize_log(g.descriptors()[static_cast<std::size_t>(i)]).data;
  }
  return classify_columns(cols, g.dense_labels(), g.class_ids(), y, cfg.lambda1,
                          cfg.residual_epsilon);
}

KernelEmbedding kernel_embed(const SymMatrix& k_xx, double floor_rel) {
  if (floor_rel < 0.0) {
    throw InvalidSpec("singular value floor must be >= 0");
  }
  auto eig = decompose(k_xx.mat());
  const Index n = k_xx.dim();
  double sigma_max = std::max(eig.eigenvalues().maxCoeff(), 0.0);
  if (eig.eigenvalues().minCoeff() < -1e-6 * sigma_max) {
    throw NotPsd("Gram matrix has eigenvalue " + std::to_string(eig.eigenvalues().minCoeff()) +
                 ", materially below zero");
  }

  // Descending order, stable across ties.
  std::vector<Index> order(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  std::stable_sort(order.begin(), order.end(), [&](Index l, Index r) {
    return eig.eigenvalues()(l) > eig.eigenvalues()(r);
  });

  KernelEmbedding e;
  e.singular_floor_ = floor_rel;
  e.u_.resize(n, n);
  e.sqrt_sigma_ = Vector::Zero(n);
  e.inv_sqrt_sigma_ = Vector::Zero(n);
  e.rank_ = 0;
  const double cut = floor_rel * sigma_max;
  for (Index j = 0; j < n; ++j) {
    Vector col = eig.eigenvectors().col(order[static_cast<std::size_t>(j)]);
    // Sign convention: first largest-magnitude entry made positive.
    Index arg = 0;
    for (Index i = 1; i < n; ++i) {
      if (std::abs(col(i)) > std::abs(col(arg))) arg = i;
    }
    if (col(arg) < 0.0) col = -col;
    e.u_.col(j) = col;

    double lam = std::max(eig.eigenvalues()(order[static_cast<std::size_t>(j)]), 0.0);
    if (lam > cut && lam > 0.0) {
      e.sqrt_sigma_(j) = std::sqrt(lam);
      e.inv_sqrt_sigma_(j) = 1.0 / e.sqrt_sigma_(j);
      ++e.rank_;
    }
  }
  e.psi_ = e.sqrt_sigma_.asDiagonal() * e.u_.transpose();
  return e;
}

Vector embed_query(const KernelEmbedding& e, const Vector& k_xy) {
  if (k_xy.size() != e.size()) {
    throw DimensionMismatch("embed_query: kernel vector length " + std::to_string(k_xy.size()) +
                            " does not match embedding size " + std::to_string(e.size()));
  }
  Vector t = e.basis().transpose() * k_xy;
  return e.inv_sqrt_sigma().asDiagonal() * t;
}

namespace {

ClassificationResult logek_with_embedding(const Gallery& g, const SpdMatrix& query,
                                          const CrcConfig& cfg, const KernelEmbedding& emb,
                                          double beta) {
  Vector k_xy = cross_kernel(g.descriptors(), query, KernelParams{beta});
  Vector phi = embed_query(emb, k_xy);
  return classify_columns(emb.psi(), g.dense_labels(), g.class_ids(), phi, cfg.lambda2,
                          cfg.residual_epsilon);
}

}  // namespace

ClassificationResult logek_crc_classify(const Gallery& g, const SpdMatrix& query,
                                        const CrcConfig& cfg) {
  if (g.has_kernel_cache()) {
    return logek_with_embedding(g, query, cfg, g.embedding(), g.beta());
  }
  double beta = g.median_heuristic_beta();
  KernelEmbedding emb = kernel_embed(gram_matrix(g.descriptors(), KernelParams{beta}));
  emb.beta = beta;
  return logek_with_embedding(g, query, cfg, emb, beta);
}

ClassificationResult logek_crc_classify(const Gallery& g, const SpdMatrix& query,
                                        const CrcConfig& cfg, const KernelParams& p) {
  if (g.has_kernel_cache() && g.beta() == p.beta) {
    return logek_with_embedding(g, query, cfg, g.embedding(), p.beta);
  }
  KernelEmbedding emb = kernel_embed(gram_matrix(g.descriptors(), p));
  emb.beta = p.beta;
  return logek_with_embedding(g, query, cfg, emb, p.beta);
}

ClassificationResult euclidean_crc_classify(const Matrix& columns, const std::vector<int>& labels,
                                            const Vector& query, const CrcConfig& cfg) {
  if (static_cast<Index>(labels.size()) != columns.cols()) {
    throw DimensionMismatch("euclidean_crc_classify: one label per column required");
  }
  if (columns.cols() < 1) {
    throw EmptyGallery("euclidean_crc_classify: no gallery columns");
  }
  if (query.size() != columns.rows()) {
    throw DimensionMismatch("euclidean_crc_classify: query length does not match columns");
  }
  std::vector<int> ids = labels;
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  std::vector<int> dense;
  dense.reserve(labels.size());
  for (int l : labels) {
    auto it = std::lower_bound(ids.begin(), ids.end(), l);
    dense.push_back(static_cast<int>(it - ids.begin()));
  }
  return classify_columns(columns, dense, ids, query, cfg.lambda1, cfg.residual_epsilon);
}

ClassificationResult spd_crc_classify(const Gallery& g, const SpdMatrix& query,
                                      const CrcConfig& cfg) {
  if (query.dim() != g.dim()) {
    throw DimensionMismatch("query dimension does not match gallery dimension");
  }
  Matrix cols(g.dim() * g.dim(), g.size());
  for (Index i = 0; i < g.size(); ++i) {
    cols.col(i) = flatten(g.descriptors()[static_cast<std::size_t>(i)].mat());
  }
  return classify_columns(cols, g.dense_labels(), g.class_ids(), flatten(query.mat()), cfg.lambda1,
                          cfg.residual_epsilon);
}

}  // namespace spdcrc
