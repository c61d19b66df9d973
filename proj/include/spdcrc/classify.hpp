#pragma once

#include <optional>
#include <vector>

#include "spdcrc/spd.hpp"

namespace spdcrc {

struct CrcConfig {
  double lambda1 = 0.01;  // tangent-space regularizer
  double lambda2 = 0.01;  // kernel-space regularizer
  double residual_epsilon = 1e-12;
};

/// Outcome of one classification: winning class id, the per-class normalized
/// reconstruction errors (aligned with Gallery::class_ids()), and the full
/// representation coefficient vector.
struct ClassificationResult {
  int label = -1;
  std::vector<double> per_class_error;
  Vector coefficients;
};

/// Factor of a gallery Gram matrix: K = Psi^T Psi with Psi = (U S^{1/2})^T.
/// Eigenvalues are sorted descending; each eigenvector's sign is fixed by
/// making its first largest-magnitude entry positive; singular values below
/// singular_floor() * sigma_max are truncated to zero.
class KernelEmbedding {
 public:
  KernelEmbedding() = default;

  const Matrix& psi() const { return psi_; }
  const Matrix& basis() const { return u_; }
  const Vector& sqrt_sigma() const { return sqrt_sigma_; }
  const Vector& inv_sqrt_sigma() const { return inv_sqrt_sigma_; }
  double singular_floor() const { return singular_floor_; }
  Index rank() const { return rank_; }
  Index size() const { return psi_.cols(); }

  double beta = 0.0;  // kernel parameter the Gram matrix was built with

  friend KernelEmbedding kernel_embed(const SymMatrix&, double);

 private:
  Matrix psi_;
  Matrix u_;
  Vector sqrt_sigma_;
  Vector inv_sqrt_sigma_;
  double singular_floor_ = 0.0;
  Index rank_ = 0;
};

/// Labeled dictionary of SPD descriptors plus the cached representations the
/// classifiers work on. Caches are populated in an explicit fit step;
/// classification against a fitted gallery is read-only.
class Gallery {
 public:
  Gallery(std::vector<SpdMatrix> descriptors, std::vector<int> labels);

  Index size() const { return static_cast<Index>(descriptors_.size()); }
  Index dim() const { return descriptors_.front().dim(); }
  int num_classes() const { return static_cast<int>(class_ids_.size()); }
  const std::vector<SpdMatrix>& descriptors() const { return descriptors_; }
  const std::vector<int>& labels() const { return labels_; }
  /// Sorted unique class ids; per_class_error vectors align with this.
  const std::vector<int>& class_ids() const { return class_ids_; }
  /// Labels remapped to 0..k-1 following class_ids() order.
  const std::vector<int>& dense_labels() const { return dense_labels_; }

  /// Populates the d^2 x N matrix of vectorized log descriptors.
  void fit_tangent();
  /// Builds the Gram matrix and its embedding. Without an explicit beta the
  /// median heuristic over pairwise squared LEM distances is used.
  void fit_kernel(std::optional<double> beta_override = std::nullopt);

  bool has_tangent_cache() const { return tangent_cache_.has_value(); }
  const Matrix& tangent_columns() const;
  bool has_kernel_cache() const { return kernel_cache_.has_value(); }
  const SymMatrix& gram() const;
  const KernelEmbedding& embedding() const;
  double beta() const;

  /// 1 / (lower median of pairwise squared LEM distances); 1.0 when the
  /// gallery has no positive pairwise distance.
  double median_heuristic_beta() const;

 private:
  std::vector<SpdMatrix> descriptors_;
  std::vector<int> labels_;
  std::vector<int> class_ids_;
  std::vector<int> dense_labels_;
  std::optional<Matrix> tangent_cache_;

  struct KernelCache {
    SymMatrix gram;
    KernelEmbedding embedding;
    double beta;
  };
  std::optional<KernelCache> kernel_cache_;
};

/// Closed-form ridge solution w = (A^T A + lambda I)^{-1} A^T y.
/// lambda == 0 requires A^T A to be invertible.
Vector ridge_solve(const Matrix& a, const Vector& y, double lambda);

/// Err_c = ||y - A_c w_c||_2 / ||w_c||_2 per class, +inf when ||w_c|| < eps.
/// `labels` are dense class indices 0..k-1, one per column of `a`.
std::vector<double> classwise_residuals(const Matrix& a, const std::vector<int>& labels,
                                        const Vector& y, const Vector& w, double eps);

/// Collaborative representation over vectorized log descriptors.
ClassificationResult log_crc_classify(const Gallery& g, const SpdMatrix& query,
                                      const CrcConfig& cfg);

/// Factors a PSD Gram matrix into Psi with Psi^T Psi == K.
KernelEmbedding kernel_embed(const SymMatrix& k_xx, double floor_rel = 1e-10);

/// Embedded query: Phi = pinv(Psi^T) * k_xy, truncated directions dropped.
Vector embed_query(const KernelEmbedding& e, const Vector& k_xy);

/// Collaborative representation in the Log-Euclidean kernel space; uses the
/// gallery's fitted kernel cache when present, otherwise builds a one-shot
/// embedding with the median-heuristic beta.
ClassificationResult logek_crc_classify(const Gallery& g, const SpdMatrix& query,
                                        const CrcConfig& cfg);
/// Same, with an explicit kernel parameter; the cache is reused only when its
/// beta matches.
ClassificationResult logek_crc_classify(const Gallery& g, const SpdMatrix& query,
                                        const CrcConfig& cfg, const KernelParams& p);

/// Euclidean baseline: plain CRC over raw feature columns.
ClassificationResult euclidean_crc_classify(const Matrix& columns, const std::vector<int>& labels,
                                            const Vector& query, const CrcConfig& cfg);

/// Manifold baseline: CRC over flattened SPD matrices, no logarithm.
ClassificationResult spd_crc_classify(const Gallery& g, const SpdMatrix& query,
                                      const CrcConfig& cfg);

}  // namespace spdcrc
