#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spdcrc/spd.hpp"

namespace spdcrc {

/// One labeled set of feature vectors. Samples are stored as columns of a
/// d x n matrix; covariance modeling needs n >= 2.
struct SampleSet {
  int label = 0;
  std::string set_id;
  Matrix samples;

  Index dim() const { return samples.rows(); }
  Index size() const { return samples.cols(); }
};

struct DescriptorConfig {
  double perturbation_scale = 1e-3;
  double perturbation_floor = 1e-6;
};

/// Decoded 8-bit image, row-major, interleaved channels (1 = gray, 3 = RGB).
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;
};

inline constexpr int kPatchSide = 20;
inline constexpr int kFeatureDim = kPatchSide * kPatchSide;

/// Sample covariance of the set plus a diagonal perturbation
/// max(scale * trace, floor) * I that keeps the result strictly positive
/// definite.
SpdMatrix covariance_descriptor(const SampleSet& s, const DescriptorConfig& cfg = {});

/// Grayscale (Rec. 601 luma), bilinear resize to 20x20, row-major flatten,
/// values in [0,1]. Output length is kFeatureDim.
Vector preprocess_image(const Image& raw);

}  // namespace spdcrc
