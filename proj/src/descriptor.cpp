#include "spdcrc/descriptor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace spdcrc {

SpdMatrix covariance_descriptor(const SampleSet& s, const DescriptorConfig& cfg) {
  const Index n = s.size();
  const Index d = s.dim();
  if (n < 2) {
    throw TooFewSamples("covariance modeling needs at least 2 samples, set '" + s.set_id +
                        "' has " + std::to_string(n));
  }
  if (!s.samples.allFinite()) {
    throw InvalidSample("set '" + s.set_id + "' contains non-finite samples");
  }
  if (!(cfg.perturbation_scale > 0.0) || !(cfg.perturbation_floor > 0.0)) {
    throw InvalidSpec("descriptor perturbation parameters must be positive");
  }
  // Two-pass: mean first, then centered outer products.
  Vector mean = s.samples.rowwise().mean();
  Matrix centered = s.samples.colwise() - mean;
  Matrix cov = (centered * centered.transpose()) / static_cast<double>(n - 1);
  double lambda = std::max(cfg.perturbation_scale * cov.trace(), cfg.perturbation_floor);
  cov.diagonal().array() += lambda;
  return make_spd(SymMatrix(std::move(cov)), std::min(kDefaultEigenFloor, lambda * 0.5));
}

namespace {

// Rec. 601 luma, rounded to 8 bits so an RGB image and its preconverted
// grayscale version take identical paths. Exact for gray inputs (r == g == b).
inline int luma601(int r, int g, int b) {
  return (299 * r + 587 * g + 114 * b + 500) / 1000;
}

}  // namespace

Vector preprocess_image(const Image& raw) {
  if (raw.width <= 0 || raw.height <= 0) {
    throw UnsupportedImage("image has non-positive dimensions");
  }
  if (raw.channels != 1 && raw.channels != 3) {
    throw UnsupportedImage("expected 1 (gray) or 3 (RGB) channels, got " +
                           std::to_string(raw.channels));
  }
  const std::size_t expected = static_cast<std::size_t>(raw.width) * raw.height * raw.channels;
  if (raw.pixels.size() != expected) {
    throw UnsupportedImage("pixel buffer size does not match dimensions");
  }

  const int w = raw.width;
  const int h = raw.height;
  std::vector<double> gray(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      std::size_t at = (static_cast<std::size_t>(y) * w + x) * raw.channels;
      int v = raw.channels == 1
                  ? raw.pixels[at]
                  : luma601(raw.pixels[at], raw.pixels[at + 1], raw.pixels[at + 2]);
      gray[static_cast<std::size_t>(y) * w + x] = v / 255.0;
    }
  }

  // Bilinear resample with half-pixel centers: output (i,j) reads input
  // coordinate ((i + 0.5) * scale - 0.5), clamped at the borders.
  Vector out(kFeatureDim);
  const double sx = static_cast<double>(w) / kPatchSide;
  const double sy = static_cast<double>(h) / kPatchSide;
  for (int i = 0; i < kPatchSide; ++i) {
    double fy = (i + 0.5) * sy - 0.5;
    fy = std::clamp(fy, 0.0, static_cast<double>(h - 1));
    int y0 = static_cast<int>(fy);
    int y1 = std::min(y0 + 1, h - 1);
    double ty = fy - y0;
    for (int j = 0; j < kPatchSide; ++j) {
      double fx = (j + 0.5) * sx - 0.5;
      fx = std::clamp(fx, 0.0, static_cast<double>(w - 1));
      int x0 = static_cast<int>(fx);
      int x1 = std::min(x0 + 1, w - 1);
      double tx = fx - x0;
      double top = gray[static_cast<std::size_t>(y0) * w + x0] * (1.0 - tx) +
                   gray[static_cast<std::size_t>(y0) * w + x1] * tx;
      double bot = gray[static_cast<std::size_t>(y1) * w + x0] * (1.0 - tx) +
                   gray[static_cast<std::size_t>(y1) * w + x1] * tx;
      out[i * kPatchSide + j] = top * (1.0 - ty) + bot * ty;
    }
  }
  return out;
}

}  // namespace spdcrc
