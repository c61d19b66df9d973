#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "spdcrc/descriptor.hpp"
#include "spdcrc/errors.hpp"
#include "spdcrc/rng.hpp"
#include "test_support.hpp"

using namespace spdcrc;

namespace {

SampleSet make_set(Matrix samples, const std::string& id = "t") {
  SampleSet s;
  s.set_id = id;
  s.samples = std::move(samples);
  return s;
}

// Independent two-pass recomputation with explicit loops.
Matrix oracle_descriptor(const Matrix& x, const DescriptorConfig& cfg) {
  const Index d = x.rows();
  const Index n = x.cols();
  Vector mean = Vector::Zero(d);
  for (Index j = 0; j < n; ++j) mean += x.col(j);
  mean /= static_cast<double>(n);
  Matrix cov = Matrix::Zero(d, d);
  for (Index j = 0; j < n; ++j) {
    Vector c = x.col(j) - mean;
    cov += c * c.transpose();
  }
  cov /= static_cast<double>(n - 1);
  double lambda = std::max(cfg.perturbation_scale * cov.trace(), cfg.perturbation_floor);
  cov.diagonal().array() += lambda;
  return cov;
}

Image random_image(SplitMix64& rng, int w, int h, int channels) {
  Image im;
  im.width = w;
  im.height = h;
  im.channels = channels;
  im.pixels.resize(static_cast<std::size_t>(w) * h * channels);
  for (auto& p : im.pixels) p = static_cast<std::uint8_t>(rng.next() & 0xFF);
  return im;
}

int luma_byte(int r, int g, int b) { return (299 * r + 587 * g + 114 * b + 500) / 1000; }

}  // namespace

TEST_SUITE("descriptor") {

TEST_CASE("covariance of an antipodal pair is the outer-product plus perturbation") {
  Matrix x(2, 2);
  x << 1.0, -1.0, 0.0, 0.0;
  SpdMatrix d = covariance_descriptor(make_set(x));

  // Sample covariance is diag(2, 0); trace 2 puts lambda at 1e-3 * 2.
  double lambda = std::max(1e-3 * 2.0, 1e-6);
  CHECK(d.mat()(0, 0) == 2.0 + lambda);
  CHECK(d.mat()(1, 1) == lambda);
  CHECK(d.mat()(0, 1) == 0.0);
  CHECK(d.mat()(1, 0) == 0.0);
}

TEST_CASE("identical samples collapse to the perturbation floor") {
  Matrix x(3, 5);
  for (Index j = 0; j < 5; ++j) x.col(j) = Vector::Constant(3, 0.25);
  SpdMatrix d = covariance_descriptor(make_set(x));
  CHECK((d.mat() - 1e-6 * Matrix::Identity(3, 3)).norm() == 0.0);
}

TEST_CASE("descriptor matches an independent two-pass recomputation") {
  SplitMix64 rng(401);
  for (int rep = 0; rep < 5; ++rep) {
    Matrix x(6, 40);
    for (Index i = 0; i < x.size(); ++i) x(i) = rng.normal();
    SpdMatrix d = covariance_descriptor(make_set(x));

    CHECK(d.mat() == d.mat().transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> es(d.mat());
    CHECK(es.eigenvalues().minCoeff() > 0.0);
    CHECK(testsup::rel_err(d.mat(), oracle_descriptor(x, DescriptorConfig{})) <= 1e-12);
  }
}

TEST_CASE("descriptor is invariant to translating every sample") {
  SplitMix64 rng(402);
  Matrix x(5, 30);
  for (Index i = 0; i < x.size(); ++i) x(i) = rng.normal();
  Vector shift(5);
  for (Index i = 0; i < 5; ++i) shift[i] = 10.0 * rng.normal();

  SpdMatrix base = covariance_descriptor(make_set(x));
  SpdMatrix moved = covariance_descriptor(make_set(x.colwise() + shift));
  CHECK(testsup::rel_err(moved.mat(), base.mat()) <= 1e-12);
}

TEST_CASE("scaling samples by alpha scales the descriptor by alpha^2") {
  SplitMix64 rng(403);
  Matrix x(6, 50);
  for (Index i = 0; i < x.size(); ++i) x(i) = rng.normal();

  // Trace is O(d) here, far above the absolute floor, so the perturbation
  // term scales with the data and the whole descriptor is 2-homogeneous.
  SpdMatrix base = covariance_descriptor(make_set(x));
  SpdMatrix scaled = covariance_descriptor(make_set(Matrix(2.0 * x)));
  CHECK(testsup::rel_err(scaled.mat(), Matrix(4.0 * base.mat())) <= 1e-12);
}

TEST_CASE("descriptor input validation") {
  CHECK_THROWS_AS(covariance_descriptor(make_set(Matrix::Zero(3, 1))), TooFewSamples);

  Matrix bad = Matrix::Zero(2, 3);
  bad(1, 2) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(covariance_descriptor(make_set(bad)), InvalidSample);

  DescriptorConfig cfg;
  cfg.perturbation_scale = 0.0;
  CHECK_THROWS_AS(covariance_descriptor(make_set(Matrix::Zero(2, 4)), cfg), InvalidSpec);
  cfg.perturbation_scale = 1e-3;
  cfg.perturbation_floor = -1.0;
  CHECK_THROWS_AS(covariance_descriptor(make_set(Matrix::Zero(2, 4)), cfg), InvalidSpec);
}

TEST_CASE("preprocess keeps a native-size constant image exact") {
  Image im;
  im.width = kPatchSide;
  im.height = kPatchSide;
  im.channels = 1;
  im.pixels.assign(kFeatureDim, 128);

  Vector v = preprocess_image(im);
  REQUIRE(v.size() == kFeatureDim);
  for (Index i = 0; i < v.size(); ++i) CHECK(v[i] == 128.0 / 255.0);
}

TEST_CASE("downsampling aligned constant blocks averages exactly") {
  // 40x40 built from 2x2 constant blocks: half-pixel bilinear sampling lands
  // exactly between the two pixels of each block, so the output is the block
  // value itself.
  SplitMix64 rng(404);
  Image im;
  im.width = 40;
  im.height = 40;
  im.channels = 1;
  im.pixels.resize(1600);
  Matrix blocks(kPatchSide, kPatchSide);
  for (Index i = 0; i < kPatchSide; ++i) {
    for (Index j = 0; j < kPatchSide; ++j) {
      auto b = static_cast<std::uint8_t>(rng.next() & 0xFF);
      blocks(i, j) = b / 255.0;
      for (int dy = 0; dy < 2; ++dy) {
        for (int dx = 0; dx < 2; ++dx) {
          im.pixels[static_cast<std::size_t>(2 * i + dy) * 40 + 2 * j + dx] = b;
        }
      }
    }
  }

  Vector v = preprocess_image(im);
  for (Index i = 0; i < kPatchSide; ++i) {
    for (Index j = 0; j < kPatchSide; ++j) CHECK(v[i * kPatchSide + j] == blocks(i, j));
  }
}

TEST_CASE("RGB input matches its preconverted grayscale version bitwise") {
  SplitMix64 rng(405);
  Image rgb = random_image(rng, 13, 17, 3);

  Image gray;
  gray.width = rgb.width;
  gray.height = rgb.height;
  gray.channels = 1;
  gray.pixels.resize(static_cast<std::size_t>(rgb.width) * rgb.height);
  for (std::size_t i = 0; i < gray.pixels.size(); ++i) {
    gray.pixels[i] = static_cast<std::uint8_t>(
        luma_byte(rgb.pixels[3 * i], rgb.pixels[3 * i + 1], rgb.pixels[3 * i + 2]));
  }

  Vector from_rgb = preprocess_image(rgb);
  Vector from_gray = preprocess_image(gray);
  for (Index i = 0; i < from_rgb.size(); ++i) CHECK(from_rgb[i] == from_gray[i]);
}

TEST_CASE("preprocess rejects malformed images") {
  Image im;
  CHECK_THROWS_AS(preprocess_image(im), UnsupportedImage);

  im.width = 4;
  im.height = 4;
  im.channels = 2;
  im.pixels.assign(32, 0);
  CHECK_THROWS_AS(preprocess_image(im), UnsupportedImage);

  im.channels = 1;
  im.pixels.assign(15, 0);
  CHECK_THROWS_AS(preprocess_image(im), UnsupportedImage);
}

}  // TEST_SUITE
