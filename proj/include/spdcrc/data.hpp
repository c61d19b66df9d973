#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "spdcrc/descriptor.hpp"
#include "spdcrc/eval.hpp"

namespace spdcrc {

struct ManifestSet {
  int set_id = 0;
  std::filesystem::path source;  // resolved against the manifest directory
  bool matrix_file = false;      // false: directory of images
};

struct ManifestClass {
  int class_id = 0;
  std::vector<ManifestSet> sets;
};

/// Parsed dataset manifest (JSON, schema documented in the README). Classes
/// and sets are stored sorted by id; image sets list a directory, matrix
/// sets a text file.
struct DatasetManifest {
  std::string name;
  int resize_width = kPatchSide;
  int resize_height = kPatchSide;
  bool grayscale = true;
  std::vector<ManifestClass> classes;
  std::filesystem::path root;
};

DatasetManifest load_manifest(const std::filesystem::path& path);

/// Decodes a PGM (P2/P5, 8-bit) or PNG (no alpha) file.
Image load_image(const std::filesystem::path& path);

/// Text matrix format: one sample vector per line, space-separated decimals.
/// Returned as d x n with one column per line.
Matrix load_matrix_file(const std::filesystem::path& path);
void save_matrix_file(const std::filesystem::path& path, const Matrix& samples);

/// Loads every set of the manifest: images are decoded and preprocessed,
/// matrix files read verbatim. Output is ordered by (class_id, set_id,
/// filename) and is independent of directory enumeration order.
std::vector<SampleSet> load_dataset(const DatasetManifest& manifest);
std::vector<SampleSet> load_dataset(const std::filesystem::path& manifest_path);

/// Synthetic image-set stand-in. Class means live in the log-domain as
/// mutually orthogonal symmetric directions scaled so every pair of class
/// means is exactly class_separation apart; each set perturbs its class mean
/// by a unit-norm symmetric matrix times within_spread, maps through the
/// matrix exponential, and emits samples whose sample covariance equals that
/// target exactly. base_log_range > 0 additionally shifts every set along one
/// shared log-direction by a class-independent uniform draw from
/// [-base_log_range, base_log_range], producing raw-space overlap while
/// preserving the log-space class structure.
struct SyntheticSpec {
  int num_classes = 4;
  int sets_per_class = 6;
  int samples_per_set = 100;
  int ambient_dim = 10;
  double class_separation = 3.0;
  double within_spread = 0.3;
  double base_log_range = 0.0;
  std::uint64_t seed = 7;
};

std::vector<SampleSet> generate_synthetic(const SyntheticSpec& spec);

enum class ReportFormat { kJson, kCsv };

std::string report_to_json(const EvalReport& report);
std::string report_to_csv(const EvalReport& report);
void write_report(const EvalReport& report, const std::filesystem::path& path, ReportFormat fmt);
EvalReport read_report(const std::filesystem::path& path);  // JSON reports only

}  // namespace spdcrc
