#include "spdcrc/data.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <utility>

#include "spdcrc/rng.hpp"

namespace spdcrc {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Synthetic generator stream tags; the stream layout is part of the
// documented format so fixtures can be regenerated elsewhere.
constexpr std::uint64_t kTagDirections = 0xD1;
constexpr std::uint64_t kTagBase = 0xBA;
constexpr std::uint64_t kTagClass = 0xC1;
constexpr std::uint64_t kTagPerturb = 1;
constexpr std::uint64_t kTagMean = 2;
constexpr std::uint64_t kTagSample = 0x100;
constexpr double kSetMeanScale = 1.0;

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string read_binary(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  std::ostringstream out;
  out << f.rdbuf();
  return std::move(out).str();
}

std::string lower_ext(const fs::path& path) {
  std::string e = path.extension().string();
  std::transform(e.begin(), e.end(), e.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return e;
}

Image load_pgm(const fs::path& path) {
  const std::string data = read_binary(path);
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < data.size()) {
      if (std::isspace(static_cast<unsigned char>(data[pos]))) {
        ++pos;
      } else if (data[pos] == '#') {
        while (pos < data.size() && data[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
  };
  auto token = [&]() -> std::string {
    skip_space();
    std::size_t start = pos;
    while (pos < data.size() && !std::isspace(static_cast<unsigned char>(data[pos]))) ++pos;
    if (start == pos) throw UnsupportedImage("truncated PGM header: " + path.string());
    return data.substr(start, pos - start);
  };
  auto number = [&](const char* what) -> long {
    std::string t = token();
    char* end = nullptr;
    long v = std::strtol(t.c_str(), &end, 10);
    if (end == t.c_str() || *end != '\0') {
      throw UnsupportedImage(std::string("malformed PGM ") + what + ": " + path.string());
    }
    return v;
  };

  std::string magic = token();
  if (magic != "P2" && magic != "P5") {
    throw UnsupportedImage("not an 8-bit PGM (P2/P5): " + path.string());
  }
  long w = number("width");
  long h = number("height");
  long maxval = number("maxval");
  if (w <= 0 || h <= 0) throw UnsupportedImage("invalid PGM dimensions: " + path.string());
  if (maxval < 1 || maxval > 255) {
    throw UnsupportedImage("PGM maxval " + std::to_string(maxval) + " unsupported (8-bit only): " +
                           path.string());
  }

  Image img;
  img.width = static_cast<int>(w);
  img.height = static_cast<int>(h);
  img.channels = 1;
  const std::size_t count = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  img.pixels.resize(count);

  if (magic == "P5") {
    ++pos;  // single whitespace byte separates header from raster
    if (pos + count > data.size()) throw UnsupportedImage("truncated PGM raster: " + path.string());
    std::memcpy(img.pixels.data(), data.data() + pos, count);
    for (auto& p : img.pixels) {
      if (p > maxval) throw UnsupportedImage("PGM sample above maxval: " + path.string());
    }
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      long v = number("sample");
      if (v < 0 || v > maxval) throw UnsupportedImage("PGM sample out of range: " + path.string());
      img.pixels[i] = static_cast<std::uint8_t>(v);
    }
  }
  if (maxval != 255) {
    for (auto& p : img.pixels) {
      p = static_cast<std::uint8_t>((p * 255L + maxval / 2) / maxval);
    }
  }
  return img;
}

Image load_png(const fs::path& path) {
  png_image im;
  std::memset(&im, 0, sizeof im);
  im.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&im, path.string().c_str())) {
    std::string msg = im.message;
    png_image_free(&im);
    throw IoError("cannot read PNG " + path.string() + ": " + msg);
  }
  if (im.format & PNG_FORMAT_FLAG_ALPHA) {
    png_image_free(&im);
    throw UnsupportedImage("PNG with alpha channel unsupported: " + path.string());
  }
  const bool color = (im.format & PNG_FORMAT_FLAG_COLOR) != 0;
  im.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;

  Image img;
  img.width = static_cast<int>(im.width);
  img.height = static_cast<int>(im.height);
  img.channels = color ? 3 : 1;
  img.pixels.resize(PNG_IMAGE_SIZE(im));
  if (!png_image_finish_read(&im, nullptr, img.pixels.data(), 0, nullptr)) {
    std::string msg = im.message;
    png_image_free(&im);
    throw IoError("cannot decode PNG " + path.string() + ": " + msg);
  }
  return img;
}

int require_int(const json& j, const char* key, const fs::path& path) {
  if (!j.contains(key) || !j[key].is_number_integer()) {
    throw ManifestError("manifest " + path.string() + ": missing integer field '" + key + "'");
  }
  return j[key].get<int>();
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += "\"";
  return out;
}

Matrix random_symmetric(SplitMix64& rng, Index d) {
  Matrix m(d, d);
  for (Index i = 0; i < d; ++i) {
    for (Index j = i; j < d; ++j) {
      double v = rng.normal();
      m(i, j) = v;
      m(j, i) = v;
    }
  }
  return m;
}

double frob_dot(const Matrix& a, const Matrix& b) { return (a.array() * b.array()).sum(); }

}  // namespace

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path.string());
  json j;
  try {
    j = json::parse(f);
  } catch (const json::exception& e) {
    throw ManifestError("malformed manifest " + path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw ManifestError("manifest " + path.string() + " is not a JSON object");

  DatasetManifest m;
  m.root = path.parent_path();
  m.name = j.value("name", path.stem().string());

  if (j.contains("preprocessing")) {
    const json& p = j["preprocessing"];
    if (!p.is_object()) throw ManifestError("manifest " + path.string() + ": bad preprocessing");
    if (p.contains("resize")) {
      const json& r = p["resize"];
      if (!r.is_array() || r.size() != 2 || r[0] != kPatchSide || r[1] != kPatchSide) {
        throw ManifestError("manifest " + path.string() + ": only " + std::to_string(kPatchSide) +
                            "x" + std::to_string(kPatchSide) + " resize is supported");
      }
    }
    if (p.contains("grayscale") && p["grayscale"] != true) {
      throw ManifestError("manifest " + path.string() + ": only grayscale preprocessing is supported");
    }
  }

  if (!j.contains("classes") || !j["classes"].is_array()) {
    throw ManifestError("manifest " + path.string() + ": missing 'classes' array");
  }
  for (const json& jc : j["classes"]) {
    if (!jc.is_object()) throw ManifestError("manifest " + path.string() + ": class is not an object");
    ManifestClass mc;
    mc.class_id = require_int(jc, "class_id", path);
    if (!jc.contains("sets") || !jc["sets"].is_array() || jc["sets"].empty()) {
      throw ManifestError("manifest " + path.string() + ": class " +
                          std::to_string(mc.class_id) + " has no sets");
    }
    for (const json& js : jc["sets"]) {
      ManifestSet ms;
      ms.set_id = require_int(js, "set_id", path);
      const bool has_images = js.contains("images");
      const bool has_matrix = js.contains("matrix");
      if (has_images == has_matrix) {
        throw ManifestError("manifest " + path.string() + ": set " + std::to_string(ms.set_id) +
                            " must specify exactly one of 'images' or 'matrix'");
      }
      const json& src = has_images ? js["images"] : js["matrix"];
      if (!src.is_string()) {
        throw ManifestError("manifest " + path.string() + ": set source must be a string path");
      }
      ms.matrix_file = has_matrix;
      ms.source = m.root / fs::path(src.get<std::string>());
      mc.sets.push_back(std::move(ms));
    }
    std::sort(mc.sets.begin(), mc.sets.end(),
              [](const ManifestSet& a, const ManifestSet& b) { return a.set_id < b.set_id; });
    for (std::size_t i = 1; i < mc.sets.size(); ++i) {
      if (mc.sets[i].set_id == mc.sets[i - 1].set_id) {
        throw ManifestError("manifest " + path.string() + ": duplicate set_id " +
                            std::to_string(mc.sets[i].set_id) + " in class " +
                            std::to_string(mc.class_id));
      }
    }
    m.classes.push_back(std::move(mc));
  }
  if (m.classes.size() < 2) {
    throw ManifestError("manifest " + path.string() + ": at least 2 classes required");
  }
  std::sort(m.classes.begin(), m.classes.end(),
            [](const ManifestClass& a, const ManifestClass& b) { return a.class_id < b.class_id; });
  for (std::size_t i = 1; i < m.classes.size(); ++i) {
    if (m.classes[i].class_id == m.classes[i - 1].class_id) {
      throw ManifestError("manifest " + path.string() + ": duplicate class_id " +
                          std::to_string(m.classes[i].class_id));
    }
  }
  return m;
}

Image load_image(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("missing image file " + path.string());
  std::string ext = lower_ext(path);
  if (ext == ".pgm") return load_pgm(path);
  if (ext == ".png") return load_png(path);
  throw UnsupportedImage("unsupported image format '" + ext + "': " + path.string());
}

Matrix load_matrix_file(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    std::istringstream iss(line);
    std::vector<double> vals;
    double v = 0.0;
    while (iss >> v) vals.push_back(v);
    if (!iss.eof()) {
      throw IoError("cannot parse matrix file " + path.string() + " line " +
                    std::to_string(lineno));
    }
    if (vals.empty()) continue;  // blank line
    if (!rows.empty() && vals.size() != rows.front().size()) {
      throw DimensionMismatch("matrix file " + path.string() + " line " + std::to_string(lineno) +
                              " has " + std::to_string(vals.size()) + " values, expected " +
                              std::to_string(rows.front().size()));
    }
    rows.push_back(std::move(vals));
  }
  if (rows.empty()) throw IoError("empty matrix file " + path.string());

  const Index d = static_cast<Index>(rows.front().size());
  const Index n = static_cast<Index>(rows.size());
  Matrix m(d, n);
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < d; ++i) {
      m(i, j) = rows[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)];
    }
  }
  return m;
}

void save_matrix_file(const fs::path& path, const Matrix& samples) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  for (Index j = 0; j < samples.cols(); ++j) {
    for (Index i = 0; i < samples.rows(); ++i) {
      if (i) f << ' ';
      f << fmt(samples(i, j));
    }
    f << '\n';
  }
  f.flush();
  if (!f) throw IoError("cannot write " + path.string());
}

std::vector<SampleSet> load_dataset(const DatasetManifest& manifest) {
  std::vector<SampleSet> out;
  for (const ManifestClass& mc : manifest.classes) {
    for (const ManifestSet& ms : mc.sets) {
      SampleSet s;
      s.label = mc.class_id;
      s.set_id = std::to_string(mc.class_id) + "_" + std::to_string(ms.set_id);
      if (ms.matrix_file) {
        s.samples = load_matrix_file(ms.source);
      } else {
        if (!fs::is_directory(ms.source)) {
          throw IoError("missing image directory " + ms.source.string());
        }
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(ms.source)) {
          if (!entry.is_regular_file()) continue;
          std::string ext = lower_ext(entry.path());
          if (ext == ".pgm" || ext == ".png") files.push_back(entry.path());
        }
        std::sort(files.begin(), files.end(),
                  [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });
        if (files.empty()) {
          throw ManifestError("image set directory has no PGM/PNG files: " + ms.source.string());
        }
        Matrix cols(kFeatureDim, static_cast<Index>(files.size()));
        for (std::size_t i = 0; i < files.size(); ++i) {
          cols.col(static_cast<Index>(i)) = preprocess_image(load_image(files[i]));
        }
        s.samples = std::move(cols);
      }
      out.push_back(std::move(s));
    }
  }
  for (const SampleSet& s : out) {
    if (s.dim() != out.front().dim()) {
      throw DimensionMismatch("set " + s.set_id + " has dimension " + std::to_string(s.dim()) +
                              ", expected " + std::to_string(out.front().dim()));
    }
  }
  return out;
}

std::vector<SampleSet> load_dataset(const fs::path& manifest_path) {
  return load_dataset(load_manifest(manifest_path));
}

std::vector<SampleSet> generate_synthetic(const SyntheticSpec& spec) {
  if (spec.num_classes < 1 || spec.sets_per_class < 1 || spec.samples_per_set < 2 ||
      spec.ambient_dim < 1) {
    throw InvalidSpec("synthetic spec counts must be positive (and samples_per_set >= 2)");
  }
  if (!(spec.within_spread > 0.0)) throw InvalidSpec("within_spread must be > 0");
  if (spec.class_separation < 0.0) throw InvalidSpec("class_separation must be >= 0");
  if (spec.base_log_range < 0.0) throw InvalidSpec("base_log_range must be >= 0");
  const Index d = spec.ambient_dim;
  const Index n = spec.samples_per_set;
  if (n < d + 2) {
    throw InvalidSpec("samples_per_set must be >= ambient_dim + 2 for exact covariance targets");
  }
  const Index sym_dim = d * (d + 1) / 2;
  if (sym_dim < spec.num_classes + 1) {
    throw InvalidSpec("ambient_dim too small to host " + std::to_string(spec.num_classes) +
                      " orthogonal class directions");
  }

  // One shared base direction plus one orthonormal direction per class.
  SplitMix64 dir_rng(SplitMix64::derive(spec.seed, kTagDirections));
  std::vector<Matrix> dirs;
  dirs.reserve(static_cast<std::size_t>(spec.num_classes) + 1);
  for (int t = 0; t < spec.num_classes + 1; ++t) {
    Matrix m = random_symmetric(dir_rng, d);
    for (const Matrix& prev : dirs) m -= frob_dot(prev, m) * prev;
    double norm = m.norm();
    if (norm < 1e-9) throw NumericalDegeneracy("degenerate class direction draw");
    dirs.push_back(m / norm);
  }
  const Matrix& base_dir = dirs[0];
  const double dir_scale = spec.class_separation / std::sqrt(2.0);

  SplitMix64 base_rng(SplitMix64::derive(spec.seed, kTagBase));
  std::vector<SampleSet> out;
  out.reserve(static_cast<std::size_t>(spec.num_classes) * spec.sets_per_class);

  for (int c = 0; c < spec.num_classes; ++c) {
    const std::uint64_t class_key =
        SplitMix64::derive(SplitMix64::derive(spec.seed, kTagClass), static_cast<std::uint64_t>(c));
    const Matrix class_mean = dir_scale * dirs[static_cast<std::size_t>(c) + 1];
    for (int t = 0; t < spec.sets_per_class; ++t) {
      const std::uint64_t set_key = SplitMix64::derive(class_key, static_cast<std::uint64_t>(t));
      const double base = (2.0 * base_rng.uniform01() - 1.0) * spec.base_log_range;

      SplitMix64 perturb_rng(SplitMix64::derive(set_key, kTagPerturb));
      Matrix e = random_symmetric(perturb_rng, d);
      double enorm = e.norm();
      if (enorm < 1e-12) throw NumericalDegeneracy("degenerate set perturbation draw");
      Matrix set_log = base * base_dir + class_mean + (spec.within_spread / enorm) * e;

      Matrix samples(d, n);
      for (Index j = 0; j < n; ++j) {
        SplitMix64 sample_rng(SplitMix64::derive(set_key, kTagSample + static_cast<std::uint64_t>(j)));
        for (Index i = 0; i < d; ++i) samples(i, j) = sample_rng.normal();
      }
      Vector row_mean = samples.rowwise().mean();
      samples.colwise() -= row_mean;

      Matrix cov = samples * samples.transpose() / static_cast<double>(n - 1);
      Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
      if (es.info() != Eigen::Success || es.eigenvalues().minCoeff() <=
                                             1e-12 * es.eigenvalues().maxCoeff()) {
        throw NumericalDegeneracy("degenerate sample covariance in synthetic draw");
      }
      Matrix whiten = es.eigenvectors() *
                      es.eigenvalues().array().rsqrt().matrix().asDiagonal() *
                      es.eigenvectors().transpose();
      Matrix color = matrix_exp(SymMatrix(0.5 * set_log)).mat();
      samples = color * (whiten * samples);

      SplitMix64 mean_rng(SplitMix64::derive(set_key, kTagMean));
      Vector mu(d);
      for (Index i = 0; i < d; ++i) mu[i] = mean_rng.normal();
      double mu_norm = mu.norm();
      if (mu_norm > 0.0) mu *= kSetMeanScale / mu_norm;
      samples.colwise() += mu;

      SampleSet s;
      s.label = c;
      s.set_id = std::to_string(c) + "_" + std::to_string(t);
      s.samples = std::move(samples);
      out.push_back(std::move(s));
    }
  }
  return out;
}

std::string report_to_json(const EvalReport& report) {
  json j;
  j["schema_version"] = report.schema_version;
  j["method"] = report.method;
  j["config"] = report.config;
  j["per_repeat_accuracy"] = report.per_repeat_accuracy;
  j["mean"] = report.mean;
  j["std"] = report.std_dev;
  j["timing"] = {{"mean_seconds", report.timing.mean_seconds}, {"count", report.timing.count}};
  if (!report.sweep.empty()) {
    json arr = json::array();
    for (const SweepPoint& p : report.sweep) {
      arr.push_back({{"lambda", p.lambda}, {"mean", p.mean}, {"std", p.std_dev}});
    }
    j["sweep"] = std::move(arr);
    if (report.selected_lambda) j["selected_lambda"] = *report.selected_lambda;
  }
  return j.dump(2) + "\n";
}

std::string report_to_csv(const EvalReport& report) {
  std::ostringstream out;
  out << "record,key,value,mean,std,count\n";
  if (!report.method.empty()) out << "method,," << csv_escape(report.method) << ",,,\n";
  for (const auto& [key, value] : report.config) {
    out << "config," << csv_escape(key) << "," << csv_escape(value) << ",,,\n";
  }
  for (std::size_t i = 0; i < report.per_repeat_accuracy.size(); ++i) {
    out << "accuracy," << i << "," << fmt(report.per_repeat_accuracy[i]) << ",,,\n";
  }
  if (!report.per_repeat_accuracy.empty()) {
    out << "summary,,," << fmt(report.mean) << "," << fmt(report.std_dev) << ","
        << report.per_repeat_accuracy.size() << "\n";
  }
  if (report.timing.count > 0) {
    out << "timing,,," << fmt(report.timing.mean_seconds) << ",," << report.timing.count << "\n";
  }
  for (const SweepPoint& p : report.sweep) {
    out << "sweep," << fmt(p.lambda) << ",," << fmt(p.mean) << "," << fmt(p.std_dev) << ",\n";
  }
  if (report.selected_lambda) {
    out << "selected_lambda,," << fmt(*report.selected_lambda) << ",,,\n";
  }
  return std::move(out).str();
}

void write_report(const EvalReport& report, const fs::path& path, ReportFormat fmt_kind) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write report to " + path.string());
  f << (fmt_kind == ReportFormat::kJson ? report_to_json(report) : report_to_csv(report));
  f.flush();
  if (!f) throw IoError("cannot write report to " + path.string());
}

EvalReport read_report(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path.string());
  json j;
  try {
    j = json::parse(f);
  } catch (const json::exception& e) {
    throw IoError("cannot parse report " + path.string() + ": " + e.what());
  }
  if (!j.is_object() || j.value("schema_version", 0) != 1) {
    throw IoError("unsupported report schema in " + path.string());
  }
  EvalReport r;
  r.method = j.value("method", std::string{});
  if (j.contains("config")) {
    for (const auto& [key, value] : j["config"].items()) {
      r.config[key] = value.get<std::string>();
    }
  }
  if (j.contains("per_repeat_accuracy")) {
    r.per_repeat_accuracy = j["per_repeat_accuracy"].get<std::vector<double>>();
  }
  r.mean = j.value("mean", 0.0);
  r.std_dev = j.value("std", 0.0);
  if (j.contains("timing")) {
    r.timing.mean_seconds = j["timing"].value("mean_seconds", 0.0);
    r.timing.count = j["timing"].value("count", std::int64_t{0});
  }
  if (j.contains("sweep")) {
    for (const json& p : j["sweep"]) {
      r.sweep.push_back(SweepPoint{p.value("lambda", 0.0), p.value("mean", 0.0), p.value("std", 0.0)});
    }
  }
  if (j.contains("selected_lambda")) r.selected_lambda = j["selected_lambda"].get<double>();
  return r;
}

}  // namespace spdcrc
