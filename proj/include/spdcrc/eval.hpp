#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "spdcrc/classify.hpp"
#include "spdcrc/descriptor.hpp"

namespace spdcrc {

enum class Method { kLogCrc, kLogekCrc, kCrc, kSpdCrc };

std::string method_name(Method m);
std::optional<Method> parse_method(const std::string& name);

/// Repeated random gallery/probe split protocol. Each repeat draws, per
/// class, a seeded shuffle and takes the first train_sets_per_class sets as
/// gallery; the rest are probes.
struct SplitSpec {
  int train_sets_per_class = 1;
  int repeats = 10;
  std::uint64_t seed = 0;
};

struct TimingStats {
  double mean_seconds = 0.0;
  std::int64_t count = 0;
};

struct SweepPoint {
  double lambda = 0.0;
  double mean = 0.0;
  double std_dev = 0.0;
};

/// Aggregated outcome of one protocol run (or sweep). std_dev is the sample
/// standard deviation over repeats (divisor repeats - 1, zero for a single
/// repeat). Timing covers the classify phase only, measured serially on one
/// designated repeat.
struct EvalReport {
  int schema_version = 1;
  std::string method;
  std::map<std::string, std::string> config;
  std::vector<double> per_repeat_accuracy;
  double mean = 0.0;
  double std_dev = 0.0;
  TimingStats timing;
  std::vector<SweepPoint> sweep;
  std::optional<double> selected_lambda;
};

struct ProtocolOptions {
  std::optional<double> beta;  // kernel bandwidth; median heuristic when unset
  unsigned threads = 1;
  bool measure_timing = true;
  int timing_repeat = 0;  // repeat whose probe queries are timed (serially)
};

/// Index split of a dataset: positions into the dataset vector.
struct Split {
  std::vector<std::size_t> gallery;
  std::vector<std::size_t> probes;
};

/// Deterministic per-(seed, repeat_index) split; gallery and probes are
/// disjoint and together cover the dataset.
Split random_split(const std::vector<SampleSet>& dataset, const SplitSpec& spec, int repeat_index);

/// Runs the full protocol: per repeat, split, fit the gallery, classify every
/// probe, and aggregate accuracies. A probe whose classification throws
/// counts as incorrect and is reported on stderr.
EvalReport run_protocol(const std::vector<SampleSet>& dataset, Method method, const CrcConfig& cfg,
                        const SplitSpec& spec, const ProtocolOptions& opts = {});

/// run_protocol once per grid value; the report carries the sweep curve and
/// the accuracies of the selected lambda (highest mean, lowest value on tie).
EvalReport lambda_sweep(const std::vector<SampleSet>& dataset, Method method,
                        const std::vector<double>& grid, const CrcConfig& cfg,
                        const SplitSpec& spec, const ProtocolOptions& opts = {});

}  // namespace spdcrc
