#include "spdcrc/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <map>
#include <utility>

#include "spdcrc/parallel.hpp"
#include "spdcrc/rng.hpp"

namespace spdcrc {

namespace {

constexpr std::uint64_t kTagSplit = 0x5917;

void validate_spec(const SplitSpec& spec) {
  if (spec.train_sets_per_class < 1) throw InvalidSpec("train_sets_per_class must be >= 1");
  if (spec.repeats < 1) throw InvalidSpec("repeats must be >= 1");
}

std::map<int, std::vector<std::size_t>> group_by_class(const std::vector<SampleSet>& dataset) {
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < dataset.size(); ++i) groups[dataset[i].label].push_back(i);
  return groups;
}

void seeded_shuffle(std::vector<std::size_t>& v, SplitMix64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    auto j = static_cast<std::size_t>(rng.uniform01() * static_cast<double>(i));
    if (j >= i) j = i - 1;
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace

std::string method_name(Method m) {
  switch (m) {
    case Method::kLogCrc:
      return "log_crc";
    case Method::kLogekCrc:
      return "logek_crc";
    case Method::kCrc:
      return "crc";
    case Method::kSpdCrc:
      return "spd_crc";
  }
  return "unknown";
}

std::optional<Method> parse_method(const std::string& name) {
  if (name == "log_crc") return Method::kLogCrc;
  if (name == "logek_crc") return Method::kLogekCrc;
  if (name == "crc") return Method::kCrc;
  if (name == "spd_crc") return Method::kSpdCrc;
  return std::nullopt;
}

Split random_split(const std::vector<SampleSet>& dataset, const SplitSpec& spec,
                   int repeat_index) {
  validate_spec(spec);
  if (repeat_index < 0) throw InvalidSpec("repeat_index must be >= 0");
  auto groups = group_by_class(dataset);
  Split split;
  const std::uint64_t repeat_key =
      SplitMix64::derive(SplitMix64::derive(spec.seed, kTagSplit),
                         static_cast<std::uint64_t>(repeat_index));
  std::size_t class_pos = 0;
  for (auto& [class_id, members] : groups) {
    if (static_cast<int>(members.size()) <= spec.train_sets_per_class) {
      throw InsufficientSets("class " + std::to_string(class_id) + " has " +
                             std::to_string(members.size()) + " sets; need more than " +
                             std::to_string(spec.train_sets_per_class) +
                             " to leave at least one probe");
    }
    SplitMix64 rng(SplitMix64::derive(repeat_key, class_pos));
    seeded_shuffle(members, rng);
    for (std::size_t i = 0; i < members.size(); ++i) {
      if (i < static_cast<std::size_t>(spec.train_sets_per_class)) {
        split.gallery.push_back(members[i]);
      } else {
        split.probes.push_back(members[i]);
      }
    }
    ++class_pos;
  }
  std::sort(split.gallery.begin(), split.gallery.end());
  std::sort(split.probes.begin(), split.probes.end());
  return split;
}

EvalReport run_protocol(const std::vector<SampleSet>& dataset, Method method, const CrcConfig& cfg,
                        const SplitSpec& spec, const ProtocolOptions& opts) {
  validate_spec(spec);
  if (group_by_class(dataset).size() < 2) {
    throw InvalidSpec("protocol needs a dataset with at least 2 classes");
  }

  // Per-set features are split-independent; build them once.
  std::vector<SpdMatrix> descriptors;
  std::vector<Vector> set_means;
  descriptors.reserve(dataset.size());
  set_means.reserve(dataset.size());
  for (const SampleSet& s : dataset) {
    descriptors.push_back(covariance_descriptor(s));
    set_means.push_back(s.samples.rowwise().mean());
  }

  EvalReport report;
  report.method = method_name(method);
  double timed_total = 0.0;
  std::int64_t timed_count = 0;

  for (int r = 0; r < spec.repeats; ++r) {
    Split split = random_split(dataset, spec, r);

    std::vector<SpdMatrix> gallery_descs;
    std::vector<int> gallery_labels;
    gallery_descs.reserve(split.gallery.size());
    for (std::size_t idx : split.gallery) {
      gallery_descs.push_back(descriptors[idx]);
      gallery_labels.push_back(dataset[idx].label);
    }

    Gallery gallery(std::move(gallery_descs), gallery_labels);
    Matrix mean_columns;
    switch (method) {
      case Method::kLogCrc:
        gallery.fit_tangent();
        break;
      case Method::kLogekCrc:
        gallery.fit_kernel(opts.beta);
        break;
      case Method::kCrc: {
        mean_columns.resize(set_means.front().size(), static_cast<Index>(split.gallery.size()));
        for (std::size_t i = 0; i < split.gallery.size(); ++i) {
          mean_columns.col(static_cast<Index>(i)) = set_means[split.gallery[i]];
        }
        break;
      }
      case Method::kSpdCrc:
        break;
    }

    auto classify_one = [&](std::size_t probe_idx) -> int {
      const std::size_t idx = split.probes[probe_idx];
      switch (method) {
        case Method::kLogCrc:
          return log_crc_classify(gallery, descriptors[idx], cfg).label;
        case Method::kLogekCrc:
          return logek_crc_classify(gallery, descriptors[idx], cfg).label;
        case Method::kCrc:
          return euclidean_crc_classify(mean_columns, gallery_labels, set_means[idx], cfg).label;
        case Method::kSpdCrc:
          return spd_crc_classify(gallery, descriptors[idx], cfg).label;
      }
      return -1;
    };

    std::vector<int> predicted(split.probes.size(), -1);
    std::vector<std::string> failures(split.probes.size());
    auto run_one = [&](std::size_t i) {
      try {
        predicted[i] = classify_one(i);
      } catch (const std::exception& e) {
        failures[i] = e.what();
      }
    };

    const bool timed = opts.measure_timing && r == opts.timing_repeat;
    if (timed) {
      for (std::size_t i = 0; i < split.probes.size(); ++i) {
        auto start = std::chrono::steady_clock::now();
        run_one(i);
        auto stop = std::chrono::steady_clock::now();
        timed_total += std::chrono::duration<double>(stop - start).count();
        ++timed_count;
      }
    } else {
      parallel_for(split.probes.size(), opts.threads, run_one);
    }

    std::size_t correct = 0;
    for (std::size_t i = 0; i < split.probes.size(); ++i) {
      if (!failures[i].empty()) {
        std::cerr << "repeat " << r << ": probe " << dataset[split.probes[i]].set_id
                  << " failed: " << failures[i] << "\n";
        continue;
      }
      if (predicted[i] == dataset[split.probes[i]].label) ++correct;
    }
    report.per_repeat_accuracy.push_back(static_cast<double>(correct) /
                                         static_cast<double>(split.probes.size()));
  }

  double sum = 0.0;
  for (double a : report.per_repeat_accuracy) sum += a;
  report.mean = sum / static_cast<double>(spec.repeats);
  if (spec.repeats > 1) {
    double sq = 0.0;
    for (double a : report.per_repeat_accuracy) sq += (a - report.mean) * (a - report.mean);
    report.std_dev = std::sqrt(sq / static_cast<double>(spec.repeats - 1));
  }
  if (timed_count > 0) {
    report.timing.mean_seconds = timed_total / static_cast<double>(timed_count);
    report.timing.count = timed_count;
  }
  return report;
}

EvalReport lambda_sweep(const std::vector<SampleSet>& dataset, Method method,
                        const std::vector<double>& grid, const CrcConfig& cfg,
                        const SplitSpec& spec, const ProtocolOptions& opts) {
  if (grid.empty()) throw InvalidSpec("lambda grid must be nonempty");
  for (double l : grid) {
    if (l < 0.0) throw InvalidSpec("lambda grid values must be >= 0");
  }

  ProtocolOptions inner = opts;
  inner.measure_timing = false;

  EvalReport best;
  std::vector<SweepPoint> sweep;
  bool have_best = false;
  double best_lambda = 0.0;
  for (double lambda : grid) {
    CrcConfig point_cfg = cfg;
    point_cfg.lambda1 = lambda;
    point_cfg.lambda2 = lambda;
    EvalReport rep = run_protocol(dataset, method, point_cfg, spec, inner);
    sweep.push_back(SweepPoint{lambda, rep.mean, rep.std_dev});
    if (!have_best || rep.mean > best.mean ||
        (rep.mean == best.mean && lambda < best_lambda)) {
      best = std::move(rep);
      best_lambda = lambda;
      have_best = true;
    }
  }
  best.sweep = std::move(sweep);
  best.selected_lambda = best_lambda;
  return best;
}

}  // namespace spdcrc
