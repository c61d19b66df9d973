#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "spdcrc/data.hpp"
#include "spdcrc/eval.hpp"
#include "spdcrc/parallel.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace spdcrc;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string error_kind(const std::exception& e) {
#define SPDCRC_KIND(T) \
  if (dynamic_cast<const T*>(&e)) return #T;
  SPDCRC_KIND(InvalidMatrix)
  SPDCRC_KIND(NumericalDegeneracy)
  SPDCRC_KIND(DimensionMismatch)
  SPDCRC_KIND(EmptyGallery)
  SPDCRC_KIND(TooFewSamples)
  SPDCRC_KIND(InvalidSample)
  SPDCRC_KIND(UnsupportedImage)
  SPDCRC_KIND(IoError)
  SPDCRC_KIND(ManifestError)
  SPDCRC_KIND(SingularSystem)
  SPDCRC_KIND(NotPsd)
  SPDCRC_KIND(InsufficientSets)
  SPDCRC_KIND(InvalidSpec)
#undef SPDCRC_KIND
  if (dynamic_cast<const Error*>(&e)) return "Error";
  return "Exception";
}

struct CommonOpts {
  std::string input;
  std::string synthetic;
  std::string output;
  std::string format = "json";
  std::string method;
  std::string methods = "log_crc,logek_crc";
  std::string beta = "median";
  std::string grid = "0.01,0.05,0.1,0.5,1";
  std::uint64_t seed = 7;
  int repeats = 10;
  int train = 3;
  unsigned threads = 0;
  double lambda1 = 0.01;
  double lambda2 = 0.01;
  bool error_json = false;
};

struct DescribeOpts {
  std::string input;
  std::string output;
  bool error_json = false;
};

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t comma = text.find(',', start);
    if (comma == std::string::npos) comma = text.size();
    std::string tok = text.substr(start, comma - start);
    if (!tok.empty()) out.push_back(tok);
    start = comma + 1;
  }
  return out;
}

double parse_number(const std::string& text, const std::string& what) {
  char* end = nullptr;
  double v = std::strtod(text.c_str(), &end);
  if (end == text.c_str() || *end != '\0') {
    throw UsageError("cannot parse " + what + " value '" + text + "'");
  }
  return v;
}

// The run seed also seeds generation unless the spec string pins its own.
SyntheticSpec parse_synthetic(const std::string& text, std::uint64_t run_seed) {
  SyntheticSpec spec;
  spec.seed = run_seed;
  if (text == "default") return spec;
  for (const std::string& tok : split_list(text)) {
    std::size_t eq = tok.find('=');
    if (eq == std::string::npos) {
      throw UsageError("synthetic spec token '" + tok + "' is not key=value");
    }
    std::string key = tok.substr(0, eq);
    std::string value = tok.substr(eq + 1);
    if (key == "classes") {
      spec.num_classes = static_cast<int>(parse_number(value, key));
    } else if (key == "sets") {
      spec.sets_per_class = static_cast<int>(parse_number(value, key));
    } else if (key == "samples") {
      spec.samples_per_set = static_cast<int>(parse_number(value, key));
    } else if (key == "dim") {
      spec.ambient_dim = static_cast<int>(parse_number(value, key));
    } else if (key == "separation") {
      spec.class_separation = parse_number(value, key);
    } else if (key == "spread") {
      spec.within_spread = parse_number(value, key);
    } else if (key == "base") {
      spec.base_log_range = parse_number(value, key);
    } else if (key == "seed") {
      spec.seed = static_cast<std::uint64_t>(parse_number(value, key));
    } else {
      throw UsageError("unknown synthetic spec key '" + key + "'");
    }
  }
  return spec;
}

std::vector<SampleSet> resolve_dataset(const CommonOpts& o,
                                       std::map<std::string, std::string>& cfg) {
  if (!o.input.empty()) {
    cfg["input"] = o.input;
    return load_dataset(fs::path(o.input));
  }
  if (!o.synthetic.empty()) {
    SyntheticSpec spec = parse_synthetic(o.synthetic, o.seed);
    cfg["synthetic.classes"] = std::to_string(spec.num_classes);
    cfg["synthetic.sets_per_class"] = std::to_string(spec.sets_per_class);
    cfg["synthetic.samples_per_set"] = std::to_string(spec.samples_per_set);
    cfg["synthetic.ambient_dim"] = std::to_string(spec.ambient_dim);
    cfg["synthetic.class_separation"] = fmt(spec.class_separation);
    cfg["synthetic.within_spread"] = fmt(spec.within_spread);
    cfg["synthetic.base_log_range"] = fmt(spec.base_log_range);
    cfg["synthetic.seed"] = std::to_string(spec.seed);
    return generate_synthetic(spec);
  }
  throw UsageError("one of --input or --synthetic is required");
}

// The protocol derives beta per gallery; the CLI resolves one dataset-wide
// value instead so the echoed configuration pins the exact number used.
std::optional<double> resolve_beta(const std::string& beta_text,
                                   const std::vector<SampleSet>& dataset,
                                   std::map<std::string, std::string>& cfg) {
  if (beta_text == "median") {
    std::vector<SpdMatrix> descs;
    std::vector<int> labels;
    descs.reserve(dataset.size());
    for (const SampleSet& s : dataset) {
      descs.push_back(covariance_descriptor(s));
      labels.push_back(s.label);
    }
    double beta = Gallery(std::move(descs), labels).median_heuristic_beta();
    cfg["beta_mode"] = "median";
    cfg["beta"] = fmt(beta);
    return beta;
  }
  double beta = parse_number(beta_text, "--beta");
  if (!(beta > 0.0)) throw UsageError("--beta must be 'median' or a positive number");
  cfg["beta_mode"] = "fixed";
  cfg["beta"] = fmt(beta);
  return beta;
}

unsigned resolve_threads(unsigned requested) {
  return requested == 0 ? hardware_threads() : requested;
}

void echo_common(const CommonOpts& o, const std::string& command,
                 std::map<std::string, std::string>& cfg) {
  cfg["command"] = command;
  cfg["lambda1"] = fmt(o.lambda1);
  cfg["lambda2"] = fmt(o.lambda2);
  cfg["seed"] = std::to_string(o.seed);
  cfg["repeats"] = std::to_string(o.repeats);
  cfg["train_sets_per_class"] = std::to_string(o.train);
  cfg["format"] = o.format;
  // threads deliberately not echoed: it cannot change any reported number.
}

void maybe_write(const EvalReport& report, const CommonOpts& o) {
  if (o.output.empty()) return;
  write_report(report, fs::path(o.output),
               o.format == "csv" ? ReportFormat::kCsv : ReportFormat::kJson);
}

void print_accuracy_row(const EvalReport& r) {
  std::printf("%-10s %8.4f +/- %.4f\n", r.method.c_str(), r.mean, r.std_dev);
}

int run_describe(const DescribeOpts& o) {
  std::vector<SampleSet> dataset = load_dataset(fs::path(o.input));
  fs::path dir(o.output);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string());

  json summary = json::array();
  for (const SampleSet& s : dataset) {
    SpdMatrix desc = covariance_descriptor(s);
    save_matrix_file(dir / ("desc_" + s.set_id + ".txt"), desc.mat());
    Eigen::SelfAdjointEigenSolver<Matrix> es(desc.mat(), Eigen::EigenvaluesOnly);
    summary.push_back({{"set_id", s.set_id},
                       {"label", s.label},
                       {"dim", desc.dim()},
                       {"samples", s.size()},
                       {"trace", desc.mat().trace()},
                       {"eig_min", es.eigenvalues().minCoeff()},
                       {"eig_max", es.eigenvalues().maxCoeff()}});
  }
  std::ofstream f(dir / "summary.json", std::ios::binary);
  if (!f) throw IoError("cannot write " + (dir / "summary.json").string());
  f << summary.dump(2) << "\n";
  f.flush();
  if (!f) throw IoError("cannot write " + (dir / "summary.json").string());
  std::printf("wrote %zu descriptors to %s\n", dataset.size(), dir.string().c_str());
  return 0;
}

int run_eval(const CommonOpts& o) {
  std::map<std::string, std::string> cfg;
  echo_common(o, "eval", cfg);
  cfg["method"] = o.method;
  std::vector<SampleSet> dataset = resolve_dataset(o, cfg);
  Method method = *parse_method(o.method);

  ProtocolOptions opts;
  opts.threads = resolve_threads(o.threads);
  if (method == Method::kLogekCrc) opts.beta = resolve_beta(o.beta, dataset, cfg);

  SplitSpec spec{o.train, o.repeats, o.seed};
  CrcConfig crc_cfg;
  crc_cfg.lambda1 = o.lambda1;
  crc_cfg.lambda2 = o.lambda2;

  EvalReport report = run_protocol(dataset, method, crc_cfg, spec, opts);
  report.config = std::move(cfg);
  print_accuracy_row(report);
  if (report.timing.count > 0) {
    std::printf("per-query classify time: %.3f ms (%lld queries)\n",
                report.timing.mean_seconds * 1e3,
                static_cast<long long>(report.timing.count));
  }
  maybe_write(report, o);
  return 0;
}

int run_sweep(const CommonOpts& o) {
  std::map<std::string, std::string> cfg;
  echo_common(o, "sweep", cfg);
  cfg["method"] = o.method;
  cfg["grid"] = o.grid;
  std::vector<SampleSet> dataset = resolve_dataset(o, cfg);
  Method method = *parse_method(o.method);

  std::vector<double> grid;
  for (const std::string& tok : split_list(o.grid)) {
    double v = parse_number(tok, "--grid");
    if (v < 0.0) throw UsageError("--grid values must be >= 0");
    grid.push_back(v);
  }
  if (grid.empty()) throw UsageError("--grid must list at least one lambda");

  ProtocolOptions opts;
  opts.threads = resolve_threads(o.threads);
  if (method == Method::kLogekCrc) opts.beta = resolve_beta(o.beta, dataset, cfg);

  SplitSpec spec{o.train, o.repeats, o.seed};
  CrcConfig crc_cfg;
  crc_cfg.lambda1 = o.lambda1;
  crc_cfg.lambda2 = o.lambda2;

  EvalReport report = lambda_sweep(dataset, method, grid, crc_cfg, spec, opts);
  report.config = std::move(cfg);
  for (const SweepPoint& p : report.sweep) {
    std::printf("lambda %-10s %8.4f +/- %.4f\n", fmt(p.lambda).c_str(), p.mean, p.std_dev);
  }
  if (report.selected_lambda) {
    std::printf("selected lambda: %s (mean %.4f)\n", fmt(*report.selected_lambda).c_str(),
                report.mean);
  }
  maybe_write(report, o);
  return 0;
}

int run_bench(const CommonOpts& o) {
  std::map<std::string, std::string> cfg;
  echo_common(o, "bench", cfg);
  cfg["methods"] = o.methods;
  cfg["threads_forced"] = "1";
  std::vector<SampleSet> dataset = resolve_dataset(o, cfg);

  std::vector<Method> methods;
  for (const std::string& name : split_list(o.methods)) {
    auto m = parse_method(name);
    if (!m) throw UsageError("unknown method '" + name + "' in --methods");
    methods.push_back(*m);
  }
  if (methods.empty()) throw UsageError("--methods must list at least one method");

  SplitSpec spec{o.train, o.repeats, o.seed};
  CrcConfig crc_cfg;
  crc_cfg.lambda1 = o.lambda1;
  crc_cfg.lambda2 = o.lambda2;

  json rows = json::array();
  std::string csv = "method,mean_seconds,count,accuracy_mean\n";
  for (Method m : methods) {
    ProtocolOptions opts;
    opts.threads = 1;  // timing runs serially by design
    if (m == Method::kLogekCrc) opts.beta = resolve_beta(o.beta, dataset, cfg);
    EvalReport rep = run_protocol(dataset, m, crc_cfg, spec, opts);
    std::printf("%-10s %10.3f ms/query %8lld queries (accuracy %.4f)\n",
                rep.method.c_str(), rep.timing.mean_seconds * 1e3,
                static_cast<long long>(rep.timing.count), rep.mean);
    rows.push_back({{"method", rep.method},
                    {"mean_seconds", rep.timing.mean_seconds},
                    {"count", rep.timing.count},
                    {"accuracy_mean", rep.mean}});
    csv += rep.method + "," + fmt(rep.timing.mean_seconds) + "," +
           std::to_string(rep.timing.count) + "," + fmt(rep.mean) + "\n";
  }

  if (!o.output.empty()) {
    std::ofstream f(o.output, std::ios::binary);
    if (!f) throw IoError("cannot write report to " + o.output);
    if (o.format == "csv") {
      f << csv;
    } else {
      json j{{"schema_version", 1}, {"command", "bench"}, {"config", cfg}, {"methods", rows}};
      f << j.dump(2) << "\n";
    }
    f.flush();
    if (!f) throw IoError("cannot write report to " + o.output);
  }
  return 0;
}

bool flag_present(const std::vector<std::string>& args, const std::string& flag) {
  for (const std::string& a : args) {
    if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
  }
  return false;
}

// CLI11 consults the config file before the environment, which would invert
// the documented flags > env > file precedence; env values are injected as
// synthetic command-line flags instead (skipped when the flag is explicit).
std::vector<std::string> inject_env(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::string sub;
  for (std::size_t i = 0; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (a == "--config") {
      ++i;  // skip the config path value
      continue;
    }
    if (!a.empty() && a[0] != '-') {
      sub = a;
      break;
    }
  }

  if (const char* v = std::getenv("SPDCRC_CONFIG"); v && !flag_present(args, "--config")) {
    args.insert(args.begin(), "--config=" + std::string(v));
  }

  std::vector<std::pair<const char*, const char*>> mapping;
  if (sub == "describe") {
    mapping = {{"SPDCRC_OUTPUT", "--output"}};
  } else if (sub == "eval" || sub == "sweep" || sub == "bench") {
    mapping = {{"SPDCRC_SEED", "--seed"},       {"SPDCRC_OUTPUT", "--output"},
               {"SPDCRC_FORMAT", "--format"},   {"SPDCRC_THREADS", "--threads"},
               {"SPDCRC_LAMBDA1", "--lambda1"}, {"SPDCRC_LAMBDA2", "--lambda2"},
               {"SPDCRC_BETA", "--beta"}};
  }
  for (const auto& [env, flag] : mapping) {
    if (const char* v = std::getenv(env); v && !flag_present(args, flag)) {
      args.push_back(std::string(flag) + "=" + v);
    }
  }
  return args;
}

void add_dataset_options(CLI::App* cmd, CommonOpts& o) {
  auto* in = cmd->add_option("--input", o.input, "Dataset manifest (JSON)");
  auto* syn = cmd->add_option(
      "--synthetic", o.synthetic,
      "'default' or key=value list (classes,sets,samples,dim,separation,spread,base,seed)");
  in->excludes(syn);
  syn->excludes(in);
}

void add_protocol_options(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--lambda1", o.lambda1, "Tangent-space regularizer")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--lambda2", o.lambda2, "Kernel-space regularizer")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--beta", o.beta, "Kernel bandwidth: 'median' or a positive value");
  cmd->add_option("--seed", o.seed, "Run seed (splits and synthetic data)");
  cmd->add_option("--repeats", o.repeats, "Number of random splits")->check(CLI::PositiveNumber);
  cmd->add_option("--train", o.train, "Gallery sets per class")->check(CLI::PositiveNumber);
  cmd->add_option("--threads", o.threads, "Worker threads (0 = all cores)");
  cmd->add_option("--output", o.output, "Report file path");
  cmd->add_option("--format", o.format, "Report format")
      ->check(CLI::IsMember({"json", "csv"}));
  cmd->add_flag("--error-json", o.error_json, "Emit machine-readable error JSON on stdout");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Image-set classification with SPD covariance descriptors and "
               "collaborative representation"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Config file (key=value; sections named after subcommands)");

  DescribeOpts describe_opts;
  CLI::App* describe = app.add_subcommand("describe", "Write per-set covariance descriptors");
  describe->add_option("--input", describe_opts.input, "Dataset manifest (JSON)")->required();
  describe->add_option("--output", describe_opts.output, "Output directory")->required();
  describe->add_flag("--error-json", describe_opts.error_json,
                     "Emit machine-readable error JSON on stdout");

  CommonOpts eval_opts;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Run the repeated-split protocol");
  add_dataset_options(eval_cmd, eval_opts);
  eval_cmd->add_option("--method", eval_opts.method, "Classifier")
      ->required()
      ->check(CLI::IsMember({"log_crc", "logek_crc", "crc", "spd_crc"}));
  add_protocol_options(eval_cmd, eval_opts);

  CommonOpts sweep_opts;
  CLI::App* sweep_cmd = app.add_subcommand("sweep", "Sweep the regularizer grid");
  add_dataset_options(sweep_cmd, sweep_opts);
  sweep_cmd->add_option("--method", sweep_opts.method, "Classifier")
      ->required()
      ->check(CLI::IsMember({"log_crc", "logek_crc", "crc", "spd_crc"}));
  sweep_cmd->add_option("--grid", sweep_opts.grid, "Comma-separated lambda values");
  add_protocol_options(sweep_cmd, sweep_opts);

  CommonOpts bench_opts;
  bench_opts.repeats = 1;
  CLI::App* bench_cmd = app.add_subcommand("bench", "Per-query classify-phase timing");
  add_dataset_options(bench_cmd, bench_opts);
  bench_cmd->add_option("--methods", bench_opts.methods, "Comma-separated method list");
  add_protocol_options(bench_cmd, bench_opts);

  try {
    std::vector<std::string> args = inject_env(argc, argv);
    std::vector<const char*> argv2;
    argv2.push_back(argv[0]);
    for (const std::string& a : args) argv2.push_back(a.c_str());
    app.parse(static_cast<int>(argv2.size()), argv2.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  bool error_json = false;
  try {
    if (app.got_subcommand(describe)) {
      error_json = describe_opts.error_json;
      return run_describe(describe_opts);
    }
    if (app.got_subcommand(eval_cmd)) {
      error_json = eval_opts.error_json;
      return run_eval(eval_opts);
    }
    if (app.got_subcommand(sweep_cmd)) {
      error_json = sweep_opts.error_json;
      return run_sweep(sweep_opts);
    }
    if (app.got_subcommand(bench_cmd)) {
      error_json = bench_opts.error_json;
      return run_bench(bench_opts);
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    if (error_json) {
      std::cout << json{{"error", {{"kind", error_kind(e)}, {"message", e.what()}}}}.dump()
                << "\n";
    }
    return 1;
  }
  return 0;
}
