#include <doctest.h>

#include <fstream>
#include <json.hpp>
#include <string>
#include <vector>

#include "spdcrc/data.hpp"
#include "test_support.hpp"

using namespace spdcrc;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string fixture_manifest() {
  return (testsup::fixture_dir() / "twoclass" / "manifest.json").string();
}

// Small synthetic spec string shared by the fast CLI runs.
const char* kSmallSpec = "classes=3,sets=4,samples=20,dim=4";

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("describe writes per-set descriptors and a summary") {
  testsup::TempDir tmp;
  fs::path out = tmp.path() / "descs";
  auto r = testsup::run_cli({"describe", "--input", fixture_manifest(), "--output", out.string()});
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("wrote 4 descriptors") != std::string::npos);

  for (const char* name : {"desc_0_0.txt", "desc_0_1.txt", "desc_1_0.txt", "desc_1_1.txt"}) {
    fs::path p = out / name;
    REQUIRE(fs::exists(p));
    Matrix m = load_matrix_file(p);
    CHECK(m.rows() == 400);
    CHECK(m.cols() == 400);
  }

  std::ifstream f(out / "summary.json");
  REQUIRE(f.good());
  json summary = json::parse(f);
  REQUIRE(summary.is_array());
  REQUIRE(summary.size() == 4);
  CHECK(summary[0]["set_id"] == "0_0");
  CHECK(summary[0]["label"] == 0);
  CHECK(summary[3]["label"] == 1);
  CHECK(summary[0]["dim"] == 400);
  CHECK(summary[0]["samples"] == 5);
  CHECK(summary[0]["eig_min"].get<double>() > 0.0);

  // Rerunning into a fresh directory reproduces the files byte for byte.
  fs::path out2 = tmp.path() / "descs2";
  auto r2 = testsup::run_cli({"describe", "--input", fixture_manifest(), "--output", out2.string()});
  CHECK(r2.exit_code == 0);
  CHECK(testsup::slurp(out / "desc_0_0.txt") == testsup::slurp(out2 / "desc_0_0.txt"));
  CHECK(testsup::slurp(out / "summary.json") == testsup::slurp(out2 / "summary.json"));
}

TEST_CASE("describe surfaces a missing manifest as a runtime error") {
  auto r = testsup::run_cli({"describe", "--input", "/nonexistent/manifest.json", "--output",
                             "/tmp/unused_spdcrc_out"});
  CHECK(r.exit_code == 1);
  CHECK(r.err.find("error:") != std::string::npos);
}

TEST_CASE("eval on the default synthetic spec reaches the accuracy bar") {
  testsup::TempDir tmp;
  fs::path report_path = tmp.path() / "report.json";
  auto r = testsup::run_cli({"eval", "--method", "log_crc", "--synthetic", "default", "--seed",
                             "7", "--output", report_path.string()});
  REQUIRE(r.exit_code == 0);
  CHECK(r.out.find("log_crc") != std::string::npos);
  CHECK(r.out.find("per-query classify time") != std::string::npos);

  EvalReport rep = read_report(report_path);
  CHECK(rep.method == "log_crc");
  CHECK(rep.per_repeat_accuracy.size() == 10);
  CHECK(rep.mean >= 0.95);
  CHECK(rep.timing.count > 0);
  CHECK(rep.config.at("command") == "eval");
  CHECK(rep.config.at("seed") == "7");
  CHECK(rep.config.at("synthetic.classes") == "4");
}

TEST_CASE("eval rejects bad invocations with usage exits") {
  auto unknown = testsup::run_cli({"eval", "--method", "banana", "--synthetic", kSmallSpec});
  CHECK(unknown.exit_code == 2);

  auto missing_method = testsup::run_cli({"eval", "--synthetic", kSmallSpec});
  CHECK(missing_method.exit_code == 2);

  auto no_dataset = testsup::run_cli({"eval", "--method", "log_crc"});
  CHECK(no_dataset.exit_code == 2);

  auto both = testsup::run_cli({"eval", "--method", "log_crc", "--input", "x.json",
                                "--synthetic", kSmallSpec});
  CHECK(both.exit_code == 2);

  auto bad_spec = testsup::run_cli({"eval", "--method", "log_crc", "--synthetic", "bogus=1"});
  CHECK(bad_spec.exit_code == 2);

  auto no_sub = testsup::run_cli({});
  CHECK(no_sub.exit_code == 2);
}

TEST_CASE("sweep prints the curve and records the selection") {
  testsup::TempDir tmp;
  fs::path report_path = tmp.path() / "sweep.json";
  auto r = testsup::run_cli({"sweep", "--method", "log_crc", "--synthetic", kSmallSpec,
                             "--repeats", "3", "--train", "2", "--output", report_path.string()});
  REQUIRE(r.exit_code == 0);
  CHECK(r.out.find("selected lambda:") != std::string::npos);

  EvalReport rep = read_report(report_path);
  CHECK(rep.sweep.size() == 5);  // default grid
  REQUIRE(rep.selected_lambda.has_value());
  CHECK(rep.config.at("grid") == "0.01,0.05,0.1,0.5,1");

  int lambda_rows = 0;
  std::size_t at = 0;
  while ((at = r.out.find("lambda ", at)) != std::string::npos) {
    ++lambda_rows;
    at += 7;
  }
  CHECK(lambda_rows == 5);

  auto empty = testsup::run_cli({"sweep", "--method", "log_crc", "--synthetic", kSmallSpec,
                                 "--grid", ","});
  CHECK(empty.exit_code == 2);
  auto negative = testsup::run_cli({"sweep", "--method", "log_crc", "--synthetic", kSmallSpec,
                                    "--grid", "-0.5"});
  CHECK(negative.exit_code == 2);
}

TEST_CASE("bench reports per-query times for each method") {
  testsup::TempDir tmp;
  fs::path out = tmp.path() / "bench.csv";
  auto r = testsup::run_cli({"bench", "--synthetic", kSmallSpec, "--train", "2", "--format",
                             "csv", "--output", out.string()});
  REQUIRE(r.exit_code == 0);
  CHECK(r.out.find("log_crc") != std::string::npos);
  CHECK(r.out.find("logek_crc") != std::string::npos);
  CHECK(r.out.find("ms/query") != std::string::npos);

  std::string csv = testsup::slurp(out);
  CHECK(csv.find("method,mean_seconds,count,accuracy_mean\n") == 0);
  CHECK(csv.find("\nlog_crc,") != std::string::npos);
  CHECK(csv.find("\nlogek_crc,") != std::string::npos);

  auto bad = testsup::run_cli({"bench", "--synthetic", kSmallSpec, "--methods", "nope"});
  CHECK(bad.exit_code == 2);
}

TEST_CASE("flags beat environment variables which beat the config file") {
  testsup::TempDir tmp;
  fs::path cfg_path = tmp.path() / "spdcrc.ini";
  std::ofstream(cfg_path) << "[eval]\nlambda1=0.125\n";
  fs::path report_path = tmp.path() / "r.json";
  std::vector<std::string> base{"eval",        "--method", "log_crc", "--synthetic", kSmallSpec,
                                "--repeats",   "1",        "--train", "2",           "--output",
                                report_path.string()};

  auto lambda_of = [&](const testsup::CliResult& r) {
    REQUIRE(r.exit_code == 0);
    return read_report(report_path).config.at("lambda1");
  };

  // Default.
  CHECK(lambda_of(testsup::run_cli(base)) == "0.01");

  // Config file only.
  CHECK(lambda_of(testsup::run_cli(base, {{"SPDCRC_CONFIG", cfg_path.string()}})) == "0.125");

  // Environment beats the config file.
  CHECK(lambda_of(testsup::run_cli(base, {{"SPDCRC_CONFIG", cfg_path.string()},
                                          {"SPDCRC_LAMBDA1", "0.5"}})) == "0.5");

  // Explicit flag beats both.
  std::vector<std::string> with_flag = base;
  with_flag.push_back("--lambda1");
  with_flag.push_back("0.25");
  CHECK(lambda_of(testsup::run_cli(with_flag, {{"SPDCRC_CONFIG", cfg_path.string()},
                                               {"SPDCRC_LAMBDA1", "0.5"}})) == "0.25");

  // Environment still beats the file when --config is a space-separated flag.
  std::vector<std::string> with_config{"--config", cfg_path.string()};
  with_config.insert(with_config.end(), base.begin(), base.end());
  CHECK(lambda_of(testsup::run_cli(with_config, {{"SPDCRC_LAMBDA1", "0.5"}})) == "0.5");
}

TEST_CASE("error-json emits a machine-readable failure record") {
  auto r = testsup::run_cli({"eval", "--method", "log_crc", "--input", "/nonexistent/m.json",
                             "--error-json"});
  CHECK(r.exit_code == 1);
  json j = json::parse(r.out);
  CHECK(j["error"]["kind"] == "IoError");
  CHECK(j["error"]["message"].get<std::string>().find("/nonexistent/m.json") !=
        std::string::npos);
}

TEST_CASE("reports are byte-identical across thread counts modulo timing") {
  testsup::TempDir tmp;
  fs::path a = tmp.path() / "a.json";
  fs::path b = tmp.path() / "b.json";
  std::vector<std::string> common{"eval",    "--method", "logek_crc", "--synthetic", kSmallSpec,
                                  "--repeats", "3",      "--train",   "2"};
  std::vector<std::string> run1 = common;
  run1.insert(run1.end(), {"--threads", "1", "--output", a.string()});
  std::vector<std::string> run8 = common;
  run8.insert(run8.end(), {"--threads", "8", "--output", b.string()});
  REQUIRE(testsup::run_cli(run1).exit_code == 0);
  REQUIRE(testsup::run_cli(run8).exit_code == 0);

  json ja = json::parse(testsup::slurp(a));
  json jb = json::parse(testsup::slurp(b));
  ja.erase("timing");
  jb.erase("timing");
  CHECK(ja.dump() == jb.dump());
}

}  // TEST_SUITE
