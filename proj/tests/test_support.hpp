#pragma once

#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "spdcrc/rng.hpp"
#include "spdcrc/spd.hpp"

namespace testsup {

using spdcrc::Index;
using spdcrc::Matrix;
using spdcrc::Vector;

inline Matrix random_orthogonal(spdcrc::SplitMix64& rng, Index d) {
  Matrix a(d, d);
  for (Index i = 0; i < d; ++i) {
    for (Index j = 0; j < d; ++j) a(i, j) = rng.normal();
  }
  Eigen::HouseholderQR<Matrix> qr(a);
  return qr.householderQ() * Matrix::Identity(d, d);
}

inline Matrix random_symmetric(spdcrc::SplitMix64& rng, Index d) {
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

/// Random SPD matrix with eigenvalues log-spread across exactly the requested
/// condition number (largest pinned to sqrt(cond), smallest to 1/sqrt(cond)).
inline spdcrc::SpdMatrix random_spd(spdcrc::SplitMix64& rng, Index d, double cond) {
  double hi = std::sqrt(cond);
  double lo = 1.0 / hi;
  Vector evals(d);
  evals[0] = lo;
  if (d > 1) evals[d - 1] = hi;
  for (Index i = 1; i + 1 < d; ++i) {
    evals[i] = std::exp(std::log(lo) + rng.uniform01() * (std::log(hi) - std::log(lo)));
  }
  Matrix q = random_orthogonal(rng, d);
  Matrix m = q * evals.asDiagonal() * q.transpose();
  return spdcrc::make_spd(spdcrc::SymMatrix(m));
}

inline double rel_err(const Matrix& got, const Matrix& want) {
  double denom = want.norm();
  return denom == 0.0 ? (got - want).norm() : (got - want).norm() / denom;
}

inline double rel_err(const Vector& got, const Vector& want) {
  double denom = want.norm();
  return denom == 0.0 ? (got - want).norm() : (got - want).norm() / denom;
}

/// Conjugate gradients on the normal equations (A^T A + lambda I) w = A^T y.
/// Independent of ridge_solve: no factorization, pure iteration.
inline Vector cg_ridge_oracle(const Matrix& a, const Vector& y, double lambda,
                              int max_iters = 10000, double tol = 1e-14) {
  const Index n = a.cols();
  Vector b = a.transpose() * y;
  Vector w = Vector::Zero(n);
  Vector r = b;
  Vector p = r;
  double rs = r.dot(r);
  double stop = tol * std::sqrt(b.dot(b));
  for (int it = 0; it < max_iters && std::sqrt(rs) > stop; ++it) {
    Vector ap = a.transpose() * (a * p) + lambda * p;
    double alpha = rs / p.dot(ap);
    w += alpha * p;
    r -= alpha * ap;
    double rs_next = r.dot(r);
    p = r + (rs_next / rs) * p;
    rs = rs_next;
  }
  return w;
}

/// Nearest-class-mean in the log domain; independent label oracle.
inline int nearest_log_mean(const std::vector<spdcrc::SpdMatrix>& gallery,
                            const std::vector<int>& labels, const spdcrc::SpdMatrix& query) {
  std::map<int, Matrix> sums;
  std::map<int, int> counts;
  for (std::size_t i = 0; i < gallery.size(); ++i) {
    Matrix log_m = spdcrc::matrix_log(gallery[i]).mat();
    auto [it, fresh] = sums.try_emplace(labels[i], log_m);
    if (!fresh) it->second += log_m;
    counts[labels[i]] += 1;
  }
  Matrix query_log = spdcrc::matrix_log(query).mat();
  int best_label = -1;
  double best_dist = 0.0;
  for (const auto& [label, sum] : sums) {
    double dist = (query_log - sum / counts[label]).norm();
    if (best_label == -1 || dist < best_dist) {
      best_label = label;
      best_dist = dist;
    }
  }
  return best_label;
}

inline std::filesystem::path fixture_dir() { return std::filesystem::path(SPDCRC_FIXTURE_DIR); }

/// Unique scratch directory, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    auto base = std::filesystem::temp_directory_path();
    path_ = base / ("spdcrc_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') out += "'\\''";
    else out += c;
  }
  out += "'";
  return out;
}

struct CliResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream os;
  os << f.rdbuf();
  return std::move(os).str();
}

/// Runs the CLI binary with the given arguments and extra environment
/// variables, capturing exit code, stdout, and stderr.
inline CliResult run_cli(const std::vector<std::string>& args,
                         const std::vector<std::pair<std::string, std::string>>& env = {}) {
  TempDir scratch;
  auto out_path = scratch.path() / "out";
  auto err_path = scratch.path() / "err";
  std::string cmd = "env";
  for (const auto& [k, v] : env) cmd += " " + shell_quote(k + "=" + v);
  cmd += " " + shell_quote(SPDCRC_CLI_PATH);
  for (const std::string& a : args) cmd += " " + shell_quote(a);
  cmd += " > " + shell_quote(out_path.string()) + " 2> " + shell_quote(err_path.string());
  int rc = std::system(cmd.c_str());
  CliResult r;
  r.exit_code = (rc >= 0 && WIFEXITED(rc)) ? WEXITSTATUS(rc) : -1;
  r.out = slurp(out_path);
  r.err = slurp(err_path);
  return r;
}

}  // namespace testsup
