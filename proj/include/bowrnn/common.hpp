// Copyright 2026 The bowrnn Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef BOWRNN_COMMON_HPP
#define BOWRNN_COMMON_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <istream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>

namespace bowrnn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
// Frames are stored one per row, contiguous, matching the on-disk layout.
using FrameMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw Error(message);
}

// Literal messages stay unconverted until the check fails, so passing checks
// never allocate inside per-frame loops.
inline void require(bool condition, const char* message) {
  if (!condition) throw Error(message);
}

inline bool all_finite(const Eigen::Ref<const Matrix>& m) {
  return m.allFinite();
}

/// Receives non-fatal diagnostics (constant dimensions, single-class data, ...).
/// Defaults to stderr; tests swap it out to capture messages.
inline std::function<void(const std::string&)>& warning_handler() {
  static std::function<void(const std::string&)> handler =
      [](const std::string& msg) { std::cerr << "warning: " << msg << '\n'; };
  return handler;
}

inline void warn(const std::string& message) {
  if (warning_handler()) warning_handler()(message);
}

/// In-place softmax with max-logit subtraction. Entries equal to -inf map to 0.
inline void softmax_inplace(Eigen::Ref<Vector> z) {
  const double top = z.maxCoeff();
  require(std::isfinite(top), "softmax: no finite logit");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    z[i] = std::exp(z[i] - top);
    sum += z[i];
  }
  z /= sum;
}

inline Vector softmax(Vector z) {
  softmax_inplace(z);
  return z;
}

/// Index of the largest entry; ties go to the lowest index.
inline Eigen::Index argmax(const Eigen::Ref<const Vector>& v) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

/// Round-trip text form of a double (17 significant digits).
inline std::string format_double(double value) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

inline void write_row(std::ostream& out, const Eigen::Ref<const Vector>& row) {
  for (Eigen::Index i = 0; i < row.size(); ++i) {
    if (i) out << ' ';
    out << format_double(row[i]);
  }
  out << '\n';
}

inline double parse_double(const std::string& token) {
  char* end = nullptr;
  const double v = std::strtod(token.c_str(), &end);
  require(end != token.c_str() && *end == '\0',
          "malformed number '" + token + "'");
  return v;
}

/// Reads exactly n whitespace-separated doubles from one text line.
inline Vector read_row(std::istream& in, Eigen::Index n,
                       const std::string& what) {
  std::string line;
  require(static_cast<bool>(std::getline(in, line)),
          what + ": unexpected end of file");
  std::istringstream ls(line);
  Vector row(n);
  std::string tok;
  for (Eigen::Index i = 0; i < n; ++i) {
    require(static_cast<bool>(ls >> tok),
            what + ": expected " + std::to_string(n) + " values");
    row[i] = parse_double(tok);
  }
  require(!(ls >> tok), what + ": trailing values on line");
  return row;
}

/// Worker count for parallel loops: hardware concurrency capped by
/// BOWRNN_THREADS when set.
inline int worker_count() {
  int n = static_cast<int>(std::thread::hardware_concurrency());
  if (n < 1) n = 1;
  if (const char* env = std::getenv("BOWRNN_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1) n = std::min(n, cap);
  }
  return n;
}

/// Uniform double in [0, 1) from the top 53 bits of a 64-bit engine. Used
/// instead of std::uniform_real_distribution so streams are identical
/// across standard library implementations.
template <class Engine>
double uniform01(Engine& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Standard normal deviate via Box-Muller on uniform01.
template <class Engine>
double standard_normal(Engine& rng) {
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

/// Uniform integer in [0, n) by rejection (no modulo bias).
template <class Engine>
std::uint64_t uniform_index(Engine& rng, std::uint64_t n) {
  const std::uint64_t limit =
      std::numeric_limits<std::uint64_t>::max() -
      std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t r;
  do {
    r = rng();
  } while (r >= limit);
  return r % n;
}

}  // namespace bowrnn

#endif  // BOWRNN_COMMON_HPP
