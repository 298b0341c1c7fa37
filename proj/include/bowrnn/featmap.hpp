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

// Explicit feature maps for additive homogeneous kernels.
//
// Hellinger's kernel uses its exact map sqrt(x). Chi-squared and histogram
// intersection use the sampled spectral map with 2n+1 outputs per scalar:
//
//   psi_0(x)    = sqrt(kappa(0) x L)
//   psi_2j-1(x) = sqrt(2 kappa(jL) x L) cos(jL log x)
//   psi_2j(x)   = sqrt(2 kappa(jL) x L) sin(jL log x),   j = 1..n
//
// The map of 0 is the zero vector and its Jacobian block is zero.

#ifndef BOWRNN_FEATMAP_HPP
#define BOWRNN_FEATMAP_HPP

#include "bowrnn/common.hpp"

#include <string>

namespace bowrnn {

enum class KernelKind { hellinger, chi2, intersection };

inline std::string to_string(KernelKind k) {
  switch (k) {
    case KernelKind::hellinger: return "hellinger";
    case KernelKind::chi2: return "chi2";
    case KernelKind::intersection: return "intersection";
  }
  return "?";
}

inline KernelKind parse_kernel_kind(const std::string& s) {
  if (s == "hellinger") return KernelKind::hellinger;
  if (s == "chi2") return KernelKind::chi2;
  if (s == "intersection") return KernelKind::intersection;
  throw Error("unknown kernel '" + s + "'");
}

struct FeatureMapSpec {
  KernelKind kernel = KernelKind::chi2;
  int samples = 2;      // n
  double period = 0.5;  // L

  /// Outputs per histogram entry.
  int block_size() const { return kernel == KernelKind::hellinger ? 1 : 2 * samples + 1; }

  void validate() const {
    require(samples >= 0, "feature map: samples must be >= 0");
    require(period > 0.0 && std::isfinite(period), "feature map: period must be positive");
  }

  friend bool operator==(const FeatureMapSpec&, const FeatureMapSpec&) = default;
};

/// Spectral density of the scalar kernel.
inline double kappa(KernelKind kernel, double lambda) {
  require(std::isfinite(lambda), "kappa: non-finite lambda");
  switch (kernel) {
    case KernelKind::chi2: return 1.0 / std::cosh(M_PI * lambda);
    case KernelKind::intersection: return 2.0 / (M_PI * (1.0 + 4.0 * lambda * lambda));
    case KernelKind::hellinger: break;
  }
  throw Error("no spectral form needed");
}

/// Writes psi(x) into out (size block_size()).
inline void map_scalar_into(const FeatureMapSpec& spec, double x, double* out) {
  require(x >= 0.0, "negative histogram entry");
  if (spec.kernel == KernelKind::hellinger) {
    out[0] = std::sqrt(x);
    return;
  }
  const int width = spec.block_size();
  if (x == 0.0) {
    std::fill(out, out + width, 0.0);
    return;
  }
  const double L = spec.period;
  const double logx = std::log(x);
  out[0] = std::sqrt(kappa(spec.kernel, 0.0) * x * L);
  for (int j = 1; j <= spec.samples; ++j) {
    const double lambda = j * L;
    const double amp = std::sqrt(2.0 * kappa(spec.kernel, lambda) * x * L);
    out[2 * j - 1] = amp * std::cos(lambda * logx);
    out[2 * j] = amp * std::sin(lambda * logx);
  }
}

inline Vector map_scalar(const FeatureMapSpec& spec, double x) {
  Vector out(spec.block_size());
  map_scalar_into(spec, x, out.data());
  return out;
}

/// Entry-major concatenation of map_scalar over the histogram.
inline Vector map_histogram(const FeatureMapSpec& spec, const Eigen::Ref<const Vector>& h) {
  const int w = spec.block_size();
  Vector out(h.size() * w);
  for (Eigen::Index m = 0; m < h.size(); ++m) map_scalar_into(spec, h[m], out.data() + m * w);
  return out;
}

/// kappa(0) L / (2 psi_0(x)^2), which reduces to 1 / (2x).
inline double map_gamma(const FeatureMapSpec& spec, double x) {
  require(x > 0.0, "derivative undefined at zero");
  if (spec.kernel == KernelKind::hellinger) return 1.0 / (2.0 * x);
  const double psi0 = std::sqrt(kappa(spec.kernel, 0.0) * x * spec.period);
  return kappa(spec.kernel, 0.0) * spec.period / (2.0 * psi0 * psi0);
}

/// d psi(x) / dx given psi(x) already evaluated at x.
///
/// The cosine components carry a minus sign: d/dx cos(lambda log x) =
/// -(lambda / x) sin(lambda log x).
inline void map_derivative_from_value(const FeatureMapSpec& spec, double x,
                                      const double* psi, double* out) {
  const double g = map_gamma(spec, x);
  if (spec.kernel == KernelKind::hellinger) {
    out[0] = psi[0] * g;
    return;
  }
  const double L = spec.period;
  out[0] = psi[0] * g;
  for (int j = 1; j <= 2 * spec.samples; ++j) {
    out[j] = (j % 2 == 1) ? (psi[j] - psi[j + 1] * (j + 1) * L) * g
                          : (psi[j - 1] * j * L + psi[j]) * g;
  }
}

inline Vector map_derivative_scalar(const FeatureMapSpec& spec, double x) {
  require(x > 0.0, "derivative undefined at zero");
  const Vector psi = map_scalar(spec, x);
  Vector out(spec.block_size());
  map_derivative_from_value(spec, x, psi.data(), out.data());
  return out;
}

/// Block-diagonal Jacobian of map_histogram: column m holds d psi(h_m)/d h_m.
class MapJacobian {
 public:
  MapJacobian() = default;
  explicit MapJacobian(Matrix blocks) : blocks_(std::move(blocks)) {}

  Eigen::Index block_size() const { return blocks_.rows(); }
  Eigen::Index num_entries() const { return blocks_.cols(); }
  const Matrix& blocks() const { return blocks_; }

  /// J v, v of length M.
  Vector apply(const Eigen::Ref<const Vector>& v) const {
    require(v.size() == blocks_.cols(), "jacobian: dimension mismatch");
    Vector out(blocks_.size());
    for (Eigen::Index m = 0; m < blocks_.cols(); ++m)
      out.segment(m * block_size(), block_size()) = blocks_.col(m) * v[m];
    return out;
  }

  /// J^T u, u of length M * block_size.
  Vector apply_transpose(const Eigen::Ref<const Vector>& u) const {
    Vector out(blocks_.cols());
    apply_transpose_into(u, out);
    return out;
  }

  void apply_transpose_into(const Eigen::Ref<const Vector>& u, Eigen::Ref<Vector> out) const {
    require(u.size() == blocks_.size(), "jacobian: dimension mismatch");
    for (Eigen::Index m = 0; m < blocks_.cols(); ++m)
      out[m] = blocks_.col(m).dot(u.segment(m * block_size(), block_size()));
  }

  Matrix dense() const {
    Matrix out = Matrix::Zero(blocks_.size(), blocks_.cols());
    for (Eigen::Index m = 0; m < blocks_.cols(); ++m)
      out.block(m * block_size(), m, block_size(), 1) = blocks_.col(m);
    return out;
  }

 private:
  Matrix blocks_;
};

/// Zero entries get a zero column.
inline MapJacobian jacobian(const FeatureMapSpec& spec, const Eigen::Ref<const Vector>& h) {
  const int w = spec.block_size();
  Matrix blocks = Matrix::Zero(w, h.size());
  Vector psi(w);
  for (Eigen::Index m = 0; m < h.size(); ++m) {
    require(h[m] >= 0.0, "negative histogram entry");
    if (h[m] == 0.0) continue;
    map_scalar_into(spec, h[m], psi.data());
    map_derivative_from_value(spec, h[m], psi.data(), blocks.col(m).data());
  }
  return MapJacobian(std::move(blocks));
}

}  // namespace bowrnn

#endif  // BOWRNN_FEATMAP_HPP
