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

#ifndef BOWRNN_KERNELS_HPP
#define BOWRNN_KERNELS_HPP

#include "bowrnn/featmap.hpp"

#include <concepts>
#include <fstream>
#include <vector>

namespace bowrnn {

/// Exact scalar kernel k(a, b). The chi2 term is 0 when a + b = 0.
inline double scalar_kernel(KernelKind kind, double a, double b) {
  require(a >= 0.0 && b >= 0.0, "negative histogram entry");
  switch (kind) {
    case KernelKind::hellinger: return std::sqrt(a * b);
    case KernelKind::chi2: return (a + b) > 0.0 ? 2.0 * a * b / (a + b) : 0.0;
    case KernelKind::intersection: return std::min(a, b);
  }
  return 0.0;
}

inline double additive_kernel(KernelKind kind, const Eigen::Ref<const Vector>& h1,
                              const Eigen::Ref<const Vector>& h2) {
  require(h1.size() == h2.size(), "histogram dimension mismatch");
  double sum = 0.0;
  for (Eigen::Index m = 0; m < h1.size(); ++m) sum += scalar_kernel(kind, h1[m], h2[m]);
  return sum;
}

/// D(h1, h2) = 1/2 sum (h1 - h2)^2 / (h1 + h2), 0/0 terms dropped.
inline double chi2_distance(const Eigen::Ref<const Vector>& h1,
                            const Eigen::Ref<const Vector>& h2) {
  require(h1.size() == h2.size(), "histogram dimension mismatch");
  double sum = 0.0;
  for (Eigen::Index m = 0; m < h1.size(); ++m) {
    require(h1[m] >= 0.0 && h2[m] >= 0.0, "negative histogram entry");
    const double s = h1[m] + h2[m];
    if (s > 0.0) {
      const double d = h1[m] - h2[m];
      sum += d * d / s;
    }
  }
  return 0.5 * sum;
}

struct MultichannelKernelParams {
  /// A_c: mean chi2 distance between training histograms of channel c.
  Vector channel_means;

  Eigen::Index num_channels() const { return channel_means.size(); }
};

/// Per-channel histograms of one sample.
using ChannelHistograms = std::vector<Vector>;

/// exp(-(1/C) sum_c D(a_c, b_c) / A_c).
inline double multichannel_rbf_chi2(const ChannelHistograms& a, const ChannelHistograms& b,
                                    const MultichannelKernelParams& params) {
  const auto channels = static_cast<std::size_t>(params.num_channels());
  require(channels >= 1 && a.size() == channels && b.size() == channels,
          "channel count mismatch");
  double sum = 0.0;
  for (std::size_t c = 0; c < channels; ++c) {
    const double A = params.channel_means[static_cast<Eigen::Index>(c)];
    require(A > 0.0, "channel mean distance must be positive");
    sum += chi2_distance(a[c], b[c]) / A;
  }
  return std::exp(-sum / static_cast<double>(channels));
}

/// per_channel[c][i] is histogram i of channel c.
inline MultichannelKernelParams estimate_channel_means(
    const std::vector<std::vector<Vector>>& per_channel) {
  require(!per_channel.empty(), "no channels");
  MultichannelKernelParams params;
  params.channel_means.resize(static_cast<Eigen::Index>(per_channel.size()));
  for (std::size_t c = 0; c < per_channel.size(); ++c) {
    const auto& hs = per_channel[c];
    require(hs.size() >= 2, "need at least 2 histograms per channel");
    double sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < hs.size(); ++i)
      for (std::size_t j = i + 1; j < hs.size(); ++j, ++pairs) sum += chi2_distance(hs[i], hs[j]);
    const double mean = sum / static_cast<double>(pairs);
    require(mean > 0.0, "degenerate channel");
    params.channel_means[static_cast<Eigen::Index>(c)] = mean;
  }
  return params;
}

/// G_ij = kernel(x_i, x_j), each pair evaluated once and mirrored.
template <class Item, std::invocable<const Item&, const Item&> KernelFn>
Matrix gram_matrix(const std::vector<Item>& items, KernelFn&& kernel) {
  require(!items.empty(), "gram matrix of empty set");
  const auto n = static_cast<Eigen::Index>(items.size());
  Matrix g(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      const double v = kernel(items[static_cast<std::size_t>(i)], items[static_cast<std::size_t>(j)]);
      g(i, j) = v;
      g(j, i) = v;
    }
  }
  return g;
}

inline Matrix gram_matrix(KernelKind kind, const std::vector<Vector>& histograms) {
  return gram_matrix(histograms, [kind](const Vector& a, const Vector& b) {
    return additive_kernel(kind, a, b);
  });
}

inline Matrix gram_matrix(const std::vector<ChannelHistograms>& samples,
                          const MultichannelKernelParams& params) {
  return gram_matrix(samples, [&params](const ChannelHistograms& a, const ChannelHistograms& b) {
    return multichannel_rbf_chi2(a, b, params);
  });
}

inline void save_gram(std::ostream& out, const Matrix& g, const std::string& kind) {
  out << "GRAM1 " << g.rows() << ' ' << kind << '\n';
  for (Eigen::Index i = 0; i < g.rows(); ++i) write_row(out, g.row(i).transpose());
}

inline Matrix load_gram(std::istream& in, std::string* kind = nullptr) {
  std::string line, magic, k;
  require(static_cast<bool>(std::getline(in, line)), "gram: empty file");
  std::istringstream header(line);
  long long n = 0;
  require(static_cast<bool>(header >> magic >> n >> k) && magic == "GRAM1" && n >= 1,
          "gram: bad header");
  Matrix g(n, n);
  for (long long i = 0; i < n; ++i) g.row(i) = read_row(in, n, "gram row").transpose();
  if (kind) *kind = k;
  return g;
}

/// Two-class kernel expansion: sum_i alpha_i y_i K(h_i, h) + bias.
struct SvmExpansion {
  std::vector<Vector> support;
  Vector alpha;
  std::vector<int> labels;  // each -1 or +1
  double bias = 0.0;
  KernelKind kernel = KernelKind::hellinger;

  void validate() const {
    require(!support.empty(), "expansion needs at least one support vector");
    require(alpha.size() == static_cast<Eigen::Index>(support.size()) &&
                labels.size() == support.size(),
            "expansion size mismatch");
    for (int y : labels) require(y == -1 || y == 1, "expansion labels must be +-1");
  }
};

template <class KernelFn>
double svm_decision(const SvmExpansion& exp, const Eigen::Ref<const Vector>& h, KernelFn&& kernel) {
  exp.validate();
  double sum = exp.bias;
  for (std::size_t i = 0; i < exp.support.size(); ++i) {
    require(exp.support[i].size() == h.size(), "histogram dimension mismatch");
    sum += exp.alpha[static_cast<Eigen::Index>(i)] * exp.labels[i] * kernel(exp.support[i], h);
  }
  return sum;
}

inline double svm_decision(const SvmExpansion& exp, const Eigen::Ref<const Vector>& h) {
  return svm_decision(exp, h, [&exp](const Vector& a, const Eigen::Ref<const Vector>& b) {
    return additive_kernel(exp.kernel, a, b);
  });
}

/// w = sum_i alpha_i y_i psi(h_i).
inline Vector mapped_weights(const SvmExpansion& exp, const FeatureMapSpec& spec) {
  exp.validate();
  Vector w = Vector::Zero(exp.support.front().size() * spec.block_size());
  for (std::size_t i = 0; i < exp.support.size(); ++i)
    w += exp.alpha[static_cast<Eigen::Index>(i)] * exp.labels[i] * map_histogram(spec, exp.support[i]);
  return w;
}

/// <w, psi(h)> + bias.
inline double svm_decision_mapped(const Eigen::Ref<const Vector>& w, double bias,
                                  const FeatureMapSpec& spec, const Eigen::Ref<const Vector>& h) {
  require(w.size() == h.size() * spec.block_size(), "histogram dimension mismatch");
  return w.dot(map_histogram(spec, h)) + bias;
}

}  // namespace bowrnn

#endif  // BOWRNN_KERNELS_HPP
