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

// Visual vocabularies: multi-restart kMeans, Gaussian posteriors over words,
// and the exact mapping between a codebook and a softmax quantization layer.

#ifndef BOWRNN_CODEBOOK_HPP
#define BOWRNN_CODEBOOK_HPP

#include "bowrnn/common.hpp"

#include <fstream>
#include <numeric>
#include <random>
#include <vector>

namespace bowrnn {

/// Softmax quantization layer: posterior = softmax(weights^T x + bias).
/// weights is D x M, one column per visual word.
struct QuantLayer {
  Matrix weights;
  Vector bias;

  Eigen::Index dim() const { return weights.rows(); }
  Eigen::Index size() const { return weights.cols(); }
};

/// M visual words in R^D plus a prior over them.
class Codebook {
 public:
  /// words: D x M, one column per word. An empty prior means uniform.
  explicit Codebook(Matrix words, Vector prior = Vector()) : words_(std::move(words)) {
    require(words_.cols() >= 1, "codebook needs at least one word");
    require(words_.rows() >= 1, "codebook words must have dimension >= 1");
    if (prior.size() == 0) {
      prior_ = Vector::Constant(words_.cols(), 1.0 / static_cast<double>(words_.cols()));
    } else {
      require(prior.size() == words_.cols(), "prior length does not match word count");
      require(prior.allFinite() && (prior.array() >= 0.0).all(),
              "prior entries must be finite and non-negative");
      require(std::abs(prior.sum() - 1.0) <= 1e-12, "prior must sum to 1");
      prior_ = std::move(prior);
    }
  }

  const Matrix& words() const { return words_; }
  const Vector& prior() const { return prior_; }
  auto word(Eigen::Index m) const { return words_.col(m); }
  Eigen::Index dim() const { return words_.rows(); }
  Eigen::Index size() const { return words_.cols(); }

 private:
  Matrix words_;
  Vector prior_;
};

struct KMeansConfig {
  int num_words = 32;
  int restarts = 8;
  int max_iterations = 100;
  double tolerance = 1e-6;  // relative SSE change
  std::uint64_t seed = 0;
};

struct KMeansResult {
  Codebook codebook;
  double sse;
  int best_restart;
  /// SSE after every assignment step, one trace per restart.
  std::vector<std::vector<double>> sse_traces;
};

namespace detail {

inline Eigen::Index count_distinct_rows(const FrameMatrix& data) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(data.rows()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  auto less = [&](Eigen::Index a, Eigen::Index b) {
    for (Eigen::Index d = 0; d < data.cols(); ++d) {
      if (data(a, d) != data(b, d)) return data(a, d) < data(b, d);
    }
    return false;
  };
  std::sort(order.begin(), order.end(), less);
  Eigen::Index distinct = order.empty() ? 0 : 1;
  for (std::size_t i = 1; i < order.size(); ++i)
    if (less(order[i - 1], order[i])) ++distinct;
  return distinct;
}

// k-means++ seeding.
template <class Engine>
Matrix seed_centers(const FrameMatrix& data, int k, Engine& rng) {
  const Eigen::Index n = data.rows();
  Matrix centers(data.cols(), k);
  Vector dist2 = Vector::Constant(n, std::numeric_limits<double>::infinity());
  Eigen::Index pick = static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::uint64_t>(n)));
  for (int c = 0; c < k; ++c) {
    centers.col(c) = data.row(pick).transpose();
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double d = (data.row(i).transpose() - centers.col(c)).squaredNorm();
      dist2[i] = std::min(dist2[i], d);
      total += dist2[i];
    }
    if (c + 1 == k) break;
    double target = uniform01(rng) * total;
    pick = -1;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (dist2[i] <= 0.0) continue;
      pick = i;
      target -= dist2[i];
      if (target < 0.0) break;
    }
    require(pick >= 0, "insufficient data");
  }
  return centers;
}

struct LloydRun {
  Matrix centers;
  double sse;
  std::vector<double> trace;
};

inline LloydRun lloyd(const FrameMatrix& data, Matrix centers,
                      const KMeansConfig& config) {
  const Eigen::Index n = data.rows();
  const Eigen::Index k = centers.cols();
  std::vector<Eigen::Index> assign(static_cast<std::size_t>(n));
  Vector dist2(n);
  LloydRun run;
  double previous = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < config.max_iterations; ++iter) {
    double sse = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (Eigen::Index c = 0; c < k; ++c) {
        const double d = (data.row(i).transpose() - centers.col(c)).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      assign[static_cast<std::size_t>(i)] = best;
      dist2[i] = best_d;
      sse += best_d;
    }
    run.trace.push_back(sse);
    const bool converged =
        sse == 0.0 || (std::isfinite(previous) && (previous - sse) <= config.tolerance * previous);
    previous = sse;
    if (converged) break;

    std::vector<Eigen::Index> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])];
    // Empty clusters take the point farthest from its current center.
    std::vector<bool> stolen(static_cast<std::size_t>(n), false);
    std::vector<Eigen::Index> reseeded(static_cast<std::size_t>(k), -1);
    for (Eigen::Index c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) continue;
      Eigen::Index far = -1;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (stolen[static_cast<std::size_t>(i)]) continue;
        if (far < 0 || dist2[i] > dist2[far]) far = i;
      }
      if (far < 0 || dist2[far] <= 0.0) continue;
      stolen[static_cast<std::size_t>(far)] = true;
      reseeded[static_cast<std::size_t>(c)] = far;
      --counts[static_cast<std::size_t>(assign[static_cast<std::size_t>(far)])];
    }
    Matrix sums = Matrix::Zero(data.cols(), k);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (stolen[static_cast<std::size_t>(i)]) continue;
      sums.col(assign[static_cast<std::size_t>(i)]) += data.row(i).transpose();
    }
    for (Eigen::Index c = 0; c < k; ++c) {
      const auto cs = static_cast<std::size_t>(c);
      if (reseeded[cs] >= 0) {
        centers.col(c) = data.row(reseeded[cs]).transpose();
      } else if (counts[cs] > 0) {
        centers.col(c) = sums.col(c) / static_cast<double>(counts[cs]);
      }
    }
  }
  run.sse = run.trace.back();
  run.centers = std::move(centers);
  return run;
}

}  // namespace detail

/// Multi-restart Lloyd kMeans over the rows of `data`; keeps the restart with
/// the lowest final SSE. The returned codebook has a uniform prior.
inline KMeansResult kmeans_fit_detailed(const FrameMatrix& data,
                                        const KMeansConfig& config) {
  require(data.rows() > 0 && data.cols() > 0, "kmeans: empty data");
  require(data.allFinite(), "kmeans: non-finite data");
  require(config.num_words >= 1, "kmeans: num_words must be >= 1");
  require(config.restarts >= 1, "kmeans: restarts must be >= 1");
  require(config.max_iterations >= 1, "kmeans: max_iterations must be >= 1");
  require(detail::count_distinct_rows(data) >= config.num_words,
          "insufficient data");

  std::vector<std::vector<double>> traces;
  Matrix best;
  double best_sse = std::numeric_limits<double>::infinity();
  int best_restart = 0;
  for (int r = 0; r < config.restarts; ++r) {
    std::seed_seq seq{static_cast<std::uint32_t>(config.seed),
                      static_cast<std::uint32_t>(config.seed >> 32),
                      static_cast<std::uint32_t>(r), 0x6b6du};
    std::mt19937_64 rng(seq);
    detail::LloydRun run =
        detail::lloyd(data, detail::seed_centers(data, config.num_words, rng), config);
    traces.push_back(run.trace);
    if (run.sse < best_sse) {
      best_sse = run.sse;
      best = std::move(run.centers);
      best_restart = r;
    }
  }
  return KMeansResult{Codebook(std::move(best)), best_sse, best_restart, std::move(traces)};
}

inline Codebook kmeans_fit(const FrameMatrix& data, const KMeansConfig& config) {
  return kmeans_fit_detailed(data, config).codebook;
}

/// Sum of squared distances from each row to its nearest word.
inline double sum_squared_distances(const Codebook& cb, const FrameMatrix& data) {
  double sse = 0.0;
  for (Eigen::Index i = 0; i < data.rows(); ++i)
    sse += (cb.words().colwise() - data.row(i).transpose()).colwise().squaredNorm().minCoeff();
  return sse;
}

namespace detail {

inline Vector codebook_logits(const Codebook& cb, const Eigen::Ref<const Vector>& x,
                              bool use_prior) {
  require(x.size() == cb.dim(), "descriptor dimension mismatch");
  require(x.allFinite(), "non-finite descriptor");
  Vector logits = -0.5 * (cb.words().colwise() - x).colwise().squaredNorm().transpose();
  if (use_prior) {
    for (Eigen::Index m = 0; m < cb.size(); ++m) {
      logits[m] = cb.prior()[m] > 0.0 ? logits[m] + std::log(cb.prior()[m])
                                      : -std::numeric_limits<double>::infinity();
    }
  }
  return logits;
}

}  // namespace detail

/// p(v_m | x) under unit-variance Gaussians around each word, with either a
/// uniform prior or the codebook's prior.
inline Vector posterior(const Codebook& cb, const Eigen::Ref<const Vector>& x,
                        bool use_prior) {
  return softmax(detail::codebook_logits(cb, x, use_prior));
}

/// Unit vector at the most probable word (lowest index on ties). Without the
/// prior this is the nearest word.
inline Vector hard_assign(const Codebook& cb, const Eigen::Ref<const Vector>& x,
                          bool use_prior = false) {
  const Vector logits = detail::codebook_logits(cb, x, use_prior);
  Vector unit = Vector::Zero(cb.size());
  unit[argmax(logits)] = 1.0;
  return unit;
}

/// W = (v_1 ... v_M), b_m = -v_m'v_m / 2 + log p(v_m).
inline QuantLayer to_network(const Codebook& cb) {
  require((cb.prior().array() > 0.0).all(), "degenerate prior");
  QuantLayer layer;
  layer.weights = cb.words();
  layer.bias = -0.5 * cb.words().colwise().squaredNorm().transpose() +
               cb.prior().array().log().matrix();
  return layer;
}

/// Inverse of to_network: words are the columns of W and the prior is
/// proportional to exp(b_m + v_m'v_m / 2).
inline Codebook from_network(const Matrix& weights, const Vector& bias) {
  require(weights.cols() == bias.size(), "weights/bias shape mismatch");
  require(weights.allFinite() && bias.allFinite(), "non-finite network parameters");
  Vector log_prior = bias + 0.5 * weights.colwise().squaredNorm().transpose();
  Vector prior = softmax(log_prior);
  const double floor = std::numeric_limits<double>::min();
  if ((prior.array() < floor).any()) {
    prior = prior.cwiseMax(floor);
    prior /= prior.sum();
  }
  return Codebook(weights, std::move(prior));
}

inline Codebook from_network(const QuantLayer& layer) {
  return from_network(layer.weights, layer.bias);
}

inline void save_codebook(std::ostream& out, const Codebook& cb) {
  out << "BOWCB1 " << cb.size() << ' ' << cb.dim() << '\n';
  write_row(out, cb.prior());
  for (Eigen::Index m = 0; m < cb.size(); ++m) write_row(out, cb.word(m));
}

inline Codebook load_codebook(std::istream& in) {
  std::string line, magic;
  require(static_cast<bool>(std::getline(in, line)), "codebook: empty file");
  std::istringstream header(line);
  long long m = 0, d = 0;
  require(static_cast<bool>(header >> magic >> m >> d) && magic == "BOWCB1",
          "codebook: bad header");
  require(m >= 1 && d >= 1, "codebook: bad dimensions");
  Vector prior = read_row(in, m, "codebook prior");
  // Text round trip can perturb the sum in the last ulp.
  prior /= prior.sum();
  Matrix words(d, m);
  for (long long i = 0; i < m; ++i) words.col(i) = read_row(in, d, "codebook word");
  return Codebook(std::move(words), std::move(prior));
}

inline void save_codebook(const std::string& path, const Codebook& cb) {
  std::ofstream out(path);
  require(static_cast<bool>(out), "cannot write " + path);
  save_codebook(out, cb);
}

inline Codebook load_codebook(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), "cannot open " + path);
  return load_codebook(in);
}

}  // namespace bowrnn

#endif  // BOWRNN_CODEBOOK_HPP
