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

// The recurrent bag-of-words network.
//
//   frame x_t --softmax(W'x + b)--> h(x_t)            quantization, per channel
//   H = (1/T) sum_t h(x_t)                            unit-weight recurrence
//   Psi(H)                                            optional feature map
//   p(c | H) = softmax(W_out' [Psi(H_1); ...] + b_out) output layer
//
// Because the recurrent weight is the identity, the error signal reaching the
// recurrent layer is the same at every frame. gradient() stores it once and
// recomputes each frame's quantization output in a second pass, so its
// working memory does not depend on the sequence length.

#ifndef BOWRNN_BOWNET_HPP
#define BOWRNN_BOWNET_HPP

#include "bowrnn/codebook.hpp"
#include "bowrnn/featmap.hpp"
#include "bowrnn/sequence.hpp"

#include <fstream>
#include <optional>
#include <random>
#include <span>
#include <thread>
#include <vector>

namespace bowrnn {

enum class Assignment { soft, hard };

inline Assignment parse_assignment(const std::string& s) {
  if (s == "soft") return Assignment::soft;
  if (s == "hard") return Assignment::hard;
  throw Error("unknown assignment '" + s + "'");
}

struct Histogram {
  Vector values;
  std::optional<int> channel;
};

class BowNetwork {
 public:
  BowNetwork(std::vector<QuantLayer> quant, std::optional<FeatureMapSpec> map,
             Matrix out_weights, Vector out_bias)
      : quant_(std::move(quant)),
        map_(map),
        out_weights_(std::move(out_weights)),
        out_bias_(std::move(out_bias)) {
    validate();
  }

  /// Quantization weights uniform in +-1/sqrt(D), output weights uniform in
  /// +-1/sqrt(F), biases zero.
  static BowNetwork random(const std::vector<Eigen::Index>& channel_dims, Eigen::Index num_words,
                           Eigen::Index num_classes, std::optional<FeatureMapSpec> map,
                           std::uint64_t seed) {
    require(!channel_dims.empty(), "network needs at least one channel");
    std::mt19937_64 rng(seed);
    std::vector<QuantLayer> quant;
    for (Eigen::Index d : channel_dims) {
      require(d >= 1, "channel dimension must be >= 1");
      QuantLayer layer{uniform_matrix(d, num_words, 1.0 / std::sqrt(static_cast<double>(d)), rng),
                       Vector::Zero(num_words)};
      quant.push_back(std::move(layer));
    }
    return with_random_top(std::move(quant), map, num_classes, rng());
  }

  /// Keeps the given quantization layers and draws a fresh output layer.
  static BowNetwork with_random_top(std::vector<QuantLayer> quant, std::optional<FeatureMapSpec> map,
                                    Eigen::Index num_classes, std::uint64_t seed) {
    require(!quant.empty(), "network needs at least one channel");
    require(num_classes >= 1, "network needs at least one class");
    std::mt19937_64 rng(seed);
    const Eigen::Index f = mapped_dim_for(quant.front().size(), static_cast<Eigen::Index>(quant.size()), map);
    Matrix w = uniform_matrix(f, num_classes, 1.0 / std::sqrt(static_cast<double>(f)), rng);
    return BowNetwork(std::move(quant), map, std::move(w), Vector::Zero(num_classes));
  }

  static Eigen::Index mapped_dim_for(Eigen::Index words, Eigen::Index channels,
                                     const std::optional<FeatureMapSpec>& map) {
    return words * channels * (map ? map->block_size() : 1);
  }

  void validate() const {
    require(!quant_.empty(), "network needs at least one channel");
    const Eigen::Index m = quant_.front().size();
    require(m >= 1, "network needs at least one word");
    for (const auto& q : quant_) {
      require(q.size() == m && q.bias.size() == m, "quantization layer shapes inconsistent");
      require(q.dim() >= 1, "quantization layer needs dimension >= 1");
      require(q.weights.allFinite() && q.bias.allFinite(), "non-finite quantization parameters");
    }
    if (map_) map_->validate();
    require(out_weights_.rows() == mapped_dim(), "output weights have wrong row count");
    require(out_weights_.cols() >= 1 && out_bias_.size() == out_weights_.cols(),
            "output layer shapes inconsistent");
    require(out_weights_.allFinite() && out_bias_.allFinite(), "non-finite output parameters");
  }

  Eigen::Index num_channels() const { return static_cast<Eigen::Index>(quant_.size()); }
  Eigen::Index num_words() const { return quant_.front().size(); }
  Eigen::Index num_classes() const { return out_bias_.size(); }
  Eigen::Index channel_dim(std::size_t c) const { return quant_.at(c).dim(); }
  Eigen::Index mapped_dim() const { return mapped_dim_for(num_words(), num_channels(), map_); }
  Eigen::Index block_size() const { return map_ ? map_->block_size() : 1; }

  const std::vector<QuantLayer>& quant() const { return quant_; }
  const QuantLayer& quant(std::size_t c) const { return quant_.at(c); }
  QuantLayer& quant(std::size_t c) { return quant_.at(c); }
  const std::optional<FeatureMapSpec>& feature_map() const { return map_; }
  const Matrix& out_weights() const { return out_weights_; }
  Matrix& out_weights() { return out_weights_; }
  const Vector& out_bias() const { return out_bias_; }
  Vector& out_bias() { return out_bias_; }

 private:
  template <class Engine>
  static Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, double r, Engine& rng) {
    Matrix m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
      for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = r * (2.0 * uniform01(rng) - 1.0);
    return m;
  }

  std::vector<QuantLayer> quant_;
  std::optional<FeatureMapSpec> map_;
  Matrix out_weights_;
  Vector out_bias_;
};

/// Same shapes as the network parameters.
struct GradientSet {
  std::vector<QuantLayer> quant;
  Matrix out_weights;
  Vector out_bias;

  static GradientSet zeros_like(const BowNetwork& net) {
    GradientSet g;
    for (const auto& q : net.quant())
      g.quant.push_back(QuantLayer{Matrix::Zero(q.dim(), q.size()), Vector::Zero(q.size())});
    g.out_weights = Matrix::Zero(net.out_weights().rows(), net.out_weights().cols());
    g.out_bias = Vector::Zero(net.num_classes());
    return g;
  }

  GradientSet& operator+=(const GradientSet& o) {
    for (std::size_t c = 0; c < quant.size(); ++c) {
      quant[c].weights += o.quant[c].weights;
      quant[c].bias += o.quant[c].bias;
    }
    out_weights += o.out_weights;
    out_bias += o.out_bias;
    return *this;
  }

  GradientSet& operator*=(double s) {
    for (auto& q : quant) {
      q.weights *= s;
      q.bias *= s;
    }
    out_weights *= s;
    out_bias *= s;
    return *this;
  }

  bool all_finite() const {
    for (const auto& q : quant)
      if (!q.weights.allFinite() || !q.bias.allFinite()) return false;
    return out_weights.allFinite() && out_bias.allFinite();
  }
};

/// Counts working buffers allocated by gradient(); used to check that the
/// memory footprint does not grow with the sequence length.
struct BufferCounter {
  std::size_t buffers = 0;
  std::size_t doubles = 0;

  void note(Eigen::Index n) {
    ++buffers;
    doubles += static_cast<std::size_t>(n);
  }
};

namespace detail {

inline Vector make_buffer(Eigen::Index n, BufferCounter* counter) {
  if (counter) counter->note(n);
  return Vector(n);
}

/// out = softmax(W' x + b) for one frame, written into a preallocated buffer.
inline void quantize_into(const QuantLayer& layer, const double* frame, Eigen::Ref<Vector> out) {
  Eigen::Map<const Vector> x(frame, layer.dim());
  out.noalias() = layer.weights.transpose() * x;
  out += layer.bias;
  softmax_inplace(out);
}

inline void check_channels(const BowNetwork& net, std::span<const FeatureSequence> channels) {
  require(static_cast<Eigen::Index>(channels.size()) == net.num_channels(), "channel count mismatch");
  for (std::size_t c = 0; c < channels.size(); ++c) {
    require(channels[c].dim() == net.channel_dim(c), "descriptor dimension mismatch");
    require(channels[c].length() >= 1, "empty sequence");
  }
}

}  // namespace detail

inline Vector quantize(const QuantLayer& layer, const Eigen::Ref<const Vector>& x) {
  require(x.size() == layer.dim(), "descriptor dimension mismatch");
  Vector out(layer.size());
  const Vector xc = x;
  detail::quantize_into(layer, xc.data(), out);
  return out;
}

inline Vector quantize(const BowNetwork& net, const Eigen::Ref<const Vector>& x) {
  require(net.num_channels() == 1, "quantize(net, x) needs a single-channel network");
  return quantize(net.quant(0), x);
}

/// H = (1/T) sum_t h(x_t), accumulated in frame order.
inline Histogram encode(const QuantLayer& layer, const FeatureSequence& seq, Assignment assignment) {
  require(seq.length() >= 1, "empty sequence");
  require(seq.dim() == layer.dim(), "descriptor dimension mismatch");
  Vector sum = Vector::Zero(layer.size());
  Vector frame_post(layer.size());
  for (Eigen::Index t = 0; t < seq.length(); ++t) {
    detail::quantize_into(layer, seq.frames.row(t).data(), frame_post);
    if (assignment == Assignment::soft) {
      sum += frame_post;
    } else {
      sum[argmax(frame_post)] += 1.0;
    }
  }
  return Histogram{sum / static_cast<double>(seq.length()), std::nullopt};
}

inline std::vector<Histogram> encode(const BowNetwork& net, std::span<const FeatureSequence> channels,
                                     Assignment assignment) {
  detail::check_channels(net, channels);
  std::vector<Histogram> out;
  for (std::size_t c = 0; c < channels.size(); ++c) {
    out.push_back(encode(net.quant(c), channels[c], assignment));
    out.back().channel = static_cast<int>(c);
  }
  return out;
}

inline Histogram encode(const BowNetwork& net, const FeatureSequence& seq, Assignment assignment) {
  return encode(net, std::span<const FeatureSequence>(&seq, 1), assignment).front();
}

/// Input to the output layer: [Psi(H_1); ...; Psi(H_k)].
inline Vector output_features(const BowNetwork& net, const std::vector<Histogram>& hists) {
  Vector f(net.mapped_dim());
  const Eigen::Index block = net.num_words() * net.block_size();
  for (std::size_t c = 0; c < hists.size(); ++c) {
    f.segment(static_cast<Eigen::Index>(c) * block, block) =
        net.feature_map() ? map_histogram(*net.feature_map(), hists[c].values) : hists[c].values;
  }
  return f;
}

inline Vector output_features(const BowNetwork& net, std::span<const FeatureSequence> channels,
                              Assignment assignment = Assignment::soft) {
  return output_features(net, encode(net, channels, assignment));
}

/// Class posterior from precomputed output-layer features.
inline Vector classify_features(const BowNetwork& net, const Eigen::Ref<const Vector>& features) {
  require(features.size() == net.mapped_dim(), "feature dimension mismatch");
  Vector logits = net.out_weights().transpose() * features + net.out_bias();
  softmax_inplace(logits);
  return logits;
}

inline Vector forward(const BowNetwork& net, std::span<const FeatureSequence> channels,
                      Assignment assignment = Assignment::soft) {
  return classify_features(net, output_features(net, channels, assignment));
}

inline Vector forward(const BowNetwork& net, const FeatureSequence& seq,
                      Assignment assignment = Assignment::soft) {
  return forward(net, std::span<const FeatureSequence>(&seq, 1), assignment);
}

inline constexpr double kProbabilityFloor = 1e-300;

inline double loss_from_posterior(const Eigen::Ref<const Vector>& posterior, int label) {
  require(label >= 0 && label < posterior.size(), "invalid label");
  return -std::log(std::max(posterior[label], kProbabilityFloor));
}

/// Cross-entropy -log p(label | H). Labels are 0-based.
inline double loss(const BowNetwork& net, std::span<const FeatureSequence> channels, int label) {
  require(label >= 0 && label < net.num_classes(), "invalid label");
  return loss_from_posterior(forward(net, channels), label);
}

inline double loss(const BowNetwork& net, const FeatureSequence& seq, int label) {
  return loss(net, std::span<const FeatureSequence>(&seq, 1), label);
}

struct GradientResult {
  GradientSet gradient;
  double loss = 0.0;
  Vector posterior;
};

/// Exact cross-entropy gradient with working memory independent of T.
///
/// Forward: accumulate each channel's soft histogram frame by frame, map it,
/// apply the output softmax. Backward: the output error gives the output
/// layer gradient; pushing it back through W_out, the feature-map Jacobian and
/// the 1/T normalization gives the recurrent error e_rec, shared by all
/// frames. A second pass over the frames recomputes each softmax output p_t
/// and adds x_t e_t' and e_t with e_t = J_softmax(p_t) e_rec.
inline GradientResult gradient(const BowNetwork& net, std::span<const FeatureSequence> channels,
                               int label, BufferCounter* counter = nullptr) {
  detail::check_channels(net, channels);
  require(label >= 0 && label < net.num_classes(), "invalid label");
  const Eigen::Index M = net.num_words();
  const Eigen::Index block = M * net.block_size();

  GradientResult result{GradientSet::zeros_like(net), 0.0, Vector()};
  GradientSet& g = result.gradient;

  Vector frame_post = detail::make_buffer(M, counter);
  Vector features = detail::make_buffer(net.mapped_dim(), counter);
  std::vector<Vector> hists;
  for (std::size_t c = 0; c < channels.size(); ++c) {
    Vector h = detail::make_buffer(M, counter);
    h.setZero();
    const FeatureSequence& seq = channels[c];
    for (Eigen::Index t = 0; t < seq.length(); ++t) {
      detail::quantize_into(net.quant(c), seq.frames.row(t).data(), frame_post);
      h += frame_post;
    }
    h /= static_cast<double>(seq.length());
    features.segment(static_cast<Eigen::Index>(c) * block, block) =
        net.feature_map() ? map_histogram(*net.feature_map(), h) : h;
    hists.push_back(std::move(h));
  }

  Vector out_err = classify_features(net, features);
  result.posterior = out_err;
  result.loss = loss_from_posterior(out_err, label);
  out_err[label] -= 1.0;

  g.out_weights.noalias() = features * out_err.transpose();
  g.out_bias = out_err;

  Vector back = detail::make_buffer(net.mapped_dim(), counter);
  back.noalias() = net.out_weights() * out_err;

  Vector rec_err = detail::make_buffer(M, counter);
  Vector frame_err = detail::make_buffer(M, counter);
  for (std::size_t c = 0; c < channels.size(); ++c) {
    const auto back_c = back.segment(static_cast<Eigen::Index>(c) * block, block);
    if (net.feature_map()) {
      jacobian(*net.feature_map(), hists[c]).apply_transpose_into(back_c, rec_err);
    } else {
      rec_err = back_c;
    }
    const FeatureSequence& seq = channels[c];
    rec_err /= static_cast<double>(seq.length());
    QuantLayer& gc = g.quant[c];
    for (Eigen::Index t = 0; t < seq.length(); ++t) {
      const double* x = seq.frames.row(t).data();
      detail::quantize_into(net.quant(c), x, frame_post);
      const double shift = frame_post.dot(rec_err);
      frame_err.array() = frame_post.array() * (rec_err.array() - shift);
      gc.weights.noalias() += Eigen::Map<const Vector>(x, seq.dim()) * frame_err.transpose();
      gc.bias += frame_err;
    }
  }
  return result;
}

inline GradientResult gradient(const BowNetwork& net, const FeatureSequence& seq, int label,
                               BufferCounter* counter = nullptr) {
  return gradient(net, std::span<const FeatureSequence>(&seq, 1), label, counter);
}

struct BatchGradient {
  GradientSet gradient;
  double loss = 0.0;      // mean
  double accuracy = 0.0;  // fraction of argmax(posterior) == label
};

/// Mean gradient over a batch. Samples are summed in fixed-size chunks and
/// the chunk sums are added in order, so the result does not depend on the
/// number of worker threads.
inline BatchGradient batch_gradient(const BowNetwork& net, std::span<const LabeledSample> batch,
                                    int workers = 0) {
  require(!batch.empty(), "empty batch");
  constexpr std::size_t kChunk = 16;
  const std::size_t chunks = (batch.size() + kChunk - 1) / kChunk;
  std::vector<GradientSet> sums(chunks);
  std::vector<double> losses(chunks, 0.0);
  std::vector<std::size_t> correct(chunks, 0);
  std::vector<std::exception_ptr> errors(chunks);

  auto run_chunk = [&](std::size_t k) {
    try {
      GradientSet acc = GradientSet::zeros_like(net);
      for (std::size_t i = k * kChunk; i < std::min(batch.size(), (k + 1) * kChunk); ++i) {
        const LabeledSample& s = batch[i];
        GradientResult r = gradient(net, s.channels, s.label);
        acc += r.gradient;
        losses[k] += r.loss;
        correct[k] += argmax(r.posterior) == s.label;
      }
      sums[k] = std::move(acc);
    } catch (...) {
      errors[k] = std::current_exception();
    }
  };

  if (workers <= 0) workers = worker_count();
  const std::size_t nthreads = std::min<std::size_t>(static_cast<std::size_t>(workers), chunks);
  if (nthreads <= 1) {
    for (std::size_t k = 0; k < chunks; ++k) run_chunk(k);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < nthreads; ++w)
      pool.emplace_back([&, w] {
        for (std::size_t k = w; k < chunks; k += nthreads) run_chunk(k);
      });
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  BatchGradient out{std::move(sums[0]), losses[0], 0.0};
  std::size_t hits = correct[0];
  for (std::size_t k = 1; k < chunks; ++k) {
    out.gradient += sums[k];
    out.loss += losses[k];
    hits += correct[k];
  }
  const double n = static_cast<double>(batch.size());
  out.gradient *= 1.0 / n;
  out.loss /= n;
  out.accuracy = static_cast<double>(hits) / n;
  return out;
}

// ---------------------------------------------------------------------------
// Model files:
//   BOWNET1 <D> <M> <C> <channels> <map-kind> <n> <L>
//   per channel: W (D lines of M values), b (one line)
//   W_out (F lines of C values), b_out (one line)
// Channels with different input dimensions write D as a comma-separated list.

inline std::string map_kind_name(const std::optional<FeatureMapSpec>& map) {
  return map ? to_string(map->kernel) : "none";
}

inline std::optional<FeatureMapSpec> make_map_spec(const std::string& kind, int samples, double period) {
  if (kind == "none") return std::nullopt;
  FeatureMapSpec spec{parse_kernel_kind(kind), samples, period};
  spec.validate();
  return spec;
}

inline void save_model(std::ostream& out, const BowNetwork& net) {
  std::string dims;
  bool uniform = true;
  for (std::size_t c = 0; c < net.quant().size(); ++c) {
    if (c) dims += ',';
    dims += std::to_string(net.channel_dim(c));
    uniform = uniform && net.channel_dim(c) == net.channel_dim(0);
  }
  if (uniform) dims = std::to_string(net.channel_dim(0));
  const auto& map = net.feature_map();
  out << "BOWNET1 " << dims << ' ' << net.num_words() << ' ' << net.num_classes() << ' '
      << net.num_channels() << ' ' << map_kind_name(map) << ' ' << (map ? map->samples : 0) << ' '
      << format_double(map ? map->period : 0.0) << '\n';
  for (const auto& q : net.quant()) {
    for (Eigen::Index d = 0; d < q.dim(); ++d) write_row(out, q.weights.row(d).transpose());
    write_row(out, q.bias);
  }
  for (Eigen::Index f = 0; f < net.out_weights().rows(); ++f)
    write_row(out, net.out_weights().row(f).transpose());
  write_row(out, net.out_bias());
}

inline BowNetwork load_model(std::istream& in) {
  std::string line, magic, dims, kind, period;
  require(static_cast<bool>(std::getline(in, line)), "model: empty file");
  std::istringstream header(line);
  long long m = 0, c = 0, channels = 0;
  int samples = 0;
  require(static_cast<bool>(header >> magic >> dims >> m >> c >> channels >> kind >> samples >> period) &&
              magic == "BOWNET1",
          "model: bad header");
  require(m >= 1 && c >= 1 && channels >= 1, "model: bad dimensions");
  std::vector<long long> d;
  std::istringstream ds(dims);
  for (std::string tok; std::getline(ds, tok, ',');) d.push_back(std::stoll(tok));
  if (d.size() == 1) d.assign(static_cast<std::size_t>(channels), d.front());
  require(static_cast<long long>(d.size()) == channels, "model: channel dimension list mismatch");
  const auto map = make_map_spec(kind, samples, kind == "none" ? 0.5 : parse_double(period));
  std::vector<QuantLayer> quant;
  for (long long ch = 0; ch < channels; ++ch) {
    const long long dim = d[static_cast<std::size_t>(ch)];
    require(dim >= 1, "model: bad dimensions");
    QuantLayer q{Matrix(dim, m), Vector()};
    for (long long r = 0; r < dim; ++r) q.weights.row(r) = read_row(in, m, "model W").transpose();
    q.bias = read_row(in, m, "model b");
    quant.push_back(std::move(q));
  }
  const Eigen::Index f = BowNetwork::mapped_dim_for(m, channels, map);
  Matrix w(f, c);
  for (Eigen::Index r = 0; r < f; ++r) w.row(r) = read_row(in, c, "model W_out").transpose();
  Vector b = read_row(in, c, "model b_out");
  return BowNetwork(std::move(quant), map, std::move(w), std::move(b));
}

inline void save_model(const std::string& path, const BowNetwork& net) {
  std::ofstream out(path);
  require(static_cast<bool>(out), "cannot write " + path);
  save_model(out, net);
}

inline BowNetwork load_model(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), "cannot open " + path);
  return load_model(in);
}

}  // namespace bowrnn

#endif  // BOWRNN_BOWNET_HPP
