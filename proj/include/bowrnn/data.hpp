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

// Sequence files, manifests, z-score normalization, subsampling, the
// synthetic rare-word generator, and evaluation metrics.

#ifndef BOWRNN_DATA_HPP
#define BOWRNN_DATA_HPP

#include "bowrnn/sequence.hpp"

#include <array>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <span>

namespace bowrnn {

// ---------------------------------------------------------------------------
// Sequence files: "BOWSEQ1\0", u32 T, u32 D, T*D little-endian float32.

inline constexpr std::array<char, 8> kSequenceMagic = {'B', 'O', 'W', 'S', 'E', 'Q', '1', '\0'};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " at byte offset " + std::to_string(offset)), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

namespace detail {

inline std::uint32_t read_u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

inline void append_u32_le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

}  // namespace detail

inline FeatureSequence parse_sequence(std::span<const unsigned char> bytes,
                                      const std::string& source = {}) {
  if (bytes.size() < 8) throw ParseError("sequence: truncated magic", bytes.size());
  if (std::memcmp(bytes.data(), kSequenceMagic.data(), 8) != 0)
    throw ParseError("sequence: bad magic", 0);
  if (bytes.size() < 16) throw ParseError("sequence: truncated header", bytes.size());
  const std::uint32_t T = detail::read_u32_le(bytes.data() + 8);
  const std::uint32_t D = detail::read_u32_le(bytes.data() + 12);
  if (T == 0) throw ParseError("sequence: zero frames", 8);
  if (D == 0) throw ParseError("sequence: dimension 0", 12);
  const std::uint64_t payload = std::uint64_t{T} * D * 4;
  if (bytes.size() - 16 < payload) throw ParseError("sequence: truncated payload", bytes.size());
  if (bytes.size() - 16 > payload) throw ParseError("sequence: trailing bytes", 16 + payload);
  FeatureSequence seq;
  seq.source = source;
  seq.frames.resize(T, D);
  const unsigned char* p = bytes.data() + 16;
  for (std::uint32_t t = 0; t < T; ++t) {
    for (std::uint32_t d = 0; d < D; ++d, p += 4) {
      const std::uint32_t bits = detail::read_u32_le(p);
      float f;
      std::memcpy(&f, &bits, 4);
      seq.frames(t, d) = static_cast<double>(f);
    }
  }
  return seq;
}

inline std::string serialize_sequence(const FeatureSequence& seq) {
  require(seq.length() >= 1 && seq.dim() >= 1, "sequence must be non-empty");
  std::string out(kSequenceMagic.begin(), kSequenceMagic.end());
  detail::append_u32_le(out, static_cast<std::uint32_t>(seq.length()));
  detail::append_u32_le(out, static_cast<std::uint32_t>(seq.dim()));
  out.reserve(out.size() + static_cast<std::size_t>(seq.frames.size()) * 4);
  for (Eigen::Index t = 0; t < seq.length(); ++t) {
    for (Eigen::Index d = 0; d < seq.dim(); ++d) {
      const float f = static_cast<float>(seq.frames(t, d));
      std::uint32_t bits;
      std::memcpy(&bits, &f, 4);
      detail::append_u32_le(out, bits);
    }
  }
  return out;
}

inline FeatureSequence load_sequence(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), "cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return parse_sequence(bytes, path);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what(), e.offset());
  }
}

inline void save_sequence(const std::string& path, const FeatureSequence& seq) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), "cannot write " + path);
  const std::string bytes = serialize_sequence(seq);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

// ---------------------------------------------------------------------------
// Manifests: "BOWDS1 <C> <channels>", then "<label> <path_1> ... <path_k>".

struct ManifestEntry {
  int label = 1;  // 1-based
  std::vector<std::string> paths;
};

struct DatasetManifest {
  int num_classes = 0;
  int channels = 1;
  std::vector<ManifestEntry> entries;
  /// Directory that relative paths resolve against.
  std::filesystem::path base_dir;

  void validate() const {
    require(num_classes >= 1, "manifest: class count must be >= 1");
    require(channels >= 1, "manifest: channel count must be >= 1");
    for (const auto& e : entries) {
      require(e.label >= 1 && e.label <= num_classes, "manifest: label out of range");
      require(static_cast<int>(e.paths.size()) == channels, "manifest: wrong channel arity");
    }
  }
};

inline DatasetManifest parse_manifest(std::istream& in) {
  DatasetManifest m;
  std::string line, magic;
  require(static_cast<bool>(std::getline(in, line)), "manifest: empty file");
  std::istringstream header(line);
  require(static_cast<bool>(header >> magic >> m.num_classes >> m.channels) && magic == "BOWDS1",
          "manifest: bad header");
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    ManifestEntry e;
    require(static_cast<bool>(ls >> e.label), "manifest line " + std::to_string(lineno) + ": bad label");
    std::string p;
    while (ls >> p) e.paths.push_back(p);
    m.entries.push_back(std::move(e));
  }
  m.validate();
  return m;
}

inline DatasetManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), "cannot open " + path);
  DatasetManifest m = parse_manifest(in);
  m.base_dir = std::filesystem::path(path).parent_path();
  return m;
}

inline void save_manifest(const std::string& path, const DatasetManifest& m) {
  m.validate();
  std::ofstream out(path);
  require(static_cast<bool>(out), "cannot write " + path);
  out << "BOWDS1 " << m.num_classes << ' ' << m.channels << '\n';
  for (const auto& e : m.entries) {
    out << e.label;
    for (const auto& p : e.paths) out << ' ' << p;
    out << '\n';
  }
}

inline std::vector<LabeledSample> load_dataset(const DatasetManifest& m) {
  std::vector<LabeledSample> out;
  out.reserve(m.entries.size());
  for (const auto& e : m.entries) {
    LabeledSample s;
    s.label = e.label - 1;
    for (const auto& p : e.paths) {
      const std::filesystem::path fp(p);
      s.channels.push_back(load_sequence((fp.is_absolute() ? fp : m.base_dir / fp).string()));
    }
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// z-score normalization.

struct NormalizationStats {
  std::vector<Vector> mean;    // per channel
  std::vector<Vector> stddev;  // per channel, population
};

/// Pools all frames of every sample per channel. Constant dimensions get
/// stddev 1 and a warning.
inline NormalizationStats zscore_fit(const std::vector<LabeledSample>& samples) {
  require(!samples.empty(), "zscore: no samples");
  const std::size_t channels = samples.front().channels.size();
  NormalizationStats stats;
  for (std::size_t c = 0; c < channels; ++c) {
    const FrameMatrix pooled = pool_frames(samples, c);
    require(pooled.rows() >= 2, "zscore: need at least 2 frames");
    const double n = static_cast<double>(pooled.rows());
    Vector mean = pooled.colwise().sum().transpose() / n;
    Vector sd(pooled.cols());
    for (Eigen::Index d = 0; d < pooled.cols(); ++d) {
      const double var = (pooled.col(d).array() - mean[d]).square().sum() / n;
      sd[d] = std::sqrt(var);
      if (!(sd[d] > 0.0)) {
        warn("zscore: channel " + std::to_string(c) + " dimension " + std::to_string(d) +
             " is constant; using stddev 1");
        sd[d] = 1.0;
      }
    }
    stats.mean.push_back(std::move(mean));
    stats.stddev.push_back(std::move(sd));
  }
  return stats;
}

inline FeatureSequence zscore_apply(const NormalizationStats& stats, std::size_t channel,
                                    const FeatureSequence& seq) {
  require(channel < stats.mean.size(), "zscore: channel out of range");
  require(seq.dim() == stats.mean[channel].size(), "zscore: dimension mismatch");
  FeatureSequence out = seq;
  out.frames = ((seq.frames.rowwise() - stats.mean[channel].transpose()).array().rowwise() /
                stats.stddev[channel].transpose().array())
                   .matrix();
  return out;
}

inline LabeledSample zscore_apply(const NormalizationStats& stats, const LabeledSample& s) {
  require(s.channels.size() == stats.mean.size(), "zscore: channel count mismatch");
  LabeledSample out;
  out.label = s.label;
  for (std::size_t c = 0; c < s.channels.size(); ++c)
    out.channels.push_back(zscore_apply(stats, c, s.channels[c]));
  return out;
}

inline void save_norm(const std::string& path, const NormalizationStats& stats) {
  std::ofstream out(path);
  require(static_cast<bool>(out), "cannot write " + path);
  out << "BOWNORM1 " << stats.mean.size() << '\n';
  for (std::size_t c = 0; c < stats.mean.size(); ++c) {
    out << stats.mean[c].size() << '\n';
    write_row(out, stats.mean[c]);
    write_row(out, stats.stddev[c]);
  }
}

inline NormalizationStats load_norm(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), "cannot open " + path);
  std::string line, magic;
  std::size_t channels = 0;
  require(static_cast<bool>(std::getline(in, line)), "norm: empty file");
  std::istringstream header(line);
  require(static_cast<bool>(header >> magic >> channels) && magic == "BOWNORM1", "norm: bad header");
  NormalizationStats stats;
  for (std::size_t c = 0; c < channels; ++c) {
    require(static_cast<bool>(std::getline(in, line)), "norm: truncated");
    const long long d = std::stoll(line);
    stats.mean.push_back(read_row(in, d, "norm mean"));
    stats.stddev.push_back(read_row(in, d, "norm stddev"));
    require((stats.stddev.back().array() > 0.0).all(), "norm: non-positive stddev");
  }
  return stats;
}

// ---------------------------------------------------------------------------
// Subsampling.

/// Keeps at most max_frames frames. The default picks indices floor(i*T/K);
/// with a seed, K distinct indices are drawn uniformly and kept in order.
inline FeatureSequence subsample_uniform(const FeatureSequence& seq, Eigen::Index max_frames,
                                         std::optional<std::uint64_t> seed = std::nullopt) {
  require(max_frames >= 1, "subsample: max_frames must be >= 1");
  const Eigen::Index T = seq.length();
  if (T <= max_frames) return seq;
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(max_frames));
  if (!seed) {
    for (Eigen::Index i = 0; i < max_frames; ++i) idx[static_cast<std::size_t>(i)] = i * T / max_frames;
  } else {
    std::mt19937_64 rng(*seed);
    std::vector<Eigen::Index> all(static_cast<std::size_t>(T));
    std::iota(all.begin(), all.end(), Eigen::Index{0});
    // Partial Fisher-Yates.
    for (Eigen::Index i = 0; i < max_frames; ++i) {
      const auto j = i + static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::uint64_t>(T - i)));
      std::swap(all[static_cast<std::size_t>(i)], all[static_cast<std::size_t>(j)]);
    }
    std::copy_n(all.begin(), max_frames, idx.begin());
    std::sort(idx.begin(), idx.end());
  }
  FeatureSequence out;
  out.source = seq.source;
  out.frames.resize(max_frames, seq.dim());
  for (Eigen::Index i = 0; i < max_frames; ++i) out.frames.row(i) = seq.frames.row(idx[static_cast<std::size_t>(i)]);
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic rare-word data.
//
// Every class shares `codewords` Gaussian components. Each class also owns
// `rare_per_class` exclusive components. Rare component r of every class sits
// at distance rare_offset from the same randomly chosen shared center, in a
// class-specific random direction, so classes differ in where rare frames
// fall around an anchor rather than in how many fall near it. A frame comes
// from one of the class's rare components with probability rho, otherwise
// from a shared component, both chosen uniformly.

struct SyntheticSpec {
  int classes = 3;
  int codewords = 32;
  int dim = 8;
  int sequences = 200;
  int frames = 100;
  double rho = 0.3;
  std::uint64_t seed = 0;
  int rare_per_class = 2;
  double center_scale = 2.0;
  double spread = 0.6;
  double rare_offset = 1.0;

  void validate() const {
    require(classes >= 1 && codewords >= 1 && dim >= 1 && sequences >= 1 && frames >= 1 &&
                rare_per_class >= 1,
            "synthetic: sizes must be positive");
    require(rho >= 0.0 && rho <= 1.0, "synthetic: rho must be in [0, 1]");
    require(center_scale > 0.0 && spread > 0.0 && rare_offset >= 0.0,
            "synthetic: scales must be positive");
  }
};

struct SyntheticDataset {
  SyntheticSpec spec;
  Matrix shared_centers;             // D x codewords
  std::vector<Matrix> rare_centers;  // per class, D x rare_per_class
  std::vector<LabeledSample> samples;
};

inline SyntheticDataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  SyntheticDataset ds;
  ds.spec = spec;
  ds.shared_centers.resize(spec.dim, spec.codewords);
  for (Eigen::Index k = 0; k < ds.shared_centers.cols(); ++k)
    for (Eigen::Index d = 0; d < spec.dim; ++d)
      ds.shared_centers(d, k) = spec.center_scale * standard_normal(rng);
  std::vector<Eigen::Index> anchors;
  for (int r = 0; r < spec.rare_per_class; ++r)
    anchors.push_back(static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::uint64_t>(spec.codewords))));
  for (int c = 0; c < spec.classes; ++c) {
    Matrix rare(spec.dim, spec.rare_per_class);
    for (int r = 0; r < spec.rare_per_class; ++r) {
      Vector dir(spec.dim);
      for (Eigen::Index d = 0; d < spec.dim; ++d) dir[d] = standard_normal(rng);
      rare.col(r) = ds.shared_centers.col(anchors[static_cast<std::size_t>(r)]) + spec.rare_offset * dir.normalized();
    }
    ds.rare_centers.push_back(std::move(rare));
  }
  for (int i = 0; i < spec.sequences; ++i) {
    LabeledSample s;
    s.label = i % spec.classes;
    FeatureSequence seq;
    seq.source = "synthetic:" + std::to_string(i);
    seq.frames.resize(spec.frames, spec.dim);
    for (int t = 0; t < spec.frames; ++t) {
      const bool rare = uniform01(rng) < spec.rho;
      Vector center = rare ? Vector(ds.rare_centers[static_cast<std::size_t>(s.label)].col(
                                 static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::uint64_t>(spec.rare_per_class)))))
                           : Vector(ds.shared_centers.col(
                                 static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::uint64_t>(spec.codewords)))));
      for (Eigen::Index d = 0; d < spec.dim; ++d)
        seq.frames(t, d) = center[d] + spec.spread * standard_normal(rng);
    }
    s.channels.push_back(std::move(seq));
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

/// log p(sequence | class) under the generating mixture; the Bayes classifier
/// with equal class priors picks the argmax.
inline Vector synthetic_class_log_likelihoods(const SyntheticDataset& ds, const FeatureSequence& seq) {
  const auto& sp = ds.spec;
  require(seq.dim() == sp.dim, "synthetic: dimension mismatch");
  const double inv_var = 1.0 / (sp.spread * sp.spread);
  Vector out(sp.classes);
  for (int c = 0; c < sp.classes; ++c) {
    const Matrix& rare = ds.rare_centers[static_cast<std::size_t>(c)];
    double total = 0.0;
    Vector logs(sp.codewords + sp.rare_per_class);
    for (Eigen::Index t = 0; t < seq.length(); ++t) {
      const Vector x = seq.frames.row(t).transpose();
      for (int k = 0; k < sp.codewords; ++k)
        logs[k] = std::log((1.0 - sp.rho) / sp.codewords) -
                  0.5 * inv_var * (x - ds.shared_centers.col(k)).squaredNorm();
      for (int r = 0; r < sp.rare_per_class; ++r)
        logs[sp.codewords + r] = std::log(sp.rho / sp.rare_per_class) -
                                 0.5 * inv_var * (x - rare.col(r)).squaredNorm();
      const double top = logs.maxCoeff();
      total += top + std::log((logs.array() - top).exp().sum());
    }
    out[c] = total;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Metrics.

inline double accuracy(std::span<const int> predictions, std::span<const int> labels) {
  require(predictions.size() == labels.size(), "accuracy: length mismatch");
  require(!labels.empty(), "accuracy: empty input");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) correct += predictions[i] == labels[i];
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

/// Mean of precision at each positive rank; items ranked by descending score,
/// ties in original order.
inline double average_precision(const Eigen::Ref<const Vector>& scores, std::span<const bool> positive) {
  require(static_cast<std::size_t>(scores.size()) == positive.size(), "ap: length mismatch");
  require(scores.allFinite(), "ap: non-finite score");
  std::vector<Eigen::Index> order(positive.size());
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return scores[a] > scores[b]; });
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (positive[static_cast<std::size_t>(order[rank])]) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(rank + 1);
    }
  }
  require(hits > 0, "ap: no positive items");
  return sum / static_cast<double>(hits);
}

/// scores: N x C, labels 0-based. Classes without positives are skipped with
/// a warning.
inline double mean_average_precision(const Matrix& scores, std::span<const int> labels) {
  require(static_cast<std::size_t>(scores.rows()) == labels.size(), "map: length mismatch");
  double sum = 0.0;
  int used = 0;
  for (Eigen::Index c = 0; c < scores.cols(); ++c) {
    std::unique_ptr<bool[]> pos(new bool[labels.size()]);
    bool any = false;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      pos[i] = labels[i] == c;
      any = any || pos[i];
    }
    if (!any) {
      warn("map: class " + std::to_string(c + 1) + " has no positive items; excluded");
      continue;
    }
    sum += average_precision(scores.col(c), std::span<const bool>(pos.get(), labels.size()));
    ++used;
  }
  require(used > 0, "map: no class has positive items");
  return sum / used;
}

}  // namespace bowrnn

#endif  // BOWRNN_DATA_HPP
