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

// bowrnn: synthetic data, codebooks, network training, encoding,
// classification and evaluation from the command line.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include "bowrnn/bowrnn.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace bowrnn;

namespace {

/// Runtime failure tagged with the pipeline stage it happened in.
class StageError : public std::runtime_error {
 public:
  StageError(const std::string& stage, const std::string& what)
      : std::runtime_error(stage + ": " + what) {}
};

template <class Fn>
auto stage(const std::string& name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

struct DataOptions {
  std::string manifest;
  std::string channels = "concat";
  long subsample = 0;
  std::string norm;
  std::uint64_t seed = 0;
};

void add_data_options(CLI::App* cmd, DataOptions& o, bool manifest_required = true) {
  auto* m = cmd->add_option("--manifest", o.manifest, "dataset manifest (BOWDS1)");
  if (manifest_required) m->required();
  cmd->add_option("--channels", o.channels, "concat: join descriptor channels per frame; separate: one codebook per channel")
      ->check(CLI::IsMember({"concat", "separate"}));
  cmd->add_option("--subsample", o.subsample, "keep at most this many evenly spaced frames per sequence (0 = all)")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--seed", o.seed, "random seed");
}

struct LoadedData {
  DatasetManifest manifest;
  std::vector<LabeledSample> samples;
};

/// Manifest -> samples with the channel mode and subsampling applied.
LoadedData load_data(const DataOptions& o, const std::string& manifest_path) {
  LoadedData out;
  out.manifest = stage("loading manifest", [&] { return load_manifest(manifest_path); });
  auto raw = stage("loading sequences", [&] { return load_dataset(out.manifest); });
  for (auto& s : raw) {
    LabeledSample t;
    t.label = s.label;
    if (o.channels == "concat") {
      t.channels.push_back(stage("concatenating channels", [&] { return concat_channels(s.channels); }));
    } else {
      t.channels = std::move(s.channels);
    }
    if (o.subsample > 0)
      for (auto& c : t.channels) c = subsample_uniform(c, o.subsample);
    out.samples.push_back(std::move(t));
  }
  return out;
}

void apply_norm(const NormalizationStats& stats, std::vector<LabeledSample>& samples) {
  stage("normalizing", [&] {
    for (auto& s : samples) s = zscore_apply(stats, s);
    return 0;
  });
}

std::vector<Codebook> load_codebooks(const std::string& path) {
  return stage("loading codebook", [&] {
    std::ifstream in(path);
    require(static_cast<bool>(in), "cannot open " + path);
    std::vector<Codebook> out;
    while (in.peek() != EOF) out.push_back(load_codebook(in));
    require(!out.empty(), "no codebook in " + path);
    return out;
  });
}

std::vector<QuantLayer> quant_from_codebooks(const std::vector<Codebook>& cbs) {
  std::vector<QuantLayer> q;
  for (const auto& cb : cbs) q.push_back(to_network(cb));
  return q;
}

template <class Fn>
void write_file(const std::string& path, Fn&& fn) {
  stage("writing " + path, [&] {
    std::ofstream out(path, std::ios::binary);
    require(static_cast<bool>(out), "cannot write " + path);
    fn(out);
    require(static_cast<bool>(out), "write failed");
    return 0;
  });
}

void write_histograms(std::ostream& out, const std::vector<std::vector<Histogram>>& rows, std::size_t channel) {
  const Eigen::Index m = rows.front()[channel].values.size();
  out << "BOWHIST1 " << rows.size() << ' ' << m << '\n';
  for (const auto& r : rows) write_row(out, r[channel].values);
}

// ---------------------------------------------------------------------------

struct GenSynthOptions {
  SyntheticSpec spec;
  int split = 1;
  double test_fraction = 0.5;
  std::string out;
};

int cmd_gen_synth(const GenSynthOptions& o) {
  const SyntheticDataset ds = stage("generating", [&] { return generate_synthetic(o.spec); });
  const fs::path dir(o.out);
  stage("creating output directory", [&] {
    fs::create_directories(dir / "seq");
    return 0;
  });
  DatasetManifest all{o.spec.classes, o.split, {}, dir}, train = all, test = all;
  const int per = o.spec.dim / o.split;
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& s = ds.samples[i];
    ManifestEntry e{s.label + 1, {}};
    for (int c = 0; c < o.split; ++c) {
      const int width = c + 1 == o.split ? o.spec.dim - per * c : per;
      FeatureSequence part;
      part.frames = s.channels.front().frames.middleCols(per * c, width);
      char name[64];
      std::snprintf(name, sizeof(name), "seq/%05zu_c%d.bin", i, c + 1);
      save_sequence((dir / name).string(), part);
      e.paths.push_back(name);
    }
    const auto j = static_cast<double>(i / static_cast<std::size_t>(o.spec.classes));
    const bool held_out = std::floor((j + 1) * o.test_fraction) > std::floor(j * o.test_fraction);
    (held_out ? test : train).entries.push_back(e);
    all.entries.push_back(std::move(e));
  }
  save_manifest((dir / "all.txt").string(), all);
  save_manifest((dir / "train.txt").string(), train);
  save_manifest((dir / "test.txt").string(), test);
  write_file((dir / "generator.txt").string(), [&](std::ostream& out) {
    const auto& s = o.spec;
    out << "classes " << s.classes << "\ncodewords " << s.codewords << "\ndim " << s.dim << "\nsequences "
        << s.sequences << "\nframes " << s.frames << "\nrho " << format_double(s.rho) << "\nseed " << s.seed
        << "\nrare_per_class " << s.rare_per_class << "\ncenter_scale " << format_double(s.center_scale)
        << "\nspread " << format_double(s.spread) << "\nrare_offset " << format_double(s.rare_offset)
        << "\nshared_centers\n";
    for (Eigen::Index k = 0; k < ds.shared_centers.cols(); ++k) write_row(out, ds.shared_centers.col(k));
    for (std::size_t c = 0; c < ds.rare_centers.size(); ++c) {
      out << "rare_centers " << c + 1 << '\n';
      for (Eigen::Index k = 0; k < ds.rare_centers[c].cols(); ++k) write_row(out, ds.rare_centers[c].col(k));
    }
  });
  std::cout << "generated " << ds.samples.size() << " sequences (" << train.entries.size() << " train, "
            << test.entries.size() << " test), " << o.spec.classes << " classes, " << o.spec.frames
            << " frames of dimension " << o.spec.dim << ", rho " << o.spec.rho << " -> "
            << o.out << '\n';
  return 0;
}

struct TrainKMeansOptions {
  DataOptions data;
  KMeansConfig kmeans;
  bool zscore = true;
  std::string norm_out;
  std::string out;
};

int cmd_train_kmeans(TrainKMeansOptions o) {
  LoadedData d = load_data(o.data, o.data.manifest);
  if (o.zscore) {
    const NormalizationStats stats = stage("fitting z-score", [&] { return zscore_fit(d.samples); });
    apply_norm(stats, d.samples);
    if (o.norm_out.empty()) o.norm_out = o.out + ".norm";
    stage("writing " + o.norm_out, [&] {
      save_norm(o.norm_out, stats);
      return 0;
    });
  }
  o.kmeans.seed = o.data.seed;
  const std::size_t channels = d.samples.front().channels.size();
  write_file(o.out, [&](std::ostream& out) {
    for (std::size_t c = 0; c < channels; ++c) {
      const KMeansResult r = stage("kmeans", [&] { return kmeans_fit_detailed(pool_frames(d.samples, c), o.kmeans); });
      save_codebook(out, r.codebook);
      std::cout << "channel " << c + 1 << ": " << r.codebook.size() << " words, best restart " << r.best_restart + 1
                << " of " << o.kmeans.restarts << ", sse " << format_double(r.sse) << '\n';
    }
  });
  return 0;
}

struct MapOptions {
  std::string kind = "none";
  int samples = 2;
  double period = 0.5;
};

void add_map_options(CLI::App* cmd, MapOptions& o) {
  cmd->add_option("--feature-map", o.kind, "feature map layer")
      ->check(CLI::IsMember({"none", "hellinger", "chi2", "intersection"}));
  cmd->add_option("--map-samples", o.samples, "feature map samples n")->check(CLI::NonNegativeNumber);
  cmd->add_option("--map-period", o.period, "feature map period L")->check(CLI::PositiveNumber);
}

struct TrainNetOptions {
  DataOptions data;
  MapOptions map;
  std::string strategy = "scratch";
  std::string codebook;
  std::string init_model;
  int codewords = 32;
  std::string assignment = "soft";
  std::string optimizer = "rprop";
  double learning_rate = 0.1;
  int batch_size = 0;
  int epochs = 500;
  double tolerance = 1e-6;
  bool zscore = true;
  std::string log;
  std::string out;
};

int cmd_train_net(TrainNetOptions o) {
  LoadedData d = load_data(o.data, o.data.manifest);
  if (!o.data.norm.empty()) {
    apply_norm(stage("loading normalization", [&] { return load_norm(o.data.norm); }), d.samples);
  } else if (o.zscore) {
    const NormalizationStats stats = stage("fitting z-score", [&] { return zscore_fit(d.samples); });
    apply_norm(stats, d.samples);
    stage("writing normalization", [&] {
      save_norm(o.out + ".norm", stats);
      return 0;
    });
  }
  TrainConfig cfg;
  cfg.strategy = parse_strategy(o.strategy);
  cfg.optimizer = parse_optimizer(o.optimizer);
  cfg.learning_rate = o.learning_rate;
  cfg.batch_size = o.batch_size;
  cfg.max_epochs = o.epochs;
  cfg.tolerance = o.tolerance;
  cfg.seed = o.data.seed;
  cfg.top_assignment = parse_assignment(o.assignment);

  const auto map = make_map_spec(o.map.kind, o.map.samples, o.map.period);
  std::vector<Eigen::Index> dims;
  for (const auto& c : d.samples.front().channels) dims.push_back(c.dim());

  std::optional<std::vector<QuantLayer>> init;
  if (!o.init_model.empty()) {
    init = stage("loading initial model", [&] { return load_model(o.init_model).quant(); });
  } else if (!o.codebook.empty()) {
    init = quant_from_codebooks(load_codebooks(o.codebook));
  }
  const Eigen::Index words = init ? init->front().size() : o.codewords;
  BowNetwork net = stage("initializing network", [&] {
    return initial_network(cfg.strategy, dims, words, d.manifest.num_classes, map, o.data.seed,
                           init ? &*init : nullptr);
  });
  TrainResult r = stage("training", [&] { return train(std::move(net), d.samples, cfg); });
  write_file(o.out, [&](std::ostream& out) { save_model(out, r.net); });
  if (!o.log.empty()) write_file(o.log, [&](std::ostream& out) { write_training_log(out, r.log); });
  const EpochRecord& last = r.log.back();
  std::cout << "epochs " << last.epoch << " loss " << format_double(last.loss) << " accuracy "
            << format_double(last.accuracy) << (r.converged ? " (converged)" : "") << '\n';
  return 0;
}

struct EncodeOptions {
  DataOptions data;
  std::string model;
  std::string codebook;
  std::string assignment = "soft";
  std::string out;
};

BowNetwork network_for_encoding(const std::string& model, const std::string& codebook, int classes) {
  if (!model.empty()) return stage("loading model", [&] { return load_model(model); });
  require(!codebook.empty(), "either --model or --codebook is required");
  return BowNetwork::with_random_top(quant_from_codebooks(load_codebooks(codebook)), std::nullopt, classes, 0);
}

void prepare(DataOptions& data, LoadedData& d) {
  if (!data.norm.empty())
    apply_norm(stage("loading normalization", [&] { return load_norm(data.norm); }), d.samples);
}

int cmd_encode(EncodeOptions o) {
  LoadedData d = load_data(o.data, o.data.manifest);
  prepare(o.data, d);
  const BowNetwork net = network_for_encoding(o.model, o.codebook, d.manifest.num_classes);
  const Assignment a = parse_assignment(o.assignment);
  std::vector<std::vector<Histogram>> rows;
  for (const auto& s : d.samples) rows.push_back(stage("encoding", [&] { return encode(net, s.channels, a); }));
  write_file(o.out, [&](std::ostream& out) {
    for (std::size_t c = 0; c < static_cast<std::size_t>(net.num_channels()); ++c) write_histograms(out, rows, c);
  });
  std::cout << "encoded " << rows.size() << " sequences into " << net.num_channels() << " x " << net.num_words()
            << " histograms\n";
  return 0;
}

struct ClassifyOptions {
  DataOptions data;
  std::string model;
  std::string codebook;
  std::string assignment = "soft";
  std::string mode = "network";
  std::string kernel = "chi2";
  std::string train_manifest;
  std::string out;
};

/// One-vs-rest kernel expansions with class-mean coefficients: the positive
/// class gets alpha = 1/N_c, the rest alpha = 1/N_rest.
std::vector<SvmExpansion> mean_expansions(const std::vector<Vector>& hists, const std::vector<int>& labels,
                                          int classes, KernelKind kind) {
  std::vector<SvmExpansion> out;
  for (int c = 0; c < classes; ++c) {
    SvmExpansion e;
    e.kernel = kind;
    e.support = hists;
    e.alpha.resize(static_cast<Eigen::Index>(hists.size()));
    const auto pos = std::count(labels.begin(), labels.end(), c);
    const auto neg = static_cast<long>(labels.size()) - pos;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const bool p = labels[i] == c;
      e.labels.push_back(p ? 1 : -1);
      e.alpha[static_cast<Eigen::Index>(i)] = 1.0 / static_cast<double>(std::max<long>(p ? pos : neg, 1));
    }
    out.push_back(std::move(e));
  }
  return out;
}

int cmd_classify(ClassifyOptions o) {
  LoadedData d = load_data(o.data, o.data.manifest);
  prepare(o.data, d);
  const int classes = d.manifest.num_classes;
  const BowNetwork net = network_for_encoding(o.model, o.codebook, classes);
  const Assignment a = parse_assignment(o.assignment);
  Matrix scores(static_cast<Eigen::Index>(d.samples.size()), classes);

  if (o.mode == "network") {
    require(!o.model.empty(), "network mode needs --model");
    for (std::size_t i = 0; i < d.samples.size(); ++i)
      scores.row(static_cast<Eigen::Index>(i)) =
          stage("classifying", [&] { return forward(net, d.samples[i].channels, a); }).transpose();
  } else {
    require(!o.train_manifest.empty(), "kernel mode needs --train-manifest");
    LoadedData tr = load_data(o.data, o.train_manifest);
    prepare(o.data, tr);
    auto hists_of = [&](const std::vector<LabeledSample>& ss) {
      std::vector<std::vector<Histogram>> out;
      for (const auto& s : ss) out.push_back(stage("encoding", [&] { return encode(net, s.channels, a); }));
      return out;
    };
    const auto train_h = hists_of(tr.samples);
    const auto test_h = hists_of(d.samples);
    std::vector<int> labels;
    for (const auto& s : tr.samples) labels.push_back(s.label);
    auto joined = [](const std::vector<Histogram>& hs) {
      Eigen::Index n = 0;
      for (const auto& h : hs) n += h.values.size();
      Vector v(n);
      n = 0;
      for (const auto& h : hs) {
        v.segment(n, h.values.size()) = h.values;
        n += h.values.size();
      }
      return v;
    };
    if (o.kernel == "rbf-chi2") {
      std::vector<std::vector<Vector>> per_channel(static_cast<std::size_t>(net.num_channels()));
      std::vector<ChannelHistograms> train_c;
      for (const auto& hs : train_h) {
        ChannelHistograms ch;
        for (std::size_t c = 0; c < hs.size(); ++c) {
          per_channel[c].push_back(hs[c].values);
          ch.push_back(hs[c].values);
        }
        train_c.push_back(std::move(ch));
      }
      const auto params = stage("estimating channel means", [&] { return estimate_channel_means(per_channel); });
      // Expansion over channel-stacked histograms; the kernel splits them back.
      std::vector<Vector> stacked;
      for (const auto& hs : train_h) stacked.push_back(joined(hs));
      const auto exps = mean_expansions(stacked, labels, classes, KernelKind::chi2);
      const Eigen::Index m = net.num_words();
      auto split = [&](const Eigen::Ref<const Vector>& v) {
        ChannelHistograms ch;
        for (Eigen::Index c = 0; c < net.num_channels(); ++c) ch.push_back(v.segment(c * m, m));
        return ch;
      };
      auto kernel = [&](const Vector& a1, const Eigen::Ref<const Vector>& b1) {
        return multichannel_rbf_chi2(split(a1), split(b1), params);
      };
      for (std::size_t i = 0; i < test_h.size(); ++i) {
        const Vector h = joined(test_h[i]);
        for (int c = 0; c < classes; ++c)
          scores(static_cast<Eigen::Index>(i), c) = svm_decision(exps[static_cast<std::size_t>(c)], h, kernel);
      }
    } else {
      std::vector<Vector> stacked;
      for (const auto& hs : train_h) stacked.push_back(joined(hs));
      const auto exps = mean_expansions(stacked, labels, classes, parse_kernel_kind(o.kernel));
      for (std::size_t i = 0; i < test_h.size(); ++i) {
        const Vector h = joined(test_h[i]);
        for (int c = 0; c < classes; ++c)
          scores(static_cast<Eigen::Index>(i), c) = svm_decision(exps[static_cast<std::size_t>(c)], h);
      }
    }
  }

  write_file(o.out, [&](std::ostream& out) {
    out << "BOWPRED1 " << scores.rows() << ' ' << classes << '\n';
    for (Eigen::Index i = 0; i < scores.rows(); ++i) {
      out << argmax(scores.row(i).transpose()) + 1 << ' ' << d.samples[static_cast<std::size_t>(i)].label + 1;
      for (int c = 0; c < classes; ++c) out << ' ' << format_double(scores(i, c));
      out << '\n';
    }
  });
  std::cout << "classified " << scores.rows() << " sequences\n";
  return 0;
}

struct EvalOptions {
  std::string predictions;
  std::string out;
};

int cmd_eval(const EvalOptions& o) {
  std::vector<int> pred, labels;
  Matrix scores = stage("loading predictions", [&] {
    std::ifstream in(o.predictions);
    require(static_cast<bool>(in), "cannot open " + o.predictions);
    std::string line, magic;
    long long n = 0, c = 0;
    require(static_cast<bool>(std::getline(in, line)), "empty file");
    std::istringstream hs(line);
    require(static_cast<bool>(hs >> magic >> n >> c) && magic == "BOWPRED1" && n >= 1 && c >= 1, "bad header");
    Matrix s(n, c);
    for (long long i = 0; i < n; ++i) {
      const Vector row = read_row(in, c + 2, "prediction row");
      pred.push_back(static_cast<int>(row[0]) - 1);
      labels.push_back(static_cast<int>(row[1]) - 1);
      s.row(i) = row.tail(c).transpose();
    }
    return s;
  });
  const double acc = stage("evaluating", [&] { return accuracy(pred, labels); });
  const double map = stage("evaluating", [&] { return mean_average_precision(scores, labels); });
  std::cout << "accuracy " << format_double(acc) << '\n' << "mAP " << format_double(map) << '\n';
  if (!o.out.empty())
    write_file(o.out, [&](std::ostream& out) {
      out << "accuracy=" << format_double(acc) << " mAP=" << format_double(map) << " n=" << labels.size() << '\n';
    });
  return 0;
}

/// CLI11 reads config files only at the top level, so `--config` given after
/// the subcommand is moved in front of it.
std::vector<std::string> hoist_config(int argc, char** argv) {
  std::vector<std::string> config, rest;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--config" && i + 1 < argc) {
      config = {arg, argv[++i]};
    } else if (arg.starts_with("--config=")) {
      config = {arg};
    } else {
      rest.push_back(arg);
    }
  }
  rest.insert(rest.begin(), config.begin(), config.end());
  std::reverse(rest.begin(), rest.end());
  return rest;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bag-of-words recurrent network toolkit"};
  app.require_subcommand(1);
  app.set_config("--config", "", "INI/TOML file; options go under a [<command>] section");

  GenSynthOptions gs;
  auto* gen = app.add_subcommand("gen-synth", "generate a synthetic rare-word dataset");
  gen->add_option("--classes", gs.spec.classes)->check(CLI::PositiveNumber);
  gen->add_option("--dim", gs.spec.dim)->check(CLI::PositiveNumber);
  gen->add_option("--codewords", gs.spec.codewords, "shared latent components")->check(CLI::PositiveNumber);
  gen->add_option("--sequences", gs.spec.sequences)->check(CLI::PositiveNumber);
  gen->add_option("--frames", gs.spec.frames)->check(CLI::PositiveNumber);
  gen->add_option("--rho", gs.spec.rho, "per-frame probability of a class-exclusive rare component")
      ->check(CLI::Range(0.0, 1.0));
  gen->add_option("--rare-per-class", gs.spec.rare_per_class)->check(CLI::PositiveNumber);
  gen->add_option("--spread", gs.spec.spread)->check(CLI::PositiveNumber);
  gen->add_option("--rare-offset", gs.spec.rare_offset)->check(CLI::NonNegativeNumber);
  gen->add_option("--center-scale", gs.spec.center_scale)->check(CLI::PositiveNumber);
  gen->add_option("--split", gs.split, "write each frame as this many descriptor channels")->check(CLI::PositiveNumber);
  gen->add_option("--test-fraction", gs.test_fraction)->check(CLI::Range(0.0, 1.0));
  gen->add_option("--seed", gs.spec.seed);
  gen->add_option("--out", gs.out, "output directory")->required();

  TrainKMeansOptions tk;
  auto* tkm = app.add_subcommand("train-kmeans", "multi-restart kMeans codebook");
  add_data_options(tkm, tk.data);
  tkm->add_option("--codewords", tk.kmeans.num_words)->check(CLI::PositiveNumber);
  tkm->add_option("--restarts", tk.kmeans.restarts)->check(CLI::PositiveNumber);
  tkm->add_option("--max-iter", tk.kmeans.max_iterations)->check(CLI::PositiveNumber);
  tkm->add_option("--tolerance", tk.kmeans.tolerance)->check(CLI::NonNegativeNumber);
  tkm->add_flag("!--no-zscore", tk.zscore, "skip z-score normalization");
  tkm->add_option("--norm-out", tk.norm_out, "normalization statistics output (default <out>.norm)");
  tkm->add_option("--out", tk.out, "codebook output")->required();

  TrainNetOptions tn;
  auto* tnet = app.add_subcommand("train-net", "train the recurrent bag-of-words network");
  add_data_options(tnet, tn.data);
  add_map_options(tnet, tn.map);
  tnet->add_option("--norm", tn.data.norm, "apply these normalization statistics instead of fitting");
  tnet->add_option("--strategy", tn.strategy)->check(CLI::IsMember({"scratch", "init-linear", "retrain-top"}));
  tnet->add_option("--codebook", tn.codebook, "initial codebook (init-linear, retrain-top)");
  tnet->add_option("--init-model", tn.init_model, "initial model whose quantization layer is reused");
  tnet->add_option("--codewords", tn.codewords, "visual words for scratch training")->check(CLI::PositiveNumber);
  tnet->add_option("--assignment", tn.assignment, "frozen-feature assignment for retrain-top")
      ->check(CLI::IsMember({"soft", "hard"}));
  tnet->add_option("--optimizer", tn.optimizer)->check(CLI::IsMember({"rprop", "sgd"}));
  tnet->add_option("--learning-rate", tn.learning_rate)->check(CLI::PositiveNumber);
  tnet->add_option("--batch-size", tn.batch_size, "sgd minibatch size (0 = full batch)")->check(CLI::NonNegativeNumber);
  tnet->add_option("--epochs", tn.epochs)->check(CLI::PositiveNumber);
  tnet->add_option("--tolerance", tn.tolerance)->check(CLI::NonNegativeNumber);
  tnet->add_flag("!--no-zscore", tn.zscore, "skip z-score normalization");
  tnet->add_option("--log", tn.log, "training log output");
  tnet->add_option("--out", tn.out, "model output")->required();

  EncodeOptions en;
  auto* enc = app.add_subcommand("encode", "compute bag-of-words histograms");
  add_data_options(enc, en.data);
  enc->add_option("--norm", en.data.norm, "normalization statistics");
  enc->add_option("--model", en.model);
  enc->add_option("--codebook", en.codebook);
  enc->add_option("--assignment", en.assignment)->check(CLI::IsMember({"soft", "hard"}));
  enc->add_option("--out", en.out, "histogram output")->required();

  ClassifyOptions cl;
  auto* cls = app.add_subcommand("classify", "score sequences with the network or a kernel expansion");
  add_data_options(cls, cl.data);
  cls->add_option("--norm", cl.data.norm, "normalization statistics");
  cls->add_option("--model", cl.model);
  cls->add_option("--codebook", cl.codebook);
  cls->add_option("--assignment", cl.assignment)->check(CLI::IsMember({"soft", "hard"}));
  cls->add_option("--mode", cl.mode)->check(CLI::IsMember({"network", "kernel"}));
  cls->add_option("--kernel", cl.kernel)->check(CLI::IsMember({"hellinger", "chi2", "intersection", "rbf-chi2"}));
  cls->add_option("--train-manifest", cl.train_manifest, "training set for kernel mode");
  cls->add_option("--out", cl.out, "predictions output")->required();

  EvalOptions ev;
  auto* evl = app.add_subcommand("eval", "accuracy and mean average precision");
  evl->add_option("--predictions", ev.predictions)->required();
  evl->add_option("--out", ev.out, "metrics output");

  try {
    app.parse(hoist_config(argc, argv));
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*gen) {
      if (gs.split > gs.spec.dim) {
        std::cerr << "error: --split exceeds --dim\n";
        return 2;
      }
      return cmd_gen_synth(gs);
    }
    if (*tkm) return cmd_train_kmeans(tk);
    if (*tnet) return cmd_train_net(tn);
    if (*enc) return cmd_encode(en);
    if (*cls) return cmd_classify(cl);
    if (*evl) return cmd_eval(ev);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
