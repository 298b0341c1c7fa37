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

// Acceptance checks. Prints one PASS/FAIL line per criterion:
//
//   acceptance            run all criteria
//   acceptance --only N   run criterion N (1-10)
//
// Exit status is 0 only if every selected criterion passes.

#include "support/cli_runner.hpp"
#include "support/oracles.hpp"
#include "support/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <sstream>
#include <string>

// Heap allocation counter. Eigen allocates through malloc, so malloc itself is
// interposed; counting is switched on only around the measured call.
extern "C" void* __libc_malloc(std::size_t);

namespace {
thread_local bool g_count_allocations = false;
thread_local std::size_t g_allocations = 0;
}  // namespace

extern "C" void* malloc(std::size_t n) {
  if (g_count_allocations) ++g_allocations;
  return __libc_malloc(n);
}

namespace bowrnn {
namespace {

using testing::Rng;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

Outcome network_matches_kmeans_posterior() {
  const auto start = std::chrono::steady_clock::now();
  Rng rng(1001);
  double worst_library = 0.0, worst_oracle = 0.0;
  for (int c = 0; c < 100; ++c) {
    const Codebook cb = testing::random_codebook(rng, testing::uniform_int(rng, 1, 16), testing::uniform_int(rng, 1, 64));
    const QuantLayer net = to_network(cb);
    for (int i = 0; i < 1000; ++i) {
      const Vector x = testing::random_vector(rng, cb.dim(), 2.0);
      const Vector p_nn = quantize(net, x);
      worst_library = std::max(worst_library, (p_nn - posterior(cb, x, true)).cwiseAbs().maxCoeff());
      worst_oracle = std::max(
          worst_oracle, (p_nn - testing::gaussian_posterior(cb.words(), cb.prior(), x)).cwiseAbs().maxCoeff());
    }
  }
  const double t = seconds_since(start);
  return {worst_library <= 1e-12 && worst_oracle <= 1e-12 && t < 10.0,
          "100 codebooks x 1000 inputs: max|p_nn - p_km| " + fmt(worst_library) + ", vs long-double oracle " +
              fmt(worst_oracle) + " (bound 1e-12), " + fmt(t) + " s (bound 10 s)"};
}

Outcome conversion_round_trip() {
  Rng rng(1002);
  bool words_exact = true;
  double worst_prior = 0.0;
  for (int c = 0; c < 100; ++c) {
    const Codebook cb = testing::random_codebook(rng, testing::uniform_int(rng, 1, 16), testing::uniform_int(rng, 1, 64));
    const Codebook back = from_network(to_network(cb));
    words_exact = words_exact && back.words() == cb.words();
    worst_prior = std::max(worst_prior, (back.prior() - cb.prior()).cwiseAbs().maxCoeff());
  }
  return {words_exact && worst_prior <= 1e-12, std::string("100 codebooks: words ") +
                                                   (words_exact ? "exact" : "NOT exact") + ", max prior error " +
                                                   fmt(worst_prior) + " (bound 1e-12)"};
}

Outcome gradient_matches_oracles() {
  const auto start = std::chrono::steady_clock::now();
  Rng rng(1003);
  double worst_abs = 0.0, worst_rel = 0.0;
  for (int k = 0; k < 50; ++k) {
    const testing::NetInstance inst = testing::random_instance(rng, testing::map_variant(k));
    const GradientResult g = gradient(inst.net, inst.channels, inst.label);
    worst_abs = std::max(worst_abs, testing::max_abs_difference(
                                        g.gradient, testing::unrolled_gradient(inst.net, inst.channels, inst.label)));
    const Vector fd = testing::finite_difference_gradient(inst.net, inst.channels, inst.label, 1e-5);
    worst_rel = std::max(worst_rel, testing::max_relative_error(pack_gradient(g.gradient, true), fd, 1e-6));
  }
  const double t = seconds_since(start);
  return {worst_abs <= 1e-10 && worst_rel <= 1e-5 && t < 60.0,
          "50 instances: max |g - unrolled| " + fmt(worst_abs) + " (bound 1e-10), max relative FD error " +
              fmt(worst_rel) + " (bound 1e-5, denominator floor 1e-6), " + fmt(t) + " s (bound 60 s)"};
}

Outcome memory_constant_in_length() {
  Rng rng(1004);
  const BowNetwork net({QuantLayer{testing::random_matrix(rng, 6, 8), testing::random_vector(rng, 8)}},
                       FeatureMapSpec{KernelKind::chi2, 2, 0.5}, testing::random_matrix(rng, 40, 3),
                       testing::random_vector(rng, 3));
  struct Count {
    std::size_t buffers, doubles, mallocs;
  };
  auto measure = [&](Eigen::Index T) {
    const std::vector<FeatureSequence> seq{testing::random_sequence(rng, T, 6)};
    BufferCounter counter;
    g_allocations = 0;
    g_count_allocations = true;
    const GradientResult g = gradient(net, seq, 1, &counter);
    g_count_allocations = false;
    if (!std::isfinite(g.loss)) std::abort();
    return Count{counter.buffers, counter.doubles, g_allocations};
  };
  const Count short_run = measure(100), long_run = measure(100000);
  const bool pass = short_run.buffers == long_run.buffers && short_run.doubles == long_run.doubles &&
                    short_run.mallocs == long_run.mallocs;
  return {pass, "T=100: " + std::to_string(short_run.buffers) + " buffers / " + std::to_string(short_run.doubles) +
                    " doubles / " + std::to_string(short_run.mallocs) + " heap allocations; T=100000: " +
                    std::to_string(long_run.buffers) + " / " + std::to_string(long_run.doubles) + " / " +
                    std::to_string(long_run.mallocs)};
}

Outcome feature_map_fidelity() {
  const FeatureMapSpec hell{KernelKind::hellinger, 2, 0.5};
  const FeatureMapSpec chi{KernelKind::chi2, 2, 0.5};
  const FeatureMapSpec inter{KernelKind::intersection, 2, 0.5};
  double hell_err = 0.0, chi_err = 0.0, inter_err = 0.0;
  for (int i = 1; i <= 100; ++i) {
    for (int j = 1; j <= 100; ++j) {
      const double x = i / 100.0, y = j / 100.0;
      hell_err = std::max(hell_err, std::abs(map_scalar(hell, x).dot(map_scalar(hell, y)) - std::sqrt(x * y)));
      for (auto [spec, err] : {std::pair{&chi, &chi_err}, std::pair{&inter, &inter_err}}) {
        const double exact = testing::exact_kernel(spec->kernel, x, y);
        const double approx = map_scalar(*spec, x).dot(map_scalar(*spec, y));
        *err = std::max(*err, std::abs(approx - exact) / std::max(exact, 1e-3));
      }
    }
  }
  double deriv_err = 0.0, gamma_err = 0.0;
  for (const auto& spec : {hell, chi, inter}) {
    for (int i = 1; i <= 100; ++i) {
      const double x = i / 100.0, h = 1e-5 * x;
      const Vector d = map_derivative_scalar(spec, x);
      const Vector fd = (map_scalar(spec, x + h) - map_scalar(spec, x - h)) / (2.0 * h);
      for (Eigen::Index k = 0; k < d.size(); ++k)
        deriv_err = std::max(deriv_err, std::abs(d[k] - fd[k]) / std::max(std::abs(fd[k]), 1e-12));
      gamma_err = std::max(gamma_err, std::abs(map_gamma(spec, x) * 2.0 * x - 1.0));
    }
  }
  const bool pass = hell_err <= 1e-12 && chi_err <= 0.05 && inter_err <= 0.05 && deriv_err <= 1e-6 &&
                    gamma_err <= 1e-12;
  return {pass, "hellinger " + fmt(hell_err) + " (bound 1e-12); chi2 " + pct(chi_err) + ", intersection " +
                    pct(inter_err) + " (bound 5%); derivative vs FD " + fmt(deriv_err) +
                    " (bound 1e-6); |gamma*2x - 1| " + fmt(gamma_err) + " (bound 1e-12)"};
}

Outcome svm_equivalence() {
  Rng rng(1006);
  const FeatureMapSpec hell{KernelKind::hellinger, 0, 1.0};
  double worst = 0.0;
  std::size_t counted = 0, agree = 0;
  for (int e = 0; e < 100; ++e) {
    const Eigen::Index M = testing::uniform_int(rng, 2, 32);
    SvmExpansion exp;
    exp.kernel = KernelKind::hellinger;
    const int I = testing::uniform_int(rng, 1, 20);
    exp.alpha.resize(I);
    for (int i = 0; i < I; ++i) {
      exp.support.push_back(testing::random_simplex(rng, M));
      exp.alpha[i] = testing::uniform(rng, 0.0, 2.0);
      exp.labels.push_back(testing::uniform_int(rng, 0, 1) ? 1 : -1);
    }
    exp.bias = testing::uniform(rng, -0.5, 0.5);
    const Vector w = mapped_weights(exp, hell);
    for (int k = 0; k < 100; ++k) {
      const Vector h = testing::random_simplex(rng, M);
      const double a = svm_decision(exp, h), b = svm_decision_mapped(w, exp.bias, hell, h);
      worst = std::max(worst, std::abs(a - b));
      if (std::abs(a) < 1e-9) continue;
      ++counted;
      agree += (a > 0) == (b > 0);
    }
  }
  const double rate = static_cast<double>(agree) / static_cast<double>(counted);
  return {worst <= 1e-10 && agree == counted, "100 expansions x 100 histograms: max |difference| " + fmt(worst) +
                                                  " (bound 1e-10), sign agreement " + std::to_string(agree) + "/" +
                                                  std::to_string(counted) + " (" + pct(rate) + ")"};
}

Outcome order_invariance() {
  Rng rng(1007);
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    const testing::NetInstance inst = testing::random_instance(rng, testing::map_variant(k), 4, 6, 3, 40);
    std::vector<FeatureSequence> shuffled;
    for (const auto& c : inst.channels) shuffled.push_back(testing::permuted(c, rng));
    for (Assignment a : {Assignment::soft, Assignment::hard}) {
      const auto h1 = encode(inst.net, inst.channels, a), h2 = encode(inst.net, shuffled, a);
      for (std::size_t c = 0; c < h1.size(); ++c)
        worst = std::max(worst, (h1[c].values - h2[c].values).cwiseAbs().maxCoeff());
    }
    worst = std::max(worst, std::abs(loss(inst.net, inst.channels, inst.label) - loss(inst.net, shuffled, inst.label)));
    const Vector g1 = pack_gradient(gradient(inst.net, inst.channels, inst.label).gradient, true);
    const Vector g2 = pack_gradient(gradient(inst.net, shuffled, inst.label).gradient, true);
    worst = std::max(worst, (g1 - g2).cwiseAbs().maxCoeff());
  }
  return {worst <= 1e-9, "100 cases: max change in encode/loss/gradient " + fmt(worst) + " (bound 1e-9)"};
}

constexpr std::uint64_t kSeeds[] = {1, 2, 3, 4, 5};

struct SeedMeans {
  double kmeans_soft = 0.0, kmeans_hard = 0.0, init_linear = 0.0, scratch = 0.0;
  double seconds = 0.0;
  std::string per_seed;
};

SeedMeans comparison_means(bool run_scratch) {
  const auto start = std::chrono::steady_clock::now();
  SeedMeans m;
  testing::ComparisonOptions opt;
  opt.run_scratch = run_scratch;
  for (std::uint64_t seed : kSeeds) {
    SyntheticSpec spec;
    spec.seed = seed;
    const testing::ComparisonResult r = testing::run_comparison(spec, opt);
    m.kmeans_soft += r.kmeans_soft / 5.0;
    m.kmeans_hard += r.kmeans_hard / 5.0;
    m.init_linear += r.init_linear / 5.0;
    m.scratch += r.scratch / 5.0;
    m.per_seed += " [seed " + std::to_string(seed) + ": km-soft " + fmt(r.kmeans_soft) + " km-hard " +
                  fmt(r.kmeans_hard) + " init-linear " + fmt(r.init_linear) +
                  (run_scratch ? " scratch " + fmt(r.scratch) : std::string()) + "]";
  }
  m.seconds = seconds_since(start);
  return m;
}

Outcome discriminative_beats_kmeans() {
  const SeedMeans m = comparison_means(true);
  const double gain = m.init_linear - m.kmeans_soft;
  return {gain > 0.0 && m.seconds < 300.0,
          "mean held-out accuracy over 5 seeds: kMeans+retrain-top " + pct(m.kmeans_soft) + ", init-linear " +
              pct(m.init_linear) + " (improvement " + pct(gain) + "), scratch " + pct(m.scratch) + "; " +
              fmt(m.seconds) + " s single-core (bound 300 s);" + m.per_seed};
}

Outcome soft_matches_hard() {
  const SeedMeans m = comparison_means(false);
  const double diff = std::abs(m.kmeans_soft - m.kmeans_hard);
  return {diff <= 0.02, "mean accuracy over 5 seeds: soft " + pct(m.kmeans_soft) + ", hard " + pct(m.kmeans_hard) +
                            ", |difference| " + pct(diff) + " (bound 2.00%)"};
}

std::map<std::string, std::string> snapshot(const testing::CliRunner& r) {
  std::map<std::string, std::string> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(r.dir()))
    if (e.is_regular_file()) {
      const std::string rel = std::filesystem::relative(e.path(), r.dir()).string();
      files[rel] = r.read(rel);
    }
  return files;
}

Outcome cli_determinism() {
  const char* commands[] = {
      "gen-synth --sequences 24 --frames 30 --dim 4 --seed 11 --out ds",
      "gen-synth --sequences 12 --frames 20 --dim 4 --split 2 --seed 12 --out ds2",
      "train-kmeans --manifest ds/train.txt --codewords 8 --restarts 3 --seed 2 --out cb.txt",
      "train-kmeans --manifest ds2/train.txt --channels separate --codewords 5 --subsample 10 --seed 3 --out cb2.txt",
      "train-net --manifest ds/train.txt --norm cb.txt.norm --strategy init-linear --codebook cb.txt "
      "--feature-map chi2 --epochs 15 --log train.log --out model.txt",
      "train-net --manifest ds/train.txt --codewords 6 --strategy scratch --epochs 10 --log scratch.log "
      "--seed 4 --out scratch.txt",
      "train-net --manifest ds/train.txt --norm cb.txt.norm --strategy retrain-top --codebook cb.txt "
      "--assignment hard --epochs 10 --out top.txt",
      "train-net --manifest ds/train.txt --optimizer sgd --batch-size 4 --learning-rate 0.1 --codewords 4 "
      "--epochs 5 --seed 5 --out sgd.txt",
      "train-net --manifest ds2/train.txt --channels separate --codewords 4 --feature-map hellinger --epochs 5 "
      "--out sep.txt",
      "encode --manifest ds/test.txt --norm cb.txt.norm --model model.txt --out hist.txt",
      "encode --manifest ds/test.txt --norm cb.txt.norm --codebook cb.txt --assignment hard --out hard.txt",
      "classify --manifest ds/test.txt --norm cb.txt.norm --model model.txt --out pred.txt",
      "classify --manifest ds/test.txt --norm cb.txt.norm --codebook cb.txt --mode kernel --kernel rbf-chi2 "
      "--train-manifest ds/train.txt --out kpred.txt",
      "eval --predictions pred.txt --out metrics.txt",
      "eval --predictions kpred.txt --out kmetrics.txt",
  };
  testing::CliRunner a("accept_a"), b("accept_b");
  for (const char* cmd : commands) {
    for (const testing::CliRunner* r : {&a, &b}) {
      if (const int rc = r->run(cmd); rc != 0) {
        return {false, std::string("command failed with exit ") + std::to_string(rc) + ": " + cmd + "\n" +
                           r->read("cli.out")};
      }
    }
  }
  const auto fa = snapshot(a), fb = snapshot(b);
  std::size_t same = 0;
  std::string differing;
  for (const auto& [name, content] : fa) {
    const auto it = fb.find(name);
    if (it != fb.end() && it->second == content)
      ++same;
    else
      differing += " " + name;
  }
  const bool pass = fa.size() == fb.size() && same == fa.size();
  return {pass, std::to_string(std::size(commands)) + " commands run twice: " + std::to_string(same) + "/" +
                    std::to_string(fa.size()) + " output files byte-identical" +
                    (differing.empty() ? "" : "; differing:" + differing)};
}

struct Criterion {
  const char* name;
  std::function<Outcome()> check;
};

const Criterion kCriteria[] = {
    {"kMeans posterior equals network quantization", network_matches_kmeans_posterior},
    {"codebook/network conversion round trip", conversion_round_trip},
    {"memory-efficient gradient vs unrolled and finite-difference oracles", gradient_matches_oracles},
    {"per-frame buffers independent of sequence length", memory_constant_in_length},
    {"feature map fidelity", feature_map_fidelity},
    {"kernel expansion vs mapped linear decision", svm_equivalence},
    {"frame order invariance", order_invariance},
    {"discriminative codebook vs kMeans codebook", discriminative_beats_kmeans},
    {"soft vs hard assignment", soft_matches_hard},
    {"CLI determinism", cli_determinism},
};

}  // namespace
}  // namespace bowrnn

int main(int argc, char** argv) {
  using namespace bowrnn;
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--only" && i + 1 < argc) {
      only = std::atoi(argv[++i]);
    } else {
      std::fprintf(stderr, "usage: %s [--only N]\n", argv[0]);
      return 2;
    }
  }
  if (only < 0 || only > static_cast<int>(std::size(kCriteria))) {
    std::fprintf(stderr, "criterion must be in 1..%zu\n", std::size(kCriteria));
    return 2;
  }
  warning_handler() = [](const std::string&) {};
  bool all = true;
  for (int n = 1; n <= static_cast<int>(std::size(kCriteria)); ++n) {
    if (only && n != only) continue;
    const Criterion& c = kCriteria[n - 1];
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    all = all && o.pass;
    std::printf("criterion %d %s: %s | %s | %.2f s\n", n, o.pass ? "PASS" : "FAIL", c.name, o.detail.c_str(),
                seconds_since(start));
    std::fflush(stdout);
  }
  return all ? 0 : 1;
}
