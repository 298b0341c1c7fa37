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

#include "support/oracles.hpp"

#include <gtest/gtest.h>

#include <sstream>

namespace bowrnn {
namespace {

using testing::Rng;

FrameMatrix rows(std::initializer_list<std::initializer_list<double>> values) {
  FrameMatrix m(static_cast<Eigen::Index>(values.size()), static_cast<Eigen::Index>(values.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& r : values) {
    Eigen::Index j = 0;
    for (double v : r) m(i, j++) = v;
    ++i;
  }
  return m;
}

Matrix square_corners() {
  Matrix w(2, 4);
  w << -1, -1, 1, 1,
       -1, 1, -1, 1;
  return w;
}

TEST(KMeans, TwoClustersInOneDimension) {
  KMeansConfig cfg;
  cfg.num_words = 2;
  const KMeansResult r = kmeans_fit_detailed(rows({{0.0}, {0.1}, {1.0}, {1.1}}), cfg);
  std::vector<double> w{r.codebook.words()(0, 0), r.codebook.words()(0, 1)};
  std::sort(w.begin(), w.end());
  EXPECT_NEAR(w[0], 0.05, 1e-12);
  EXPECT_NEAR(w[1], 1.05, 1e-12);
  EXPECT_NEAR(r.sse, 0.01, 1e-12);
  EXPECT_NEAR(r.codebook.prior().sum(), 1.0, 1e-12);
  EXPECT_NEAR(r.codebook.prior()[0], 0.5, 1e-15);
}

TEST(KMeans, OneWordPerDistinctPoint) {
  Rng rng(3);
  FrameMatrix data = testing::random_matrix(rng, 7, 3);
  KMeansConfig cfg;
  cfg.num_words = 7;
  const KMeansResult r = kmeans_fit_detailed(data, cfg);
  EXPECT_NEAR(r.sse, 0.0, 1e-20);
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    const double d = (r.codebook.words().colwise() - data.row(i).transpose()).colwise().squaredNorm().minCoeff();
    EXPECT_EQ(d, 0.0);
  }
}

TEST(KMeans, SingleWordIsCentroid) {
  KMeansConfig cfg;
  cfg.num_words = 1;
  const Codebook cb = kmeans_fit(rows({{1, 1}, {1, -1}, {-1, 1}, {-1, -1}}), cfg);
  EXPECT_NEAR(cb.word(0).norm(), 0.0, 1e-15);
}

TEST(KMeans, InsufficientDistinctData) {
  KMeansConfig cfg;
  cfg.num_words = 3;
  EXPECT_THROW(kmeans_fit(rows({{1.0}, {1.0}, {2.0}, {2.0}}), cfg), Error);
  try {
    kmeans_fit(rows({{1.0}, {1.0}, {2.0}}), cfg);
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("insufficient data"), std::string::npos);
  }
}

TEST(KMeans, SseNonIncreasingWithinEachRestart) {
  Rng rng(11);
  const FrameMatrix data = testing::random_matrix(rng, 300, 4, 2.0);
  KMeansConfig cfg;
  cfg.num_words = 9;
  cfg.seed = 5;
  const KMeansResult r = kmeans_fit_detailed(data, cfg);
  ASSERT_EQ(r.sse_traces.size(), 8u);
  for (const auto& trace : r.sse_traces) {
    ASSERT_FALSE(trace.empty());
    for (std::size_t i = 1; i < trace.size(); ++i) EXPECT_LE(trace[i], trace[i - 1] * (1.0 + 1e-12));
  }
}

TEST(KMeans, KeepsLowestSseRestart) {
  Rng rng(12);
  const FrameMatrix data = testing::random_matrix(rng, 200, 2, 3.0);
  KMeansConfig cfg;
  cfg.num_words = 6;
  const KMeansResult r = kmeans_fit_detailed(data, cfg);
  for (const auto& trace : r.sse_traces) EXPECT_LE(r.sse, trace.back() * (1.0 + 1e-12));
  EXPECT_NEAR(r.sse, sum_squared_distances(r.codebook, data), 1e-9 * r.sse);
}

TEST(KMeans, DeterministicForSeed) {
  Rng rng(13);
  const FrameMatrix data = testing::random_matrix(rng, 150, 3);
  KMeansConfig cfg;
  cfg.num_words = 5;
  cfg.seed = 42;
  const Codebook a = kmeans_fit(data, cfg);
  const Codebook b = kmeans_fit(data, cfg);
  EXPECT_EQ(a.words(), b.words());
}

TEST(Posterior, EquidistantCornersAreUniform) {
  const Codebook cb(square_corners());
  const Vector p = posterior(cb, Vector::Zero(2), false);
  for (Eigen::Index m = 0; m < 4; ++m) EXPECT_NEAR(p[m], 0.25, 1e-15);
}

TEST(Posterior, HandEvaluatedRatio) {
  Matrix w(1, 2);
  w << 0, 2;
  const Vector p = posterior(Codebook(w), Vector::Zero(1), false);
  const double e = std::exp(-2.0);
  EXPECT_NEAR(p[0], 1.0 / (1.0 + e), 1e-15);
  EXPECT_NEAR(p[0], 0.8808, 1e-4);
  EXPECT_NEAR(p[1], 0.1192, 1e-4);
}

TEST(Posterior, ZeroPriorAnnihilatesWord) {
  Matrix w(1, 2);
  w << 0, 2;
  Vector prior(2);
  prior << 1, 0;
  const Codebook cb(w, prior);
  for (double x : {-3.0, 0.0, 1.0, 2.0, 50.0}) {
    const Vector p = posterior(cb, Vector::Constant(1, x), true);
    EXPECT_EQ(p[0], 1.0);
    EXPECT_EQ(p[1], 0.0);
  }
}

TEST(Posterior, MatchesLongDoubleOracle) {
  Rng rng(21);
  for (int k = 0; k < 30; ++k) {
    const Codebook cb = testing::random_codebook(rng, testing::uniform_int(rng, 1, 16), testing::uniform_int(rng, 1, 64));
    for (int i = 0; i < 20; ++i) {
      const Vector x = testing::random_vector(rng, cb.dim(), 2.0);
      const Vector p = posterior(cb, x, true);
      EXPECT_NEAR(p.sum(), 1.0, 1e-12);
      EXPECT_LE((p - testing::gaussian_posterior(cb.words(), cb.prior(), x)).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

TEST(Posterior, RejectsBadInput) {
  const Codebook cb(square_corners());
  EXPECT_THROW(posterior(cb, Vector::Zero(3), false), Error);
  Vector x = Vector::Zero(2);
  x[1] = std::nan("");
  EXPECT_THROW(posterior(cb, x, false), Error);
}

TEST(HardAssign, NearestWordAndTies) {
  Matrix w(1, 2);
  w << 0, 2;
  const Codebook cb(w);
  EXPECT_EQ(hard_assign(cb, Vector::Constant(1, 0.5)), (Vector(2) << 1, 0).finished());
  // Exact tie at the midpoint: both posteriors equal, lowest index wins.
  const Vector p = posterior(cb, Vector::Constant(1, 1.0), false);
  EXPECT_EQ(p[0], p[1]);
  EXPECT_EQ(hard_assign(cb, Vector::Constant(1, 1.0)), (Vector(2) << 1, 0).finished());
  const Vector corner = hard_assign(Codebook(square_corners()), (Vector(2) << 0.9, 0.9).finished());
  EXPECT_EQ(corner, (Vector(4) << 0, 0, 0, 1).finished());
}

TEST(HardAssign, AgreesWithPosteriorArgmaxAndNearestWord) {
  Rng rng(22);
  for (int k = 0; k < 200; ++k) {
    const Codebook cb = testing::random_codebook(rng, 3, 8);
    const Vector x = testing::random_vector(rng, 3, 2.0);
    const Vector h = hard_assign(cb, x);
    Eigen::Index nearest;
    (cb.words().colwise() - x).colwise().squaredNorm().minCoeff(&nearest);
    EXPECT_EQ(h[nearest], 1.0);
    EXPECT_EQ(h.sum(), 1.0);
    Eigen::Index best;
    posterior(cb, x, true).maxCoeff(&best);
    EXPECT_EQ(hard_assign(cb, x, true)[best], 1.0);
  }
}

TEST(Conversion, WeightsAndBiasByHand) {
  Matrix w(2, 2);
  w << 0, 1,
       0, 1;
  const QuantLayer q = to_network(Codebook(w));
  EXPECT_EQ(q.weights, w);
  EXPECT_NEAR(q.bias[1] - q.bias[0], -1.0, 1e-15);
}

TEST(Conversion, SingleWordGivesUnitOutput) {
  Rng rng(23);
  const QuantLayer q = to_network(Codebook(testing::random_matrix(rng, 3, 1)));
  for (int i = 0; i < 5; ++i) EXPECT_EQ(quantize(q, testing::random_vector(rng, 3, 10.0))[0], 1.0);
}

TEST(Conversion, NetworkPosteriorEqualsCodebookPosterior) {
  Rng rng(24);
  double worst = 0.0;
  for (int k = 0; k < 50; ++k) {
    const Codebook cb = testing::random_codebook(rng, testing::uniform_int(rng, 1, 16), testing::uniform_int(rng, 1, 64));
    const QuantLayer q = to_network(cb);
    for (int i = 0; i < 100; ++i) {
      const Vector x = testing::random_vector(rng, cb.dim(), 2.0);
      worst = std::max(worst, (quantize(q, x) - posterior(cb, x, true)).cwiseAbs().maxCoeff());
    }
  }
  EXPECT_LE(worst, 1e-12);
}

TEST(Conversion, ZeroPriorIsDegenerate) {
  Matrix w(1, 2);
  w << 0, 2;
  try {
    to_network(Codebook(w, (Vector(2) << 1, 0).finished()));
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "degenerate prior");
  }
}

TEST(Conversion, FromNetworkByHand) {
  Matrix w(1, 2);
  w << 0, 2;
  const Codebook cb = from_network(w, (Vector(2) << 0, -2).finished());
  EXPECT_EQ(cb.words(), w);
  EXPECT_NEAR(cb.prior()[0], 0.5, 1e-15);
  EXPECT_NEAR(cb.prior()[1], 0.5, 1e-15);
}

TEST(Conversion, BiasShiftLeavesPriorUnchanged) {
  Rng rng(25);
  const Matrix w = testing::random_matrix(rng, 4, 6);
  const Vector b = testing::random_vector(rng, 6);
  const Codebook a = from_network(w, b);
  const Codebook c = from_network(w, (b.array() + 3.7).matrix());
  EXPECT_LE((a.prior() - c.prior()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Conversion, RoundTrip) {
  Rng rng(26);
  for (int k = 0; k < 100; ++k) {
    const Codebook cb = testing::random_codebook(rng, testing::uniform_int(rng, 1, 16), testing::uniform_int(rng, 1, 64));
    const Codebook back = from_network(to_network(cb));
    EXPECT_EQ(back.words(), cb.words());
    EXPECT_LE((back.prior() - cb.prior()).cwiseAbs().maxCoeff(), 1e-12);
  }
  const Codebook uniform(testing::random_matrix(rng, 3, 5));
  EXPECT_LE((from_network(to_network(uniform)).prior().array() - 0.2).abs().maxCoeff(), 1e-12);
}

TEST(Conversion, PriorScalingLeavesPosteriorUnchanged) {
  Rng rng(27);
  const Codebook cb = testing::random_codebook(rng, 2, 5);
  const QuantLayer q = to_network(cb);
  QuantLayer shifted = q;
  shifted.bias.array() += std::log(17.0);
  const Vector x = testing::random_vector(rng, 2);
  EXPECT_LE((quantize(q, x) - quantize(shifted, x)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(CodebookFile, RoundTripIsExact) {
  Rng rng(28);
  const Codebook cb = testing::random_codebook(rng, 5, 7);
  std::stringstream io;
  save_codebook(io, cb);
  EXPECT_EQ(io.str().substr(0, 11), "BOWCB1 7 5\n");
  const Codebook back = load_codebook(io);
  EXPECT_EQ(back.words(), cb.words());
  EXPECT_LE((back.prior() - cb.prior()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(CodebookFile, RejectsMalformed) {
  std::stringstream bad("BOWCB1 2 1\n0.5 0.5\n1\n");
  EXPECT_THROW(load_codebook(bad), Error);
  std::stringstream magic("BOWXX 1 1\n1\n0\n");
  EXPECT_THROW(load_codebook(magic), Error);
}

TEST(CodebookType, ValidatesPrior) {
  EXPECT_THROW(Codebook(Matrix::Zero(2, 2), (Vector(2) << 0.5, 0.6).finished()), Error);
  EXPECT_THROW(Codebook(Matrix::Zero(2, 2), (Vector(2) << -0.5, 1.5).finished()), Error);
  EXPECT_THROW(Codebook(Matrix::Zero(2, 0)), Error);
}

}  // namespace
}  // namespace bowrnn
