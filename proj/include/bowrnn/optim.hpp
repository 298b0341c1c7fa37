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

#ifndef BOWRNN_OPTIM_HPP
#define BOWRNN_OPTIM_HPP

#include "bowrnn/bownet.hpp"

#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <vector>

namespace bowrnn {

struct RpropConfig {
  double eta_plus = 1.2;
  double eta_minus = 0.5;
  double step_init = 0.01;
  double step_min = 1e-8;
  double step_max = 1.0;

  void validate() const {
    require(0.0 < eta_minus && eta_minus < 1.0 && eta_plus > 1.0, "rprop: need 0 < eta- < 1 < eta+");
    require(0.0 < step_min && step_min <= step_init && step_init <= step_max,
            "rprop: need 0 < step_min <= step_init <= step_max");
  }
};

/// Per-parameter step sizes and the sign of the previous gradient.
class RpropState {
 public:
  explicit RpropState(Eigen::Index size, RpropConfig config = {})
      : config_(config), steps_(Vector::Constant(size, config.step_init)), signs_(Vector::Zero(size)) {
    config_.validate();
  }

  const RpropConfig& config() const { return config_; }
  const Vector& steps() const { return steps_; }
  const Vector& signs() const { return signs_; }
  Eigen::Index size() const { return steps_.size(); }

  /// Shrinks every step by eta- and forgets the stored signs. Used after a
  /// rejected full-batch epoch.
  void backtrack() {
    steps_ = (steps_ * config_.eta_minus).cwiseMax(config_.step_min);
    signs_.setZero();
  }

 private:
  friend void rprop_step(Eigen::Ref<Vector>, const Eigen::Ref<const Vector>&, RpropState&);

  RpropConfig config_;
  Vector steps_;
  Vector signs_;
};

/// iRprop-: grow the step on agreeing signs, shrink it on a flip and zero the
/// stored sign; every parameter moves by -sign(gradient) * step.
inline void rprop_step(Eigen::Ref<Vector> params, const Eigen::Ref<const Vector>& grad, RpropState& state) {
  require(params.size() == grad.size() && grad.size() == state.size(), "rprop: shape mismatch");
  require(grad.allFinite(), "diverged");
  const RpropConfig& cfg = state.config_;
  for (Eigen::Index i = 0; i < grad.size(); ++i) {
    const double sign = (grad[i] > 0.0) - (grad[i] < 0.0);
    const double agree = sign * state.signs_[i];
    double& step = state.steps_[i];
    if (agree > 0.0) {
      step = std::min(step * cfg.eta_plus, cfg.step_max);
      state.signs_[i] = sign;
    } else if (agree < 0.0) {
      step = std::max(step * cfg.eta_minus, cfg.step_min);
      state.signs_[i] = 0.0;
    } else {
      state.signs_[i] = sign;
    }
    params[i] -= sign * step;
  }
}

inline void sgd_step(Eigen::Ref<Vector> params, const Eigen::Ref<const Vector>& grad, double rate) {
  require(rate > 0.0, "sgd: rate must be positive");
  require(params.size() == grad.size(), "sgd: shape mismatch");
  require(grad.allFinite(), "diverged");
  params -= rate * grad;
}

// ---------------------------------------------------------------------------
// Flat parameter views. Order: per channel W (column-major) then b, then
// W_out (column-major) then b_out. With include_quant = false only the output
// layer is packed.

inline Eigen::Index parameter_count(const BowNetwork& net, bool include_quant) {
  Eigen::Index n = net.out_weights().size() + net.out_bias().size();
  if (include_quant)
    for (const auto& q : net.quant()) n += q.weights.size() + q.bias.size();
  return n;
}

namespace detail {

template <class Layers>
Vector pack(const Layers& quant, const Matrix& w, const Vector& b, bool include_quant, Eigen::Index n) {
  Vector out(n);
  Eigen::Index k = 0;
  auto put = [&](const auto& m) {
    out.segment(k, m.size()) = Eigen::Map<const Vector>(m.data(), m.size());
    k += m.size();
  };
  if (include_quant)
    for (const auto& q : quant) {
      put(q.weights);
      put(q.bias);
    }
  put(w);
  put(b);
  return out;
}

}  // namespace detail

inline Vector pack_parameters(const BowNetwork& net, bool include_quant) {
  return detail::pack(net.quant(), net.out_weights(), net.out_bias(), include_quant,
                      parameter_count(net, include_quant));
}

inline Vector pack_gradient(const GradientSet& g, bool include_quant) {
  Eigen::Index n = g.out_weights.size() + g.out_bias.size();
  if (include_quant)
    for (const auto& q : g.quant) n += q.weights.size() + q.bias.size();
  return detail::pack(g.quant, g.out_weights, g.out_bias, include_quant, n);
}

inline void unpack_parameters(BowNetwork& net, const Eigen::Ref<const Vector>& flat, bool include_quant) {
  require(flat.size() == parameter_count(net, include_quant), "parameter vector has wrong size");
  Eigen::Index k = 0;
  auto take = [&](auto& m) {
    Eigen::Map<Vector>(m.data(), m.size()) = flat.segment(k, m.size());
    k += m.size();
  };
  if (include_quant)
    for (std::size_t c = 0; c < static_cast<std::size_t>(net.num_channels()); ++c) {
      take(net.quant(c).weights);
      take(net.quant(c).bias);
    }
  take(net.out_weights());
  take(net.out_bias());
}

// ---------------------------------------------------------------------------
// Training.

enum class Strategy { scratch, init_linear, retrain_top };
enum class Optimizer { rprop, sgd };

inline Strategy parse_strategy(const std::string& s) {
  if (s == "scratch") return Strategy::scratch;
  if (s == "init-linear" || s == "init_linear") return Strategy::init_linear;
  if (s == "retrain-top" || s == "retrain_top") return Strategy::retrain_top;
  throw Error("unknown strategy '" + s + "'");
}

inline Optimizer parse_optimizer(const std::string& s) {
  if (s == "rprop") return Optimizer::rprop;
  if (s == "sgd") return Optimizer::sgd;
  throw Error("unknown optimizer '" + s + "'");
}

struct TrainConfig {
  Strategy strategy = Strategy::scratch;
  Optimizer optimizer = Optimizer::rprop;
  double learning_rate = 0.1;  // sgd only
  int batch_size = 0;          // 0 = full batch
  int max_epochs = 500;
  double tolerance = 1e-6;     // relative objective improvement
  int patience = 5;
  std::uint64_t seed = 0;
  /// Histogram assignment used for the frozen features of retrain_top.
  Assignment top_assignment = Assignment::soft;
  RpropConfig rprop;
  int workers = 0;  // 0 = worker_count()

  void validate() const {
    require(max_epochs >= 1, "train: max_epochs must be >= 1");
    require(learning_rate > 0.0, "train: learning rate must be positive");
    require(batch_size >= 0, "train: batch size must be >= 0");
    require(tolerance >= 0.0 && patience >= 1, "train: bad stopping rule");
    require(!(optimizer == Optimizer::rprop && batch_size > 0),
            "train: rprop runs full batch only");
    require(strategy == Strategy::retrain_top || top_assignment == Assignment::soft,
            "train: hard assignment is only available with a frozen quantization layer");
    rprop.validate();
  }
};

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;
  double accuracy = 0.0;
};

struct TrainResult {
  BowNetwork net;
  std::vector<EpochRecord> log;
  bool converged = false;
  int rejected_epochs = 0;
};

class TrainingDiverged : public Error {
 public:
  TrainingDiverged(const std::string& what, BowNetwork last) : Error(what), last_(std::move(last)) {}
  const BowNetwork& last_finite() const { return last_; }

 private:
  BowNetwork last_;
};

inline void write_training_log(std::ostream& out, const std::vector<EpochRecord>& log) {
  for (const auto& r : log)
    out << "epoch " << r.epoch << " loss " << format_double(r.loss) << " accuracy "
        << format_double(r.accuracy) << '\n';
}

/// Starting network for a strategy. scratch draws every parameter;
/// init_linear and retrain_top reuse the given quantization layers (from a
/// codebook via to_network or from a trained model) under a fresh output layer.
inline BowNetwork initial_network(Strategy strategy, const std::vector<Eigen::Index>& channel_dims,
                                  Eigen::Index num_words, Eigen::Index num_classes,
                                  std::optional<FeatureMapSpec> map, std::uint64_t seed,
                                  const std::vector<QuantLayer>* init_quant = nullptr) {
  if (strategy == Strategy::scratch) return BowNetwork::random(channel_dims, num_words, num_classes, map, seed);
  require(init_quant != nullptr && !init_quant->empty(),
          "strategy needs an initial codebook or model");
  return BowNetwork::with_random_top(*init_quant, map, num_classes, seed);
}

namespace detail {

struct Evaluation {
  double loss;
  double accuracy;
  Vector gradient;
};

/// Multiclass logistic regression on fixed features.
inline Evaluation evaluate_top(const BowNetwork& net, const std::vector<Vector>& features,
                               std::span<const LabeledSample> data, std::span<const std::size_t> index) {
  GradientSet g = GradientSet::zeros_like(net);
  double total = 0.0;
  std::size_t hits = 0;
  for (std::size_t i : index) {
    Vector err = classify_features(net, features[i]);
    const int label = data[i].label;
    total += loss_from_posterior(err, label);
    hits += argmax(err) == label;
    err[label] -= 1.0;
    g.out_weights.noalias() += features[i] * err.transpose();
    g.out_bias += err;
  }
  const double n = static_cast<double>(index.size());
  g *= 1.0 / n;
  return {total / n, static_cast<double>(hits) / n, pack_gradient(g, false)};
}

}  // namespace detail

/// Minimizes mean cross-entropy. Full-batch RProp rejects any epoch that
/// raises the objective (parameters restored, steps shrunk), so the logged
/// objective never increases. Stops when the relative improvement stays
/// below tolerance for `patience` consecutive epochs, or at max_epochs.
inline TrainResult train(BowNetwork net, std::span<const LabeledSample> data, const TrainConfig& config) {
  config.validate();
  require(!data.empty(), "train: no data");
  for (const auto& s : data) require(s.label >= 0 && s.label < net.num_classes(), "invalid label");
  {
    bool single = true;
    for (const auto& s : data) single = single && s.label == data.front().label;
    if (single) warn("train: all training samples have the same class");
  }

  const bool top_only = config.strategy == Strategy::retrain_top;
  std::vector<Vector> features;
  if (top_only) {
    features.reserve(data.size());
    for (const auto& s : data) features.push_back(output_features(net, s.channels, config.top_assignment));
  }

  auto evaluate = [&](const BowNetwork& n, std::span<const std::size_t> index) -> detail::Evaluation {
    if (top_only) return detail::evaluate_top(n, features, data, index);
    std::vector<LabeledSample> subset;
    std::span<const LabeledSample> batch = data;
    if (index.size() != data.size()) {
      for (std::size_t i : index) subset.push_back(data[i]);
      batch = subset;
    }
    BatchGradient bg = batch_gradient(n, batch, config.workers);
    return {bg.loss, bg.accuracy, pack_gradient(bg.gradient, true)};
  };
  auto finite = [](const detail::Evaluation& e) { return std::isfinite(e.loss) && e.gradient.allFinite(); };

  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), std::size_t{0});

  TrainResult result{net, {}, false, 0};
  Vector params = pack_parameters(net, !top_only);
  int quiet = 0;
  double previous = 0.0;

  if (config.optimizer == Optimizer::rprop) {
    RpropState state(params.size(), config.rprop);
    detail::Evaluation current = evaluate(net, all);
    if (!finite(current)) throw TrainingDiverged("diverged", net);
    previous = current.loss;
    for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
      const RpropState saved = state;
      Vector candidate = params;
      rprop_step(candidate, current.gradient, state);
      BowNetwork trial = net;
      unpack_parameters(trial, candidate, !top_only);
      detail::Evaluation next = evaluate(trial, all);
      if (finite(next) && next.loss <= current.loss) {
        params = std::move(candidate);
        net = std::move(trial);
        current = std::move(next);
      } else {
        state = saved;
        state.backtrack();
        ++result.rejected_epochs;
      }
      result.log.push_back({epoch, current.loss, current.accuracy});
      const double rel = (previous - current.loss) / std::max(std::abs(previous), 1e-300);
      previous = current.loss;
      quiet = rel < config.tolerance ? quiet + 1 : 0;
      if (quiet >= config.patience) {
        result.converged = true;
        break;
      }
    }
  } else {
    std::mt19937_64 rng(config.seed);
    const std::size_t bs = config.batch_size == 0 ? data.size()
                                                  : std::min<std::size_t>(static_cast<std::size_t>(config.batch_size), data.size());
    std::vector<std::size_t> order = all;
    for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
      if (bs < data.size())
        for (std::size_t i = order.size(); i > 1; --i)
          std::swap(order[i - 1], order[uniform_index(rng, i)]);
      double total = 0.0, acc = 0.0;
      std::size_t batches = 0;
      for (std::size_t start = 0; start < order.size(); start += bs, ++batches) {
        const std::size_t len = std::min(bs, order.size() - start);
        detail::Evaluation e = evaluate(net, std::span<const std::size_t>(order).subspan(start, len));
        if (!finite(e)) throw TrainingDiverged("diverged", net);
        total += e.loss;
        acc += e.accuracy;
        sgd_step(params, e.gradient, config.learning_rate);
        if (!params.allFinite()) throw TrainingDiverged("diverged", net);
        BowNetwork next = net;
        unpack_parameters(next, params, !top_only);
        net = std::move(next);
      }
      const double mean = total / static_cast<double>(batches);
      result.log.push_back({epoch, mean, acc / static_cast<double>(batches)});
      if (epoch > 1) {
        const double rel = (previous - mean) / std::max(std::abs(previous), 1e-300);
        quiet = rel < config.tolerance ? quiet + 1 : 0;
      }
      previous = mean;
      if (quiet >= config.patience) {
        result.converged = true;
        break;
      }
    }
  }
  result.net = std::move(net);
  return result;
}

}  // namespace bowrnn

#endif  // BOWRNN_OPTIM_HPP
