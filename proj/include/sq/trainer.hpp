#ifndef SQ_TRAINER_HPP_
#define SQ_TRAINER_HPP_

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "sq/dataio.hpp"
#include "sq/errors.hpp"
#include "sq/layers.hpp"
#include "sq/partition.hpp"
#include "sq/quantizer.hpp"
#include "sq/rng.hpp"
#include "sq/schedule.hpp"
#include "sq/tensor.hpp"

namespace sq {

// Stream ids for derived RNGs; every random draw in a run is a pure
// function of (seed, stream, layer, iteration).
inline constexpr std::uint64_t kStreamQuantize = 0x9A27;
inline constexpr std::uint64_t kStreamPartition = 0x70A7;

struct TrainConfig {
  bool quantized = true;  // false trains the full-precision baseline
  QuantScheme scheme{};
  Granularity granularity = Granularity::ChannelWise;
  PartitionMode partition_mode = PartitionMode::Stochastic;
  ProbabilityFn prob_fn{};
  double lr = 0.1;
  std::vector<std::size_t> lr_decay_steps;
  double lr_decay_factor = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::size_t batch_size = 100;
  std::uint64_t seed = 1;

  void validate() const {
    if (lr <= 0.0) throw ArgumentError("learning rate must be positive");
    if (momentum < 0.0 || momentum >= 1.0)
      throw ArgumentError("momentum must be in [0,1)");
    if (batch_size < 1) throw ArgumentError("batch size must be >= 1");
  }
};

/// SGD with momentum and weight decay on the full-precision parameters:
/// v <- momentum*v + grad + decay*w;  w <- w - lr*v.
/// With momentum = decay = 0 this is the plain hybrid-gradient update.
inline void update_weights(Tensor& w, const Tensor& grad, Tensor& velocity,
                           double lr, double momentum, double decay) {
  check_same_shape(w, grad, "update_weights");
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double v = momentum * velocity[i] + grad[i] + decay * w[i];
    velocity[i] = v;
    w[i] -= lr * v;
  }
}

/// Per-layer snapshot of a stage-fixed partition (serialized in checkpoints
/// so that resuming mid-stage cannot silently redraw it).
struct FixedPartitionState {
  std::size_t stage = static_cast<std::size_t>(-1);
  PartitionResult partition;
};

/// One-iteration driver: quantize, partition, build hybrid weights,
/// forward/backward, and update W with the hybrid gradients.
class Trainer {
 public:
  Trainer(Network& net, TrainConfig cfg, SqSchedule schedule)
      : net_(&net), cfg_(std::move(cfg)), sched_(std::move(schedule)) {
    cfg_.validate();
    fixed_.resize(net_->weighted().size());
  }

  const TrainConfig& config() const { return cfg_; }
  const SqSchedule& schedule() const { return sched_; }
  std::size_t iteration() const { return t_; }
  void set_iteration(std::size_t t) { t_ = t; }

  double learning_rate_at(std::size_t t) const {
    double lr = cfg_.lr;
    for (std::size_t boundary : cfg_.lr_decay_steps)
      if (t >= boundary) lr *= cfg_.lr_decay_factor;
    return lr;
  }

  double current_ratio() const {
    return cfg_.quantized ? sched_.ratio_at(t_) : 0.0;
  }

  /// Quantize every quantizable layer's W, partition, and install the
  /// hybrid weight matrices for iteration t.
  void prepare_hybrid_weights() {
    const double r = sched_.ratio_at(t_);
    auto layers = net_->weighted();
    for (std::size_t li = 0; li < layers.size(); ++li) {
      WeightedLayer& layer = *layers[li];
      auto w_view = reshape_as_matrix(layer.weights());
      Rng qrng = Rng::for_stream(cfg_.seed, kStreamQuantize, li, t_);
      const auto rows = quantize_rows(cfg_.scheme, w_view, &qrng);
      auto out_view = reshape_as_matrix(layer.hybrid_weights());

      if (r >= 1.0) {
        PartitionResult all;
        all.ratio_used = 1.0;
        all.quantized.resize(w_view.rows());
        std::iota(all.quantized.begin(), all.quantized.end(), 0);
        build_hybrid_into(w_view, rows, all, out_view);
      } else if (cfg_.granularity == Granularity::ChannelWise) {
        const auto errors = channel_errors(w_view, rows);
        const auto part = partition_for(li, errors, r);
        build_hybrid_into(w_view, rows, part, out_view);
      } else {
        const auto errors = elementwise_errors(w_view, rows);
        const auto part = partition_for(li, errors, r);
        build_hybrid_elementwise_into(w_view, rows,
                                      part.quantized_mask(w_view.units()),
                                      out_view);
      }
      layer.set_hybrid_active(true);
    }
  }

  /// One training iteration on a minibatch; returns the loss. Throws
  /// DivergedError on a non-finite loss, leaving weights untouched.
  double step(const Tensor& x, const std::vector<int>& y) {
    if (cfg_.quantized)
      prepare_hybrid_weights();
    else
      net_->set_hybrid_active(false);

    const Tensor logits = net_->forward(x, true);
    const double loss = loss_.forward(logits, y);
    if (!std::isfinite(loss))
      throw DivergedError("non-finite loss at iteration " +
                          std::to_string(t_));
    net_->backward(loss_.backward());

    const double lr = learning_rate_at(t_);
    for (std::size_t i = 0; i < net_->size(); ++i)
      for (const ParamRef& p : net_->layer(i).params())
        update_weights(*p.value, *p.grad, *p.momentum, lr, cfg_.momentum,
                       p.decay ? cfg_.weight_decay : 0.0);
    ++t_;
    return loss;
  }

  std::vector<FixedPartitionState>& fixed_state() { return fixed_; }
  const std::vector<FixedPartitionState>& fixed_state() const {
    return fixed_;
  }

 private:
  PartitionResult partition_for(std::size_t layer_index,
                                const std::vector<double>& errors, double r) {
    switch (cfg_.partition_mode) {
      case PartitionMode::Deterministic:
        return deterministic_partition(errors, r);
      case PartitionMode::Stochastic: {
        const auto p = quantization_probabilities(errors, cfg_.prob_fn);
        Rng rng = Rng::for_stream(cfg_.seed, kStreamPartition, layer_index, t_);
        return roulette_partition(p, r, rng);
      }
      case PartitionMode::Fixed: {
        const std::size_t stage = sched_.stage_at(t_);
        FixedPartitionState& fs = fixed_[layer_index];
        if (fs.stage != stage) {
          const auto p = quantization_probabilities(errors, cfg_.prob_fn);
          Rng rng =
              Rng::for_stream(cfg_.seed, kStreamPartition, layer_index, t_);
          fs.partition = roulette_partition(p, r, rng);
          fs.stage = stage;
        }
        return fs.partition;
      }
    }
    throw ArgumentError("unknown partition mode");
  }

  Network* net_;
  TrainConfig cfg_;
  SqSchedule sched_;
  SoftmaxCrossEntropy loss_;
  std::size_t t_ = 0;
  std::vector<FixedPartitionState> fixed_;
};

// ---- evaluation ------------------------------------------------------------

struct EvalResult {
  double top1_error = 0.0;
  double mean_loss = 0.0;
  std::size_t count = 0;
};

/// Deployment-style quantization of one row: BWN/TWN as in training, the
/// stochastic-binary scheme collapses to its deterministic sign codes.
/// Alpha is rounded through 32-bit float, matching the quantized export
/// format, so evaluating a checkpoint at full ratio and evaluating its
/// export are bit-identical.
inline QuantizedRow deploy_quantize_row(const QuantScheme& scheme,
                                        std::span<const double> row) {
  QuantizedRow q;
  switch (scheme.kind) {
    case QuantKind::StochasticBinary:
      q.codes.resize(row.size());
      for (std::size_t j = 0; j < row.size(); ++j)
        q.codes[j] = row[j] < 0.0 ? -1 : 1;
      q.alpha = 1.0;
      break;
    case QuantKind::BWN:
      q = quantize_bwn(row);
      break;
    case QuantKind::TWN:
      q = quantize_twn(row, scheme.twn_threshold_coeff);
      break;
  }
  q.alpha = static_cast<double>(static_cast<float>(q.alpha));
  q.rebuild_reconstruction();
  return q;
}

/// Install fully quantized deployment weights (ratio treated as 100%).
inline void install_deploy_weights(Network& net, const QuantScheme& scheme) {
  for (auto* layer : net.weighted()) {
    auto w_view = reshape_as_matrix(layer->weights());
    auto out_view = reshape_as_matrix(layer->hybrid_weights());
    for (std::size_t i = 0; i < w_view.rows(); ++i) {
      const auto q = deploy_quantize_row(scheme, w_view.row(i));
      auto dst = out_view.row(i);
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] = q.reconstruction[j];
    }
    layer->set_hybrid_active(true);
  }
}

/// Top-1 error and mean loss over a split. Quantized models are evaluated
/// with their low-bit weights; the full-precision baseline uses W.
inline EvalResult evaluate(Network& net, const Dataset& ds, bool quantized,
                           const QuantScheme& scheme = {},
                           std::size_t batch_size = 250) {
  if (ds.size() == 0) throw ArgumentError("evaluate: empty dataset split");
  if (quantized)
    install_deploy_weights(net, scheme);
  else
    net.set_hybrid_active(false);

  SoftmaxCrossEntropy loss_fn;
  const auto shape = ds.sample_shape();
  const std::size_t sample = shape[0] * shape[1] * shape[2];
  EvalResult result;
  result.count = ds.size();
  std::size_t wrong = 0;
  double loss_sum = 0.0;

  for (std::size_t start = 0; start < ds.size(); start += batch_size) {
    const std::size_t b = std::min(batch_size, ds.size() - start);
    Tensor x({b, shape[0], shape[1], shape[2]});
    std::copy(ds.images.data() + start * sample,
              ds.images.data() + (start + b) * sample, x.data());
    std::vector<int> y(ds.labels.begin() + start, ds.labels.begin() + start + b);

    const Tensor logits = net.forward(x, false);
    loss_sum += loss_fn.forward(logits, y) * static_cast<double>(b);
    const std::size_t classes = logits.extent(1);
    for (std::size_t i = 0; i < b; ++i) {
      const double* row = logits.data() + i * classes;
      std::size_t best = 0;
      for (std::size_t j = 1; j < classes; ++j)
        if (row[j] > row[best]) best = j;
      if (static_cast<int>(best) != y[i]) ++wrong;
    }
  }
  net.set_hybrid_active(false);
  result.top1_error = static_cast<double>(wrong) / static_cast<double>(ds.size());
  result.mean_loss = loss_sum / static_cast<double>(ds.size());
  return result;
}

}  // namespace sq

#endif  // SQ_TRAINER_HPP_
