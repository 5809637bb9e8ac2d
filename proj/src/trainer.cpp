#include "onfire/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "onfire/errors.hpp"
#include "onfire/nn.hpp"
#include "onfire/random.hpp"
#include "onfire/zoo.hpp"

namespace onfire {

const char* to_string(OptimizerKind kind) {
  return kind == OptimizerKind::sgd_momentum ? "sgd_momentum" : "rmsprop";
}

OptimizerKind parse_optimizer(const std::string& text) {
  if (text == "sgd_momentum" || text == "sgd") return OptimizerKind::sgd_momentum;
  if (text == "rmsprop") return OptimizerKind::rmsprop;
  throw ContractError("unknown optimizer '" + text + "' (expected sgd_momentum or rmsprop)");
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0f) || !std::isfinite(learning_rate)) {
    throw ContractError("learning_rate must be a finite value >= 0");
  }
  if (epochs < 1) throw ContractError("epochs must be >= 1");
  if (batch_size < 1 || eval_batch_size < 1) throw ContractError("batch sizes must be >= 1");
  if (!(momentum >= 0.0f && momentum < 1.0f)) throw ContractError("momentum must be in [0, 1)");
  if (!(rms_decay > 0.0f && rms_decay < 1.0f)) throw ContractError("rms decay must be in (0, 1)");
  if (!(rms_epsilon > 0.0f)) throw ContractError("rms epsilon must be > 0");
  if (!(label_smoothing >= 0.0f && label_smoothing < 1.0f)) {
    throw ContractError("label smoothing must be in [0, 1)");
  }
}

std::uint64_t TrainConfig::hash() const {
  std::ostringstream s;
  s << to_string(optimizer) << '|' << learning_rate << '|' << epochs << '|' << batch_size << '|'
    << momentum << '|' << rms_decay << '|' << rms_epsilon << '|' << label_smoothing << '|'
    << seed << '|' << to_string(normalization) << '|' << horizontal_flip;
  return fnv1a(s.str());
}

void sgd_momentum_step(std::span<float> w, std::span<const float> g, std::span<float> velocity,
                       float lr, float mu) {
  if (w.size() != g.size() || w.size() != velocity.size()) {
    throw ContractError("sgd_momentum_step: weight, gradient and velocity sizes differ");
  }
  for (std::size_t i = 0; i < w.size(); ++i) {
    velocity[i] = mu * velocity[i] - lr * g[i];
    w[i] += velocity[i];
  }
}

void rmsprop_step(std::span<float> w, std::span<const float> g, std::span<float> cache, float lr,
                  float decay, float eps) {
  if (w.size() != g.size() || w.size() != cache.size()) {
    throw ContractError("rmsprop_step: weight, gradient and cache sizes differ");
  }
  for (std::size_t i = 0; i < w.size(); ++i) {
    cache[i] = decay * cache[i] + (1.0f - decay) * g[i] * g[i];
    w[i] -= lr * g[i] / (std::sqrt(cache[i]) + eps);
  }
}

Optimizer::Optimizer(const TrainConfig& config) : config_(config) { config_.validate(); }

void Optimizer::step(const std::vector<Parameter*>& params) {
  for (Parameter* p : params) {
    if (!p->trainable) continue;
    auto& state = state_[p->name];
    if (state.empty()) state.assign(p->value.size(), 0.0f);
    std::span<float> w(p->value.data(), p->value.size());
    std::span<const float> g(p->grad.data(), p->grad.size());
    if (config_.optimizer == OptimizerKind::sgd_momentum) {
      sgd_momentum_step(w, g, state, config_.learning_rate, config_.momentum);
    } else {
      rmsprop_step(w, g, state, config_.learning_rate, config_.rms_decay, config_.rms_epsilon);
    }
  }
}

Tensor one_hot(std::span<const int> labels, int classes) {
  Tensor t({static_cast<int>(labels.size()), classes});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= classes) throw ContractError("label out of range");
    t[i * classes + labels[i]] = 1.0f;
  }
  return t;
}

namespace {

void check_dataset(const Network& network, const Dataset& data, const char* what) {
  if (data.empty()) throw ContractError(std::string(what) + " dataset is empty");
  if (data.labels.size() != data.images.size()) {
    throw ContractError(std::string(what) + " dataset has mismatched labels");
  }
  const InputSpec& in = network.input_spec();
  for (const Image& img : data.images) {
    if (img.height != in.height || img.width != in.width || img.channels != in.channels) {
      throw ContractError(std::string(what) + " image is " + std::to_string(img.height) + "x" +
                          std::to_string(img.width) + "x" + std::to_string(img.channels) +
                          " but the network expects " + std::to_string(in.height) + "x" +
                          std::to_string(in.width) + "x" + std::to_string(in.channels));
    }
  }
}

int argmax_row(const Tensor& probs, int row) {
  const int classes = probs.dim(1);
  const float* p = probs.data() + static_cast<std::size_t>(row) * classes;
  return static_cast<int>(std::max_element(p, p + classes) - p);
}

}  // namespace

EvalResult evaluate_dataset(Network& network, const Dataset& data, int batch_size) {
  check_dataset(network, data, "evaluation");
  EvalResult result;
  const int classes = network.num_classes();
  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const std::size_t end = std::min(data.size(), start + batch_size);
    std::vector<const Image*> batch;
    for (std::size_t i = start; i < end; ++i) batch.push_back(&data.images[i]);
    const std::span<const int> labels(data.labels.data() + start, end - start);
    network.forward(to_batch(batch), Mode::infer);
    const LossResult lr = softmax_cross_entropy(network.logits(), one_hot(labels, classes));
    loss_sum += lr.loss * static_cast<double>(end - start);
    for (std::size_t i = 0; i < end - start; ++i) {
      const int pred = argmax_row(lr.probabilities, static_cast<int>(i));
      result.predictions.push_back(pred);
      result.fire_probability.push_back(
          classes > kFireClass ? lr.probabilities[i * classes + kFireClass] : 0.0f);
      if (pred == labels[i]) ++correct;
    }
  }
  result.loss = loss_sum / static_cast<double>(data.size());
  result.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  return result;
}

TrainResult train(Network& network, const Dataset& train_set, const Dataset* val_set,
                  const TrainConfig& config, const EpochCallback& on_record) {
  config.validate();
  check_dataset(network, train_set, "training");
  if (val_set) check_dataset(network, *val_set, "validation");

  const int classes = network.num_classes();
  const std::uint64_t config_hash = config.hash();
  Optimizer optimizer(config);
  TrainResult result;
  result.checkpoint = capture(network, 0, config_hash);

  auto record = [&](EpochRecord r) {
    result.log.push_back(r);
    if (on_record) on_record(r);
  };

  std::vector<std::size_t> order(train_set.size());
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(config.seed, "epoch/" + std::to_string(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[rng.below(i)]);
    }

    double loss_sum = 0.0;
    std::size_t correct = 0;
    std::vector<Image> flipped;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<const Image*> batch;
      std::vector<int> labels;
      flipped.clear();
      flipped.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) {
        const Image& img = train_set.images[order[i]];
        if (config.horizontal_flip && rng.uniform() < 0.5) {
          flipped.push_back(flip_horizontal(img));
          batch.push_back(&flipped.back());
        } else {
          batch.push_back(&img);
        }
        labels.push_back(train_set.labels[order[i]]);
      }
      LossResult lr;
      try {
        network.forward(to_batch(batch), Mode::train);
        lr = softmax_cross_entropy(network.logits(), one_hot(labels, classes),
                                   config.label_smoothing);
        if (!std::isfinite(lr.loss)) throw NumericError("training loss is not finite");
        network.backward(lr.grad);
        optimizer.step(network.parameters());
      } catch (const NumericError&) {
        restore(network, result.checkpoint);
        result.diverged = true;
        return result;
      }
      loss_sum += lr.loss * static_cast<double>(end - start);
      for (std::size_t i = 0; i < labels.size(); ++i) {
        if (argmax_row(lr.probabilities, static_cast<int>(i)) == labels[i]) ++correct;
      }
    }

    bool finite = true;
    for (const Parameter* p : network.parameters()) finite = finite && p->value.all_finite();
    if (!finite) {
      restore(network, result.checkpoint);
      result.diverged = true;
      return result;
    }

    const double train_acc = static_cast<double>(correct) / static_cast<double>(order.size());
    record({epoch, "train", loss_sum / static_cast<double>(order.size()), train_acc});
    std::optional<double> val_acc;
    if (val_set) {
      const EvalResult ev = evaluate_dataset(network, *val_set, config.eval_batch_size);
      record({epoch, "val", ev.loss, ev.accuracy});
      val_acc = ev.accuracy;
    }
    result.checkpoint = capture(network, epoch, config_hash);
    result.epochs_completed = epoch;
    const bool any_threshold = config.stop_at_train_accuracy || config.stop_at_val_accuracy;
    const bool train_ok =
        !config.stop_at_train_accuracy || train_acc >= *config.stop_at_train_accuracy;
    const bool val_ok =
        !config.stop_at_val_accuracy || (val_acc && *val_acc >= *config.stop_at_val_accuracy);
    if (any_threshold && train_ok && val_ok) {
      result.stopped_early = epoch < config.epochs;
      break;
    }
  }
  return result;
}

std::string format_log_csv(const std::vector<EpochRecord>& log, bool header) {
  std::ostringstream out;
  out.precision(6);
  if (header) out << "epoch,split,loss,accuracy\n";
  for (const auto& r : log) {
    out << r.epoch << ',' << r.split << ',' << r.loss << ',' << r.accuracy << '\n';
  }
  return out.str();
}

TransferReport transfer_init(Network& target, const Checkpoint& source, TransferStrategy strategy,
                             std::uint64_t seed) {
  if (source.architecture.empty()) {
    throw ContractError("source checkpoint does not record an architecture name");
  }
  const Graph& graph = target.graph();
  const auto& shapes = target.node_shapes();
  TransferReport report;
  for (std::size_t i = 0; i < target.size(); ++i) {
    Layer& layer = target.layer(i);
    auto params = layer.parameters();
    if (params.empty()) continue;
    const std::string& name = layer.spec().name;

    bool compatible = true;
    for (const Parameter& p : params) {
      const Tensor* t = source.find(p.name);
      compatible = compatible && t && t->shape() == p.value.shape();
    }
    const bool is_head = name == kHeadLayer;
    const bool copy =
        compatible && !(is_head && strategy == TransferStrategy::copy_compatible_reinit_head);
    if (copy) {
      for (Parameter& p : params) p.value = *source.find(p.name);
      report.copied.push_back(name);
    } else {
      std::vector<Shape> in_shapes;
      for (const auto& input : layer.spec().inputs) {
        in_shapes.push_back(shapes[graph.index_of(input)]);
      }
      const auto fresh = weight_init(layer.spec(), in_shapes, seed);
      for (std::size_t k = 0; k < params.size(); ++k) params[k].value = fresh[k].value;
      report.reinitialized.push_back(name);
    }
  }
  if (report.copied.empty()) {
    throw ContractError("no layer of '" + target.name() + "' matches checkpoint of '" +
                        source.architecture + "'; wrong source?");
  }
  return report;
}

}  // namespace onfire
