#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "onfire/blocks.hpp"
#include "onfire/checkpoint.hpp"
#include "onfire/dataset.hpp"
#include "onfire/network.hpp"

namespace onfire {

enum class OptimizerKind { sgd_momentum, rmsprop };
const char* to_string(OptimizerKind kind);
OptimizerKind parse_optimizer(const std::string& text);

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::sgd_momentum;
  float learning_rate = 0.001f;
  int epochs = 30;
  int batch_size = 64;
  float momentum = 0.9f;
  float rms_decay = 0.9f;
  float rms_epsilon = 1e-10f;
  float label_smoothing = 0.0f;
  std::uint64_t seed = 0;
  // Applied when the graph is built (see make_network); recorded in the hash.
  Norm normalization = Norm::batch_norm;
  bool horizontal_flip = false;
  // Stop after the first epoch meeting every threshold that is set.
  std::optional<double> stop_at_train_accuracy;
  std::optional<double> stop_at_val_accuracy;
  int eval_batch_size = 64;

  void validate() const;
  std::uint64_t hash() const;
};

// v' = mu*v - lr*g, w' = w + v'
void sgd_momentum_step(std::span<float> w, std::span<const float> g, std::span<float> velocity,
                       float lr, float mu);
// cache' = decay*cache + (1-decay)*g^2, w' = w - lr*g / (sqrt(cache') + eps)
void rmsprop_step(std::span<float> w, std::span<const float> g, std::span<float> cache, float lr,
                  float decay, float eps);

// Per-parameter optimizer state keyed by parameter name.
class Optimizer {
 public:
  explicit Optimizer(const TrainConfig& config);
  void step(const std::vector<Parameter*>& params);

 private:
  TrainConfig config_;
  std::unordered_map<std::string, std::vector<float>> state_;
};

struct EpochRecord {
  int epoch = 0;
  std::string split;  // "train" or "val"
  double loss = 0.0;
  double accuracy = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> log;
  Checkpoint checkpoint;  // weights after the last completed epoch
  int epochs_completed = 0;
  bool diverged = false;
  bool stopped_early = false;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Mini-batch training with per-epoch shuffling. A non-finite batch loss
// aborts the run and restores the weights of the last completed epoch.
TrainResult train(Network& network, const Dataset& train_set, const Dataset* val_set,
                  const TrainConfig& config, const EpochCallback& on_record = {});

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
  std::vector<int> predictions;
  std::vector<float> fire_probability;
};

EvalResult evaluate_dataset(Network& network, const Dataset& data, int batch_size = 64);

// One-hot rows for the given labels.
Tensor one_hot(std::span<const int> labels, int classes);

std::string format_log_csv(const std::vector<EpochRecord>& log, bool header = true);

enum class TransferStrategy { copy_compatible_reinit_head, copy_all_compatible };

struct TransferReport {
  std::vector<std::string> copied;
  std::vector<std::string> reinitialized;
};

// Copies each parameterised layer whose tensors all exist in the source with
// identical names and shapes; everything else (and the head, under
// copy_compatible_reinit_head) gets a fresh initialisation.
TransferReport transfer_init(Network& target, const Checkpoint& source,
                             TransferStrategy strategy = TransferStrategy::copy_compatible_reinit_head,
                             std::uint64_t seed = 0);

}  // namespace onfire
