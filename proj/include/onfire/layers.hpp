#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "onfire/graph.hpp"
#include "onfire/random.hpp"

namespace onfire {

struct Parameter {
  std::string name;  // "<layer>/<role>", e.g. "stem/conv1/weights"
  Tensor value;
  Tensor grad;       // empty for non-trainable state
  bool trainable = true;
};

// Runtime counterpart of a LayerSpec. Inputs are borrowed from the caller
// on every call; layers only keep what backward needs.
class Layer {
 public:
  explicit Layer(LayerSpec spec) : spec_(std::move(spec)) {}
  virtual ~Layer() = default;
  Layer(const Layer&) = delete;
  Layer& operator=(const Layer&) = delete;

  const LayerSpec& spec() const { return spec_; }

  virtual Tensor forward(std::span<const Tensor* const> inputs, Mode mode) = 0;
  // One gradient per input. Parameter gradients are overwritten, not summed.
  // Throws StateError unless a train-mode forward preceded the call.
  virtual std::vector<Tensor> backward(std::span<const Tensor* const> inputs,
                                       const Tensor& output, const Tensor& upstream) = 0;

  std::span<Parameter> parameters() { return params_; }
  std::span<const Parameter> parameters() const { return params_; }

 protected:
  void require_forward() const;
  LayerSpec spec_;
  std::vector<Parameter> params_;
  bool trained_forward_ = false;
};

// Builds the runtime layer with freshly initialised parameters.
std::unique_ptr<Layer> make_layer(const LayerSpec& spec, std::span<const Shape> input_shapes,
                                  std::uint64_t seed);

// Fan-in-scaled uniform initialisation U(-sqrt(6/fan_in), sqrt(6/fan_in)),
// i.e. variance 2/fan_in; biases and BN beta/moving mean start at zero,
// BN gamma and moving variance at one. Deterministic per (seed, layer name).
std::vector<Parameter> weight_init(const LayerSpec& spec, std::span<const Shape> input_shapes,
                                   std::uint64_t seed);

}  // namespace onfire
