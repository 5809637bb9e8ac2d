#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "onfire/graph.hpp"
#include "onfire/layers.hpp"

namespace onfire {

// Executable form of a validated Graph: owns the layers, their parameters
// and the activations recorded by the most recent forward pass.
class Network {
 public:
  explicit Network(Graph graph, std::uint64_t seed = 0);

  const Graph& graph() const { return graph_; }
  const std::string& name() const { return graph_.name; }
  const InputSpec& input_spec() const;
  int num_classes() const;
  // Static per-node shapes for batch size 1.
  const std::vector<Shape>& node_shapes() const { return shapes_; }

  // Runs the graph on an N x H x W x C batch and returns the last node's
  // output (class probabilities for the catalog architectures).
  Tensor forward(const Tensor& input, Mode mode);
  // Pre-softmax scores from the last forward call.
  const Tensor& logits() const;
  // Output of every node from the last forward call, in graph order.
  const std::vector<Tensor>& activations() const { return outputs_; }

  // Back-propagates d loss / d logits through the graph, filling every
  // trainable parameter's gradient. Requires a preceding train-mode forward.
  void backward(const Tensor& grad_logits);
  // d loss / d input from the last backward call.
  const Tensor& input_grad() const { return input_grad_; }

  // All parameters (trainable and running statistics) in graph order.
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  Parameter* find_parameter(const std::string& name);

  Layer& layer(std::size_t index) { return *layers_.at(index); }
  std::size_t size() const { return layers_.size(); }

 private:
  Graph graph_;
  std::vector<Shape> shapes_;
  std::vector<std::unique_ptr<Layer>> layers_;
  std::vector<std::vector<int>> input_index_;
  std::vector<Tensor> outputs_;
  Tensor input_grad_;
  int logits_index_ = 0;
  bool train_forward_ = false;
};

}  // namespace onfire
