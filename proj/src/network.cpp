#include "onfire/network.hpp"

#include "onfire/errors.hpp"

namespace onfire {

Network::Network(Graph graph, std::uint64_t seed) : graph_(std::move(graph)) {
  validate(graph_);
  shapes_ = infer_shapes(graph_);
  for (const LayerSpec& node : graph_.nodes) {
    std::vector<int> idx;
    std::vector<Shape> in_shapes;
    for (const auto& in : node.inputs) {
      idx.push_back(graph_.index_of(in));
      in_shapes.push_back(shapes_[static_cast<std::size_t>(idx.back())]);
    }
    layers_.push_back(make_layer(node, in_shapes, seed));
    input_index_.push_back(std::move(idx));
  }
  const LayerSpec& last = graph_.nodes.back();
  logits_index_ = static_cast<int>(graph_.nodes.size()) - 1;
  if (last.kind() == LayerKind::softmax) logits_index_ = input_index_.back().at(0);
}

const InputSpec& Network::input_spec() const {
  return std::get<InputSpec>(graph_.nodes.front().params);
}

int Network::num_classes() const { return shapes_.back().back(); }

Tensor Network::forward(const Tensor& input, Mode mode) {
  const InputSpec& in = input_spec();
  if (input.rank() != 4 || input.dim(1) != in.height || input.dim(2) != in.width ||
      input.dim(3) != in.channels) {
    throw ContractError("network '" + graph_.name + "' expects N x " + std::to_string(in.height) +
                        " x " + std::to_string(in.width) + " x " + std::to_string(in.channels) +
                        " input, got " + to_string(input.shape()));
  }
  outputs_.assign(layers_.size(), Tensor());
  outputs_[0] = input;
  std::vector<const Tensor*> args;
  for (std::size_t i = 1; i < layers_.size(); ++i) {
    args.clear();
    for (int j : input_index_[i]) args.push_back(&outputs_[static_cast<std::size_t>(j)]);
    outputs_[i] = layers_[i]->forward(args, mode);
  }
  train_forward_ = mode == Mode::train;
  return outputs_.back();
}

const Tensor& Network::logits() const {
  if (outputs_.empty()) throw StateError("network '" + graph_.name + "': no forward pass recorded");
  return outputs_[static_cast<std::size_t>(logits_index_)];
}

void Network::backward(const Tensor& grad_logits) {
  if (!train_forward_) {
    throw StateError("network '" + graph_.name + "': backward requires a train-mode forward");
  }
  if (grad_logits.shape() != logits().shape()) {
    throw ContractError("backward: gradient " + to_string(grad_logits.shape()) +
                        " does not match logits " + to_string(logits().shape()));
  }
  std::vector<Tensor> grads(layers_.size());
  grads[static_cast<std::size_t>(logits_index_)] = grad_logits;
  std::vector<const Tensor*> args;
  for (int i = logits_index_; i >= 1; --i) {
    const auto ui = static_cast<std::size_t>(i);
    if (grads[ui].empty()) continue;
    args.clear();
    for (int j : input_index_[ui]) args.push_back(&outputs_[static_cast<std::size_t>(j)]);
    std::vector<Tensor> in_grads = layers_[ui]->backward(args, outputs_[ui], grads[ui]);
    for (std::size_t k = 0; k < in_grads.size(); ++k) {
      Tensor& acc = grads[static_cast<std::size_t>(input_index_[ui][k])];
      if (acc.empty()) {
        acc = std::move(in_grads[k]);
      } else {
        for (std::int64_t e = 0; e < acc.size(); ++e) acc[e] += in_grads[k][e];
      }
    }
    grads[ui] = Tensor();
  }
  input_grad_ = std::move(grads[0]);
}

std::vector<Parameter*> Network::parameters() {
  std::vector<Parameter*> out;
  for (auto& layer : layers_) {
    for (Parameter& p : layer->parameters()) out.push_back(&p);
  }
  return out;
}

std::vector<const Parameter*> Network::parameters() const {
  std::vector<const Parameter*> out;
  for (const auto& layer : layers_) {
    for (const Parameter& p : std::as_const(*layer).parameters()) out.push_back(&p);
  }
  return out;
}

Parameter* Network::find_parameter(const std::string& name) {
  for (Parameter* p : parameters()) {
    if (p->name == name) return p;
  }
  return nullptr;
}

}  // namespace onfire
