#pragma once

#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "onfire/nn.hpp"
#include "onfire/ops.hpp"
#include "onfire/tensor.hpp"

namespace onfire {

enum class Activation { linear, relu };

struct InputSpec {
  int height = 224;
  int width = 224;
  int channels = 3;
  friend bool operator==(const InputSpec&, const InputSpec&) = default;
};

struct ConvSpec {
  int filters = 1;
  ConvGeometry geom;
  Activation act = Activation::relu;
  friend bool operator==(const ConvSpec&, const ConvSpec&) = default;
};

struct DenseSpec {
  int units = 2;
  Activation act = Activation::linear;
  friend bool operator==(const DenseSpec&, const DenseSpec&) = default;
};

struct BatchNormSpec {
  BatchNormParams params;
  Activation act = Activation::linear;
  friend bool operator==(const BatchNormSpec&, const BatchNormSpec&) = default;
};

struct LrnSpec {
  LrnParams params;
  friend bool operator==(const LrnSpec&, const LrnSpec&) = default;
};

struct DropoutSpec {
  float rate = 0.5f;
  friend bool operator==(const DropoutSpec&, const DropoutSpec&) = default;
};

struct MaxPoolSpec {
  PoolGeometry geom;
  friend bool operator==(const MaxPoolSpec&, const MaxPoolSpec&) = default;
};

struct AvgPoolSpec {
  PoolGeometry geom;
  friend bool operator==(const AvgPoolSpec&, const AvgPoolSpec&) = default;
};

struct GlobalMaxPoolSpec {
  friend bool operator==(const GlobalMaxPoolSpec&, const GlobalMaxPoolSpec&) = default;
};
struct SoftmaxSpec {
  friend bool operator==(const SoftmaxSpec&, const SoftmaxSpec&) = default;
};
struct ConcatSpec {
  friend bool operator==(const ConcatSpec&, const ConcatSpec&) = default;
};

// Alternative order matches LayerKind.
using LayerParams = std::variant<InputSpec, ConvSpec, DenseSpec, BatchNormSpec, LrnSpec,
                                 DropoutSpec, MaxPoolSpec, AvgPoolSpec, GlobalMaxPoolSpec,
                                 SoftmaxSpec, ConcatSpec>;

enum class LayerKind {
  input,
  conv,
  dense,
  batch_norm,
  lrn,
  dropout,
  max_pool,
  avg_pool,
  global_max_pool,
  softmax,
  concat,
};

std::string_view kind_name(LayerKind kind);
LayerKind parse_kind(std::string_view name);  // throws LookupError

struct LayerSpec {
  std::string name;
  LayerParams params;
  std::vector<std::string> inputs;

  LayerKind kind() const { return static_cast<LayerKind>(params.index()); }
  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

// A DAG of layers stored in topological order: every node's inputs appear
// before it, node 0 is the single input node and the last node the output.
struct Graph {
  std::string name;
  std::vector<LayerSpec> nodes;

  const LayerSpec& node(std::string_view node_name) const;
  int index_of(std::string_view node_name) const;  // -1 when absent
  friend bool operator==(const Graph&, const Graph&) = default;
};

// Static output shape of every node for the given batch size. Throws
// GraphError naming the first node whose shape rule fails.
std::vector<Shape> infer_shapes(const Graph& graph, int batch = 1);

// Structural checks (unique names, inputs defined earlier, one input node,
// single output, hyperparameter ranges) followed by shape inference.
void validate(const Graph& graph);

// Appends nodes to a graph under construction; names must be unique.
class GraphBuilder {
 public:
  explicit GraphBuilder(std::string graph_name) { graph_.name = std::move(graph_name); }

  // Returns the node name so calls can be chained into later inputs.
  std::string add(std::string name, LayerParams params, std::vector<std::string> inputs = {});
  std::string input(int height, int width, int channels = 3);

  const Graph& graph() const { return graph_; }
  Graph finish() && { return std::move(graph_); }

 private:
  Graph graph_;
};

}  // namespace onfire
