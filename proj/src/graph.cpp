#include "onfire/graph.hpp"

#include <algorithm>
#include <array>
#include <set>

#include "onfire/errors.hpp"

namespace onfire {

namespace {

constexpr std::array<std::string_view, 11> kKindNames = {
    "input", "conv", "dense", "batch_norm", "lrn", "dropout",
    "max_pool", "avg_pool", "global_max_pool", "softmax", "concat"};

[[noreturn]] void fail(const LayerSpec& node, const std::string& what) {
  throw GraphError("node '" + node.name + "' (" + std::string(kind_name(node.kind())) + "): " + what);
}

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

Shape pooled(const LayerSpec& node, const Shape& in, const PoolGeometry& g) {
  if (in.size() != 4) fail(node, "expects rank-4 input, got " + to_string(in));
  const int oh = output_extent(in[1], g.window, g.stride, g.padding);
  const int ow = output_extent(in[2], g.window, g.stride, g.padding);
  if (oh < 1 || ow < 1) {
    fail(node, "window " + std::to_string(g.window) + " larger than input " + to_string(in));
  }
  return {in[0], oh, ow, in[3]};
}

void check_hyperparameters(const LayerSpec& node) {
  std::visit(overloaded{
                 [&](const InputSpec& s) {
                   if (s.height < 1 || s.width < 1 || s.channels < 1) fail(node, "bad input extents");
                 },
                 [&](const ConvSpec& s) {
                   if (s.filters < 1) fail(node, "filter count must be >= 1");
                   if (s.geom.kernel_h < 1 || s.geom.kernel_w < 1 || s.geom.stride < 1) {
                     fail(node, "kernel and stride must be >= 1");
                   }
                 },
                 [&](const DenseSpec& s) {
                   if (s.units < 1) fail(node, "units must be >= 1");
                 },
                 [&](const BatchNormSpec& s) {
                   if (!(s.params.epsilon > 0.0f)) fail(node, "epsilon must be > 0");
                   if (!(s.params.momentum >= 0.0f && s.params.momentum < 1.0f)) {
                     fail(node, "momentum must lie in [0, 1)");
                   }
                 },
                 [&](const LrnSpec& s) {
                   if (s.params.radius < 1) fail(node, "radius must be >= 1");
                 },
                 [&](const DropoutSpec& s) {
                   if (!(s.rate > 0.0f && s.rate < 1.0f)) fail(node, "dropout rate must lie in (0, 1)");
                 },
                 [&](const MaxPoolSpec& s) {
                   if (s.geom.window < 1 || s.geom.stride < 1) fail(node, "window and stride must be >= 1");
                 },
                 [&](const AvgPoolSpec& s) {
                   if (s.geom.window < 1 || s.geom.stride < 1) fail(node, "window and stride must be >= 1");
                 },
                 [](const auto&) {},
             },
             node.params);
}

}  // namespace

std::string_view kind_name(LayerKind kind) { return kKindNames[static_cast<std::size_t>(kind)]; }

LayerKind parse_kind(std::string_view name) {
  for (std::size_t i = 0; i < kKindNames.size(); ++i) {
    if (kKindNames[i] == name) return static_cast<LayerKind>(i);
  }
  throw LookupError("unknown layer kind '" + std::string(name) + "'");
}

const LayerSpec& Graph::node(std::string_view node_name) const {
  const int i = index_of(node_name);
  if (i < 0) throw LookupError("graph '" + name + "' has no node '" + std::string(node_name) + "'");
  return nodes[static_cast<std::size_t>(i)];
}

int Graph::index_of(std::string_view node_name) const {
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].name == node_name) return static_cast<int>(i);
  }
  return -1;
}

std::vector<Shape> infer_shapes(const Graph& graph, int batch) {
  std::vector<Shape> shapes;
  shapes.reserve(graph.nodes.size());
  for (const LayerSpec& node : graph.nodes) {
    std::vector<const Shape*> in;
    for (const auto& name : node.inputs) {
      const int idx = graph.index_of(name);
      if (idx < 0 || static_cast<std::size_t>(idx) >= shapes.size()) {
        fail(node, "input '" + name + "' is not defined before this node");
      }
      in.push_back(&shapes[static_cast<std::size_t>(idx)]);
    }
    const std::size_t expected = node.kind() == LayerKind::input ? 0 : 1;
    if (node.kind() == LayerKind::concat) {
      if (in.size() < 2) fail(node, "needs at least two inputs");
    } else if (in.size() != expected) {
      fail(node, "expects " + std::to_string(expected) + " input(s), got " +
                     std::to_string(in.size()));
    }
    Shape out = std::visit(
        overloaded{
            [&](const InputSpec& s) -> Shape { return {batch, s.height, s.width, s.channels}; },
            [&](const ConvSpec& s) -> Shape {
              const Shape& x = *in[0];
              if (x.size() != 4) fail(node, "expects rank-4 input, got " + to_string(x));
              const int oh = output_extent(x[1], s.geom.kernel_h, s.geom.stride, s.geom.padding);
              const int ow = output_extent(x[2], s.geom.kernel_w, s.geom.stride, s.geom.padding);
              if (oh < 1 || ow < 1) {
                fail(node, "kernel " + std::to_string(s.geom.kernel_h) + "x" +
                               std::to_string(s.geom.kernel_w) + " larger than input " +
                               to_string(x));
              }
              return {x[0], oh, ow, s.filters};
            },
            [&](const DenseSpec& s) -> Shape {
              const Shape& x = *in[0];
              if (x.size() != 2) fail(node, "expects rank-2 input, got " + to_string(x));
              return {x[0], s.units};
            },
            [&](const MaxPoolSpec& s) -> Shape { return pooled(node, *in[0], s.geom); },
            [&](const AvgPoolSpec& s) -> Shape { return pooled(node, *in[0], s.geom); },
            [&](const GlobalMaxPoolSpec&) -> Shape {
              const Shape& x = *in[0];
              if (x.size() != 4) fail(node, "expects rank-4 input, got " + to_string(x));
              return {x[0], x[3]};
            },
            [&](const SoftmaxSpec&) -> Shape {
              const Shape& x = *in[0];
              if (x.size() != 2 || x[1] < 2) fail(node, "expects N x K input with K >= 2");
              return x;
            },
            [&](const ConcatSpec&) -> Shape {
              Shape out = *in[0];
              for (std::size_t b = 1; b < in.size(); ++b) {
                const Shape& s = *in[b];
                if (s.size() != out.size() || !std::equal(s.begin(), s.end() - 1, out.begin())) {
                  fail(node, "branch " + std::to_string(b) + " shape " + to_string(s) +
                                 " does not match branch 0 shape " + to_string(*in[0]));
                }
                out.back() += s.back();
              }
              return out;
            },
            [&](const auto&) -> Shape { return *in[0]; },
        },
        node.params);
    shapes.push_back(std::move(out));
  }
  return shapes;
}

void validate(const Graph& graph) {
  if (graph.nodes.empty()) throw GraphError("graph '" + graph.name + "' is empty");
  if (graph.nodes.front().kind() != LayerKind::input) {
    throw GraphError("graph '" + graph.name + "': first node must be the input");
  }
  std::set<std::string> names;
  std::set<std::string> consumed;
  for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
    const LayerSpec& node = graph.nodes[i];
    if (node.name.empty() || node.name.find_first_of(" \t\n,[]=") != std::string::npos) {
      fail(node, "invalid node name");
    }
    if (!names.insert(node.name).second) fail(node, "duplicate node name");
    if (i > 0 && node.kind() == LayerKind::input) fail(node, "only one input node is allowed");
    for (const auto& in : node.inputs) {
      if (!names.count(in) || in == node.name) {
        fail(node, "input '" + in + "' is not defined before this node");
      }
      consumed.insert(in);
    }
    check_hyperparameters(node);
  }
  for (std::size_t i = 0; i + 1 < graph.nodes.size(); ++i) {
    if (!consumed.count(graph.nodes[i].name)) {
      fail(graph.nodes[i], "output is never consumed (graph must have a single output)");
    }
  }
  infer_shapes(graph);
}

std::string GraphBuilder::add(std::string name, LayerParams params, std::vector<std::string> inputs) {
  if (graph_.index_of(name) >= 0) {
    throw GraphError("graph '" + graph_.name + "': duplicate node name '" + name + "'");
  }
  graph_.nodes.push_back(LayerSpec{name, std::move(params), std::move(inputs)});
  return name;
}

std::string GraphBuilder::input(int height, int width, int channels) {
  return add("input", InputSpec{height, width, channels});
}

}  // namespace onfire
