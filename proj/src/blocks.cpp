#include "onfire/blocks.hpp"

#include "onfire/errors.hpp"

namespace onfire {

std::string_view to_string(ModuleType type) {
  switch (type) {
    case ModuleType::A: return "A";
    case ModuleType::B: return "B";
    case ModuleType::C: return "C";
  }
  return "?";
}

std::string_view to_string(Flavor flavor) {
  switch (flavor) {
    case Flavor::v2: return "v2";
    case Flavor::v3: return "v3";
    case Flavor::v4: return "v4";
  }
  return "?";
}

std::string_view to_string(Norm norm) {
  switch (norm) {
    case Norm::none: return "none";
    case Norm::batch_norm: return "batch_norm";
    case Norm::lrn: return "lrn";
  }
  return "?";
}

int reduce_filters(int filters) {
  if (filters < 1) throw ContractError("reduce_filters: filter count must be >= 1");
  if (filters <= 100) return filters;
  int divisor = 1;
  while (filters > 100 * divisor) divisor *= 2;
  return (filters + divisor - 1) / divisor;
}

int materialize_filters(int filters, bool reduced, int width_divisor) {
  if (width_divisor < 1) throw ContractError("width divisor must be >= 1");
  const int f = reduced ? reduce_filters(filters) : filters;
  return (f + width_divisor - 1) / width_divisor;
}

namespace {

ConvStep c1x1(int f) { return {f, 1, 1, 1, Padding::same}; }
ConvStep c3x3(int f) { return {f, 3, 3, 1, Padding::same}; }
ConvStep c1xn(int f, int n) { return {f, 1, n, 1, Padding::same}; }
ConvStep cnx1(int f, int n) { return {f, n, 1, 1, Padding::same}; }
ConvStep c3x3_s2(int f) { return {f, 3, 3, 2, Padding::valid}; }

PoolStep avg_same() { return {PoolKind::avg, {3, 1, Padding::same}}; }
PoolStep max_reduce() { return {PoolKind::max, {3, 2, Padding::valid}}; }

class Materializer {
 public:
  Materializer(GraphBuilder& b, const BlockOptions& o, bool reduced)
      : builder_(b), opts_(o), reduced_(reduced) {}

  // conv (+ BN) with ReLU; returns the output node name.
  std::string conv(const std::string& name, const std::string& input, const ConvStep& step) {
    const int f = materialize_filters(step.filters, reduced_, opts_.width_divisor);
    const ConvGeometry geom{step.kernel_h, step.kernel_w, step.stride, step.padding};
    if (opts_.norm == Norm::batch_norm) {
      const auto c = builder_.add(name, ConvSpec{f, geom, Activation::linear}, {input});
      return builder_.add(name + "/bn", BatchNormSpec{BatchNormParams{}, Activation::relu}, {c});
    }
    return builder_.add(name, ConvSpec{f, geom, Activation::relu}, {input});
  }

  std::string pool(const std::string& name, const std::string& input, const PoolStep& step) {
    if (step.kind == PoolKind::avg) return builder_.add(name, AvgPoolSpec{step.geom}, {input});
    return builder_.add(name, MaxPoolSpec{step.geom}, {input});
  }

  // Returns the output node names of a branch (several when it has heads).
  std::vector<std::string> branch(const std::string& prefix, const std::string& input,
                                  const Branch& b) {
    std::string cur = input;
    if (b.pool) cur = pool(prefix + "/pool", cur, *b.pool);
    for (std::size_t i = 0; i < b.chain.size(); ++i) {
      cur = conv(prefix + "/conv" + std::to_string(i), cur, b.chain[i]);
    }
    if (b.heads.empty()) return {cur};
    std::vector<std::string> outs;
    for (std::size_t i = 0; i < b.heads.size(); ++i) {
      outs.push_back(conv(prefix + "/head" + std::to_string(i), cur, b.heads[i]));
    }
    return outs;
  }

  std::string block(const std::string& prefix, const std::string& input,
                    const std::vector<Branch>& branches) {
    if (branches.empty()) throw GraphError("block '" + prefix + "' has no branches");
    std::vector<std::string> outs;
    for (std::size_t i = 0; i < branches.size(); ++i) {
      if (!branches[i].pool && branches[i].chain.empty() && branches[i].heads.empty()) {
        throw GraphError("block '" + prefix + "' branch " + std::to_string(i) + " is empty");
      }
      auto o = branch(prefix + "/branch" + std::to_string(i), input, branches[i]);
      outs.insert(outs.end(), o.begin(), o.end());
    }
    if (outs.size() == 1) return outs.front();
    return builder_.add(prefix + "/concat", ConcatSpec{}, outs);
  }

 private:
  GraphBuilder& builder_;
  const BlockOptions& opts_;
  bool reduced_;
};

void check_filters(const std::vector<Branch>& branches, const std::string& what) {
  for (const Branch& b : branches) {
    for (const auto* list : {&b.chain, &b.heads}) {
      for (const ConvStep& s : *list) {
        if (s.filters < 1 || s.kernel_h < 1 || s.kernel_w < 1 || s.stride < 1) {
          throw ContractError(what + ": filter counts, kernels and strides must be >= 1");
        }
      }
    }
  }
}

Shape shape_of(const GraphBuilder& builder, const std::string& node) {
  const auto shapes = infer_shapes(builder.graph());
  return shapes.at(static_cast<std::size_t>(builder.graph().index_of(node)));
}

}  // namespace

ModuleSpec default_module_spec(ModuleType type, Flavor flavor, int n, bool reduced) {
  if (type == ModuleType::B && (n < 3 || n % 2 == 0)) {
    throw ContractError("Module-B asymmetric_n must be odd and >= 3, got " + std::to_string(n));
  }
  ModuleSpec spec{type, flavor, {}, n, reduced};
  const bool v4 = flavor == Flavor::v4;
  switch (type) {
    case ModuleType::A:
      if (v4) {
        spec.branches = {{std::nullopt, {c1x1(96)}, {}},
                         {std::nullopt, {c1x1(64), c3x3(96)}, {}},
                         {std::nullopt, {c1x1(64), c3x3(96), c3x3(96)}, {}},
                         {avg_same(), {c1x1(96)}, {}}};
      } else {
        spec.branches = {{std::nullopt, {c1x1(64)}, {}},
                         {std::nullopt, {c1x1(48), c3x3(64)}, {}},
                         {std::nullopt, {c1x1(64), c3x3(96), c3x3(96)}, {}},
                         {avg_same(), {c1x1(32)}, {}}};
      }
      break;
    case ModuleType::B:
      if (v4) {
        spec.branches = {
            {std::nullopt, {c1x1(384)}, {}},
            {std::nullopt, {c1x1(192), c1xn(224, n), cnx1(256, n)}, {}},
            {std::nullopt, {c1x1(192), cnx1(192, n), c1xn(224, n), cnx1(224, n), c1xn(256, n)}, {}},
            {avg_same(), {c1x1(128)}, {}}};
      } else {
        spec.branches = {
            {std::nullopt, {c1x1(192)}, {}},
            {std::nullopt, {c1x1(128), c1xn(128, n), cnx1(192, n)}, {}},
            {std::nullopt, {c1x1(128), cnx1(128, n), c1xn(128, n), cnx1(128, n), c1xn(192, n)}, {}},
            {avg_same(), {c1x1(192)}, {}}};
      }
      break;
    case ModuleType::C:
      if (v4) {
        spec.branches = {{std::nullopt, {c1x1(256)}, {}},
                         {std::nullopt, {c1x1(384)}, {c1xn(256, 3), cnx1(256, 3)}},
                         {std::nullopt, {c1x1(384), c1xn(448, 3), cnx1(512, 3)},
                          {c1xn(256, 3), cnx1(256, 3)}},
                         {avg_same(), {c1x1(256)}, {}}};
      } else {
        spec.branches = {{std::nullopt, {c1x1(320)}, {}},
                         {std::nullopt, {c1x1(384)}, {c1xn(384, 3), cnx1(384, 3)}},
                         {std::nullopt, {c1x1(448), c3x3(384)}, {c1xn(384, 3), cnx1(384, 3)}},
                         {avg_same(), {c1x1(192)}, {}}};
      }
      break;
  }
  return spec;
}

GridReductionSpec default_grid_reduction_spec(GridReductionType type, Flavor flavor, bool reduced) {
  GridReductionSpec spec{type, {}, reduced};
  const Branch pool{max_reduce(), {}, {}};
  const bool v4 = flavor == Flavor::v4;
  if (type == GridReductionType::A) {
    spec.branches = {{std::nullopt, {c3x3_s2(384)}, {}},
                     v4 ? Branch{std::nullopt, {c1x1(192), c3x3(224), c3x3_s2(256)}, {}}
                        : Branch{std::nullopt, {c1x1(64), c3x3(96), c3x3_s2(96)}, {}},
                     pool};
  } else {
    spec.branches = {
        v4 ? Branch{std::nullopt, {c1x1(192), c3x3_s2(192)}, {}}
           : Branch{std::nullopt, {c1x1(192), c3x3_s2(320)}, {}},
        v4 ? Branch{std::nullopt, {c1x1(256), c1xn(256, 7), cnx1(320, 7), c3x3_s2(320)}, {}}
           : Branch{std::nullopt, {c1x1(192), c1xn(192, 7), cnx1(192, 7), c3x3_s2(192)}, {}},
        pool};
  }
  return spec;
}

GridReductionSpec simple_grid_reduction(GridReductionType type, int conv_filters) {
  return {type, {{std::nullopt, {c3x3_s2(conv_filters)}, {}}, {max_reduce(), {}, {}}}, false};
}

std::string build_module(GraphBuilder& builder, const std::string& input, const ModuleSpec& spec,
                         const std::string& prefix, const BlockOptions& options) {
  if (spec.type == ModuleType::B && (spec.asymmetric_n < 3 || spec.asymmetric_n % 2 == 0)) {
    throw ContractError("Module-B asymmetric_n must be odd and >= 3");
  }
  check_filters(spec.branches, "module '" + prefix + "'");
  for (const Branch& b : spec.branches) {
    for (const auto* list : {&b.chain, &b.heads}) {
      for (const ConvStep& s : *list) {
        if (s.stride != 1 || s.padding != Padding::same) {
          throw ContractError("module '" + prefix + "': inception modules keep spatial extents "
                              "(stride 1, same padding)");
        }
      }
    }
  }
  Materializer m(builder, options, spec.reduced);
  return m.block(prefix, input, spec.branches);
}

std::string build_grid_reduction(GraphBuilder& builder, const std::string& input,
                                 const GridReductionSpec& spec, const std::string& prefix,
                                 const BlockOptions& options) {
  const Shape in = shape_of(builder, input);
  if (in.size() != 4 || in[1] < 3 || in[2] < 3) {
    throw ContractError("grid reduction '" + prefix + "' needs spatial extents >= 3, got " +
                        to_string(in));
  }
  check_filters(spec.branches, "grid reduction '" + prefix + "'");
  Materializer m(builder, options, spec.reduced);
  return m.block(prefix, input, spec.branches);
}

std::string build_stem(GraphBuilder& builder, const std::string& input, const StemSpec& spec,
                       const BlockOptions& options, const std::string& prefix) {
  Materializer m(builder, options, spec.reduced);
  const auto p = [&](const std::string& s) { return prefix + "/" + s; };
  std::string x = input;
  switch (spec.version) {
    case Flavor::v2:
      x = m.conv(p("conv1"), x, c3x3_s2(32));
      x = m.conv(p("conv2"), x, {64, 3, 3, 1, Padding::valid});
      x = m.pool(p("pool1"), x, max_reduce());
      x = m.conv(p("conv3"), x, {80, 3, 3, 1, Padding::valid});
      x = m.conv(p("conv4"), x, c3x3_s2(192));
      x = m.conv(p("conv5"), x, c3x3(288));
      break;
    case Flavor::v3:
      x = m.conv(p("conv1"), x, c3x3_s2(32));
      x = m.conv(p("conv2"), x, {32, 3, 3, 1, Padding::valid});
      x = m.conv(p("conv3"), x, c3x3(64));
      x = m.pool(p("pool1"), x, max_reduce());
      x = m.conv(p("conv4"), x, c1x1(80));
      x = m.conv(p("conv5"), x, {192, 3, 3, 1, Padding::valid});
      x = m.pool(p("pool2"), x, max_reduce());
      break;
    case Flavor::v4: {
      x = m.conv(p("conv1"), x, c3x3_s2(32));
      x = m.conv(p("conv2"), x, {32, 3, 3, 1, Padding::valid});
      x = m.conv(p("conv3"), x, c3x3(64));
      x = m.block(p("mixed1"), x, {{max_reduce(), {}, {}}, {std::nullopt, {c3x3_s2(96)}, {}}});
      const ConvStep v3x3{96, 3, 3, 1, Padding::valid};
      x = m.block(p("mixed2"), x,
                  {{std::nullopt, {c1x1(64), v3x3}, {}},
                   {std::nullopt, {c1x1(64), cnx1(64, 7), c1xn(64, 7), v3x3}, {}}});
      x = m.block(p("mixed3"), x, {{std::nullopt, {c3x3_s2(192)}, {}}, {max_reduce(), {}, {}}});
      break;
    }
  }
  if (options.norm == Norm::lrn) x = builder.add(p("lrn"), LrnSpec{}, {x});
  infer_shapes(builder.graph());
  return x;
}

Graph module_graph(const ModuleSpec& spec, int height, int width, int channels,
                   const BlockOptions& options) {
  GraphBuilder b("module_" + std::string(to_string(spec.type)));
  const auto in = b.input(height, width, channels);
  build_module(b, in, spec, "module", options);
  Graph g = std::move(b).finish();
  validate(g);
  return g;
}

Graph grid_reduction_graph(const GridReductionSpec& spec, int height, int width, int channels,
                           const BlockOptions& options) {
  GraphBuilder b(spec.type == GridReductionType::A ? "GR-A" : "GR-B");
  const auto in = b.input(height, width, channels);
  build_grid_reduction(b, in, spec, "reduction", options);
  Graph g = std::move(b).finish();
  validate(g);
  return g;
}

Graph stem_graph(const StemSpec& spec, int height, int width, const BlockOptions& options) {
  GraphBuilder b("stem_" + std::string(to_string(spec.version)));
  const auto in = b.input(height, width, 3);
  build_stem(b, in, spec, options);
  Graph g = std::move(b).finish();
  validate(g);
  return g;
}

}  // namespace onfire
