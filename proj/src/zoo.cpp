#include "onfire/zoo.hpp"

#include <charconv>
#include <map>
#include <sstream>

#include "onfire/errors.hpp"

namespace onfire {

std::string_view to_string(Component component) {
  switch (component) {
    case Component::module_a: return "Module-A";
    case Component::gr_a: return "GR-A";
    case Component::module_b: return "Module-B";
    case Component::gr_b: return "GR-B";
    case Component::module_c: return "Module-C";
  }
  return "?";
}

Norm ArchSpec::resolved_norm() const {
  if (norm) return *norm;
  return flavor == Flavor::v2 ? Norm::none : Norm::batch_norm;
}

int ArchSpec::module_count() const {
  int n = 0;
  for (const auto& item : body) {
    if (item.component == Component::module_a || item.component == Component::module_b ||
        item.component == Component::module_c) {
      n += item.count;
    }
  }
  return n;
}

namespace {

using C = Component;

// Table rows in canonical order Module-A, GR-A, Module-B, GR-B, Module-C.
std::vector<BodyItem> row(bool a, bool gra, bool b, bool grb, bool c) {
  std::vector<BodyItem> body;
  if (a) body.push_back({C::module_a, 1});
  if (gra) body.push_back({C::gr_a, 1});
  if (b) body.push_back({C::module_b, 1});
  if (grb) body.push_back({C::gr_b, 1});
  if (c) body.push_back({C::module_c, 1});
  return body;
}

std::string two_digits(int i) { return (i < 10 ? "0" : "") + std::to_string(i); }

std::vector<ArchSpec> make_catalog() {
  std::vector<ArchSpec> out;

  const std::pair<char, Component> v2_types[] = {
      {'A', C::module_a}, {'B', C::module_b}, {'C', C::module_c}};
  for (const auto& [letter, component] : v2_types) {
    for (int n = 3; n <= 6; ++n) {
      ArchSpec s;
      s.name = std::string("InceptionV2-") + letter + std::to_string(n);
      s.stem = {Flavor::v2, false};
      s.flavor = Flavor::v2;
      s.body = {{component, n}};
      out.push_back(s);
    }
  }

  // {Module-A, GR-A, Module-B, GR-B, Module-C, reduced}
  const bool v3_rows[12][6] = {
      {1, 1, 1, 1, 1, 0}, {1, 0, 1, 1, 1, 0}, {1, 0, 1, 0, 1, 0}, {0, 1, 1, 1, 1, 0},
      {0, 1, 1, 1, 0, 0}, {0, 1, 1, 1, 0, 0}, {0, 1, 1, 1, 0, 1}, {1, 1, 1, 1, 0, 1},
      {1, 0, 1, 0, 1, 1}, {0, 1, 1, 1, 1, 1}, {1, 0, 1, 1, 1, 1}, {1, 1, 1, 1, 0, 1}};
  const bool v4_rows[12][6] = {
      {1, 1, 1, 1, 1, 0}, {1, 1, 1, 0, 1, 0}, {1, 0, 1, 1, 1, 0}, {1, 1, 0, 1, 1, 0},
      {1, 0, 1, 0, 1, 0}, {0, 1, 1, 1, 1, 0}, {1, 1, 1, 1, 1, 1}, {1, 1, 1, 1, 0, 1},
      {1, 0, 1, 1, 1, 1}, {0, 1, 1, 1, 1, 1}, {1, 0, 1, 1, 0, 1}, {1, 1, 1, 1, 1, 1}};
  for (int v = 3; v <= 4; ++v) {
    const auto& rows = v == 3 ? v3_rows : v4_rows;
    const Flavor flavor = v == 3 ? Flavor::v3 : Flavor::v4;
    for (int i = 0; i < 12; ++i) {
      const bool* r = rows[i];
      ArchSpec s;
      s.name = "InceptionV" + std::to_string(v) + "_v" + two_digits(i + 1);
      s.flavor = flavor;
      s.reduced_filters = r[5];
      s.stem = {flavor, r[5]};
      s.body = row(r[0], r[1], r[2], r[3], r[4]);
      out.push_back(s);
    }
  }

  ArchSpec v3_onfire;
  v3_onfire.name = "InceptionV3-OnFire";
  v3_onfire.flavor = Flavor::v3;
  v3_onfire.stem = {Flavor::v3, true};
  v3_onfire.reduced_filters = true;
  v3_onfire.body = row(true, false, true, false, true);
  out.push_back(v3_onfire);

  ArchSpec v4_onfire;
  v4_onfire.name = "InceptionV4-OnFire";
  v4_onfire.flavor = Flavor::v4;
  v4_onfire.stem = {Flavor::v4, false};
  v4_onfire.body = row(true, false, true, false, true);
  v4_onfire.head.dropout = 0.4f;
  out.push_back(v4_onfire);
  return out;
}

void check_spec(const ArchSpec& s) {
  const auto fail = [&](const std::string& what) {
    throw ContractError("architecture '" + s.name + "': " + what);
  };
  if (s.body.empty()) fail("body must not be empty");
  for (const auto& item : s.body) {
    if (item.count < 1) fail("component counts must be >= 1");
  }
  if (s.flavor == Flavor::v2 && s.module_count() > 6) fail("InceptionV2 variants hold at most six modules");
  if (s.head.classes != 2) fail("head must produce 2 classes (fire / no-fire)");
  if (s.head.dropout && !(*s.head.dropout > 0.0f && *s.head.dropout < 1.0f)) {
    fail("dropout rate must lie in (0, 1)");
  }
  if (s.input_height < 1 || s.input_width < 1) fail("input size must be positive");
  if (s.width_divisor < 1) fail("width divisor must be >= 1");
}

}  // namespace

const std::vector<ArchSpec>& catalog() {
  static const std::vector<ArchSpec> entries = make_catalog();
  return entries;
}

std::vector<std::string> catalog_names() {
  std::vector<std::string> names;
  for (const auto& s : catalog()) names.push_back(s.name);
  return names;
}

const ArchSpec& find_arch(std::string_view name) {
  for (const auto& s : catalog()) {
    if (s.name == name) return s;
  }
  std::string valid;
  for (const auto& s : catalog()) valid += (valid.empty() ? "" : ", ") + s.name;
  throw LookupError("unknown architecture '" + std::string(name) + "'; valid names: " + valid);
}

Graph build_graph(const ArchSpec& spec) {
  check_spec(spec);
  const BlockOptions opts{spec.resolved_norm(), spec.width_divisor};
  GraphBuilder b(spec.name);
  std::string x = b.input(spec.input_height, spec.input_width, 3);
  x = build_stem(b, x, {spec.stem.version, spec.stem.reduced}, opts);
  std::map<Component, int> seen;
  for (const auto& item : spec.body) {
    for (int k = 0; k < item.count; ++k) {
      const int index = ++seen[item.component];
      const std::string suffix = std::to_string(index);
      switch (item.component) {
        case C::module_a:
          x = build_module(b, x,
                           default_module_spec(ModuleType::A, spec.flavor, spec.asymmetric_n,
                                               spec.reduced_filters),
                           "mixed_a" + suffix, opts);
          break;
        case C::module_b:
          x = build_module(b, x,
                           default_module_spec(ModuleType::B, spec.flavor, spec.asymmetric_n,
                                               spec.reduced_filters),
                           "mixed_b" + suffix, opts);
          break;
        case C::module_c:
          x = build_module(b, x,
                           default_module_spec(ModuleType::C, spec.flavor, spec.asymmetric_n,
                                               spec.reduced_filters),
                           "mixed_c" + suffix, opts);
          break;
        case C::gr_a:
          x = build_grid_reduction(
              b, x, default_grid_reduction_spec(GridReductionType::A, spec.flavor, spec.reduced_filters),
              "reduction_a" + suffix, opts);
          break;
        case C::gr_b:
          x = build_grid_reduction(
              b, x, default_grid_reduction_spec(GridReductionType::B, spec.flavor, spec.reduced_filters),
              "reduction_b" + suffix, opts);
          break;
      }
    }
  }
  x = b.add("head/global_max_pool", GlobalMaxPoolSpec{}, {x});
  if (spec.head.dropout) x = b.add("head/dropout", DropoutSpec{*spec.head.dropout}, {x});
  x = b.add(std::string(kHeadLayer), DenseSpec{spec.head.classes, Activation::linear}, {x});
  b.add("head/softmax", SoftmaxSpec{}, {x});
  Graph g = std::move(b).finish();
  validate(g);
  return g;
}

Graph build_arch(std::string_view name, int input_height, int input_width) {
  ArchSpec spec = find_arch(name);
  spec.input_height = input_height;
  spec.input_width = input_width;
  return build_graph(spec);
}

ParamReport count_parameters(const Graph& graph) {
  const auto shapes = infer_shapes(graph);
  ParamReport report;
  for (const LayerSpec& node : graph.nodes) {
    LayerParamCount c{node.name, node.kind(), 0, 0};
    const auto in_channels = [&] {
      return static_cast<std::int64_t>(
          shapes.at(static_cast<std::size_t>(graph.index_of(node.inputs.at(0)))).back());
    };
    if (const auto* conv = std::get_if<ConvSpec>(&node.params)) {
      c.trainable = static_cast<std::int64_t>(conv->geom.kernel_h) * conv->geom.kernel_w *
                        in_channels() * conv->filters + conv->filters;
    } else if (const auto* d = std::get_if<DenseSpec>(&node.params)) {
      c.trainable = in_channels() * d->units + d->units;
    } else if (node.kind() == LayerKind::batch_norm) {
      c.trainable = 2 * in_channels();
      c.non_trainable = 2 * in_channels();
    }
    report.total += c.trainable;
    report.non_trainable += c.non_trainable;
    report.per_layer.push_back(std::move(c));
  }
  return report;
}

// ---------------------------------------------------------------------------
// Manifest serialisation

namespace {

constexpr std::string_view kHeader = "ONFIRE-ARCH";
constexpr std::string_view kVersion = "v1";

std::string format_float(float v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::string_view padding_name(Padding p) { return p == Padding::same ? "same" : "valid"; }
std::string_view act_name(Activation a) { return a == Activation::relu ? "relu" : "linear"; }

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void write_params(std::ostream& os, const LayerParams& params) {
  std::visit(overloaded{
                 [&](const InputSpec& s) {
                   os << " height=" << s.height << " width=" << s.width << " channels=" << s.channels;
                 },
                 [&](const ConvSpec& s) {
                   os << " filters=" << s.filters << " kernel=" << s.geom.kernel_h << "x"
                      << s.geom.kernel_w << " stride=" << s.geom.stride
                      << " padding=" << padding_name(s.geom.padding) << " act=" << act_name(s.act);
                 },
                 [&](const DenseSpec& s) { os << " units=" << s.units << " act=" << act_name(s.act); },
                 [&](const BatchNormSpec& s) {
                   os << " epsilon=" << format_float(s.params.epsilon)
                      << " momentum=" << format_float(s.params.momentum) << " act=" << act_name(s.act);
                 },
                 [&](const LrnSpec& s) {
                   os << " radius=" << s.params.radius << " alpha=" << format_float(s.params.alpha)
                      << " beta=" << format_float(s.params.beta)
                      << " bias=" << format_float(s.params.bias);
                 },
                 [&](const DropoutSpec& s) { os << " rate=" << format_float(s.rate); },
                 [&](const MaxPoolSpec& s) {
                   os << " window=" << s.geom.window << " stride=" << s.geom.stride
                      << " padding=" << padding_name(s.geom.padding);
                 },
                 [&](const AvgPoolSpec& s) {
                   os << " window=" << s.geom.window << " stride=" << s.geom.stride
                      << " padding=" << padding_name(s.geom.padding);
                 },
                 [](const auto&) {},
             },
             params);
}

class LineParser {
 public:
  LineParser(int line, std::map<std::string, std::string> kv) : line_(line), kv_(std::move(kv)) {}

  std::string take(const std::string& key) {
    auto it = kv_.find(key);
    if (it == kv_.end()) throw ParseError(line_, "missing key '" + key + "'");
    std::string v = std::move(it->second);
    kv_.erase(it);
    return v;
  }
  int integer(const std::string& key) {
    const std::string v = take(key);
    int out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) {
      throw ParseError(line_, "key '" + key + "' expects an integer, got '" + v + "'");
    }
    return out;
  }
  float real(const std::string& key) {
    const std::string v = take(key);
    float out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) {
      throw ParseError(line_, "key '" + key + "' expects a number, got '" + v + "'");
    }
    return out;
  }
  Padding padding(const std::string& key) {
    const std::string v = take(key);
    if (v == "same") return Padding::same;
    if (v == "valid") return Padding::valid;
    throw ParseError(line_, "key '" + key + "' expects same|valid, got '" + v + "'");
  }
  Activation act() {
    const std::string v = take("act");
    if (v == "relu") return Activation::relu;
    if (v == "linear") return Activation::linear;
    throw ParseError(line_, "key 'act' expects relu|linear, got '" + v + "'");
  }
  std::pair<int, int> kernel() {
    const std::string v = take("kernel");
    const auto x = v.find('x');
    int h = 0, w = 0;
    const bool ok = x != std::string::npos &&
                    std::from_chars(v.data(), v.data() + x, h).ptr == v.data() + x &&
                    std::from_chars(v.data() + x + 1, v.data() + v.size(), w).ptr ==
                        v.data() + v.size();
    if (!ok) throw ParseError(line_, "key 'kernel' expects HxW, got '" + v + "'");
    return {h, w};
  }
  void finish() {
    if (!kv_.empty()) throw ParseError(line_, "unknown key '" + kv_.begin()->first + "'");
  }

 private:
  int line_;
  std::map<std::string, std::string> kv_;
};

LayerParams parse_params(LayerKind kind, LineParser& p) {
  switch (kind) {
    case LayerKind::input:
      return InputSpec{p.integer("height"), p.integer("width"), p.integer("channels")};
    case LayerKind::conv: {
      ConvSpec s;
      s.filters = p.integer("filters");
      std::tie(s.geom.kernel_h, s.geom.kernel_w) = p.kernel();
      s.geom.stride = p.integer("stride");
      s.geom.padding = p.padding("padding");
      s.act = p.act();
      return s;
    }
    case LayerKind::dense: {
      const int units = p.integer("units");
      return DenseSpec{units, p.act()};
    }
    case LayerKind::batch_norm: {
      BatchNormSpec s;
      s.params.epsilon = p.real("epsilon");
      s.params.momentum = p.real("momentum");
      s.act = p.act();
      return s;
    }
    case LayerKind::lrn: {
      LrnSpec s;
      s.params.radius = p.integer("radius");
      s.params.alpha = p.real("alpha");
      s.params.beta = p.real("beta");
      s.params.bias = p.real("bias");
      return s;
    }
    case LayerKind::dropout:
      return DropoutSpec{p.real("rate")};
    case LayerKind::max_pool:
    case LayerKind::avg_pool: {
      PoolGeometry g;
      g.window = p.integer("window");
      g.stride = p.integer("stride");
      g.padding = p.padding("padding");
      if (kind == LayerKind::max_pool) return MaxPoolSpec{g};
      return AvgPoolSpec{g};
    }
    case LayerKind::global_max_pool:
      return GlobalMaxPoolSpec{};
    case LayerKind::softmax:
      return SoftmaxSpec{};
    case LayerKind::concat:
      return ConcatSpec{};
  }
  throw ParseError(0, "unhandled layer kind");
}

std::vector<std::string> parse_inputs(int line, const std::string& v) {
  if (v.size() < 2 || v.front() != '[' || v.back() != ']') {
    throw ParseError(line, "inputs must be written as [a,b,...], got '" + v + "'");
  }
  std::vector<std::string> out;
  const std::string body = v.substr(1, v.size() - 2);
  if (body.empty()) return out;
  std::stringstream ss(body);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) throw ParseError(line, "empty input name in '" + v + "'");
    out.push_back(item);
  }
  if (body.back() == ',') throw ParseError(line, "empty input name in '" + v + "'");
  return out;
}

}  // namespace

std::string serialize_arch(const Graph& graph) {
  std::ostringstream os;
  os << kHeader << ' ' << kVersion << ' ' << graph.name << '\n';
  for (const LayerSpec& node : graph.nodes) {
    os << node.name << ' ' << kind_name(node.kind());
    write_params(os, node.params);
    os << " inputs=[";
    for (std::size_t i = 0; i < node.inputs.size(); ++i) os << (i ? "," : "") << node.inputs[i];
    os << "]\n";
  }
  return os.str();
}

Graph deserialize_arch(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  Graph graph;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    std::istringstream ls(line);
    std::vector<std::string> tokens;
    for (std::string t; ls >> t;) tokens.push_back(t);
    if (tokens.empty()) continue;
    if (!have_header) {
      if (tokens.size() != 3 || tokens[0] != kHeader) {
        throw ParseError(line_no, "expected header 'ONFIRE-ARCH v1 <name>'");
      }
      if (tokens[1] != kVersion) throw ParseError(line_no, "unsupported version '" + tokens[1] + "'");
      graph.name = tokens[2];
      have_header = true;
      continue;
    }
    if (tokens.size() < 3) throw ParseError(line_no, "expected '<name> <kind> ... inputs=[...]'");
    LayerKind kind;
    try {
      kind = parse_kind(tokens[1]);
    } catch (const LookupError& e) {
      throw ParseError(line_no, e.what());
    }
    std::map<std::string, std::string> kv;
    for (std::size_t i = 2; i < tokens.size(); ++i) {
      const auto eq = tokens[i].find('=');
      if (eq == std::string::npos || eq == 0) {
        throw ParseError(line_no, "expected key=value, got '" + tokens[i] + "'");
      }
      if (!kv.emplace(tokens[i].substr(0, eq), tokens[i].substr(eq + 1)).second) {
        throw ParseError(line_no, "duplicate key '" + tokens[i].substr(0, eq) + "'");
      }
    }
    LineParser p(line_no, std::move(kv));
    LayerSpec node;
    node.name = tokens[0];
    node.inputs = parse_inputs(line_no, p.take("inputs"));
    node.params = parse_params(kind, p);
    p.finish();
    graph.nodes.push_back(std::move(node));
  }
  if (!have_header) throw ParseError(line_no, "missing 'ONFIRE-ARCH v1 <name>' header");
  try {
    validate(graph);
  } catch (const GraphError& e) {
    throw ParseError(line_no, std::string("incomplete or inconsistent manifest: ") + e.what());
  }
  return graph;
}

}  // namespace onfire
