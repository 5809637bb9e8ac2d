#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "onfire/blocks.hpp"
#include "onfire/graph.hpp"

namespace onfire {

enum class Component { module_a, gr_a, module_b, gr_b, module_c };
std::string_view to_string(Component component);

struct BodyItem {
  Component component = Component::module_a;
  int count = 1;
};

// global max pool -> [dropout] -> dense(classes) -> softmax
struct HeadSpec {
  std::optional<float> dropout;
  int classes = 2;
};

// Declarative description of one architecture variant.
struct ArchSpec {
  std::string name;
  StemSpec stem;
  Flavor flavor = Flavor::v3;  // module and grid-reduction flavor
  std::vector<BodyItem> body;
  bool reduced_filters = false;
  HeadSpec head;
  int input_height = 224;
  int input_width = 224;
  int asymmetric_n = 7;
  std::optional<Norm> norm;  // unset: none for v2, batch_norm for v3/v4
  int width_divisor = 1;

  Norm resolved_norm() const;
  int module_count() const;
};

// The 38 named variants: InceptionV2 A3-A6/B3-B6/C3-C6, InceptionV3_v01-v12,
// InceptionV4_v01-v12, InceptionV3-OnFire and InceptionV4-OnFire.
const std::vector<ArchSpec>& catalog();
std::vector<std::string> catalog_names();
// Throws LookupError listing every valid name.
const ArchSpec& find_arch(std::string_view name);

// Checks ArchSpec invariants, assembles stem, body (in the given order) and
// head, and validates the resulting graph. Head nodes are named
// head/global_max_pool, head/dropout, head/logits and head/softmax.
Graph build_graph(const ArchSpec& spec);
Graph build_arch(std::string_view name, int input_height = 224, int input_width = 224);

inline constexpr std::string_view kHeadLayer = "head/logits";

struct LayerParamCount {
  std::string name;
  LayerKind kind = LayerKind::input;
  std::int64_t trainable = 0;
  std::int64_t non_trainable = 0;
};

struct ParamReport {
  std::int64_t total = 0;          // trainable parameters
  std::int64_t non_trainable = 0;  // BN running statistics
  std::vector<LayerParamCount> per_layer;

  double millions() const { return static_cast<double>(total) / 1e6; }
};

// conv: kh*kw*Cin*F + F; dense: in*out + out; batch_norm: 2C trainable and
// 2C non-trainable; every other layer: 0.
ParamReport count_parameters(const Graph& graph);

// Line-oriented manifest:
//   ONFIRE-ARCH v1 <archname>
//   <node> <kind> key=value ... inputs=[a,b]
// Blank lines and lines starting with '#' are ignored by the parser.
std::string serialize_arch(const Graph& graph);
// Throws ParseError carrying the offending line number.
Graph deserialize_arch(std::string_view text);

}  // namespace onfire
