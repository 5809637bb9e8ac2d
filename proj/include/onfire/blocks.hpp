#pragma once

#include <optional>
#include <string>
#include <vector>

#include "onfire/graph.hpp"

namespace onfire {

enum class ModuleType { A, B, C };
enum class Flavor { v2, v3, v4 };
enum class Norm { none, batch_norm, lrn };

std::string_view to_string(ModuleType type);
std::string_view to_string(Flavor flavor);
std::string_view to_string(Norm norm);

// Filter-count reduction: M stays when M <= 100, otherwise
// ceil(M / 2^k) with k = ceil(log2(M / 100)), which lands in (50, 100].
int reduce_filters(int filters);

struct ConvStep {
  int filters = 1;
  int kernel_h = 1;
  int kernel_w = 1;
  int stride = 1;
  Padding padding = Padding::same;
};

enum class PoolKind { avg, max };

struct PoolStep {
  PoolKind kind = PoolKind::avg;
  PoolGeometry geom{3, 1, Padding::same};
};

// One parallel path of a block: an optional leading pool, a chain of
// convolutions, and optionally several terminal convolutions that all read
// the chain's output (Module-C's 1x3 / 3x1 split).
struct Branch {
  std::optional<PoolStep> pool;
  std::vector<ConvStep> chain;
  std::vector<ConvStep> heads;
};

struct ModuleSpec {
  ModuleType type = ModuleType::A;
  Flavor flavor = Flavor::v3;
  std::vector<Branch> branches;
  int asymmetric_n = 7;
  bool reduced = false;
};

// Unreduced per-branch filter counts for the given module type and flavor.
// Module-B factorises n x n into 1xn / nx1 chains.
ModuleSpec default_module_spec(ModuleType type, Flavor flavor, int asymmetric_n = 7,
                               bool reduced = false);

enum class GridReductionType { A, B };

struct GridReductionSpec {
  GridReductionType type = GridReductionType::A;
  std::vector<Branch> branches;  // stride-2 conv branches plus the max-pool branch
  bool reduced = false;
};

// v2/v3 flavors follow InceptionV3's reduction blocks, v4 InceptionV4's.
GridReductionSpec default_grid_reduction_spec(GridReductionType type, Flavor flavor,
                                              bool reduced = false);
// A single 3x3/2 valid conv branch of `conv_filters` beside a 3x3/2 max pool.
GridReductionSpec simple_grid_reduction(GridReductionType type, int conv_filters);

// How abstract filter counts and normalisation become graph nodes.
struct BlockOptions {
  Norm norm = Norm::batch_norm;
  int width_divisor = 1;  // extra slimming after reduction, filters = ceil(f / divisor)
};

// Filter count materialised for a layer.
int materialize_filters(int filters, bool reduced, int width_divisor);

// The builders append nodes to `builder`, reading `input`, and return the
// name of the block's output node.
std::string build_module(GraphBuilder& builder, const std::string& input, const ModuleSpec& spec,
                         const std::string& prefix, const BlockOptions& options);
std::string build_grid_reduction(GraphBuilder& builder, const std::string& input,
                                 const GridReductionSpec& spec, const std::string& prefix,
                                 const BlockOptions& options);

struct StemSpec {
  Flavor version = Flavor::v3;
  bool reduced = false;
};

// InceptionV2: 2 convs, max pool, 3 convs. InceptionV3: Keras stem (5 convs,
// 2 pools). InceptionV4: the stem with parallel conv/pool grid reductions.
// Throws GraphError naming the failing node when the input is too small.
std::string build_stem(GraphBuilder& builder, const std::string& input, const StemSpec& spec,
                       const BlockOptions& options, const std::string& prefix = "stem");

// Standalone graphs (input node + block) for inspection and tests.
Graph module_graph(const ModuleSpec& spec, int height, int width, int channels,
                   const BlockOptions& options);
Graph grid_reduction_graph(const GridReductionSpec& spec, int height, int width, int channels,
                           const BlockOptions& options);
Graph stem_graph(const StemSpec& spec, int height, int width, const BlockOptions& options);

}  // namespace onfire
