#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <string>

#include "onfire/blocks.hpp"
#include "onfire/errors.hpp"
#include "onfire/zoo.hpp"

using namespace onfire;

namespace {

// Smallest k with M / 2^k <= 100, then ceiling division.
int reduce_oracle(int m) {
  if (m <= 100) return m;
  int k = 0;
  while (static_cast<double>(m) / std::pow(2.0, k) > 100.0) ++k;
  return static_cast<int>(std::ceil(static_cast<double>(m) / std::pow(2.0, k)));
}

std::vector<const ConvSpec*> convs(const Graph& g) {
  std::vector<const ConvSpec*> out;
  for (const auto& n : g.nodes) {
    if (const auto* c = std::get_if<ConvSpec>(&n.params)) out.push_back(c);
  }
  return out;
}

const BlockOptions kPlain{Norm::none, 1};
const BlockOptions kBn{Norm::batch_norm, 1};

}  // namespace

TEST_CASE("reduce_filters over 1..4096") {
  for (int m = 1; m <= 4096; ++m) {
    const int r = reduce_filters(m);
    CHECK(r == reduce_oracle(m));
    if (m <= 100) {
      CHECK(r == m);
    } else {
      CHECK(r > 50);
      CHECK(r <= 100);
    }
    CHECK(reduce_filters(r) == r);
  }
  CHECK(reduce_filters(64) == 64);
  CHECK(reduce_filters(192) == 96);
  CHECK(reduce_filters(768) == 96);
  CHECK_THROWS_AS(reduce_filters(0), ContractError);
}

TEST_CASE("modules preserve spatial extents and sum branch filters") {
  for (ModuleType t : {ModuleType::A, ModuleType::B, ModuleType::C}) {
    for (Flavor f : {Flavor::v2, Flavor::v3, Flavor::v4}) {
      for (bool reduced : {false, true}) {
        const ModuleSpec spec = default_module_spec(t, f, 7, reduced);
        const Graph g = module_graph(spec, 17, 13, 64, kBn);
        const auto shapes = infer_shapes(g);
        int expected = 0;
        for (const auto& br : spec.branches) {
          if (br.heads.empty()) {
            expected += materialize_filters(br.chain.back().filters, reduced, 1);
          }
          for (const auto& h : br.heads) expected += materialize_filters(h.filters, reduced, 1);
        }
        CHECK(shapes.back() == Shape{1, 17, 13, expected});
        if (reduced) {
          for (const auto* c : convs(g)) CHECK(c->filters <= 100);
        }
      }
    }
  }
}

TEST_CASE("Module-A concat of the v3 flavor is 64+64+96+32") {
  const Graph g = module_graph(default_module_spec(ModuleType::A, Flavor::v3), 35, 35, 192, kPlain);
  CHECK(infer_shapes(g).back() == Shape{1, 35, 35, 256});
}

TEST_CASE("Module-B uses only 1x1, 1xn and nx1 kernels") {
  for (int n : {3, 5, 7}) {
    const Graph g = module_graph(default_module_spec(ModuleType::B, Flavor::v3, n), 17, 17, 96, kPlain);
    bool saw_1xn = false, saw_nx1 = false;
    for (const auto* c : convs(g)) {
      const int kh = c->geom.kernel_h, kw = c->geom.kernel_w;
      CHECK((kh == 1 || kw == 1));
      CHECK(((kh == 1 && kw == 1) || (kh == 1 && kw == n) || (kh == n && kw == 1)));
      saw_1xn |= kh == 1 && kw == n;
      saw_nx1 |= kh == n && kw == 1;
    }
    CHECK(saw_1xn);
    CHECK(saw_nx1);
  }
  CHECK_THROWS_AS(default_module_spec(ModuleType::B, Flavor::v3, 4), ContractError);
  CHECK_THROWS_AS(default_module_spec(ModuleType::B, Flavor::v3, 1), ContractError);
}

TEST_CASE("Module-C widened branch ends in parallel 1x3 and 3x1 heads") {
  for (Flavor f : {Flavor::v3, Flavor::v4}) {
    const ModuleSpec spec = default_module_spec(ModuleType::C, f);
    int split_branches = 0;
    for (const auto& br : spec.branches) {
      if (br.heads.empty()) continue;
      ++split_branches;
      REQUIRE(br.heads.size() == 2);
      CHECK(br.heads[0].kernel_h == 1);
      CHECK(br.heads[0].kernel_w == 3);
      CHECK(br.heads[1].kernel_h == 3);
      CHECK(br.heads[1].kernel_w == 1);
    }
    CHECK(split_branches == 2);
  }
}

TEST_CASE("grid reduction shapes") {
  const Graph g = grid_reduction_graph(simple_grid_reduction(GridReductionType::A, 384), 35, 35, 288, kPlain);
  CHECK(infer_shapes(g).back() == Shape{1, 17, 17, 384 + 288});

  for (GridReductionType t : {GridReductionType::A, GridReductionType::B}) {
    for (Flavor f : {Flavor::v3, Flavor::v4}) {
      const GridReductionSpec spec = default_grid_reduction_spec(t, f);
      int conv_filters = 0;
      for (const auto& br : spec.branches) {
        if (!br.chain.empty()) conv_filters += br.chain.back().filters;
      }
      const Graph gr = grid_reduction_graph(spec, 35, 35, 160, kBn);
      CHECK(infer_shapes(gr).back() == Shape{1, 17, 17, conv_filters + 160});
    }
  }

  GraphBuilder b("twice");
  auto x = b.input(56, 56, 32);
  x = build_grid_reduction(b, x, simple_grid_reduction(GridReductionType::A, 16), "gr1", kPlain);
  x = build_grid_reduction(b, x, simple_grid_reduction(GridReductionType::A, 16), "gr2", kPlain);
  const auto shapes = infer_shapes(b.graph());
  CHECK(shapes.back()[1] == 13);
  CHECK(shapes.back()[2] == 13);

  GraphBuilder small("small");
  const auto in = small.input(2, 2, 8);
  CHECK_THROWS_AS(build_grid_reduction(small, in, simple_grid_reduction(GridReductionType::A, 4), "gr", kPlain),
                  ContractError);
}

TEST_CASE("stems") {
  const Graph v4 = stem_graph({Flavor::v4, false}, 299, 299, kBn);
  CHECK(infer_shapes(v4).back() == Shape{1, 35, 35, 384});

  const Graph v2 = stem_graph({Flavor::v2, false}, 224, 224, kPlain);
  int conv_count = 0, pool_count = 0;
  for (const auto& n : v2.nodes) {
    conv_count += n.kind() == LayerKind::conv;
    pool_count += n.kind() == LayerKind::max_pool || n.kind() == LayerKind::avg_pool;
  }
  CHECK(conv_count == 5);
  CHECK(pool_count == 1);

  const Graph v4r = stem_graph({Flavor::v4, true}, 224, 224, kBn);
  int max_filters = 0;
  for (const auto* c : convs(v4r)) max_filters = std::max(max_filters, c->filters);
  CHECK(max_filters <= 100);

  for (Flavor f : {Flavor::v2, Flavor::v3, Flavor::v4}) {
    CHECK_NOTHROW(stem_graph({f, false}, 224, 224, kBn));
    try {
      stem_graph({f, false}, 20, 20, kBn);
      FAIL("expected a graph error");
    } catch (const GraphError& e) {
      CHECK(std::string(e.what()).find("node 'stem/") != std::string::npos);
    }
  }
}

TEST_CASE("factorised modules are cheaper than their unfactorised equivalents") {
  // Module-A: the two stacked 3x3 convolutions against one 5x5 of equal width.
  ModuleSpec a = default_module_spec(ModuleType::A, Flavor::v3);
  ModuleSpec a5 = a;
  for (auto& br : a5.branches) {
    if (br.chain.size() == 3 && br.chain[1].kernel_h == 3 && br.chain[2].kernel_h == 3) {
      br.chain = {br.chain[0], {br.chain[2].filters, 5, 5, 1, Padding::same}};
    }
  }
  const auto pa = count_parameters(module_graph(a, 35, 35, 192, kPlain)).total;
  const auto pa5 = count_parameters(module_graph(a5, 35, 35, 192, kPlain)).total;
  CHECK(pa < pa5);

  // Module-B: each 1xn / nx1 pair against a single n x n.
  ModuleSpec b = default_module_spec(ModuleType::B, Flavor::v3);
  ModuleSpec bn = b;
  for (auto& br : bn.branches) {
    std::vector<ConvStep> chain;
    for (std::size_t i = 0; i < br.chain.size(); ++i) {
      const ConvStep& s = br.chain[i];
      if (s.kernel_h == 1 && s.kernel_w == 7 && i + 1 < br.chain.size() && br.chain[i + 1].kernel_h == 7) {
        chain.push_back({br.chain[i + 1].filters, 7, 7, 1, Padding::same});
        ++i;
      } else {
        chain.push_back(s);
      }
    }
    br.chain = chain;
  }
  const auto pb = count_parameters(module_graph(b, 17, 17, 768, kPlain)).total;
  const auto pbn = count_parameters(module_graph(bn, 17, 17, 768, kPlain)).total;
  CHECK(pb < pbn);
}
