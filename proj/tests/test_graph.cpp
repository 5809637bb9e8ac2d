#include <doctest.h>

#include <string>

#include "onfire/errors.hpp"
#include "onfire/network.hpp"
#include "onfire/nn.hpp"
#include "support.hpp"

using namespace onfire;
using namespace onfire::testing;

namespace {

GraphBuilder small_builder() {
  GraphBuilder b("small");
  const auto in = b.input(6, 6, 2);
  const auto c = b.add("conv", ConvSpec{3, {3, 3, 1, Padding::same}, Activation::linear}, {in});
  const auto bn = b.add("bn", BatchNormSpec{{}, Activation::relu}, {c});
  const auto gp = b.add("gmp", GlobalMaxPoolSpec{}, {bn});
  const auto d = b.add("head/logits", DenseSpec{2, Activation::linear}, {gp});
  b.add("head/softmax", SoftmaxSpec{}, {d});
  return b;
}

bool message_has(const std::function<void()>& fn, const std::string& needle) {
  try {
    fn();
  } catch (const GraphError& e) {
    return std::string(e.what()).find(needle) != std::string::npos;
  }
  return false;
}

}  // namespace

TEST_CASE("graph validation") {
  CHECK_NOTHROW(validate(small_builder().graph()));

  Graph dup = small_builder().graph();
  dup.nodes[2].name = "conv";
  CHECK_THROWS_AS(validate(dup), GraphError);

  Graph forward_ref = small_builder().graph();
  forward_ref.nodes[1].inputs = {"bn"};
  CHECK_THROWS_AS(validate(forward_ref), GraphError);

  Graph dangling = small_builder().graph();
  dangling.nodes.insert(dangling.nodes.begin() + 2,
                        LayerSpec{"spare", ConvSpec{1, {}, Activation::relu}, {"input"}});
  CHECK_THROWS_AS(validate(dangling), GraphError);

  Graph bad_rate = small_builder().graph();
  bad_rate.nodes.insert(bad_rate.nodes.end() - 2, LayerSpec{"drop", DropoutSpec{1.0f}, {"gmp"}});
  bad_rate.nodes[bad_rate.nodes.size() - 2].inputs = {"drop"};
  CHECK_THROWS_AS(validate(bad_rate), GraphError);

  Graph zero_filters = small_builder().graph();
  std::get<ConvSpec>(zero_filters.nodes[1].params).filters = 0;
  CHECK_THROWS_AS(validate(zero_filters), GraphError);
}

TEST_CASE("shape inference names the failing node") {
  GraphBuilder b("tiny");
  const auto in = b.input(4, 4, 3);
  const auto c = b.add("big_kernel", ConvSpec{2, {5, 5, 1, Padding::valid}}, {in});
  b.add("gmp", GlobalMaxPoolSpec{}, {c});
  CHECK(message_has([&] { infer_shapes(b.graph()); }, "big_kernel"));
  const auto shapes = infer_shapes(small_builder().graph(), 3);
  CHECK(shapes[1] == Shape{3, 6, 6, 3});
  CHECK(shapes.back() == Shape{3, 2});
}

TEST_CASE("network forward matches static shapes and probabilities") {
  Network net(small_builder().finish(), 5);
  Rng rng(1);
  const Tensor x = random_tensor({4, 6, 6, 2}, rng);
  const Tensor p = net.forward(x, Mode::infer);
  CHECK(p.shape() == Shape{4, 2});
  for (int r = 0; r < 4; ++r) CHECK(p[r * 2] + p[r * 2 + 1] == doctest::Approx(1.0));
  for (std::size_t i = 0; i < net.activations().size(); ++i) {
    Shape s = net.node_shapes()[i];
    s[0] = 4;
    CHECK(net.activations()[i].shape() == s);
  }
  CHECK_THROWS_AS(net.forward(Tensor({1, 5, 6, 2}), Mode::infer), ContractError);
  CHECK_THROWS_AS(net.backward(Tensor({4, 2})), StateError);
}

TEST_CASE("network loss gradient matches finite differences on a 3-layer net") {
  Rng rng(42);
  for (int trial = 0; trial < 20; ++trial) {
    Network net(small_builder().finish(), 100 + trial);
    const Tensor x = random_tensor({3, 6, 6, 2}, rng);
    Tensor labels({3, 2});
    for (int r = 0; r < 3; ++r) labels[r * 2 + rng.below(2)] = 1.0f;
    net.forward(x, Mode::train);
    net.backward(softmax_cross_entropy(net.logits(), labels).grad);
    for (const char* name : {"conv/weights", "bn/gamma", "head/logits/weights"}) {
      Parameter* p = net.find_parameter(name);
      REQUIRE(p != nullptr);
      const Tensor analytic = p->grad;
      const auto idx = all_indices(p->value);
      auto loss = [&](const Tensor& w) {
        const Tensor saved = p->value;
        p->value = w;
        net.forward(x, Mode::train);
        const double l = softmax_cross_entropy(net.logits(), labels).loss;
        p->value = saved;
        return l;
      };
      const auto numeric = numeric_gradient(loss, p->value, idx);
      CHECK(relative_error(gather(analytic, idx), numeric) <= 1e-2);
    }
  }
}

TEST_CASE("fan-out gradients accumulate across consumers") {
  GraphBuilder b("fanout");
  const auto in = b.input(5, 5, 2);
  const auto c = b.add("stem", ConvSpec{3, {1, 1, 1, Padding::same}, Activation::linear}, {in});
  const auto l = b.add("left", ConvSpec{2, {3, 3, 1, Padding::same}, Activation::linear}, {c});
  const auto r = b.add("right", MaxPoolSpec{{3, 1, Padding::same}}, {c});
  const auto cat = b.add("cat", ConcatSpec{}, {l, r});
  const auto gp = b.add("gmp", GlobalMaxPoolSpec{}, {cat});
  const auto d = b.add("head/logits", DenseSpec{2}, {gp});
  b.add("head/softmax", SoftmaxSpec{}, {d});
  Network net(std::move(b).finish(), 3);
  Rng rng(7);
  int passed = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor x = separated_tensor({2, 5, 5, 2}, rng, 0.07);
    const Tensor labels({2, 2}, {1, 0, 0, 1});
    net.forward(x, Mode::train);
    net.backward(softmax_cross_entropy(net.logits(), labels).grad);
    const Tensor analytic = net.input_grad();
    const auto idx = all_indices(x);
    const auto numeric = numeric_gradient(
        [&](const Tensor& xx) {
          net.forward(xx, Mode::train);
          return softmax_cross_entropy(net.logits(), labels).loss;
        },
        x, idx);
    passed += relative_error(gather(analytic, idx), numeric) <= 1e-2;
  }
  CHECK(passed == 20);
}
