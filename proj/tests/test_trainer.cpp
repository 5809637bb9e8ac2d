#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "onfire/checkpoint.hpp"
#include "onfire/errors.hpp"
#include "onfire/trainer.hpp"
#include "onfire/zoo.hpp"
#include "support.hpp"

using namespace onfire;
using namespace onfire::testing;
namespace fs = std::filesystem;

namespace {

// 32x32 colour blobs: reddish for class 1, bluish for class 0, random
// position and radius over a grey noise background.
Dataset blob_set(int n_per_class, std::uint64_t seed) {
  Rng rng(seed);
  Dataset d;
  for (int i = 0; i < 2 * n_per_class; ++i) {
    const int label = i % 2;
    Image img(32, 32, 3);
    for (auto& v : img.data) v = static_cast<float>(0.4 + 0.2 * rng.uniform());
    const double cx = rng.uniform(8, 24), cy = rng.uniform(8, 24), r = rng.uniform(4, 8);
    for (int y = 0; y < 32; ++y) {
      for (int x = 0; x < 32; ++x) {
        if ((x - cx) * (x - cx) + (y - cy) * (y - cy) > r * r) continue;
        img.at(y, x, 0) = label ? 0.9f : 0.1f;
        img.at(y, x, 1) = 0.2f;
        img.at(y, x, 2) = label ? 0.1f : 0.9f;
      }
    }
    d.add(std::move(img), label);
  }
  return d;
}

// Logistic regression on per-image mean red minus mean blue; separability
// means it fits the training set perfectly.
bool logistic_separable(const Dataset& d) {
  std::vector<double> feature;
  for (const Image& img : d.images) {
    double s = 0.0;
    for (std::size_t i = 0; i < img.data.size(); i += 3) s += img.data[i] - img.data[i + 2];
    feature.push_back(s / (img.data.size() / 3));
  }
  double w = 0.0, b = 0.0;
  for (int it = 0; it < 2000; ++it) {
    double gw = 0.0, gb = 0.0;
    for (std::size_t i = 0; i < feature.size(); ++i) {
      const double p = 1.0 / (1.0 + std::exp(-(w * feature[i] + b)));
      gw += (p - d.labels[i]) * feature[i];
      gb += p - d.labels[i];
    }
    w -= 10.0 * gw / feature.size();
    b -= 10.0 * gb / feature.size();
  }
  for (std::size_t i = 0; i < feature.size(); ++i) {
    if ((w * feature[i] + b > 0) != (d.labels[i] == 1)) return false;
  }
  return true;
}

// conv -> [bn] -> relu -> global max pool -> dense. BN's per-batch
// statistics add epoch-to-epoch loss jitter, so the toy runs leave it out.
Graph tiny_graph(bool batch_norm = false, int size = 32) {
  GraphBuilder b("tiny");
  const auto in = b.input(size, size, 3);
  auto c = b.add("conv",
                 ConvSpec{8, {3, 3, 1, Padding::same}, batch_norm ? Activation::linear : Activation::relu},
                 {in});
  if (batch_norm) c = b.add("bn", BatchNormSpec{{}, Activation::relu}, {c});
  const auto gp = b.add("gmp", GlobalMaxPoolSpec{}, {c});
  const auto d = b.add("head/logits", DenseSpec{2}, {gp});
  b.add("head/softmax", SoftmaxSpec{}, {d});
  return std::move(b).finish();
}

Graph slim_onfire(int size = 32) {
  ArchSpec s = find_arch("InceptionV3-OnFire");
  s.input_height = s.input_width = size;
  s.width_divisor = 8;
  return build_graph(s);
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

fs::path temp_path(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "onfire_trainer_tests";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("optimizer steps") {
  std::vector<float> w{1.0f}, g{0.5f}, v{0.0f};
  sgd_momentum_step(w, g, v, 0.1f, 0.9f);
  CHECK(w[0] == doctest::Approx(0.95));
  CHECK(v[0] == doctest::Approx(-0.05));

  std::vector<float> w2{2.0f, -1.0f}, g2{0.3f, -0.7f}, v2{0.0f, 0.0f};
  sgd_momentum_step(w2, g2, v2, 0.01f, 0.0f);
  CHECK(w2[0] == doctest::Approx(2.0 - 0.01 * 0.3));
  CHECK(w2[1] == doctest::Approx(-1.0 + 0.01 * 0.7));

  // cache -> g^2 at the fixed point, so each step tends to lr * g / |g|
  std::vector<float> w3{0.0f}, g3{0.25f}, c3{0.0f};
  float last = 0.0f;
  for (int i = 0; i < 300; ++i) {
    const float before = w3[0];
    rmsprop_step(w3, g3, c3, 0.001f, 0.9f, 1e-10f);
    last = before - w3[0];
  }
  CHECK(c3[0] == doctest::Approx(0.0625).epsilon(1e-4));
  CHECK(last == doctest::Approx(0.001).epsilon(1e-3));

  std::vector<float> a(2), b(3);
  CHECK_THROWS_AS(sgd_momentum_step(a, b, a, 0.1f, 0.9f), ContractError);
  CHECK_THROWS_AS(rmsprop_step(a, a, b, 0.1f, 0.9f, 1e-10f), ContractError);
}

TEST_CASE("train config invariants") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(c.learning_rate == doctest::Approx(0.001));
  CHECK(c.epochs == 30);
  auto bad = [](auto mutate) {
    TrainConfig t;
    mutate(t);
    return t;
  };
  CHECK_THROWS_AS(bad([](TrainConfig& t) { t.epochs = 0; }).validate(), ContractError);
  CHECK_THROWS_AS(bad([](TrainConfig& t) { t.momentum = 1.0f; }).validate(), ContractError);
  CHECK_THROWS_AS(bad([](TrainConfig& t) { t.rms_decay = 0.0f; }).validate(), ContractError);
  CHECK_THROWS_AS(bad([](TrainConfig& t) { t.rms_decay = 1.0f; }).validate(), ContractError);
  CHECK_THROWS_AS(bad([](TrainConfig& t) { t.learning_rate = -1.0f; }).validate(), ContractError);
  CHECK(bad([](TrainConfig& t) { t.seed = 1; }).hash() != bad([](TrainConfig& t) { t.seed = 2; }).hash());
}

TEST_CASE("weight initialisation") {
  const LayerSpec conv{"conv", ConvSpec{100, {5, 5, 1, Padding::same}}, {"x"}};
  const Shape in{1, 8, 8, 4};
  const auto p = weight_init(conv, std::span<const Shape>(&in, 1), 9);
  REQUIRE(p.size() == 2);
  for (float b : p[1].value.values()) CHECK(b == 0.0f);
  const double fan_in = 5 * 5 * 4;
  double mean = 0.0, sq = 0.0;
  for (float v : p[0].value.values()) {
    mean += v;
    sq += double(v) * v;
  }
  const double n = static_cast<double>(p[0].value.size());
  CHECK(n >= 10000);
  const double var = sq / n - (mean / n) * (mean / n);
  CHECK(std::abs(var - 2.0 / fan_in) <= 0.2 * 2.0 / fan_in);
  CHECK(weight_init(conv, std::span<const Shape>(&in, 1), 9)[0].value == p[0].value);
  CHECK_FALSE(weight_init(conv, std::span<const Shape>(&in, 1), 10)[0].value == p[0].value);
}

TEST_CASE("training reaches the separable toy set") {
  const Dataset train_set = blob_set(50, 3);
  REQUIRE(logistic_separable(train_set));
  Network net(tiny_graph(), 1);
  TrainConfig cfg;
  cfg.batch_size = 16;
  cfg.stop_at_train_accuracy = 0.99;
  const TrainResult r = train(net, train_set, nullptr, cfg);
  REQUIRE_FALSE(r.log.empty());
  CHECK(r.log.back().accuracy >= 0.99);
  CHECK(r.epochs_completed <= 30);
}

TEST_CASE("toy-set loss is non-increasing after epoch 3") {
  const Dataset train_set = blob_set(50, 4);
  for (OptimizerKind opt : {OptimizerKind::sgd_momentum, OptimizerKind::rmsprop}) {
    int monotone = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      Network net(tiny_graph(), seed);
      TrainConfig cfg;
      cfg.optimizer = opt;
      cfg.seed = seed;
      cfg.batch_size = 16;
      const TrainResult r = train(net, train_set, nullptr, cfg);
      bool ok = true;
      for (std::size_t e = 3; e < r.log.size(); ++e) ok = ok && r.log[e].loss <= r.log[e - 1].loss;
      monotone += ok;
    }
    const std::string optimizer = to_string(opt);
    CAPTURE(optimizer);
    CHECK(monotone >= 9);
  }
}

TEST_CASE("zero learning rate leaves trainable weights bit-identical") {
  const Dataset d = blob_set(8, 5);
  Network net(tiny_graph(true), 2);
  std::vector<Tensor> before;
  for (const Parameter* p : net.parameters()) before.push_back(p->value);
  for (OptimizerKind opt : {OptimizerKind::sgd_momentum, OptimizerKind::rmsprop}) {
    TrainConfig cfg;
    cfg.optimizer = opt;
    cfg.learning_rate = 0.0f;
    cfg.epochs = 2;
    cfg.batch_size = 4;
    train(net, d, nullptr, cfg);
    const auto params = net.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (params[i]->trainable) CHECK(params[i]->value == before[i]);
    }
  }
}

TEST_CASE("training is deterministic for a seed") {
  const Dataset d = blob_set(16, 6), v = blob_set(4, 7);
  auto run = [&] {
    Network net(slim_onfire(), 11);
    TrainConfig cfg;
    cfg.seed = 11;
    cfg.epochs = 2;
    cfg.batch_size = 8;
    cfg.horizontal_flip = true;
    return train(net, d, &v, cfg);
  };
  const TrainResult a = run(), b = run();
  REQUIRE(a.log.size() == 4);
  CHECK(a.log[0].loss == b.log[0].loss);
  CHECK(format_log_csv(a.log) == format_log_csv(b.log));
  CHECK(encode_checkpoint(a.checkpoint) == encode_checkpoint(b.checkpoint));
  CHECK(a.log[0].split == "train");
  CHECK(a.log[1].split == "val");
  CHECK(format_log_csv(a.log).rfind("epoch,split,loss,accuracy\n1,train,", 0) == 0);
}

TEST_CASE("training contract errors and divergence") {
  Network net(tiny_graph(true), 1);
  CHECK_THROWS_AS(train(net, Dataset{}, nullptr, TrainConfig{}), ContractError);
  Dataset wrong;
  wrong.add(Image(16, 16, 3), 0);
  CHECK_THROWS_AS(train(net, wrong, nullptr, TrainConfig{}), ContractError);

  const Dataset d = blob_set(16, 8);
  TrainConfig ok;
  ok.epochs = 1;
  ok.batch_size = 8;
  train(net, d, nullptr, ok);
  const Checkpoint good = capture(net);
  TrainConfig wild = ok;
  wild.learning_rate = 1e30f;
  wild.epochs = 3;
  const TrainResult r = train(net, d, nullptr, wild);
  CHECK(r.diverged);
  for (const Parameter* p : net.parameters()) CHECK(p->value.all_finite());
  CHECK(encode_checkpoint(capture(net)) == encode_checkpoint(good));
  CHECK(r.checkpoint.epoch == r.epochs_completed);
}

TEST_CASE("checkpoint format") {
  Network net(slim_onfire(), 3);
  const Checkpoint ckpt = capture(net, 7, 0x0123456789abcdefULL);
  const fs::path a = temp_path("a.ckpt"), b = temp_path("b.ckpt");
  save_checkpoint(ckpt, a);
  const Checkpoint loaded = load_checkpoint(a);
  save_checkpoint(loaded, b);
  CHECK(read_bytes(a) == read_bytes(b));
  CHECK(loaded.architecture == "InceptionV3-OnFire");
  CHECK(loaded.epoch == 7);
  CHECK(loaded.config_hash == 0x0123456789abcdefULL);
  CHECK(loaded.tensors.size() == ckpt.tensors.size());
  const std::string bytes = read_bytes(a);
  CHECK(bytes.substr(0, 8) == "ONFIRE01");

  std::string bad = bytes;
  bad[3] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
  CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), FormatError);
  CHECK_THROWS_AS(decode_checkpoint(bytes + "x"), FormatError);
  CHECK_THROWS_AS(decode_checkpoint(""), FormatError);

  Network other(slim_onfire(), 4);
  restore(other, loaded);
  CHECK(encode_checkpoint(capture(other, 7, 0x0123456789abcdefULL)) == bytes);

  Checkpoint wrong = loaded;
  wrong.tensors[0].second = Tensor({1});
  CHECK_THROWS_AS(restore(other, wrong), ContractError);
}

TEST_CASE("transfer initialisation") {
  Network source(slim_onfire(), 1);
  // Perturb so copied weights are distinguishable from a fresh init.
  for (Parameter* p : source.parameters()) {
    for (auto& v : p->value.values()) v += 0.25f;
  }
  const Checkpoint ckpt = capture(source);

  auto parameterised_layers = [](Network& n) {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < n.size(); ++i) {
      if (!n.layer(i).parameters().empty()) names.push_back(n.layer(i).spec().name);
    }
    return names;
  };

  SUBCASE("same architecture: everything but the head is copied bit-exactly") {
    Network target(slim_onfire(), 2);
    const TransferReport r = transfer_init(target, ckpt);
    REQUIRE(r.reinitialized == std::vector<std::string>{std::string(kHeadLayer)});
    std::vector<std::string> all = r.copied;
    all.insert(all.end(), r.reinitialized.begin(), r.reinitialized.end());
    std::sort(all.begin(), all.end());
    auto expected = parameterised_layers(target);
    std::sort(expected.begin(), expected.end());
    CHECK(all == expected);
    for (const Parameter* p : target.parameters()) {
      const bool head = p->name.rfind(std::string(kHeadLayer) + "/", 0) == 0;
      CHECK((*ckpt.find(p->name) == p->value) == !head);
    }
    Network again(slim_onfire(), 2);
    CHECK(transfer_init(again, ckpt, TransferStrategy::copy_all_compatible).reinitialized.empty());
  }
  SUBCASE("shape-mismatched layers are re-initialised") {
    Checkpoint altered = ckpt;
    for (auto& [name, t] : altered.tensors) {
      if (name == "stem/conv3/weights") t = Tensor({1, 1, 1, 1});
    }
    Network target(slim_onfire(), 2);
    const TransferReport r = transfer_init(target, altered);
    CHECK(std::find(r.reinitialized.begin(), r.reinitialized.end(), "stem/conv3") !=
          r.reinitialized.end());
    CHECK(r.reinitialized.size() == 2);
  }
  SUBCASE("no matching layer is an error") {
    Network target(tiny_graph(), 2);
    Checkpoint unrelated = capture(Network(build_arch("InceptionV2-A3", 96, 96), 1));
    CHECK_THROWS_AS(transfer_init(target, unrelated), ContractError);
    Checkpoint anonymous = ckpt;
    anonymous.architecture.clear();
    Network t2(slim_onfire(), 2);
    CHECK_THROWS_AS(transfer_init(t2, anonymous), ContractError);
  }
}
