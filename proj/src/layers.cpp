#include "onfire/layers.hpp"

#include <cmath>

#include "onfire/errors.hpp"

namespace onfire {

void Layer::require_forward() const {
  if (!trained_forward_) {
    throw StateError("layer '" + spec_.name + "': backward called before a train-mode forward");
  }
}

namespace {

Tensor apply_activation(Tensor t, Activation act) {
  return act == Activation::relu ? relu(t) : t;
}

Tensor activation_grad(const Tensor& output, const Tensor& upstream, Activation act) {
  return act == Activation::relu ? relu_backward(output, upstream) : upstream;
}

Parameter trainable(std::string name, Tensor value) {
  Tensor grad(value.shape());
  return Parameter{std::move(name), std::move(value), std::move(grad), true};
}

Parameter state(std::string name, Tensor value) {
  return Parameter{std::move(name), std::move(value), Tensor(), false};
}

Tensor fan_in_uniform(Shape shape, int fan_in, std::uint64_t seed) {
  Tensor t(std::move(shape));
  const double limit = std::sqrt(6.0 / fan_in);
  Rng rng(seed);
  for (float& v : t.values()) v = static_cast<float>(rng.uniform(-limit, limit));
  return t;
}

class InputLayer final : public Layer {
 public:
  using Layer::Layer;
  Tensor forward(std::span<const Tensor* const>, Mode) override {
    throw StateError("input layer has no forward; the network feeds it directly");
  }
  std::vector<Tensor> backward(std::span<const Tensor* const>, const Tensor&, const Tensor&) override {
    return {};
  }
};

class ConvLayer final : public Layer {
 public:
  ConvLayer(LayerSpec spec, std::vector<Parameter> params) : Layer(std::move(spec)) {
    params_ = std::move(params);
    conv_ = std::get<ConvSpec>(spec_.params);
  }
  Tensor forward(std::span<const Tensor* const> in, Mode mode) override {
    trained_forward_ = mode == Mode::train;
    return apply_activation(conv2d(*in[0], params_[0].value, params_[1].value, conv_.geom), conv_.act);
  }
  std::vector<Tensor> backward(std::span<const Tensor* const> in, const Tensor& out,
                               const Tensor& up) override {
    require_forward();
    auto g = conv2d_backward(*in[0], params_[0].value, conv_.geom, activation_grad(out, up, conv_.act));
    params_[0].grad = std::move(g.weights);
    params_[1].grad = std::move(g.bias);
    std::vector<Tensor> result;
    result.push_back(std::move(g.input));
    return result;
  }

 private:
  ConvSpec conv_;
};

class DenseLayer final : public Layer {
 public:
  DenseLayer(LayerSpec spec, std::vector<Parameter> params) : Layer(std::move(spec)) {
    params_ = std::move(params);
    act_ = std::get<DenseSpec>(spec_.params).act;
  }
  Tensor forward(std::span<const Tensor* const> in, Mode mode) override {
    trained_forward_ = mode == Mode::train;
    return apply_activation(dense(*in[0], params_[0].value, params_[1].value), act_);
  }
  std::vector<Tensor> backward(std::span<const Tensor* const> in, const Tensor& out,
                               const Tensor& up) override {
    require_forward();
    auto g = dense_backward(*in[0], params_[0].value, activation_grad(out, up, act_));
    params_[0].grad = std::move(g.weights);
    params_[1].grad = std::move(g.bias);
    std::vector<Tensor> result;
    result.push_back(std::move(g.input));
    return result;
  }

 private:
  Activation act_;
};

class BatchNormLayer final : public Layer {
 public:
  BatchNormLayer(LayerSpec spec, std::vector<Parameter> params) : Layer(std::move(spec)) {
    params_ = std::move(params);
    bn_ = std::get<BatchNormSpec>(spec_.params);
  }
  Tensor forward(std::span<const Tensor* const> in, Mode mode) override {
    trained_forward_ = mode == Mode::train;
    BatchNormStats stats{std::move(params_[2].value), std::move(params_[3].value)};
    Tensor out = batch_norm_forward(*in[0], params_[0].value, params_[1].value, stats, mode,
                                    bn_.params, mode == Mode::train ? &cache_ : nullptr);
    params_[2].value = std::move(stats.mean);
    params_[3].value = std::move(stats.variance);
    return apply_activation(std::move(out), bn_.act);
  }
  std::vector<Tensor> backward(std::span<const Tensor* const>, const Tensor& out,
                               const Tensor& up) override {
    require_forward();
    auto g = batch_norm_backward(cache_, params_[0].value, activation_grad(out, up, bn_.act));
    params_[0].grad = std::move(g.gamma);
    params_[1].grad = std::move(g.beta);
    std::vector<Tensor> result;
    result.push_back(std::move(g.input));
    return result;
  }

 private:
  BatchNormSpec bn_;
  BatchNormCache cache_;
};

class LrnLayer final : public Layer {
 public:
  explicit LrnLayer(LayerSpec spec) : Layer(std::move(spec)) {
    lrn_ = std::get<LrnSpec>(spec_.params).params;
  }
  Tensor forward(std::span<const Tensor* const> in, Mode mode) override {
    trained_forward_ = mode == Mode::train;
    return lrn_forward(*in[0], lrn_);
  }
  std::vector<Tensor> backward(std::span<const Tensor* const> in, const Tensor&,
                               const Tensor& up) override {
    require_forward();
    std::vector<Tensor> result;
    result.push_back(lrn_backward(*in[0], lrn_, up));
    return result;
  }

 private:
  LrnParams lrn_;
};

class DropoutLayer final : public Layer {
 public:
  DropoutLayer(LayerSpec spec, std::uint64_t seed) : Layer(std::move(spec)), rng_(seed) {
    rate_ = std::get<DropoutSpec>(spec_.params).rate;
  }
  Tensor forward(std::span<const Tensor* const> in, Mode mode) override {
    trained_forward_ = mode == Mode::train;
    if (mode == Mode::infer) return *in[0];
    auto r = dropout(*in[0], rate_, mode, rng_.next());
    mask_ = std::move(r.mask);
    return std::move(r.output);
  }
  std::vector<Tensor> backward(std::span<const Tensor* const>, const Tensor&,
                               const Tensor& up) override {
    require_forward();
    std::vector<Tensor> result;
    result.push_back(dropout_backward(mask_, up));
    return result;
  }

 private:
  float rate_;
  Rng rng_;
  Tensor mask_;
};

class MaxPoolLayer final : public Layer {
 public:
  explicit MaxPoolLayer(LayerSpec spec) : Layer(std::move(spec)) {
    geom_ = std::get<MaxPoolSpec>(spec_.params).geom;
  }
  Tensor forward(std::span<const Tensor* const> in, Mode mode) override {
    trained_forward_ = mode == Mode::train;
    return max_pool(*in[0], geom_);
  }
  std::vector<Tensor> backward(std::span<const Tensor* const> in, const Tensor&,
                               const Tensor& up) override {
    require_forward();
    std::vector<Tensor> result;
    result.push_back(max_pool_backward(*in[0], geom_, up));
    return result;
  }

 private:
  PoolGeometry geom_;
};

class AvgPoolLayer final : public Layer {
 public:
  explicit AvgPoolLayer(LayerSpec spec) : Layer(std::move(spec)) {
    geom_ = std::get<AvgPoolSpec>(spec_.params).geom;
  }
  Tensor forward(std::span<const Tensor* const> in, Mode mode) override {
    trained_forward_ = mode == Mode::train;
    return avg_pool(*in[0], geom_);
  }
  std::vector<Tensor> backward(std::span<const Tensor* const> in, const Tensor&,
                               const Tensor& up) override {
    require_forward();
    std::vector<Tensor> result;
    result.push_back(avg_pool_backward(in[0]->shape(), geom_, up));
    return result;
  }

 private:
  PoolGeometry geom_;
};

class GlobalMaxPoolLayer final : public Layer {
 public:
  using Layer::Layer;
  Tensor forward(std::span<const Tensor* const> in, Mode mode) override {
    trained_forward_ = mode == Mode::train;
    return global_max_pool(*in[0]);
  }
  std::vector<Tensor> backward(std::span<const Tensor* const> in, const Tensor&,
                               const Tensor& up) override {
    require_forward();
    std::vector<Tensor> result;
    result.push_back(global_max_pool_backward(*in[0], up));
    return result;
  }
};

class SoftmaxLayer final : public Layer {
 public:
  using Layer::Layer;
  Tensor forward(std::span<const Tensor* const> in, Mode mode) override {
    trained_forward_ = mode == Mode::train;
    return softmax(*in[0]);
  }
  // Jacobian-vector product of the row-wise softmax.
  std::vector<Tensor> backward(std::span<const Tensor* const>, const Tensor& out,
                               const Tensor& up) override {
    require_forward();
    const int n = out.dim(0), k = out.dim(1);
    Tensor g(out.shape());
    for (int i = 0; i < n; ++i) {
      double dot = 0.0;
      for (int j = 0; j < k; ++j) dot += static_cast<double>(out[i * k + j]) * up[i * k + j];
      for (int j = 0; j < k; ++j) {
        g[i * k + j] = static_cast<float>(out[i * k + j] * (up[i * k + j] - dot));
      }
    }
    std::vector<Tensor> result;
    result.push_back(std::move(g));
    return result;
  }
};

class ConcatLayer final : public Layer {
 public:
  using Layer::Layer;
  Tensor forward(std::span<const Tensor* const> in, Mode mode) override {
    trained_forward_ = mode == Mode::train;
    return concat_channels(in);
  }
  std::vector<Tensor> backward(std::span<const Tensor* const> in, const Tensor&,
                               const Tensor& up) override {
    require_forward();
    std::vector<int> extents;
    for (const Tensor* t : in) extents.push_back(t->shape().back());
    return concat_channels_backward(extents, up);
  }
};

}  // namespace

std::vector<Parameter> weight_init(const LayerSpec& spec, std::span<const Shape> input_shapes,
                                   std::uint64_t seed) {
  std::vector<Parameter> params;
  const std::uint64_t layer_seed = derive_seed(seed, spec.name);
  switch (spec.kind()) {
    case LayerKind::conv: {
      const auto& c = std::get<ConvSpec>(spec.params);
      const int cin = input_shapes[0].back();
      const int fan_in = c.geom.kernel_h * c.geom.kernel_w * cin;
      params.push_back(trainable(spec.name + "/weights",
                                 fan_in_uniform({c.geom.kernel_h, c.geom.kernel_w, cin, c.filters},
                                                fan_in, layer_seed)));
      params.push_back(trainable(spec.name + "/bias", Tensor({c.filters})));
      break;
    }
    case LayerKind::dense: {
      const auto& d = std::get<DenseSpec>(spec.params);
      const int fan_in = input_shapes[0].back();
      params.push_back(
          trainable(spec.name + "/weights", fan_in_uniform({fan_in, d.units}, fan_in, layer_seed)));
      params.push_back(trainable(spec.name + "/bias", Tensor({d.units})));
      break;
    }
    case LayerKind::batch_norm: {
      const int c = input_shapes[0].back();
      params.push_back(trainable(spec.name + "/gamma", Tensor({c}, 1.0f)));
      params.push_back(trainable(spec.name + "/beta", Tensor({c})));
      params.push_back(state(spec.name + "/moving_mean", Tensor({c})));
      params.push_back(state(spec.name + "/moving_variance", Tensor({c}, 1.0f)));
      break;
    }
    default:
      break;
  }
  return params;
}

std::unique_ptr<Layer> make_layer(const LayerSpec& spec, std::span<const Shape> input_shapes,
                                  std::uint64_t seed) {
  switch (spec.kind()) {
    case LayerKind::input:
      return std::make_unique<InputLayer>(spec);
    case LayerKind::conv:
      return std::make_unique<ConvLayer>(spec, weight_init(spec, input_shapes, seed));
    case LayerKind::dense:
      return std::make_unique<DenseLayer>(spec, weight_init(spec, input_shapes, seed));
    case LayerKind::batch_norm:
      return std::make_unique<BatchNormLayer>(spec, weight_init(spec, input_shapes, seed));
    case LayerKind::lrn:
      return std::make_unique<LrnLayer>(spec);
    case LayerKind::dropout:
      return std::make_unique<DropoutLayer>(spec, derive_seed(seed, spec.name + "#dropout"));
    case LayerKind::max_pool:
      return std::make_unique<MaxPoolLayer>(spec);
    case LayerKind::avg_pool:
      return std::make_unique<AvgPoolLayer>(spec);
    case LayerKind::global_max_pool:
      return std::make_unique<GlobalMaxPoolLayer>(spec);
    case LayerKind::softmax:
      return std::make_unique<SoftmaxLayer>(spec);
    case LayerKind::concat:
      return std::make_unique<ConcatLayer>(spec);
  }
  throw ContractError("unhandled layer kind");
}

}  // namespace onfire
