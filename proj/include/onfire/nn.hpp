#pragma once

#include <cstdint>

#include "onfire/tensor.hpp"

namespace onfire {

enum class Mode { train, infer };

// Batch normalisation over every axis but the last (channels).
struct BatchNormParams {
  float epsilon = 1e-3f;
  float momentum = 0.99f;  // running = momentum * running + (1 - momentum) * batch
  friend bool operator==(const BatchNormParams&, const BatchNormParams&) = default;
};

struct BatchNormStats {
  Tensor mean;
  Tensor variance;
};

// Values the backward pass needs from a train-mode forward call.
struct BatchNormCache {
  Tensor normalized;
  std::vector<float> inv_std;
};

Tensor batch_norm_forward(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                          BatchNormStats& stats, Mode mode, const BatchNormParams& params,
                          BatchNormCache* cache = nullptr);

struct BatchNormGrads {
  Tensor input;
  Tensor gamma;
  Tensor beta;
};
BatchNormGrads batch_norm_backward(const BatchNormCache& cache, const Tensor& gamma,
                                   const Tensor& upstream);

// Cross-channel local response normalisation:
//   y_c = x_c / (bias + alpha * sum_{|c'-c| <= radius} x_c'^2)^beta
struct LrnParams {
  int radius = 2;
  float alpha = 1e-4f;
  float beta = 0.75f;
  float bias = 1.0f;
  friend bool operator==(const LrnParams&, const LrnParams&) = default;
};

Tensor lrn_forward(const Tensor& x, const LrnParams& params);
Tensor lrn_backward(const Tensor& x, const LrnParams& params, const Tensor& upstream);

// Inverted dropout. `mask` holds 0 for dropped elements and 1/(1-rate) for
// survivors; in infer mode the output is the input and the mask is empty.
struct DropoutResult {
  Tensor output;
  Tensor mask;
};
DropoutResult dropout(const Tensor& x, float rate, Mode mode, std::uint64_t seed);
Tensor dropout_backward(const Tensor& mask, const Tensor& upstream);

// Row-wise softmax of an N x K tensor.
Tensor softmax(const Tensor& logits);

struct LossResult {
  double loss = 0.0;
  Tensor grad;           // d loss / d logits, already divided by N
  Tensor probabilities;  // softmax(logits)
};

// Mean over the batch of -sum q log softmax(logits) with smoothed targets
// q = (1 - smoothing) * labels + smoothing / K.
LossResult softmax_cross_entropy(const Tensor& logits, const Tensor& labels,
                                 float smoothing = 0.0f);

}  // namespace onfire
