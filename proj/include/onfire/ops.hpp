#pragma once

#include <span>
#include <vector>

#include "onfire/tensor.hpp"

namespace onfire {

enum class Padding { same, valid };

struct ConvGeometry {
  int kernel_h = 1;
  int kernel_w = 1;
  int stride = 1;
  Padding padding = Padding::same;
  friend bool operator==(const ConvGeometry&, const ConvGeometry&) = default;
};

struct PoolGeometry {
  int window = 3;
  int stride = 1;
  Padding padding = Padding::valid;
  friend bool operator==(const PoolGeometry&, const PoolGeometry&) = default;
};

// Accumulator width used by conv2d's reduction.
enum class Accumulation { f32, f64 };

// Output extent along one axis. "same" gives ceil(in / stride); "valid"
// gives floor((in - kernel) / stride) + 1 and is only defined for
// kernel <= in (returns 0 otherwise).
int output_extent(int in, int kernel, int stride, Padding padding);
// Leading (top or left) zero padding for an axis. "same" pads the total
// symmetrically with the odd pixel going to the bottom/right.
int leading_pad(int in, int kernel, int stride, Padding padding);

// Cross-correlation (no kernel flip) plus broadcast bias.
// input N x H x W x Cin, weights kh x kw x Cin x F, bias F.
Tensor conv2d(const Tensor& input, const Tensor& weights, const Tensor& bias,
              const ConvGeometry& geom, Accumulation acc = Accumulation::f32);

struct Conv2dGrads {
  Tensor input;
  Tensor weights;
  Tensor bias;
};
Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& weights, const ConvGeometry& geom,
                            const Tensor& upstream);

Tensor max_pool(const Tensor& input, const PoolGeometry& geom);
// Routes each upstream value to the first maximal input position of its
// window (row-major scan order); every other position receives zero.
Tensor max_pool_backward(const Tensor& input, const PoolGeometry& geom, const Tensor& upstream);

// Average over the in-bounds cells of each window; padded cells are not
// counted in the divisor.
Tensor avg_pool(const Tensor& input, const PoolGeometry& geom);
Tensor avg_pool_backward(const Shape& input_shape, const PoolGeometry& geom,
                         const Tensor& upstream);

// N x H x W x C -> N x C.
Tensor global_max_pool(const Tensor& input);
Tensor global_max_pool_backward(const Tensor& input, const Tensor& upstream);

// Concatenates along the last axis; branch order is preserved.
Tensor concat_channels(std::span<const Tensor* const> inputs);
// Splits the upstream gradient back into per-branch pieces.
std::vector<Tensor> concat_channels_backward(std::span<const int> channel_extents,
                                             const Tensor& upstream);

Tensor relu(const Tensor& x);
// `output` is the forward result of relu; gradient passes where it is > 0.
Tensor relu_backward(const Tensor& output, const Tensor& upstream);

// x N x D, weights D x U, bias U.
Tensor dense(const Tensor& x, const Tensor& weights, const Tensor& bias);

struct DenseGrads {
  Tensor input;
  Tensor weights;
  Tensor bias;
};
DenseGrads dense_backward(const Tensor& x, const Tensor& weights, const Tensor& upstream);

}  // namespace onfire
