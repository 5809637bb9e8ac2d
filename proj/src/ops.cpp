#include "onfire/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <limits>

#include "onfire/errors.hpp"
#include "onfire/parallel.hpp"

namespace onfire {

namespace {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using ConstRowVector = Eigen::Map<const Eigen::RowVectorXf>;

void require_rank(const Tensor& t, int rank, const char* what) {
  if (t.rank() != rank) {
    throw ContractError(std::string(what) + " must have rank " + std::to_string(rank) +
                        ", got shape " + to_string(t.shape()));
  }
}

struct ConvPlan {
  int n, h, w, cin, kh, kw, f, stride, oh, ow, pad_top, pad_left;
  std::int64_t patch() const { return static_cast<std::int64_t>(kh) * kw * cin; }
  std::int64_t out_pixels() const { return static_cast<std::int64_t>(oh) * ow; }
  bool is_pointwise() const { return kh == 1 && kw == 1 && stride == 1; }
};

ConvPlan plan_conv(const Tensor& input, const Tensor& weights, const ConvGeometry& geom) {
  require_rank(input, 4, "conv2d input");
  require_rank(weights, 4, "conv2d weights");
  ConvPlan p{};
  p.n = input.dim(0);
  p.h = input.dim(1);
  p.w = input.dim(2);
  p.cin = input.dim(3);
  p.kh = weights.dim(0);
  p.kw = weights.dim(1);
  p.f = weights.dim(3);
  p.stride = geom.stride;
  if (weights.dim(2) != p.cin) {
    throw ContractError("conv2d: weights " + to_string(weights.shape()) +
                        " do not match input channels of " + to_string(input.shape()));
  }
  if (geom.kernel_h != p.kh || geom.kernel_w != p.kw || geom.stride < 1) {
    throw ContractError("conv2d: geometry " + std::to_string(geom.kernel_h) + "x" +
                        std::to_string(geom.kernel_w) + "/" + std::to_string(geom.stride) +
                        " inconsistent with weights " + to_string(weights.shape()));
  }
  p.oh = output_extent(p.h, p.kh, p.stride, geom.padding);
  p.ow = output_extent(p.w, p.kw, p.stride, geom.padding);
  if (p.oh < 1 || p.ow < 1) {
    throw ContractError("conv2d: kernel " + to_string(weights.shape()) +
                        " larger than input " + to_string(input.shape()));
  }
  p.pad_top = leading_pad(p.h, p.kh, p.stride, geom.padding);
  p.pad_left = leading_pad(p.w, p.kw, p.stride, geom.padding);
  return p;
}

// Rows are output pixels, columns (ky, kx, c) patch entries; matches the
// row-major flattening of the kh x kw x Cin x F weight tensor.
void im2col(const ConvPlan& p, const float* image, float* col) {
  const std::int64_t patch = p.patch();
  for (int oy = 0; oy < p.oh; ++oy) {
    for (int ox = 0; ox < p.ow; ++ox) {
      float* row = col + (static_cast<std::int64_t>(oy) * p.ow + ox) * patch;
      for (int ky = 0; ky < p.kh; ++ky) {
        const int iy = oy * p.stride - p.pad_top + ky;
        for (int kx = 0; kx < p.kw; ++kx) {
          const int ix = ox * p.stride - p.pad_left + kx;
          float* dst = row + (static_cast<std::int64_t>(ky) * p.kw + kx) * p.cin;
          if (iy < 0 || iy >= p.h || ix < 0 || ix >= p.w) {
            std::fill(dst, dst + p.cin, 0.0f);
          } else {
            const float* src = image + (static_cast<std::int64_t>(iy) * p.w + ix) * p.cin;
            std::copy(src, src + p.cin, dst);
          }
        }
      }
    }
  }
}

void col2im(const ConvPlan& p, const float* col, float* image) {
  const std::int64_t patch = p.patch();
  for (int oy = 0; oy < p.oh; ++oy) {
    for (int ox = 0; ox < p.ow; ++ox) {
      const float* row = col + (static_cast<std::int64_t>(oy) * p.ow + ox) * patch;
      for (int ky = 0; ky < p.kh; ++ky) {
        const int iy = oy * p.stride - p.pad_top + ky;
        if (iy < 0 || iy >= p.h) continue;
        for (int kx = 0; kx < p.kw; ++kx) {
          const int ix = ox * p.stride - p.pad_left + kx;
          if (ix < 0 || ix >= p.w) continue;
          const float* src = row + (static_cast<std::int64_t>(ky) * p.kw + kx) * p.cin;
          float* dst = image + (static_cast<std::int64_t>(iy) * p.w + ix) * p.cin;
          for (int c = 0; c < p.cin; ++c) dst[c] += src[c];
        }
      }
    }
  }
}

Tensor conv2d_f64(const ConvPlan& p, const Tensor& input, const Tensor& weights,
                  const Tensor& bias) {
  Tensor out({p.n, p.oh, p.ow, p.f});
  parallel_for(0, p.n, [&](std::int64_t n) {
    std::vector<double> acc(static_cast<std::size_t>(p.f));
    for (int oy = 0; oy < p.oh; ++oy) {
      for (int ox = 0; ox < p.ow; ++ox) {
        for (int f = 0; f < p.f; ++f) acc[static_cast<std::size_t>(f)] = bias[f];
        for (int ky = 0; ky < p.kh; ++ky) {
          const int iy = oy * p.stride - p.pad_top + ky;
          if (iy < 0 || iy >= p.h) continue;
          for (int kx = 0; kx < p.kw; ++kx) {
            const int ix = ox * p.stride - p.pad_left + kx;
            if (ix < 0 || ix >= p.w) continue;
            for (int c = 0; c < p.cin; ++c) {
              const double v = input.at(static_cast<int>(n), iy, ix, c);
              const float* wrow =
                  weights.data() + ((static_cast<std::int64_t>(ky) * p.kw + kx) * p.cin + c) * p.f;
              for (int f = 0; f < p.f; ++f) acc[static_cast<std::size_t>(f)] += v * wrow[f];
            }
          }
        }
        for (int f = 0; f < p.f; ++f) {
          out.at(static_cast<int>(n), oy, ox, f) = static_cast<float>(acc[static_cast<std::size_t>(f)]);
        }
      }
    }
  });
  return out;
}

}  // namespace

int output_extent(int in, int kernel, int stride, Padding padding) {
  if (padding == Padding::same) return (in + stride - 1) / stride;
  if (kernel > in) return 0;
  return (in - kernel) / stride + 1;
}

int leading_pad(int in, int kernel, int stride, Padding padding) {
  if (padding == Padding::valid) return 0;
  const int out = output_extent(in, kernel, stride, padding);
  const int total = std::max((out - 1) * stride + kernel - in, 0);
  return total / 2;
}

Tensor conv2d(const Tensor& input, const Tensor& weights, const Tensor& bias,
              const ConvGeometry& geom, Accumulation acc) {
  const ConvPlan p = plan_conv(input, weights, geom);
  if (bias.size() != p.f) {
    throw ContractError("conv2d: bias " + to_string(bias.shape()) + " does not match filters of " +
                        to_string(weights.shape()));
  }
  require_finite(input, "conv2d input");
  if (acc == Accumulation::f64) {
    Tensor out = conv2d_f64(p, input, weights, bias);
    require_finite(out, "conv2d output");
    return out;
  }
  Tensor out({p.n, p.oh, p.ow, p.f});
  const ConstMatrixMap wmat(weights.data(), p.patch(), p.f);
  const ConstRowVector bvec(bias.data(), p.f);
  const std::int64_t in_stride = static_cast<std::int64_t>(p.h) * p.w * p.cin;
  const std::int64_t out_stride = p.out_pixels() * p.f;
  parallel_for(0, p.n, [&](std::int64_t n) {
    MatrixMap omat(out.data() + n * out_stride, p.out_pixels(), p.f);
    if (p.is_pointwise()) {
      const ConstMatrixMap xmat(input.data() + n * in_stride, p.out_pixels(), p.cin);
      omat.noalias() = xmat * wmat;
    } else {
      std::vector<float> col(static_cast<std::size_t>(p.out_pixels() * p.patch()));
      im2col(p, input.data() + n * in_stride, col.data());
      const ConstMatrixMap cmat(col.data(), p.out_pixels(), p.patch());
      omat.noalias() = cmat * wmat;
    }
    omat.rowwise() += bvec;
  });
  require_finite(out, "conv2d output");
  return out;
}

Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& weights, const ConvGeometry& geom,
                            const Tensor& upstream) {
  const ConvPlan p = plan_conv(input, weights, geom);
  if (upstream.shape() != Shape{p.n, p.oh, p.ow, p.f}) {
    throw ContractError("conv2d_backward: upstream " + to_string(upstream.shape()) +
                        " does not match output shape of input " + to_string(input.shape()));
  }
  Conv2dGrads g{Tensor(input.shape()), Tensor(weights.shape()), Tensor({p.f})};
  const ConstMatrixMap wmat(weights.data(), p.patch(), p.f);
  const std::int64_t in_stride = static_cast<std::int64_t>(p.h) * p.w * p.cin;
  const std::int64_t out_stride = p.out_pixels() * p.f;

  parallel_for(0, p.n, [&](std::int64_t n) {
    const ConstMatrixMap dout(upstream.data() + n * out_stride, p.out_pixels(), p.f);
    if (p.is_pointwise()) {
      MatrixMap dx(g.input.data() + n * in_stride, p.out_pixels(), p.cin);
      dx.noalias() = dout * wmat.transpose();
    } else {
      RowMatrix dcol = dout * wmat.transpose();
      col2im(p, dcol.data(), g.input.data() + n * in_stride);
    }
  });

  // Weight and bias reductions run in sample order so results do not depend
  // on the thread count.
  MatrixMap dw(g.weights.data(), p.patch(), p.f);
  Eigen::Map<Eigen::RowVectorXf> db(g.bias.data(), p.f);
  std::vector<float> col;
  for (int n = 0; n < p.n; ++n) {
    const ConstMatrixMap dout(upstream.data() + n * out_stride, p.out_pixels(), p.f);
    if (p.is_pointwise()) {
      const ConstMatrixMap xmat(input.data() + n * in_stride, p.out_pixels(), p.cin);
      dw.noalias() += xmat.transpose() * dout;
    } else {
      col.resize(static_cast<std::size_t>(p.out_pixels() * p.patch()));
      im2col(p, input.data() + n * in_stride, col.data());
      const ConstMatrixMap cmat(col.data(), p.out_pixels(), p.patch());
      dw.noalias() += cmat.transpose() * dout;
    }
    db += dout.colwise().sum();
  }
  return g;
}

namespace {

struct PoolPlan {
  int n, h, w, c, oh, ow, pad_top, pad_left, window, stride;
};

PoolPlan plan_pool(const Shape& shape, const PoolGeometry& geom, const char* what) {
  if (shape.size() != 4) {
    throw ContractError(std::string(what) + " input must have rank 4, got " + to_string(shape));
  }
  if (geom.window < 1 || geom.stride < 1) {
    throw ContractError(std::string(what) + ": window and stride must be positive");
  }
  PoolPlan p{shape[0], shape[1], shape[2], shape[3], 0, 0, 0, 0, geom.window, geom.stride};
  p.oh = output_extent(p.h, geom.window, geom.stride, geom.padding);
  p.ow = output_extent(p.w, geom.window, geom.stride, geom.padding);
  if (p.oh < 1 || p.ow < 1) {
    throw ContractError(std::string(what) + ": window " + std::to_string(geom.window) +
                        " larger than input " + to_string(shape));
  }
  p.pad_top = leading_pad(p.h, geom.window, geom.stride, geom.padding);
  p.pad_left = leading_pad(p.w, geom.window, geom.stride, geom.padding);
  return p;
}

template <typename Fn>
void for_each_window(const PoolPlan& p, Fn&& fn) {
  for (int n = 0; n < p.n; ++n) {
    for (int oy = 0; oy < p.oh; ++oy) {
      const int y0 = std::max(oy * p.stride - p.pad_top, 0);
      const int y1 = std::min(oy * p.stride - p.pad_top + p.window, p.h);
      for (int ox = 0; ox < p.ow; ++ox) {
        const int x0 = std::max(ox * p.stride - p.pad_left, 0);
        const int x1 = std::min(ox * p.stride - p.pad_left + p.window, p.w);
        fn(n, oy, ox, y0, y1, x0, x1);
      }
    }
  }
}

}  // namespace

Tensor max_pool(const Tensor& input, const PoolGeometry& geom) {
  const PoolPlan p = plan_pool(input.shape(), geom, "max_pool");
  Tensor out({p.n, p.oh, p.ow, p.c});
  for_each_window(p, [&](int n, int oy, int ox, int y0, int y1, int x0, int x1) {
    for (int c = 0; c < p.c; ++c) {
      float best = -std::numeric_limits<float>::infinity();
      for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) best = std::max(best, input.at(n, y, x, c));
      }
      out.at(n, oy, ox, c) = best;
    }
  });
  return out;
}

Tensor max_pool_backward(const Tensor& input, const PoolGeometry& geom, const Tensor& upstream) {
  const PoolPlan p = plan_pool(input.shape(), geom, "max_pool_backward");
  if (upstream.shape() != Shape{p.n, p.oh, p.ow, p.c}) {
    throw ContractError("max_pool_backward: upstream " + to_string(upstream.shape()) +
                        " does not match pooled shape");
  }
  Tensor grad(input.shape());
  for_each_window(p, [&](int n, int oy, int ox, int y0, int y1, int x0, int x1) {
    for (int c = 0; c < p.c; ++c) {
      int by = y0, bx = x0;
      float best = input.at(n, y0, x0, c);
      for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
          if (input.at(n, y, x, c) > best) {
            best = input.at(n, y, x, c);
            by = y;
            bx = x;
          }
        }
      }
      grad.at(n, by, bx, c) += upstream.at(n, oy, ox, c);
    }
  });
  return grad;
}

Tensor avg_pool(const Tensor& input, const PoolGeometry& geom) {
  const PoolPlan p = plan_pool(input.shape(), geom, "avg_pool");
  Tensor out({p.n, p.oh, p.ow, p.c});
  for_each_window(p, [&](int n, int oy, int ox, int y0, int y1, int x0, int x1) {
    const float inv = 1.0f / static_cast<float>((y1 - y0) * (x1 - x0));
    for (int c = 0; c < p.c; ++c) {
      float sum = 0.0f;
      for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) sum += input.at(n, y, x, c);
      }
      out.at(n, oy, ox, c) = sum * inv;
    }
  });
  return out;
}

Tensor avg_pool_backward(const Shape& input_shape, const PoolGeometry& geom,
                         const Tensor& upstream) {
  const PoolPlan p = plan_pool(input_shape, geom, "avg_pool_backward");
  if (upstream.shape() != Shape{p.n, p.oh, p.ow, p.c}) {
    throw ContractError("avg_pool_backward: upstream " + to_string(upstream.shape()) +
                        " does not match pooled shape");
  }
  Tensor grad(input_shape);
  for_each_window(p, [&](int n, int oy, int ox, int y0, int y1, int x0, int x1) {
    const float inv = 1.0f / static_cast<float>((y1 - y0) * (x1 - x0));
    for (int c = 0; c < p.c; ++c) {
      const float g = upstream.at(n, oy, ox, c) * inv;
      for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) grad.at(n, y, x, c) += g;
      }
    }
  });
  return grad;
}

Tensor global_max_pool(const Tensor& input) {
  require_rank(input, 4, "global_max_pool input");
  const int n = input.dim(0), hw = input.dim(1) * input.dim(2), c = input.dim(3);
  Tensor out({n, c}, -std::numeric_limits<float>::infinity());
  for (int i = 0; i < n; ++i) {
    const float* src = input.data() + static_cast<std::int64_t>(i) * hw * c;
    float* dst = out.data() + static_cast<std::int64_t>(i) * c;
    for (int s = 0; s < hw; ++s) {
      for (int k = 0; k < c; ++k) dst[k] = std::max(dst[k], src[static_cast<std::int64_t>(s) * c + k]);
    }
  }
  return out;
}

Tensor global_max_pool_backward(const Tensor& input, const Tensor& upstream) {
  require_rank(input, 4, "global_max_pool_backward input");
  const int n = input.dim(0), hw = input.dim(1) * input.dim(2), c = input.dim(3);
  if (upstream.shape() != Shape{n, c}) {
    throw ContractError("global_max_pool_backward: upstream " + to_string(upstream.shape()) +
                        " does not match " + to_string(input.shape()));
  }
  Tensor grad(input.shape());
  for (int i = 0; i < n; ++i) {
    const float* src = input.data() + static_cast<std::int64_t>(i) * hw * c;
    float* dst = grad.data() + static_cast<std::int64_t>(i) * hw * c;
    for (int k = 0; k < c; ++k) {
      int best = 0;
      for (int s = 1; s < hw; ++s) {
        if (src[static_cast<std::int64_t>(s) * c + k] > src[static_cast<std::int64_t>(best) * c + k]) best = s;
      }
      dst[static_cast<std::int64_t>(best) * c + k] = upstream[static_cast<std::int64_t>(i) * c + k];
    }
  }
  return grad;
}

Tensor concat_channels(std::span<const Tensor* const> inputs) {
  if (inputs.size() < 2) throw ContractError("concat_channels needs at least two inputs");
  const Shape& first = inputs[0]->shape();
  if (first.empty()) throw ContractError("concat_channels: rank-0 input");
  int channels = 0;
  for (std::size_t b = 0; b < inputs.size(); ++b) {
    const Shape& s = inputs[b]->shape();
    if (s.size() != first.size() || !std::equal(s.begin(), s.end() - 1, first.begin())) {
      throw ContractError("concat_channels: branch " + std::to_string(b) + " shape " +
                          to_string(s) + " does not match branch 0 shape " + to_string(first));
    }
    channels += s.back();
  }
  Shape out_shape = first;
  out_shape.back() = channels;
  Tensor out(out_shape);
  const std::int64_t rows = inputs[0]->size() / first.back();
  for (std::int64_t r = 0; r < rows; ++r) {
    float* dst = out.data() + r * channels;
    for (const Tensor* t : inputs) {
      const int c = t->shape().back();
      std::copy(t->data() + r * c, t->data() + (r + 1) * c, dst);
      dst += c;
    }
  }
  return out;
}

std::vector<Tensor> concat_channels_backward(std::span<const int> channel_extents,
                                             const Tensor& upstream) {
  int total = 0;
  for (int c : channel_extents) total += c;
  if (upstream.rank() == 0 || upstream.shape().back() != total) {
    throw ContractError("concat_channels_backward: upstream " + to_string(upstream.shape()) +
                        " does not carry " + std::to_string(total) + " channels");
  }
  std::vector<Tensor> grads;
  const std::int64_t rows = upstream.size() / total;
  for (int c : channel_extents) {
    Shape s = upstream.shape();
    s.back() = c;
    grads.emplace_back(s);
  }
  for (std::int64_t r = 0; r < rows; ++r) {
    const float* src = upstream.data() + r * total;
    for (std::size_t b = 0; b < grads.size(); ++b) {
      const int c = channel_extents[b];
      std::copy(src, src + c, grads[b].data() + r * c);
      src += c;
    }
  }
  return grads;
}

Tensor relu(const Tensor& x) {
  Tensor out = x;
  for (float& v : out.values()) v = std::max(v, 0.0f);
  return out;
}

Tensor relu_backward(const Tensor& output, const Tensor& upstream) {
  if (output.shape() != upstream.shape()) {
    throw ContractError("relu_backward: shapes " + to_string(output.shape()) + " and " +
                        to_string(upstream.shape()) + " differ");
  }
  Tensor grad(upstream.shape());
  for (std::int64_t i = 0; i < grad.size(); ++i) grad[i] = output[i] > 0.0f ? upstream[i] : 0.0f;
  return grad;
}

Tensor dense(const Tensor& x, const Tensor& weights, const Tensor& bias) {
  require_rank(x, 2, "dense input");
  require_rank(weights, 2, "dense weights");
  if (x.dim(1) != weights.dim(0) || bias.size() != weights.dim(1)) {
    throw ContractError("dense: input " + to_string(x.shape()) + ", weights " +
                        to_string(weights.shape()) + " and bias " + to_string(bias.shape()) +
                        " are inconsistent");
  }
  require_finite(x, "dense input");
  Tensor out({x.dim(0), weights.dim(1)});
  MatrixMap o(out.data(), x.dim(0), weights.dim(1));
  o.noalias() = ConstMatrixMap(x.data(), x.dim(0), x.dim(1)) *
                ConstMatrixMap(weights.data(), weights.dim(0), weights.dim(1));
  o.rowwise() += ConstRowVector(bias.data(), weights.dim(1));
  require_finite(out, "dense output");
  return out;
}

DenseGrads dense_backward(const Tensor& x, const Tensor& weights, const Tensor& upstream) {
  require_rank(x, 2, "dense input");
  if (upstream.shape() != Shape{x.dim(0), weights.dim(1)}) {
    throw ContractError("dense_backward: upstream " + to_string(upstream.shape()) +
                        " does not match output of " + to_string(x.shape()));
  }
  DenseGrads g{Tensor(x.shape()), Tensor(weights.shape()), Tensor({weights.dim(1)})};
  const ConstMatrixMap xm(x.data(), x.dim(0), x.dim(1));
  const ConstMatrixMap wm(weights.data(), weights.dim(0), weights.dim(1));
  const ConstMatrixMap dm(upstream.data(), upstream.dim(0), upstream.dim(1));
  MatrixMap(g.input.data(), x.dim(0), x.dim(1)).noalias() = dm * wm.transpose();
  MatrixMap(g.weights.data(), weights.dim(0), weights.dim(1)).noalias() = xm.transpose() * dm;
  Eigen::Map<Eigen::RowVectorXf>(g.bias.data(), weights.dim(1)) = dm.colwise().sum();
  return g;
}

}  // namespace onfire
