#pragma once

#include <cstdint>
#include <vector>

#include "onfire/tensor.hpp"

namespace onfire {

// Interleaved H x W x C image with float samples in [0, 1], RGB order.
struct Image {
  int height = 0;
  int width = 0;
  int channels = 3;
  std::vector<float> data;

  Image() = default;
  Image(int h, int w, int c = 3, float fill = 0.0f)
      : height(h), width(w), channels(c),
        data(static_cast<std::size_t>(h) * w * c, fill) {}

  float& at(int y, int x, int c) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  float at(int y, int x, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  bool empty() const { return data.empty(); }
  friend bool operator==(const Image&, const Image&) = default;
};

// Bilinear resampling (pixel-centre aligned).
Image resize_bilinear(const Image& image, int height, int width);

// Aspect-preserving fit into height x width, centred on a zero canvas.
Image letterbox(const Image& image, int height, int width);

Image flip_horizontal(const Image& image);

// Packs equally sized images into an N x H x W x C tensor.
Tensor to_batch(const std::vector<const Image*>& images);

}  // namespace onfire
