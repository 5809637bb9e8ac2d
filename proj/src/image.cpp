#include "onfire/image.hpp"

#include <algorithm>
#include <cmath>

#include "onfire/errors.hpp"

namespace onfire {

Image resize_bilinear(const Image& src, int height, int width) {
  if (src.empty() || height < 1 || width < 1) throw ContractError("resize: empty image or target");
  if (src.height == height && src.width == width) return src;
  Image out(height, width, src.channels);
  const double sy = static_cast<double>(src.height) / height;
  const double sx = static_cast<double>(src.width) / width;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, src.height - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, src.height - 1);
    const float wy = static_cast<float>(fy - y0);
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, src.width - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, src.width - 1);
      const float wx = static_cast<float>(fx - x0);
      for (int c = 0; c < src.channels; ++c) {
        const float top = src.at(y0, x0, c) * (1 - wx) + src.at(y0, x1, c) * wx;
        const float bottom = src.at(y1, x0, c) * (1 - wx) + src.at(y1, x1, c) * wx;
        out.at(y, x, c) = top * (1 - wy) + bottom * wy;
      }
    }
  }
  return out;
}

Image letterbox(const Image& src, int height, int width) {
  if (src.empty()) throw ContractError("letterbox: empty image");
  const double scale = std::min(static_cast<double>(height) / src.height,
                                static_cast<double>(width) / src.width);
  const int h = std::clamp(static_cast<int>(std::lround(src.height * scale)), 1, height);
  const int w = std::clamp(static_cast<int>(std::lround(src.width * scale)), 1, width);
  const Image fitted = resize_bilinear(src, h, w);
  if (h == height && w == width) return fitted;
  Image out(height, width, src.channels);
  const int top = (height - h) / 2, left = (width - w) / 2;
  for (int y = 0; y < h; ++y) {
    std::copy_n(&fitted.data[static_cast<std::size_t>(y) * w * src.channels],
                static_cast<std::size_t>(w) * src.channels, &out.at(top + y, left, 0));
  }
  return out;
}

Image flip_horizontal(const Image& src) {
  Image out(src.height, src.width, src.channels);
  for (int y = 0; y < src.height; ++y) {
    for (int x = 0; x < src.width; ++x) {
      for (int c = 0; c < src.channels; ++c) out.at(y, src.width - 1 - x, c) = src.at(y, x, c);
    }
  }
  return out;
}

Tensor to_batch(const std::vector<const Image*>& images) {
  if (images.empty()) throw ContractError("to_batch: no images");
  const Image& first = *images.front();
  Tensor batch({static_cast<int>(images.size()), first.height, first.width, first.channels});
  float* dst = batch.data();
  for (const Image* img : images) {
    if (img->height != first.height || img->width != first.width ||
        img->channels != first.channels) {
      throw ContractError("to_batch: images differ in size");
    }
    dst = std::copy(img->data.begin(), img->data.end(), dst);
  }
  return batch;
}

}  // namespace onfire
