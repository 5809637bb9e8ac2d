#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace onfire {

using Shape = std::vector<int>;

std::string to_string(const Shape& shape);
std::int64_t element_count(const Shape& shape);

// Dense float32 array in row-major order. Activations are laid out
// N x H x W x C, convolution weights kh x kw x Cin x F.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> values);

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::span<float> values() { return data_; }
  std::span<const float> values() const { return data_; }

  float& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  float operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  // Rank-4 accessors (N, H, W, C).
  float& at(int n, int h, int w, int c) { return data_[offset(n, h, w, c)]; }
  float at(int n, int h, int w, int c) const { return data_[offset(n, h, w, c)]; }

  void fill(float value);
  // Same data, new shape with equal element count.
  Tensor reshaped(Shape shape) const;

  bool all_finite() const;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  std::size_t offset(int n, int h, int w, int c) const {
    return ((static_cast<std::size_t>(n) * shape_[1] + h) * shape_[2] + w) * shape_[3] + c;
  }

  Shape shape_;
  std::vector<float> data_;
};

// Throws NumericError naming `what` when the tensor holds NaN or infinity.
void require_finite(const Tensor& t, const char* what);

}  // namespace onfire
