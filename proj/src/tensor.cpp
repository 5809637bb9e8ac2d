#include "onfire/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "onfire/errors.hpp"

namespace onfire {

std::string to_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::int64_t element_count(const Shape& shape) {
  std::int64_t n = 1;
  for (int e : shape) n *= e;
  return n;
}

static void check_extents(const Shape& shape) {
  for (int e : shape) {
    if (e < 1) throw ContractError("tensor extents must be >= 1, got " + to_string(shape));
  }
}

Tensor::Tensor(Shape shape, float fill) : shape_(std::move(shape)) {
  check_extents(shape_);
  data_.assign(static_cast<std::size_t>(element_count(shape_)), fill);
}

Tensor::Tensor(Shape shape, std::vector<float> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  check_extents(shape_);
  if (element_count(shape_) != static_cast<std::int64_t>(data_.size())) {
    throw ContractError("tensor shape " + to_string(shape_) + " holds " +
                        std::to_string(element_count(shape_)) + " elements, got " +
                        std::to_string(data_.size()));
  }
}

void Tensor::fill(float value) { std::fill(data_.begin(), data_.end(), value); }

Tensor Tensor::reshaped(Shape shape) const {
  if (element_count(shape) != size()) {
    throw ContractError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

void require_finite(const Tensor& t, const char* what) {
  if (!t.all_finite()) throw NumericError(std::string(what) + " contains NaN or infinity");
}

}  // namespace onfire
