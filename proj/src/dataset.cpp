#include "onfire/dataset.hpp"

#include <algorithm>

#include "onfire/errors.hpp"

namespace onfire {

void Dataset::add(Image image, int label, std::string source) {
  if (label != kNoFireClass && label != kFireClass) {
    throw ContractError("label must be 0 (nofire) or 1 (fire), got " + std::to_string(label));
  }
  images.push_back(std::move(image));
  labels.push_back(label);
  sources.push_back(std::move(source));
}

std::size_t Dataset::count(int label) const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), label));
}

Dataset select(const Dataset& data, const std::vector<std::size_t>& indices) {
  Dataset out;
  for (std::size_t i : indices) {
    if (i >= data.size()) throw ContractError("dataset index out of range");
    out.add(data.images[i], data.labels[i], i < data.sources.size() ? data.sources[i] : "");
  }
  return out;
}

}  // namespace onfire
