#pragma once

#include <string>
#include <vector>

#include "onfire/image.hpp"

namespace onfire {

inline constexpr int kNoFireClass = 0;
inline constexpr int kFireClass = 1;

// Labelled images already sized for the network input.
struct Dataset {
  std::vector<Image> images;
  std::vector<int> labels;
  std::vector<std::string> sources;  // optional, parallel to images

  std::size_t size() const { return images.size(); }
  bool empty() const { return images.empty(); }
  void add(Image image, int label, std::string source = {});
  std::size_t count(int label) const;
};

// Subset by index list.
Dataset select(const Dataset& data, const std::vector<std::size_t>& indices);

}  // namespace onfire
