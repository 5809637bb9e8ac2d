#pragma once

#include <cstdint>
#include <vector>

#include "onfire/dataset.hpp"
#include "onfire/image.hpp"
#include "onfire/slic.hpp"

namespace onfire {

struct SynthFrame {
  Image image;
  int label = kNoFireClass;
  std::vector<std::uint8_t> fire_mask;  // 1 where a flame blob was painted
};

// One frame: fire frames carry amorphous red-orange-yellow gradient blobs,
// nofire frames may carry flat, hard-edged red objects. Deterministic per
// (seed, index, label).
SynthFrame synth_frame(int size, int label, std::uint64_t seed, int index);

// n frames of each class, interleaved fire/nofire.
Dataset synth_dataset(int n_per_class, int size, std::uint64_t seed);

// Superpixel patches from synthetic frames. A region is fire when more than
// half of its pixels lie on a flame blob. Classes are balanced to
// n_per_class each.
Dataset synth_superpixel_dataset(int n_per_class, int frame_size, int patch_size,
                                 const SlicParams& params, std::uint64_t seed);

// Hue in degrees [0, 360) and saturation in [0, 1] of an RGB pixel.
double hue_of(float r, float g, float b);
double saturation_of(float r, float g, float b);

}  // namespace onfire
