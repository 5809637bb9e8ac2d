#pragma once

#include <functional>
#include <vector>

#include "onfire/image.hpp"

namespace onfire {

struct SlicParams {
  int k = 100;                              // target superpixel count
  double compactness = 10.0;                // m
  int max_iters = 10;
  double connectivity_min_fraction = 0.25;  // of the mean region size N/k

  void validate() const;
};

struct Region {
  int label = 0;
  int pixel_count = 0;
  int min_x = 0, min_y = 0, max_x = 0, max_y = 0;  // inclusive bounding box
  double centroid_x = 0.0, centroid_y = 0.0;       // mean pixel index
};

struct SuperpixelMap {
  int height = 0;
  int width = 0;
  std::vector<int> labels;  // row-major, dense ids 0..count()-1
  std::vector<Region> regions;

  int label_at(int y, int x) const { return labels[static_cast<std::size_t>(y) * width + x]; }
  int count() const { return static_cast<int>(regions.size()); }
  bool is_boundary(int y, int x) const;
};

struct SlicTrace {
  int iterations = 0;
  std::vector<double> displacement;  // summed centre movement per iteration
  double step = 0.0;                 // S = sqrt(N / k)
};

// sRGB in [0,1] to CIELAB under the D65 white point.
Image srgb_to_lab(const Image& rgb);

// Initial cluster centres (x, y) on the seeding grid before perturbation.
std::vector<std::pair<double, double>> slic_grid(int height, int width, int k);

// Clustering stage only: the label of the nearest centre per pixel, before
// connectivity enforcement. full_search drops the 2S x 2S window.
std::vector<int> slic_cluster(const Image& image, const SlicParams& params,
                              SlicTrace* trace = nullptr, bool full_search = false);

// Merges 4-connected components smaller than min_size into the neighbour
// sharing the longest boundary and relabels densely in raster order.
SuperpixelMap enforce_connectivity(const std::vector<int>& labels, int height, int width,
                                   int min_size);

SuperpixelMap slic_segment(const Image& image, const SlicParams& params,
                           SlicTrace* trace = nullptr);

struct RegionPatch {
  Image image;
  int frame_id = 0;
  int label = 0;
  double scale = 1.0;
};

// The region's pixels on a zero canvas with the centroid at the centre,
// shrunk uniformly when it would not fit.
RegionPatch extract_patch(const Image& image, const SuperpixelMap& map, int label,
                          int canvas = 224, int frame_id = 0);

// Fire probability for one patch.
using PatchClassifier = std::function<float(const Image& patch)>;

struct RegionVerdict {
  int label = 0;
  bool fire = false;
  float score = 0.0f;  // probability of the predicted class
};

struct Localization {
  SuperpixelMap map;
  std::vector<RegionVerdict> verdicts;
  Image overlay;  // boundaries green for fire regions, red otherwise
  int fire_regions() const;
};

Localization localize(const Image& frame, const PatchClassifier& classifier,
                      const SlicParams& params, int patch_size = 224, int frame_id = 0);

// Colours region boundaries: green where fire[label], red elsewhere.
Image draw_overlay(const Image& frame, const SuperpixelMap& map, const std::vector<bool>& fire);

}  // namespace onfire
