#include "onfire/slic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include "onfire/errors.hpp"
#include "onfire/parallel.hpp"

namespace onfire {

void SlicParams::validate() const {
  if (k < 1) throw ContractError("SLIC k must be >= 1");
  if (!(compactness > 0.0)) throw ContractError("SLIC compactness must be > 0");
  if (max_iters < 1) throw ContractError("SLIC max_iters must be >= 1");
  if (!(connectivity_min_fraction > 0.0 && connectivity_min_fraction <= 1.0)) {
    throw ContractError("SLIC connectivity_min_fraction must be in (0, 1]");
  }
}

bool SuperpixelMap::is_boundary(int y, int x) const {
  const int l = label_at(y, x);
  return (x > 0 && label_at(y, x - 1) != l) || (x + 1 < width && label_at(y, x + 1) != l) ||
         (y > 0 && label_at(y - 1, x) != l) || (y + 1 < height && label_at(y + 1, x) != l);
}

namespace {

double srgb_to_linear(double c) {
  return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

double lab_f(double t) {
  constexpr double delta = 6.0 / 29.0;
  return t > delta * delta * delta ? std::cbrt(t) : t / (3 * delta * delta) + 4.0 / 29.0;
}

void check_color(const Image& image) {
  if (image.empty()) throw ContractError("SLIC: empty image");
  if (image.channels != 3) {
    throw ContractError("SLIC needs a 3-channel colour image, got " +
                        std::to_string(image.channels) + " channels");
  }
}

struct Centre {
  double l, a, b, x, y;
};

double gradient_at(const Image& lab, int y, int x) {
  const int x0 = std::max(x - 1, 0), x1 = std::min(x + 1, lab.width - 1);
  const int y0 = std::max(y - 1, 0), y1 = std::min(y + 1, lab.height - 1);
  double g = 0.0;
  for (int c = 0; c < 3; ++c) {
    const double dx = lab.at(y, x1, c) - lab.at(y, x0, c);
    const double dy = lab.at(y1, x, c) - lab.at(y0, x, c);
    g += dx * dx + dy * dy;
  }
  return g;
}

}  // namespace

Image srgb_to_lab(const Image& rgb) {
  check_color(rgb);
  // D65 reference white
  constexpr double xn = 0.95047, yn = 1.0, zn = 1.08883;
  Image lab(rgb.height, rgb.width, 3);
  for (std::size_t i = 0; i < rgb.data.size(); i += 3) {
    const double r = srgb_to_linear(std::clamp<double>(rgb.data[i], 0.0, 1.0));
    const double g = srgb_to_linear(std::clamp<double>(rgb.data[i + 1], 0.0, 1.0));
    const double b = srgb_to_linear(std::clamp<double>(rgb.data[i + 2], 0.0, 1.0));
    const double x = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
    const double y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
    const double z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;
    const double fx = lab_f(x / xn), fy = lab_f(y / yn), fz = lab_f(z / zn);
    lab.data[i] = static_cast<float>(116.0 * fy - 16.0);
    lab.data[i + 1] = static_cast<float>(500.0 * (fx - fy));
    lab.data[i + 2] = static_cast<float>(200.0 * (fy - fz));
  }
  return lab;
}

std::vector<std::pair<double, double>> slic_grid(int height, int width, int k) {
  if (k < 1 || static_cast<long long>(height) * width < k) {
    throw ContractError("SLIC k=" + std::to_string(k) + " exceeds the pixel count " +
                        std::to_string(static_cast<long long>(height) * width));
  }
  const int nx = std::clamp(
      static_cast<int>(std::ceil(std::sqrt(static_cast<double>(k) * width / height) - 1e-9)), 1,
      width);
  const int ny = std::clamp(static_cast<int>(std::lround(static_cast<double>(k) / nx)), 1, height);
  const double sx = static_cast<double>(width) / nx, sy = static_cast<double>(height) / ny;
  std::vector<std::pair<double, double>> seeds;
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) seeds.emplace_back((i + 0.5) * sx - 0.5, (j + 0.5) * sy - 0.5);
  }
  return seeds;
}

std::vector<int> slic_cluster(const Image& image, const SlicParams& params, SlicTrace* trace,
                              bool full_search) {
  check_color(image);
  params.validate();
  const int h = image.height, w = image.width;
  const std::size_t n = static_cast<std::size_t>(h) * w;
  const auto grid = slic_grid(h, w, params.k);
  const Image lab = srgb_to_lab(image);
  const double step = std::sqrt(static_cast<double>(n) / params.k);
  const double spatial = (params.compactness / step) * (params.compactness / step);

  std::vector<Centre> centres;
  for (auto [gx, gy] : grid) {
    const int cx = std::clamp(static_cast<int>(std::lround(gx)), 0, w - 1);
    const int cy = std::clamp(static_cast<int>(std::lround(gy)), 0, h - 1);
    double best = gradient_at(lab, cy, cx);
    double px = gx, py = gy;
    int bx = cx, by = cy;
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        const int x = cx + dx, y = cy + dy;
        if (x < 0 || y < 0 || x >= w || y >= h) continue;
        const double g = gradient_at(lab, y, x);
        if (g < best) {
          best = g;
          bx = x;
          by = y;
          px = x;
          py = y;
        }
      }
    }
    centres.push_back({lab.at(by, bx, 0), lab.at(by, bx, 1), lab.at(by, bx, 2), px, py});
  }
  const int kc = static_cast<int>(centres.size());

  // Buckets of side `step` so each pixel only visits centres in its window.
  const int bw = std::max(1, static_cast<int>(std::ceil(w / step)));
  const int bh = std::max(1, static_cast<int>(std::ceil(h / step)));
  std::vector<std::vector<int>> buckets;
  auto bucket_of = [&](double v, int count) {
    return std::clamp(static_cast<int>(std::floor(v / step)), 0, count - 1);
  };

  std::vector<int> labels(n, -1);
  if (trace) {
    *trace = SlicTrace{};
    trace->step = step;
  }
  for (int iter = 0; iter < params.max_iters; ++iter) {
    buckets.assign(static_cast<std::size_t>(bw) * bh, {});
    for (int c = 0; c < kc; ++c) {
      buckets[static_cast<std::size_t>(bucket_of(centres[c].y, bh)) * bw +
              bucket_of(centres[c].x, bw)]
          .push_back(c);
    }
    parallel_for(0, h, [&](std::int64_t yy) {
      const int y = static_cast<int>(yy);
      for (int x = 0; x < w; ++x) {
        const float* p = &lab.data[(static_cast<std::size_t>(y) * w + x) * 3];
        double best = std::numeric_limits<double>::infinity();
        int best_label = -1;
        auto consider = [&](int c) {
          const Centre& ct = centres[c];
          const double dx = x - ct.x, dy = y - ct.y;
          if (!full_search && (std::abs(dx) > step || std::abs(dy) > step)) return;
          const double dl = p[0] - ct.l, da = p[1] - ct.a, db = p[2] - ct.b;
          const double d = dl * dl + da * da + db * db + (dx * dx + dy * dy) * spatial;
          if (d < best || (d == best && c < best_label)) {
            best = d;
            best_label = c;
          }
        };
        if (full_search) {
          for (int c = 0; c < kc; ++c) consider(c);
        } else {
          const int bx0 = bucket_of(x - step, bw) - 1, bx1 = bucket_of(x + step, bw) + 1;
          const int by0 = bucket_of(y - step, bh) - 1, by1 = bucket_of(y + step, bh) + 1;
          for (int by = std::max(by0, 0); by <= std::min(by1, bh - 1); ++by) {
            for (int bx = std::max(bx0, 0); bx <= std::min(bx1, bw - 1); ++bx) {
              for (int c : buckets[static_cast<std::size_t>(by) * bw + bx]) consider(c);
            }
          }
          if (best_label < 0) {
            for (int c = 0; c < kc; ++c) {
              const double dx = x - centres[c].x, dy = y - centres[c].y;
              const double d = dx * dx + dy * dy;
              if (d < best) {
                best = d;
                best_label = c;
              }
            }
          }
        }
        labels[static_cast<std::size_t>(y) * w + x] = best_label;
      }
    });

    std::vector<double> sums(static_cast<std::size_t>(kc) * 5, 0.0);
    std::vector<std::size_t> counts(kc, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const int c = labels[i];
      double* s = &sums[static_cast<std::size_t>(c) * 5];
      s[0] += lab.data[i * 3];
      s[1] += lab.data[i * 3 + 1];
      s[2] += lab.data[i * 3 + 2];
      s[3] += static_cast<double>(i % w);
      s[4] += static_cast<double>(i / w);
      ++counts[c];
    }
    double total_move = 0.0, max_move = 0.0;
    for (int c = 0; c < kc; ++c) {
      if (counts[c] == 0) continue;
      const double* s = &sums[static_cast<std::size_t>(c) * 5];
      const double inv = 1.0 / static_cast<double>(counts[c]);
      Centre next{s[0] * inv, s[1] * inv, s[2] * inv, s[3] * inv, s[4] * inv};
      const double move = std::hypot(next.x - centres[c].x, next.y - centres[c].y);
      total_move += move;
      max_move = std::max(max_move, move);
      centres[c] = next;
    }
    if (trace) {
      trace->iterations = iter + 1;
      trace->displacement.push_back(total_move);
    }
    if (max_move < 1.0) break;
  }
  return labels;
}

SuperpixelMap enforce_connectivity(const std::vector<int>& raw, int height, int width,
                                   int min_size) {
  const std::size_t n = static_cast<std::size_t>(height) * width;
  if (raw.size() != n) throw ContractError("label image size mismatch");

  // 4-connected components of equal raw label, numbered in raster order.
  std::vector<int> comp(n, -1);
  std::vector<int> size;
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < n; ++start) {
    if (comp[start] >= 0) continue;
    const int id = static_cast<int>(size.size());
    size.push_back(0);
    comp[start] = id;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t i = stack.back();
      stack.pop_back();
      ++size[id];
      const int x = static_cast<int>(i % width), y = static_cast<int>(i / width);
      auto visit = [&](std::size_t j) {
        if (comp[j] < 0 && raw[j] == raw[i]) {
          comp[j] = id;
          stack.push_back(j);
        }
      };
      if (x > 0) visit(i - 1);
      if (x + 1 < width) visit(i + 1);
      if (y > 0) visit(i - width);
      if (y + 1 < height) visit(i + width);
    }
  }

  const int count = static_cast<int>(size.size());
  std::vector<std::map<int, int>> adjacency(count);
  for (std::size_t i = 0; i < n; ++i) {
    const int x = static_cast<int>(i % width), y = static_cast<int>(i / width);
    if (x + 1 < width && comp[i] != comp[i + 1]) {
      ++adjacency[comp[i]][comp[i + 1]];
      ++adjacency[comp[i + 1]][comp[i]];
    }
    if (y + 1 < height && comp[i] != comp[i + width]) {
      ++adjacency[comp[i]][comp[i + width]];
      ++adjacency[comp[i + width]][comp[i]];
    }
  }

  std::vector<int> parent(count);
  for (int c = 0; c < count; ++c) parent[c] = c;
  std::set<std::pair<int, int>> small;
  for (int c = 0; c < count; ++c) {
    if (size[c] < min_size) small.insert({size[c], c});
  }
  int alive = count;
  while (!small.empty() && alive > 1) {
    const int a = small.begin()->second;
    small.erase(small.begin());
    int target = -1, longest = -1;
    for (auto [nb, len] : adjacency[a]) {
      if (len > longest) {
        longest = len;
        target = nb;
      }
    }
    if (target < 0) continue;
    if (size[target] < min_size) small.erase({size[target], target});
    size[target] += size[a];
    if (size[target] < min_size) small.insert({size[target], target});
    for (auto [nb, len] : adjacency[a]) {
      adjacency[nb].erase(a);
      if (nb == target) continue;
      adjacency[target][nb] += len;
      adjacency[nb][target] += len;
    }
    adjacency[a].clear();
    parent[a] = target;
    --alive;
  }

  auto root = [&](int c) {
    while (parent[c] != c) c = parent[c];
    return c;
  };
  SuperpixelMap map;
  map.height = height;
  map.width = width;
  map.labels.assign(n, -1);
  std::vector<int> dense(count, -1);
  int next = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const int r = root(comp[i]);
    if (dense[r] < 0) dense[r] = next++;
    map.labels[i] = dense[r];
  }

  map.regions.resize(next);
  std::vector<double> sx(next, 0.0), sy(next, 0.0);
  for (int l = 0; l < next; ++l) {
    map.regions[l] = Region{l, 0, width, height, -1, -1, 0.0, 0.0};
  }
  for (std::size_t i = 0; i < n; ++i) {
    Region& r = map.regions[map.labels[i]];
    const int x = static_cast<int>(i % width), y = static_cast<int>(i / width);
    ++r.pixel_count;
    r.min_x = std::min(r.min_x, x);
    r.max_x = std::max(r.max_x, x);
    r.min_y = std::min(r.min_y, y);
    r.max_y = std::max(r.max_y, y);
    sx[r.label] += x;
    sy[r.label] += y;
  }
  for (Region& r : map.regions) {
    r.centroid_x = sx[r.label] / r.pixel_count;
    r.centroid_y = sy[r.label] / r.pixel_count;
  }
  return map;
}

SuperpixelMap slic_segment(const Image& image, const SlicParams& params, SlicTrace* trace) {
  const auto raw = slic_cluster(image, params, trace);
  const double mean_size = static_cast<double>(image.height) * image.width / params.k;
  const int min_size =
      std::max(1, static_cast<int>(std::lround(params.connectivity_min_fraction * mean_size)));
  return enforce_connectivity(raw, image.height, image.width, min_size);
}

RegionPatch extract_patch(const Image& image, const SuperpixelMap& map, int label, int canvas,
                          int frame_id) {
  if (label < 0 || label >= map.count()) {
    throw LookupError("superpixel label " + std::to_string(label) + " does not exist (map has " +
                      std::to_string(map.count()) + " regions)");
  }
  if (image.height != map.height || image.width != map.width) {
    throw ContractError("image and superpixel map sizes differ");
  }
  if (canvas < 1) throw ContractError("patch canvas must be >= 1");
  const Region& r = map.regions[label];
  // Continuous coordinates: pixel i covers [i, i + 1).
  const double cx = r.centroid_x + 0.5, cy = r.centroid_y + 0.5;
  const double half = canvas / 2.0;
  const double reach = std::max({cx - r.min_x, r.max_x + 1 - cx, cy - r.min_y, r.max_y + 1 - cy});
  const double scale = std::min(1.0, half / reach);

  RegionPatch patch{Image(canvas, canvas, image.channels), frame_id, label, scale};
  for (int v = 0; v < canvas; ++v) {
    const double py = (v + 0.5 - half) / scale + cy;
    const int y = static_cast<int>(std::floor(py));
    if (y < r.min_y || y > r.max_y) continue;
    for (int u = 0; u < canvas; ++u) {
      const double px = (u + 0.5 - half) / scale + cx;
      const int x = static_cast<int>(std::floor(px));
      if (x < r.min_x || x > r.max_x || map.label_at(y, x) != label) continue;
      for (int c = 0; c < image.channels; ++c) patch.image.at(v, u, c) = image.at(y, x, c);
    }
  }
  return patch;
}

int Localization::fire_regions() const {
  return static_cast<int>(
      std::count_if(verdicts.begin(), verdicts.end(), [](const RegionVerdict& v) { return v.fire; }));
}

Image draw_overlay(const Image& frame, const SuperpixelMap& map, const std::vector<bool>& fire) {
  Image out = frame;
  for (int y = 0; y < map.height; ++y) {
    for (int x = 0; x < map.width; ++x) {
      if (!map.is_boundary(y, x)) continue;
      const bool f = fire.at(map.label_at(y, x));
      out.at(y, x, 0) = f ? 0.0f : 1.0f;
      out.at(y, x, 1) = f ? 1.0f : 0.0f;
      out.at(y, x, 2) = 0.0f;
    }
  }
  return out;
}

Localization localize(const Image& frame, const PatchClassifier& classifier,
                      const SlicParams& params, int patch_size, int frame_id) {
  if (!classifier) throw ContractError("localize: no classifier");
  Localization result;
  result.map = slic_segment(frame, params);
  std::vector<bool> fire(result.map.count(), false);
  for (int l = 0; l < result.map.count(); ++l) {
    const RegionPatch patch = extract_patch(frame, result.map, l, patch_size, frame_id);
    const float p = classifier(patch.image);
    if (!std::isfinite(p) || p < 0.0f || p > 1.0f) {
      throw NumericError("classifier returned fire probability " + std::to_string(p));
    }
    fire[l] = p > 0.5f;
    result.verdicts.push_back({l, fire[l], fire[l] ? p : 1.0f - p});
  }
  result.overlay = draw_overlay(frame, result.map, fire);
  return result;
}

}  // namespace onfire
