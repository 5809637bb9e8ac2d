#include "onfire/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "onfire/errors.hpp"
#include "onfire/random.hpp"

namespace onfire {

namespace {

using Rgb = std::array<float, 3>;

Rgb mix(const Rgb& a, const Rgb& b, double t) {
  return {static_cast<float>(a[0] + (b[0] - a[0]) * t), static_cast<float>(a[1] + (b[1] - a[1]) * t),
          static_cast<float>(a[2] + (b[2] - a[2]) * t)};
}

void paint(Image& img, int y, int x, const Rgb& c, double alpha) {
  for (int k = 0; k < 3; ++k) {
    img.at(y, x, k) = static_cast<float>(img.at(y, x, k) * (1.0 - alpha) + c[k] * alpha);
  }
}

void background(Image& img, Rng& rng) {
  static const std::array<std::array<Rgb, 2>, 5> palettes{{
      {{{0.35f, 0.55f, 0.85f}, {0.85f, 0.9f, 0.95f}}},  // sky
      {{{0.12f, 0.35f, 0.12f}, {0.35f, 0.55f, 0.25f}}},  // vegetation
      {{{0.35f, 0.35f, 0.38f}, {0.65f, 0.65f, 0.62f}}},  // concrete
      {{{0.03f, 0.03f, 0.08f}, {0.15f, 0.15f, 0.25f}}},  // night
      {{{0.45f, 0.38f, 0.28f}, {0.7f, 0.62f, 0.5f}}},    // earth
  }};
  const auto& p = palettes[rng.below(palettes.size())];
  const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double ca = std::cos(angle), sa = std::sin(angle);
  const double fx = rng.uniform(0.05, 0.3), fy = rng.uniform(0.05, 0.3);
  const double phase = rng.uniform(0.0, 6.3);
  const double n = img.width;
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const double t = 0.5 + 0.5 * ((x - n / 2) * ca + (y - n / 2) * sa) / n;
      const double tex = 0.06 * std::sin(fx * x + phase) * std::cos(fy * y - phase);
      Rgb c = mix(p[0], p[1], std::clamp(t, 0.0, 1.0));
      const double grain = 0.04 * (rng.uniform() - 0.5);
      for (int k = 0; k < 3; ++k) {
        img.at(y, x, k) = static_cast<float>(std::clamp(c[k] + tex + grain, 0.0, 1.0));
      }
    }
  }
}

void rigid_object(Image& img, Rng& rng, bool red) {
  const int n = img.width;
  Rgb colour;
  if (red) {
    colour = {static_cast<float>(rng.uniform(0.7, 1.0)), static_cast<float>(rng.uniform(0.0, 0.2)),
              static_cast<float>(rng.uniform(0.0, 0.15))};
  } else {
    colour = {static_cast<float>(rng.uniform(0.1, 0.6)), static_cast<float>(rng.uniform(0.1, 0.6)),
              static_cast<float>(rng.uniform(0.3, 0.9))};
  }
  const bool disc = rng.uniform() < 0.4;
  const double cx = rng.uniform(0.2, 0.8) * n, cy = rng.uniform(0.2, 0.8) * n;
  const double hw = rng.uniform(0.08, 0.25) * n, hh = rng.uniform(0.08, 0.25) * n;
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const double dx = (x - cx) / hw, dy = (y - cy) / hh;
      const bool inside = disc ? dx * dx + dy * dy <= 1.0 : std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0;
      if (!inside) continue;
      // Flat paint with a mild linear shade.
      const double shade = 0.9 + 0.1 * dy;
      paint(img, y, x, {static_cast<float>(colour[0] * shade), static_cast<float>(colour[1] * shade),
                        static_cast<float>(colour[2] * shade)}, 1.0);
    }
  }
}

void flame_blob(Image& img, std::vector<std::uint8_t>& mask, Rng& rng) {
  const int n = img.width;
  const double cx = rng.uniform(0.25, 0.75) * n, cy = rng.uniform(0.35, 0.8) * n;
  const double radius = rng.uniform(0.12, 0.28) * n;
  std::array<double, 4> amp{}, freq{}, phase{};
  for (int i = 0; i < 4; ++i) {
    amp[i] = rng.uniform(0.05, 0.22);
    freq[i] = static_cast<double>(2 + i + rng.below(3));
    phase[i] = rng.uniform(0.0, 2.0 * std::numbers::pi);
  }
  static const Rgb core{1.0f, 0.95f, 0.55f}, mid{1.0f, 0.6f, 0.08f}, rim{0.85f, 0.18f, 0.02f};
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      double dx = x - cx, dy = y - cy;
      // Flames stretch upwards.
      if (dy < 0) dy /= 1.6;
      const double theta = std::atan2(dy, dx);
      double r = radius;
      for (int i = 0; i < 4; ++i) r *= 1.0 + amp[i] * std::sin(freq[i] * theta + phase[i]);
      const double t = 1.0 - std::hypot(dx, dy) / r;
      if (t <= 0.0) continue;
      const Rgb c = t > 0.5 ? mix(mid, core, (t - 0.5) / 0.5) : mix(rim, mid, t / 0.5);
      const double alpha = std::min(1.0, t * 4.0);
      paint(img, y, x, c, alpha);
      if (alpha >= 0.5) mask[static_cast<std::size_t>(y) * n + x] = 1;
    }
  }
}

}  // namespace

double hue_of(float r, float g, float b) {
  const float mx = std::max({r, g, b}), mn = std::min({r, g, b});
  const float d = mx - mn;
  if (d <= 0.0f) return 0.0;
  double h;
  if (mx == r) {
    h = 60.0 * std::fmod((g - b) / d, 6.0);
  } else if (mx == g) {
    h = 60.0 * ((b - r) / d + 2.0);
  } else {
    h = 60.0 * ((r - g) / d + 4.0);
  }
  return h < 0.0 ? h + 360.0 : h;
}

double saturation_of(float r, float g, float b) {
  const float mx = std::max({r, g, b}), mn = std::min({r, g, b});
  return mx <= 0.0f ? 0.0 : (mx - mn) / mx;
}

SynthFrame synth_frame(int size, int label, std::uint64_t seed, int index) {
  if (size < 8) throw ContractError("synthetic frames need size >= 8");
  if (label != kFireClass && label != kNoFireClass) throw ContractError("label must be 0 or 1");
  Rng rng(derive_seed(seed, (label == kFireClass ? "fire/" : "nofire/") + std::to_string(index)));
  SynthFrame f{Image(size, size, 3), label,
               std::vector<std::uint8_t>(static_cast<std::size_t>(size) * size, 0)};
  background(f.image, rng);
  if (label == kFireClass) {
    if (rng.uniform() < 0.3) rigid_object(f.image, rng, rng.uniform() < 0.5);
    const int blobs = 1 + static_cast<int>(rng.below(2));
    for (int i = 0; i < blobs; ++i) flame_blob(f.image, f.fire_mask, rng);
  } else {
    const double u = rng.uniform();
    const int objects = u < 0.2 ? 0 : 1 + static_cast<int>(rng.below(3));
    for (int i = 0; i < objects; ++i) rigid_object(f.image, rng, rng.uniform() < 0.7);
  }
  return f;
}

Dataset synth_dataset(int n_per_class, int size, std::uint64_t seed) {
  if (n_per_class < 1) throw ContractError("n_per_class must be >= 1");
  Dataset d;
  for (int i = 0; i < n_per_class; ++i) {
    for (int label : {kFireClass, kNoFireClass}) {
      SynthFrame f = synth_frame(size, label, seed, i);
      d.add(std::move(f.image), label,
            std::string(label == kFireClass ? "fire/" : "nofire/") + std::to_string(i));
    }
  }
  return d;
}

Dataset synth_superpixel_dataset(int n_per_class, int frame_size, int patch_size,
                                 const SlicParams& params, std::uint64_t seed) {
  if (n_per_class < 1) throw ContractError("n_per_class must be >= 1");
  Dataset d;
  int fire = 0, nofire = 0;
  // Alternate frame classes until both quotas are filled.
  for (int i = 0; fire < n_per_class || nofire < n_per_class; ++i) {
    if (i > 100 * n_per_class + 1000) {
      throw StateError("superpixel generator could not fill the class quotas");
    }
    const int label = i % 2 == 0 ? kFireClass : kNoFireClass;
    const SynthFrame f = synth_frame(frame_size, label, seed, i / 2);
    const SuperpixelMap map = slic_segment(f.image, params);
    std::vector<int> on_fire(map.count(), 0);
    for (std::size_t p = 0; p < map.labels.size(); ++p) on_fire[map.labels[p]] += f.fire_mask[p];
    for (const Region& r : map.regions) {
      const bool is_fire = 2 * on_fire[r.label] > r.pixel_count;
      int& have = is_fire ? fire : nofire;
      if (have >= n_per_class) continue;
      ++have;
      RegionPatch patch = extract_patch(f.image, map, r.label, patch_size, i);
      d.add(std::move(patch.image), is_fire ? kFireClass : kNoFireClass,
            "frame" + std::to_string(i) + "/region" + std::to_string(r.label));
    }
  }
  return d;
}

}  // namespace onfire
