#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include "onfire/random.hpp"
#include "onfire/tensor.hpp"

namespace onfire::testing {

inline Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(shape);
  for (auto& v : t.values()) v = static_cast<float>(rng.uniform(lo, hi));
  return t;
}

// Distinct values spaced `gap` apart in random order, so max-based ops have
// no near-ties and relu-like kinks stay clear of the difference step.
inline Tensor separated_tensor(const Shape& shape, Rng& rng, double gap = 0.05) {
  Tensor t(shape);
  std::vector<std::size_t> order(static_cast<std::size_t>(t.size()));
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  const double offset = -0.5 * gap * static_cast<double>(order.size()) + 0.25 * gap;
  for (std::size_t i = 0; i < order.size(); ++i) {
    t[static_cast<std::int64_t>(i)] = static_cast<float>(offset + gap * static_cast<double>(order[i]));
  }
  return t;
}

inline double dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
  return s;
}

// ||a - b|| / max(||a|| + ||b||, floor)
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b,
                             double floor = 1e-8) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max(std::sqrt(na) + std::sqrt(nb), floor);
}

// Central differences of the scalar loss(x) over the given indices of x.
inline std::vector<double> numeric_gradient(const std::function<double(const Tensor&)>& loss,
                                            Tensor x, const std::vector<std::int64_t>& indices,
                                            double step = 1e-3) {
  std::vector<double> g;
  for (std::int64_t i : indices) {
    const float orig = x[i];
    x[i] = static_cast<float>(orig + step);
    const double up = loss(x);
    x[i] = static_cast<float>(orig - step);
    const double down = loss(x);
    x[i] = orig;
    g.push_back((up - down) / (2.0 * step));
  }
  return g;
}

inline std::vector<std::int64_t> all_indices(const Tensor& t) {
  std::vector<std::int64_t> idx(static_cast<std::size_t>(t.size()));
  std::iota(idx.begin(), idx.end(), std::int64_t{0});
  return idx;
}

inline std::vector<double> gather(const Tensor& t, const std::vector<std::int64_t>& indices) {
  std::vector<double> out;
  for (auto i : indices) out.push_back(t[i]);
  return out;
}

// Gradient check of y = f(x) against the analytic vector-Jacobian product
// backward(upstream) using the projection loss L = <f(x), probe>.
inline double check_vjp(const std::function<Tensor(const Tensor&)>& f,
                        const std::function<Tensor(const Tensor&)>& backward, const Tensor& x,
                        Rng& rng, double step = 1e-3) {
  const Tensor y = f(x);
  const Tensor probe = random_tensor(y.shape(), rng);
  const Tensor analytic = backward(probe);
  const auto idx = all_indices(x);
  const auto numeric = numeric_gradient([&](const Tensor& xx) { return dot(f(xx), probe); }, x, idx, step);
  return relative_error(gather(analytic, idx), numeric);
}

}  // namespace onfire::testing
