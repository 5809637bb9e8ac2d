#include "onfire/nn.hpp"

#include <algorithm>
#include <cmath>

#include "onfire/errors.hpp"
#include "onfire/random.hpp"

namespace onfire {

namespace {

int channels_of(const Tensor& x, const char* what) {
  if (x.rank() < 2) {
    throw ContractError(std::string(what) + " needs rank >= 2, got " + to_string(x.shape()));
  }
  return x.shape().back();
}

}  // namespace

Tensor batch_norm_forward(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                          BatchNormStats& stats, Mode mode, const BatchNormParams& params,
                          BatchNormCache* cache) {
  const int c = channels_of(x, "batch_norm");
  if (gamma.size() != c || beta.size() != c || stats.mean.size() != c ||
      stats.variance.size() != c) {
    throw ContractError("batch_norm: gamma " + to_string(gamma.shape()) + " / beta " +
                        to_string(beta.shape()) + " do not match channels of " +
                        to_string(x.shape()));
  }
  if (!(params.epsilon > 0.0f)) throw ContractError("batch_norm: epsilon must be > 0");
  const std::int64_t rows = x.size() / c;
  Tensor out(x.shape());

  if (mode == Mode::infer) {
    for (int k = 0; k < c; ++k) {
      const float scale = gamma[k] / std::sqrt(stats.variance[k] + params.epsilon);
      const float shift = beta[k] - stats.mean[k] * scale;
      for (std::int64_t r = 0; r < rows; ++r) out[r * c + k] = x[r * c + k] * scale + shift;
    }
    return out;
  }

  std::vector<double> mean(static_cast<std::size_t>(c), 0.0), var(static_cast<std::size_t>(c), 0.0);
  for (std::int64_t r = 0; r < rows; ++r) {
    for (int k = 0; k < c; ++k) mean[static_cast<std::size_t>(k)] += x[r * c + k];
  }
  for (auto& m : mean) m /= static_cast<double>(rows);
  for (std::int64_t r = 0; r < rows; ++r) {
    for (int k = 0; k < c; ++k) {
      const double d = x[r * c + k] - mean[static_cast<std::size_t>(k)];
      var[static_cast<std::size_t>(k)] += d * d;
    }
  }
  std::vector<float> inv_std(static_cast<std::size_t>(c));
  Tensor normalized(x.shape());
  for (int k = 0; k < c; ++k) {
    const auto kk = static_cast<std::size_t>(k);
    const double biased = var[kk] / static_cast<double>(rows);
    inv_std[kk] = static_cast<float>(1.0 / std::sqrt(biased + params.epsilon));
    const double unbiased = rows > 1 ? var[kk] / static_cast<double>(rows - 1) : biased;
    stats.mean[k] = params.momentum * stats.mean[k] +
                    (1.0f - params.momentum) * static_cast<float>(mean[kk]);
    stats.variance[k] = params.momentum * stats.variance[k] +
                        (1.0f - params.momentum) * static_cast<float>(unbiased);
  }
  for (std::int64_t r = 0; r < rows; ++r) {
    for (int k = 0; k < c; ++k) {
      const auto kk = static_cast<std::size_t>(k);
      const float n = static_cast<float>(x[r * c + k] - mean[kk]) * inv_std[kk];
      normalized[r * c + k] = n;
      out[r * c + k] = n * gamma[k] + beta[k];
    }
  }
  if (cache) {
    cache->normalized = std::move(normalized);
    cache->inv_std = std::move(inv_std);
  }
  return out;
}

BatchNormGrads batch_norm_backward(const BatchNormCache& cache, const Tensor& gamma,
                                   const Tensor& upstream) {
  if (cache.normalized.empty()) throw StateError("batch_norm_backward before a train-mode forward");
  if (upstream.shape() != cache.normalized.shape()) {
    throw ContractError("batch_norm_backward: upstream " + to_string(upstream.shape()) +
                        " does not match " + to_string(cache.normalized.shape()));
  }
  const int c = upstream.shape().back();
  const std::int64_t rows = upstream.size() / c;
  BatchNormGrads g{Tensor(upstream.shape()), Tensor({c}), Tensor({c})};
  std::vector<double> sum_d(static_cast<std::size_t>(c), 0.0), sum_dn(static_cast<std::size_t>(c), 0.0);
  for (std::int64_t r = 0; r < rows; ++r) {
    for (int k = 0; k < c; ++k) {
      const double dy = upstream[r * c + k];
      sum_d[static_cast<std::size_t>(k)] += dy;
      sum_dn[static_cast<std::size_t>(k)] += dy * cache.normalized[r * c + k];
    }
  }
  for (int k = 0; k < c; ++k) {
    g.beta[k] = static_cast<float>(sum_d[static_cast<std::size_t>(k)]);
    g.gamma[k] = static_cast<float>(sum_dn[static_cast<std::size_t>(k)]);
  }
  const double m = static_cast<double>(rows);
  for (std::int64_t r = 0; r < rows; ++r) {
    for (int k = 0; k < c; ++k) {
      const auto kk = static_cast<std::size_t>(k);
      const double dn = static_cast<double>(upstream[r * c + k]) * gamma[k];
      const double v = (m * dn - sum_d[kk] * gamma[k] -
                        cache.normalized[r * c + k] * sum_dn[kk] * gamma[k]) /
                       m * cache.inv_std[kk];
      g.input[r * c + k] = static_cast<float>(v);
    }
  }
  return g;
}

namespace {

void check_lrn(const Tensor& x, const LrnParams& p) {
  channels_of(x, "lrn");
  if (p.radius < 1) throw ContractError("lrn: radius must be >= 1");
}

// scale_c = bias + alpha * sum of squares over the channel window.
std::vector<double> lrn_scales(const float* row, int c, const LrnParams& p) {
  std::vector<double> s(static_cast<std::size_t>(c));
  for (int k = 0; k < c; ++k) {
    double acc = 0.0;
    for (int j = std::max(0, k - p.radius); j <= std::min(c - 1, k + p.radius); ++j) {
      acc += static_cast<double>(row[j]) * row[j];
    }
    s[static_cast<std::size_t>(k)] = p.bias + p.alpha * acc;
  }
  return s;
}

}  // namespace

Tensor lrn_forward(const Tensor& x, const LrnParams& params) {
  check_lrn(x, params);
  const int c = x.shape().back();
  const std::int64_t rows = x.size() / c;
  Tensor out(x.shape());
  for (std::int64_t r = 0; r < rows; ++r) {
    const float* row = x.data() + r * c;
    const auto s = lrn_scales(row, c, params);
    for (int k = 0; k < c; ++k) {
      out[r * c + k] = static_cast<float>(row[k] * std::pow(s[static_cast<std::size_t>(k)], -params.beta));
    }
  }
  require_finite(out, "lrn output");
  return out;
}

Tensor lrn_backward(const Tensor& x, const LrnParams& params, const Tensor& upstream) {
  check_lrn(x, params);
  if (upstream.shape() != x.shape()) {
    throw ContractError("lrn_backward: upstream " + to_string(upstream.shape()) +
                        " does not match " + to_string(x.shape()));
  }
  const int c = x.shape().back();
  const std::int64_t rows = x.size() / c;
  Tensor grad(x.shape());
  std::vector<double> t(static_cast<std::size_t>(c));
  for (std::int64_t r = 0; r < rows; ++r) {
    const float* row = x.data() + r * c;
    const float* g = upstream.data() + r * c;
    const auto s = lrn_scales(row, c, params);
    for (int k = 0; k < c; ++k) {
      const double sk = s[static_cast<std::size_t>(k)];
      t[static_cast<std::size_t>(k)] = g[k] * row[k] * std::pow(sk, -params.beta - 1.0);
    }
    for (int j = 0; j < c; ++j) {
      double acc = 0.0;
      for (int k = std::max(0, j - params.radius); k <= std::min(c - 1, j + params.radius); ++k) {
        acc += t[static_cast<std::size_t>(k)];
      }
      const double direct = g[j] * std::pow(s[static_cast<std::size_t>(j)], -params.beta);
      grad[r * c + j] =
          static_cast<float>(direct - 2.0 * params.alpha * params.beta * row[j] * acc);
    }
  }
  return grad;
}

DropoutResult dropout(const Tensor& x, float rate, Mode mode, std::uint64_t seed) {
  if (!(rate > 0.0f && rate < 1.0f)) {
    throw ContractError("dropout rate must lie in (0, 1), got " + std::to_string(rate));
  }
  if (mode == Mode::infer) return {x, Tensor()};
  Rng rng(seed);
  Tensor mask(x.shape());
  const float keep_scale = 1.0f / (1.0f - rate);
  for (float& m : mask.values()) m = rng.uniform() < rate ? 0.0f : keep_scale;
  Tensor out(x.shape());
  for (std::int64_t i = 0; i < x.size(); ++i) out[i] = x[i] * mask[i];
  return {std::move(out), std::move(mask)};
}

Tensor dropout_backward(const Tensor& mask, const Tensor& upstream) {
  if (mask.empty()) throw StateError("dropout_backward before a train-mode forward");
  if (mask.shape() != upstream.shape()) {
    throw ContractError("dropout_backward: upstream " + to_string(upstream.shape()) +
                        " does not match mask " + to_string(mask.shape()));
  }
  Tensor grad(upstream.shape());
  for (std::int64_t i = 0; i < grad.size(); ++i) grad[i] = upstream[i] * mask[i];
  return grad;
}

Tensor softmax(const Tensor& logits) {
  if (logits.rank() != 2) {
    throw ContractError("softmax expects N x K logits, got " + to_string(logits.shape()));
  }
  require_finite(logits, "softmax logits");
  const int n = logits.dim(0), k = logits.dim(1);
  Tensor out(logits.shape());
  for (int i = 0; i < n; ++i) {
    const float* row = logits.data() + static_cast<std::int64_t>(i) * k;
    const float mx = *std::max_element(row, row + k);
    double z = 0.0;
    for (int j = 0; j < k; ++j) z += std::exp(static_cast<double>(row[j]) - mx);
    for (int j = 0; j < k; ++j) {
      out[static_cast<std::int64_t>(i) * k + j] =
          static_cast<float>(std::exp(static_cast<double>(row[j]) - mx) / z);
    }
  }
  return out;
}

LossResult softmax_cross_entropy(const Tensor& logits, const Tensor& labels, float smoothing) {
  if (logits.rank() != 2 || logits.dim(1) < 2 || labels.shape() != logits.shape()) {
    throw ContractError("softmax_cross_entropy: logits " + to_string(logits.shape()) +
                        " and labels " + to_string(labels.shape()) + " must both be N x K, K >= 2");
  }
  if (smoothing < 0.0f) throw ContractError("label smoothing must be >= 0");
  require_finite(logits, "softmax_cross_entropy logits");
  const int n = logits.dim(0), k = logits.dim(1);
  LossResult result{0.0, Tensor(logits.shape()), Tensor(logits.shape())};
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const std::int64_t base = static_cast<std::int64_t>(i) * k;
    const float* row = logits.data() + base;
    double label_sum = 0.0;
    for (int j = 0; j < k; ++j) label_sum += labels[base + j];
    if (std::abs(label_sum - 1.0) > 1e-4) {
      throw ContractError("softmax_cross_entropy: label row " + std::to_string(i) +
                          " does not sum to 1");
    }
    const double mx = *std::max_element(row, row + k);
    double z = 0.0;
    for (int j = 0; j < k; ++j) z += std::exp(row[j] - mx);
    const double log_z = std::log(z) + mx;
    for (int j = 0; j < k; ++j) {
      const double q = (1.0 - smoothing) * labels[base + j] + smoothing / k;
      const double log_p = row[j] - log_z;
      const double p = std::exp(log_p);
      total -= q * log_p;
      result.probabilities[base + j] = static_cast<float>(p);
      result.grad[base + j] = static_cast<float>((p - q) / n);
    }
  }
  result.loss = total / n;
  return result;
}

}  // namespace onfire
