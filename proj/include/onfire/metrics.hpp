#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>

namespace onfire {

// Positive class is fire.
struct Confusion {
  std::int64_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::int64_t total() const { return tp + fp + tn + fn; }
  friend bool operator==(const Confusion&, const Confusion&) = default;
};

Confusion confusion_from(std::span<const int> labels, std::span<const int> predictions);

// Ratio fields are empty when their denominator is zero.
struct MetricsReport {
  Confusion counts;
  std::optional<double> tpr, fpr, precision, f_score, accuracy;
  std::optional<double> params_millions;
  std::optional<double> a_to_c;  // accuracy in percent per million parameters
  std::optional<double> fps;
};

MetricsReport compute_metrics(const Confusion& counts,
                              std::optional<double> params_millions = std::nullopt,
                              std::optional<double> fps = std::nullopt);

// accuracy_percent / params_millions
double accuracy_to_complexity(double accuracy_percent, double params_millions);

std::string metrics_json(const MetricsReport& report);
std::string metrics_csv(const MetricsReport& report, bool header = true);
// Percentages to one decimal, as in a results table.
std::string metrics_table(const MetricsReport& report);

}  // namespace onfire
