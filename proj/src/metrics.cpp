#include "onfire/metrics.hpp"

#include <cstdio>
#include <sstream>

#include "onfire/errors.hpp"

namespace onfire {

namespace {

std::optional<double> ratio(std::int64_t num, std::int64_t den) {
  if (den <= 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

std::string fixed(const std::optional<double>& v, int digits, double scale = 1.0,
                  const char* missing = "") {
  if (!v) return missing;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, *v * scale);
  return buf;
}

}  // namespace

Confusion confusion_from(std::span<const int> labels, std::span<const int> predictions) {
  if (labels.size() != predictions.size()) {
    throw ContractError("labels and predictions differ in length");
  }
  Confusion c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool truth = labels[i] == 1, pred = predictions[i] == 1;
    if (truth && pred) ++c.tp;
    else if (truth) ++c.fn;
    else if (pred) ++c.fp;
    else ++c.tn;
  }
  return c;
}

double accuracy_to_complexity(double accuracy_percent, double params_millions) {
  if (!(params_millions > 0.0)) throw ContractError("parameter count must be > 0");
  return accuracy_percent / params_millions;
}

MetricsReport compute_metrics(const Confusion& c, std::optional<double> params_millions,
                              std::optional<double> fps) {
  if (c.tp < 0 || c.fp < 0 || c.tn < 0 || c.fn < 0) {
    throw ContractError("confusion counts must be non-negative");
  }
  MetricsReport r;
  r.counts = c;
  r.tpr = ratio(c.tp, c.tp + c.fn);
  r.fpr = ratio(c.fp, c.fp + c.tn);
  r.precision = ratio(c.tp, c.tp + c.fp);
  r.accuracy = ratio(c.tp + c.tn, c.total());
  if (r.precision && r.tpr && *r.precision + *r.tpr > 0.0) {
    r.f_score = 2.0 * *r.precision * *r.tpr / (*r.precision + *r.tpr);
  }
  r.params_millions = params_millions;
  if (params_millions && r.accuracy) {
    r.a_to_c = accuracy_to_complexity(*r.accuracy * 100.0, *params_millions);
  }
  r.fps = fps;
  return r;
}

std::string metrics_json(const MetricsReport& r) {
  auto field = [](const std::optional<double>& v) { return v ? fixed(v, 6) : std::string("null"); };
  std::ostringstream out;
  out << "{\"tp\":" << r.counts.tp << ",\"fp\":" << r.counts.fp << ",\"tn\":" << r.counts.tn
      << ",\"fn\":" << r.counts.fn << ",\"tpr\":" << field(r.tpr) << ",\"fpr\":" << field(r.fpr)
      << ",\"f\":" << field(r.f_score) << ",\"p\":" << field(r.precision)
      << ",\"a\":" << field(r.accuracy) << ",\"c_millions\":" << field(r.params_millions)
      << ",\"a_to_c\":" << field(r.a_to_c) << ",\"fps\":" << field(r.fps) << "}";
  return out.str();
}

std::string metrics_csv(const MetricsReport& r, bool header) {
  std::ostringstream out;
  if (header) out << "tp,fp,tn,fn,tpr,fpr,f,p,a,c_millions,a_to_c,fps\n";
  out << r.counts.tp << ',' << r.counts.fp << ',' << r.counts.tn << ',' << r.counts.fn << ','
      << fixed(r.tpr, 4) << ',' << fixed(r.fpr, 4) << ',' << fixed(r.f_score, 4) << ','
      << fixed(r.precision, 4) << ',' << fixed(r.accuracy, 4) << ','
      << fixed(r.params_millions, 4) << ',' << fixed(r.a_to_c, 2) << ',' << fixed(r.fps, 1)
      << '\n';
  return out.str();
}

std::string metrics_table(const MetricsReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%6s %6s %6s %6s %6s %8s %8s %6s\n", "TPR", "FPR", "F", "P", "A",
                "C(M)", "A:C", "fps");
  std::string out = buf;
  std::snprintf(buf, sizeof buf, "%6s %6s %6s %6s %6s %8s %8s %6s\n",
                fixed(r.tpr, 2, 1.0, "-").c_str(), fixed(r.fpr, 2, 1.0, "-").c_str(),
                fixed(r.f_score, 2, 1.0, "-").c_str(), fixed(r.precision, 2, 1.0, "-").c_str(),
                fixed(r.accuracy, 1, 100.0, "-").c_str(),
                fixed(r.params_millions, 2, 1.0, "-").c_str(), fixed(r.a_to_c, 2, 1.0, "-").c_str(),
                fixed(r.fps, 1, 1.0, "-").c_str());
  return out + buf;
}

}  // namespace onfire
