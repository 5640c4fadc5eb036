// SPDX-License-Identifier: Apache-2.0
#include "brainstack/metrics.hpp"

#include <cmath>
#include <string>

#include "brainstack/errors.hpp"

namespace brainstack {

Metrics compute_metrics(const std::vector<int>& labels, const std::vector<int>& preds, int K) {
  if (K < 1) throw ConfigError("metrics: K must be >= 1");
  if (labels.empty()) throw ConfigError("metrics: empty label list");
  if (labels.size() != preds.size())
    throw ConfigError("metrics: " + std::to_string(labels.size()) + " labels vs " +
                      std::to_string(preds.size()) + " predictions");

  Metrics m;
  m.confusion.assign(static_cast<size_t>(K), std::vector<int64_t>(static_cast<size_t>(K), 0));
  for (size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i], p = preds[i];
    if (y < 0 || y >= K || p < 0 || p >= K)
      throw ConfigError("metrics: class index out of range at position " + std::to_string(i));
    ++m.confusion[static_cast<size_t>(y)][static_cast<size_t>(p)];
  }

  int64_t trace = 0;
  for (int k = 0; k < K; ++k) trace += m.confusion[static_cast<size_t>(k)][static_cast<size_t>(k)];
  m.accuracy = static_cast<double>(trace) / static_cast<double>(labels.size());

  m.per_class_f1.assign(static_cast<size_t>(K), 0.0);
  for (int k = 0; k < K; ++k) {
    int64_t tp = m.confusion[static_cast<size_t>(k)][static_cast<size_t>(k)];
    int64_t fp = 0, fn = 0;
    for (int j = 0; j < K; ++j) {
      if (j == k) continue;
      fp += m.confusion[static_cast<size_t>(j)][static_cast<size_t>(k)];
      fn += m.confusion[static_cast<size_t>(k)][static_cast<size_t>(j)];
    }
    const int64_t denom = 2 * tp + fp + fn;
    m.per_class_f1[static_cast<size_t>(k)] =
        denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
    m.macro_f1 += m.per_class_f1[static_cast<size_t>(k)];
  }
  m.macro_f1 /= static_cast<double>(K);
  return m;
}

double pearson_r(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size())
    throw ConfigError("pearson: length mismatch " + std::to_string(x.size()) + " vs " +
                      std::to_string(y.size()));
  const size_t n = x.size();
  if (n < 2) throw NumericError("pearson: need at least 2 points, got " + std::to_string(n));
  double mx = 0.0, my = 0.0;
  for (size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0 || syy == 0.0)
    throw NumericError("pearson: undefined correlation, zero variance input");
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace brainstack
