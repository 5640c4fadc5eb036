// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

namespace brainstack {

struct Metrics {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::vector<std::vector<int64_t>> confusion;  // [truth][prediction] counts
  std::vector<double> per_class_f1;
};

// Accuracy, confusion matrix and macro-F1 (unweighted mean of per-class F1;
// a class absent from both truth and prediction contributes F1=0).
Metrics compute_metrics(const std::vector<int>& labels, const std::vector<int>& preds, int K);

// Sample Pearson correlation. Needs n >= 2 and nonzero variance on both
// sides; degenerate input has no defined correlation.
double pearson_r(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace brainstack
