/*
 * Copyright 2026 The DHRL Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef DHRL_IMPORTANCE_H_
#define DHRL_IMPORTANCE_H_

#include <cstdint>
#include <vector>

namespace dhrl {

struct GbtOptions {
  int rounds = 50;
  int max_depth = 3;
  double learning_rate = 0.1;
  double subsample = 0.8;  // row fraction drawn per round, without replacement
  int bins = 64;           // quantile bins per feature for split search
  int min_leaf = 2;
  uint64_t seed = 0;
};

// One-vs-rest gradient-boosted regression trees under logistic loss. Returns
// importances[f][k]: the total squared-error reduction of every split on
// feature f in the ensemble for class k. `labels` must already be dense ids
// in [0, num_classes).
std::vector<std::vector<double>> GradientBoostedImportance(
    const std::vector<std::vector<double>>& features, const std::vector<int>& labels,
    int num_classes, const GbtOptions& options);

}  // namespace dhrl

#endif  // DHRL_IMPORTANCE_H_
