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

#include "dhrl/importance.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "dhrl/common.h"

namespace dhrl {

namespace {

struct Node {
  int feature = -1;  // -1 marks a leaf
  int threshold = 0;  // goes left when bin <= threshold
  int left = -1, right = -1;
  double value = 0;
};

class Binned {
 public:
  Binned(const std::vector<std::vector<double>>& x, int max_bins) {
    n_ = static_cast<int64_t>(x.size());
    f_ = static_cast<int>(x[0].size());
    bins_.assign(f_, std::vector<uint16_t>(n_));
    num_bins_.assign(f_, 1);
    std::vector<double> column(n_);
    for (int f = 0; f < f_; ++f) {
      for (int64_t i = 0; i < n_; ++i) column[i] = x[i][f];
      std::vector<double> sorted = column;
      std::sort(sorted.begin(), sorted.end());
      sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
      // Cut points at evenly spaced ranks of the distinct values.
      std::vector<double> cuts;
      const auto distinct = static_cast<int64_t>(sorted.size());
      const int64_t count = std::min<int64_t>(max_bins, distinct);
      for (int64_t b = 1; b < count; ++b) {
        const int64_t rank = b * distinct / count;
        cuts.push_back(0.5 * (sorted[rank - 1] + sorted[rank]));
      }
      num_bins_[f] = static_cast<int>(cuts.size()) + 1;
      for (int64_t i = 0; i < n_; ++i) {
        bins_[f][i] = static_cast<uint16_t>(
            std::upper_bound(cuts.begin(), cuts.end(), column[i]) - cuts.begin());
      }
    }
  }

  int64_t rows() const { return n_; }
  int features() const { return f_; }
  int num_bins(int f) const { return num_bins_[f]; }
  uint16_t bin(int f, int64_t i) const { return bins_[f][i]; }

 private:
  int64_t n_ = 0;
  int f_ = 0;
  std::vector<std::vector<uint16_t>> bins_;
  std::vector<int> num_bins_;
};

class TreeBuilder {
 public:
  TreeBuilder(const Binned& data, const std::vector<double>& grad,
              const std::vector<double>& hess, const GbtOptions& options,
              std::vector<double>& importance)
      : data_(data), grad_(grad), hess_(hess), options_(options),
        importance_(importance) {}

  std::vector<Node> Build(std::vector<int64_t> rows) {
    nodes_.clear();
    Grow(std::move(rows), 0);
    return nodes_;
  }

 private:
  int Grow(std::vector<int64_t> rows, int depth) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    double g = 0, h = 0;
    for (auto i : rows) {
      g += grad_[i];
      h += hess_[i];
    }
    nodes_[id].value = g / (h + 1e-12);
    const auto n = static_cast<int64_t>(rows.size());
    if (depth >= options_.max_depth || n < 2 * options_.min_leaf) return id;

    const double parent = g * g / static_cast<double>(n);
    double best_gain = 1e-12;
    int best_feature = -1, best_threshold = 0;
    std::vector<double> sum;
    std::vector<int64_t> cnt;
    for (int f = 0; f < data_.features(); ++f) {
      const int nb = data_.num_bins(f);
      if (nb < 2) continue;
      sum.assign(nb, 0.0);
      cnt.assign(nb, 0);
      for (auto i : rows) {
        const auto b = data_.bin(f, i);
        sum[b] += grad_[i];
        ++cnt[b];
      }
      double left_sum = 0;
      int64_t left_cnt = 0;
      for (int b = 0; b + 1 < nb; ++b) {
        left_sum += sum[b];
        left_cnt += cnt[b];
        const int64_t right_cnt = n - left_cnt;
        if (left_cnt < options_.min_leaf) continue;
        if (right_cnt < options_.min_leaf) break;
        const double right_sum = g - left_sum;
        const double gain = left_sum * left_sum / left_cnt +
                            right_sum * right_sum / right_cnt - parent;
        if (gain > best_gain) {
          best_gain = gain;
          best_feature = f;
          best_threshold = b;
        }
      }
    }
    if (best_feature < 0) return id;

    importance_[best_feature] += best_gain;
    std::vector<int64_t> left, right;
    for (auto i : rows) {
      (data_.bin(best_feature, i) <= best_threshold ? left : right).push_back(i);
    }
    rows.clear();
    rows.shrink_to_fit();
    nodes_[id].feature = best_feature;
    nodes_[id].threshold = best_threshold;
    const int l = Grow(std::move(left), depth + 1);
    const int r = Grow(std::move(right), depth + 1);
    nodes_[id].left = l;
    nodes_[id].right = r;
    return id;
  }

  const Binned& data_;
  const std::vector<double>& grad_;
  const std::vector<double>& hess_;
  const GbtOptions& options_;
  std::vector<double>& importance_;
  std::vector<Node> nodes_;
};

double Predict(const std::vector<Node>& tree, const Binned& data, int64_t row) {
  int id = 0;
  while (tree[id].feature >= 0) {
    id = data.bin(tree[id].feature, row) <= tree[id].threshold ? tree[id].left
                                                               : tree[id].right;
  }
  return tree[id].value;
}

}  // namespace

std::vector<std::vector<double>> GradientBoostedImportance(
    const std::vector<std::vector<double>>& features, const std::vector<int>& labels,
    int num_classes, const GbtOptions& options) {
  Require(!features.empty(), "importance estimation needs samples");
  Require(features.size() == labels.size(), "features and labels differ in length");
  Require(num_classes >= 2, "importance estimation needs at least 2 classes");
  Require(options.rounds >= 1 && options.max_depth >= 1 && options.bins >= 2,
          "invalid boosting options");
  Require(options.subsample > 0 && options.subsample <= 1,
          "subsample must be in (0, 1]");
  const int nf = static_cast<int>(features[0].size());
  for (const auto& row : features) {
    Require(static_cast<int>(row.size()) == nf, "ragged feature matrix");
    for (double v : row) Require(std::isfinite(v), "non-finite feature value");
  }
  for (int y : labels) Require(y >= 0 && y < num_classes, "label out of range");

  const Binned data(features, options.bins);
  const int64_t n = data.rows();
  const auto take = std::max<int64_t>(
      1, static_cast<int64_t>(std::llround(options.subsample * n)));

  std::vector<std::vector<double>> importance(nf, std::vector<double>(num_classes, 0.0));
  std::vector<double> score(n), grad(n), hess(n), column(nf);
  std::vector<int64_t> all(n);
  for (int k = 0; k < num_classes; ++k) {
    const double positives = static_cast<double>(std::count(labels.begin(), labels.end(), k));
    const double prior = std::clamp(positives / n, 1e-6, 1 - 1e-6);
    std::fill(score.begin(), score.end(), std::log(prior / (1 - prior)));
    std::fill(column.begin(), column.end(), 0.0);
    for (int round = 0; round < options.rounds; ++round) {
      for (int64_t i = 0; i < n; ++i) {
        const double p = 1.0 / (1.0 + std::exp(-score[i]));
        grad[i] = (labels[i] == k ? 1.0 : 0.0) - p;
        hess[i] = p * (1 - p);
      }
      // Row subsample: partial Fisher-Yates on a counter-derived stream.
      std::iota(all.begin(), all.end(), int64_t{0});
      std::mt19937_64 rng(DeriveSeed(options.seed, static_cast<uint64_t>(k),
                                     static_cast<uint64_t>(round)));
      for (int64_t i = 0; i < take; ++i) {
        const auto j = i + static_cast<int64_t>(rng() % static_cast<uint64_t>(n - i));
        std::swap(all[i], all[j]);
      }
      std::vector<int64_t> rows(all.begin(), all.begin() + take);
      std::sort(rows.begin(), rows.end());
      TreeBuilder builder(data, grad, hess, options, column);
      const auto tree = builder.Build(std::move(rows));
      for (int64_t i = 0; i < n; ++i) {
        score[i] += options.learning_rate * std::clamp(Predict(tree, data, i), -8.0, 8.0);
      }
    }
    for (int f = 0; f < nf; ++f) importance[f][k] = column[f];
  }
  return importance;
}

}  // namespace dhrl
