// Copyright 2026 The SegForest Authors
// SPDX-License-Identifier: Apache-2.0

#include "segforest/losses.hpp"

namespace segforest {

void LossWeights::validate(int classes) const {
  double sum = 0.0;
  for (double m : mu) {
    require(m >= 0.0 && std::isfinite(m), "loss weights must be non-negative");
    sum += m;
  }
  require(std::abs(sum - 1.0) <= 1e-9, "loss weights must sum to 1");
  require(s_min >= 0.0, "s_min must be non-negative");
  require(class_weights.empty() || static_cast<int>(class_weights.size()) == classes,
          "class weight count must equal the class count");
  for (std::size_t c = 0; c < class_weights.size(); ++c) {
    if (ignore_index && static_cast<int>(c) == *ignore_index) continue;
    require(class_weights[c] > 0.0, "class weights must be positive");
  }
}

BlockTarget BlockTarget::from_mask(const ClassMask& mask, int x0, int y0, int w, int h,
                                   int classes, std::optional<int> ignore) {
  require(x0 >= 0 && y0 >= 0 && w >= 1 && h >= 1 && x0 + w <= mask.width &&
              y0 + h <= mask.height,
          "block window lies outside the mask");
  BlockTarget t;
  t.classes = classes;
  t.width = w;
  t.height = h;
  t.labels.reserve(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int v = mask.at(x0 + x, y0 + y);
      if (v == kIgnoreIndex || (ignore && v == *ignore)) {
        t.labels.push_back(-1);
      } else {
        require(v < classes, "mask value exceeds the class count");
        t.labels.push_back(v);
      }
    }
  }
  return t;
}

int BlockTarget::valid_pixels() const {
  return static_cast<int>(std::count_if(labels.begin(), labels.end(),
                                        [](int c) { return c >= 0; }));
}

std::vector<double> BlockTarget::one_hot(int pixel) const {
  std::vector<double> v(classes, 0.0);
  if (labels[pixel] >= 0) v[labels[pixel]] = 1.0;
  return v;
}

BlockTarget split_target_for_subset(const BlockTarget& target, std::span<const int> subset) {
  require(!subset.empty(), "empty class subset");
  std::vector<int> position(target.classes, -1);
  for (std::size_t k = 0; k < subset.size(); ++k) {
    require(subset[k] >= 0 && subset[k] < target.classes, "subset class out of range");
    position[subset[k]] = static_cast<int>(k);
  }
  const int m = static_cast<int>(subset.size());
  const bool has_other = m < target.classes;
  BlockTarget out;
  out.classes = has_other ? m + 1 : m;
  out.width = target.width;
  out.height = target.height;
  out.labels.reserve(target.labels.size());
  for (int c : target.labels) {
    if (c < 0) out.labels.push_back(-1);
    else out.labels.push_back(position[c] >= 0 ? position[c] : m);
  }
  return out;
}

std::vector<double> inverse_frequency_weights(const ClassMask& mask, int classes,
                                              std::optional<int> ignore) {
  std::vector<long> counts(classes, 0);
  for (std::uint8_t v : mask.values) {
    if (v == kIgnoreIndex || (ignore && v == *ignore)) continue;
    require(v < classes, "mask value exceeds the class count");
    ++counts[v];
  }
  std::vector<double> w(classes, 1.0);
  double sum = 0.0;
  int present = 0;
  for (int c = 0; c < classes; ++c) {
    if (counts[c] == 0) continue;
    w[c] = 1.0 / static_cast<double>(counts[c]);
    sum += w[c];
    ++present;
  }
  if (present == 0) return std::vector<double>(classes, 1.0);
  const double scale = present / sum;
  for (int c = 0; c < classes; ++c) {
    if (counts[c] > 0) w[c] *= scale;
  }
  return w;
}

}  // namespace segforest
