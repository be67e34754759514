#pragma once

#include <nlohmann/json.hpp>
#include <vector>

#include "usdiff/models/layers.hpp"

namespace usdiff::models {

struct ClassifierConfig {
  int image_size = 64;
  std::vector<int> channels{16, 32, 64};
  int num_classes = 3;

  void validate() const;
};

void to_json(nlohmann::json& j, const ClassifierConfig& c);
void from_json(const nlohmann::json& j, ClassifierConfig& c);

/// Stride-2 conv/GN/silu blocks, global average pool, linear head to logits.
/// Parameters live under the builder's prefix (normally "classifier.").
template <typename T>
class Classifier {
 public:
  Classifier() = default;
  Classifier(const ClassifierConfig& cfg, const Builder<T>& b);

  /// Logits [N, num_classes] for images [N, 1, S, S].
  nn::Tensor<T> operator()(const nn::Tensor<T>& images) const;
  const ClassifierConfig& config() const { return cfg_; }

 private:
  ClassifierConfig cfg_;
  std::vector<Conv2d<T>> convs_;
  std::vector<GroupNorm<T>> norms_;
  Linear<T> head_;
};

}  // namespace usdiff::models
