#pragma once

#include <array>
#include <nlohmann/json.hpp>
#include <optional>
#include <stdexcept>
#include <vector>

#include "usdiff/data/dataset.hpp"
#include "usdiff/eval/metrics.hpp"
#include "usdiff/train/trainer.hpp"

namespace usdiff::eval {

/// Generator trained on samples of the evaluation split.
class LeakageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EvalReport {
  AucResult auc;
  double accuracy = 0.0;
  std::array<std::array<int, 3>, 3> confusion{};  // [true class][predicted class]
  std::optional<double> mask_iou_mean;
  nlohmann::json inputs = nlohmann::json::object();  // hashes of data and checkpoints
  nlohmann::json extra = nlohmann::json::object();
};

void to_json(nlohmann::json& j, const EvalReport& r);

struct ClassifierRun {
  int steps = 600;
  int batch_size = 32;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  models::ClassifierConfig arch;
};

void to_json(nlohmann::json& j, const ClassifierRun& c);
void from_json(const nlohmann::json& j, ClassifierRun& c);

train::Checkpoint train_classifier(const data::Dataset& d, std::vector<std::size_t> idx, const ClassifierRun& run);

/// Softmax probabilities for images [N, 1, S, S].
std::vector<Scores3> predict_proba(const models::Classifier<float>& clf, const nn::Tensor<float>& images);

EvalReport evaluate_classifier(train::Checkpoint& clf, const data::Dataset& d, const std::vector<std::size_t>& idx);

/// Class-conditional samples from a diffusion checkpoint. Class c is drawn
/// with seed Rng::derive(sampler.seed, c) in batches of `batch`.
data::Dataset generate_dataset(const train::Bundle& gen, std::array<int, 3> per_class,
                               const diffusion::SamplerConfig& sampler, int batch = 32);

/// Throws LeakageError if any sample in `idx` was used to train the generator.
void check_leakage(const std::vector<std::string>& generator_trained_on, const data::Dataset& d,
                   const std::vector<std::size_t>& idx);

struct AugmentationResult {
  EvalReport baseline;   // classifier A: real train split
  EvalReport augmented;  // classifier B: real train split + generated
  double delta_auc = 0.0;
  std::string baseline_hash, augmented_hash;
};

/// Both classifiers share every setting and seed and are scored on the real
/// test split. The report metadata carries the published reference values.
AugmentationResult run_augmentation_experiment(const data::Dataset& real, const data::Dataset& generated,
                                               const std::vector<std::string>& generator_trained_on,
                                               const ClassifierRun& run);

struct CoverageConfig {
  double fraction = 0.2;
  train::TrainConfig diffusion;  // stage forced to diffusion
  int per_class = 100;
  diffusion::SamplerConfig sampler;
  ClassifierRun classifier;
  int permutations = 200;
  std::uint64_t seed = 0;
};

struct CoverageResult {
  EvalReport report;
  std::vector<double> null_aucs;
  double null_quantile = 0.0;  // 99.7th percentile of null_aucs
  bool beats_null = false;
};

/// Classifier trained on `generated` only, scored on subset `idx` of `real`,
/// plus a label-permutation null of the same scores.
CoverageResult coverage_from_generated(const data::Dataset& real, const std::vector<std::size_t>& idx,
                                       const data::Dataset& generated, const ClassifierRun& run,
                                       int permutations, std::uint64_t seed);

/// Draws a stratified `fraction` subset of `real`, trains diffusion on it
/// (sharing `codec`), generates per_class samples per class and runs
/// coverage_from_generated on the subset.
CoverageResult run_coverage_experiment(const data::Dataset& real, const train::Checkpoint& codec,
                                       const CoverageConfig& cfg);

struct MaskAdherenceResult {
  double mean_iou = 0.0;
  double shuffled_mean_iou = 0.0;  // generated image i against mask i+1 of a shuffled order
  std::vector<double> per_mask;
};

/// One controlled sample per lesion mask in `idx` (class taken from the
/// sample), scored by mask_adherence against its own and a mismatched mask.
MaskAdherenceResult run_mask_adherence(const train::Bundle& control, const data::Dataset& d,
                                       const std::vector<std::size_t>& idx, const diffusion::SamplerConfig& sampler);

}  // namespace usdiff::eval
