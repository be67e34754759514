#pragma once

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "usdiff/data/dataset.hpp"
#include "usdiff/train/bundle.hpp"

namespace usdiff::train {

enum class Stage { codec, diffusion, control, classifier };
const char* stage_name(Stage s);
Stage parse_stage(const std::string& name);

/// Missing or wrong parent/resume checkpoints.
class DependencyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite loss; the message names the step and stage.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  Stage stage = Stage::codec;
  /// Total optimizer steps. A resumed run continues until this count.
  int steps = 1000;
  int batch_size = 32;
  /// Stage default when unset: 1e-3 for codec/classifier, 1e-4 otherwise.
  std::optional<double> lr;
  std::uint64_t seed = 0;
  double condition_dropout = 0.1;
  std::string dataset;  // dataset directory (manifest.json)
  std::string out;      // checkpoint path
  std::string parent;   // codec checkpoint for diffusion, diffusion for control
  std::string resume;
  std::string log;      // JSONL path; defaults to <out>.log.jsonl
  std::string split = "train";
  ModelConfig model;

  void validate() const;
  double learning_rate() const;
  /// The hyperparameters that determine the result (no paths).
  nlohmann::json echo() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
/// Missing keys take defaults; unknown keys are rejected.
void from_json(const nlohmann::json& j, TrainConfig& c);

struct StepLog {
  std::int64_t step = 0;  // 1-based index of the finished step
  double loss = 0.0;
  double wall_ms = 0.0;
};

struct StageInputs {
  const data::Dataset* dataset = nullptr;
  std::vector<std::size_t> train_idx;  // samples the stage may read
  const Checkpoint* parent = nullptr;
  const Checkpoint* resume = nullptr;
};

/// Runs one stage to `cfg.steps` total steps. Bit-deterministic for a given
/// (config, inputs): batches, timesteps, noise and dropout all come from one
/// Rng seeded by cfg.seed whose state is stored in the checkpoint.
Checkpoint train_stage(const TrainConfig& cfg, const StageInputs& in,
                       const std::function<void(const StepLog&)>& on_step = {});

/// File-level driver used by the CLI: loads dataset/parent/resume from the
/// config paths, writes the JSONL log and the output checkpoint.
Checkpoint run_training(const TrainConfig& cfg);

/// Trailing moving average with window w (shorter at the start).
std::vector<double> moving_average(const std::vector<double>& v, int w);

}  // namespace usdiff::train
