#pragma once

#include <nlohmann/json.hpp>
#include <optional>

#include "usdiff/diffusion/sampler.hpp"
#include "usdiff/diffusion/schedule.hpp"
#include "usdiff/models/classifier.hpp"
#include "usdiff/models/codec.hpp"
#include "usdiff/models/control.hpp"
#include "usdiff/models/unet.hpp"
#include "usdiff/train/checkpoint.hpp"

namespace usdiff::train {

struct ScheduleConfig {
  int timesteps = 1000;
  double beta_start = 1e-4;
  double beta_end = 0.02;
};

/// Architecture of every network in the pipeline. Echoed into checkpoints.
struct ModelConfig {
  models::CodecConfig codec;
  models::UNetConfig unet;
  models::ClassifierConfig classifier;
  ScheduleConfig schedule;

  /// Cross-checks the codec latent grid against the U-Net input.
  void validate() const;
  diffusion::NoiseSchedule make_noise_schedule() const;
};

void to_json(nlohmann::json& j, const ScheduleConfig& c);
void from_json(const nlohmann::json& j, ScheduleConfig& c);
void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

/// Read-only views of the networks stored in a checkpoint. Constructing one
/// validates every blob shape against the architecture and throws
/// models::BlobMismatchError naming the first offending blob.
struct Bundle {
  ModelConfig cfg;
  diffusion::NoiseSchedule schedule;
  double latent_scale = 0.0;
  std::optional<models::Codec<float>> codec;
  std::optional<models::UNet<float>> unet;
  std::optional<models::ControlBranch<float>> control;
  std::optional<models::Classifier<float>> classifier;

  /// Binds whatever the checkpoint's stage contains, using its own config echo
  /// unless `cfg` overrides it.
  static Bundle bind(Checkpoint& ckpt, const ModelConfig* cfg = nullptr);

  /// Latents -> images in [-1, 1] (undoes the latent scale).
  nn::Tensor<float> decode(const nn::Tensor<float>& z) const;

  /// n class-conditional samples decoded to images [n, 1, S, S]. A defined
  /// `mask` ([n, 1, S, S] in {0, 1}) routes through the control branch.
  nn::Tensor<float> generate(int class_id, const nn::Tensor<float>& mask,
                             const diffusion::SamplerConfig& sc, std::int64_t n) const;
};

}  // namespace usdiff::train
