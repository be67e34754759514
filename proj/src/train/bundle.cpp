#include "usdiff/train/bundle.hpp"

#include <stdexcept>

#include "usdiff/numerics/ops.hpp"

namespace usdiff::train {

using nlohmann::json;

void ModelConfig::validate() const {
  codec.validate();
  unet.validate();
  classifier.validate();
  if (codec.latent_channels != unet.in_channels)
    throw std::invalid_argument("model: codec.latent_channels must equal unet.in_channels");
  if (codec.latent_size() != unet.latent_size)
    throw std::invalid_argument("model: codec latent size must equal unet.latent_size");
  if (schedule.timesteps != unet.max_timestep)
    throw std::invalid_argument("model: schedule.timesteps must equal unet.max_timestep");
}

diffusion::NoiseSchedule ModelConfig::make_noise_schedule() const {
  return diffusion::make_schedule(schedule.timesteps, schedule.beta_start, schedule.beta_end);
}

void to_json(json& j, const ScheduleConfig& c) {
  j = {{"timesteps", c.timesteps}, {"beta_start", c.beta_start}, {"beta_end", c.beta_end}};
}

void from_json(const json& j, ScheduleConfig& c) {
  c = ScheduleConfig{};
  c.timesteps = j.value("timesteps", c.timesteps);
  c.beta_start = j.value("beta_start", c.beta_start);
  c.beta_end = j.value("beta_end", c.beta_end);
}

void to_json(json& j, const ModelConfig& c) {
  j = {{"codec", c.codec}, {"unet", c.unet}, {"classifier", c.classifier}, {"schedule", c.schedule}};
}

void from_json(const json& j, ModelConfig& c) {
  c = ModelConfig{};
  if (j.contains("codec")) c.codec = j.at("codec").get<models::CodecConfig>();
  if (j.contains("unet")) c.unet = j.at("unet").get<models::UNetConfig>();
  if (j.contains("classifier")) c.classifier = j.at("classifier").get<models::ClassifierConfig>();
  if (j.contains("schedule")) c.schedule = j.at("schedule").get<ScheduleConfig>();
}

Bundle Bundle::bind(Checkpoint& ckpt, const ModelConfig* cfg) {
  Bundle b;
  b.cfg = cfg ? *cfg : ckpt.model.get<ModelConfig>();
  b.cfg.validate();
  b.schedule = b.cfg.make_noise_schedule();
  b.latent_scale = ckpt.latent_scale;
  models::Builder<float> root(ckpt.params);
  const auto& st = ckpt.stage;
  if (st == "codec" || st == "diffusion" || st == "control") b.codec.emplace(b.cfg.codec, root.scope("codec"));
  if (st == "diffusion" || st == "control") b.unet.emplace(b.cfg.unet, root.scope("unet"));
  if (st == "control") b.control.emplace(b.cfg.unet, b.cfg.codec.image_size, root.scope("control"));
  if (st == "classifier") b.classifier.emplace(b.cfg.classifier, root.scope("classifier"));
  if (st != "codec" && st != "diffusion" && st != "control" && st != "classifier")
    throw std::invalid_argument("checkpoint: unknown stage '" + st + "'");
  return b;
}

nn::Tensor<float> Bundle::decode(const nn::Tensor<float>& z) const {
  if (!codec) throw std::logic_error("bundle: no codec bound");
  return codec->decode(nn::scale(z, static_cast<float>(latent_scale)));
}

nn::Tensor<float> Bundle::generate(int class_id, const nn::Tensor<float>& mask,
                                   const diffusion::SamplerConfig& sc, std::int64_t n) const {
  if (!unet || !codec) throw std::logic_error("bundle: generation needs a diffusion or control checkpoint");
  if (mask.defined() && !control) throw std::logic_error("bundle: mask given but no control branch bound");
  if (class_id < 0 || class_id >= cfg.unet.num_classes - 1)
    throw std::invalid_argument("generate: class_id must be in [0, " + std::to_string(cfg.unet.num_classes - 2) + "]");
  diffusion::DenoiseFn fn = [this](const nn::Tensor<float>& z, int t, std::span<const int> cls,
                                   const nn::Tensor<float>& hint) {
    std::vector<int> ts(static_cast<std::size_t>(z.dim(0)), t);
    if (hint.defined()) return models::controlled_forward(*unet, *control, z, ts, cls, hint);
    return (*unet)(z, ts, cls);
  };
  const auto ls = cfg.unet.latent_size;
  nn::NoGradGuard ng;
  auto z = diffusion::sample(fn, schedule, sc, class_id, mask, n, {cfg.unet.in_channels, ls, ls});
  return decode(z);
}

}  // namespace usdiff::train
