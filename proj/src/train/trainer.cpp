#include "usdiff/train/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "usdiff/data/manifest.hpp"
#include "usdiff/diffusion/sampler.hpp"
#include "usdiff/numerics/ops.hpp"
#include "usdiff/numerics/rng.hpp"

namespace usdiff::train {

using nlohmann::json;
using TensorF = nn::Tensor<float>;

const char* stage_name(Stage s) {
  switch (s) {
    case Stage::codec: return "codec";
    case Stage::diffusion: return "diffusion";
    case Stage::control: return "control";
    case Stage::classifier: return "classifier";
  }
  return "?";
}

Stage parse_stage(const std::string& name) {
  for (auto s : {Stage::codec, Stage::diffusion, Stage::control, Stage::classifier})
    if (name == stage_name(s)) return s;
  throw std::invalid_argument("unknown stage '" + name + "' (expected codec|diffusion|control|classifier)");
}

void TrainConfig::validate() const {
  if (steps < 0) throw std::invalid_argument("config: steps must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
  if (lr && !(*lr >= 0)) throw std::invalid_argument("config: lr must be >= 0");
  if (!(condition_dropout >= 0 && condition_dropout < 1))
    throw std::invalid_argument("config: condition_dropout must be in [0, 1)");
  data::parse_split(split);
  model.validate();
}

double TrainConfig::learning_rate() const {
  if (lr) return *lr;
  return stage == Stage::codec || stage == Stage::classifier ? 1e-3 : 1e-4;
}

json TrainConfig::echo() const {
  return {{"stage", stage_name(stage)},         {"steps", steps},
          {"batch_size", batch_size},           {"lr", learning_rate()},
          {"seed", seed},                       {"condition_dropout", condition_dropout},
          {"split", split}};
}

void to_json(json& j, const TrainConfig& c) {
  j = c.echo();
  j["dataset"] = c.dataset;
  j["out"] = c.out;
  j["parent"] = c.parent;
  j["resume"] = c.resume;
  j["log"] = c.log;
  j["model"] = c.model;
}

void from_json(const json& j, TrainConfig& c) {
  static const std::set<std::string> known = {"stage", "steps", "batch_size", "lr", "seed",
                                              "condition_dropout", "dataset", "out", "parent",
                                              "resume", "log", "split", "model"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key())) throw std::invalid_argument("config: unknown key '" + it.key() + "'");
  c = TrainConfig{};
  if (j.contains("stage")) c.stage = parse_stage(j.at("stage").get<std::string>());
  c.steps = j.value("steps", c.steps);
  c.batch_size = j.value("batch_size", c.batch_size);
  if (j.contains("lr") && !j.at("lr").is_null()) c.lr = j.at("lr").get<double>();
  c.seed = j.value("seed", c.seed);
  c.condition_dropout = j.value("condition_dropout", c.condition_dropout);
  c.dataset = j.value("dataset", "");
  c.out = j.value("out", "");
  c.parent = j.value("parent", "");
  c.resume = j.value("resume", "");
  c.log = j.value("log", "");
  c.split = j.value("split", c.split);
  if (j.contains("model")) c.model = j.at("model").get<ModelConfig>();
}

std::vector<double> moving_average(const std::vector<double>& v, int w) {
  if (w < 1) throw std::invalid_argument("moving_average: window must be >= 1");
  std::vector<double> out(v.size());
  double acc = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    acc += v[i];
    if (i >= static_cast<std::size_t>(w)) acc -= v[i - w];
    out[i] = acc / static_cast<double>(std::min<std::size_t>(i + 1, w));
  }
  return out;
}

namespace {

const char* required_parent(Stage s) {
  switch (s) {
    case Stage::diffusion: return "codec";
    case Stage::control: return "diffusion";
    default: return nullptr;
  }
}

void copy_blobs(const nn::ParamStore<float>& from, nn::ParamStore<float>& to, bool frozen) {
  for (const auto& p : from.params()) {
    auto t = p.tensor.clone();
    t.set_requires_grad(!frozen);
    to.params().push_back({p.name, t, frozen});
  }
}

std::vector<std::string> merge_hashes(std::vector<std::string> a, const data::Dataset& d,
                                      const std::vector<std::size_t>& idx) {
  for (auto i : idx) a.push_back(d.samples[i].content_hash());
  std::sort(a.begin(), a.end());
  a.erase(std::unique(a.begin(), a.end()), a.end());
  return a;
}

TensorF gather(const TensorF& all, std::span<const std::size_t> idx) {
  auto shape = all.shape();
  const auto per = all.numel() / shape[0];
  shape[0] = static_cast<std::int64_t>(idx.size());
  TensorF out(shape);
  for (std::size_t b = 0; b < idx.size(); ++b)
    std::copy_n(all.data().data() + idx[b] * per, per, out.ptr() + b * per);
  return out;
}

// Encoder means of every training image, in train_idx order, divided by the
// latent scale when one is given.
TensorF encode_all(const models::Codec<float>& codec, const data::Dataset& d,
                   const std::vector<std::size_t>& idx, double scale) {
  nn::NoGradGuard ng;
  const auto& cfg = codec.config();
  const std::int64_t n = static_cast<std::int64_t>(idx.size());
  const std::int64_t ls = cfg.latent_size(), lc = cfg.latent_channels;
  TensorF out({n, lc, ls, ls});
  const std::int64_t per = lc * ls * ls;
  for (std::int64_t b = 0; b < n; b += 64) {
    const auto e = std::min<std::int64_t>(n, b + 64);
    std::vector<std::size_t> chunk(idx.begin() + b, idx.begin() + e);
    auto mu = codec.encode(data::image_batch(d, chunk)).mu;
    std::copy(mu.data().begin(), mu.data().end(), out.ptr() + b * per);
  }
  if (scale > 0)
    for (auto& v : out.data()) v = static_cast<float>(v / scale);
  return out;
}

}  // namespace

Checkpoint train_stage(const TrainConfig& cfg, const StageInputs& in,
                       const std::function<void(const StepLog&)>& on_step) {
  cfg.validate();
  if (!in.dataset) throw std::invalid_argument("train: no dataset");
  const auto& d = *in.dataset;
  const auto& idx = in.train_idx;
  if (idx.empty()) throw std::invalid_argument("train: empty training set");
  const std::string stage = stage_name(cfg.stage);

  Checkpoint ck;
  Rng rng(cfg.seed);
  if (in.resume) {
    if (in.resume->stage != stage) {
      throw DependencyError("stage mismatch: resume checkpoint is stage '" + in.resume->stage +
                            "', config stage is '" + stage + "'");
    }
    ck.stage = stage;
    ck.step = in.resume->step;
    ck.seed = in.resume->seed;
    ck.model = in.resume->model;
    ck.parent_hash = in.resume->parent_hash;
    ck.latent_scale = in.resume->latent_scale;
    ck.trained_on = in.resume->trained_on;
    copy_blobs(in.resume->params, ck.params, false);
    for (std::size_t i = 0; i < ck.params.params().size(); ++i) {
      auto& p = ck.params.params()[i];
      p.frozen = in.resume->params.params()[i].frozen;
      p.tensor.set_requires_grad(!p.frozen);
    }
    ck.optim = in.resume->optim;
    rng.deserialize(in.resume->rng_state);
    if (ck.step > cfg.steps) {
      throw DependencyError("resume checkpoint is at step " + std::to_string(ck.step) +
                            ", beyond configured steps " + std::to_string(cfg.steps));
    }
  } else {
    ck.stage = stage;
    ck.seed = cfg.seed;
    ModelConfig mc = cfg.model;
    if (const char* need = required_parent(cfg.stage)) {
      if (!in.parent) {
        throw DependencyError("missing parent: " + stage + " stage requires a " + need + " checkpoint");
      }
      if (in.parent->stage != need) {
        throw DependencyError("wrong parent: " + stage + " stage requires a " + std::string(need) +
                              " checkpoint, got '" + in.parent->stage + "'");
      }
      // Architecture of already trained parts comes from the parent.
      const auto pm = in.parent->model.get<ModelConfig>();
      mc.codec = pm.codec;
      if (cfg.stage == Stage::control) {
        mc.unet = pm.unet;
        mc.schedule = pm.schedule;
      }
      mc.validate();
      ck.parent_hash = in.parent->hash;
      ck.latent_scale = in.parent->latent_scale;
      ck.trained_on = in.parent->trained_on;
      copy_blobs(in.parent->params, ck.params, true);
    }
    ck.model = mc;
    // Initialization draws from a derived stream so the training stream
    // starts at the same state for every architecture.
    Rng init(Rng::derive(cfg.seed, 0xC0FFEE));
    models::Builder<float> root(ck.params, init);
    switch (cfg.stage) {
      case Stage::codec: models::Codec<float>(mc.codec, root.scope("codec")); break;
      case Stage::diffusion: models::UNet<float>(mc.unet, root.scope("unet")); break;
      case Stage::control: models::graft<float>(mc.unet, mc.codec.image_size, ck.params, init); break;
      case Stage::classifier: models::Classifier<float>(mc.classifier, root.scope("classifier")); break;
    }
    ck.params.set_frozen_prefix("codec.", cfg.stage != Stage::codec);
    ck.optim.init(ck.params);
    ck.trained_on = merge_hashes(ck.trained_on, d, idx);
  }
  ck.config = cfg.echo();
  ck.optim.lr = cfg.learning_rate();

  auto bundle = Bundle::bind(ck);
  const auto& mc = bundle.cfg;
  const bool latent_stage = cfg.stage == Stage::diffusion || cfg.stage == Stage::control;
  TensorF latents;
  if (latent_stage) {
    if (ck.latent_scale == 0.0) {
      ck.latent_scale = models::latent_scale(encode_all(*bundle.codec, d, idx, 0.0));
    }
    latents = encode_all(*bundle.codec, d, idx, ck.latent_scale);
  }
  const int T = mc.schedule.timesteps;
  const int B = cfg.batch_size;
  const int null_class = mc.unet.num_classes - 1;

  for (; ck.step < cfg.steps; ++ck.step) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::size_t> pick(B), sample_idx(B);
    for (int b = 0; b < B; ++b) {
      pick[b] = static_cast<std::size_t>(rng.below(idx.size()));
      sample_idx[b] = idx[pick[b]];
    }
    TensorF loss;
    switch (cfg.stage) {
      case Stage::codec: {
        auto x = data::image_batch(d, sample_idx);
        auto post = bundle.codec->encode(x);
        auto noise = rng.normal_tensor<float>(post.mu.shape());
        auto recon = bundle.codec->decode(models::reparameterize(post, noise));
        loss = models::codec_loss(x, recon, post, mc.codec.kl_weight);
        break;
      }
      case Stage::diffusion:
      case Stage::control: {
        auto z0 = gather(latents, pick);
        std::vector<int> t(B), cls(B);
        for (int b = 0; b < B; ++b) t[b] = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(T)));
        auto eps = rng.normal_tensor<float>(z0.shape());
        for (int b = 0; b < B; ++b) {
          const bool drop = rng.uniform() < cfg.condition_dropout;
          cls[b] = drop ? null_class : d.samples[sample_idx[b]].class_id;
        }
        auto zt = diffusion::q_sample(z0, std::span<const int>(t), eps, bundle.schedule);
        TensorF eps_hat;
        if (cfg.stage == Stage::diffusion) {
          eps_hat = (*bundle.unet)(zt, t, cls);
        } else {
          eps_hat = models::controlled_forward(*bundle.unet, *bundle.control, zt, t, cls,
                                               data::mask_batch(d, sample_idx));
        }
        loss = diffusion::diffusion_loss(eps, eps_hat);
        break;
      }
      case Stage::classifier: {
        auto x = data::image_batch(d, sample_idx);
        const auto S = mc.classifier.image_size;
        for (int b = 0; b < B; ++b) {
          if (rng.uniform() >= 0.5) continue;
          float* img = x.ptr() + static_cast<std::ptrdiff_t>(b) * S * S;
          for (int y = 0; y < S; ++y) std::reverse(img + y * S, img + (y + 1) * S);
        }
        const auto labels = data::label_batch(d, sample_idx);
        loss = nn::cross_entropy((*bundle.classifier)(x), labels);
        break;
      }
    }
    const double value = loss.data()[0];
    if (!std::isfinite(value)) {
      throw TrainingError("non-finite loss " + std::to_string(value) + " at step " + std::to_string(ck.step + 1) +
                          " of stage " + stage + "; aborting without writing a checkpoint");
    }
    loss.backward();
    nn::adam_step(ck.params, ck.optim);
    if (on_step) {
      const auto ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      on_step({ck.step + 1, value, ms});
    }
  }
  ck.rng_state = rng.serialize();
  encode_checkpoint(ck);
  return ck;
}

Checkpoint run_training(const TrainConfig& cfg) {
  cfg.validate();
  if (cfg.dataset.empty()) throw std::invalid_argument("config: dataset path is required");
  if (cfg.out.empty()) throw std::invalid_argument("config: out path is required");
  const auto d = data::load_manifest(cfg.dataset);
  StageInputs in;
  in.dataset = &d;
  in.train_idx = d.indices(data::parse_split(cfg.split));
  std::optional<Checkpoint> parent, resume;
  if (!cfg.resume.empty()) {
    resume = load_checkpoint(cfg.resume);
    in.resume = &*resume;
  } else if (required_parent(cfg.stage)) {
    if (cfg.parent.empty()) {
      throw DependencyError(std::string("missing parent: ") + stage_name(cfg.stage) + " stage requires a " +
                            required_parent(cfg.stage) + " checkpoint (set \"parent\")");
    }
    if (!std::filesystem::exists(cfg.parent)) throw DependencyError("missing parent: no checkpoint at " + cfg.parent);
    parent = load_checkpoint(cfg.parent);
    in.parent = &*parent;
  }
  const auto log_path = cfg.log.empty() ? cfg.out + ".log.jsonl" : cfg.log;
  std::ofstream log(log_path, resume ? std::ios::app : std::ios::trunc);
  if (!log) throw std::runtime_error("train: cannot open log " + log_path);
  auto ck = train_stage(cfg, in, [&](const StepLog& s) {
    log << json{{"stage", stage_name(cfg.stage)}, {"step", s.step}, {"loss", s.loss}, {"wall_ms", s.wall_ms}}.dump()
        << "\n";
    log.flush();
  });
  save_checkpoint(ck, cfg.out);
  return ck;
}

}  // namespace usdiff::train
