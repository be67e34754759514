#include "usdiff/service/engine.hpp"

#include <algorithm>
#include <chrono>

#include "usdiff/data/dataset.hpp"
#include "usdiff/io/hash.hpp"
#include "usdiff/io/png.hpp"

namespace usdiff::service {

using nlohmann::json;

namespace {

template <typename T>
T field_as(const json& body, const char* key, const char* type) {
  try {
    return body.at(key).get<T>();
  } catch (const json::exception&) {
    throw RequestError(key, std::string("must be ") + type);
  }
}

}  // namespace

GenerationRequest parse_request(const json& body, int image_size, int max_timestep, std::uint64_t fallback_seed) {
  if (!body.is_object()) throw RequestError("body", "must be a JSON object");
  static const char* known[] = {"prompt", "class_id", "mask", "sampler", "steps", "guidance", "eta", "seed", "count"};
  for (auto it = body.begin(); it != body.end(); ++it) {
    if (std::find_if(std::begin(known), std::end(known), [&](const char* k) { return it.key() == k; }) == std::end(known))
      throw RequestError(it.key(), "unknown field");
  }
  GenerationRequest r;
  const bool has_prompt = body.contains("prompt"), has_class = body.contains("class_id");
  if (has_prompt == has_class) throw RequestError("prompt", "exactly one of prompt or class_id is required");
  if (has_prompt) {
    r.prompt = field_as<std::string>(body, "prompt", "a string");
    try {
      r.class_id = data::prompt_to_class(r.prompt);
    } catch (const std::invalid_argument& e) {
      throw RequestError("prompt", e.what());
    }
  } else {
    if (!body.at("class_id").is_number_integer()) throw RequestError("class_id", "must be an integer");
    r.class_id = body.at("class_id").get<int>();
    if (r.class_id < 0 || r.class_id > 2) throw RequestError("class_id", "must be 0, 1 or 2");
  }
  if (body.contains("sampler")) {
    r.sampler = field_as<std::string>(body, "sampler", "a string");
    if (r.sampler != "ddim" && r.sampler != "ddpm") throw RequestError("sampler", "must be ddim or ddpm");
  }
  if (body.contains("steps")) {
    if (!body.at("steps").is_number_integer()) throw RequestError("steps", "must be an integer");
    r.steps = body.at("steps").get<int>();
    if (r.steps < 1 || r.steps > max_timestep)
      throw RequestError("steps", "must be in [1, " + std::to_string(max_timestep) + "]");
  }
  if (body.contains("guidance")) {
    if (!body.at("guidance").is_number()) throw RequestError("guidance", "must be a number");
    r.guidance = body.at("guidance").get<double>();
    if (!(r.guidance >= 0 && r.guidance <= 50)) throw RequestError("guidance", "must be in [0, 50]");
  }
  if (body.contains("eta")) {
    if (!body.at("eta").is_number()) throw RequestError("eta", "must be a number");
    r.eta = body.at("eta").get<double>();
    if (!(r.eta >= 0 && r.eta <= 1)) throw RequestError("eta", "must be in [0, 1]");
  }
  if (body.contains("count")) {
    if (!body.at("count").is_number_integer()) throw RequestError("count", "must be an integer");
    r.count = body.at("count").get<int>();
    if (r.count < 1 || r.count > kMaxCount) throw RequestError("count", "must be in [1, 16]");
  }
  r.seed = fallback_seed;
  if (body.contains("seed")) {
    const auto& s = body.at("seed");
    if (!s.is_number_integer() || (!s.is_number_unsigned() && s.get<std::int64_t>() < 0))
      throw RequestError("seed", "must be a non-negative integer");
    r.seed = body.at("seed").get<std::uint64_t>();
  }
  if (body.contains("mask") && !body.at("mask").is_null()) {
    r.mask_png = field_as<std::string>(body, "mask", "a base64 PNG string");
    io::Gray8 g;
    try {
      g = io::decode_png(io::base64_decode(r.mask_png));
    } catch (const std::exception& e) {
      throw RequestError("mask", std::string("not a base64-encoded PNG (") + e.what() + ")");
    }
    if (g.width != image_size || g.height != image_size) {
      throw RequestError("mask", "must be " + std::to_string(image_size) + "x" + std::to_string(image_size) + ", got " +
                                     std::to_string(g.width) + "x" + std::to_string(g.height));
    }
    std::vector<float> m(g.pixels.size());
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = g.pixels[i] >= 128 ? 1.0f : 0.0f;
    r.mask = std::move(m);
  }
  return r;
}

json request_echo(const GenerationRequest& r) {
  json j = {{"class_id", r.class_id}, {"class", data::class_name(r.class_id)},
            {"sampler", r.sampler},   {"steps", r.steps},
            {"guidance", r.guidance}, {"eta", r.eta},
            {"seed", r.seed},         {"count", r.count}};
  if (!r.prompt.empty()) j["prompt"] = r.prompt;
  j["mask"] = r.mask ? json(r.mask_png) : json(nullptr);
  return j;
}

GenerationEngine::GenerationEngine(const std::string& diffusion_path, const std::string& control_path) {
  if (diffusion_path.empty() && control_path.empty())
    throw std::invalid_argument("engine: no diffusion or control checkpoint given");
  if (!control_path.empty()) {
    control_ckpt_ = std::make_unique<train::Checkpoint>(train::load_checkpoint(control_path));
    if (control_ckpt_->stage != "control")
      throw std::invalid_argument("engine: " + control_path + " is a " + control_ckpt_->stage + " checkpoint, not control");
    control_ = std::make_unique<train::Bundle>(train::Bundle::bind(*control_ckpt_));
    control_hash_ = control_ckpt_->hash;
  }
  if (!diffusion_path.empty()) {
    base_ckpt_ = std::make_unique<train::Checkpoint>(train::load_checkpoint(diffusion_path));
    if (base_ckpt_->stage != "diffusion")
      throw std::invalid_argument("engine: " + diffusion_path + " is a " + base_ckpt_->stage + " checkpoint, not diffusion");
    base_ = std::make_unique<train::Bundle>(train::Bundle::bind(*base_ckpt_));
    diffusion_hash_ = base_ckpt_->hash;
    if (control_ && control_ckpt_->parent_hash != diffusion_hash_)
      throw std::invalid_argument("engine: control checkpoint was not grafted onto this diffusion checkpoint");
  } else {
    base_ = std::make_unique<train::Bundle>(train::Bundle::bind(*control_ckpt_));
    base_->control.reset();
    diffusion_hash_ = control_ckpt_->parent_hash;
  }
}

GenerationResult GenerationEngine::generate(const GenerationRequest& req) const {
  if (req.mask && !control_) throw ControlUnavailable("mask supplied but no control checkpoint is loaded");
  const auto S = image_size();
  diffusion::SamplerConfig sc;
  sc.kind = diffusion::parse_sampler_kind(req.sampler);
  sc.steps = req.steps;
  sc.eta = req.eta;
  sc.guidance_scale = req.guidance;
  sc.seed = req.seed;

  const auto t0 = std::chrono::steady_clock::now();
  nn::Tensor<float> images;
  if (req.mask) {
    if (req.mask->size() != static_cast<std::size_t>(S) * S) throw RequestError("mask", "wrong size");
    nn::Tensor<float> hint({req.count, 1, S, S});
    for (int i = 0; i < req.count; ++i) std::copy(req.mask->begin(), req.mask->end(), hint.ptr() + i * S * S);
    images = control_->generate(req.class_id, hint, sc, req.count);
  } else {
    images = base_->generate(req.class_id, {}, sc, req.count);
  }
  const auto t1 = std::chrono::steady_clock::now();
  GenerationResult r;
  r.seed_used = req.seed;
  const auto px = static_cast<std::size_t>(S) * S;
  for (int i = 0; i < req.count; ++i) {
    r.png.push_back(io::encode_png(data::image_to_gray8(images.data().subspan(i * px, px), S)));
  }
  const auto t2 = std::chrono::steady_clock::now();
  r.sampling_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  r.encode_ms = std::chrono::duration<double, std::milli>(t2 - t1).count();
  return r;
}

json GenerationEngine::meta() const {
  json classes = json::array();
  for (int c = 0; c < data::kNumClasses; ++c) {
    classes.push_back({{"id", c},
                       {"name", data::class_name(c)},
                       {"prompt", std::string("Ultrasound image of a ") + data::class_name(c) + " breast"}});
  }
  return {{"classes", classes},
          {"image_size", image_size()},
          {"control_available", control_available()},
          {"max_count", kMaxCount},
          {"max_steps", max_timestep()},
          {"defaults", {{"sampler", "ddim"}, {"steps", 50}, {"guidance", 3.0}, {"eta", 0.0}, {"count", 1}}}};
}

}  // namespace usdiff::service
