#pragma once

#include <cstdint>
#include <memory>
#include <nlohmann/json.hpp>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "usdiff/train/bundle.hpp"

namespace usdiff::service {

inline constexpr int kMaxCount = 16;

/// Invalid request; `field` names the offending request key.
class RequestError : public std::invalid_argument {
 public:
  RequestError(std::string field, const std::string& what)
      : std::invalid_argument(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

/// A mask was supplied but no control checkpoint is loaded.
class ControlUnavailable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GenerationRequest {
  int class_id = 0;
  std::string prompt;                // echo only; class_id is authoritative
  std::optional<std::vector<float>> mask;  // S*S values in {0, 1}
  std::string mask_png;              // base64 as received, for the metadata echo
  std::string sampler = "ddim";
  int steps = 50;
  double guidance = 3.0;
  double eta = 0.0;
  std::uint64_t seed = 0;
  int count = 1;
};

/// Validates a JSON body. Exactly one of "prompt" / "class_id" is required;
/// "mask" is a base64 PNG of image_size x image_size binarized at 0.5; a
/// missing "seed" is filled from `fallback_seed`. Throws RequestError.
GenerationRequest parse_request(const nlohmann::json& body, int image_size, int max_timestep,
                                std::uint64_t fallback_seed);

nlohmann::json request_echo(const GenerationRequest& r);

struct GenerationResult {
  std::vector<std::string> png;  // encoded 8-bit grayscale PNG files
  std::uint64_t seed_used = 0;
  double sampling_ms = 0.0;
  double encode_ms = 0.0;
};

/// Read-only generation state shared by the CLI and the HTTP service. One
/// implementation serves both, so equal requests give equal bytes.
class GenerationEngine {
 public:
  /// Either path may be empty, not both. A control checkpoint alone also
  /// serves unmasked requests through its frozen base.
  GenerationEngine(const std::string& diffusion_path, const std::string& control_path);

  GenerationResult generate(const GenerationRequest& req) const;

  int image_size() const { return base_->cfg.codec.image_size; }
  int max_timestep() const { return base_->cfg.schedule.timesteps; }
  bool control_available() const { return control_ != nullptr; }
  const std::string& diffusion_hash() const { return diffusion_hash_; }
  const std::string& control_hash() const { return control_hash_; }
  nlohmann::json meta() const;

 private:
  std::unique_ptr<train::Checkpoint> base_ckpt_, control_ckpt_;
  std::unique_ptr<train::Bundle> base_, control_;
  std::string diffusion_hash_, control_hash_;
};

}  // namespace usdiff::service
