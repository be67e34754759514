#pragma once

#include <cstdint>
#include <nlohmann/json.hpp>
#include <stdexcept>
#include <string>

#include "usdiff/numerics/adam.hpp"
#include "usdiff/numerics/parameter.hpp"

namespace usdiff::train {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Load/verify failures. The message starts with a short machine-readable
/// kind: "version mismatch", "hash mismatch", "truncated", "bad magic",
/// "malformed header".
class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Everything one training stage produces. Byte layout is documented in
/// docs/checkpoint-format.md.
struct Checkpoint {
  std::string stage;  // codec | diffusion | control | classifier
  std::int64_t step = 0;
  std::uint64_t seed = 0;
  nlohmann::json config = nlohmann::json::object();  // training hyperparameters
  nlohmann::json model = nlohmann::json::object();   // architecture configs
  std::string parent_hash;
  double latent_scale = 0.0;
  std::string rng_state;
  /// Sorted content hashes of every sample any ancestor stage trained on.
  std::vector<std::string> trained_on;
  nn::ParamStore<float> params;
  nn::AdamState optim;  // moments parallel to params; frozen entries stay zero

  /// SHA-256 of the serialized bytes; set by save/encode/load.
  std::string hash;
};

std::string encode_checkpoint(Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

/// SHA-256 over the names, shapes and values of every blob whose name starts
/// with `prefix`, in store order.
std::string blob_hash(const nn::ParamStore<float>& params, const std::string& prefix);

}  // namespace usdiff::train
