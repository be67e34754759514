#pragma once

#include <cstdint>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

namespace usdiff::eval {

struct CheckResult {
  std::string name;
  bool passed = false;
  double value = 0.0;      // worst observed error
  double tolerance = 0.0;
  std::string detail;
};

void to_json(nlohmann::json& j, const CheckResult& r);

struct VerifyOptions {
  std::uint64_t seed = 0;
  int grad_seeds = 20;          // seeds per op in the grad check sweep
  int zero_conv_trials = 100;
};

/// Grad checks (every op plus the codec and U-Net loss graphs), schedule
/// identities, zero-conv identity and a checkpoint round trip.
std::vector<CheckResult> run_invariant_suite(const VerifyOptions& opt);

/// Loads `path` (validating the trailer hash) and binds every network it
/// holds. Throws on the first problem.
CheckResult verify_checkpoint_file(const std::string& path);

}  // namespace usdiff::eval
