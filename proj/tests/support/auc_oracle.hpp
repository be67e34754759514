#pragma once

// Exhaustive pair counting: for each class, every (positive, negative) pair
// scores 1 if the positive ranks higher, 1/2 on a tie.

#include <array>
#include <vector>

#include "usdiff/eval/metrics.hpp"
#include "usdiff/numerics/rng.hpp"

namespace usdiff::testing {

inline eval::AucResult auc_pair_oracle(const std::vector<eval::Scores3>& s, const std::vector<int>& y) {
  eval::AucResult r;
  double sum = 0;
  int used = 0;
  for (int c = 0; c < 3; ++c) {
    double wins = 0;
    double pairs = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (y[i] != c) continue;
      for (std::size_t j = 0; j < s.size(); ++j) {
        if (y[j] == c) continue;
        pairs += 1;
        if (s[i][c] > s[j][c]) wins += 1;
        else if (s[i][c] == s[j][c]) wins += 0.5;
      }
    }
    if (pairs == 0) continue;
    r.per_class[c] = wins / pairs;
    r.included[c] = true;
    sum += r.per_class[c];
    ++used;
  }
  r.macro = used ? sum / used : 0.0;
  return r;
}

/// Small instance with scores drawn from a coarse grid so ties are common.
inline void random_auc_instance(Rng& rng, std::vector<eval::Scores3>& s, std::vector<int>& y) {
  const int n = 2 + static_cast<int>(rng.below(19));
  const int levels = 1 + static_cast<int>(rng.below(6));
  s.assign(n, {});
  y.assign(n, 0);
  do {
    for (int i = 0; i < n; ++i) {
      y[i] = static_cast<int>(rng.below(3));
      for (auto& v : s[i]) v = static_cast<double>(rng.below(levels)) / levels;
    }
  } while ([&] {
    for (int i = 1; i < n; ++i)
      if (y[i] != y[0]) return false;
    return true;
  }());
}

}  // namespace usdiff::testing
