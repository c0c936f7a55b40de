#pragma once

#include <cstdint>

#include "patternkit/dataset.hpp"

namespace patternkit {

// Synthetic clinical-style dataset: 10 covariates, 23 observed missingness
// patterns over five incompletely recorded columns, linear outcome on a
// 0-100-ish score scale. Deterministic in the seed.
//
// `mnary_shift` adds 25 to the outcome of every record missing the first
// covariate (pafi), turning the mechanism into a strong MNARY one.
struct SupportSynthOptions {
  int n = 4000;
  std::uint64_t seed = 904811;
  bool mnary_shift = false;
};

Dataset make_support_synth(const SupportSynthOptions& options = {});

}  // namespace patternkit
