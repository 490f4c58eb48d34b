#pragma once

#include <cstdint>

#include "cgdetect/resnet.hpp"
#include "cgdetect/tensor.hpp"
#include "cgdetect/weights_io.hpp"

namespace cgd {

// Deterministic reference weight container covering the full architecture
// table: He-uniform convolution kernels and near-identity batch-norm
// statistics, one SplitMix64 substream per tensor keyed by (seed, name).
// Used for smoke runs without a converted checkpoint and as the basis of
// the reference activation fixture (see docs/conversion.md).
WeightStore synth_reference_weights(std::uint64_t seed);

// Deterministic (n,3,224,224) input batch, uniform in [-120, 135], roughly
// the range of mean-subtracted 8-bit pixels.
Tensor synth_reference_input(std::uint64_t seed, int n = 1);

} // namespace cgd
