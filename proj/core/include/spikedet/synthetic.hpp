#pragma once

#include <cstdint>

#include "spikedet/dataset.hpp"

namespace spikedet {

// Synthetic detection scene: one colored shape (disc / rectangle / triangle)
// on a noisy background, 3 x 64 x 64.
using SyntheticScene = LabeledImage;

inline constexpr int kSyntheticClassCount = 3;
inline constexpr int kSyntheticImageSize = 64;

const char* synthetic_class_name(int class_id);

// Deterministic given the seed. Classes are balanced to within one scene of
// n / 3 each.
std::vector<SyntheticScene> generate_synthetic_dataset(int n, std::uint64_t seed);

} // namespace spikedet
