#pragma once

#include <cstdint>
#include <span>

#include "bipc/matrix.hpp"
#include "bipc/model.hpp"

namespace bipc::metrics {

/// Fraction of positions where the two label vectors agree.
double accuracy(std::span<const int> predictions, std::span<const int> labels);

/// Proxy A-distance 2(1 - 2 err) of a logistic domain probe, clamped to [0, 2].
/// Each domain is split in half (train / held-out) from `seed`; the probe is
/// fit on standardised train rows by full-batch gradient descent and `err`
/// is its held-out error. The two arguments are put in a canonical order
/// first, so swapping them gives the same value.
double proxy_a_distance(const Matrix& space_s, const Matrix& space_t, std::uint64_t seed);

struct Fig1Distances {
  double feature_distance = 0.0;
  double probability_distance = 0.0;
};

/// Proxy A-distance between domains on backbone features and on the
/// pretrained head's probabilities, using the same probe seed.
Fig1Distances fig1_analog(const model::ParamGroups& params, const Matrix& inputs_s,
                          const Matrix& inputs_t, std::uint64_t seed);

}  // namespace bipc::metrics
