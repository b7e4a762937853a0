#pragma once

#include <array>
#include <vector>

#include "fedloc/dataset.hpp"
#include "fedloc/model.hpp"

namespace fedloc {

/// |set| x 520 matrix of normalize_rss features.
Matrix encode_features(const FingerprintSet& set, const NormalizationSpec& spec);

/// Features plus normalized (longitude, latitude) targets.
Batch make_regression_batch(const FingerprintSet& set, const NormalizationSpec& spec);

/// Features plus one-hot floor targets of width `floors`.
Batch make_floor_batch(const FingerprintSet& set, const NormalizationSpec& spec,
                       std::size_t floors);

/// Index of the largest entry; ties go to the lowest index.
std::size_t argmax(std::span<const double> values);

/// Pre-encoded evaluation material.
struct EvalData {
  Matrix features;
  std::vector<std::array<double, 2>> positions;  // meters
  std::vector<int> floors;
  NormalizationSpec norm;

  std::size_t size() const { return features.rows; }
};

EvalData make_eval_data(const FingerprintSet& holdout, const NormalizationSpec& spec);

}  // namespace fedloc
