#include "fedloc/encoding.hpp"

#include <stdexcept>

namespace fedloc {

Matrix encode_features(const FingerprintSet& set, const NormalizationSpec& spec) {
  Matrix m(set.size(), kNumWaps);
  for (std::size_t r = 0; r < set.size(); ++r) {
    auto row = m.row(r);
    const auto& rss = set.records[r].rss;
    for (std::size_t i = 0; i < kNumWaps; ++i) row[i] = normalize_rss(rss[i], spec);
  }
  return m;
}

Batch make_regression_batch(const FingerprintSet& set, const NormalizationSpec& spec) {
  Batch b;
  b.features = encode_features(set, spec);
  b.targets = Matrix(set.size(), 2);
  for (std::size_t r = 0; r < set.size(); ++r) {
    const auto& rec = set.records[r];
    const auto t = normalize_target(rec.longitude, rec.latitude, spec);
    b.targets(r, 0) = t[0];
    b.targets(r, 1) = t[1];
  }
  return b;
}

Batch make_floor_batch(const FingerprintSet& set, const NormalizationSpec& spec,
                       std::size_t floors) {
  Batch b;
  b.features = encode_features(set, spec);
  b.targets = Matrix(set.size(), floors);
  for (std::size_t r = 0; r < set.size(); ++r) {
    const int f = set.records[r].floor;
    if (f < 0 || static_cast<std::size_t>(f) >= floors)
      throw std::invalid_argument("floor " + std::to_string(f) + " outside [0, " +
                                  std::to_string(floors) + ")");
    b.targets(r, static_cast<std::size_t>(f)) = 1.0;
  }
  return b;
}

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

EvalData make_eval_data(const FingerprintSet& holdout, const NormalizationSpec& spec) {
  EvalData e;
  e.features = encode_features(holdout, spec);
  e.norm = spec;
  for (const auto& r : holdout.records) {
    e.positions.push_back({r.longitude, r.latitude});
    e.floors.push_back(r.floor);
  }
  return e;
}

}  // namespace fedloc
