#pragma once

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <string>

#include "fedloc/dataset.hpp"
#include "fedloc/experiment.hpp"
#include "fedloc/model.hpp"
#include "fedloc/rng.hpp"
#include "fedloc/synth.hpp"

namespace testing {

/// Full-size synthetic corpus, generated once per process.
inline const fedloc::SyntheticCorpus& corpus() {
  static const fedloc::SyntheticCorpus c = fedloc::generate_corpus();
  return c;
}

/// A smaller corpus for tests that train models.
inline const fedloc::SyntheticCorpus& small_corpus() {
  static const fedloc::SyntheticCorpus c = [] {
    fedloc::SynthConfig cfg;
    cfg.captures_per_point = 3;
    cfg.phase0_sessions_main = 8;
    cfg.phase1_sessions_main = 3;
    cfg.reference_points_per_floor = 60;
    return fedloc::generate_corpus(cfg);
  }();
  return c;
}

/// Directory holding the real corpus, or empty.
inline std::string real_data_root() {
  const char* env = std::getenv(fedloc::kDataRootEnv);
  if (!env || !*env) return {};
  if (!std::filesystem::exists(std::filesystem::path(env) / "trainingData.csv")) return {};
  return env;
}

inline fedloc::MlpArchitecture arch(std::vector<std::size_t> widths, fedloc::Head head,
                                    fedloc::Activation act = fedloc::Activation::relu) {
  fedloc::MlpArchitecture a;
  a.layer_widths = std::move(widths);
  a.output_head = head;
  a.hidden_activation = act;
  return a;
}

/// RSS-like features (mostly zeros, the rest in (0, 1]) and head-appropriate targets.
inline fedloc::Batch random_batch(const fedloc::MlpArchitecture& a, std::size_t rows,
                                  fedloc::Rng& rng, double density = 0.3) {
  fedloc::Batch b;
  b.features = fedloc::Matrix(rows, a.input_width());
  b.targets = fedloc::Matrix(rows, a.output_width());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < a.input_width(); ++c)
      if (rng.uniform() < density) b.features(r, c) = rng.uniform(0.01, 1.0);
    switch (a.output_head) {
      case fedloc::Head::linear:
        for (std::size_t k = 0; k < a.output_width(); ++k) b.targets(r, k) = rng.normal();
        break;
      case fedloc::Head::sigmoid:
        for (std::size_t k = 0; k < a.output_width(); ++k) b.targets(r, k) = rng.uniform() < 0.5 ? 1.0 : 0.0;
        break;
      case fedloc::Head::softmax:
        b.targets(r, rng.below(a.output_width())) = 1.0;
        break;
    }
  }
  return b;
}

/// Parameters with non-trivial biases so that every ReLU pattern occurs.
inline fedloc::ParameterVector random_params(const fedloc::MlpArchitecture& a, fedloc::Rng& rng,
                                             double scale = 1.0) {
  fedloc::ParameterVector p(a.param_count());
  for (std::size_t l = 0; l < a.depth(); ++l) {
    const double lim = scale / std::sqrt(static_cast<double>(a.layer_widths[l]));
    for (std::size_t i = a.weight_offset(l); i < a.bias_offset(l); ++i) p[i] = rng.uniform(-lim, lim);
    for (std::size_t i = a.bias_offset(l); i < a.layer_end(l); ++i) p[i] = rng.uniform(-0.3, 0.3);
  }
  return p;
}

}  // namespace testing
