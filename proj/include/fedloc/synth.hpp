#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedloc/dataset.hpp"

namespace fedloc {

/// Parameters of the synthetic UJIIndoorLoc-format corpus generator.
///
/// Three buildings with disjoint WAP ranges. Each floor has a fixed set of
/// reference points; a survey session is one (user, phone) pair capturing
/// several samples at a subset of the points of one floor. RSS follows a
/// log-distance path-loss model with per-floor attenuation, a spatially
/// correlated shadowing field per AP, and per-sample fading. Phones differ
/// in gain, offset, sensitivity and a per-AP response. Sessions belong to
/// one of two survey phases about a month apart; between them some APs are
/// relocated or switched off and the shadowing field changes.
struct SynthConfig {
  std::uint64_t seed = 2013;
  std::vector<int> floors_per_building{4, 4, 5};
  std::vector<int> waps_per_building{160, 180, 180};  // sums to 520
  double building_width_m = 160.0;
  double building_depth_m = 100.0;
  double floor_height_m = 3.5;
  int reference_points_per_floor = 110;

  // Sessions per floor in building 1 / in other buildings.
  int phase0_sessions_main = 10;
  int phase1_sessions_main = 3;
  int validation_sessions_main = 2;
  int phase0_sessions_other = 4;
  int phase1_sessions_other = 1;
  int validation_sessions_other = 1;
  int main_building = 1;
  int points_per_session_min = 10;
  int points_per_session_max = 30;
  int captures_per_point = 10;

  int phones = 25;
  int users = 18;

  // Radio model (dBm, meters).
  double tx_power_mean = -38.0;
  double tx_power_sd = 4.0;
  double path_loss_exponent_min = 2.7;
  double path_loss_exponent_max = 3.2;
  double floor_attenuation_db = 3.0;  // keeps floor classification short of trivial
  double shadowing_sd_db = 4.0;
  double fading_sd_db = 3.0;
  double dropout_probability = 0.05;

  // Device heterogeneity.
  double device_gain_min = 0.75;
  double device_gain_max = 1.25;
  double device_offset_db = 12.0;  // uniform in [-x, x]
  double device_ap_response_sd_min = 4.0;
  double device_ap_response_sd_max = 8.0;
  double sensitivity_min = -102.0;
  double sensitivity_max = -92.0;

  // Environmental variation between phases.
  double relocated_ap_fraction = 0.2;
  double removed_ap_fraction = 0.05;
  double phase1_shadowing_sd_db = 3.0;

  std::int64_t phase0_start = 1369900000;  // 2013-05-30
  double phase0_days = 12.0;
  double phase1_offset_days = 30.0;
  double phase1_days = 12.0;
  double validation_offset_days = 14.0;  // validation uses phase-0 radio conditions
};

struct SyntheticCorpus {
  FingerprintSet training;
  FingerprintSet validation;
};

SyntheticCorpus generate_corpus(const SynthConfig& cfg = {});

/// Writes trainingData.csv and validationData.csv into `dir`.
void write_synthetic_corpus(const std::string& dir, const SynthConfig& cfg = {});

}  // namespace fedloc
