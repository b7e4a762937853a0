#include "fedloc/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <stdexcept>

#include "fedloc/rng.hpp"

namespace fedloc {

namespace {

constexpr double kTwoPi = 6.283185307179586;
constexpr double kLatitudeBase = 4864000.0;
constexpr double kBuildingWallDb = 25.0;

struct Wave {
  double kx, ky, phase, amp;
};

std::vector<Wave> make_texture(Rng& rng, int components, double sd) {
  std::vector<Wave> w;
  const double amp_scale = sd * std::sqrt(2.0 / components);
  for (int k = 0; k < components; ++k) {
    const double wavelength = rng.uniform(6.0, 25.0);
    const double angle = rng.uniform(0.0, kTwoPi);
    w.push_back({std::cos(angle) * kTwoPi / wavelength, std::sin(angle) * kTwoPi / wavelength,
                 rng.uniform(0.0, kTwoPi), rng.normal() * amp_scale});
  }
  return w;
}

double texture_at(const std::vector<Wave>& waves, double x, double y) {
  double s = 0.0;
  for (const auto& w : waves) s += w.amp * std::cos(w.kx * x + w.ky * y + w.phase);
  return s;
}

struct AccessPoint {
  int building = 0;
  int floor = 0;
  double x = 0.0, y = 0.0;  // global meters (longitude, latitude - base)
  double tx = 0.0;
  double exponent = 3.0;
  std::vector<Wave> texture;
  // Second survey phase.
  double x1 = 0.0, y1 = 0.0;
  bool removed = false;
  std::vector<Wave> texture1;
};

struct Phone {
  double gain, offset, sensitivity;
  std::vector<double> response;  // per WAP
};

struct Footprint {
  double x0, y0;  // south-west corner, global meters
};

struct ReferencePoint {
  double x, y;
  int space_id, relative_position;
};

Footprint footprint(int building) {
  static const Footprint fp[] = {{-7700.0, 900.0}, {-7600.0, 790.0}, {-7450.0, 740.0}};
  return fp[std::min(building, 2)];
}

}  // namespace

SyntheticCorpus generate_corpus(const SynthConfig& cfg) {
  const int buildings = static_cast<int>(cfg.floors_per_building.size());
  if (buildings == 0 || buildings > 3 ||
      cfg.waps_per_building.size() != cfg.floors_per_building.size())
    throw std::invalid_argument("synth: 1 to 3 buildings with matching WAP counts required");
  if (std::accumulate(cfg.waps_per_building.begin(), cfg.waps_per_building.end(), 0) !=
      static_cast<int>(kNumWaps))
    throw std::invalid_argument("synth: WAP counts must sum to 520");
  for (int f : cfg.floors_per_building)
    if (f < 1 || f > 5) throw std::invalid_argument("synth: floors per building must be 1..5");
  if (cfg.phones < 1 || cfg.points_per_session_min < 1 ||
      cfg.points_per_session_max < cfg.points_per_session_min || cfg.captures_per_point < 1)
    throw std::invalid_argument("synth: invalid session shape");

  Rng world(mix_seed(cfg.seed, 1));

  // Access points.
  std::vector<AccessPoint> aps;
  aps.reserve(kNumWaps);
  for (int b = 0; b < buildings; ++b) {
    const Footprint fp = footprint(b);
    for (int i = 0; i < cfg.waps_per_building[static_cast<std::size_t>(b)]; ++i) {
      AccessPoint ap;
      ap.building = b;
      ap.floor = i % cfg.floors_per_building[static_cast<std::size_t>(b)];
      ap.x = fp.x0 + world.uniform(0.0, cfg.building_width_m);
      ap.y = fp.y0 + world.uniform(0.0, cfg.building_depth_m);
      ap.tx = world.normal(cfg.tx_power_mean, cfg.tx_power_sd);
      ap.exponent = world.uniform(cfg.path_loss_exponent_min, cfg.path_loss_exponent_max);
      ap.texture = make_texture(world, 5, cfg.shadowing_sd_db);
      const double u = world.uniform();
      ap.removed = u < cfg.removed_ap_fraction;
      if (u >= cfg.removed_ap_fraction && u < cfg.removed_ap_fraction + cfg.relocated_ap_fraction) {
        ap.x1 = fp.x0 + world.uniform(0.0, cfg.building_width_m);
        ap.y1 = fp.y0 + world.uniform(0.0, cfg.building_depth_m);
      } else {
        ap.x1 = ap.x;
        ap.y1 = ap.y;
      }
      ap.texture1 = make_texture(world, 3, cfg.phase1_shadowing_sd_db);
      aps.push_back(std::move(ap));
    }
  }

  // Phones.
  std::vector<Phone> phones;
  for (int p = 0; p < cfg.phones; ++p) {
    Rng prng(mix_seed(cfg.seed, 2, static_cast<std::uint64_t>(p)));
    Phone ph;
    ph.gain = prng.uniform(cfg.device_gain_min, cfg.device_gain_max);
    ph.offset = prng.uniform(-cfg.device_offset_db, cfg.device_offset_db);
    ph.sensitivity = prng.uniform(cfg.sensitivity_min, cfg.sensitivity_max);
    const double sd = prng.uniform(cfg.device_ap_response_sd_min, cfg.device_ap_response_sd_max);
    ph.response.resize(kNumWaps);
    for (auto& r : ph.response) r = prng.normal(0.0, sd);
    phones.push_back(std::move(ph));
  }

  // Reference points per (building, floor).
  std::vector<std::vector<std::vector<ReferencePoint>>> points(static_cast<std::size_t>(buildings));
  for (int b = 0; b < buildings; ++b) {
    const Footprint fp = footprint(b);
    for (int f = 0; f < cfg.floors_per_building[static_cast<std::size_t>(b)]; ++f) {
      std::vector<ReferencePoint> pts;
      for (int i = 0; i < cfg.reference_points_per_floor; ++i) {
        // Round to centimeters so CSV round trips are exact.
        const double x = std::round((fp.x0 + world.uniform(0.0, cfg.building_width_m)) * 100.0) / 100.0;
        const double y = std::round((fp.y0 + world.uniform(0.0, cfg.building_depth_m)) * 100.0) / 100.0;
        pts.push_back({x, y, 100 + i / 2, 1 + i % 2});
      }
      points[static_cast<std::size_t>(b)].push_back(std::move(pts));
    }
  }

  auto measure = [&](Rng& rng, const Phone& phone, int building, int floor, double x, double y,
                     int phase, FingerprintRecord& rec) {
    for (std::size_t i = 0; i < kNumWaps; ++i) {
      const AccessPoint& ap = aps[i];
      rec.rss[i] = static_cast<std::int16_t>(kRssNotDetected);
      if (phase == 1 && ap.removed) continue;
      const double ax = phase == 1 ? ap.x1 : ap.x;
      const double ay = phase == 1 ? ap.y1 : ap.y;
      const double dz = (floor - ap.floor) * cfg.floor_height_m;
      const double d = std::max(1.0, std::sqrt((x - ax) * (x - ax) + (y - ay) * (y - ay) + dz * dz));
      double rss = ap.tx - 10.0 * ap.exponent * std::log10(d) -
                   cfg.floor_attenuation_db * std::abs(floor - ap.floor) +
                   texture_at(ap.texture, x, y);
      if (ap.building != building) rss -= kBuildingWallDb;
      if (phase == 1) rss += texture_at(ap.texture1, x, y);
      double measured = phone.gain * (rss + 100.0) - 100.0 + phone.offset + phone.response[i] +
                        rng.normal(0.0, cfg.fading_sd_db);
      if (measured < phone.sensitivity) continue;
      if (rng.uniform() < cfg.dropout_probability) continue;
      measured = std::clamp(std::round(measured), -104.0, -1.0);
      rec.rss[i] = static_cast<std::int16_t>(measured);
    }
  };

  SyntheticCorpus corpus;
  corpus.training.provenance = Provenance::training;
  corpus.training.description = "training";
  corpus.validation.provenance = Provenance::validation;
  corpus.validation.description = "validation";

  auto run_sessions = [&](FingerprintSet& out, int b, int f, int sessions, int phase,
                          double start_day, double span_days, bool validation) {
    Rng srng(mix_seed(cfg.seed, 3, static_cast<std::uint64_t>(b), static_cast<std::uint64_t>(f),
                      static_cast<std::uint64_t>(phase) + (validation ? 10 : 0)));
    std::vector<int> phone_ids(static_cast<std::size_t>(cfg.phones));
    std::iota(phone_ids.begin(), phone_ids.end(), 0);
    srng.shuffle(std::span<int>(phone_ids));
    const auto& pts = points[static_cast<std::size_t>(b)][static_cast<std::size_t>(f)];
    for (int s = 0; s < sessions; ++s) {
      const int phone_id = phone_ids[static_cast<std::size_t>(s % cfg.phones)];
      const int user_id = validation ? 0 : 1 + static_cast<int>(srng.below(static_cast<std::uint64_t>(cfg.users)));
      const int n_points = cfg.points_per_session_min +
                           static_cast<int>(srng.below(static_cast<std::uint64_t>(
                               cfg.points_per_session_max - cfg.points_per_session_min + 1)));
      std::vector<std::size_t> order(pts.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      srng.shuffle(std::span<std::size_t>(order));
      auto t = static_cast<std::int64_t>(
          static_cast<double>(cfg.phase0_start) + (start_day + srng.uniform(0.0, span_days)) * 86400.0);
      for (int k = 0; k < std::min<int>(n_points, static_cast<int>(pts.size())); ++k) {
        const auto& pt = pts[order[static_cast<std::size_t>(k)]];
        for (int c = 0; c < cfg.captures_per_point; ++c) {
          FingerprintRecord rec;
          measure(srng, phones[static_cast<std::size_t>(phone_id)], b, f, pt.x, pt.y, phase, rec);
          rec.longitude = pt.x;
          rec.latitude = pt.y + kLatitudeBase;
          rec.floor = f;
          rec.building_id = b;
          rec.space_id = pt.space_id;
          rec.relative_position = pt.relative_position;
          rec.user_id = user_id;
          rec.phone_id = phone_id;
          rec.timestamp = t;
          t += 15 + static_cast<std::int64_t>(srng.below(20));
          out.records.push_back(rec);
        }
        t += 30 + static_cast<std::int64_t>(srng.below(60));
      }
    }
  };

  for (int b = 0; b < buildings; ++b) {
    const bool main = b == cfg.main_building;
    for (int f = 0; f < cfg.floors_per_building[static_cast<std::size_t>(b)]; ++f) {
      run_sessions(corpus.training, b, f, main ? cfg.phase0_sessions_main : cfg.phase0_sessions_other,
                   0, 0.0, cfg.phase0_days, false);
      run_sessions(corpus.training, b, f, main ? cfg.phase1_sessions_main : cfg.phase1_sessions_other,
                   1, cfg.phase1_offset_days, cfg.phase1_days, false);
      run_sessions(corpus.validation, b, f,
                   main ? cfg.validation_sessions_main : cfg.validation_sessions_other, 0,
                   cfg.validation_offset_days, 2.0, true);
    }
  }

  // Survey files are not grouped by session; shuffle the row order.
  Rng order_rng(mix_seed(cfg.seed, 4));
  for (auto* set : {&corpus.training, &corpus.validation}) {
    order_rng.shuffle(std::span<FingerprintRecord>(set->records));
    for (std::size_t i = 0; i < set->records.size(); ++i)
      set->records[i].row = static_cast<std::uint32_t>(i);
  }
  return corpus;
}

void write_synthetic_corpus(const std::string& dir, const SynthConfig& cfg) {
  std::filesystem::create_directories(dir);
  const auto corpus = generate_corpus(cfg);
  write_csv((std::filesystem::path(dir) / "trainingData.csv").string(), corpus.training);
  write_csv((std::filesystem::path(dir) / "validationData.csv").string(), corpus.validation);
}

}  // namespace fedloc
