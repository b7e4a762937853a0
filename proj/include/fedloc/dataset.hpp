#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fedloc {

inline constexpr std::size_t kNumWaps = 520;
inline constexpr std::size_t kNumColumns = 529;
inline constexpr int kRssNotDetected = 100;
inline constexpr int kRssMin = -110;

/// Raised for unreadable or malformed corpus files.
class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One site-survey sample in UJIIndoorLoc layout.
struct FingerprintRecord {
  std::array<std::int16_t, kNumWaps> rss{};  // dBm, or 100 when not detected
  double longitude = 0.0;                    // meters, projected
  double latitude = 0.0;                     // meters, projected
  int floor = 0;
  int building_id = 0;
  int space_id = 0;
  int relative_position = 0;
  int user_id = 0;
  int phone_id = 0;
  std::int64_t timestamp = 0;  // unix seconds
  // 0-based data row in the source file. Together with the set provenance it
  // identifies a record; partitions and scenarios are checked against it.
  std::uint32_t row = 0;
};

enum class Provenance { training, validation, derived };

const char* to_string(Provenance p);

/// Ordered, immutable-by-convention collection of records.
struct FingerprintSet {
  std::vector<FingerprintRecord> records;
  Provenance provenance = Provenance::derived;
  // Human-readable and reproducible description of how the set was derived,
  // e.g. "training|building=1|floor=1|phone=13".
  std::string description;

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }
};

/// Feature and target scaling. Fitted on training data only.
struct NormalizationSpec {
  double rss_floor = -105.0;
  std::array<double, 2> target_offsets{0.0, 0.0};  // longitude, latitude
  std::array<double, 2> target_scales{1.0, 1.0};
};

struct ClientData {
  int client_id = 0;
  // Phone id for by_phone, floor for by_floor, -1 for uniform_random.
  int key = -1;
  FingerprintSet data;
};

enum class PartitionAxis { by_phone, by_floor, uniform_random };

const char* to_string(PartitionAxis a);

/// Client id -> local fingerprint database. Clients are sorted by client_id.
struct ClientAssignment {
  std::vector<ClientData> clients;
  PartitionAxis axis = PartitionAxis::uniform_random;

  std::size_t total_records() const;
};

enum class ScenarioKind { device, time };

const char* to_string(ScenarioKind k);

/// Source/target split of a corpus. `target` holds only the trainable
/// (rho-subsampled) part of the target domain; `holdout` is evaluation data.
struct DomainScenario {
  ScenarioKind kind = ScenarioKind::device;
  ClientAssignment source;
  ClientAssignment target;
  double rho = 1.0;
  FingerprintSet holdout;
  std::string description;
};

// --- loading -------------------------------------------------------------

/// Parses a UJIIndoorLoc CSV. Verifies the header and every field range.
FingerprintSet load_csv(const std::string& path, Provenance provenance);

/// Same as load_csv but reads from an in-memory buffer (used by tests and
/// the python bindings). `origin` is only used in error messages.
FingerprintSet parse_csv(const std::string& text, Provenance provenance,
                         const std::string& origin = "<memory>");

/// Canonical header line (no trailing newline).
std::string csv_header();

/// Writes records in UJIIndoorLoc layout, header included.
void write_csv(const std::string& path, const FingerprintSet& set);
std::string format_csv_row(const FingerprintRecord& r);

// --- selection -----------------------------------------------------------

FingerprintSet filter(const FingerprintSet& set, std::optional<int> building,
                      std::optional<int> floor);

// --- normalization -------------------------------------------------------

double normalize_rss(int raw, const NormalizationSpec& spec);
NormalizationSpec fit_target_normalization(const FingerprintSet& train);
std::array<double, 2> normalize_target(double longitude, double latitude,
                                       const NormalizationSpec& spec);
std::array<double, 2> denormalize_target(double x, double y,
                                         const NormalizationSpec& spec);

// --- partitioning --------------------------------------------------------

ClientAssignment partition_by_phone(const FingerprintSet& set,
                                    std::size_t n_clients);
ClientAssignment partition_by_floor(const FingerprintSet& set,
                                    std::size_t clients_per_floor,
                                    std::uint64_t seed);
ClientAssignment partition_uniform(const FingerprintSet& set,
                                   std::size_t n_clients, std::uint64_t seed);

/// Phone ids ordered by record count (descending), ties by smaller id.
std::vector<std::pair<int, std::size_t>> phone_ranking(
    const FingerprintSet& set);

// --- scenarios -----------------------------------------------------------

struct ScenarioOptions {
  std::size_t n_clients = 8;
  double rho = 1.0;
  // Fraction of the target domain's training-file records held out for
  // evaluation before rho subsampling.
  double holdout_fraction = 0.3;
  // Split holdout and rho subsample by reference point (all captures at one
  // surveyed position stay together) instead of by record.
  bool group_by_location = true;
  std::uint64_t seed = 0;
};

/// Measurement heterogeneity. The n_clients most frequent phones are
/// selected; the target phone's records form the target domain and the other
/// n_clients - 1 phones the source federation. `validation` may be empty;
/// rows of the target phone found there are appended to the holdout.
DomainScenario build_device_scenario(const FingerprintSet& set,
                                     const FingerprintSet& validation,
                                     int target_phone,
                                     const ScenarioOptions& opt);

/// Environmental variation: records before `split_time` form the source.
DomainScenario build_time_scenario(const FingerprintSet& set,
                                   std::int64_t split_time,
                                   const ScenarioOptions& opt);

/// Start of the second survey phase: the first timestamp after the longest
/// quiet interval, among splits leaving at least `min_side_fraction` of the
/// records on each side.
std::int64_t choose_split_time(const FingerprintSet& set, double min_side_fraction = 0.1);

/// Median timestamp (lower median for even sizes).
std::int64_t median_timestamp(const FingerprintSet& set);

/// Seeded subsample keeping round(fraction * |set|) records (at least one when
/// fraction > 0 and the set is nonempty). Returns (kept, rest), both in input
/// order.
std::pair<FingerprintSet, FingerprintSet> split_fraction(
    const FingerprintSet& set, double fraction, std::uint64_t seed);

/// Like split_fraction but over reference points: keeps round(fraction * G)
/// of the G distinct (building, floor, longitude, latitude) positions.
std::pair<FingerprintSet, FingerprintSet> split_by_location(
    const FingerprintSet& set, double fraction, std::uint64_t seed);

}  // namespace fedloc
