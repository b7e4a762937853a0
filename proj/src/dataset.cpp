#include "fedloc/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <tuple>

#include "fedloc/rng.hpp"

namespace fedloc {

const char* to_string(Provenance p) {
  switch (p) {
    case Provenance::training: return "training";
    case Provenance::validation: return "validation";
    case Provenance::derived: return "derived";
  }
  return "?";
}

const char* to_string(PartitionAxis a) {
  switch (a) {
    case PartitionAxis::by_phone: return "by_phone";
    case PartitionAxis::by_floor: return "by_floor";
    case PartitionAxis::uniform_random: return "uniform_random";
  }
  return "?";
}

const char* to_string(ScenarioKind k) {
  return k == ScenarioKind::device ? "device" : "time";
}

std::size_t ClientAssignment::total_records() const {
  std::size_t n = 0;
  for (const auto& c : clients) n += c.data.size();
  return n;
}

namespace {

constexpr const char* kTrailingColumns[] = {
    "LONGITUDE", "LATITUDE", "FLOOR",  "BUILDINGID", "SPACEID",
    "RELATIVEPOSITION", "USERID", "PHONEID", "TIMESTAMP"};

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  out.reserve(kNumColumns);
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '"')) s.remove_prefix(1);
  while (!s.empty() &&
         (s.back() == ' ' || s.back() == '"' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

[[noreturn]] void fail_row(const std::string& origin, std::size_t line_no,
                           const std::string& what) {
  throw DatasetError(origin + ": row " + std::to_string(line_no) + ": " + what);
}

template <typename T>
T parse_int(std::string_view field, const std::string& origin,
            std::size_t line_no, const char* column) {
  field = trim(field);
  T value{};
  const auto [ptr, ec] =
      std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    // Some exports write integers as "1.0"; accept integral reals.
    double d = 0.0;
    const auto [p2, e2] =
        std::from_chars(field.data(), field.data() + field.size(), d);
    if (e2 == std::errc() && p2 == field.data() + field.size() &&
        d == std::floor(d)) {
      return static_cast<T>(d);
    }
    fail_row(origin, line_no,
             std::string("column ") + column + " is not an integer: '" +
                 std::string(field) + "'");
  }
  return value;
}

double parse_real(std::string_view field, const std::string& origin,
                  std::size_t line_no, const char* column) {
  field = trim(field);
  double value = 0.0;
  const auto [ptr, ec] =
      std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size() ||
      !std::isfinite(value)) {
    fail_row(origin, line_no,
             std::string("column ") + column + " is not a real: '" +
                 std::string(field) + "'");
  }
  return value;
}

void check_header(std::string_view line, const std::string& origin) {
  const auto cols = split_commas(line);
  if (cols.size() != kNumColumns) {
    throw DatasetError(origin + ": header has " + std::to_string(cols.size()) +
                       " columns, expected " + std::to_string(kNumColumns));
  }
  char name[8];
  for (std::size_t i = 0; i < kNumWaps; ++i) {
    std::snprintf(name, sizeof(name), "WAP%03zu", i + 1);
    if (trim(cols[i]) != name) {
      throw DatasetError(origin + ": header column " + std::to_string(i + 1) +
                         " is '" + std::string(trim(cols[i])) +
                         "', expected '" + name + "'");
    }
  }
  for (std::size_t i = 0; i < std::size(kTrailingColumns); ++i) {
    if (trim(cols[kNumWaps + i]) != kTrailingColumns[i]) {
      throw DatasetError(origin + ": header column " +
                         std::to_string(kNumWaps + i + 1) + " is '" +
                         std::string(trim(cols[kNumWaps + i])) +
                         "', expected '" + kTrailingColumns[i] + "'");
    }
  }
}

FingerprintSet subset(const FingerprintSet& set,
                      const std::vector<std::size_t>& indices,
                      std::string description) {
  FingerprintSet out;
  out.provenance = Provenance::derived;
  out.description = std::move(description);
  out.records.reserve(indices.size());
  for (std::size_t i : indices) out.records.push_back(set.records[i]);
  return out;
}

std::vector<std::size_t> iota_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

// Splits `indices` (already in a seeded random order) into `parts`
// near-equal contiguous chunks; each chunk is re-sorted into parent order.
std::vector<std::vector<std::size_t>> chunk(std::vector<std::size_t> indices,
                                            std::size_t parts) {
  std::vector<std::vector<std::size_t>> out(parts);
  const std::size_t base = indices.size() / parts;
  const std::size_t extra = indices.size() % parts;
  std::size_t pos = 0;
  for (std::size_t p = 0; p < parts; ++p) {
    const std::size_t len = base + (p < extra ? 1 : 0);
    out[p].assign(indices.begin() + static_cast<std::ptrdiff_t>(pos),
                  indices.begin() + static_cast<std::ptrdiff_t>(pos + len));
    std::sort(out[p].begin(), out[p].end());
    pos += len;
  }
  return out;
}

}  // namespace

std::string csv_header() {
  std::string h;
  h.reserve(kNumColumns * 8);
  char name[8];
  for (std::size_t i = 0; i < kNumWaps; ++i) {
    std::snprintf(name, sizeof(name), "WAP%03zu", i + 1);
    h += name;
    h += ',';
  }
  for (std::size_t i = 0; i < std::size(kTrailingColumns); ++i) {
    if (i) h += ',';
    h += kTrailingColumns[i];
  }
  return h;
}

FingerprintSet parse_csv(const std::string& text, Provenance provenance,
                         const std::string& origin) {
  FingerprintSet set;
  set.provenance = provenance;
  set.description = to_string(provenance);

  std::string_view rest(text);
  std::size_t line_no = 0;  // 1-based file line of the current row
  bool header_seen = false;
  std::uint32_t data_row = 0;
  while (!rest.empty()) {
    const std::size_t nl = rest.find('\n');
    std::string_view line = rest.substr(0, nl);
    rest = nl == std::string_view::npos ? std::string_view{} : rest.substr(nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (!header_seen) {
      if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF)
        line.remove_prefix(3);  // UTF-8 BOM
      check_header(line, origin);
      header_seen = true;
      continue;
    }
    const auto cols = split_commas(line);
    if (cols.size() != kNumColumns) {
      fail_row(origin, line_no,
               "has " + std::to_string(cols.size()) + " columns, expected " +
                   std::to_string(kNumColumns));
    }
    FingerprintRecord r;
    for (std::size_t i = 0; i < kNumWaps; ++i) {
      const int v = parse_int<int>(cols[i], origin, line_no, "WAP");
      if (v != kRssNotDetected && (v < kRssMin || v > 0)) {
        char name[8];
        std::snprintf(name, sizeof(name), "WAP%03zu", i + 1);
        fail_row(origin, line_no,
                 std::string(name) + " value " + std::to_string(v) +
                     " outside [-110, 0] and not 100");
      }
      r.rss[i] = static_cast<std::int16_t>(v);
    }
    r.longitude = parse_real(cols[520], origin, line_no, "LONGITUDE");
    r.latitude = parse_real(cols[521], origin, line_no, "LATITUDE");
    r.floor = parse_int<int>(cols[522], origin, line_no, "FLOOR");
    r.building_id = parse_int<int>(cols[523], origin, line_no, "BUILDINGID");
    r.space_id = parse_int<int>(cols[524], origin, line_no, "SPACEID");
    r.relative_position =
        parse_int<int>(cols[525], origin, line_no, "RELATIVEPOSITION");
    r.user_id = parse_int<int>(cols[526], origin, line_no, "USERID");
    r.phone_id = parse_int<int>(cols[527], origin, line_no, "PHONEID");
    r.timestamp = parse_int<std::int64_t>(cols[528], origin, line_no, "TIMESTAMP");
    if (r.floor < 0 || r.floor > 4)
      fail_row(origin, line_no, "FLOOR " + std::to_string(r.floor) + " outside [0, 4]");
    if (r.building_id < 0 || r.building_id > 2)
      fail_row(origin, line_no,
               "BUILDINGID " + std::to_string(r.building_id) + " outside [0, 2]");
    r.row = data_row++;
    set.records.push_back(r);
  }
  if (!header_seen) throw DatasetError(origin + ": empty file (no header)");
  return set;
}

FingerprintSet load_csv(const std::string& path, Provenance provenance) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_csv(buf.str(), provenance, path);
}

std::string format_csv_row(const FingerprintRecord& r) {
  std::string s;
  s.reserve(kNumColumns * 4);
  char tmp[64];
  for (std::size_t i = 0; i < kNumWaps; ++i) {
    const int n = std::snprintf(tmp, sizeof(tmp), "%d,", r.rss[i]);
    s.append(tmp, static_cast<std::size_t>(n));
  }
  const int n = std::snprintf(tmp, sizeof(tmp), "%.4f,%.4f,", r.longitude, r.latitude);
  s.append(tmp, static_cast<std::size_t>(n));
  const int m = std::snprintf(tmp, sizeof(tmp), "%d,%d,%d,%d,%d,%d,%lld",
                              r.floor, r.building_id, r.space_id,
                              r.relative_position, r.user_id, r.phone_id,
                              static_cast<long long>(r.timestamp));
  s.append(tmp, static_cast<std::size_t>(m));
  return s;
}

void write_csv(const std::string& path, const FingerprintSet& set) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DatasetError("cannot write " + path);
  out << csv_header() << '\n';
  for (const auto& r : set.records) out << format_csv_row(r) << '\n';
  if (!out) throw DatasetError("write failed: " + path);
}

FingerprintSet filter(const FingerprintSet& set, std::optional<int> building,
                      std::optional<int> floor) {
  FingerprintSet out;
  out.provenance = set.provenance;
  out.description = set.description;
  if (building) out.description += "|building=" + std::to_string(*building);
  if (floor) out.description += "|floor=" + std::to_string(*floor);
  for (const auto& r : set.records) {
    if (building && r.building_id != *building) continue;
    if (floor && r.floor != *floor) continue;
    out.records.push_back(r);
  }
  return out;
}

double normalize_rss(int raw, const NormalizationSpec& spec) {
  if (raw == kRssNotDetected) return 0.0;
  const double v = std::clamp(static_cast<double>(raw), spec.rss_floor, 0.0);
  return (v - spec.rss_floor) / -spec.rss_floor;
}

NormalizationSpec fit_target_normalization(const FingerprintSet& train) {
  if (train.empty())
    throw std::invalid_argument("fit_target_normalization: empty training set");
  double lo[2] = {train.records[0].longitude, train.records[0].latitude};
  double hi[2] = {lo[0], lo[1]};
  for (const auto& r : train.records) {
    lo[0] = std::min(lo[0], r.longitude);
    hi[0] = std::max(hi[0], r.longitude);
    lo[1] = std::min(lo[1], r.latitude);
    hi[1] = std::max(hi[1], r.latitude);
  }
  NormalizationSpec spec;
  for (int k = 0; k < 2; ++k) {
    spec.target_offsets[k] = lo[k];
    const double range = hi[k] - lo[k];
    spec.target_scales[k] = range > 0.0 ? range : 1.0;
  }
  return spec;
}

std::array<double, 2> normalize_target(double longitude, double latitude,
                                       const NormalizationSpec& spec) {
  return {(longitude - spec.target_offsets[0]) / spec.target_scales[0],
          (latitude - spec.target_offsets[1]) / spec.target_scales[1]};
}

std::array<double, 2> denormalize_target(double x, double y,
                                         const NormalizationSpec& spec) {
  return {x * spec.target_scales[0] + spec.target_offsets[0],
          y * spec.target_scales[1] + spec.target_offsets[1]};
}

std::vector<std::pair<int, std::size_t>> phone_ranking(
    const FingerprintSet& set) {
  std::map<int, std::size_t> counts;
  for (const auto& r : set.records) ++counts[r.phone_id];
  std::vector<std::pair<int, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second > b.second;  // map order already breaks ties by id
  });
  return ranked;
}

ClientAssignment partition_by_phone(const FingerprintSet& set,
                                    std::size_t n_clients) {
  if (n_clients == 0) throw std::invalid_argument("partition_by_phone: n_clients = 0");
  const auto ranked = phone_ranking(set);
  if (ranked.size() < n_clients) {
    throw std::invalid_argument(
        "partition_by_phone: " + std::to_string(ranked.size()) +
        " distinct phones, " + std::to_string(n_clients) + " clients requested");
  }
  ClientAssignment out;
  out.axis = PartitionAxis::by_phone;
  for (std::size_t i = 0; i < n_clients; ++i) {
    const int phone = ranked[i].first;
    ClientData c;
    c.client_id = static_cast<int>(i);
    c.key = phone;
    c.data.provenance = Provenance::derived;
    c.data.description = set.description + "|phone=" + std::to_string(phone);
    c.data.records.reserve(ranked[i].second);
    for (const auto& r : set.records)
      if (r.phone_id == phone) c.data.records.push_back(r);
    out.clients.push_back(std::move(c));
  }
  return out;
}

ClientAssignment partition_by_floor(const FingerprintSet& set,
                                    std::size_t clients_per_floor,
                                    std::uint64_t seed) {
  if (clients_per_floor == 0)
    throw std::invalid_argument("partition_by_floor: clients_per_floor = 0");
  std::map<int, std::vector<std::size_t>> by_floor;
  for (std::size_t i = 0; i < set.size(); ++i)
    by_floor[set.records[i].floor].push_back(i);
  if (by_floor.empty()) throw std::invalid_argument("partition_by_floor: empty set");

  ClientAssignment out;
  out.axis = PartitionAxis::by_floor;
  int next_id = 0;
  for (auto& [floor, idx] : by_floor) {
    if (idx.size() < clients_per_floor) {
      throw std::invalid_argument(
          "partition_by_floor: floor " + std::to_string(floor) + " has " +
          std::to_string(idx.size()) + " records, fewer than " +
          std::to_string(clients_per_floor) + " clients");
    }
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(floor)));
    rng.shuffle(std::span<std::size_t>(idx));
    auto parts = chunk(std::move(idx), clients_per_floor);
    for (std::size_t p = 0; p < parts.size(); ++p) {
      ClientData c;
      c.client_id = next_id++;
      c.key = floor;
      c.data = subset(set, parts[p],
                      set.description + "|floor=" + std::to_string(floor) +
                          "|part=" + std::to_string(p) + "/" +
                          std::to_string(clients_per_floor) +
                          "|seed=" + std::to_string(seed));
      out.clients.push_back(std::move(c));
    }
  }
  return out;
}

ClientAssignment partition_uniform(const FingerprintSet& set,
                                   std::size_t n_clients, std::uint64_t seed) {
  if (n_clients == 0) throw std::invalid_argument("partition_uniform: n_clients = 0");
  if (n_clients > set.size()) {
    throw std::invalid_argument("partition_uniform: " + std::to_string(n_clients) +
                                " clients for " + std::to_string(set.size()) +
                                " records");
  }
  auto idx = iota_indices(set.size());
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(idx));
  auto parts = chunk(std::move(idx), n_clients);
  ClientAssignment out;
  out.axis = PartitionAxis::uniform_random;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    ClientData c;
    c.client_id = static_cast<int>(p);
    c.key = -1;
    c.data = subset(set, parts[p],
                    set.description + "|uniform=" + std::to_string(p) + "/" +
                        std::to_string(n_clients) + "|seed=" + std::to_string(seed));
    out.clients.push_back(std::move(c));
  }
  return out;
}

std::pair<FingerprintSet, FingerprintSet> split_fraction(
    const FingerprintSet& set, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0))
    throw std::invalid_argument("split_fraction: fraction outside [0, 1]");
  std::size_t keep = static_cast<std::size_t>(
      std::llround(fraction * static_cast<double>(set.size())));
  if (fraction > 0.0 && keep == 0 && !set.empty()) keep = 1;
  keep = std::min(keep, set.size());

  auto idx = iota_indices(set.size());
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(idx));
  std::vector<std::size_t> kept(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(keep));
  std::vector<std::size_t> rest(idx.begin() + static_cast<std::ptrdiff_t>(keep), idx.end());
  std::sort(kept.begin(), kept.end());
  std::sort(rest.begin(), rest.end());
  char frac[32];
  std::snprintf(frac, sizeof(frac), "%.6g", fraction);
  return {subset(set, kept, set.description + "|sample=" + frac + "|seed=" + std::to_string(seed)),
          subset(set, rest, set.description + "|sample_rest=" + frac + "|seed=" + std::to_string(seed))};
}

std::pair<FingerprintSet, FingerprintSet> split_by_location(
    const FingerprintSet& set, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0))
    throw std::invalid_argument("split_by_location: fraction outside [0, 1]");
  using Key = std::tuple<int, int, double, double>;
  auto key_of = [](const FingerprintRecord& r) {
    return Key{r.building_id, r.floor, r.longitude, r.latitude};
  };
  std::vector<Key> keys;
  keys.reserve(set.size());
  for (const auto& r : set.records) keys.push_back(key_of(r));
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());

  std::size_t keep = static_cast<std::size_t>(
      std::llround(fraction * static_cast<double>(keys.size())));
  if (fraction > 0.0 && keep == 0 && !keys.empty()) keep = 1;
  keep = std::min(keep, keys.size());
  Rng rng(seed);
  rng.shuffle(std::span<Key>(keys));
  keys.resize(keep);
  std::sort(keys.begin(), keys.end());

  std::vector<std::size_t> kept, rest;
  for (std::size_t i = 0; i < set.size(); ++i) {
    (std::binary_search(keys.begin(), keys.end(), key_of(set.records[i])) ? kept : rest)
        .push_back(i);
  }
  char frac[32];
  std::snprintf(frac, sizeof(frac), "%.6g", fraction);
  return {subset(set, kept, set.description + "|points=" + frac + "|seed=" + std::to_string(seed)),
          subset(set, rest, set.description + "|points_rest=" + frac + "|seed=" + std::to_string(seed))};
}

namespace {

std::pair<FingerprintSet, FingerprintSet> split(const FingerprintSet& set, double fraction,
                                                std::uint64_t seed, bool by_location) {
  return by_location ? split_by_location(set, fraction, seed)
                     : split_fraction(set, fraction, seed);
}

void check_fraction(double v, const char* name, bool allow_zero) {
  const bool ok = allow_zero ? (v >= 0.0 && v < 1.0) : (v > 0.0 && v <= 1.0);
  if (!ok) throw std::invalid_argument(std::string("scenario: ") + name + " out of range");
}

}  // namespace

DomainScenario build_device_scenario(const FingerprintSet& set,
                                     const FingerprintSet& validation,
                                     int target_phone,
                                     const ScenarioOptions& opt) {
  check_fraction(opt.rho, "rho", false);
  check_fraction(opt.holdout_fraction, "holdout_fraction", true);
  if (opt.n_clients < 2)
    throw std::invalid_argument("device scenario: n_clients must be at least 2");
  const auto ranked = phone_ranking(set);
  if (ranked.size() < opt.n_clients)
    throw std::invalid_argument("device scenario: fewer distinct phones than clients");
  bool selected = false;
  for (std::size_t i = 0; i < opt.n_clients; ++i)
    selected |= ranked[i].first == target_phone;
  if (!selected) {
    throw std::invalid_argument("device scenario: target phone " +
                                std::to_string(target_phone) +
                                " is not among the selected phones");
  }

  FingerprintSet phone_all;
  phone_all.provenance = Provenance::derived;
  phone_all.description = set.description + "|phone=" + std::to_string(target_phone);
  for (const auto& r : set.records)
    if (r.phone_id == target_phone) phone_all.records.push_back(r);

  auto [holdout, pool] =
      split(phone_all, opt.holdout_fraction, mix_seed(opt.seed, 1), opt.group_by_location);
  auto [trainable, unused] = split(pool, opt.rho, mix_seed(opt.seed, 2), opt.group_by_location);

  DomainScenario sc;
  sc.kind = ScenarioKind::device;
  sc.rho = opt.rho;
  // The source federation is the other selected phones, so no record of the
  // target device is seen before the model transfer.
  FingerprintSet others;
  others.provenance = set.provenance;
  others.description = set.description + "|phone!=" + std::to_string(target_phone);
  for (const auto& r : set.records)
    if (r.phone_id != target_phone) others.records.push_back(r);
  sc.source = partition_by_phone(others, opt.n_clients - 1);

  ClientData tgt;
  tgt.client_id = 0;
  tgt.key = target_phone;
  tgt.data = std::move(trainable);
  sc.target.axis = PartitionAxis::by_phone;
  sc.target.clients.push_back(std::move(tgt));

  sc.holdout = std::move(holdout);
  // Validation rows keep their own row ids; tag them so they never collide
  // with training rows in disjointness checks.
  for (const auto& r : validation.records) {
    if (r.phone_id != target_phone) continue;
    FingerprintRecord v = r;
    v.row = r.row | 0x80000000u;
    sc.holdout.records.push_back(v);
  }
  sc.description = "device|target_phone=" + std::to_string(target_phone) +
                   "|clients=" + std::to_string(opt.n_clients) +
                   "|rho=" + std::to_string(opt.rho) +
                   "|seed=" + std::to_string(opt.seed);
  return sc;
}

std::int64_t median_timestamp(const FingerprintSet& set) {
  if (set.empty()) throw std::invalid_argument("median_timestamp: empty set");
  std::vector<std::int64_t> ts;
  ts.reserve(set.size());
  for (const auto& r : set.records) ts.push_back(r.timestamp);
  const std::size_t mid = (ts.size() - 1) / 2;
  std::nth_element(ts.begin(), ts.begin() + static_cast<std::ptrdiff_t>(mid), ts.end());
  return ts[mid];
}

std::int64_t choose_split_time(const FingerprintSet& set, double min_side_fraction) {
  if (set.size() < 2) throw std::invalid_argument("choose_split_time: need >= 2 records");
  if (!(min_side_fraction >= 0.0 && min_side_fraction < 0.5))
    throw std::invalid_argument("choose_split_time: min_side_fraction outside [0, 0.5)");
  std::vector<std::int64_t> ts;
  ts.reserve(set.size());
  for (const auto& r : set.records) ts.push_back(r.timestamp);
  std::sort(ts.begin(), ts.end());
  const std::size_t n = ts.size();
  const auto min_side = static_cast<std::size_t>(
      std::ceil(min_side_fraction * static_cast<double>(n)));
  std::optional<std::int64_t> best;
  std::int64_t best_gap = 0;
  for (std::size_t i = std::max<std::size_t>(1, min_side); i + min_side <= n; ++i) {
    const std::int64_t gap = ts[i] - ts[i - 1];
    if (gap > best_gap) {
      best = ts[i];
      best_gap = gap;
    }
  }
  if (!best) throw std::invalid_argument("choose_split_time: no admissible split");
  return *best;
}

DomainScenario build_time_scenario(const FingerprintSet& set,
                                   std::int64_t split_time,
                                   const ScenarioOptions& opt) {
  check_fraction(opt.rho, "rho", false);
  check_fraction(opt.holdout_fraction, "holdout_fraction", true);
  FingerprintSet before, after;
  before.provenance = after.provenance = Provenance::derived;
  before.description = set.description + "|t<" + std::to_string(split_time);
  after.description = set.description + "|t>=" + std::to_string(split_time);
  for (const auto& r : set.records)
    (r.timestamp < split_time ? before : after).records.push_back(r);
  if (before.empty() || after.empty()) {
    throw std::invalid_argument("time scenario: split_time " +
                                std::to_string(split_time) +
                                " leaves one side empty");
  }

  auto [holdout, pool] =
      split(after, opt.holdout_fraction, mix_seed(opt.seed, 1), opt.group_by_location);
  auto [trainable, unused] = split(pool, opt.rho, mix_seed(opt.seed, 2), opt.group_by_location);

  DomainScenario sc;
  sc.kind = ScenarioKind::time;
  sc.rho = opt.rho;
  sc.source = partition_by_phone(before, opt.n_clients);
  sc.target = partition_by_phone(trainable, phone_ranking(trainable).size());
  sc.holdout = std::move(holdout);
  sc.description = "time|split=" + std::to_string(split_time) +
                   "|clients=" + std::to_string(opt.n_clients) +
                   "|rho=" + std::to_string(opt.rho) +
                   "|seed=" + std::to_string(opt.seed);
  return sc;
}

}  // namespace fedloc
