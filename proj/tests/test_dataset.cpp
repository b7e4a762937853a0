#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "doctest.h"
#include "fedloc/dataset.hpp"
#include "helpers.hpp"

using namespace fedloc;

namespace {

FingerprintRecord make_record(int phone, int floor, double lon, double lat, std::uint32_t row,
                              std::int64_t ts = 1370000000) {
  FingerprintRecord r;
  r.rss.fill(static_cast<std::int16_t>(kRssNotDetected));
  r.rss[row % kNumWaps] = -60;
  r.phone_id = phone;
  r.floor = floor;
  r.building_id = 1;
  r.longitude = lon;
  r.latitude = lat;
  r.row = row;
  r.timestamp = ts;
  return r;
}

std::string csv_text(const std::vector<FingerprintRecord>& recs) {
  std::string s = csv_header() + "\n";
  for (const auto& r : recs) s += format_csv_row(r) + "\n";
  return s;
}

// Independent scan of a UJIIndoorLoc CSV: counts rows whose BUILDINGID and
// FLOOR columns match, without the library's parser.
std::size_t scan_count(const std::string& path, int building, std::optional<int> floor) {
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  std::size_t n = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cols.push_back(c);
    if (std::stoi(cols[523]) == building && (!floor || std::stoi(cols[522]) == *floor)) ++n;
  }
  return n;
}

std::multiset<std::uint32_t> rows_of(const FingerprintSet& s) {
  std::multiset<std::uint32_t> m;
  for (const auto& r : s.records) m.insert(r.row);
  return m;
}

std::multiset<std::uint32_t> rows_of(const ClientAssignment& a) {
  std::multiset<std::uint32_t> m;
  for (const auto& c : a.clients)
    for (const auto& r : c.data.records) m.insert(r.row);
  return m;
}

}  // namespace

TEST_SUITE("dataset") {

TEST_CASE("csv round trip preserves every field") {
  const auto& train = testing::small_corpus().training;
  const std::string text = csv_text(train.records);
  const auto back = parse_csv(text, Provenance::training);
  REQUIRE(back.size() == train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    const auto& a = train.records[i];
    const auto& b = back.records[i];
    REQUIRE(a.rss == b.rss);
    REQUIRE(a.longitude == b.longitude);
    REQUIRE(a.latitude == b.latitude);
    REQUIRE(a.floor == b.floor);
    REQUIRE(a.building_id == b.building_id);
    REQUIRE(a.space_id == b.space_id);
    REQUIRE(a.relative_position == b.relative_position);
    REQUIRE(a.user_id == b.user_id);
    REQUIRE(a.phone_id == b.phone_id);
    REQUIRE(a.timestamp == b.timestamp);
    REQUIRE(b.row == i);
  }
  CHECK(back.provenance == Provenance::training);
}

TEST_CASE("csv files load from disk; missing files are errors") {
  const auto dir = std::filesystem::temp_directory_path() / "fedloc_ds_test";
  std::filesystem::create_directories(dir);
  FingerprintSet s;
  s.records = {make_record(1, 0, 1.5, 2.25, 0), make_record(2, 1, 3.0, 4.0, 1)};
  write_csv((dir / "t.csv").string(), s);
  const auto back = load_csv((dir / "t.csv").string(), Provenance::validation);
  CHECK(back.size() == 2);
  CHECK(back.records[1].phone_id == 2);
  CHECK_THROWS_AS(load_csv((dir / "missing.csv").string(), Provenance::training), DatasetError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("malformed rows are reported by row number") {
  auto text = csv_text({make_record(1, 0, 1, 2, 0), make_record(1, 0, 1, 2, 1)});
  // Drop the last field of the second data row (file line 3): 528 columns.
  auto bad = text.substr(0, text.rfind(',')) + "\n";
  try {
    parse_csv(bad, Provenance::training, "t.csv");
    FAIL("expected an error");
  } catch (const DatasetError& e) {
    CHECK(std::string(e.what()).find("row 3") != std::string::npos);
    CHECK(std::string(e.what()).find("528 columns") != std::string::npos);
  }
  // 521 columns.
  std::string short_row = csv_header() + "\n";
  for (int i = 0; i < 521; ++i) short_row += (i ? ",100" : "100");
  short_row += "\n";
  try {
    parse_csv(short_row, Provenance::training, "t.csv");
    FAIL("expected an error");
  } catch (const DatasetError& e) {
    CHECK(std::string(e.what()).find("row 2") != std::string::npos);
  }
}

TEST_CASE("out-of-range and non-numeric fields are rejected") {
  auto rec = make_record(1, 0, 1, 2, 0);
  auto replace_field = [&](std::size_t col, const std::string& value) {
    std::string row = format_csv_row(rec);
    std::vector<std::string> cols;
    std::stringstream ss(row);
    std::string c;
    while (std::getline(ss, c, ',')) cols.push_back(c);
    cols[col] = value;
    std::string out;
    for (std::size_t i = 0; i < cols.size(); ++i) out += (i ? "," : "") + cols[i];
    return csv_header() + "\n" + out + "\n";
  };
  CHECK_THROWS_AS(parse_csv(replace_field(0, "-111"), Provenance::training), DatasetError);
  CHECK_THROWS_AS(parse_csv(replace_field(0, "5"), Provenance::training), DatasetError);
  CHECK_THROWS_AS(parse_csv(replace_field(522, "7"), Provenance::training), DatasetError);
  CHECK_THROWS_AS(parse_csv(replace_field(523, "3"), Provenance::training), DatasetError);
  CHECK_THROWS_AS(parse_csv(replace_field(520, "east"), Provenance::training), DatasetError);
  CHECK_NOTHROW(parse_csv(replace_field(0, "-110"), Provenance::training));
  CHECK_NOTHROW(parse_csv(replace_field(0, "0"), Provenance::training));
}

TEST_CASE("header is verified; BOM and CRLF are tolerated") {
  auto text = csv_text({make_record(1, 0, 1, 2, 0)});
  auto renamed = text;
  renamed.replace(renamed.find("WAP002"), 6, "WAP999");
  CHECK_THROWS_AS(parse_csv(renamed, Provenance::training), DatasetError);
  std::string crlf;
  for (char ch : text) {
    if (ch == '\n') crlf += '\r';
    crlf += ch;
  }
  CHECK(parse_csv("\xEF\xBB\xBF" + crlf, Provenance::training).size() == 1);
  CHECK(parse_csv(csv_header() + "\n", Provenance::training).empty());
}

TEST_CASE("filter by building and floor") {
  const auto dir = std::filesystem::temp_directory_path() / "fedloc_filter_test";
  std::filesystem::create_directories(dir);
  const auto& train = testing::small_corpus().training;
  write_csv((dir / "trainingData.csv").string(), train);
  const auto loaded = load_csv((dir / "trainingData.csv").string(), Provenance::training);
  CHECK(filter(loaded, 1, 1).size() == scan_count((dir / "trainingData.csv").string(), 1, 1));
  CHECK(filter(loaded, 1, std::nullopt).size() ==
        scan_count((dir / "trainingData.csv").string(), 1, std::nullopt));
  CHECK(filter(loaded, 99, std::nullopt).empty());
  for (const auto& r : filter(loaded, 2, 3).records) CHECK((r.building_id == 2 && r.floor == 3));
  std::filesystem::remove_all(dir);
}

TEST_CASE("real corpus record counts") {
  const auto root = testing::real_data_root();
  if (root.empty()) {
    MESSAGE("skipped: set FEDLOC_DATA_ROOT to the UJIIndoorLoc directory to run");
    return;
  }
  const auto train_path = (std::filesystem::path(root) / "trainingData.csv").string();
  const auto train = load_csv(train_path, Provenance::training);
  const auto val = load_csv((std::filesystem::path(root) / "validationData.csv").string(),
                            Provenance::validation);
  CHECK(train.size() == 19938);
  CHECK(val.size() == 1111);
  CHECK(filter(train, 1, 1).size() == scan_count(train_path, 1, 1));
  CHECK(filter(train, 1, std::nullopt).size() == scan_count(train_path, 1, std::nullopt));
}

TEST_CASE("rss normalization endpoints") {
  NormalizationSpec spec;
  CHECK(normalize_rss(100, spec) == 0.0);
  CHECK(normalize_rss(0, spec) == 1.0);
  CHECK(normalize_rss(-105, spec) == 0.0);
  CHECK(normalize_rss(-110, spec) == 0.0);
  CHECK(normalize_rss(-52, spec) == doctest::Approx(53.0 / 105.0));
}

TEST_CASE("target normalization fit and inverse") {
  FingerprintSet one;
  one.records = {make_record(1, 0, 10.0, 20.0, 0)};
  auto s1 = fit_target_normalization(one);
  CHECK(s1.target_offsets == std::array<double, 2>{10.0, 20.0});
  CHECK(s1.target_scales == std::array<double, 2>{1.0, 1.0});

  FingerprintSet two;
  two.records = {make_record(1, 0, 0.0, 0.0, 0), make_record(1, 0, 100.0, 50.0, 1)};
  auto s2 = fit_target_normalization(two);
  CHECK(s2.target_offsets == std::array<double, 2>{0.0, 0.0});
  CHECK(s2.target_scales == std::array<double, 2>{100.0, 50.0});

  const auto& train = testing::small_corpus().training;
  const auto spec = fit_target_normalization(train);
  for (const auto& r : train.records) {
    const auto n = normalize_target(r.longitude, r.latitude, spec);
    const auto back = denormalize_target(n[0], n[1], spec);
    REQUIRE(std::abs(back[0] - r.longitude) <= 1e-9 * std::abs(r.longitude));
    REQUIRE(std::abs(back[1] - r.latitude) <= 1e-9 * std::abs(r.latitude));
  }
  CHECK_THROWS(fit_target_normalization(FingerprintSet{}));
}

TEST_CASE("phone ranking and by-phone partition") {
  FingerprintSet s;
  std::uint32_t row = 0;
  for (int i = 0; i < 100; ++i) s.records.push_back(make_record(5, 0, i, 0, row++));
  for (int i = 0; i < 50; ++i) s.records.push_back(make_record(7, 0, i, 0, row++));
  for (int i = 0; i < 10; ++i) s.records.push_back(make_record(9, 0, i, 0, row++));
  for (int i = 0; i < 50; ++i) s.records.push_back(make_record(3, 0, i, 0, row++));
  const auto rank = phone_ranking(s);
  REQUIRE(rank.size() == 4);
  CHECK(rank[0] == std::pair<int, std::size_t>{5, 100});
  CHECK(rank[1] == std::pair<int, std::size_t>{3, 50});  // tie with 7, smaller id first
  CHECK(rank[2] == std::pair<int, std::size_t>{7, 50});

  const auto a = partition_by_phone(s, 2);
  REQUIRE(a.clients.size() == 2);
  CHECK(a.clients[0].key == 5);
  CHECK(a.clients[1].key == 3);
  CHECK(a.clients[0].data.size() == 100);
  CHECK(a.axis == PartitionAxis::by_phone);
  CHECK_THROWS_AS(partition_by_phone(s, 5), std::invalid_argument);

  const auto f11 = filter(testing::corpus().training, 1, 1);
  const auto p8 = partition_by_phone(f11, 8);
  CHECK(p8.clients.size() == 8);
  for (const auto& c : p8.clients)
    for (const auto& r : c.data.records) REQUIRE(r.phone_id == c.key);
}

TEST_CASE("by-floor partition") {
  const auto b1 = filter(testing::corpus().training, 1, std::nullopt);
  const auto a = partition_by_floor(b1, 4, 3);
  CHECK(a.clients.size() == 16);
  CHECK(rows_of(a) == rows_of(b1));
  for (const auto& c : a.clients) {
    std::set<int> floors;
    for (const auto& r : c.data.records) floors.insert(r.floor);
    CHECK(floors.size() == 1);
    CHECK(*floors.begin() == c.key);
  }
  const auto one = partition_by_floor(b1, 1, 3);
  REQUIRE(one.clients.size() == 4);
  for (const auto& c : one.clients) CHECK(c.data.size() == filter(b1, 1, c.key).size());

  FingerprintSet tiny;
  tiny.records = {make_record(1, 0, 0, 0, 0), make_record(1, 1, 0, 0, 1), make_record(1, 1, 0, 0, 2)};
  CHECK_THROWS_AS(partition_by_floor(tiny, 2, 0), std::invalid_argument);
}

TEST_CASE("uniform partition") {
  FingerprintSet ten;
  for (std::uint32_t i = 0; i < 10; ++i) ten.records.push_back(make_record(1, 0, i, 0, i));
  const auto a = partition_uniform(ten, 3, 42);
  std::vector<std::size_t> sizes;
  for (const auto& c : a.clients) sizes.push_back(c.data.size());
  CHECK(sizes == std::vector<std::size_t>{4, 3, 3});
  CHECK(rows_of(a) == rows_of(ten));
  const auto b = partition_uniform(ten, 3, 42);
  for (std::size_t i = 0; i < 3; ++i) CHECK(rows_of(a.clients[i].data) == rows_of(b.clients[i].data));
  const auto c = partition_uniform(ten, 3, 43);
  bool differs = false;
  for (std::size_t i = 0; i < 3; ++i) differs |= rows_of(a.clients[i].data) != rows_of(c.clients[i].data);
  CHECK(differs);
  CHECK_THROWS_AS(partition_uniform(ten, 11, 1), std::invalid_argument);

  const auto b1 = filter(testing::corpus().training, 1, std::nullopt);
  const auto u = partition_uniform(b1, 16, 7);
  CHECK(u.clients.size() == 16);
  CHECK(rows_of(u) == rows_of(b1));
}

TEST_CASE("fraction and location splits") {
  const auto f11 = filter(testing::corpus().training, 1, 1);
  auto [kept, rest] = split_fraction(f11, 0.25, 9);
  CHECK(kept.size() == static_cast<std::size_t>(std::llround(0.25 * f11.size())));
  CHECK(kept.size() + rest.size() == f11.size());
  auto [kept2, rest2] = split_fraction(f11, 0.25, 9);
  CHECK(rows_of(kept) == rows_of(kept2));

  auto [pts, others] = split_by_location(f11, 0.3, 4);
  CHECK(pts.size() + others.size() == f11.size());
  std::set<std::tuple<double, double>> a, b;
  for (const auto& r : pts.records) a.insert({r.longitude, r.latitude});
  for (const auto& r : others.records) b.insert({r.longitude, r.latitude});
  for (const auto& p : a) CHECK(b.count(p) == 0);
  const double total_points = static_cast<double>(a.size() + b.size());
  CHECK(a.size() == static_cast<std::size_t>(std::llround(0.3 * total_points)));

  FingerprintSet one;
  one.records = {make_record(1, 0, 0, 0, 0)};
  CHECK(split_fraction(one, 0.01, 1).first.size() == 1);
  CHECK(split_by_location(one, 0.01, 1).first.size() == 1);
  CHECK(split_fraction(f11, 0.0, 1).first.empty());
}

TEST_CASE("device scenario") {
  const auto& c = testing::corpus();
  const auto f11 = filter(c.training, 1, 1);
  const auto v11 = filter(c.validation, 1, 1);
  const auto rank = phone_ranking(f11);
  const int target = rank[0].first;
  ScenarioOptions opt;
  opt.n_clients = 8;
  opt.seed = 5;

  const auto sc = build_device_scenario(f11, v11, target, opt);
  CHECK(sc.kind == ScenarioKind::device);
  CHECK(sc.source.clients.size() == 7);
  REQUIRE(sc.target.clients.size() == 1);
  CHECK(sc.target.clients[0].key == target);
  for (const auto& cl : sc.source.clients) CHECK(cl.key != target);

  const auto src = rows_of(sc.source);
  const auto tgt = rows_of(sc.target);
  const auto hold = rows_of(sc.holdout);
  for (auto r : tgt) CHECK((src.count(r) == 0 && hold.count(r) == 0));
  for (auto r : hold) CHECK(src.count(r) == 0);

  // rho = 1: the trainable set is the whole non-held-out pool of the phone.
  std::size_t phone_total = 0, phone_validation = 0;
  for (const auto& r : f11.records) phone_total += r.phone_id == target;
  for (const auto& r : v11.records) phone_validation += r.phone_id == target;
  CHECK(tgt.size() + hold.size() == phone_total + phone_validation);

  ScenarioOptions half = opt;
  half.rho = 0.5;
  const auto h1 = build_device_scenario(f11, v11, target, half);
  const auto h2 = build_device_scenario(f11, v11, target, half);
  CHECK(rows_of(h1.target) == rows_of(h2.target));
  CHECK(rows_of(h1.holdout) == hold);  // holdout does not depend on rho
  CHECK(rows_of(h1.target).size() < tgt.size());
  for (auto r : rows_of(h1.target)) CHECK(tgt.count(r) == 1);

  CHECK_THROWS_AS(build_device_scenario(f11, v11, rank.back().first, opt), std::invalid_argument);
  CHECK_THROWS_AS(build_device_scenario(f11, v11, 12345, opt), std::invalid_argument);
  ScenarioOptions bad = opt;
  bad.rho = 1.5;
  CHECK_THROWS_AS(build_device_scenario(f11, v11, target, bad), std::invalid_argument);
}

TEST_CASE("time scenario") {
  const auto f11 = filter(testing::corpus().training, 1, 1);
  const auto split = choose_split_time(f11);
  FingerprintSet before, after;
  for (const auto& r : f11.records) (r.timestamp < split ? before : after).records.push_back(r);
  const double gap_days =
      static_cast<double>(median_timestamp(after) - median_timestamp(before)) / 86400.0;
  CHECK(gap_days == doctest::Approx(30.0).epsilon(0.2));

  std::set<std::uint32_t> previous;
  for (double rho : {0.25, 0.5, 1.0}) {
    ScenarioOptions opt;
    opt.rho = rho;
    opt.seed = 3;
    const auto sc = build_time_scenario(f11, split, opt);
    CHECK(sc.kind == ScenarioKind::time);
    CHECK(sc.source.clients.size() == 8);
    for (const auto& cl : sc.source.clients)
      for (const auto& r : cl.data.records) REQUIRE(r.timestamp < split);
    for (const auto& cl : sc.target.clients)
      for (const auto& r : cl.data.records) REQUIRE(r.timestamp >= split);
    const auto tgt = rows_of(sc.target);
    for (auto r : rows_of(sc.holdout)) CHECK(tgt.count(r) == 0);
    for (auto r : previous) CHECK(tgt.count(r) == 1);  // nested subsamples
    previous.clear();
    for (auto r : tgt) previous.insert(r);
  }
  ScenarioOptions opt;
  std::int64_t lo = f11.records[0].timestamp;
  for (const auto& r : f11.records) lo = std::min(lo, r.timestamp);
  CHECK_THROWS_AS(build_time_scenario(f11, lo - 1, opt), std::invalid_argument);
  CHECK_THROWS_AS(build_time_scenario(f11, lo + 400LL * 86400, opt), std::invalid_argument);
}

}  // TEST_SUITE
