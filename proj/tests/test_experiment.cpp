#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include "doctest.h"
#include "fedloc/experiment.hpp"
#include "fedloc/synth.hpp"
#include "helpers.hpp"
#include "json.hpp"

using namespace fedloc;
namespace fs = std::filesystem;

namespace {

// Small corpus on disk, written once per process.
const std::string& data_dir() {
  static const std::string dir = [] {
    const auto d = fs::temp_directory_path() / "fedloc_experiment_data";
    fs::remove_all(d);
    fedloc::SynthConfig cfg;
    cfg.captures_per_point = 3;
    cfg.phase0_sessions_main = 8;
    cfg.phase1_sessions_main = 3;
    cfg.reference_points_per_floor = 60;
    write_synthetic_corpus(d.string(), cfg);
    return d.string();
  }();
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string error_of(const std::string& json_text) {
  try {
    validate_config(json_text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

std::string minimal(const std::string& kind, const std::string& extra = "") {
  return R"({"kind": ")" + kind + R"(", "data_root": ")" + data_dir() + "\"" + extra + "}";
}

MetricRow row(const std::string& method, std::uint64_t seed, std::size_t round, double v,
              const std::string& units = "meters") {
  return {"exp", method, seed, round, units == "meters" ? "mae" : "floor_accuracy", v, units};
}

const SummaryRow* find(const std::vector<SummaryRow>& s, const std::string& a,
                       const std::string& b = "") {
  for (const auto& r : s)
    if (r.method == a && r.vs_method == b) return &r;
  return nullptr;
}

}  // namespace

TEST_SUITE("experiment") {

TEST_CASE("minimal config is fully defaulted") {
  const auto cfg = validate_config(minimal("transfer_device"));
  CHECK(cfg.kind == ExperimentKind::transfer_device);
  CHECK(cfg.name == "transfer_device");
  CHECK(cfg.clients == 8);
  CHECK(cfg.floor == 1);
  CHECK(cfg.rounds == 400);
  CHECK(cfg.transfer_round == 200);
  CHECK(cfg.eval_every == 10);
  CHECK(cfg.seeds == std::vector<std::uint64_t>{1, 2, 3});
  CHECK(cfg.rho_grid == std::vector<double>{1.0});
  CHECK(cfg.methods == methods_for(ExperimentKind::transfer_device));
  CHECK(fs::path(cfg.data_root).is_absolute());

  const auto snap = resolved_snapshot(cfg);
  const auto parsed = nlohmann::json::parse(snap);
  for (const char* key : {"kind", "data_root", "learning_rate", "hidden_layers", "transfer_round",
                          "rho_grid", "seeds", "methods", "output_dir", "holdout_fraction"})
    CHECK_MESSAGE(parsed.contains(key), key);
  CHECK(resolved_snapshot(validate_config(snap)) == snap);

  const auto t = validate_config(minimal("transfer_time"));
  CHECK(t.rho_grid == std::vector<double>{0.25, 0.5, 1.0});
  const auto a = validate_config(minimal("floor3d_a"));
  CHECK(a.clients == 16);
  CHECK_FALSE(a.floor.has_value());
  CHECK(a.methods == std::vector<std::string>{"FL-multiclass", "Centralized", "FedOVA"});
  CHECK(validate_config(minimal("floor3d_b")).methods ==
        std::vector<std::string>{"FedOVA", "FL-multiclass"});
  CHECK(validate_config(minimal("transfer_device", R"(, "rounds": 50)")).transfer_round == 25);
}

TEST_CASE("config errors name the field") {
  CHECK(error_of(minimal("transfer_device", R"(, "rho": 1.5)")).find("rho") == 0);
  CHECK(error_of(minimal("transfer_device", R"(, "rho_grid": [0.5, 0])")).find("rho_grid") == 0);
  CHECK(error_of(minimal("transfer_device", R"(, "lerning_rate": 0.1)")) ==
        "unknown key 'lerning_rate'");
  CHECK(error_of(minimal("transfer_device", R"(, "learning_rate": -1)")).find("learning_rate") == 0);
  CHECK(error_of(minimal("transfer_device", R"(, "seeds": [])")).find("seeds") == 0);
  CHECK(error_of(minimal("transfer_device", R"(, "clients": 1)")).find("clients") == 0);
  CHECK(error_of(minimal("transfer_device", R"(, "transfer_round": 500)")).find("transfer_round") == 0);
  CHECK(error_of(minimal("transfer_device", R"(, "methods": ["FedOVA"])")).find("methods") == 0);
  CHECK(error_of(minimal("warp_drive")).find("kind") == 0);
  CHECK(error_of(R"({"kind": "transfer_device", "data_root": "/nonexistent/fedloc"})").find("data_root") == 0);
  CHECK(error_of("{not json").find("not valid JSON") != std::string::npos);
  CHECK(error_of("[1, 2]") == "config must be a JSON object");
  CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("data root falls back to the environment") {
  const char* old = std::getenv(kDataRootEnv);
  const std::string saved = old ? old : "";
  ::setenv(kDataRootEnv, data_dir().c_str(), 1);
  const auto cfg = validate_config(R"({"kind": "baseline_2d"})");
  CHECK(fs::equivalent(cfg.data_root, data_dir()));
  ::unsetenv(kDataRootEnv);
  CHECK(error_of(R"({"kind": "baseline_2d"})").find("data_root") == 0);
  if (old) ::setenv(kDataRootEnv, saved.c_str(), 1);
}

TEST_CASE("overrides") {
  auto cfg = validate_config(minimal("transfer_time"));
  apply_overrides(cfg, 9, 40);
  CHECK(cfg.seeds == std::vector<std::uint64_t>{9});
  CHECK(cfg.rounds == 40);
  CHECK(cfg.transfer_round == 20);
  apply_overrides(cfg, std::nullopt, 1);
  CHECK(cfg.transfer_round == 1);
  CHECK_THROWS_AS(apply_overrides(cfg, std::nullopt, 0), ConfigError);
}

TEST_CASE("summary arithmetic") {
  SUBCASE("the 4.0 vs 5.0 example") {
    const auto s = summarize({row("H-FedTLoc", 1, 400, 4.0), row("N-FedLoc", 1, 400, 5.0),
                              row("H-FedTLoc", 1, 200, 9.0), row("N-FedLoc", 1, 200, 1.0)});
    const auto* h = find(s, "H-FedTLoc", "N-FedLoc");
    REQUIRE(h);
    CHECK(h->relative_improvement == doctest::Approx(0.2));
    const auto* solo = find(s, "H-FedTLoc");
    REQUIRE(solo);
    CHECK(solo->n_seeds == 1);
    CHECK(solo->final_mean == 4.0);
    CHECK(solo->final_std == 0.0);
  }
  SUBCASE("fractions compare by difference") {
    const auto s = summarize({row("FedOVA", 1, 400, 0.9, "fraction"),
                              row("FL-multiclass", 1, 400, 0.8, "fraction")});
    CHECK(find(s, "FedOVA", "FL-multiclass")->relative_improvement == doctest::Approx(0.1));
    CHECK(find(s, "FedOVA", "FL-multiclass")->units == "fraction");
  }
  SUBCASE("recomputed from raw rows") {
    Rng rng(5);
    std::vector<MetricRow> rows;
    std::map<std::string, std::vector<double>> finals;
    for (const char* m : {"A", "B", "C"}) {
      for (std::uint64_t seed = 1; seed <= 4; ++seed) {
        const std::size_t last = 20 + rng.below(3) * 10;
        for (std::size_t r = 10; r <= last; r += 10) rows.push_back(row(m, seed, r, rng.uniform(1, 20)));
        finals[m].push_back(rows.back().value);
      }
    }
    std::vector<MetricRow> shuffled = rows;
    std::reverse(shuffled.begin(), shuffled.end());
    const auto s = summarize(shuffled);
    std::map<std::string, double> mean;
    for (const auto& [m, v] : finals) {
      double mu = 0.0;
      for (double x : v) mu += x;
      mu /= static_cast<double>(v.size());
      double var = 0.0;
      for (double x : v) var += (x - mu) * (x - mu);
      const auto* r = find(s, m);
      REQUIRE(r);
      CHECK(r->n_seeds == 4);
      CHECK(r->final_mean == doctest::Approx(mu).epsilon(1e-12));
      CHECK(r->final_std == doctest::Approx(std::sqrt(var / 3.0)).epsilon(1e-12));
      mean[m] = mu;
    }
    for (const auto& [a, ma] : mean) {
      for (const auto& [b, mb] : mean) {
        if (a == b) continue;
        const auto* r = find(s, a, b);
        REQUIRE(r);
        CHECK(r->relative_improvement == doctest::Approx((mb - ma) / mb).epsilon(1e-12));
        CHECK((r->relative_improvement > 0) == (ma < mb));
      }
    }
  }
}

TEST_CASE("results table round trip") {
  Rng rng(6);
  std::vector<MetricRow> rows;
  for (int i = 0; i < 200; ++i)
    rows.push_back({"exp_rho0.25", "H-FedTLoc", 1 + rng.below(5), 10 * (1 + rng.below(40)), "mae",
                    rng.normal() * std::pow(10.0, rng.uniform(-8, 8)), "meters"});
  const auto text = format_results_csv(rows);
  CHECK(text.rfind(results_csv_header() + "\n", 0) == 0);
  const auto back = parse_results_csv(text);
  REQUIRE(back.size() == rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    REQUIRE(back[i].experiment_id == rows[i].experiment_id);
    REQUIRE(back[i].method_tag == rows[i].method_tag);
    REQUIRE(back[i].seed == rows[i].seed);
    REQUIRE(back[i].round == rows[i].round);
    REQUIRE(back[i].metric == rows[i].metric);
    REQUIRE(back[i].value == rows[i].value);
    REQUIRE(back[i].units == rows[i].units);
  }
  CHECK_THROWS(parse_results_csv("wrong,header\n"));
  CHECK_THROWS(parse_results_csv(results_csv_header() + "\nexp,H,1,10,mae\n"));
}

TEST_CASE("end-to-end runs are reproducible from the snapshot") {
  const auto out = fs::temp_directory_path() / "fedloc_e2e";
  fs::remove_all(out);
  struct Case {
    const char* kind;
    std::size_t runs;
    std::size_t points;  // evaluated rounds per run
  };
  for (const Case& c : {Case{"transfer_device", 3 * 2, 4}, Case{"transfer_time", 3 * 2 * 2, 4},
                        Case{"floor3d_b", 2 * 2, 4}, Case{"baseline_2d", 2 * 2, 4}}) {
    CAPTURE(c.kind);
    const auto dir = out / c.kind;
    std::string extra = R"(, "rounds": 8, "eval_every": 2, "seeds": [1, 2], "hidden_layers": [8],)"
                        R"( "output_dir": ")" + dir.string() + "\"";
    if (std::string(c.kind) == "transfer_time") extra += R"(, "rho_grid": [0.5, 1.0])";
    if (std::string(c.kind) == "floor3d_b") extra += R"(, "clients": 8)";
    const auto cfg = validate_config(minimal(c.kind, extra));
    const auto art = run_experiment(cfg);
    CHECK_FALSE(art.any_failed());
    CHECK(art.runs.size() == c.runs);
    CHECK(art.rows.size() == c.runs * c.points);

    std::set<std::tuple<std::string, std::string, std::uint64_t, std::size_t, std::string>> keys;
    for (const auto& r : art.rows) {
      REQUIRE(std::isfinite(r.value));
      REQUIRE((r.units == "meters" || r.units == "fraction"));
      keys.insert({r.experiment_id, r.method_tag, r.seed, r.round, r.metric});
    }
    CHECK(keys.size() == art.rows.size());

    for (const char* f : {"results.csv", "summary.csv", "runs.csv", "config.resolved"})
      CHECK_MESSAGE(fs::exists(dir / f), f);
    CHECK(read_results_csv((dir / "results.csv").string()).size() == art.rows.size());
    CHECK(slurp(dir / "config.resolved") == art.snapshot);
    CHECK(fs::exists(dir / "checkpoints"));

    const std::string first = slurp(dir / "results.csv");
    const std::string first_summary = slurp(dir / "summary.csv");
    fs::remove_all(dir);
    const auto snapshot_path = out / (std::string(c.kind) + ".json");
    std::ofstream(snapshot_path) << art.snapshot;
    const auto again = run_experiment(load_config(snapshot_path.string()));
    CHECK_FALSE(again.any_failed());
    CHECK(slurp(dir / "results.csv") == first);
    CHECK(slurp(dir / "summary.csv") == first_summary);
  }
  fs::remove_all(out);
}

TEST_CASE("failed runs are recorded, not fatal") {
  const auto dir = fs::temp_directory_path() / "fedloc_e2e_fail";
  fs::remove_all(dir);
  // A learning rate this large diverges within the first round.
  const auto cfg = validate_config(minimal(
      "baseline_2d", R"(, "rounds": 4, "eval_every": 2, "seeds": [1], "hidden_layers": [8],)"
                     R"( "learning_rate": 1e8, "output_dir": ")" + dir.string() + "\""));
  const auto art = run_experiment(cfg);
  CHECK(art.any_failed());
  bool failed = false;
  for (const auto& r : art.runs) failed |= !r.ok && !r.detail.empty();
  CHECK(failed);
  CHECK(slurp(dir / "runs.csv").find(",failed,") != std::string::npos);
  fs::remove_all(dir);
}

}  // TEST_SUITE
