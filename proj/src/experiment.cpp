#include "fedloc/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include "fedloc/dataset.hpp"
#include "fedloc/floor3d.hpp"
#include "fedloc/rng.hpp"
#include "fedloc/transfer.hpp"
#include "json.hpp"

namespace fedloc {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

const char* to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::transfer_device: return "transfer_device";
    case ExperimentKind::transfer_time: return "transfer_time";
    case ExperimentKind::floor3d_a: return "floor3d_a";
    case ExperimentKind::floor3d_b: return "floor3d_b";
    case ExperimentKind::baseline_2d: return "baseline_2d";
  }
  return "?";
}

ExperimentKind parse_experiment_kind(const std::string& s) {
  for (auto k : {ExperimentKind::transfer_device, ExperimentKind::transfer_time,
                 ExperimentKind::floor3d_a, ExperimentKind::floor3d_b,
                 ExperimentKind::baseline_2d})
    if (s == to_string(k)) return k;
  throw ConfigError("kind: unknown experiment kind '" + s + "'");
}

std::vector<std::string> methods_for(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::transfer_device:
    case ExperimentKind::transfer_time:
      return {"H-FedTLoc", "FedLoc", "N-FedLoc"};
    case ExperimentKind::floor3d_a: return {"FL-multiclass", "Centralized", "FedOVA"};
    case ExperimentKind::floor3d_b: return {"FedOVA", "FL-multiclass"};
    case ExperimentKind::baseline_2d: return {"FedLoc", "Centralized"};
  }
  return {};
}

namespace {

bool is_transfer(ExperimentKind k) {
  return k == ExperimentKind::transfer_device || k == ExperimentKind::transfer_time;
}

bool is_3d(ExperimentKind k) {
  return k == ExperimentKind::floor3d_a || k == ExperimentKind::floor3d_b;
}

MlpArchitecture make_arch(const ExperimentConfig& c, std::size_t out, Head head) {
  MlpArchitecture a;
  a.layer_widths.push_back(kNumWaps);
  for (auto w : c.hidden_layers) a.layer_widths.push_back(w);
  a.layer_widths.push_back(out);
  a.hidden_activation = c.activation;
  a.output_head = head;
  return a;
}

}  // namespace

MlpArchitecture ExperimentConfig::regression_arch() const { return make_arch(*this, 2, Head::linear); }
MlpArchitecture ExperimentConfig::floor_arch(std::size_t floors) const {
  return make_arch(*this, floors, Head::softmax);
}
MlpArchitecture ExperimentConfig::ova_arch() const { return make_arch(*this, 1, Head::sigmoid); }

std::string ExperimentConfig::training_path() const {
  return (fs::path(data_root) / training_file).string();
}
std::string ExperimentConfig::validation_path() const {
  return validation_file.empty() ? std::string() : (fs::path(data_root) / validation_file).string();
}

bool RunArtifacts::any_failed() const {
  return std::any_of(runs.begin(), runs.end(), [](const RunStatus& r) { return !r.ok; });
}

// --- config ------------------------------------------------------------------

namespace {

const std::set<std::string> kKnownKeys = {
    "kind", "name", "data_root", "training_file", "validation_file", "building", "floor",
    "clients", "hidden_layers", "activation", "learning_rate", "batch_size", "local_epochs",
    "participation_fraction", "rounds", "eval_every", "workers", "transfer_round",
    "freeze_prefix", "subglobal_learning_rate", "subglobal_local_epochs", "target_phone",
    "split_time", "holdout_fraction", "group_by_location", "rho", "rho_grid",
    "positive_weight", "floor_holdout", "methods", "seeds", "output_dir", "checkpoints", "jobs"};

[[noreturn]] void field_error(const std::string& key, const std::string& what) {
  throw ConfigError(key + ": " + what);
}

std::uint64_t get_uint(const json& v, const std::string& key, std::uint64_t min_value) {
  if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0))
    field_error(key, "expected a non-negative integer, got " + v.dump());
  const auto x = v.get<std::uint64_t>();
  if (x < min_value) field_error(key, "must be at least " + std::to_string(min_value) + ", got " + v.dump());
  return x;
}

int get_int(const json& v, const std::string& key, int lo, int hi) {
  if (!v.is_number_integer()) field_error(key, "expected an integer, got " + v.dump());
  const auto x = v.get<std::int64_t>();
  if (x < lo || x > hi)
    field_error(key, "must be in [" + std::to_string(lo) + ", " + std::to_string(hi) + "], got " + v.dump());
  return static_cast<int>(x);
}

double get_real(const json& v, const std::string& key) {
  if (!v.is_number()) field_error(key, "expected a number, got " + v.dump());
  const double x = v.get<double>();
  if (!std::isfinite(x)) field_error(key, "must be finite");
  return x;
}

std::string get_string(const json& v, const std::string& key) {
  if (!v.is_string()) field_error(key, "expected a string, got " + v.dump());
  return v.get<std::string>();
}

bool get_bool(const json& v, const std::string& key) {
  if (!v.is_boolean()) field_error(key, "expected true or false, got " + v.dump());
  return v.get<bool>();
}

std::string fmt_real(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", x);
  return buf;
}

}  // namespace

ExperimentConfig validate_config(const std::string& json_text) {
  json raw;
  try {
    raw = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!raw.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, value] : raw.items()) {
    if (!kKnownKeys.count(key)) throw ConfigError("unknown key '" + key + "'");
  }
  if (!raw.contains("kind")) throw ConfigError("kind: required");

  ExperimentConfig c;
  c.kind = parse_experiment_kind(get_string(raw["kind"], "kind"));
  const bool three_d = is_3d(c.kind);
  c.name = to_string(c.kind);
  c.clients = three_d ? 16 : 8;
  c.floor = three_d ? std::nullopt : std::optional<int>(1);
  if (c.kind == ExperimentKind::transfer_time) c.rho_grid = {0.25, 0.5, 1.0};
  c.methods = methods_for(c.kind);

  auto has = [&](const char* k) { return raw.contains(k) && !raw[k].is_null(); };

  if (has("name")) {
    c.name = get_string(raw["name"], "name");
    if (c.name.empty() || c.name.find_first_of(",\"\n/\\") != std::string::npos)
      field_error("name", "must be nonempty without commas, quotes, slashes or newlines");
  }
  if (has("data_root")) c.data_root = get_string(raw["data_root"], "data_root");
  if (has("training_file")) c.training_file = get_string(raw["training_file"], "training_file");
  if (raw.contains("validation_file"))
    c.validation_file = raw["validation_file"].is_null() ? "" : get_string(raw["validation_file"], "validation_file");
  if (has("building")) c.building = get_int(raw["building"], "building", 0, 2);
  if (raw.contains("floor")) {
    if (raw["floor"].is_null()) {
      c.floor.reset();
    } else {
      if (three_d) field_error("floor", "not used by 3D experiments (the whole building is used)");
      c.floor = get_int(raw["floor"], "floor", 0, 4);
    }
  }
  if (!three_d && !c.floor) field_error("floor", "required for 2D experiments");
  if (has("clients")) c.clients = get_uint(raw["clients"], "clients", 1);
  if (c.kind == ExperimentKind::transfer_device && c.clients < 2)
    field_error("clients", "device transfer needs at least 2 selected phones");

  if (has("hidden_layers")) {
    const auto& h = raw["hidden_layers"];
    if (!h.is_array() || h.empty()) field_error("hidden_layers", "expected a nonempty list of widths");
    c.hidden_layers.clear();
    for (std::size_t i = 0; i < h.size(); ++i)
      c.hidden_layers.push_back(get_uint(h[i], "hidden_layers[" + std::to_string(i) + "]", 1));
  }
  if (has("activation")) {
    try {
      c.activation = parse_activation(get_string(raw["activation"], "activation"));
    } catch (const std::invalid_argument&) {
      field_error("activation", "expected \"relu\" or \"tanh\", got " + raw["activation"].dump());
    }
  }

  auto positive_real = [&](const char* key, double& out) {
    if (!has(key)) return;
    out = get_real(raw[key], key);
    if (!(out > 0.0)) field_error(key, "must be positive, got " + raw[key].dump());
  };
  positive_real("learning_rate", c.learning_rate);
  positive_real("subglobal_learning_rate", c.subglobal_learning_rate);
  positive_real("positive_weight", c.positive_weight);
  if (has("batch_size")) c.batch_size = get_uint(raw["batch_size"], "batch_size", 1);
  if (has("local_epochs")) c.local_epochs = get_uint(raw["local_epochs"], "local_epochs", 1);
  if (has("subglobal_local_epochs"))
    c.subglobal_local_epochs = get_uint(raw["subglobal_local_epochs"], "subglobal_local_epochs", 1);
  if (has("participation_fraction")) {
    c.participation_fraction = get_real(raw["participation_fraction"], "participation_fraction");
    if (!(c.participation_fraction > 0.0 && c.participation_fraction <= 1.0))
      field_error("participation_fraction", "must be in (0, 1], got " + raw["participation_fraction"].dump());
  }
  if (has("rounds")) c.rounds = get_uint(raw["rounds"], "rounds", 1);
  if (has("eval_every")) c.eval_every = get_uint(raw["eval_every"], "eval_every", 1);
  if (has("workers")) c.workers = get_uint(raw["workers"], "workers", 1);
  if (has("jobs")) c.jobs = get_uint(raw["jobs"], "jobs", 1);

  if (has("transfer_round")) {
    c.transfer_round = get_uint(raw["transfer_round"], "transfer_round", 1);
  } else {
    c.transfer_round = std::max<std::size_t>(1, c.rounds / 2);
  }
  if (c.transfer_round > c.rounds)
    field_error("transfer_round", "must not exceed rounds (" + std::to_string(c.rounds) + ")");
  if (has("freeze_prefix")) c.freeze_prefix = get_uint(raw["freeze_prefix"], "freeze_prefix", 0);
  if (c.freeze_prefix > c.hidden_layers.size())
    field_error("freeze_prefix", "must leave at least the output layer trainable (at most " +
                                     std::to_string(c.hidden_layers.size()) + ")");
  if (has("target_phone")) c.target_phone = get_int(raw["target_phone"], "target_phone", 0, 1 << 30);
  if (has("split_time")) {
    if (!raw["split_time"].is_number_integer()) field_error("split_time", "expected unix seconds");
    c.split_time = raw["split_time"].get<std::int64_t>();
  }
  if (has("holdout_fraction")) {
    c.holdout_fraction = get_real(raw["holdout_fraction"], "holdout_fraction");
    if (!(c.holdout_fraction > 0.0 && c.holdout_fraction < 1.0))
      field_error("holdout_fraction", "must be in (0, 1), got " + raw["holdout_fraction"].dump());
  }
  if (has("group_by_location")) c.group_by_location = get_bool(raw["group_by_location"], "group_by_location");

  if (has("rho") && has("rho_grid")) throw ConfigError("rho: give either rho or rho_grid, not both");
  auto check_rho = [](double r, const std::string& key) {
    if (!(r > 0.0 && r <= 1.0)) field_error(key, "must be in (0, 1], got " + fmt_real(r));
  };
  if (has("rho")) {
    const double r = get_real(raw["rho"], "rho");
    check_rho(r, "rho");
    c.rho_grid = {r};
  }
  if (has("rho_grid")) {
    const auto& g = raw["rho_grid"];
    if (!g.is_array() || g.empty()) field_error("rho_grid", "expected a nonempty list");
    c.rho_grid.clear();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const std::string key = "rho_grid[" + std::to_string(i) + "]";
      const double r = get_real(g[i], key);
      check_rho(r, key);
      if (std::find(c.rho_grid.begin(), c.rho_grid.end(), r) != c.rho_grid.end())
        field_error(key, "duplicate value " + fmt_real(r));
      c.rho_grid.push_back(r);
    }
  }
  if (!is_transfer(c.kind) && (c.rho_grid.size() != 1 || c.rho_grid[0] != 1.0))
    field_error("rho_grid", "only used by transfer experiments");

  if (has("floor_holdout")) {
    c.floor_holdout = get_string(raw["floor_holdout"], "floor_holdout");
    if (c.floor_holdout != "validation" && c.floor_holdout != "split")
      field_error("floor_holdout", "expected \"validation\" or \"split\", got " + raw["floor_holdout"].dump());
  }
  if (three_d && c.floor_holdout == "validation" && c.validation_file.empty())
    field_error("floor_holdout", "\"validation\" needs a validation_file");

  if (has("methods")) {
    const auto& m = raw["methods"];
    if (!m.is_array() || m.empty()) field_error("methods", "expected a nonempty list");
    const auto valid = methods_for(c.kind);
    c.methods.clear();
    for (std::size_t i = 0; i < m.size(); ++i) {
      const std::string key = "methods[" + std::to_string(i) + "]";
      const auto tag = get_string(m[i], key);
      if (std::find(valid.begin(), valid.end(), tag) == valid.end()) {
        std::string list;
        for (const auto& v : valid) list += (list.empty() ? "" : ", ") + v;
        field_error(key, "'" + tag + "' is not a method of " + to_string(c.kind) + " (" + list + ")");
      }
      if (std::find(c.methods.begin(), c.methods.end(), tag) != c.methods.end())
        field_error(key, "duplicate method '" + tag + "'");
      c.methods.push_back(tag);
    }
  }
  if (has("seeds")) {
    const auto& s = raw["seeds"];
    if (!s.is_array() || s.empty()) field_error("seeds", "expected a nonempty list");
    c.seeds.clear();
    for (std::size_t i = 0; i < s.size(); ++i) {
      const std::string key = "seeds[" + std::to_string(i) + "]";
      const auto seed = get_uint(s[i], key, 0);
      if (std::find(c.seeds.begin(), c.seeds.end(), seed) != c.seeds.end())
        field_error(key, "duplicate seed " + std::to_string(seed));
      c.seeds.push_back(seed);
    }
  } else if (raw.contains("seeds")) {
    field_error("seeds", "must not be null");
  }
  if (has("output_dir")) {
    c.output_dir = get_string(raw["output_dir"], "output_dir");
    if (c.output_dir.empty()) field_error("output_dir", "must be nonempty");
  }
  if (has("checkpoints")) c.checkpoints = get_bool(raw["checkpoints"], "checkpoints");

  // Dataset paths must exist now rather than deep into a run.
  if (c.data_root.empty()) {
    if (const char* env = std::getenv(kDataRootEnv); env && *env) c.data_root = env;
  }
  if (c.data_root.empty())
    field_error("data_root", std::string("not set (set it in the config or via ") + kDataRootEnv + ")");
  if (!fs::is_directory(c.data_root)) field_error("data_root", "'" + c.data_root + "' is not a directory");
  c.data_root = fs::absolute(c.data_root).lexically_normal().string();
  if (!fs::is_regular_file(c.training_path()))
    field_error("training_file", "'" + c.training_path() + "' does not exist");
  if (!c.validation_file.empty() && !fs::is_regular_file(c.validation_path()))
    field_error("validation_file", "'" + c.validation_path() + "' does not exist");
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return validate_config(ss.str());
}

void apply_overrides(ExperimentConfig& cfg, std::optional<std::uint64_t> seed,
                     std::optional<std::size_t> rounds) {
  if (seed) cfg.seeds = {*seed};
  if (rounds) {
    if (*rounds == 0) throw ConfigError("rounds override must be positive");
    const double scale = static_cast<double>(*rounds) / static_cast<double>(cfg.rounds);
    cfg.transfer_round = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::llround(static_cast<double>(cfg.transfer_round) * scale)),
        1, *rounds);
    cfg.rounds = *rounds;
  }
}

std::string resolved_snapshot(const ExperimentConfig& c) {
  json j;
  j["kind"] = to_string(c.kind);
  j["name"] = c.name;
  j["data_root"] = c.data_root;
  j["training_file"] = c.training_file;
  j["validation_file"] = c.validation_file;
  j["building"] = c.building;
  j["floor"] = c.floor ? json(*c.floor) : json(nullptr);
  j["clients"] = c.clients;
  j["hidden_layers"] = c.hidden_layers;
  j["activation"] = to_string(c.activation);
  j["learning_rate"] = c.learning_rate;
  j["batch_size"] = c.batch_size;
  j["local_epochs"] = c.local_epochs;
  j["participation_fraction"] = c.participation_fraction;
  j["rounds"] = c.rounds;
  j["eval_every"] = c.eval_every;
  j["workers"] = c.workers;
  j["transfer_round"] = c.transfer_round;
  j["freeze_prefix"] = c.freeze_prefix;
  j["subglobal_learning_rate"] = c.subglobal_learning_rate;
  j["subglobal_local_epochs"] = c.subglobal_local_epochs;
  j["target_phone"] = c.target_phone ? json(*c.target_phone) : json(nullptr);
  j["split_time"] = c.split_time ? json(*c.split_time) : json(nullptr);
  j["holdout_fraction"] = c.holdout_fraction;
  j["group_by_location"] = c.group_by_location;
  j["rho_grid"] = c.rho_grid;
  j["positive_weight"] = c.positive_weight;
  j["floor_holdout"] = c.floor_holdout;
  j["methods"] = c.methods;
  j["seeds"] = c.seeds;
  j["output_dir"] = c.output_dir;
  j["checkpoints"] = c.checkpoints;
  j["jobs"] = c.jobs;
  return j.dump(2) + "\n";
}

// --- csv ---------------------------------------------------------------------

namespace {

std::string fmt_value(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch == '\n' ? ' ' : ch;
  }
  return out + "\"";
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out(1);
  for (char ch : line) {
    if (ch == ',') out.emplace_back();
    else if (ch != '\r') out.back() += ch;
  }
  return out;
}

}  // namespace

std::string results_csv_header() { return "experiment_id,method_tag,seed,round,metric,value,units"; }

std::string format_results_csv(const std::vector<MetricRow>& rows) {
  std::string out = results_csv_header() + "\n";
  for (const auto& r : rows) {
    out += r.experiment_id + "," + r.method_tag + "," + std::to_string(r.seed) + "," +
           std::to_string(r.round) + "," + r.metric + "," + fmt_value(r.value) + "," + r.units + "\n";
  }
  return out;
}

std::vector<MetricRow> parse_results_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("results.csv: empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != results_csv_header()) throw std::runtime_error("results.csv: unexpected header '" + line + "'");
  std::vector<MetricRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto f = split_line(line);
    if (f.size() != 7)
      throw std::runtime_error("results.csv: line " + std::to_string(line_no) + " has " +
                               std::to_string(f.size()) + " fields, expected 7");
    MetricRow r;
    try {
      std::size_t pos = 0;
      r.experiment_id = f[0];
      r.method_tag = f[1];
      r.seed = std::stoull(f[2], &pos);
      if (pos != f[2].size()) throw std::invalid_argument("seed");
      r.round = std::stoull(f[3], &pos);
      if (pos != f[3].size()) throw std::invalid_argument("round");
      r.metric = f[4];
      r.value = std::stod(f[5], &pos);
      if (pos != f[5].size()) throw std::invalid_argument("value");
      r.units = f[6];
    } catch (const std::exception&) {
      throw std::runtime_error("results.csv: line " + std::to_string(line_no) + " is malformed");
    }
    if (!std::isfinite(r.value))
      throw std::runtime_error("results.csv: line " + std::to_string(line_no) + " has a non-finite value");
    if (r.units != "meters" && r.units != "fraction")
      throw std::runtime_error("results.csv: line " + std::to_string(line_no) + " has unknown units '" +
                               r.units + "'");
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<MetricRow> read_results_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_results_csv(ss.str());
}

std::string summary_csv_header() {
  return "experiment_id,metric,units,method,n_seeds,final_mean,final_std,vs_method,relative_improvement";
}

std::string format_summary_csv(const std::vector<SummaryRow>& rows) {
  std::string out = summary_csv_header() + "\n";
  for (const auto& r : rows) {
    out += r.experiment_id + "," + r.metric + "," + r.units + "," + r.method + "," +
           std::to_string(r.n_seeds) + "," + fmt_value(r.final_mean) + "," + fmt_value(r.final_std) +
           "," + r.vs_method + "," + (r.vs_method.empty() ? "" : fmt_value(r.relative_improvement)) +
           "\n";
  }
  return out;
}

// --- summary -----------------------------------------------------------------

std::vector<SummaryRow> summarize(const std::vector<MetricRow>& rows) {
  struct Final {
    std::size_t round = 0;
    double value = 0.0;
  };
  using GroupKey = std::pair<std::string, std::string>;  // experiment, metric
  std::vector<GroupKey> groups;
  std::map<GroupKey, std::vector<std::string>> methods;  // first-appearance order
  std::map<GroupKey, std::string> units;
  std::map<std::tuple<std::string, std::string, std::string, std::uint64_t>, Final> finals;

  for (const auto& r : rows) {
    const GroupKey g{r.experiment_id, r.metric};
    if (!methods.count(g)) groups.push_back(g);
    auto& m = methods[g];
    if (std::find(m.begin(), m.end(), r.method_tag) == m.end()) m.push_back(r.method_tag);
    units[g] = r.units;
    auto [it, inserted] = finals.try_emplace({r.experiment_id, r.metric, r.method_tag, r.seed},
                                             Final{r.round, r.value});
    if (!inserted && r.round >= it->second.round) it->second = {r.round, r.value};
  }

  std::vector<SummaryRow> out;
  for (const auto& g : groups) {
    std::map<std::string, SummaryRow> stats;
    for (const auto& m : methods[g]) {
      std::vector<double> v;
      for (const auto& [k, f] : finals)
        if (std::get<0>(k) == g.first && std::get<1>(k) == g.second && std::get<2>(k) == m)
          v.push_back(f.value);
      SummaryRow s;
      s.experiment_id = g.first;
      s.metric = g.second;
      s.units = units[g];
      s.method = m;
      s.n_seeds = v.size();
      double sum = 0.0;
      for (double x : v) sum += x;
      s.final_mean = sum / static_cast<double>(v.size());
      if (v.size() > 1) {
        double ss = 0.0;
        for (double x : v) ss += (x - s.final_mean) * (x - s.final_mean);
        s.final_std = std::sqrt(ss / static_cast<double>(v.size() - 1));
      }
      stats[m] = s;
      out.push_back(s);
    }
    for (const auto& a : methods[g]) {
      for (const auto& b : methods[g]) {
        if (a == b) continue;
        SummaryRow s = stats[a];
        s.vs_method = b;
        const double ma = stats[a].final_mean, mb = stats[b].final_mean;
        s.relative_improvement = s.units == "meters" ? (mb - ma) / mb : ma - mb;
        out.push_back(s);
      }
    }
  }
  return out;
}

// --- running -----------------------------------------------------------------

namespace {

struct TaskResult {
  std::vector<MetricRow> rows;
  RunStatus status;
};

struct Task {
  std::string experiment_id;
  std::string method;
  std::uint64_t seed = 0;
  std::function<TaskResult(const Task&)> fn;
};

FederationConfig federation(const ExperimentConfig& c, std::uint64_t seed) {
  FederationConfig f;
  f.rounds = c.rounds;
  f.participation_fraction = c.participation_fraction;
  f.hp.learning_rate = c.learning_rate;
  f.hp.batch_size = c.batch_size;
  f.hp.local_epochs = c.local_epochs;
  f.eval_every = c.eval_every;
  f.seed = seed;
  f.workers = c.workers;
  return f;
}

void append_curve(TaskResult& out, const Task& t, const std::vector<std::pair<std::size_t, double>>& curve,
                  Metric metric) {
  for (const auto& [round, value] : curve) {
    out.rows.push_back({t.experiment_id, t.method, t.seed, round,
                        metric == Metric::mae_meters ? "mae" : "floor_accuracy", value,
                        metric_units(metric)});
  }
}

std::vector<std::pair<std::size_t, double>> curve_of(const TrainingTrace& tr) {
  std::vector<std::pair<std::size_t, double>> c;
  for (const auto& r : tr.rounds)
    if (r.eval_metric) c.emplace_back(r.round, *r.eval_metric);
  return c;
}

std::string checkpoint_name(const Task& t) {
  return (fs::path("checkpoints") / t.experiment_id / (t.method + "_seed" + std::to_string(t.seed))).string();
}

struct Corpus {
  FingerprintSet training;
  FingerprintSet validation;
};

Corpus load_corpus(const ExperimentConfig& c) {
  Corpus k;
  k.training = load_csv(c.training_path(), Provenance::training);
  if (!c.validation_file.empty()) k.validation = load_csv(c.validation_path(), Provenance::validation);
  return k;
}

std::size_t floor_count(const FingerprintSet& set) {
  std::set<int> floors;
  for (const auto& r : set.records) floors.insert(r.floor);
  if (floors.empty()) throw std::invalid_argument("no records in the selected building");
  const int top = *floors.rbegin();
  for (int f = 0; f <= top; ++f)
    if (!floors.count(f)) throw std::invalid_argument("building has no records on floor " + std::to_string(f));
  return static_cast<std::size_t>(top) + 1;
}

void transfer_tasks(const ExperimentConfig& c, const Corpus& corpus, const fs::path& out_dir,
                    std::vector<Task>& tasks) {
  const auto set = filter(corpus.training, c.building, c.floor);
  const auto validation = filter(corpus.validation, c.building, c.floor);
  const auto arch = c.regression_arch();
  const bool device = c.kind == ExperimentKind::transfer_device;

  int target_phone = -1;
  std::int64_t split_time = 0;
  if (device) {
    if (set.empty()) throw std::invalid_argument("no records for the selected building/floor");
    target_phone = c.target_phone ? *c.target_phone : phone_ranking(set).front().first;
  } else {
    split_time = c.split_time ? *c.split_time : choose_split_time(set);
  }

  for (double rho : c.rho_grid) {
    const std::string exp_id = c.name + "_rho" + fmt_real(rho);
    for (auto seed : c.seeds) {
      // Built once per (rho, seed) and shared by the methods.
      auto problem = std::make_shared<std::optional<TransferProblem>>();
      auto error = std::make_shared<std::string>();
      auto detail = std::make_shared<std::string>();
      try {
        ScenarioOptions opt;
        opt.n_clients = c.clients;
        opt.rho = rho;
        opt.holdout_fraction = c.holdout_fraction;
        opt.group_by_location = c.group_by_location;
        opt.seed = seed;
        const auto sc = device ? build_device_scenario(set, validation, target_phone, opt)
                               : build_time_scenario(set, split_time, opt);
        *problem = prepare_transfer(sc, arch);
        *detail = sc.description + "|source=" + std::to_string(sc.source.total_records()) +
                  "|target=" + std::to_string(sc.target.total_records()) +
                  "|holdout=" + std::to_string(sc.holdout.size());
        if (!device) *detail += "|split_time=" + std::to_string(split_time);
      } catch (const std::exception& e) {
        *error = e.what();
      }

      TransferConfig tc;
      tc.transfer_round = c.transfer_round;
      tc.total_rounds = c.rounds;
      tc.freeze_prefix = c.freeze_prefix;
      tc.global_cfg = federation(c, seed);
      tc.subglobal_cfg = tc.global_cfg;
      tc.subglobal_cfg.hp.learning_rate = c.subglobal_learning_rate;
      tc.subglobal_cfg.hp.local_epochs = c.subglobal_local_epochs;
      tc.init_seed = seed;

      for (const auto& method : c.methods) {
        Task t{exp_id, method, seed, {}};
        t.fn = [=, &c](const Task& task) {
          TaskResult r;
          r.status = {task.experiment_id, task.method, task.seed, true, "", *detail};
          if (!problem->has_value()) throw std::runtime_error(*error);
          const Method m = method == "H-FedTLoc" ? Method::h_fedtloc
                           : method == "FedLoc"  ? Method::fedloc
                                                 : Method::n_fedloc;
          const StageTrace st = run_method(m, **problem, tc);
          if (!st.complete()) {
            throw DivergenceError(!st.global_trace.complete ? st.global_trace.error
                                                            : st.subglobal_trace.error);
          }
          append_curve(r, task, st.curve(), Metric::mae_meters);
          if (c.checkpoints) {
            const std::string rel = checkpoint_name(task) + ".params";
            fs::create_directories((out_dir / rel).parent_path());
            write_params((out_dir / rel).string(), st.final_params(), arch);
            r.status.checkpoint = rel;
          }
          return r;
        };
        tasks.push_back(std::move(t));
      }
    }
  }
}

void floor_tasks(const ExperimentConfig& c, const Corpus& corpus, const fs::path& out_dir,
                 std::vector<Task>& tasks) {
  const auto building = filter(corpus.training, c.building, std::nullopt);
  const std::size_t floors = floor_count(building);
  const NormalizationSpec norm;  // floor labels only need the RSS scaling
  const bool scenario_a = c.kind == ExperimentKind::floor3d_a;

  for (auto seed : c.seeds) {
    struct Prepared {
      std::vector<ClientHandle> clients;
      Batch pooled;
      EvalData holdout;
      std::string detail;
    };
    auto prep = std::make_shared<std::optional<Prepared>>();
    auto error = std::make_shared<std::string>();
    try {
      Prepared p;
      FingerprintSet train = building, holdout;
      if (c.floor_holdout == "validation") {
        holdout = filter(corpus.validation, c.building, std::nullopt);
        if (holdout.empty()) throw std::invalid_argument("no validation records for the building");
      } else {
        auto [h, rest] = c.group_by_location
                             ? split_by_location(building, c.holdout_fraction, mix_seed(seed, 1))
                             : split_fraction(building, c.holdout_fraction, mix_seed(seed, 1));
        holdout = std::move(h);
        train = std::move(rest);
      }
      const std::size_t per_floor = std::max<std::size_t>(1, c.clients / floors);
      const auto assignment = scenario_a ? partition_uniform(train, c.clients, seed)
                                         : partition_by_floor(train, per_floor, seed);
      for (const auto& cd : assignment.clients)
        p.clients.push_back({cd.client_id, make_floor_batch(cd.data, norm, floors)});
      p.pooled = make_floor_batch(train, norm, floors);
      p.holdout = make_eval_data(holdout, norm);
      p.detail = std::string(scenario_a ? "A" : "B") + "|building=" + std::to_string(c.building) +
                 "|floors=" + std::to_string(floors) + "|clients=" +
                 std::to_string(assignment.clients.size()) + "|train=" + std::to_string(train.size()) +
                 "|holdout=" + std::to_string(holdout.size()) + "|partition=" + to_string(assignment.axis);
      *prep = std::move(p);
    } catch (const std::exception& e) {
      *error = e.what();
    }

    for (const auto& method : c.methods) {
      Task t{c.name, method, seed, {}};
      t.fn = [=, &c](const Task& task) {
        TaskResult r;
        if (!prep->has_value()) throw std::runtime_error(*error);
        const Prepared& p = **prep;
        r.status = {task.experiment_id, task.method, task.seed, true, "", p.detail};
        FederationConfig f = federation(c, seed);
        const std::string rel = checkpoint_name(task);
        if (method == "FedOVA") {
          f.hp.loss.positive_weight = c.positive_weight;
          const auto res = train_fedova(p.clients, floors, c.ova_arch(), f, seed, p.holdout);
          if (!res.accuracy_trace.complete) throw DivergenceError(res.accuracy_trace.error);
          append_curve(r, task, curve_of(res.accuracy_trace), Metric::accuracy);
          if (c.checkpoints) {
            write_ensemble((out_dir / rel).string(), res.ensemble);
            r.status.checkpoint = rel;
          }
          return r;
        }
        const auto arch = c.floor_arch(floors);
        const TrainingTrace tr = method == "Centralized"
                                     ? train_centralized(p.pooled, arch, f, seed, Metric::accuracy, p.holdout)
                                     : train_fl_multiclass(p.clients, floors, arch, f, seed, p.holdout);
        if (!tr.complete) throw DivergenceError(tr.error);
        append_curve(r, task, curve_of(tr), Metric::accuracy);
        if (c.checkpoints) {
          fs::create_directories((out_dir / rel).parent_path());
          write_params((out_dir / (rel + ".params")).string(), tr.final_params, arch);
          r.status.checkpoint = rel + ".params";
        }
        return r;
      };
      tasks.push_back(std::move(t));
    }
  }
}

void baseline_tasks(const ExperimentConfig& c, const Corpus& corpus, const fs::path& out_dir,
                    std::vector<Task>& tasks) {
  const auto set = filter(corpus.training, c.building, c.floor);
  const auto arch = c.regression_arch();
  for (auto seed : c.seeds) {
    struct Prepared {
      std::vector<ClientHandle> clients;
      Batch pooled;
      EvalData holdout;
      std::string detail;
    };
    auto prep = std::make_shared<std::optional<Prepared>>();
    auto error = std::make_shared<std::string>();
    try {
      Prepared p;
      auto [holdout, train] = c.group_by_location
                                  ? split_by_location(set, c.holdout_fraction, mix_seed(seed, 1))
                                  : split_fraction(set, c.holdout_fraction, mix_seed(seed, 1));
      const auto assignment = partition_by_phone(train, c.clients);
      FingerprintSet used;
      for (const auto& cd : assignment.clients)
        used.records.insert(used.records.end(), cd.data.records.begin(), cd.data.records.end());
      const auto norm = fit_target_normalization(used);
      for (const auto& cd : assignment.clients)
        p.clients.push_back({cd.client_id, make_regression_batch(cd.data, norm)});
      p.pooled = make_regression_batch(used, norm);
      p.holdout = make_eval_data(holdout, norm);
      p.detail = "building=" + std::to_string(c.building) + "|floor=" + std::to_string(*c.floor) +
                 "|clients=" + std::to_string(assignment.clients.size()) +
                 "|train=" + std::to_string(used.size()) + "|holdout=" + std::to_string(holdout.size());
      *prep = std::move(p);
    } catch (const std::exception& e) {
      *error = e.what();
    }
    for (const auto& method : c.methods) {
      Task t{c.name, method, seed, {}};
      t.fn = [=, &c](const Task& task) {
        TaskResult r;
        if (!prep->has_value()) throw std::runtime_error(*error);
        const Prepared& p = **prep;
        r.status = {task.experiment_id, task.method, task.seed, true, "", p.detail};
        const FederationConfig f = federation(c, seed);
        TrainingTrace tr;
        if (method == "Centralized") {
          tr = train_centralized(p.pooled, arch, f, seed, Metric::mae_meters, p.holdout);
        } else {
          RunOptions opts;
          opts.evaluate = make_evaluator(arch, p.holdout, Metric::mae_meters);
          opts.metric_name = to_string(Metric::mae_meters);
          tr = run_training(init_params(arch, seed), arch, p.clients, f, opts);
        }
        if (!tr.complete) throw DivergenceError(tr.error);
        append_curve(r, task, curve_of(tr), Metric::mae_meters);
        if (c.checkpoints) {
          const std::string rel = checkpoint_name(task) + ".params";
          fs::create_directories((out_dir / rel).parent_path());
          write_params((out_dir / rel).string(), tr.final_params, arch);
          r.status.checkpoint = rel;
        }
        return r;
      };
      tasks.push_back(std::move(t));
    }
  }
}

TaskResult execute(const Task& t) {
  try {
    return t.fn(t);
  } catch (const std::exception& e) {
    TaskResult r;
    r.status = {t.experiment_id, t.method, t.seed, false, "", e.what()};
    return r;
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

}  // namespace

RunArtifacts run_experiment(const ExperimentConfig& cfg) {
  const fs::path out_dir(cfg.output_dir);
  fs::create_directories(out_dir);
  RunArtifacts art;
  art.snapshot = resolved_snapshot(cfg);
  write_text(out_dir / "config.resolved", art.snapshot);

  const Corpus corpus = load_corpus(cfg);
  std::vector<Task> tasks;
  if (is_transfer(cfg.kind)) transfer_tasks(cfg, corpus, out_dir, tasks);
  else if (is_3d(cfg.kind)) floor_tasks(cfg, corpus, out_dir, tasks);
  else baseline_tasks(cfg, corpus, out_dir, tasks);

  // Runs are independent; results are collected in task order so the
  // output never depends on scheduling.
  std::vector<TaskResult> results(tasks.size());
  for (std::size_t start = 0; start < tasks.size(); start += cfg.jobs) {
    const std::size_t end = std::min(tasks.size(), start + cfg.jobs);
    if (end - start == 1) {
      results[start] = execute(tasks[start]);
      continue;
    }
    std::vector<std::future<TaskResult>> futures;
    for (std::size_t i = start; i < end; ++i)
      futures.push_back(std::async(std::launch::async, [&tasks, i] { return execute(tasks[i]); }));
    for (std::size_t i = start; i < end; ++i) results[i] = futures[i - start].get();
  }

  for (auto& r : results) {
    art.rows.insert(art.rows.end(), r.rows.begin(), r.rows.end());
    art.runs.push_back(std::move(r.status));
  }
  art.summary = summarize(art.rows);

  write_text(out_dir / "results.csv", format_results_csv(art.rows));
  write_text(out_dir / "summary.csv", format_summary_csv(art.summary));
  std::string runs = "experiment_id,method_tag,seed,status,checkpoint,detail\n";
  for (const auto& r : art.runs) {
    runs += r.experiment_id + "," + r.method_tag + "," + std::to_string(r.seed) + "," +
            (r.ok ? "ok" : "failed") + "," + r.checkpoint + "," + csv_quote(r.detail) + "\n";
  }
  write_text(out_dir / "runs.csv", runs);
  return art;
}

}  // namespace fedloc
