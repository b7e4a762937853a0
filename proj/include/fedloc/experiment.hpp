#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedloc/model.hpp"

namespace fedloc {

/// Raised for malformed or out-of-range experiment configs.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ExperimentKind { transfer_device, transfer_time, floor3d_a, floor3d_b, baseline_2d };

const char* to_string(ExperimentKind k);
ExperimentKind parse_experiment_kind(const std::string& s);

/// Environment variable consulted when the config leaves data_root unset.
inline constexpr const char* kDataRootEnv = "FEDLOC_DATA_ROOT";

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::transfer_device;
  std::string name;  // experiment id prefix, defaults to the kind

  // Dataset.
  std::string data_root;  // absolute after validation
  std::string training_file = "trainingData.csv";
  std::string validation_file = "validationData.csv";  // empty: none
  int building = 1;
  std::optional<int> floor;  // 2D kinds only
  std::size_t clients = 8;

  // Model.
  std::vector<std::size_t> hidden_layers{128, 64};
  Activation activation = Activation::relu;

  // Federation.
  double learning_rate = 0.3;
  std::size_t batch_size = 32;
  std::size_t local_epochs = 1;
  double participation_fraction = 1.0;
  std::size_t rounds = 400;
  std::size_t eval_every = 10;
  std::size_t workers = 1;

  // Transfer.
  std::size_t transfer_round = 200;
  std::size_t freeze_prefix = 0;
  double subglobal_learning_rate = 0.1;
  std::size_t subglobal_local_epochs = 1;
  std::optional<int> target_phone;          // default: the phone with most records
  std::optional<std::int64_t> split_time;   // default: choose_split_time
  double holdout_fraction = 0.3;
  bool group_by_location = true;
  std::vector<double> rho_grid{1.0};

  // Floor classification.
  double positive_weight = 1.0;
  // "validation" (validation-file rows of the building) or "split"
  // (location-grouped split of the training rows by holdout_fraction).
  std::string floor_holdout = "validation";

  std::vector<std::string> methods;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::string output_dir = "results";
  bool checkpoints = true;
  std::size_t jobs = 1;  // independent (seed, method) runs in flight

  MlpArchitecture regression_arch() const;
  MlpArchitecture floor_arch(std::size_t floors) const;  // softmax
  MlpArchitecture ova_arch() const;                      // 1-wide sigmoid
  std::string training_path() const;
  std::string validation_path() const;
};

/// Parses a JSON config, fills kind-dependent defaults, range-checks every
/// field and resolves data_root (config, else the environment variable).
/// Unknown keys are rejected by name.
ExperimentConfig validate_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);

/// Method tags valid for a kind, in run order.
std::vector<std::string> methods_for(ExperimentKind kind);

/// --seed-override / --rounds-override. A rounds override rescales the
/// transfer round proportionally.
void apply_overrides(ExperimentConfig& cfg, std::optional<std::uint64_t> seed,
                     std::optional<std::size_t> rounds);

/// Every field, resolved; feeding it back to validate_config reproduces cfg.
std::string resolved_snapshot(const ExperimentConfig& cfg);

struct MetricRow {
  std::string experiment_id;
  std::string method_tag;
  std::uint64_t seed = 0;
  std::size_t round = 0;
  std::string metric;
  double value = 0.0;
  std::string units;  // "meters" or "fraction"
};

struct RunStatus {
  std::string experiment_id;
  std::string method_tag;
  std::uint64_t seed = 0;
  bool ok = true;
  std::string checkpoint;  // relative to the output directory
  std::string detail;      // resolved scenario facts, or the error
};

struct SummaryRow {
  std::string experiment_id;
  std::string metric;
  std::string units;
  std::string method;
  std::size_t n_seeds = 0;
  double final_mean = 0.0;
  double final_std = 0.0;  // sample std, 0 for a single seed
  std::string vs_method;   // empty for the per-method row
  // (B - A) / B for meters, A - B for fractions; A = method, B = vs_method.
  double relative_improvement = 0.0;
};

struct RunArtifacts {
  std::vector<MetricRow> rows;
  std::vector<RunStatus> runs;
  std::vector<SummaryRow> summary;
  std::string snapshot;
  bool any_failed() const;
};

/// Runs every (grid point, seed, method) combination and writes
/// results.csv, summary.csv, runs.csv, config.resolved and checkpoints into
/// cfg.output_dir. Failed runs are recorded in runs.csv and contribute no
/// rows.
RunArtifacts run_experiment(const ExperimentConfig& cfg);

/// Final-round mean/std per (experiment, metric, method) over seeds and all
/// ordered method pairs' relative improvements.
std::vector<SummaryRow> summarize(const std::vector<MetricRow>& rows);

std::string results_csv_header();
std::string format_results_csv(const std::vector<MetricRow>& rows);
std::vector<MetricRow> parse_results_csv(const std::string& text);
std::vector<MetricRow> read_results_csv(const std::string& path);

std::string summary_csv_header();
std::string format_summary_csv(const std::vector<SummaryRow>& rows);

}  // namespace fedloc
