#pragma once

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedloc/encoding.hpp"
#include "fedloc/model.hpp"

namespace fedloc {

enum class Metric { mae_meters, accuracy };

const char* to_string(Metric m);
/// "meters" or "fraction".
const char* metric_units(Metric m);

struct FederationConfig {
  std::size_t rounds = 400;
  double participation_fraction = 1.0;
  TrainingHyperparams hp;  // hp.seed and hp.epoch_offset are set per client/round
  std::size_t eval_every = 10;
  std::uint64_t seed = 0;
  // Client trainings within a round run on this many threads. Results do
  // not depend on it.
  std::size_t workers = 1;

  void validate() const;
};

/// One client's local fingerprint database, already encoded.
struct ClientHandle {
  int client_id = 0;
  Batch data;

  std::size_t sample_count() const { return data.size(); }
};

struct RoundResult {
  std::size_t round = 0;
  ParameterVector global_params;
  std::vector<int> participants;  // ascending client ids
  std::optional<double> eval_metric;
  double wall_seconds = 0.0;
};

/// A RoundResult without its parameter vector; traces keep one per round.
struct RoundRecord {
  std::size_t round = 0;
  std::vector<int> participants;
  std::optional<double> eval_metric;
  double wall_seconds = 0.0;
};

struct TrainingTrace {
  std::vector<RoundRecord> rounds;
  ParameterVector final_params;
  std::string metric_name;
  bool complete = true;
  std::string error;  // set when !complete
  std::map<std::string, std::string> metadata;

  /// Last evaluated metric value, if any.
  std::optional<double> final_metric() const;
};

/// Coordinate-wise convex combination with weights normalized to sum 1,
/// summed in list order. Results are clamped to the per-coordinate client
/// range, so identical inputs aggregate to themselves exactly.
ParameterVector aggregate(std::span<const ParameterVector> client_params,
                          std::span<const double> weights);

struct ClientUpdate {
  int client_id = 0;
  ParameterVector params;
  double weight = 0.0;
};

/// Sorts by client id, then aggregate(). Independent of input order.
ParameterVector aggregate_updates(std::vector<ClientUpdate> updates);

/// Clients chosen for `round`: ceil(fraction * K) ids, ascending.
std::vector<int> select_participants(std::span<const ClientHandle> clients,
                                     const FederationConfig& cfg, std::size_t round);

/// Per-client hyperparameters for a round (seed and epoch offset filled in).
TrainingHyperparams client_hyperparams(const FederationConfig& cfg, int client_id,
                                       std::size_t round);

/// Broadcast, local training, n_k-weighted aggregation.
RoundResult run_round(std::span<const double> global, const MlpArchitecture& arch,
                      std::span<const ClientHandle> clients, const FederationConfig& cfg,
                      std::size_t round, const FrozenMask& frozen = {});

using Evaluator = std::function<double(std::span<const double>)>;

struct RunOptions {
  std::size_t first_round = 1;  // rounds are numbered first_round..first_round+R-1
  FrozenMask frozen;
  Evaluator evaluate;           // optional
  std::string metric_name;
};

/// cfg.rounds sequential rounds. Evaluates every cfg.eval_every rounds and
/// at the last round. On divergence the partial trace is returned with
/// complete = false.
TrainingTrace run_training(std::span<const double> init, const MlpArchitecture& arch,
                           std::span<const ClientHandle> clients,
                           const FederationConfig& cfg, const RunOptions& opts = {});

/// Mean Euclidean error in meters (denormalized) or floor accuracy.
double evaluate(std::span<const double> params, const MlpArchitecture& arch,
                const EvalData& holdout, Metric metric);
double evaluate(std::span<const double> params, const MlpArchitecture& arch,
                const FingerprintSet& holdout, Metric metric,
                const NormalizationSpec& norm);

Evaluator make_evaluator(const MlpArchitecture& arch, EvalData holdout, Metric metric);

// Trace export: round,metric_name,metric_value,participating_clients,wall_seconds
// (participating clients joined by ';', metric_value empty when not evaluated).
std::string trace_csv_header();
std::string trace_csv_rows(const TrainingTrace& trace);
void write_trace(const std::string& csv_path, const TrainingTrace& trace);

/// key: value lines, sorted by key.
std::string format_metadata(const std::map<std::string, std::string>& meta);

}  // namespace fedloc
