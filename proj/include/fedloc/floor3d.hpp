#pragma once

#include <map>
#include <string>
#include <variant>
#include <vector>

#include "fedloc/dataset.hpp"
#include "fedloc/fedavg.hpp"

namespace fedloc {

/// Binary labels for one floor: target 1 iff record.floor == target_floor.
Batch relabel_ova(const FingerprintSet& set, const NormalizationSpec& norm,
                  int target_floor);
/// Same, from an already-encoded one-hot floor batch.
Batch relabel_ova(const Batch& floor_batch, std::size_t target_floor);

/// Shannon entropy (bits) of the floor labels in a set.
double floor_label_entropy(const FingerprintSet& set);

/// L sigmoid binary classifiers sharing one architecture, indexed by floor.
struct FloorClassifierEnsemble {
  MlpArchitecture arch;
  std::vector<ParameterVector> members;

  std::size_t floors() const { return members.size(); }
};

/// Argmax over member probabilities; ties go to the lowest floor.
int predict_floor(std::span<const double> member_outputs);
std::vector<int> predict_floor(const FloorClassifierEnsemble& ensemble,
                               const Matrix& features);

/// Member probabilities, one row per sample, one column per floor.
Matrix ensemble_scores(const FloorClassifierEnsemble& ensemble, const Matrix& features);

struct FedOvaResult {
  FloorClassifierEnsemble ensemble;
  std::vector<TrainingTrace> member_traces;  // metric: member binary accuracy
  TrainingTrace accuracy_trace;              // ensemble floor accuracy
};

/// Configuration seed of member f (each member federation is seeded apart).
FederationConfig member_config(const FederationConfig& cfg, std::size_t floor);

/// Trains one OVA member over clients holding one-hot floor batches.
TrainingTrace train_ova_member(std::span<const ClientHandle> clients, std::size_t floors,
                               std::size_t floor, const MlpArchitecture& arch,
                               const FederationConfig& cfg, std::uint64_t init_seed,
                               const RunOptions& opts = {});

/// FedOVA. `clients` hold one-hot floor batches of width `floors`; `arch`
/// must have a 1-wide sigmoid head. Every client updates all members each
/// round; members are aggregated separately. `holdout` (optional, may be
/// empty) drives the accuracy trace.
FedOvaResult train_fedova(std::span<const ClientHandle> clients, std::size_t floors,
                          const MlpArchitecture& arch, const FederationConfig& cfg,
                          std::uint64_t init_seed, const EvalData& holdout = {});

/// Plain multi-class FedAvg (softmax head, width = floors).
TrainingTrace train_fl_multiclass(std::span<const ClientHandle> clients, std::size_t floors,
                                  const MlpArchitecture& arch, const FederationConfig& cfg,
                                  std::uint64_t init_seed, const EvalData& holdout = {});

/// Centralized baseline: pooled data as a single client, one epoch per round.
TrainingTrace train_centralized(const Batch& pooled, const MlpArchitecture& arch,
                                const FederationConfig& cfg, std::uint64_t init_seed,
                                Metric metric, const EvalData& holdout = {});

struct FloorRegressor {
  ParameterVector params;
  NormalizationSpec norm;
  TrainingTrace trace;
};

/// One 2D regressor per floor, each federated over the clients that hold
/// records on that floor (client ids preserved).
std::map<int, FloorRegressor> train_per_floor_2d(const ClientAssignment& clients,
                                                 std::size_t floors,
                                                 const MlpArchitecture& arch,
                                                 const FederationConfig& cfg,
                                                 std::uint64_t init_seed);

struct SoftmaxFloorModel {
  MlpArchitecture arch;
  ParameterVector params;
};

struct ThreeDModel {
  std::variant<FloorClassifierEnsemble, SoftmaxFloorModel> floor_stage;
  MlpArchitecture regressor_arch;
  std::map<int, FloorRegressor> per_floor_2d;

  std::size_t floors() const;
  void validate() const;
};

struct Prediction3D {
  int floor = 0;
  double longitude = 0.0;
  double latitude = 0.0;
};

/// Floor first, then that floor's regressor (a wrong floor means the wrong
/// floor's regressor is used).
std::vector<Prediction3D> predict_3d(const ThreeDModel& model, const FingerprintSet& set);

struct ThreeDReport {
  double floor_accuracy = 0.0;
  double mae_given_correct_floor = 0.0;  // meters, over correctly-floored records
  double mae_all = 0.0;                  // meters, over every record
  std::size_t records = 0;
};

ThreeDReport evaluate_3d(const ThreeDModel& model, const FingerprintSet& holdout);

// Ensemble checkpoints: member_<f>.params per floor plus manifest.json
// {"format": "fedloc-ensemble v1", "floors": L, "architecture": ..., "members": {"0": ...}}.
void write_ensemble(const std::string& dir, const FloorClassifierEnsemble& ensemble);
FloorClassifierEnsemble read_ensemble(const std::string& dir, const MlpArchitecture& arch);

}  // namespace fedloc
