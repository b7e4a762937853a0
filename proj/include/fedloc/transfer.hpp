#pragma once

#include <string>
#include <vector>

#include "fedloc/dataset.hpp"
#include "fedloc/fedavg.hpp"

namespace fedloc {

enum class Method { h_fedtloc, fedloc, n_fedloc };

/// "H-FedTLoc", "FedLoc", "N-FedLoc".
const char* to_string(Method m);

struct TransferConfig {
  std::size_t transfer_round = 200;
  std::size_t total_rounds = 400;
  // Leading weight layers (weights and bias) kept fixed during sub-global FL.
  std::size_t freeze_prefix = 0;
  FederationConfig global_cfg;
  FederationConfig subglobal_cfg;
  // Initial parameters are init_params(arch, init_seed) for every method.
  std::uint64_t init_seed = 0;

  /// transfer_round == total_rounds is accepted (empty sub-global stage).
  void validate(const MlpArchitecture& arch) const;
};

/// Encoded form of a DomainScenario for 2D regression.
struct TransferProblem {
  MlpArchitecture arch;
  NormalizationSpec norm;
  std::vector<ClientHandle> source;
  std::vector<ClientHandle> target;
  EvalData holdout;
  std::string scenario;
  double rho = 1.0;
};

/// Fits target normalization on the source records (target-trainable records
/// when there is no source) and encodes every client. `arch` must be a 2-wide linear-head regressor.
TransferProblem prepare_transfer(const DomainScenario& scenario,
                                 const MlpArchitecture& arch);

struct StageTrace {
  TrainingTrace global_trace;
  TrainingTrace subglobal_trace;  // empty unless H-FedTLoc
  Method method = Method::fedloc;
  std::string scenario;
  std::size_t transfer_round = 0;
  double rho = 1.0;

  bool complete() const { return global_trace.complete && subglobal_trace.complete; }
  const ParameterVector& final_params() const;
  std::optional<double> final_metric() const;
  /// Evaluated (round, value) pairs over both stages, in round order.
  std::vector<std::pair<std::size_t, double>> curve() const;
};

struct TransferredModel {
  ParameterVector params;
  FrozenMask frozen;  // empty when nothing is frozen
};

TransferredModel transfer_model(std::span<const double> global,
                                const MlpArchitecture& arch,
                                const TransferConfig& tc);

StageTrace run_fedloc(const TransferProblem& problem, const TransferConfig& tc);
StageTrace run_n_fedloc(const TransferProblem& problem, const TransferConfig& tc);
StageTrace run_h_fedtloc(const TransferProblem& problem, const TransferConfig& tc);
StageTrace run_method(Method m, const TransferProblem& problem, const TransferConfig& tc);

// Export: trace columns plus method_tag, stage, transfer_round, rho.
std::string stage_csv_header();
std::string stage_csv_rows(const StageTrace& trace);
void write_stage_trace(const std::string& csv_path, const StageTrace& trace);

}  // namespace fedloc
