#include "fedloc/transfer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace fedloc {

const char* to_string(Method m) {
  switch (m) {
    case Method::h_fedtloc: return "H-FedTLoc";
    case Method::fedloc: return "FedLoc";
    case Method::n_fedloc: return "N-FedLoc";
  }
  return "?";
}

void TransferConfig::validate(const MlpArchitecture& arch) const {
  if (total_rounds == 0) throw std::invalid_argument("transfer: total_rounds must be >= 1");
  if (transfer_round == 0 || transfer_round > total_rounds)
    throw std::invalid_argument("transfer: transfer_round must lie in [1, total_rounds]");
  if (freeze_prefix >= arch.depth())
    throw std::invalid_argument("transfer: freeze_prefix " + std::to_string(freeze_prefix) +
                                " must be below the layer count " +
                                std::to_string(arch.depth()));
}

namespace {

std::vector<ClientHandle> encode_clients(const ClientAssignment& a,
                                         const NormalizationSpec& norm) {
  std::vector<ClientHandle> out;
  for (const auto& c : a.clients) {
    if (c.data.empty()) continue;
    out.push_back({c.client_id, make_regression_batch(c.data, norm)});
  }
  return out;
}

FederationConfig with_rounds(FederationConfig cfg, std::size_t rounds) {
  cfg.rounds = rounds;
  return cfg;
}

RunOptions eval_options(const TransferProblem& p, std::size_t first_round) {
  RunOptions o;
  o.first_round = first_round;
  o.metric_name = to_string(Metric::mae_meters);
  o.evaluate = make_evaluator(p.arch, p.holdout, Metric::mae_meters);
  return o;
}

StageTrace base_trace(const TransferProblem& p, const TransferConfig& tc, Method m) {
  StageTrace t;
  t.method = m;
  t.scenario = p.scenario;
  t.transfer_round = m == Method::h_fedtloc ? tc.transfer_round : 0;
  t.rho = p.rho;
  return t;
}

}  // namespace

TransferProblem prepare_transfer(const DomainScenario& scenario,
                                 const MlpArchitecture& arch) {
  arch.validate();
  if (arch.output_head != Head::linear || arch.output_width() != 2)
    throw std::invalid_argument("transfer: architecture must be a 2-wide linear regressor");
  if (arch.input_width() != kNumWaps)
    throw std::invalid_argument("transfer: architecture input width must be 520");
  // Fitted on the source federation so that the encoding does not depend on
  // rho; the target is only used when there is no source.
  FingerprintSet fit;
  for (const auto* a : {&scenario.source, &scenario.target}) {
    for (const auto& c : a->clients)
      fit.records.insert(fit.records.end(), c.data.records.begin(), c.data.records.end());
    if (!fit.empty()) break;
  }

  TransferProblem p;
  p.arch = arch;
  p.norm = fit_target_normalization(fit);
  p.source = encode_clients(scenario.source, p.norm);
  p.target = encode_clients(scenario.target, p.norm);
  if (scenario.holdout.empty()) throw std::invalid_argument("transfer: empty holdout");
  p.holdout = make_eval_data(scenario.holdout, p.norm);
  p.scenario = scenario.description;
  p.rho = scenario.rho;
  return p;
}

const ParameterVector& StageTrace::final_params() const {
  return subglobal_trace.rounds.empty() ? global_trace.final_params
                                        : subglobal_trace.final_params;
}

std::optional<double> StageTrace::final_metric() const {
  if (auto m = subglobal_trace.final_metric()) return m;
  return global_trace.final_metric();
}

std::vector<std::pair<std::size_t, double>> StageTrace::curve() const {
  std::vector<std::pair<std::size_t, double>> c;
  for (const auto* t : {&global_trace, &subglobal_trace})
    for (const auto& r : t->rounds)
      if (r.eval_metric) c.emplace_back(r.round, *r.eval_metric);
  return c;
}

TransferredModel transfer_model(std::span<const double> global,
                                const MlpArchitecture& arch,
                                const TransferConfig& tc) {
  if (tc.freeze_prefix >= arch.depth())
    throw std::invalid_argument("transfer: freeze_prefix " + std::to_string(tc.freeze_prefix) +
                                " must be below the layer count " +
                                std::to_string(arch.depth()));
  if (global.size() != arch.param_count())
    throw std::invalid_argument("transfer: parameter count does not match architecture");
  for (double v : global)
    if (!std::isfinite(v)) throw std::invalid_argument("transfer: global model is not finite");
  TransferredModel out;
  out.params.assign(global.begin(), global.end());
  if (tc.freeze_prefix > 0) {
    out.frozen.assign(global.size(), 0);
    const std::size_t end = arch.layer_end(tc.freeze_prefix - 1);
    std::fill(out.frozen.begin(), out.frozen.begin() + static_cast<std::ptrdiff_t>(end), 1);
  }
  return out;
}

StageTrace run_fedloc(const TransferProblem& p, const TransferConfig& tc) {
  tc.validate(p.arch);
  if (p.source.empty()) throw std::invalid_argument("FedLoc: no source clients");
  StageTrace t = base_trace(p, tc, Method::fedloc);
  const auto init = init_params(p.arch, tc.init_seed);
  t.global_trace = run_training(init, p.arch, p.source,
                                with_rounds(tc.global_cfg, tc.total_rounds),
                                eval_options(p, 1));
  t.global_trace.metadata["method"] = to_string(Method::fedloc);
  t.global_trace.metadata["scenario"] = p.scenario;
  return t;
}

StageTrace run_n_fedloc(const TransferProblem& p, const TransferConfig& tc) {
  tc.validate(p.arch);
  if (p.target.empty()) throw std::invalid_argument("N-FedLoc: empty target trainable set");
  StageTrace t = base_trace(p, tc, Method::n_fedloc);
  const auto init = init_params(p.arch, tc.init_seed);
  t.global_trace = run_training(init, p.arch, p.target,
                                with_rounds(tc.global_cfg, tc.total_rounds),
                                eval_options(p, 1));
  t.global_trace.metadata["method"] = to_string(Method::n_fedloc);
  t.global_trace.metadata["scenario"] = p.scenario;
  return t;
}

StageTrace run_h_fedtloc(const TransferProblem& p, const TransferConfig& tc) {
  tc.validate(p.arch);
  if (p.source.empty()) throw std::invalid_argument("H-FedTLoc: no source clients");
  StageTrace t = base_trace(p, tc, Method::h_fedtloc);
  const auto init = init_params(p.arch, tc.init_seed);
  t.global_trace = run_training(init, p.arch, p.source,
                                with_rounds(tc.global_cfg, tc.transfer_round),
                                eval_options(p, 1));
  t.global_trace.metadata["method"] = to_string(Method::h_fedtloc);
  t.global_trace.metadata["stage"] = "global";
  t.global_trace.metadata["scenario"] = p.scenario;
  if (!t.global_trace.complete) return t;

  const std::size_t remaining = tc.total_rounds - tc.transfer_round;
  if (remaining == 0) return t;
  if (p.target.empty()) throw std::invalid_argument("H-FedTLoc: empty target trainable set");

  auto sub = transfer_model(t.global_trace.final_params, p.arch, tc);
  RunOptions opts = eval_options(p, tc.transfer_round + 1);
  opts.frozen = std::move(sub.frozen);
  t.subglobal_trace = run_training(sub.params, p.arch, p.target,
                                   with_rounds(tc.subglobal_cfg, remaining), opts);
  t.subglobal_trace.metadata["method"] = to_string(Method::h_fedtloc);
  t.subglobal_trace.metadata["stage"] = "subglobal";
  t.subglobal_trace.metadata["freeze_prefix"] = std::to_string(tc.freeze_prefix);
  t.subglobal_trace.metadata["scenario"] = p.scenario;
  return t;
}

StageTrace run_method(Method m, const TransferProblem& problem, const TransferConfig& tc) {
  switch (m) {
    case Method::h_fedtloc: return run_h_fedtloc(problem, tc);
    case Method::fedloc: return run_fedloc(problem, tc);
    case Method::n_fedloc: return run_n_fedloc(problem, tc);
  }
  throw std::invalid_argument("unknown method");
}

std::string stage_csv_header() {
  return trace_csv_header() + ",method_tag,stage,transfer_round,rho";
}

std::string stage_csv_rows(const StageTrace& trace) {
  std::string s;
  char suffix[96];
  const char* stages[] = {"global", "subglobal"};
  const TrainingTrace* parts[] = {&trace.global_trace, &trace.subglobal_trace};
  for (int k = 0; k < 2; ++k) {
    std::snprintf(suffix, sizeof(suffix), ",%s,%s,%zu,%.6g", to_string(trace.method),
                  stages[k], trace.transfer_round, trace.rho);
    const std::string rows = trace_csv_rows(*parts[k]);
    std::size_t start = 0;
    while (start < rows.size()) {
      const std::size_t nl = rows.find('\n', start);
      s.append(rows, start, nl - start);
      s += suffix;
      s += '\n';
      start = nl + 1;
    }
  }
  return s;
}

void write_stage_trace(const std::string& csv_path, const StageTrace& trace) {
  std::ofstream out(csv_path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + csv_path);
  out << stage_csv_header() << '\n' << stage_csv_rows(trace);
  std::ofstream meta(csv_path + ".meta", std::ios::binary);
  auto m = trace.global_trace.metadata;
  m["complete"] = trace.complete() ? "true" : "false";
  m["transfer_round"] = std::to_string(trace.transfer_round);
  m["rho"] = std::to_string(trace.rho);
  meta << format_metadata(m);
}

}  // namespace fedloc
