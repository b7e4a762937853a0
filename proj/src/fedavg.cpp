#include "fedloc/fedavg.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <numeric>

#include "fedloc/rng.hpp"

namespace fedloc {

const char* to_string(Metric m) {
  return m == Metric::mae_meters ? "mae_meters" : "accuracy";
}

const char* metric_units(Metric m) {
  return m == Metric::mae_meters ? "meters" : "fraction";
}

void FederationConfig::validate() const {
  if (rounds == 0) throw std::invalid_argument("federation: rounds must be >= 1");
  if (!(participation_fraction > 0.0 && participation_fraction <= 1.0))
    throw std::invalid_argument("federation: participation_fraction outside (0, 1]");
  if (eval_every == 0) throw std::invalid_argument("federation: eval_every must be >= 1");
  if (workers == 0) throw std::invalid_argument("federation: workers must be >= 1");
  hp.validate();
}

std::optional<double> TrainingTrace::final_metric() const {
  for (auto it = rounds.rbegin(); it != rounds.rend(); ++it)
    if (it->eval_metric) return it->eval_metric;
  return std::nullopt;
}

ParameterVector aggregate(std::span<const ParameterVector> client_params,
                          std::span<const double> weights) {
  if (client_params.empty()) throw std::invalid_argument("aggregate: no clients");
  if (client_params.size() != weights.size())
    throw std::invalid_argument("aggregate: weight count differs from client count");
  const std::size_t n = client_params.front().size();
  double total = 0.0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    if (client_params[k].size() != n)
      throw std::invalid_argument("aggregate: client " + std::to_string(k) +
                                  " vector length differs");
    if (!(weights[k] >= 0.0) || !std::isfinite(weights[k]))
      throw std::invalid_argument("aggregate: weights must be finite and >= 0");
    total += weights[k];
  }
  if (!(total > 0.0)) throw std::invalid_argument("aggregate: all weights are zero");

  std::vector<double> w(weights.size());
  for (std::size_t k = 0; k < w.size(); ++k) w[k] = weights[k] / total;

  ParameterVector out(n, 0.0);
  for (std::size_t k = 0; k < client_params.size(); ++k) {
    const double wk = w[k];
    const double* x = client_params[k].data();
    for (std::size_t i = 0; i < n; ++i) out[i] += wk * x[i];
  }
  for (std::size_t i = 0; i < n; ++i) {
    double lo = client_params[0][i];
    double hi = lo;
    for (std::size_t k = 1; k < client_params.size(); ++k) {
      lo = std::min(lo, client_params[k][i]);
      hi = std::max(hi, client_params[k][i]);
    }
    out[i] = std::clamp(out[i], lo, hi);
  }
  return out;
}

ParameterVector aggregate_updates(std::vector<ClientUpdate> updates) {
  std::sort(updates.begin(), updates.end(),
            [](const ClientUpdate& a, const ClientUpdate& b) { return a.client_id < b.client_id; });
  for (std::size_t k = 1; k < updates.size(); ++k)
    if (updates[k].client_id == updates[k - 1].client_id)
      throw std::invalid_argument("aggregate: duplicate client id " +
                                  std::to_string(updates[k].client_id));
  std::vector<ParameterVector> params;
  std::vector<double> weights;
  params.reserve(updates.size());
  for (auto& u : updates) {
    params.push_back(std::move(u.params));
    weights.push_back(u.weight);
  }
  return aggregate(params, weights);
}

std::vector<int> select_participants(std::span<const ClientHandle> clients,
                                     const FederationConfig& cfg, std::size_t round) {
  std::vector<int> ids;
  ids.reserve(clients.size());
  for (const auto& c : clients) ids.push_back(c.client_id);
  std::sort(ids.begin(), ids.end());
  const auto k = static_cast<std::size_t>(
      std::ceil(cfg.participation_fraction * static_cast<double>(ids.size()) - 1e-12));
  if (k >= ids.size()) return ids;
  Rng rng(mix_seed(cfg.seed, 0x5e1ec7, round));
  rng.shuffle(std::span<int>(ids));
  ids.resize(std::max<std::size_t>(k, 1));
  std::sort(ids.begin(), ids.end());
  return ids;
}

TrainingHyperparams client_hyperparams(const FederationConfig& cfg, int client_id,
                                       std::size_t round) {
  TrainingHyperparams hp = cfg.hp;
  hp.seed = mix_seed(cfg.seed, static_cast<std::uint64_t>(client_id));
  hp.epoch_offset = (round - 1) * cfg.hp.local_epochs;
  return hp;
}

RoundResult run_round(std::span<const double> global, const MlpArchitecture& arch,
                      std::span<const ClientHandle> clients, const FederationConfig& cfg,
                      std::size_t round, const FrozenMask& frozen) {
  if (clients.empty()) throw std::invalid_argument("run_round: no clients");
  if (round == 0) throw std::invalid_argument("run_round: rounds are numbered from 1");
  const auto start = std::chrono::steady_clock::now();

  RoundResult result;
  result.round = round;
  result.participants = select_participants(clients, cfg, round);

  std::vector<const ClientHandle*> chosen;
  for (int id : result.participants) {
    const auto it = std::find_if(clients.begin(), clients.end(),
                                 [id](const ClientHandle& c) { return c.client_id == id; });
    chosen.push_back(&*it);
  }

  std::vector<ClientUpdate> updates(chosen.size());
  auto train_one = [&](std::size_t k) {
    const ClientHandle& c = *chosen[k];
    try {
      updates[k].params = train_local(global, arch, c.data,
                                      client_hyperparams(cfg, c.client_id, round), frozen);
    } catch (const DivergenceError& e) {
      throw DivergenceError("client " + std::to_string(c.client_id) + ", round " +
                            std::to_string(round) + ": " + e.what());
    }
    updates[k].client_id = c.client_id;
    updates[k].weight = static_cast<double>(c.sample_count());
  };

  if (cfg.workers <= 1 || chosen.size() <= 1) {
    for (std::size_t k = 0; k < chosen.size(); ++k) train_one(k);
  } else {
    std::vector<std::future<void>> jobs;
    std::size_t next = 0;
    while (next < chosen.size()) {
      jobs.clear();
      for (std::size_t t = 0; t < cfg.workers && next < chosen.size(); ++t, ++next)
        jobs.push_back(std::async(std::launch::async, train_one, next));
      for (auto& j : jobs) j.get();
    }
  }

  result.global_params = aggregate_updates(std::move(updates));
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

TrainingTrace run_training(std::span<const double> init, const MlpArchitecture& arch,
                           std::span<const ClientHandle> clients,
                           const FederationConfig& cfg, const RunOptions& opts) {
  cfg.validate();
  if (clients.empty()) throw std::invalid_argument("run_training: no clients");
  if (opts.first_round == 0) throw std::invalid_argument("run_training: first_round must be >= 1");

  TrainingTrace trace;
  trace.metric_name = opts.metric_name;
  trace.metadata["rounds"] = std::to_string(cfg.rounds);
  trace.metadata["first_round"] = std::to_string(opts.first_round);
  trace.metadata["seed"] = std::to_string(cfg.seed);
  trace.metadata["eval_every"] = std::to_string(cfg.eval_every);
  trace.metadata["participation_fraction"] = std::to_string(cfg.participation_fraction);
  trace.metadata["learning_rate"] = std::to_string(cfg.hp.learning_rate);
  trace.metadata["batch_size"] = std::to_string(cfg.hp.batch_size);
  trace.metadata["local_epochs"] = std::to_string(cfg.hp.local_epochs);
  trace.metadata["clients"] = std::to_string(clients.size());
  trace.metadata["architecture"] = arch.fingerprint();

  ParameterVector global(init.begin(), init.end());
  const std::size_t last = opts.first_round + cfg.rounds - 1;
  for (std::size_t r = opts.first_round; r <= last; ++r) {
    RoundResult res;
    try {
      res = run_round(global, arch, clients, cfg, r, opts.frozen);
    } catch (const DivergenceError& e) {
      trace.complete = false;
      trace.error = e.what();
      break;
    }
    global = std::move(res.global_params);
    RoundRecord rec;
    rec.round = r;
    rec.participants = std::move(res.participants);
    rec.wall_seconds = res.wall_seconds;
    if (opts.evaluate && (r % cfg.eval_every == 0 || r == last)) {
      try {
        rec.eval_metric = opts.evaluate(global);
      } catch (const DivergenceError& e) {
        trace.complete = false;
        trace.error = std::string("evaluation: ") + e.what();
      }
    }
    trace.rounds.push_back(std::move(rec));
    if (!trace.complete) break;
  }
  trace.final_params = std::move(global);
  return trace;
}

double evaluate(std::span<const double> params, const MlpArchitecture& arch,
                const EvalData& holdout, Metric metric) {
  if (holdout.size() == 0) throw std::invalid_argument("evaluate: empty holdout");
  const Matrix out = forward(params, arch, holdout.features);
  if (metric == Metric::mae_meters) {
    if (arch.output_width() != 2)
      throw std::invalid_argument("evaluate: mae_meters needs a 2-wide regression head");
    double total = 0.0;
    for (std::size_t r = 0; r < out.rows; ++r) {
      const auto p = denormalize_target(out(r, 0), out(r, 1), holdout.norm);
      total += std::hypot(p[0] - holdout.positions[r][0], p[1] - holdout.positions[r][1]);
    }
    return total / static_cast<double>(out.rows);
  }
  std::size_t correct = 0;
  for (std::size_t r = 0; r < out.rows; ++r)
    if (static_cast<int>(argmax(out.row(r))) == holdout.floors[r]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(out.rows);
}

double evaluate(std::span<const double> params, const MlpArchitecture& arch,
                const FingerprintSet& holdout, Metric metric,
                const NormalizationSpec& norm) {
  return evaluate(params, arch, make_eval_data(holdout, norm), metric);
}

Evaluator make_evaluator(const MlpArchitecture& arch, EvalData holdout, Metric metric) {
  return [arch, data = std::move(holdout), metric](std::span<const double> p) {
    return evaluate(p, arch, data, metric);
  };
}

std::string trace_csv_header() {
  return "round,metric_name,metric_value,participating_clients,wall_seconds";
}

std::string trace_csv_rows(const TrainingTrace& trace) {
  std::string s;
  char buf[64];
  for (const auto& r : trace.rounds) {
    s += std::to_string(r.round);
    s += ',';
    s += trace.metric_name;
    s += ',';
    if (r.eval_metric) {
      std::snprintf(buf, sizeof(buf), "%.10g", *r.eval_metric);
      s += buf;
    }
    s += ',';
    for (std::size_t i = 0; i < r.participants.size(); ++i) {
      if (i) s += ';';
      s += std::to_string(r.participants[i]);
    }
    std::snprintf(buf, sizeof(buf), ",%.6f\n", r.wall_seconds);
    s += buf;
  }
  return s;
}

std::string format_metadata(const std::map<std::string, std::string>& meta) {
  std::string s;
  for (const auto& [k, v] : meta) s += k + ": " + v + "\n";
  return s;
}

void write_trace(const std::string& csv_path, const TrainingTrace& trace) {
  {
    std::ofstream out(csv_path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + csv_path);
    out << trace_csv_header() << '\n' << trace_csv_rows(trace);
  }
  std::ofstream meta(csv_path + ".meta", std::ios::binary);
  if (!meta) throw std::runtime_error("cannot write " + csv_path + ".meta");
  auto m = trace.metadata;
  m["complete"] = trace.complete ? "true" : "false";
  if (!trace.complete) m["error"] = trace.error;
  meta << format_metadata(m);
}

}  // namespace fedloc
