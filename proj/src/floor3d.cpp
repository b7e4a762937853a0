#include "fedloc/floor3d.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "fedloc/rng.hpp"
#include "json.hpp"

namespace fedloc {

namespace fs = std::filesystem;
using nlohmann::json;

Batch relabel_ova(const Batch& floor_batch, std::size_t target_floor) {
  if (target_floor >= floor_batch.targets.cols)
    throw std::invalid_argument("relabel_ova: floor " + std::to_string(target_floor) +
                                " outside [0, " + std::to_string(floor_batch.targets.cols) + ")");
  Batch b;
  b.features = floor_batch.features;
  b.targets = Matrix(floor_batch.size(), 1);
  for (std::size_t r = 0; r < floor_batch.size(); ++r)
    b.targets(r, 0) = floor_batch.targets(r, target_floor) > 0.5 ? 1.0 : 0.0;
  return b;
}

Batch relabel_ova(const FingerprintSet& set, const NormalizationSpec& norm,
                  int target_floor) {
  Batch b;
  b.features = encode_features(set, norm);
  b.targets = Matrix(set.size(), 1);
  for (std::size_t r = 0; r < set.size(); ++r)
    b.targets(r, 0) = set.records[r].floor == target_floor ? 1.0 : 0.0;
  return b;
}

double floor_label_entropy(const FingerprintSet& set) {
  if (set.empty()) return 0.0;
  std::map<int, std::size_t> counts;
  for (const auto& r : set.records) ++counts[r.floor];
  double h = 0.0;
  for (const auto& [floor, n] : counts) {
    const double p = static_cast<double>(n) / static_cast<double>(set.size());
    if (p < 1.0) h -= p * std::log2(p);
  }
  return h;
}

int predict_floor(std::span<const double> member_outputs) {
  if (member_outputs.empty()) throw std::invalid_argument("predict_floor: no members");
  return static_cast<int>(argmax(member_outputs));
}

Matrix ensemble_scores(const FloorClassifierEnsemble& ensemble, const Matrix& features) {
  Matrix scores(features.rows, ensemble.floors());
  for (std::size_t f = 0; f < ensemble.floors(); ++f) {
    const Matrix out = forward(ensemble.members[f], ensemble.arch, features);
    for (std::size_t r = 0; r < features.rows; ++r) scores(r, f) = out(r, 0);
  }
  return scores;
}

std::vector<int> predict_floor(const FloorClassifierEnsemble& ensemble,
                               const Matrix& features) {
  const Matrix scores = ensemble_scores(ensemble, features);
  std::vector<int> out(features.rows);
  for (std::size_t r = 0; r < features.rows; ++r) out[r] = predict_floor(scores.row(r));
  return out;
}

FederationConfig member_config(const FederationConfig& cfg, std::size_t floor) {
  FederationConfig c = cfg;
  c.seed = mix_seed(cfg.seed, 0x0fa, floor);
  return c;
}

namespace {

void check_clients(std::span<const ClientHandle> clients, std::size_t floors) {
  if (floors < 2) throw std::invalid_argument("floor classifier: need >= 2 floors");
  if (clients.empty()) throw std::invalid_argument("floor classifier: no clients");
  for (const auto& c : clients)
    if (c.data.targets.cols != floors)
      throw std::invalid_argument("floor classifier: client " + std::to_string(c.client_id) +
                                  " targets are not one-hot over " + std::to_string(floors) +
                                  " floors");
}

}  // namespace

TrainingTrace train_ova_member(std::span<const ClientHandle> clients, std::size_t floors,
                               std::size_t floor, const MlpArchitecture& arch,
                               const FederationConfig& cfg, std::uint64_t init_seed,
                               const RunOptions& opts) {
  check_clients(clients, floors);
  if (arch.output_head != Head::sigmoid || arch.output_width() != 1)
    throw std::invalid_argument("FedOVA: members need a 1-wide sigmoid head");
  std::vector<ClientHandle> member_clients;
  member_clients.reserve(clients.size());
  for (const auto& c : clients) member_clients.push_back({c.client_id, relabel_ova(c.data, floor)});
  const auto init = init_params(arch, mix_seed(init_seed, 0x0fa, floor));
  try {
    auto trace = run_training(init, arch, member_clients, member_config(cfg, floor), opts);
    trace.metadata["member_floor"] = std::to_string(floor);
    return trace;
  } catch (const std::exception& e) {
    throw std::runtime_error("FedOVA member " + std::to_string(floor) + ": " + e.what());
  }
}

FedOvaResult train_fedova(std::span<const ClientHandle> clients, std::size_t floors,
                          const MlpArchitecture& arch, const FederationConfig& cfg,
                          std::uint64_t init_seed, const EvalData& holdout) {
  FedOvaResult result;
  result.ensemble.arch = arch;
  // Per member: evaluated round -> holdout probabilities.
  std::vector<std::map<std::size_t, std::vector<double>>> scores(floors);

  for (std::size_t f = 0; f < floors; ++f) {
    RunOptions opts;
    opts.metric_name = "member_accuracy";
    if (holdout.size() > 0) {
      std::size_t round = 0;
      auto* store = &scores[f];
      // run_training evaluates after each qualifying round in order; the
      // counter below mirrors its cadence.
      opts.evaluate = [&, f, store, round](std::span<const double> p) mutable {
        const Matrix out = forward(p, arch, holdout.features);
        std::vector<double> col(out.rows);
        std::size_t correct = 0;
        for (std::size_t r = 0; r < out.rows; ++r) {
          col[r] = out(r, 0);
          const bool positive = holdout.floors[r] == static_cast<int>(f);
          if ((col[r] >= 0.5) == positive) ++correct;
        }
        (*store)[++round] = std::move(col);
        return static_cast<double>(correct) / static_cast<double>(out.rows);
      };
    }
    result.member_traces.push_back(
        train_ova_member(clients, floors, f, arch, cfg, init_seed, opts));
    result.ensemble.members.push_back(result.member_traces.back().final_params);
  }

  TrainingTrace& acc = result.accuracy_trace;
  acc.metric_name = to_string(Metric::accuracy);
  acc.metadata = result.member_traces.front().metadata;
  acc.metadata.erase("member_floor");
  acc.metadata["method"] = "FedOVA";
  for (const auto& t : result.member_traces) {
    if (!t.complete) {
      acc.complete = false;
      acc.error = t.error;
    }
  }
  std::size_t eval_index = 0;
  for (const auto& rec : result.member_traces.front().rounds) {
    RoundRecord out = rec;
    out.eval_metric.reset();
    if (rec.eval_metric) {
      ++eval_index;
      bool all_members = true;
      for (std::size_t f = 0; f < floors; ++f)
        all_members &= scores[f].count(eval_index) > 0;
      if (all_members) {
        std::size_t correct = 0;
        std::vector<double> row(floors);
        for (std::size_t r = 0; r < holdout.size(); ++r) {
          for (std::size_t f = 0; f < floors; ++f) row[f] = scores[f][eval_index][r];
          if (predict_floor(row) == holdout.floors[r]) ++correct;
        }
        out.eval_metric = static_cast<double>(correct) / static_cast<double>(holdout.size());
      }
    }
    acc.rounds.push_back(std::move(out));
  }
  return result;
}

TrainingTrace train_fl_multiclass(std::span<const ClientHandle> clients, std::size_t floors,
                                  const MlpArchitecture& arch, const FederationConfig& cfg,
                                  std::uint64_t init_seed, const EvalData& holdout) {
  check_clients(clients, floors);
  if (arch.output_head != Head::softmax || arch.output_width() != floors)
    throw std::invalid_argument("multi-class FedAvg: need a softmax head of width L");
  RunOptions opts;
  opts.metric_name = to_string(Metric::accuracy);
  if (holdout.size() > 0) opts.evaluate = make_evaluator(arch, holdout, Metric::accuracy);
  auto trace = run_training(init_params(arch, init_seed), arch, clients, cfg, opts);
  trace.metadata["method"] = "FedAvg-multiclass";
  return trace;
}

TrainingTrace train_centralized(const Batch& pooled, const MlpArchitecture& arch,
                                const FederationConfig& cfg, std::uint64_t init_seed,
                                Metric metric, const EvalData& holdout) {
  std::vector<ClientHandle> one{{0, pooled}};
  FederationConfig c = cfg;
  c.participation_fraction = 1.0;
  RunOptions opts;
  opts.metric_name = to_string(metric);
  if (holdout.size() > 0) opts.evaluate = make_evaluator(arch, holdout, metric);
  auto trace = run_training(init_params(arch, init_seed), arch, one, c, opts);
  trace.metadata["method"] = "Centralized";
  return trace;
}

std::map<int, FloorRegressor> train_per_floor_2d(const ClientAssignment& clients,
                                                 std::size_t floors,
                                                 const MlpArchitecture& arch,
                                                 const FederationConfig& cfg,
                                                 std::uint64_t init_seed) {
  if (arch.output_head != Head::linear || arch.output_width() != 2)
    throw std::invalid_argument("per-floor 2D: need a 2-wide linear head");
  std::map<int, FloorRegressor> out;
  for (std::size_t f = 0; f < floors; ++f) {
    const int floor = static_cast<int>(f);
    std::vector<FingerprintSet> shards;
    std::vector<int> ids;
    FingerprintSet all;
    for (const auto& c : clients.clients) {
      FingerprintSet shard = filter(c.data, std::nullopt, floor);
      if (shard.empty()) continue;
      all.records.insert(all.records.end(), shard.records.begin(), shard.records.end());
      ids.push_back(c.client_id);
      shards.push_back(std::move(shard));
    }
    if (all.empty())
      throw std::invalid_argument("per-floor 2D: floor " + std::to_string(floor) +
                                  " has no records");
    FloorRegressor reg;
    reg.norm = fit_target_normalization(all);
    std::vector<ClientHandle> handles;
    for (std::size_t k = 0; k < shards.size(); ++k)
      handles.push_back({ids[k], make_regression_batch(shards[k], reg.norm)});
    FederationConfig c = cfg;
    c.seed = mix_seed(cfg.seed, 0x2d, f);
    RunOptions opts;
    opts.metric_name = "none";
    reg.trace = run_training(init_params(arch, mix_seed(init_seed, 0x2d, f)), arch, handles, c, opts);
    if (!reg.trace.complete)
      throw DivergenceError("per-floor 2D: floor " + std::to_string(floor) + ": " + reg.trace.error);
    reg.trace.metadata["floor"] = std::to_string(floor);
    reg.params = reg.trace.final_params;
    out.emplace(floor, std::move(reg));
  }
  return out;
}

std::size_t ThreeDModel::floors() const {
  if (const auto* e = std::get_if<FloorClassifierEnsemble>(&floor_stage)) return e->floors();
  return std::get<SoftmaxFloorModel>(floor_stage).arch.output_width();
}

void ThreeDModel::validate() const {
  const std::size_t L = floors();
  for (std::size_t f = 0; f < L; ++f)
    if (!per_floor_2d.count(static_cast<int>(f)))
      throw std::invalid_argument("3D model: no 2D regressor for floor " + std::to_string(f));
}

std::vector<Prediction3D> predict_3d(const ThreeDModel& model, const FingerprintSet& set) {
  model.validate();
  const Matrix features = encode_features(set, model.per_floor_2d.begin()->second.norm);
  std::vector<int> floors;
  if (const auto* e = std::get_if<FloorClassifierEnsemble>(&model.floor_stage)) {
    floors = predict_floor(*e, features);
  } else {
    const auto& m = std::get<SoftmaxFloorModel>(model.floor_stage);
    const Matrix out = forward(m.params, m.arch, features);
    for (std::size_t r = 0; r < out.rows; ++r) floors.push_back(static_cast<int>(argmax(out.row(r))));
  }
  std::vector<Prediction3D> preds(set.size());
  for (const auto& [floor, reg] : model.per_floor_2d) {
    std::vector<std::size_t> rows;
    for (std::size_t r = 0; r < floors.size(); ++r)
      if (floors[r] == floor) rows.push_back(r);
    if (rows.empty()) continue;
    Matrix sub(rows.size(), features.cols);
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const auto src = features.row(rows[k]);
      std::copy(src.begin(), src.end(), sub.row(k).begin());
    }
    const Matrix out = forward(reg.params, model.regressor_arch, sub);
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const auto p = denormalize_target(out(k, 0), out(k, 1), reg.norm);
      preds[rows[k]] = {floor, p[0], p[1]};
    }
  }
  return preds;
}

ThreeDReport evaluate_3d(const ThreeDModel& model, const FingerprintSet& holdout) {
  if (holdout.empty()) throw std::invalid_argument("evaluate_3d: empty holdout");
  const auto preds = predict_3d(model, holdout);
  ThreeDReport rep;
  rep.records = holdout.size();
  std::size_t correct = 0;
  double err_correct = 0.0;
  double err_all = 0.0;
  for (std::size_t r = 0; r < preds.size(); ++r) {
    const auto& t = holdout.records[r];
    const double e = std::hypot(preds[r].longitude - t.longitude, preds[r].latitude - t.latitude);
    err_all += e;
    if (preds[r].floor == t.floor) {
      ++correct;
      err_correct += e;
    }
  }
  rep.floor_accuracy = static_cast<double>(correct) / static_cast<double>(preds.size());
  rep.mae_given_correct_floor = correct ? err_correct / static_cast<double>(correct) : 0.0;
  rep.mae_all = err_all / static_cast<double>(preds.size());
  return rep;
}

void write_ensemble(const std::string& dir, const FloorClassifierEnsemble& ensemble) {
  fs::create_directories(dir);
  json manifest;
  manifest["format"] = "fedloc-ensemble v1";
  manifest["floors"] = ensemble.floors();
  manifest["architecture"] = ensemble.arch.fingerprint();
  json members = json::object();
  for (std::size_t f = 0; f < ensemble.floors(); ++f) {
    const std::string name = "member_" + std::to_string(f) + ".params";
    write_params((fs::path(dir) / name).string(), ensemble.members[f], ensemble.arch);
    members[std::to_string(f)] = name;
  }
  manifest["members"] = members;
  std::ofstream out(fs::path(dir) / "manifest.json", std::ios::binary);
  out << manifest.dump(2) << '\n';
}

FloorClassifierEnsemble read_ensemble(const std::string& dir, const MlpArchitecture& arch) {
  std::ifstream in(fs::path(dir) / "manifest.json");
  if (!in) throw std::runtime_error("ensemble: missing manifest in " + dir);
  const json manifest = json::parse(in);
  if (manifest.at("format") != "fedloc-ensemble v1")
    throw std::runtime_error("ensemble: unsupported manifest format");
  if (manifest.at("architecture") != arch.fingerprint())
    throw std::runtime_error("ensemble: architecture mismatch");
  FloorClassifierEnsemble e;
  e.arch = arch;
  const std::size_t L = manifest.at("floors").get<std::size_t>();
  for (std::size_t f = 0; f < L; ++f) {
    const std::string name = manifest.at("members").at(std::to_string(f)).get<std::string>();
    e.members.push_back(read_params((fs::path(dir) / name).string(), arch));
  }
  return e;
}

}  // namespace fedloc
