// fedloc: validate, run and summarize federated localization experiments.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "fedloc/experiment.hpp"
#include "fedloc/synth.hpp"

namespace {

void print_summary(const std::vector<fedloc::SummaryRow>& rows) {
  for (const auto& r : rows) {
    if (!r.vs_method.empty()) continue;
    std::printf("%-28s %-14s %-16s n=%zu  final %.4f +- %.4f %s\n", r.experiment_id.c_str(),
                r.metric.c_str(), r.method.c_str(), r.n_seeds, r.final_mean, r.final_std,
                r.units.c_str());
  }
  for (const auto& r : rows) {
    if (r.vs_method.empty() || r.units != "meters") continue;
    if (r.method != "H-FedTLoc" || r.vs_method != "N-FedLoc") continue;
    std::printf("%-28s H-FedTLoc vs N-FedLoc relative improvement %.1f%%\n",
                r.experiment_id.c_str(), 100.0 * r.relative_improvement);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated WiFi fingerprint localization experiments"};
  app.require_subcommand(1);

  std::string config_path;
  auto* validate = app.add_subcommand("validate", "Check a config and print the resolved snapshot");
  validate->add_option("config", config_path, "Experiment config (JSON)")->required();

  std::string run_config;
  std::optional<std::uint64_t> seed_override;
  std::optional<std::size_t> rounds_override;
  std::string out_dir;
  auto* run = app.add_subcommand("run", "Run an experiment");
  run->add_option("config", run_config, "Experiment config (JSON) or config.resolved")->required();
  run->add_option("--seed-override", seed_override, "Run a single seed");
  run->add_option("--rounds-override", rounds_override, "Total rounds (transfer round rescaled)");
  run->add_option("--out", out_dir, "Output directory");

  std::string results_dir;
  auto* summarize = app.add_subcommand("summarize", "Recompute summary.csv from results.csv");
  summarize->add_option("results-dir", results_dir, "Directory holding results.csv")->required();

  std::string synth_dir;
  std::uint64_t synth_seed = fedloc::SynthConfig{}.seed;
  auto* synth = app.add_subcommand("synth", "Write a synthetic corpus in UJIIndoorLoc layout");
  synth->add_option("dir", synth_dir, "Output directory")->required();
  synth->add_option("--seed", synth_seed, "Generator seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*validate) {
      const auto cfg = fedloc::load_config(config_path);
      std::cout << fedloc::resolved_snapshot(cfg);
      return 0;
    }
    if (*run) {
      auto cfg = fedloc::load_config(run_config);
      fedloc::apply_overrides(cfg, seed_override, rounds_override);
      if (!out_dir.empty()) cfg.output_dir = out_dir;
      const auto art = fedloc::run_experiment(cfg);
      print_summary(art.summary);
      for (const auto& r : art.runs) {
        if (!r.ok)
          std::fprintf(stderr, "failed: %s %s seed %llu: %s\n", r.experiment_id.c_str(),
                       r.method_tag.c_str(), static_cast<unsigned long long>(r.seed), r.detail.c_str());
      }
      std::printf("wrote %s\n", (std::filesystem::path(cfg.output_dir) / "results.csv").string().c_str());
      return art.any_failed() ? 1 : 0;
    }
    if (*summarize) {
      const auto rows = fedloc::read_results_csv((std::filesystem::path(results_dir) / "results.csv").string());
      const auto summary = fedloc::summarize(rows);
      std::ofstream out(std::filesystem::path(results_dir) / "summary.csv", std::ios::binary);
      out << fedloc::format_summary_csv(summary);
      if (!out) throw std::runtime_error("cannot write summary.csv");
      print_summary(summary);
      return 0;
    }
    if (*synth) {
      fedloc::SynthConfig sc;
      sc.seed = synth_seed;
      fedloc::write_synthetic_corpus(synth_dir, sc);
      std::printf("wrote %s/trainingData.csv and validationData.csv\n", synth_dir.c_str());
      return 0;
    }
  } catch (const fedloc::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
