#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "alcr/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"alcr: label-efficient ASR training lab"};
  app.require_subcommand(1);

  std::string config_path = "alcr.json";
  app.add_option("-c,--config", config_path, "configuration file (JSON)")
      ->capture_default_str();

  CLI::App* synth = app.add_subcommand("synth", "generate the synthetic corpus");

  std::uint64_t seed = 0;
  CLI::App* train = app.add_subcommand(
      "train-initial", "train the initial model on the initial split");
  train->add_option("--seed", seed, "model seed")->capture_default_str();

  std::string metric = "pprob";
  CLI::App* score = app.add_subcommand(
      "score", "score the unlabeled pool with an uncertainty metric");
  score->add_option("--metric", metric, "pprob | oracle-loss | oracle-cer | random")
      ->capture_default_str();
  score->add_option("--seed", seed, "model seed")->capture_default_str();

  alcr::cli::RunOverrides overrides;
  CLI::App* run = app.add_subcommand("run", "run pipeline variants over the grid");
  run->add_option("--variant", overrides.variants,
                  "variant names (default: config grid)");
  run->add_option("--budget", overrides.budgets,
                  "budget fractions (default: config grid)");
  run->add_option("--seed", overrides.seeds, "seeds (default: config grid)");
  run->add_option("--refresh", overrides.refresh_period,
                  "pseudo-label refresh period override");
  run->add_option("--workers", overrides.workers,
                  "decode worker threads override");

  std::string report_dir;
  CLI::App* report = app.add_subcommand(
      "report", "aggregate run reports into tables and curve files");
  report->add_option("--dir", report_dir,
                     "output root to aggregate (default: config output_dir)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (report->parsed() && !report_dir.empty()) return alcr::cli::cmd_report(report_dir);
    alcr::cli::RunConfig cfg = alcr::cli::RunConfig::load(config_path);
    if (synth->parsed()) return alcr::cli::cmd_synth(cfg);
    if (train->parsed()) return alcr::cli::cmd_train_initial(cfg, seed);
    if (score->parsed()) return alcr::cli::cmd_score(cfg, metric, seed);
    if (run->parsed()) return alcr::cli::cmd_run(cfg, overrides);
    if (report->parsed()) return alcr::cli::cmd_report(cfg.output_dir);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
