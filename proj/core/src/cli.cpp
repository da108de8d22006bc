#include "alcr/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "alcr/checkpoint.hpp"
#include "alcr/pipeline.hpp"

namespace alcr::cli {

namespace fs = std::filesystem;

using pipeline::format_double;

namespace {

std::string corpus_dir(const RunConfig& cfg) {
  return resolve_output_path(cfg.corpus.dir);
}

std::string output_dir(const RunConfig& cfg) {
  return resolve_output_path(cfg.output_dir);
}

corpus::CorpusManifest load_corpus(const RunConfig& cfg) {
  std::string dir = corpus_dir(cfg);
  if (!fs::exists(dir + "/manifest.tsv"))
    throw std::runtime_error("no corpus at " + dir + "; run `alcr synth` first");
  return corpus::read_manifest(dir);
}

/// Shared pipeline settings for one grid cell, with the cache dir defaulted
/// under the output root.
pipeline::PipelineConfig cell_config(const RunConfig& cfg,
                                     const pipeline::VariantSpec& spec,
                                     double budget, std::uint64_t seed) {
  pipeline::PipelineConfig pc = cfg.pipeline;
  pc.variant = spec.variant;
  pc.cr_policy.kind = spec.policy;
  pc.budget_fraction = budget;
  pc.seed = seed;
  if (pc.initial_cache_dir.empty())
    pc.initial_cache_dir = output_dir(cfg) + "/cache";
  return pc;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.push_back("");
  return fields;
}

double median(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2]
                    : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace

int cmd_synth(const RunConfig& cfg) {
  std::string dir = corpus_dir(cfg);
  Vocabulary vocab(cfg.corpus.letters);
  corpus::CorpusManifest manifest =
      cfg.corpus.heterogeneous
          ? corpus::generate_heterogeneous_corpus(dir, cfg.corpus.seed,
                                                  cfg.corpus.sizes,
                                                  cfg.corpus.lengths, vocab)
          : corpus::generate_corpus(dir, cfg.corpus.seed, cfg.corpus.sizes,
                                    cfg.corpus.lengths, vocab);
  std::cout << "corpus written to " << dir << "\n";
  for (const char* split : {"initial", "unlabeled", "test"})
    std::cout << "  " << split << ": " << manifest.split(split).size()
              << " utterances, " << format_double(manifest.split_duration(split))
              << " s\n";
  return 0;
}

int cmd_train_initial(const RunConfig& cfg, std::uint64_t seed) {
  corpus::CorpusManifest manifest = load_corpus(cfg);
  pipeline::FeatureCache cache(manifest, corpus_dir(cfg), cfg.frontend);
  pipeline::PipelineConfig pc =
      cell_config(cfg, pipeline::VariantSpec{pipeline::Variant::InitialOnly,
                                             cfg.pipeline.cr_policy.kind},
                  cfg.pipeline.budget_fraction, seed);
  std::vector<pipeline::EpochRow> rows;
  model::Seq2SeqModel m =
      pipeline::train_initial(pc, manifest, cache, cfg.model, &rows);
  std::string out = output_dir(cfg);
  fs::create_directories(out);
  std::string ckpt = out + "/initial-s" + std::to_string(seed) + ".ckpt";
  model::save_checkpoint(ckpt, m);
  if (rows.empty()) {
    std::cout << "0 epochs requested; wrote the initialization to " << ckpt << "\n";
  } else {
    std::cout << "trained " << rows.size() << " epochs; final loss "
              << format_double(rows.back().loss_sup) << ", test CER "
              << format_double(rows.back().test_cer) << "%; wrote " << ckpt
              << "\n";
  }
  return 0;
}

int cmd_score(const RunConfig& cfg, const std::string& metric, std::uint64_t seed) {
  pipeline::UncertaintyMetric parsed = pipeline::parse_metric(metric);
  corpus::CorpusManifest manifest = load_corpus(cfg);
  pipeline::FeatureCache cache(manifest, corpus_dir(cfg), cfg.frontend);
  pipeline::PipelineConfig pc =
      cell_config(cfg, pipeline::VariantSpec{pipeline::Variant::InitialOnly,
                                             cfg.pipeline.cr_policy.kind},
                  cfg.pipeline.budget_fraction, seed);
  model::Seq2SeqModel m = pipeline::train_initial(pc, manifest, cache, cfg.model);

  Vocabulary vocab(manifest.letters);
  pipeline::PoolState pool = pipeline::make_pool(manifest, vocab);
  pipeline::score_pool(m, pool, cache, parsed, seed, pc.beam, pc.workers);

  std::string out = output_dir(cfg);
  fs::create_directories(out);
  std::string path = out + "/scores-" + metric + "-s" + std::to_string(seed) + ".csv";
  std::string text = "id,duration,score\n";
  for (const pipeline::PoolItem& item : pool.items)
    text += item.id + "," + format_double(item.duration) + "," +
            format_double(item.score) + "\n";
  pipeline::write_text_file(path, text);

  const pipeline::PoolItem* worst = &pool.items.front();
  for (const pipeline::PoolItem& item : pool.items)
    if (item.score < worst->score ||
        (item.score == worst->score && item.id < worst->id))
      worst = &item;
  std::cout << "scored " << pool.items.size() << " utterances with " << metric
            << "; most uncertain: " << worst->id << " ("
            << format_double(worst->score) << "); wrote " << path << "\n";
  return 0;
}

int cmd_run(const RunConfig& cfg, const RunOverrides& overrides) {
  corpus::CorpusManifest manifest = load_corpus(cfg);
  pipeline::FeatureCache cache(manifest, corpus_dir(cfg), cfg.frontend);
  const std::vector<std::string>& variants =
      overrides.variants.empty() ? cfg.grid.variants : overrides.variants;
  const std::vector<double>& budgets =
      overrides.budgets.empty() ? cfg.grid.budgets : overrides.budgets;
  const std::vector<std::uint64_t>& seeds =
      overrides.seeds.empty() ? cfg.grid.seeds : overrides.seeds;

  std::string runs_dir = output_dir(cfg) + "/runs";
  std::size_t total = variants.size() * budgets.size() * seeds.size();
  std::size_t done = 0;
  std::string summary = "variant,budget_fraction,seed,final_cer\n";
  for (const std::string& name : variants) {
    pipeline::VariantSpec spec = pipeline::parse_variant(name);
    for (double budget : budgets) {
      for (std::uint64_t seed : seeds) {
        pipeline::PipelineConfig pc = cell_config(cfg, spec, budget, seed);
        if (overrides.refresh_period > 0) pc.refresh_period = overrides.refresh_period;
        if (overrides.workers > 0) pc.workers = overrides.workers;

        std::string cell = name + "-b" + format_double(pc.budget_fraction) +
                           "-s" + std::to_string(seed);
        if (pc.refresh_period != 1) cell += "-d" + std::to_string(pc.refresh_period);
        std::string cell_dir = runs_dir + "/" + cell;
        std::cout << "[" << ++done << "/" << total << "] " << cell << "..."
                  << std::flush;
        pipeline::TrainingReport report =
            pipeline::run_pipeline(pc, manifest, cache, cfg.model, cell_dir);
        std::cout << " final CER " << format_double(report.final_cer) << "%\n";

        // Echo the effective settings for provenance / round-trip checks.
        RunConfig echo = cfg;
        echo.pipeline = pc;
        echo.pipeline.initial_cache_dir = cfg.pipeline.initial_cache_dir;
        echo.grid = GridSettings{{name}, {pc.budget_fraction}, {seed}};
        pipeline::write_text_file(cell_dir + "/config.json", echo.to_json_string());

        summary += report.variant + "," + format_double(report.budget_fraction) +
                   "," + std::to_string(report.seed) + "," +
                   format_double(report.final_cer) + "\n";
      }
    }
  }
  pipeline::write_text_file(runs_dir + "/summary.csv", summary);
  std::cout << "wrote " << runs_dir << "/summary.csv (" << total << " cells)\n";
  return 0;
}

int cmd_report(const std::string& dir) {
  std::string root = resolve_output_path(dir);
  std::string runs_dir = root + "/runs";
  if (!fs::is_directory(runs_dir))
    throw std::runtime_error("no runs directory under " + root);

  struct SummaryRow {
    std::string variant;
    double budget;
    std::string final_cer;
  };
  std::vector<SummaryRow> summaries;
  std::string cer_curves = "variant,budget_fraction,seed,epoch,test_cer\n";
  std::string pcer_curves = "variant,budget_fraction,seed,epoch,p_cer\n";

  std::vector<fs::path> cells;
  for (const auto& entry : fs::directory_iterator(runs_dir))
    if (entry.is_directory()) cells.push_back(entry.path());
  std::sort(cells.begin(), cells.end());

  for (const fs::path& cell : cells) {
    std::ifstream summary(cell / "summary.csv");
    std::ifstream report(cell / "report.csv");
    if (!summary || !report) continue;
    std::string line;
    std::getline(summary, line);  // header
    while (std::getline(summary, line)) {
      if (line.empty()) continue;
      auto f = split_csv_line(line);
      if (f.size() != 4)
        throw std::runtime_error("malformed summary row in " +
                                 (cell / "summary.csv").string());
      summaries.push_back({f[0], std::stod(f[1]), f[3]});
    }
    std::getline(report, line);  // header
    while (std::getline(report, line)) {
      if (line.empty()) continue;
      auto f = split_csv_line(line);
      if (f.size() != 9)
        throw std::runtime_error("malformed report row in " +
                                 (cell / "report.csv").string());
      cer_curves += f[0] + "," + f[1] + "," + f[2] + "," + f[3] + "," + f[7] + "\n";
      if (!f[8].empty())
        pcer_curves += f[0] + "," + f[1] + "," + f[2] + "," + f[3] + "," + f[8] + "\n";
    }
  }
  if (summaries.empty())
    throw std::runtime_error("no run reports found under " + runs_dir);

  // budget x variant pivot, medians over seeds.
  std::map<double, std::map<std::string, std::vector<double>>> pivot;
  std::vector<std::string> variants;
  for (const SummaryRow& row : summaries) {
    pivot[row.budget][row.variant].push_back(std::stod(row.final_cer));
    if (std::find(variants.begin(), variants.end(), row.variant) == variants.end())
      variants.push_back(row.variant);
  }
  std::sort(variants.begin(), variants.end());

  std::string table = "budget_fraction";
  for (const std::string& v : variants) table += "," + v;
  table += "\n";
  for (const auto& [budget, by_variant] : pivot) {
    table += format_double(budget);
    for (const std::string& v : variants) {
      auto it = by_variant.find(v);
      table += ",";
      if (it != by_variant.end()) table += format_double(median(it->second));
    }
    table += "\n";
  }

  std::string report_dir = root + "/report";
  fs::create_directories(report_dir);
  pipeline::write_text_file(report_dir + "/summary-table.csv", table);
  pipeline::write_text_file(report_dir + "/cer-curves.csv", cer_curves);
  pipeline::write_text_file(report_dir + "/pcer-curves.csv", pcer_curves);
  std::cout << "aggregated " << summaries.size() << " runs into " << report_dir
            << " (summary-table.csv, cer-curves.csv, pcer-curves.csv)\n";
  return 0;
}

}  // namespace alcr::cli
