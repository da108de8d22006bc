#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "alcr/corpus.hpp"
#include "alcr/dsp.hpp"
#include "alcr/model.hpp"
#include "alcr/pipeline.hpp"

namespace alcr::cli {

struct CorpusSettings {
  std::string dir = "corpus";
  std::uint64_t seed = 0;
  bool heterogeneous = false;
  corpus::CorpusSizes sizes;
  corpus::LengthRange lengths;
  std::string letters = "abcdefghijkl";
};

/// The variant grid a `run` invocation covers (cross product).
struct GridSettings {
  std::vector<std::string> variants = {"hls"};
  std::vector<double> budgets = {0.1};
  std::vector<std::uint64_t> seeds = {0};
};

/// Parsed configuration file. Parsing is strict: unknown keys anywhere in the
/// document are rejected so typos cannot silently fall back to defaults.
struct RunConfig {
  std::string output_dir = "out";
  CorpusSettings corpus;
  model::ModelConfig model;
  dsp::FrontendConfig frontend;
  pipeline::PipelineConfig pipeline;  // variant/budget/seed come from the grid
  GridSettings grid;

  static RunConfig load(const std::string& path);
  static RunConfig parse(const std::string& json_text);
  /// Effective settings, round-trippable through parse().
  std::string to_json_string() const;

  void validate() const;
};

/// Joins a relative path onto the ALCR_OUTPUT_ROOT environment variable (or
/// the current directory when unset); absolute paths pass through.
std::string resolve_output_path(const std::string& path);

}  // namespace alcr::cli
