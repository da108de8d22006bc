#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "alcr/config.hpp"

using namespace alcr::cli;
namespace fs = std::filesystem;

namespace {

const char* kMinimal = R"({
  "output_dir": "out",
  "corpus": {"dir": "corpus", "seed": 3},
  "pipeline": {"lambda": 0.5, "tau": -0.25},
  "grid": {"variants": ["hls", "cr-sa"], "budgets": [0.1, 0.2], "seeds": [0, 1, 2]}
})";

}  // namespace

TEST_CASE("config: defaults and explicit fields") {
  RunConfig cfg = RunConfig::parse(kMinimal);
  CHECK(cfg.output_dir == "out");
  CHECK(cfg.corpus.dir == "corpus");
  CHECK(cfg.corpus.seed == 3);
  CHECK(cfg.corpus.letters == "abcdefghijkl");
  CHECK(cfg.pipeline.lambda == 0.5);
  CHECK(cfg.pipeline.tau == -0.25);
  CHECK(cfg.pipeline.epochs_initial == 20);
  CHECK(cfg.pipeline.epochs_pipeline == 15);
  CHECK(cfg.pipeline.batch_size == 32);
  CHECK(cfg.model.hidden_size == 32);
  CHECK(cfg.model.input_bins == 401);
  CHECK(cfg.frontend.sample_rate == 4000);
  CHECK(cfg.grid.variants.size() == 2);
  CHECK(cfg.grid.budgets.size() == 2);
  CHECK(cfg.grid.seeds.size() == 3);
}

TEST_CASE("config: unknown keys are rejected everywhere") {
  CHECK_THROWS_AS(RunConfig::parse(R"({"output_dir": "x", "bogus": 1})"),
                  std::invalid_argument);
  CHECK_THROWS_AS(RunConfig::parse(R"({"corpus": {"dir": "c", "x": 1}})"),
                  std::invalid_argument);
  CHECK_THROWS_AS(RunConfig::parse(R"({"pipeline": {"lamda": 0.5}})"),
                  std::invalid_argument);
  CHECK_THROWS_AS(RunConfig::parse(R"({"model": {"hidden": 8}})"),
                  std::invalid_argument);
  CHECK_THROWS_AS(RunConfig::parse(R"({"pipeline": {"beam": {"widht": 3}}})"),
                  std::invalid_argument);
  CHECK_THROWS_AS(RunConfig::parse(R"({"grid": {"metrics": []}})"),
                  std::invalid_argument);
}

TEST_CASE("config: malformed json and invalid values map to invalid_argument") {
  CHECK_THROWS_AS(RunConfig::parse("{ not json"), std::invalid_argument);
  CHECK_THROWS_AS(RunConfig::parse(R"({"pipeline": {"budget_fraction": "a"}})"),
                  std::invalid_argument);
  CHECK_THROWS_AS(RunConfig::parse(R"({"grid": {"variants": ["nope"]}})"),
                  std::invalid_argument);
  CHECK_THROWS_AS(RunConfig::parse(R"({"grid": {"budgets": [1.5]}})"),
                  std::invalid_argument);
  CHECK_THROWS_AS(RunConfig::parse(R"({"pipeline": {"epochs_initial": -1}})"),
                  std::invalid_argument);
}

TEST_CASE("config: round-trips through its own echo") {
  RunConfig cfg = RunConfig::parse(kMinimal);
  std::string echoed = cfg.to_json_string();
  RunConfig back = RunConfig::parse(echoed);
  CHECK(back.output_dir == cfg.output_dir);
  CHECK(back.corpus.seed == cfg.corpus.seed);
  CHECK(back.pipeline.tau == cfg.pipeline.tau);
  CHECK(back.pipeline.lambda == cfg.pipeline.lambda);
  CHECK(back.grid.variants == cfg.grid.variants);
  CHECK(back.grid.budgets == cfg.grid.budgets);
  CHECK(back.grid.seeds == cfg.grid.seeds);
  CHECK(back.to_json_string() == echoed);  // fixed point
}

TEST_CASE("config: load reads a file and reports missing ones") {
  fs::path dir = fs::temp_directory_path() / "alcr_config_test";
  fs::create_directories(dir);
  fs::path p = dir / "run.json";
  {
    std::ofstream f(p);
    f << kMinimal;
  }
  RunConfig cfg = RunConfig::load(p.string());
  CHECK(cfg.corpus.seed == 3);
  CHECK_THROWS_AS(RunConfig::load((dir / "absent.json").string()), std::runtime_error);
  fs::remove(p);
}

TEST_CASE("config: resolve_output_path honours the env root") {
  // Absolute paths pass through untouched.
  CHECK(resolve_output_path("/abs/path") == "/abs/path");
  ::unsetenv("ALCR_OUTPUT_ROOT");
  CHECK(resolve_output_path("rel/path") == "rel/path");
  ::setenv("ALCR_OUTPUT_ROOT", "/tmp/alcr_root", 1);
  CHECK(resolve_output_path("rel/path") == "/tmp/alcr_root/rel/path");
  CHECK(resolve_output_path("/abs/path") == "/abs/path");
  ::unsetenv("ALCR_OUTPUT_ROOT");
}

TEST_CASE("config: beam and frontend sections parse") {
  RunConfig cfg = RunConfig::parse(R"({
    "pipeline": {"beam": {"width": 3, "max_len_cap": 20}},
    "frontend": {"window_sec": 0.1, "stride_sec": 0.05},
    "model": {"hidden_size": 16, "cell": "lstm"}
  })");
  CHECK(cfg.pipeline.beam.width == 3);
  CHECK(cfg.pipeline.beam.max_len_cap == 20);
  CHECK(cfg.frontend.window_sec == 0.1);
  CHECK(cfg.model.cell == "lstm");
  CHECK(cfg.model.hidden_size == 16);
}
