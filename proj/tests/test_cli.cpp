#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#ifndef ALCR_BIN
#error "ALCR_BIN must point at the alcr executable"
#endif

namespace fs = std::filesystem;

namespace {

fs::path work_dir() {
  fs::path p = fs::temp_directory_path() / "alcr_cli_test";
  return p;
}

int run_cmd(const std::string& args) {
  fs::path log = work_dir() / "cmd.log";
  std::string cmd = std::string(ALCR_BIN) + " " + args + " >" + log.string() + " 2>&1";
  int rc = std::system(cmd.c_str());
  return rc < 0 ? rc : WEXITSTATUS(rc);
}

std::string last_log() {
  std::ifstream f(work_dir() / "cmd.log");
  return std::string((std::istreambuf_iterator<char>(f)),
                     std::istreambuf_iterator<char>());
}

std::string config_path() { return (work_dir() / "run.json").string(); }

void write_config() {
  fs::create_directories(work_dir());
  std::ofstream f(config_path());
  f << R"({
  "output_dir": ")" << (work_dir() / "out").string() << R"(",
  "corpus": {
    "dir": ")" << (work_dir() / "corpus").string() << R"(",
    "seed": 21,
    "sizes": {"initial": 4, "unlabeled": 6, "test": 3},
    "lengths": {"min": 2, "max": 3}
  },
  "model": {
    "hidden_size": 8, "embedding_size": 5, "attention_dim": 6,
    "attention_kernel": 3, "attention_channels": 2
  },
  "pipeline": {
    "epochs_initial": 1, "epochs_pipeline": 1, "batch_size": 4,
    "beam": {"width": 2}
  },
  "grid": {"variants": ["hls"], "budgets": [0.34], "seeds": [0]}
})";
}

}  // namespace

TEST_CASE("cli: end-to-end synth / run / report round") {
  fs::remove_all(work_dir());
  write_config();

  CHECK(run_cmd("--help") == 0);
  CHECK(last_log().find("synth") != std::string::npos);

  REQUIRE(run_cmd("-c " + config_path() + " synth") == 0);
  CHECK(fs::exists(work_dir() / "corpus" / "manifest.tsv"));
  CHECK(last_log().find("initial") != std::string::npos);

  REQUIRE(run_cmd("-c " + config_path() + " run") == 0);
  fs::path cell = work_dir() / "out" / "runs" / "hls-b0.34-s0";
  CHECK(fs::exists(cell / "report.csv"));
  CHECK(fs::exists(cell / "summary.csv"));
  CHECK(fs::exists(cell / "config.json"));
  CHECK(fs::exists(work_dir() / "out" / "runs" / "summary.csv"));

  // The per-cell report has the documented header and 2 epochs of rows.
  std::ifstream rep(cell / "report.csv");
  std::string header;
  std::getline(rep, header);
  CHECK(header == "variant,budget_fraction,seed,epoch,lr,loss_sup,loss_cr,test_cer,p_cer");
  int rows = 0;
  std::string line;
  while (std::getline(rep, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 2);

  REQUIRE(run_cmd("-c " + config_path() + " report") == 0);
  CHECK(fs::exists(work_dir() / "out" / "report" / "summary-table.csv"));
  CHECK(fs::exists(work_dir() / "out" / "report" / "cer-curves.csv"));

  // train-initial and score also run standalone on the same corpus.
  CHECK(run_cmd("-c " + config_path() + " train-initial --seed 0") == 0);
  CHECK(run_cmd("-c " + config_path() + " score --metric pprob --seed 0") == 0);
  CHECK(fs::exists(work_dir() / "out" / "scores-pprob-s0.csv"));
}

TEST_CASE("cli: exit codes distinguish usage from runtime errors") {
  write_config();
  // Unknown subcommand / flag: usage error -> 1.
  CHECK(run_cmd("frobnicate") == 1);
  CHECK(run_cmd("run --no-such-flag") == 1);
  // Invalid metric name: usage error -> 1.
  CHECK(run_cmd("-c " + config_path() + " score --metric entropy --seed 0") == 1);
  // Missing config file: runtime failure -> 2.
  CHECK(run_cmd("-c /nonexistent/alcr.json synth") == 2);
  // Malformed config: usage error -> 1.
  fs::path bad = work_dir() / "bad.json";
  {
    std::ofstream f(bad);
    f << "{ definitely not json";
  }
  CHECK(run_cmd("-c " + bad.string() + " synth") == 1);
  // Unknown config key: usage error -> 1.
  fs::path unknown = work_dir() / "unknown.json";
  {
    std::ofstream f(unknown);
    f << R"({"output_dirr": "x"})";
  }
  CHECK(run_cmd("-c " + unknown.string() + " synth") == 1);
  // run before synth: runtime failure -> 2 with a helpful message.
  fs::path fresh = work_dir() / "fresh.json";
  {
    std::ofstream f(fresh);
    f << R"({"corpus": {"dir": ")" << (work_dir() / "no_corpus").string()
      << R"("}, "output_dir": ")" << (work_dir() / "out2").string() << R"("})";
  }
  CHECK(run_cmd("-c " + fresh.string() + " run") == 2);
  CHECK(last_log().find("synth") != std::string::npos);
}
