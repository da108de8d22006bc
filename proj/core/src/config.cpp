#include "alcr/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace alcr::cli {

using nlohmann::json;

namespace {

/// Strictness guard: every object may carry only the keys listed here.
void check_keys(const json& j, const std::string& where,
                std::initializer_list<const char*> allowed) {
  if (!j.is_object())
    throw std::invalid_argument("config: " + where + " must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items())
    if (ok.count(key) == 0)
      throw std::invalid_argument("config: unknown key '" + key + "' in " + where);
}

template <typename T>
void read_field(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

CorpusSettings parse_corpus(const json& j) {
  check_keys(j, "corpus",
             {"dir", "seed", "heterogeneous", "sizes", "lengths", "letters"});
  CorpusSettings c;
  read_field(j, "dir", c.dir);
  read_field(j, "seed", c.seed);
  read_field(j, "heterogeneous", c.heterogeneous);
  if (j.contains("sizes")) {
    check_keys(j.at("sizes"), "corpus.sizes", {"initial", "unlabeled", "test"});
    read_field(j.at("sizes"), "initial", c.sizes.initial);
    read_field(j.at("sizes"), "unlabeled", c.sizes.unlabeled);
    read_field(j.at("sizes"), "test", c.sizes.test);
  }
  if (j.contains("lengths")) {
    check_keys(j.at("lengths"), "corpus.lengths", {"min", "max"});
    read_field(j.at("lengths"), "min", c.lengths.min_len);
    read_field(j.at("lengths"), "max", c.lengths.max_len);
  }
  read_field(j, "letters", c.letters);
  return c;
}

model::ModelConfig parse_model(const json& j) {
  check_keys(j, "model",
             {"encoder_layers", "bidirectional", "decoder_layers", "hidden_size",
              "embedding_size", "input_bins", "cell", "location_attention",
              "attention_dim", "attention_kernel", "attention_channels"});
  model::ModelConfig m;
  read_field(j, "encoder_layers", m.encoder_layers);
  read_field(j, "bidirectional", m.bidirectional);
  read_field(j, "decoder_layers", m.decoder_layers);
  read_field(j, "hidden_size", m.hidden_size);
  read_field(j, "embedding_size", m.embedding_size);
  read_field(j, "input_bins", m.input_bins);
  read_field(j, "cell", m.cell);
  read_field(j, "location_attention", m.location_attention);
  read_field(j, "attention_dim", m.attention_dim);
  read_field(j, "attention_kernel", m.attention_kernel);
  read_field(j, "attention_channels", m.attention_channels);
  return m;
}

dsp::FrontendConfig parse_frontend(const json& j) {
  check_keys(j, "frontend", {"sample_rate", "window_sec", "stride_sec", "log_floor"});
  dsp::FrontendConfig f;
  read_field(j, "sample_rate", f.sample_rate);
  read_field(j, "window_sec", f.window_sec);
  read_field(j, "stride_sec", f.stride_sec);
  read_field(j, "log_floor", f.log_floor);
  return f;
}

pipeline::PipelineConfig parse_pipeline(const json& j) {
  check_keys(j, "pipeline",
             {"lambda", "refresh_period", "tau", "metric", "epochs_initial",
              "epochs_pipeline", "batch_size", "lr_initial", "lr_pipeline",
              "lr_decay", "clip_norm", "beam", "initial_augment",
              "initial_cache_dir", "workers"});
  pipeline::PipelineConfig p;
  read_field(j, "lambda", p.lambda);
  read_field(j, "refresh_period", p.refresh_period);
  read_field(j, "tau", p.tau);
  if (j.contains("metric"))
    p.metric = pipeline::parse_metric(j.at("metric").get<std::string>());
  read_field(j, "epochs_initial", p.epochs_initial);
  read_field(j, "epochs_pipeline", p.epochs_pipeline);
  read_field(j, "batch_size", p.batch_size);
  read_field(j, "lr_initial", p.lr_initial);
  read_field(j, "lr_pipeline", p.lr_pipeline);
  read_field(j, "lr_decay", p.lr_decay);
  read_field(j, "clip_norm", p.clip_norm);
  if (j.contains("beam")) {
    const json& b = j.at("beam");
    check_keys(b, "pipeline.beam",
               {"width", "max_len", "max_len_cap", "lp_offset", "lp_power"});
    read_field(b, "width", p.beam.width);
    read_field(b, "max_len", p.beam.max_len);
    read_field(b, "max_len_cap", p.beam.max_len_cap);
    read_field(b, "lp_offset", p.beam.lp_offset);
    read_field(b, "lp_power", p.beam.lp_power);
  }
  if (j.contains("initial_augment"))
    p.initial_policy =
        augment::AugmentationPolicy::parse(j.at("initial_augment").get<std::string>());
  read_field(j, "initial_cache_dir", p.initial_cache_dir);
  read_field(j, "workers", p.workers);
  return p;
}

GridSettings parse_grid(const json& j) {
  check_keys(j, "grid", {"variants", "budgets", "seeds"});
  GridSettings g;
  read_field(j, "variants", g.variants);
  read_field(j, "budgets", g.budgets);
  read_field(j, "seeds", g.seeds);
  return g;
}

}  // namespace

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return parse(text.str());
}

RunConfig RunConfig::parse(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: malformed JSON: ") + e.what());
  }
  check_keys(j, "the top level",
             {"output_dir", "corpus", "model", "frontend", "pipeline", "grid"});
  RunConfig cfg;
  try {
    read_field(j, "output_dir", cfg.output_dir);
    if (j.contains("corpus")) cfg.corpus = parse_corpus(j.at("corpus"));
    if (j.contains("model")) cfg.model = parse_model(j.at("model"));
    if (j.contains("frontend")) cfg.frontend = parse_frontend(j.at("frontend"));
    if (j.contains("pipeline")) cfg.pipeline = parse_pipeline(j.at("pipeline"));
    if (j.contains("grid")) cfg.grid = parse_grid(j.at("grid"));
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: bad field type: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

std::string RunConfig::to_json_string() const {
  json j;
  j["output_dir"] = output_dir;
  j["corpus"] = {{"dir", corpus.dir},
                 {"seed", corpus.seed},
                 {"heterogeneous", corpus.heterogeneous},
                 {"sizes",
                  {{"initial", corpus.sizes.initial},
                   {"unlabeled", corpus.sizes.unlabeled},
                   {"test", corpus.sizes.test}}},
                 {"lengths",
                  {{"min", corpus.lengths.min_len}, {"max", corpus.lengths.max_len}}},
                 {"letters", corpus.letters}};
  j["model"] = {{"encoder_layers", model.encoder_layers},
                {"bidirectional", model.bidirectional},
                {"decoder_layers", model.decoder_layers},
                {"hidden_size", model.hidden_size},
                {"embedding_size", model.embedding_size},
                {"input_bins", model.input_bins},
                {"cell", model.cell},
                {"location_attention", model.location_attention},
                {"attention_dim", model.attention_dim},
                {"attention_kernel", model.attention_kernel},
                {"attention_channels", model.attention_channels}};
  j["frontend"] = {{"sample_rate", frontend.sample_rate},
                   {"window_sec", frontend.window_sec},
                   {"stride_sec", frontend.stride_sec},
                   {"log_floor", frontend.log_floor}};
  j["pipeline"] = {{"lambda", pipeline.lambda},
                   {"refresh_period", pipeline.refresh_period},
                   {"tau", pipeline.tau},
                   {"metric", pipeline::metric_name(pipeline.metric)},
                   {"epochs_initial", pipeline.epochs_initial},
                   {"epochs_pipeline", pipeline.epochs_pipeline},
                   {"batch_size", pipeline.batch_size},
                   {"lr_initial", pipeline.lr_initial},
                   {"lr_pipeline", pipeline.lr_pipeline},
                   {"lr_decay", pipeline.lr_decay},
                   {"clip_norm", pipeline.clip_norm},
                   {"beam",
                    {{"width", pipeline.beam.width},
                     {"max_len", pipeline.beam.max_len},
                     {"max_len_cap", pipeline.beam.max_len_cap},
                     {"lp_offset", pipeline.beam.lp_offset},
                     {"lp_power", pipeline.beam.lp_power}}},
                   {"initial_augment", pipeline.initial_policy.name()},
                   {"initial_cache_dir", pipeline.initial_cache_dir},
                   {"workers", pipeline.workers}};
  j["grid"] = {{"variants", grid.variants},
               {"budgets", grid.budgets},
               {"seeds", grid.seeds}};
  return j.dump(2) + "\n";
}

void RunConfig::validate() const {
  if (output_dir.empty())
    throw std::invalid_argument("config: output_dir must not be empty");
  if (corpus.dir.empty())
    throw std::invalid_argument("config: corpus.dir must not be empty");
  if (corpus.sizes.initial < 1 || corpus.sizes.unlabeled < 1 || corpus.sizes.test < 1)
    throw std::invalid_argument("config: corpus split sizes must be positive");
  if (corpus.lengths.min_len < 0 || corpus.lengths.max_len < corpus.lengths.min_len)
    throw std::invalid_argument("config: corpus length range is invalid");
  model.validate();
  if (grid.variants.empty() || grid.budgets.empty() || grid.seeds.empty())
    throw std::invalid_argument("config: grid lists must not be empty");
  for (const std::string& name : grid.variants)
    pipeline::parse_variant(name);  // throws on unknown names
  for (double b : grid.budgets)
    if (!(b >= 0.0 && b <= 1.0))
      throw std::invalid_argument("config: grid budgets must be in [0, 1]");
  // Per-cell fields are injected later; validate the shared remainder.
  pipeline::PipelineConfig probe = pipeline;
  probe.variant = pipeline::Variant::Hls;
  probe.budget_fraction = 0.0;
  probe.validate();
}

std::string resolve_output_path(const std::string& path) {
  if (!path.empty() && path.front() == '/') return path;
  const char* root = std::getenv("ALCR_OUTPUT_ROOT");
  if (root == nullptr || root[0] == '\0') return path;
  std::string joined(root);
  if (joined.back() != '/') joined += '/';
  return joined + path;
}

}  // namespace alcr::cli
