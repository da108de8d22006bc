#include "alcr/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <utility>

#include <unistd.h>

#include "alcr/checkpoint.hpp"
#include "alcr/metrics.hpp"
#include "alcr/rng.hpp"

namespace alcr::pipeline {

namespace fs = std::filesystem;

using autodiff::AdamConfig;
using autodiff::AdamState;
using autodiff::Gradients;
using autodiff::Tape;
using autodiff::TapeParams;
using autodiff::Var;
using Kind = augment::AugmentationPolicy::Kind;

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

std::string f17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

template <typename T>
void shuffle_vec(std::vector<T>& v, RngStream& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng.uniform_int(i));
    std::swap(v[i - 1], v[j]);
  }
}

/// Runs fn(i) for i in [0, n); with workers > 1, splits the index range over
/// threads. Each index is handled exactly once, so results never depend on
/// the worker count.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  if (workers <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::size_t num = std::min<std::size_t>(static_cast<std::size_t>(workers), n);
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  std::mutex error_mutex;
  std::exception_ptr error;
  pool.reserve(num);
  for (std::size_t t = 0; t < num; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (std::thread& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

std::string policy_suffix(Kind kind) {
  switch (kind) {
    case Kind::Speed: return "s";
    case Kind::Pitch: return "p";
    case Kind::Awgn: return "a";
    case Kind::SpecAugment: return "sa";
    case Kind::None: break;
  }
  throw std::invalid_argument("cr variant needs an augmentation policy");
}

}  // namespace

UncertaintyMetric parse_metric(const std::string& name) {
  if (name == "pprob") return UncertaintyMetric::Pprob;
  if (name == "oracle-loss") return UncertaintyMetric::OracleLoss;
  if (name == "oracle-cer") return UncertaintyMetric::OracleCer;
  if (name == "random") return UncertaintyMetric::Random;
  throw std::invalid_argument("unknown uncertainty metric: " + name);
}

std::string metric_name(UncertaintyMetric m) {
  switch (m) {
    case UncertaintyMetric::Pprob: return "pprob";
    case UncertaintyMetric::OracleLoss: return "oracle-loss";
    case UncertaintyMetric::OracleCer: return "oracle-cer";
    case UncertaintyMetric::Random: return "random";
  }
  throw std::invalid_argument("unknown uncertainty metric value");
}

VariantSpec parse_variant(const std::string& name) {
  VariantSpec spec;
  if (name == "initial-only") {
    spec.variant = Variant::InitialOnly;
    return spec;
  }
  if (name == "hls") {
    spec.variant = Variant::Hls;
    return spec;
  }
  if (name == "pls") {
    spec.variant = Variant::Pls;
    return spec;
  }
  if (name == "pls-tau") {
    spec.variant = Variant::PlsFiltered;
    return spec;
  }
  if (name == "full-budget") {
    spec.variant = Variant::FullBudget;
    return spec;
  }
  if (name.rfind("cr-", 0) == 0) {
    std::string rest = name.substr(3);
    spec.variant = Variant::Cr;
    if (rest.size() > 4 && rest.rfind("-tau") == rest.size() - 4) {
      spec.variant = Variant::CrFiltered;
      rest = rest.substr(0, rest.size() - 4);
    }
    if (rest == "s") {
      spec.policy = Kind::Speed;
      return spec;
    }
    if (rest == "p") {
      spec.policy = Kind::Pitch;
      return spec;
    }
    if (rest == "a") {
      spec.policy = Kind::Awgn;
      return spec;
    }
    if (rest == "sa") {
      spec.policy = Kind::SpecAugment;
      return spec;
    }
  }
  throw std::invalid_argument("unknown variant: " + name);
}

std::string variant_name(Variant variant, Kind policy) {
  switch (variant) {
    case Variant::InitialOnly: return "initial-only";
    case Variant::Hls: return "hls";
    case Variant::Pls: return "pls";
    case Variant::PlsFiltered: return "pls-tau";
    case Variant::FullBudget: return "full-budget";
    case Variant::Cr: return "cr-" + policy_suffix(policy);
    case Variant::CrFiltered: return "cr-" + policy_suffix(policy) + "-tau";
  }
  throw std::invalid_argument("unknown variant value");
}

void PipelineConfig::validate() const {
  if (!(budget_fraction >= 0.0 && budget_fraction <= 1.0))
    throw std::invalid_argument("pipeline config: budget_fraction must be in [0, 1]");
  if (!(lambda >= 0.0))
    throw std::invalid_argument("pipeline config: lambda must be >= 0");
  if (refresh_period < 1)
    throw std::invalid_argument("pipeline config: refresh period must be >= 1");
  if (epochs_initial < 0 || epochs_pipeline < 0)
    throw std::invalid_argument("pipeline config: epoch counts must be >= 0");
  if (batch_size < 1)
    throw std::invalid_argument("pipeline config: batch_size must be >= 1");
  if (!(lr_initial > 0.0) || !(lr_pipeline > 0.0) || !(lr_decay > 0.0))
    throw std::invalid_argument("pipeline config: learning rates must be > 0");
  if (!(clip_norm > 0.0))
    throw std::invalid_argument("pipeline config: clip_norm must be > 0");
  if (workers < 1)
    throw std::invalid_argument("pipeline config: workers must be >= 1");
  if ((variant == Variant::Cr || variant == Variant::CrFiltered) &&
      cr_policy.kind == Kind::None)
    throw std::invalid_argument("pipeline config: cr variants need an augmentation policy");
}

FeatureCache::FeatureCache(const corpus::CorpusManifest& manifest,
                           std::string corpus_dir, dsp::FrontendConfig frontend)
    : manifest_(&manifest), dir_(std::move(corpus_dir)), frontend_(frontend) {}

const dsp::Waveform& FeatureCache::waveform(const std::string& id) {
  auto it = waveforms_.find(id);
  if (it != waveforms_.end()) return it->second;
  const corpus::ManifestEntry& entry = manifest_->by_id(id);
  dsp::Waveform w = dsp::read_wav(dir_ + "/" + entry.wav_path);
  return waveforms_.emplace(id, std::move(w)).first->second;
}

const Tensor& FeatureCache::features(const std::string& id) {
  auto it = features_.find(id);
  if (it != features_.end()) return it->second;
  Tensor f = dsp::spectrogram(waveform(id), frontend_);
  return features_.emplace(id, std::move(f)).first->second;
}

PoolItem& PoolState::by_id(const std::string& id) {
  for (PoolItem& item : items)
    if (item.id == id) return item;
  throw std::out_of_range("pool has no utterance " + id);
}

std::size_t PoolState::count(PoolStatus status) const {
  std::size_t n = 0;
  for (const PoolItem& item : items) n += item.status == status ? 1 : 0;
  return n;
}

double PoolState::total_duration() const {
  double d = 0.0;
  for (const PoolItem& item : items) d += item.duration;
  return d;
}

double PoolState::status_duration(PoolStatus status) const {
  double d = 0.0;
  for (const PoolItem& item : items)
    if (item.status == status) d += item.duration;
  return d;
}

PoolState make_pool(const corpus::CorpusManifest& manifest,
                    const Vocabulary& vocab, const std::string& split) {
  PoolState pool;
  for (const corpus::ManifestEntry& e : manifest.split(split)) {
    PoolItem item;
    item.id = e.id;
    item.duration = e.duration_s;
    item.transcript = vocab.encode(e.transcript);
    pool.items.push_back(std::move(item));
  }
  if (pool.items.empty())
    throw std::invalid_argument("make_pool: split '" + split + "' is empty");
  return pool;
}

double EpochStats::loss_sup() const {
  return sup_tokens > 0 ? sup_nll / static_cast<double>(sup_tokens) : kNan;
}

double EpochStats::loss_cr() const {
  return cr_tokens > 0 ? cr_nll / static_cast<double>(cr_tokens) : kNan;
}

Tensor augmented_features(FeatureCache& cache, const std::string& id,
                          const augment::AugmentationPolicy& policy,
                          RngStream& rng) {
  if (policy.kind == Kind::SpecAugment)
    return augment::spec_augment(cache.features(id), policy.sa_time_width,
                                 policy.sa_freq_width, policy.sa_time_masks,
                                 policy.sa_freq_masks, rng);
  return augment::apply(policy, cache.waveform(id), cache.frontend(), rng);
}

EpochStats train_epoch(model::Seq2SeqModel& m, AdamState& adam,
                       std::vector<TrainItem> items, FeatureCache& cache,
                       const EpochSettings& settings, RngStream& rng,
                       BatchObserver* observer) {
  if (items.empty()) throw std::invalid_argument("train_epoch: no training items");
  bool want_cr = settings.lambda != 0.0 && settings.cr_policy != nullptr;
  bool want_sup_aug =
      settings.sup_policy != nullptr && settings.sup_policy->kind != Kind::None;
  shuffle_vec(items, rng);

  AdamConfig adam_cfg;
  adam_cfg.lr = settings.lr;
  EpochStats stats;
  std::vector<model::Example> sup;
  std::vector<model::Example> cr;
  for (std::size_t start = 0; start < items.size();
       start += static_cast<std::size_t>(settings.batch_size)) {
    std::size_t stop =
        std::min(items.size(), start + static_cast<std::size_t>(settings.batch_size));
    sup.clear();
    cr.clear();
    for (std::size_t i = start; i < stop; ++i) {
      const TrainItem& item = items[i];
      Tensor feats = want_sup_aug
                         ? augmented_features(cache, item.id, *settings.sup_policy, rng)
                         : cache.features(item.id);
      sup.push_back({std::move(feats), *item.tokens});
      if (item.is_pls && want_cr)
        cr.push_back({augmented_features(cache, item.id, *settings.cr_policy, rng),
                      *item.tokens});
    }

    Tape tape;
    TapeParams tp = watch_parameters(tape, m.params());
    model::LossBreakdown breakdown;
    Var loss = model::build_total_loss(tape, tp, m, sup, cr, settings.lambda,
                                       &breakdown);
    if (!std::isfinite(breakdown.total))
      throw std::runtime_error("train_epoch: training diverged (non-finite loss)");
    if (observer) observer->on_batch(m, sup, cr, settings.lambda, breakdown);

    Gradients grads = tape.backward(loss);
    autodiff::clip_global_norm(grads, settings.clip_norm);
    autodiff::adam_step(m.params(), grads, adam, adam_cfg);

    stats.sup_nll += breakdown.loss_sup * static_cast<double>(breakdown.sup_tokens);
    stats.sup_tokens += breakdown.sup_tokens;
    stats.cr_nll += breakdown.loss_cr * static_cast<double>(breakdown.cr_tokens);
    stats.cr_tokens += breakdown.cr_tokens;
  }
  return stats;
}

namespace {

/// Everything that determines the initial phase's outcome, digested so cached
/// checkpoints are reused only for identical settings.
std::string initial_phase_hash(const PipelineConfig& cfg,
                               const corpus::CorpusManifest& manifest,
                               const model::ModelConfig& model_config,
                               const dsp::FrontendConfig& frontend) {
  const Vocabulary vocab(manifest.letters);
  std::string s = "v1|model=" + model::config_hash(model_config, vocab);
  s += "|corpus=" + std::to_string(manifest.seed) + "," + manifest.letters + "|";
  for (const corpus::ManifestEntry& e : manifest.entries) {
    s += e.id;
    s += ',';
    s += e.transcript;
    s += ',';
    s += f17(e.duration_s);
    s += ',';
    s += e.split;
    s += ';';
  }
  s += "|frontend=" + std::to_string(frontend.sample_rate) + "," +
       f17(frontend.window_sec) + "," + f17(frontend.stride_sec) + "," +
       f17(frontend.log_floor);
  s += "|train=" + std::to_string(cfg.epochs_initial) + "," +
       f17(cfg.lr_initial) + "," + f17(cfg.lr_decay) + "," +
       std::to_string(cfg.batch_size) + "," + f17(cfg.clip_norm);
  const augment::AugmentationPolicy& p = cfg.initial_policy;
  s += "|augment=" + p.name() + "," + f17(p.speed_factor) + "," +
       std::to_string(p.pitch_semitones) + "," + f17(p.awgn_snr_db) + "," +
       std::to_string(p.sa_time_width) + "," + std::to_string(p.sa_freq_width) +
       "," + std::to_string(p.sa_time_masks) + "," +
       std::to_string(p.sa_freq_masks);
  s += "|beam=" + std::to_string(cfg.beam.width) + "," +
       std::to_string(cfg.beam.max_len) + "," +
       std::to_string(cfg.beam.max_len_cap) + "," + f17(cfg.beam.lp_offset) +
       "," + f17(cfg.beam.lp_power);
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a(s)));
  return buf;
}

std::vector<EpochRow> read_initial_rows(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open cached rows: " + path);
  std::vector<EpochRow> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    EpochRow row;
    if (std::sscanf(line.c_str(), "%d,%lf,%lf,%lf", &row.epoch, &row.lr,
                    &row.loss_sup, &row.test_cer) != 4)
      throw std::runtime_error("malformed cached row in " + path + ": " + line);
    rows.push_back(row);
  }
  return rows;
}

void write_initial_rows(const std::string& path, const std::vector<EpochRow>& rows) {
  std::string text;
  for (const EpochRow& r : rows)
    text += std::to_string(r.epoch) + "," + f17(r.lr) + "," + f17(r.loss_sup) +
            "," + f17(r.test_cer) + "\n";
  write_text_file(path, text);
}

/// Encodes one manifest split once; TrainItems point into the returned pairs.
struct SplitItems {
  std::vector<std::vector<int>> tokens;
  std::vector<TrainItem> items;

  SplitItems(const std::vector<corpus::ManifestEntry>& entries,
             const Vocabulary& vocab) {
    tokens.reserve(entries.size());
    items.reserve(entries.size());
    for (const corpus::ManifestEntry& e : entries) {
      tokens.push_back(vocab.encode(e.transcript));
      items.push_back({e.id, &tokens.back(), false});
    }
  }
};

}  // namespace

model::Seq2SeqModel train_initial(const PipelineConfig& cfg,
                                  const corpus::CorpusManifest& manifest,
                                  FeatureCache& cache,
                                  const model::ModelConfig& model_config,
                                  std::vector<EpochRow>* rows_out,
                                  BatchObserver* observer) {
  const Vocabulary vocab(manifest.letters);
  std::string ckpt_path;
  std::string rows_path;
  if (!cfg.initial_cache_dir.empty()) {
    std::string stem = cfg.initial_cache_dir + "/initial-" +
                       initial_phase_hash(cfg, manifest, model_config,
                                          cache.frontend()) +
                       "-s" + std::to_string(cfg.seed);
    ckpt_path = stem + ".ckpt";
    rows_path = stem + ".rows";
    if (fs::exists(ckpt_path) && fs::exists(rows_path)) {
      if (rows_out) *rows_out = read_initial_rows(rows_path);
      return model::load_checkpoint(ckpt_path);
    }
  }

  auto initial_entries = manifest.split("initial");
  if (initial_entries.empty())
    throw std::runtime_error("train_initial: initial split is empty");
  auto test_entries = manifest.split("test");
  SplitItems split(initial_entries, vocab);

  model::Seq2SeqModel m(model_config, vocab, cfg.seed);
  AdamState adam(m.params());
  std::vector<EpochRow> rows;
  for (int e = 0; e < cfg.epochs_initial; ++e) {
    EpochSettings settings;
    settings.lr = autodiff::lr_at_epoch(cfg.lr_initial, cfg.lr_decay, e);
    settings.clip_norm = cfg.clip_norm;
    settings.batch_size = cfg.batch_size;
    settings.sup_policy = &cfg.initial_policy;
    RngStream rng = keyed_stream(cfg.seed, "initial.epoch",
                                 static_cast<std::uint64_t>(e));
    EpochStats stats =
        train_epoch(m, adam, split.items, cache, settings, rng, observer);
    EpochRow row;
    row.epoch = e;
    row.lr = settings.lr;
    row.loss_sup = stats.loss_sup();
    row.test_cer = evaluate_cer(m, cache, test_entries, cfg.beam, cfg.workers);
    rows.push_back(row);
  }

  if (!ckpt_path.empty()) {
    fs::create_directories(cfg.initial_cache_dir);
    // Write-then-rename so concurrent grid cells never see partial files.
    std::string tmp = ckpt_path + ".tmp." + std::to_string(::getpid());
    model::save_checkpoint(tmp, m);
    fs::rename(tmp, ckpt_path);
    tmp = rows_path + ".tmp." + std::to_string(::getpid());
    write_initial_rows(tmp, rows);
    fs::rename(tmp, rows_path);
  }
  if (rows_out) *rows_out = std::move(rows);
  return m;
}

void score_pool(const model::Seq2SeqModel& m, PoolState& pool,
                FeatureCache& cache, UncertaintyMetric metric,
                std::uint64_t seed, const decode::BeamConfig& beam,
                int workers) {
  // The lazy cache is not thread-safe; fill it before fanning out.
  for (PoolItem& item : pool.items) cache.features(item.id);
  parallel_for(pool.items.size(), workers, [&](std::size_t i) {
    PoolItem& item = pool.items[i];
    switch (metric) {
      case UncertaintyMetric::Pprob:
        item.score = decode::pprob(m, cache.features(item.id), beam);
        break;
      case UncertaintyMetric::OracleLoss:
        item.score =
            -model::supervised_loss(m, {{cache.features(item.id), item.transcript}});
        break;
      case UncertaintyMetric::OracleCer: {
        std::vector<int> hyp =
            decode::decode_pseudo_label(m, cache.features(item.id), beam);
        int edits = metrics::edit_distance(m.vocab().decode(hyp),
                                           m.vocab().decode(item.transcript));
        item.score = item.transcript.empty()
                         ? (edits == 0 ? 0.0 : -100.0)
                         : -100.0 * edits / static_cast<double>(item.transcript.size());
        break;
      }
      case UncertaintyMetric::Random:
        item.score = keyed_stream(seed, "score", item.id, 0).uniform();
        break;
    }
  });
}

namespace {

std::vector<std::size_t> ascending_order(const PoolState& pool) {
  std::vector<std::size_t> order(pool.items.size());
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const PoolItem& x = pool.items[a];
    const PoolItem& y = pool.items[b];
    if (x.score != y.score) return x.score < y.score;
    return x.id < y.id;
  });
  return order;
}

}  // namespace

void select_hls(PoolState& pool, double budget_fraction) {
  if (!(budget_fraction >= 0.0 && budget_fraction <= 1.0))
    throw std::invalid_argument("select_hls: budget_fraction must be in [0, 1]");
  double budget = budget_fraction * pool.total_duration();
  double used = 0.0;
  for (std::size_t idx : ascending_order(pool)) {
    PoolItem& item = pool.items[idx];
    if (budget_fraction >= 1.0 || used + item.duration <= budget) {
      item.status = PoolStatus::Hls;
      used += item.duration;
    } else {
      item.status = PoolStatus::Pls;
    }
  }
}

std::vector<std::vector<std::string>> partition_subsets(const PoolState& pool,
                                                        int k) {
  if (k < 1) throw std::invalid_argument("partition_subsets: k must be >= 1");
  if (static_cast<std::size_t>(k) > pool.items.size())
    throw std::invalid_argument("partition_subsets: k exceeds pool size");
  std::vector<std::size_t> order = ascending_order(pool);
  std::size_t base = order.size() / static_cast<std::size_t>(k);
  std::size_t rem = order.size() % static_cast<std::size_t>(k);
  std::vector<std::vector<std::string>> subsets(static_cast<std::size_t>(k));
  std::size_t pos = 0;
  for (std::size_t s = 0; s < subsets.size(); ++s) {
    std::size_t take = base + (s < rem ? 1 : 0);
    for (std::size_t i = 0; i < take; ++i)
      subsets[s].push_back(pool.items[order[pos++]].id);
  }
  return subsets;
}

void preliminary_filter(PoolState& pool, double tau) {
  for (PoolItem& item : pool.items)
    if (item.status == PoolStatus::Pls && item.score < tau)
      item.status = PoolStatus::Filtered;
  if (pool.count(PoolStatus::Pls) == 0 && pool.count(PoolStatus::Filtered) > 0)
    std::cerr << "warning: preliminary filter removed every pseudo-label "
                 "candidate; continuing with labeled data only\n";
}

void refresh_pseudo_labels(const model::Seq2SeqModel& m, PoolState& pool,
                           FeatureCache& cache, int epoch,
                           const decode::BeamConfig& beam, int workers) {
  std::vector<std::size_t> targets;
  for (std::size_t i = 0; i < pool.items.size(); ++i)
    if (pool.items[i].status == PoolStatus::Pls) {
      cache.features(pool.items[i].id);
      targets.push_back(i);
    }
  parallel_for(targets.size(), workers, [&](std::size_t t) {
    PoolItem& item = pool.items[targets[t]];
    item.pseudo = decode::decode_pseudo_label(m, cache.features(item.id), beam);
    item.refreshed_at_epoch = epoch;
  });
}

double pool_pcer(const PoolState& pool, const Vocabulary& vocab) {
  std::vector<std::string> refs;
  std::vector<std::string> hyps;
  for (const PoolItem& item : pool.items) {
    if (item.status != PoolStatus::Pls) continue;
    refs.push_back(vocab.decode(item.transcript));
    hyps.push_back(vocab.decode(item.pseudo));
  }
  if (refs.empty()) return kNan;
  return metrics::cer(hyps, refs);
}

double evaluate_cer(const model::Seq2SeqModel& m, FeatureCache& cache,
                    const std::vector<corpus::ManifestEntry>& entries,
                    const decode::BeamConfig& beam, int workers) {
  if (entries.empty())
    throw std::invalid_argument("evaluate_cer: no evaluation entries");
  std::vector<std::string> refs;
  std::vector<std::string> hyps(entries.size());
  for (const corpus::ManifestEntry& e : entries) {
    refs.push_back(e.transcript);
    cache.features(e.id);
  }
  parallel_for(entries.size(), workers, [&](std::size_t i) {
    hyps[i] = m.vocab().decode(
        decode::decode_pseudo_label(m, cache.features(entries[i].id), beam));
  });
  return metrics::cer(hyps, refs);
}

std::vector<EpochRow> train_phase(model::Seq2SeqModel& m, PoolState& pool,
                                  const corpus::CorpusManifest& manifest,
                                  FeatureCache& cache,
                                  const PipelineConfig& cfg, double lambda,
                                  BatchObserver* observer) {
  const Vocabulary& vocab = m.vocab();
  SplitItems initial(manifest.split("initial"), vocab);
  auto test_entries = manifest.split("test");
  bool has_pls = pool.count(PoolStatus::Pls) > 0;

  AdamState adam(m.params());
  std::vector<EpochRow> rows;
  for (int e = 0; e < cfg.epochs_pipeline; ++e) {
    int epoch = cfg.epochs_initial + e;
    if (has_pls && e % cfg.refresh_period == 0)
      refresh_pseudo_labels(m, pool, cache, epoch, cfg.beam, cfg.workers);

    std::vector<TrainItem> items = initial.items;
    for (PoolItem& item : pool.items) {
      if (item.status == PoolStatus::Hls)
        items.push_back({item.id, &item.transcript, false});
      else if (item.status == PoolStatus::Pls)
        items.push_back({item.id, &item.pseudo, true});
    }

    EpochSettings settings;
    settings.lr = autodiff::lr_at_epoch(cfg.lr_pipeline, cfg.lr_decay, e);
    settings.clip_norm = cfg.clip_norm;
    settings.batch_size = cfg.batch_size;
    settings.lambda = lambda;
    settings.cr_policy = lambda != 0.0 ? &cfg.cr_policy : nullptr;
    RngStream rng = keyed_stream(cfg.seed, "pipeline.epoch",
                                 static_cast<std::uint64_t>(e));
    EpochStats stats =
        train_epoch(m, adam, std::move(items), cache, settings, rng, observer);

    EpochRow row;
    row.epoch = epoch;
    row.lr = settings.lr;
    row.loss_sup = stats.loss_sup();
    row.loss_cr = stats.loss_cr();
    row.test_cer = evaluate_cer(m, cache, test_entries, cfg.beam, cfg.workers);
    if (has_pls) row.p_cer = pool_pcer(pool, vocab);
    rows.push_back(row);
  }
  return rows;
}

TrainingReport run_pipeline(const PipelineConfig& cfg,
                            const corpus::CorpusManifest& manifest,
                            FeatureCache& cache,
                            const model::ModelConfig& model_config,
                            const std::string& output_dir,
                            BatchObserver* observer) {
  cfg.validate();
  const Vocabulary vocab(manifest.letters);
  double budget =
      cfg.variant == Variant::FullBudget ? 1.0 : cfg.budget_fraction;

  TrainingReport report;
  report.variant = variant_name(cfg.variant, cfg.cr_policy.kind);
  report.budget_fraction = budget;
  report.seed = cfg.seed;

  model::Seq2SeqModel m =
      train_initial(cfg, manifest, cache, model_config, &report.rows, observer);

  if (cfg.variant != Variant::InitialOnly) {
    PoolState pool = make_pool(manifest, vocab, "unlabeled");
    score_pool(m, pool, cache, cfg.metric, cfg.seed, cfg.beam, cfg.workers);
    select_hls(pool, budget);

    bool wants_pls = cfg.variant == Variant::Pls ||
                     cfg.variant == Variant::PlsFiltered ||
                     cfg.variant == Variant::Cr ||
                     cfg.variant == Variant::CrFiltered;
    if (!wants_pls || cfg.force_empty_pls) {
      for (PoolItem& item : pool.items)
        if (item.status == PoolStatus::Pls) item.status = PoolStatus::Unlabeled;
    } else if (cfg.variant == Variant::PlsFiltered ||
               cfg.variant == Variant::CrFiltered) {
      preliminary_filter(pool, cfg.tau);
    }

    double lambda = (cfg.variant == Variant::Cr ||
                     cfg.variant == Variant::CrFiltered)
                        ? cfg.lambda
                        : 0.0;
    std::vector<EpochRow> rows =
        train_phase(m, pool, manifest, cache, cfg, lambda, observer);
    report.rows.insert(report.rows.end(), rows.begin(), rows.end());
  }

  report.final_cer =
      report.rows.empty()
          ? evaluate_cer(m, cache, manifest.split("test"), cfg.beam, cfg.workers)
          : report.rows.back().test_cer;

  if (!output_dir.empty()) {
    fs::create_directories(output_dir);
    write_text_file(output_dir + "/report.csv", report_csv(report));
    write_text_file(output_dir + "/summary.csv", summary_csv(report));
    model::save_checkpoint(output_dir + "/final.ckpt", m);
  }
  return report;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

std::string report_csv(const TrainingReport& report) {
  std::string out = "variant,budget_fraction,seed,epoch,lr,loss_sup,loss_cr,test_cer,p_cer\n";
  for (const EpochRow& r : report.rows) {
    out += report.variant + "," + format_double(report.budget_fraction) + "," +
           std::to_string(report.seed) + "," + std::to_string(r.epoch) + "," +
           format_double(r.lr) + "," + format_double(r.loss_sup) + "," +
           format_double(r.loss_cr) + "," + format_double(r.test_cer) + "," +
           format_double(r.p_cer) + "\n";
  }
  return out;
}

std::string summary_csv(const TrainingReport& report) {
  return "variant,budget_fraction,seed,final_cer\n" + report.variant + "," +
         format_double(report.budget_fraction) + "," +
         std::to_string(report.seed) + "," + format_double(report.final_cer) +
         "\n";
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace alcr::pipeline
