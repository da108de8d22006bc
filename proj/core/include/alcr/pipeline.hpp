#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "alcr/augment.hpp"
#include "alcr/corpus.hpp"
#include "alcr/decoder.hpp"
#include "alcr/dsp.hpp"
#include "alcr/model.hpp"
#include "alcr/optim.hpp"

namespace alcr::pipeline {

using autodiff::Tensor;

enum class Variant {
  InitialOnly,  // stop after the initial supervised phase
  Hls,          // budgeted human labels only
  Pls,          // + pseudo-labels in the supervised term (lambda = 0)
  PlsFiltered,  // + tau filter on the pseudo-label pool
  Cr,           // + consistency regularization (lambda > 0)
  CrFiltered,   // consistency regularization + tau filter
  FullBudget,   // every pool utterance human-labeled
};

enum class UncertaintyMetric { Pprob, OracleLoss, OracleCer, Random };

UncertaintyMetric parse_metric(const std::string& name);
std::string metric_name(UncertaintyMetric m);

/// Maps CLI variant names: initial-only, hls, pls, pls-tau, full-budget, and
/// cr-{s,p,a,sa} with optional -tau suffix selecting the augmentation policy.
struct VariantSpec {
  Variant variant = Variant::Hls;
  augment::AugmentationPolicy::Kind policy =
      augment::AugmentationPolicy::Kind::SpecAugment;
};
VariantSpec parse_variant(const std::string& name);
std::string variant_name(Variant variant, augment::AugmentationPolicy::Kind policy);

struct PipelineConfig {
  Variant variant = Variant::Cr;
  /// Consistency-branch augmentation (cr variants).
  augment::AugmentationPolicy cr_policy{
      .kind = augment::AugmentationPolicy::Kind::SpecAugment};
  double budget_fraction = 0.1;  // of the unlabeled split's total duration
  double lambda = 1.0;           // CR weight in the total loss
  int refresh_period = 1;        // Delta: epochs between pseudo-label refreshes
  double tau = -0.5;             // filtered variants: drop PLS with score < tau
  UncertaintyMetric metric = UncertaintyMetric::Pprob;
  int epochs_initial = 20;
  int epochs_pipeline = 15;
  int batch_size = 32;
  double lr_initial = 0.003;
  double lr_pipeline = 0.001;
  double lr_decay = 1.1;  // per-epoch divisor, schedule restarts each phase
  double clip_norm = 400.0;
  std::uint64_t seed = 0;
  decode::BeamConfig beam;
  /// Supervised data augmentation during the initial phase only.
  augment::AugmentationPolicy initial_policy{
      .kind = augment::AugmentationPolicy::Kind::SpecAugment};
  /// Drop every PLS candidate regardless of variant (equivalence harness).
  bool force_empty_pls = false;
  /// When set, initial-phase checkpoints and epoch rows are reused across
  /// runs that share the same configuration hash and seed.
  std::string initial_cache_dir;
  /// Decode-side parallelism (scoring, refresh, evaluation); training is
  /// single-writer regardless. Results are identical for any worker count.
  int workers = 1;

  void validate() const;
};

/// Spectrogram features (and source waveforms) for one corpus, computed on
/// first use and kept for the lifetime of the cache.
class FeatureCache {
 public:
  FeatureCache(const corpus::CorpusManifest& manifest, std::string corpus_dir,
               dsp::FrontendConfig frontend = {});

  const corpus::CorpusManifest& manifest() const { return *manifest_; }
  const dsp::FrontendConfig& frontend() const { return frontend_; }
  const dsp::Waveform& waveform(const std::string& id);
  const Tensor& features(const std::string& id);

 private:
  const corpus::CorpusManifest* manifest_;
  std::string dir_;
  dsp::FrontendConfig frontend_;
  std::map<std::string, dsp::Waveform> waveforms_;
  std::map<std::string, Tensor> features_;
};

enum class PoolStatus { Unlabeled, Hls, Pls, Filtered };

struct PoolItem {
  std::string id;
  double duration = 0.0;
  double score = 0.0;
  PoolStatus status = PoolStatus::Unlabeled;
  std::vector<int> transcript;  // oracle tokens; training uses them iff HLS
  std::vector<int> pseudo;      // current pseudo-label (PLS)
  int refreshed_at_epoch = -1;
};

struct PoolState {
  std::vector<PoolItem> items;

  PoolItem& by_id(const std::string& id);
  std::size_t count(PoolStatus status) const;
  double total_duration() const;
  double status_duration(PoolStatus status) const;
};

/// Builds an all-Unlabeled pool over one manifest split with oracle
/// transcripts attached (consumed only once an item is promoted to HLS).
PoolState make_pool(const corpus::CorpusManifest& manifest,
                    const Vocabulary& vocab,
                    const std::string& split = "unlabeled");

/// One row of the per-epoch training report; NaN fields serialize as empty.
struct EpochRow {
  int epoch = 0;
  double lr = 0.0;
  double loss_sup = 0.0;
  double loss_cr = std::numeric_limits<double>::quiet_NaN();
  double test_cer = 0.0;
  double p_cer = std::numeric_limits<double>::quiet_NaN();
};

struct TrainingReport {
  std::string variant;
  double budget_fraction = 0.0;
  std::uint64_t seed = 0;
  std::vector<EpochRow> rows;
  double final_cer = 0.0;
};

/// Hook observing every minibatch before the optimizer step; the model still
/// holds the parameters the breakdown was computed with.
struct BatchObserver {
  virtual ~BatchObserver() = default;
  virtual void on_batch(const model::Seq2SeqModel& m,
                        const std::vector<model::Example>& sup,
                        const std::vector<model::Example>& cr, double lambda,
                        const model::LossBreakdown& breakdown) = 0;
};

/// One supervised training unit: utterance id plus the label in force.
struct TrainItem {
  std::string id;
  const std::vector<int>* tokens = nullptr;
  bool is_pls = false;
};

struct EpochSettings {
  double lr = 0.001;
  double clip_norm = 400.0;
  int batch_size = 32;
  double lambda = 0.0;  // 0 skips the consistency branch entirely
  const augment::AugmentationPolicy* cr_policy = nullptr;
  const augment::AugmentationPolicy* sup_policy = nullptr;  // initial phase
};

struct EpochStats {
  double sup_nll = 0.0;
  double cr_nll = 0.0;
  std::int64_t sup_tokens = 0;
  std::int64_t cr_tokens = 0;

  double loss_sup() const;
  double loss_cr() const;  // NaN when no consistency batches ran
};

/// Applies the policy to one cached utterance: waveform-domain policies
/// re-run the frontend, SpecAugment masks the cached feature matrix.
Tensor augmented_features(FeatureCache& cache, const std::string& id,
                          const augment::AugmentationPolicy& policy,
                          RngStream& rng);

/// One shuffled minibatch pass: Eq. 4 loss per batch, gradient clipping,
/// ADAM step. Throws on non-finite loss.
EpochStats train_epoch(model::Seq2SeqModel& m, autodiff::AdamState& adam,
                       std::vector<TrainItem> items, FeatureCache& cache,
                       const EpochSettings& settings, RngStream& rng,
                       BatchObserver* observer = nullptr);

/// Supervised phase over the initial split with SpecAugment; reuses a cached
/// checkpoint + rows when cfg.initial_cache_dir holds a matching hash/seed.
model::Seq2SeqModel train_initial(const PipelineConfig& cfg,
                                  const corpus::CorpusManifest& manifest,
                                  FeatureCache& cache,
                                  const model::ModelConfig& model_config,
                                  std::vector<EpochRow>* rows_out = nullptr,
                                  BatchObserver* observer = nullptr);

/// Writes the chosen uncertainty score into every pool item (lower = more
/// uncertain for every metric; oracle metrics are negated accordingly).
void score_pool(const model::Seq2SeqModel& m, PoolState& pool,
                FeatureCache& cache, UncertaintyMetric metric,
                std::uint64_t seed, const decode::BeamConfig& beam,
                int workers = 1);

/// Greedy budgeted selection in ascending (score, id) order: selected items
/// become HLS, the remainder become PLS candidates.
void select_hls(PoolState& pool, double budget_fraction);

/// Ascending-score split into k near-equal subsets of ids; subset 0 holds the
/// most uncertain items, remainders go to the earliest subsets.
std::vector<std::vector<std::string>> partition_subsets(const PoolState& pool,
                                                        int k = 5);

/// Marks PLS candidates with score < tau as Filtered; warns to stderr when
/// nothing survives (the run degrades to HLS-only).
void preliminary_filter(PoolState& pool, double tau);

/// Re-decodes every PLS item against the current model (Eq. 1) and stamps
/// refreshed_at_epoch.
void refresh_pseudo_labels(const model::Seq2SeqModel& m, PoolState& pool,
                           FeatureCache& cache, int epoch,
                           const decode::BeamConfig& beam, int workers = 1);

/// CER of current pseudo-labels against oracle transcripts over PLS items.
double pool_pcer(const PoolState& pool, const Vocabulary& vocab);

/// Beam-decodes each entry and scores against the reference transcripts.
double evaluate_cer(const model::Seq2SeqModel& m, FeatureCache& cache,
                    const std::vector<corpus::ManifestEntry>& entries,
                    const decode::BeamConfig& beam, int workers = 1);

/// The post-selection training loop shared by run_pipeline and the subset
/// study: refresh on the Delta schedule, train, evaluate; epoch numbering
/// continues from the initial phase.
std::vector<EpochRow> train_phase(model::Seq2SeqModel& m, PoolState& pool,
                                  const corpus::CorpusManifest& manifest,
                                  FeatureCache& cache,
                                  const PipelineConfig& cfg, double lambda,
                                  BatchObserver* observer = nullptr);

/// Full variant run: initial phase, scoring, selection, optional filtering,
/// pipeline phase. Writes report.csv, summary.csv and final.ckpt under
/// output_dir when non-empty.
TrainingReport run_pipeline(const PipelineConfig& cfg,
                            const corpus::CorpusManifest& manifest,
                            FeatureCache& cache,
                            const model::ModelConfig& model_config,
                            const std::string& output_dir = "",
                            BatchObserver* observer = nullptr);

/// "%.10g" rendering used by every CSV artifact; NaN renders empty.
std::string format_double(double v);

std::string report_csv(const TrainingReport& report);
std::string summary_csv(const TrainingReport& report);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace alcr::pipeline
