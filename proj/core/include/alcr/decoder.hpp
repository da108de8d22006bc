#pragma once

#include <utility>
#include <vector>

#include "alcr/model.hpp"
#include "alcr/tensor.hpp"

namespace alcr::decode {

using autodiff::Tensor;

struct BeamConfig {
  int width = 5;
  /// 0 = derive from the input: min(2 * frames, max_len_cap).
  int max_len = 0;
  int max_len_cap = 40;
  double lp_offset = 5.0;
  double lp_power = 1.2;
};

/// lp(L) = (offset + L)^power / (offset + 1)^power, so lp(1) = 1.
double length_penalty(int length, const BeamConfig& cfg = {});

struct Hypothesis {
  std::vector<int> tokens;  // content ids; EOS not included
  double logp = 0.0;        // cumulative log-probability including the EOS step
  double score = 0.0;       // logp / lp(|tokens|)
};

/// One decoding step at a time, over an opaque integer state handle.
/// Posterior rows span the content tokens plus EOS as the final column.
/// prev_token = -1 denotes start-of-sequence.
class StepScorer {
 public:
  virtual ~StepScorer() = default;

  virtual int num_tokens() const = 0;
  int eos_id() const { return num_tokens() - 1; }
  virtual int start() = 0;
  /// Consumes prev_token from `state`; returns the successor state handle and
  /// the [num_tokens] log-posterior row for the next position.
  virtual std::pair<int, Tensor> step(int state, int prev_token) = 0;
};

/// Fixed per-position log-posteriors, independent of emitted tokens. Rows are
/// renormalized on construction; handy as an exhaustively enumerable oracle.
class TableScorer : public StepScorer {
 public:
  explicit TableScorer(Tensor table);  // [positions, num_tokens]

  int num_tokens() const override { return table_.cols(); }
  int start() override { return 0; }
  std::pair<int, Tensor> step(int state, int prev_token) override;

 private:
  Tensor table_;
};

/// Drives the seq2seq model's inference path; states are decoder snapshots.
class ModelScorer : public StepScorer {
 public:
  ModelScorer(const model::Seq2SeqModel& m, const Tensor& features);

  int num_tokens() const override { return model_.num_outputs(); }
  int num_frames() const { return enc_.rows(); }
  int start() override;
  std::pair<int, Tensor> step(int state, int prev_token) override;

 private:
  const model::Seq2SeqModel& model_;
  Tensor enc_;
  std::vector<model::DecoderState> states_;
};

/// Standard beam search: finished hypotheses (EOS emitted) leave the beam;
/// live ones surviving to max_len are force-terminated by charging their EOS
/// log-probability. Returns all finished hypotheses sorted by score
/// descending, ties broken by shorter length then lexicographic tokens.
/// cfg.max_len must be explicit (>= 1) at this level.
std::vector<Hypothesis> beam_search(StepScorer& scorer, const BeamConfig& cfg);

std::vector<Hypothesis> beam_search(const model::Seq2SeqModel& m,
                                    const Tensor& features, BeamConfig cfg = {});

/// Eq. pathprob: best length-normalized log path probability; always <= 0.
double pprob(const model::Seq2SeqModel& m, const Tensor& features,
             const BeamConfig& cfg = {});

/// Eq. 1: tokens of the best hypothesis — the pseudo-label.
std::vector<int> decode_pseudo_label(const model::Seq2SeqModel& m,
                                     const Tensor& features,
                                     const BeamConfig& cfg = {});

}  // namespace alcr::decode
