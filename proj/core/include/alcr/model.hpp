#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "alcr/tape.hpp"
#include "alcr/tensor.hpp"
#include "alcr/vocab.hpp"

namespace alcr::model {

using autodiff::Gradients;
using autodiff::ParameterStore;
using autodiff::Tape;
using autodiff::TapeParams;
using autodiff::Tensor;
using autodiff::Var;

struct ModelConfig {
  int encoder_layers = 1;
  bool bidirectional = true;
  int decoder_layers = 1;
  int hidden_size = 32;
  int embedding_size = 16;
  int input_bins = 401;
  std::string cell = "gru";  // "gru" | "lstm"
  bool location_attention = true;
  int attention_dim = 32;
  int attention_kernel = 11;
  int attention_channels = 4;

  void validate() const;
};

/// Recurrent + attention state carried across decoder steps.
struct DecoderState {
  std::vector<Tensor> layers;  // per layer: [H] (gru) or [h|c] = [2H] (lstm)
  Tensor attn_weights;         // [T'] alignment from the previous step
  Tensor attn_keys;            // [T', A] cached key projections
};

/// Attention encoder–decoder over log-spectrogram frames, emitting per-step
/// log-posteriors across letters + EOS (vocabulary ids 0..num_letters).
///
/// Two forward implementations share the parameter store: a plain Eigen path
/// for decoding/evaluation and a taped path for training gradients.
class Seq2SeqModel {
 public:
  Seq2SeqModel(ModelConfig config, Vocabulary vocab, std::uint64_t init_seed);

  const ModelConfig& config() const { return config_; }
  const Vocabulary& vocab() const { return vocab_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }
  /// Posterior width: letters + EOS.
  int num_outputs() const { return vocab_.num_letters() + 1; }

  // --- inference path (no tape) ---
  /// [T', E] encoder states, E = hidden (x2 if bidirectional).
  Tensor encode(const Tensor& features) const;
  DecoderState start_state(const Tensor& enc_states) const;
  /// Consumes prev_token, advances the state, returns the [num_outputs]
  /// log-posterior row for the current step.
  Tensor decoder_step(const Tensor& enc_states, DecoderState& state,
                      int prev_token) const;
  /// [L+1, num_outputs] log-posteriors: step l consumes target[l-1] (SOS at
  /// l=0) and the final step predicts EOS.
  Tensor forward_teacher_forced(const Tensor& features,
                                const std::vector<int>& target) const;

  // --- tape path (training) ---
  /// Sum over the L+1 teacher-forced steps of -log P(token); scalar Var.
  Var sequence_nll(Tape& tape, const TapeParams& tp, const Tensor& features,
                   const std::vector<int>& target) const;

 private:
  ModelConfig config_;
  Vocabulary vocab_;
  ParameterStore params_;

  int state_width() const;
  int encoder_output_dim() const;
  /// Input conditioning shared by the inference and tape paths.
  Tensor conditioned(const Tensor& features) const;
};

/// One utterance of a training batch: features plus content-token labels
/// (letter ids, EOS excluded — the losses append it).
struct Example {
  Tensor features;
  std::vector<int> tokens;
};

/// Eq. 2: micro-averaged NLL — total teacher-forced NLL over the batch
/// divided by the total token count (EOS included in each L_n).
double supervised_loss(const Seq2SeqModel& m, const std::vector<Example>& batch);

/// Eq. 3 evaluated on already-augmented features with pseudo-label targets;
/// same normalization as supervised_loss.
double consistency_loss(const Seq2SeqModel& m, const std::vector<Example>& batch);

/// Eq. 4.
double total_loss(double loss_sup, double loss_cr, double lambda);

struct LossBreakdown {
  double loss_sup = 0.0;
  double loss_cr = 0.0;
  double total = 0.0;
  std::int64_t sup_tokens = 0;
  std::int64_t cr_tokens = 0;
};

/// Builds the Eq. 4 graph for one minibatch: L_SUP over `sup` plus
/// lambda * L_CR over `cr` (pre-augmented features). `cr` may be empty.
Var build_total_loss(Tape& tape, const TapeParams& tp, const Seq2SeqModel& m,
                     const std::vector<Example>& sup,
                     const std::vector<Example>& cr, double lambda,
                     LossBreakdown* breakdown = nullptr);

}  // namespace alcr::model
