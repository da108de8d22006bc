#include "alcr/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "alcr/rng.hpp"

namespace alcr::model {

namespace {

int gates_of(const std::string& cell) { return cell == "lstm" ? 4 : 3; }

std::string enc_name(int layer, bool forward, const char* leaf) {
  return "enc.l" + std::to_string(layer) + (forward ? ".fwd." : ".bwd.") + leaf;
}

std::string dec_name(int layer, const char* leaf) {
  return "dec.l" + std::to_string(layer) + "." + leaf;
}

void log_softmax_row(double* row, int n) {
  double mx = *std::max_element(row, row + n);
  double z = 0.0;
  for (int i = 0; i < n; ++i) z += std::exp(row[i] - mx);
  double lz = mx + std::log(z);
  for (int i = 0; i < n; ++i) row[i] -= lz;
}

}  // namespace

void ModelConfig::validate() const {
  if (encoder_layers < 1 || decoder_layers < 1 || hidden_size < 1 ||
      embedding_size < 1 || input_bins < 1 || attention_dim < 1 ||
      attention_kernel < 1 || attention_channels < 1)
    throw std::invalid_argument("ModelConfig: all sizes must be >= 1");
  if (attention_kernel % 2 == 0)
    throw std::invalid_argument(
        "ModelConfig: attention_kernel must be odd for symmetric padding");
  if (cell != "gru" && cell != "lstm")
    throw std::invalid_argument("ModelConfig: cell must be 'gru' or 'lstm'");
}

int Seq2SeqModel::state_width() const {
  return config_.cell == "lstm" ? 2 * config_.hidden_size : config_.hidden_size;
}

int Seq2SeqModel::encoder_output_dim() const {
  return config_.bidirectional ? 2 * config_.hidden_size : config_.hidden_size;
}

Seq2SeqModel::Seq2SeqModel(ModelConfig config, Vocabulary vocab,
                           std::uint64_t init_seed)
    : config_(std::move(config)), vocab_(std::move(vocab)) {
  config_.validate();
  int h = config_.hidden_size;
  int gh = gates_of(config_.cell) * h;
  int enc_out = encoder_output_dim();
  int attn = config_.attention_dim;

  auto init = [&](const std::string& name, std::vector<int> shape, int fan_in) {
    Tensor t(std::move(shape));
    if (fan_in > 0) {
      RngStream rng = keyed_stream(init_seed, "init", name, 0);
      double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
    }
    params_.add(name, std::move(t));
  };

  int in_dim = config_.input_bins;
  for (int l = 0; l < config_.encoder_layers; ++l) {
    for (int dir = 0; dir < (config_.bidirectional ? 2 : 1); ++dir) {
      bool fwd = dir == 0;
      init(enc_name(l, fwd, "w_in"), {in_dim, gh}, in_dim);
      init(enc_name(l, fwd, "b_in"), {gh}, 0);
      init(enc_name(l, fwd, "w_rec"), {h, gh}, h);
      init(enc_name(l, fwd, "b_rec"), {gh}, 0);
    }
    in_dim = enc_out;
  }

  init("dec.embed", {vocab_.total_symbols(), config_.embedding_size},
       config_.embedding_size);
  int dec_in = config_.embedding_size + enc_out;
  for (int l = 0; l < config_.decoder_layers; ++l) {
    init(dec_name(l, "w_in"), {dec_in, gh}, dec_in);
    init(dec_name(l, "b_in"), {gh}, 0);
    init(dec_name(l, "w_rec"), {h, gh}, h);
    init(dec_name(l, "b_rec"), {gh}, 0);
    dec_in = h;
  }

  init("attn.w_query", {h, attn}, h);
  init("attn.w_keys", {enc_out, attn}, enc_out);
  init("attn.bias", {attn}, 0);
  init("attn.v", {attn}, attn);
  if (config_.location_attention) {
    init("attn.loc_conv", {config_.attention_channels, config_.attention_kernel},
         config_.attention_kernel);
    init("attn.w_loc", {config_.attention_channels, attn},
         config_.attention_channels);
  }
  init("dec.w_out", {h + enc_out, num_outputs()}, h + enc_out);
  init("dec.b_out", {num_outputs()}, 0);
}

// ---------------------------------------------------------------------------
// Inference path: plain Eigen/loop math over the parameter store, no tape.
// ---------------------------------------------------------------------------

namespace {

/// One recurrent cell update in place. state is [H] for gru, [h|c] for lstm;
/// xg is the precomputed input-side gate row.
void cell_infer(const std::string& cell, const double* xg, Tensor& state,
                const Tensor& w_rec, const Tensor& b_rec, int h) {
  // hg = hidden · W_rec + b_rec
  Tensor hidden({1, h}, std::vector<double>(state.raw(), state.raw() + h));
  int gh = w_rec.cols();
  Tensor hg({1, gh});
  autodiff::matmul_into(hidden, w_rec, false, false, false, hg);
  for (int i = 0; i < gh; ++i) hg[i] += b_rec[i];

  if (cell == "lstm") {
    for (int k = 0; k < h; ++k) {
      double gi = 1.0 / (1.0 + std::exp(-(xg[k] + hg[k])));
      double gf = 1.0 / (1.0 + std::exp(-(xg[h + k] + hg[h + k])));
      double gg = std::tanh(xg[2 * h + k] + hg[2 * h + k]);
      double go = 1.0 / (1.0 + std::exp(-(xg[3 * h + k] + hg[3 * h + k])));
      double c_new = gf * state[h + k] + gi * gg;
      state[k] = go * std::tanh(c_new);
      state[h + k] = c_new;
    }
  } else {
    for (int i = 0; i < h; ++i) {
      double r = 1.0 / (1.0 + std::exp(-(xg[i] + hg[i])));
      double z = 1.0 / (1.0 + std::exp(-(xg[h + i] + hg[h + i])));
      double n = std::tanh(xg[2 * h + i] + r * hg[2 * h + i]);
      state[i] = (1.0 - z) * n + z * state[i];
    }
  }
}

}  // namespace

Tensor Seq2SeqModel::conditioned(const Tensor& features) const {
  // Per-utterance standardization of the log-magnitude input. Raw cells sit
  // wherever the noise floor and tone amplitudes put them (and the log floor
  // is a -23 outlier); feeding them unscaled pins the recurrent gates.
  double mean = 0.0;
  for (std::int64_t i = 0; i < features.size(); ++i) mean += features[i];
  mean /= static_cast<double>(features.size());
  double var = 0.0;
  for (std::int64_t i = 0; i < features.size(); ++i) {
    double d = features[i] - mean;
    var += d * d;
  }
  double sd = std::sqrt(var / static_cast<double>(features.size()));
  double scale = 1.0 / std::max(sd, 1e-3);
  Tensor out = features;
  for (std::int64_t i = 0; i < out.size(); ++i)
    out[i] = (out[i] - mean) * scale;
  return out;
}

Tensor Seq2SeqModel::encode(const Tensor& features) const {
  if (features.rank() != 2 || features.cols() != config_.input_bins)
    throw std::invalid_argument("encode: features must be [T, input_bins]");
  int t_len = features.rows();
  int h = config_.hidden_size;
  int enc_out = encoder_output_dim();

  Tensor input = conditioned(features);
  for (int l = 0; l < config_.encoder_layers; ++l) {
    Tensor output({t_len, enc_out});
    for (int dir = 0; dir < (config_.bidirectional ? 2 : 1); ++dir) {
      bool fwd = dir == 0;
      const Tensor& w_in = params_.at(enc_name(l, fwd, "w_in"));
      const Tensor& b_in = params_.at(enc_name(l, fwd, "b_in"));
      const Tensor& w_rec = params_.at(enc_name(l, fwd, "w_rec"));
      const Tensor& b_rec = params_.at(enc_name(l, fwd, "b_rec"));
      int gh = w_in.cols();

      Tensor xg({t_len, gh});
      autodiff::matmul_into(input, w_in, false, false, false, xg);
      for (int t = 0; t < t_len; ++t)
        for (int i = 0; i < gh; ++i) xg.at(t, i) += b_in[i];

      Tensor state({state_width()});
      for (int step = 0; step < t_len; ++step) {
        int t = fwd ? step : t_len - 1 - step;
        cell_infer(config_.cell, xg.raw() + static_cast<std::size_t>(t) * gh, state,
                   w_rec, b_rec, h);
        double* dst = output.raw() + static_cast<std::size_t>(t) * enc_out + dir * h;
        std::copy(state.raw(), state.raw() + h, dst);
      }
    }
    input = std::move(output);
  }
  input.check_finite("encode");
  return input;
}

DecoderState Seq2SeqModel::start_state(const Tensor& enc_states) const {
  DecoderState s;
  s.layers.assign(static_cast<std::size_t>(config_.decoder_layers),
                  Tensor({state_width()}));
  s.attn_weights = Tensor({enc_states.rows()});
  // Cache W_keys · h_t for every frame; reused by every decoder step.
  s.attn_keys = Tensor({enc_states.rows(), config_.attention_dim});
  autodiff::matmul_into(enc_states, params_.at("attn.w_keys"), false, false, false,
                        s.attn_keys);
  return s;
}

Tensor Seq2SeqModel::decoder_step(const Tensor& enc_states, DecoderState& state,
                                  int prev_token) const {
  int t_len = enc_states.rows();
  int h = config_.hidden_size;
  int enc_out = encoder_output_dim();
  int attn = config_.attention_dim;
  int emb = config_.embedding_size;
  if (prev_token < 0 || prev_token >= vocab_.total_symbols())
    throw std::invalid_argument("decoder_step: token id out of range");

  // Attention over encoder states, queried by the top-layer hidden state.
  const Tensor& top = state.layers.back();
  Tensor query({1, attn});
  {
    Tensor top_h({1, h}, std::vector<double>(top.raw(), top.raw() + h));
    autodiff::matmul_into(top_h, params_.at("attn.w_query"), false, false, false,
                          query);
  }
  Tensor energy_in = state.attn_keys;  // [T', A]
  const Tensor& bias = params_.at("attn.bias");
  for (int t = 0; t < t_len; ++t)
    for (int a = 0; a < attn; ++a) energy_in.at(t, a) += query[a] + bias[a];
  if (config_.location_attention) {
    const Tensor& conv = params_.at("attn.loc_conv");
    const Tensor& w_loc = params_.at("attn.w_loc");
    int channels = conv.rows(), width = conv.cols(), half = width / 2;
    Tensor loc({t_len, channels});
    for (int t = 0; t < t_len; ++t)
      for (int c = 0; c < channels; ++c) {
        double s = 0.0;
        for (int k = 0; k < width; ++k) {
          int src = t + k - half;
          if (src >= 0 && src < t_len) s += conv.at(c, k) * state.attn_weights[src];
        }
        loc.at(t, c) = s;
      }
    autodiff::matmul_into(loc, w_loc, false, false, true, energy_in);
  }
  const Tensor& v = params_.at("attn.v");
  Tensor energies({t_len});
  for (int t = 0; t < t_len; ++t) {
    double e = 0.0;
    for (int a = 0; a < attn; ++a) e += v[a] * std::tanh(energy_in.at(t, a));
    energies[t] = e;
  }
  double mx = *std::max_element(energies.raw(), energies.raw() + t_len);
  double z = 0.0;
  for (int t = 0; t < t_len; ++t) {
    energies[t] = std::exp(energies[t] - mx);
    z += energies[t];
  }
  for (int t = 0; t < t_len; ++t) state.attn_weights[t] = energies[t] / z;

  Tensor context({1, enc_out});
  {
    Tensor alpha({1, t_len},
                 std::vector<double>(state.attn_weights.raw(),
                                     state.attn_weights.raw() + t_len));
    autodiff::matmul_into(alpha, enc_states, false, false, false, context);
  }

  // Recurrent stack consumes [embedding | context].
  const Tensor& embed = params_.at("dec.embed");
  Tensor x({1, emb + enc_out});
  std::copy(embed.raw() + static_cast<std::size_t>(prev_token) * emb,
            embed.raw() + static_cast<std::size_t>(prev_token + 1) * emb, x.raw());
  std::copy(context.raw(), context.raw() + enc_out, x.raw() + emb);
  for (int l = 0; l < config_.decoder_layers; ++l) {
    const Tensor& w_in = params_.at(dec_name(l, "w_in"));
    const Tensor& b_in = params_.at(dec_name(l, "b_in"));
    int gh = w_in.cols();
    Tensor xg({1, gh});
    autodiff::matmul_into(x, w_in, false, false, false, xg);
    for (int i = 0; i < gh; ++i) xg[i] += b_in[i];
    cell_infer(config_.cell, xg.raw(), state.layers[static_cast<std::size_t>(l)],
               params_.at(dec_name(l, "w_rec")), params_.at(dec_name(l, "b_rec")), h);
    if (l + 1 < config_.decoder_layers) {
      const Tensor& hidden = state.layers[static_cast<std::size_t>(l)];
      x = Tensor({1, h}, std::vector<double>(hidden.raw(), hidden.raw() + h));
    }
  }

  const Tensor& top_new = state.layers.back();
  Tensor out_in({1, h + enc_out});
  std::copy(top_new.raw(), top_new.raw() + h, out_in.raw());
  std::copy(context.raw(), context.raw() + enc_out, out_in.raw() + h);
  Tensor logits({1, num_outputs()});
  autodiff::matmul_into(out_in, params_.at("dec.w_out"), false, false, false, logits);
  const Tensor& b_out = params_.at("dec.b_out");
  for (int i = 0; i < num_outputs(); ++i) logits[i] += b_out[i];
  log_softmax_row(logits.raw(), num_outputs());

  Tensor row({num_outputs()},
             std::vector<double>(logits.raw(), logits.raw() + num_outputs()));
  row.check_finite("decoder_step");
  return row;
}

Tensor Seq2SeqModel::forward_teacher_forced(const Tensor& features,
                                            const std::vector<int>& target) const {
  for (int y : target)
    if (y < 0 || y >= vocab_.num_letters())
      throw std::invalid_argument("forward_teacher_forced: non-letter target id");
  Tensor enc = encode(features);
  DecoderState state = start_state(enc);
  int steps = static_cast<int>(target.size()) + 1;
  Tensor out({steps, num_outputs()});
  int prev = vocab_.sos();
  for (int l = 0; l < steps; ++l) {
    Tensor row = decoder_step(enc, state, prev);
    std::copy(row.raw(), row.raw() + num_outputs(),
              out.raw() + static_cast<std::size_t>(l) * num_outputs());
    if (l < steps - 1) prev = target[static_cast<std::size_t>(l)];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Tape path: the same computation recorded for reverse-mode gradients.
// ---------------------------------------------------------------------------

Var Seq2SeqModel::sequence_nll(Tape& tape, const TapeParams& tp,
                               const Tensor& features,
                               const std::vector<int>& target) const {
  for (int y : target)
    if (y < 0 || y >= vocab_.num_letters())
      throw std::invalid_argument("sequence_nll: non-letter target id");
  int h = config_.hidden_size;
  int enc_out = encoder_output_dim();
  int t_len = features.rows();

  // Encoder.
  Var input = tape.constant(conditioned(features));
  for (int l = 0; l < config_.encoder_layers; ++l) {
    std::vector<Var> fwd_h, bwd_h;
    for (int dir = 0; dir < (config_.bidirectional ? 2 : 1); ++dir) {
      bool fwd = dir == 0;
      Var xg = tape.add_row(tape.matmul(input, tp.at(enc_name(l, fwd, "w_in"))),
                            tp.at(enc_name(l, fwd, "b_in")));
      Var w_rec = tp.at(enc_name(l, fwd, "w_rec"));
      Var b_rec = tp.at(enc_name(l, fwd, "b_rec"));
      Var state = tape.constant(Tensor({state_width()}));
      std::vector<Var>& out = fwd ? fwd_h : bwd_h;
      out.resize(static_cast<std::size_t>(t_len));
      for (int step = 0; step < t_len; ++step) {
        int t = fwd ? step : t_len - 1 - step;
        Var xg_t = tape.slice_row(xg, t);
        state = config_.cell == "lstm"
                    ? tape.lstm_step(xg_t, state, w_rec, b_rec)
                    : tape.gru_step(xg_t, state, w_rec, b_rec);
        out[static_cast<std::size_t>(t)] =
            config_.cell == "lstm" ? tape.slice_range(state, 0, h) : state;
      }
    }
    std::vector<Var> rows(static_cast<std::size_t>(t_len));
    for (int t = 0; t < t_len; ++t) {
      std::size_t ti = static_cast<std::size_t>(t);
      rows[ti] = config_.bidirectional ? tape.concat(fwd_h[ti], bwd_h[ti])
                                       : fwd_h[ti];
    }
    input = tape.stack_rows(rows);
  }
  Var enc = input;  // [T', E]

  Var keys = tape.matmul(enc, tp.at("attn.w_keys"));
  Var v_col = tape.reshape(tp.at("attn.v"), {config_.attention_dim, 1});

  std::vector<int> prev_tokens;
  prev_tokens.reserve(target.size() + 1);
  prev_tokens.push_back(vocab_.sos());
  prev_tokens.insert(prev_tokens.end(), target.begin(), target.end());
  Var emb_all = tape.embedding(tp.at("dec.embed"), prev_tokens);

  std::vector<Var> states(static_cast<std::size_t>(config_.decoder_layers),
                          tape.constant(Tensor({state_width()})));
  Var attn_w = tape.constant(Tensor({t_len}));
  int steps = static_cast<int>(target.size()) + 1;
  std::vector<Var> logit_rows(static_cast<std::size_t>(steps));
  for (int l = 0; l < steps; ++l) {
    Var top = config_.cell == "lstm"
                  ? tape.slice_range(states.back(), 0, h)
                  : states.back();
    Var query = tape.reshape(
        tape.matmul(tape.reshape(top, {1, h}), tp.at("attn.w_query")),
        {config_.attention_dim});
    Var energy_in = tape.add_row(keys, query);
    if (config_.location_attention) {
      Var loc = tape.conv1d(attn_w, tp.at("attn.loc_conv"));
      energy_in = tape.add(energy_in, tape.matmul(loc, tp.at("attn.w_loc")));
    }
    energy_in = tape.add_row(energy_in, tp.at("attn.bias"));
    Var energies =
        tape.reshape(tape.matmul(tape.tanh_op(energy_in), v_col), {t_len});
    attn_w = tape.softmax(energies);
    Var context =
        tape.reshape(tape.matmul(tape.reshape(attn_w, {1, t_len}), enc), {enc_out});

    Var x = tape.concat(tape.slice_row(emb_all, l), context);
    for (int dl = 0; dl < config_.decoder_layers; ++dl) {
      Var xg = tape.reshape(
          tape.add_row(tape.matmul(tape.reshape(x, {1, static_cast<int>(
                                                         tape.value(x).size())}),
                                   tp.at(dec_name(dl, "w_in"))),
                       tp.at(dec_name(dl, "b_in"))),
          {gates_of(config_.cell) * h});
      std::size_t di = static_cast<std::size_t>(dl);
      states[di] = config_.cell == "lstm"
                       ? tape.lstm_step(xg, states[di], tp.at(dec_name(dl, "w_rec")),
                                        tp.at(dec_name(dl, "b_rec")))
                       : tape.gru_step(xg, states[di], tp.at(dec_name(dl, "w_rec")),
                                       tp.at(dec_name(dl, "b_rec")));
      if (dl + 1 < config_.decoder_layers)
        x = config_.cell == "lstm" ? tape.slice_range(states[di], 0, h)
                                   : states[di];
    }
    Var top_new = config_.cell == "lstm"
                      ? tape.slice_range(states.back(), 0, h)
                      : states.back();
    Var out_in = tape.concat(top_new, context);
    logit_rows[static_cast<std::size_t>(l)] = tape.reshape(
        tape.add_row(tape.matmul(tape.reshape(out_in, {1, h + enc_out}),
                                 tp.at("dec.w_out")),
                     tp.at("dec.b_out")),
        {num_outputs()});
  }

  Var logp = tape.log_softmax(tape.stack_rows(logit_rows));
  std::vector<int> nll_targets = target;
  nll_targets.push_back(vocab_.eos());
  return tape.nll(logp, nll_targets);
}

// ---------------------------------------------------------------------------
// Losses.
// ---------------------------------------------------------------------------

namespace {

double batch_nll_mean(const Seq2SeqModel& m, const std::vector<Example>& batch,
                      const char* what) {
  if (batch.empty()) throw std::invalid_argument(std::string(what) + ": empty batch");
  double total = 0.0;
  std::int64_t tokens = 0;
  int eos = m.vocab().eos();
  for (const Example& ex : batch) {
    Tensor logp = m.forward_teacher_forced(ex.features, ex.tokens);
    int steps = logp.rows();
    for (int l = 0; l < steps; ++l) {
      int tgt = l < steps - 1 ? ex.tokens[static_cast<std::size_t>(l)] : eos;
      total -= logp.at(l, tgt);
    }
    tokens += steps;
  }
  return total / static_cast<double>(tokens);
}

}  // namespace

double supervised_loss(const Seq2SeqModel& m, const std::vector<Example>& batch) {
  return batch_nll_mean(m, batch, "supervised_loss");
}

double consistency_loss(const Seq2SeqModel& m, const std::vector<Example>& batch) {
  return batch_nll_mean(m, batch, "consistency_loss");
}

double total_loss(double loss_sup, double loss_cr, double lambda) {
  if (lambda < 0.0) throw std::invalid_argument("total_loss: lambda must be >= 0");
  return loss_sup + lambda * loss_cr;
}

Var build_total_loss(Tape& tape, const TapeParams& tp, const Seq2SeqModel& m,
                     const std::vector<Example>& sup,
                     const std::vector<Example>& cr, double lambda,
                     LossBreakdown* breakdown) {
  if (sup.empty()) throw std::invalid_argument("build_total_loss: empty batch");
  auto sum_nll = [&](const std::vector<Example>& batch, std::int64_t* tokens) {
    Var total;
    *tokens = 0;
    for (const Example& ex : batch) {
      Var nll = m.sequence_nll(tape, tp, ex.features, ex.tokens);
      total = total.valid() ? tape.add(total, nll) : nll;
      *tokens += static_cast<std::int64_t>(ex.tokens.size()) + 1;
    }
    return total;
  };

  std::int64_t sup_tokens = 0, cr_tokens = 0;
  Var sup_total = sum_nll(sup, &sup_tokens);
  Var loss_sup = tape.scale(sup_total, 1.0 / static_cast<double>(sup_tokens));
  Var total = loss_sup;
  Var loss_cr;
  if (!cr.empty()) {
    Var cr_total = sum_nll(cr, &cr_tokens);
    loss_cr = tape.scale(cr_total, 1.0 / static_cast<double>(cr_tokens));
    total = tape.add(loss_sup, tape.scale(loss_cr, lambda));
  }
  if (breakdown != nullptr) {
    breakdown->loss_sup = tape.value(loss_sup).scalar_value();
    breakdown->loss_cr = loss_cr.valid() ? tape.value(loss_cr).scalar_value() : 0.0;
    breakdown->total = tape.value(total).scalar_value();
    breakdown->sup_tokens = sup_tokens;
    breakdown->cr_tokens = cr_tokens;
  }
  return total;
}

}  // namespace alcr::model
