#include "alcr/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace alcr::decode {

double length_penalty(int length, const BeamConfig& cfg) {
  if (length < 0) throw std::invalid_argument("length_penalty: negative length");
  return std::pow(cfg.lp_offset + length, cfg.lp_power) /
         std::pow(cfg.lp_offset + 1.0, cfg.lp_power);
}

TableScorer::TableScorer(Tensor table) : table_(std::move(table)) {
  if (table_.rank() != 2 || table_.cols() < 2)
    throw std::invalid_argument("TableScorer: table must be [positions, >=2]");
  // Renormalize rows so the table is a valid per-step log-distribution.
  for (int r = 0; r < table_.rows(); ++r) {
    double* row = table_.raw() + static_cast<std::size_t>(r) * table_.cols();
    double mx = *std::max_element(row, row + table_.cols());
    double z = 0.0;
    for (int c = 0; c < table_.cols(); ++c) z += std::exp(row[c] - mx);
    double lz = mx + std::log(z);
    for (int c = 0; c < table_.cols(); ++c) row[c] -= lz;
  }
}

std::pair<int, Tensor> TableScorer::step(int state, int) {
  if (state < 0 || state >= table_.rows())
    throw std::out_of_range("TableScorer: decoded past the table depth");
  Tensor row({table_.cols()});
  std::copy(table_.raw() + static_cast<std::size_t>(state) * table_.cols(),
            table_.raw() + static_cast<std::size_t>(state + 1) * table_.cols(),
            row.raw());
  return {state + 1, row};
}

ModelScorer::ModelScorer(const model::Seq2SeqModel& m, const Tensor& features)
    : model_(m), enc_(m.encode(features)) {}

int ModelScorer::start() {
  states_.push_back(model_.start_state(enc_));
  return static_cast<int>(states_.size()) - 1;
}

std::pair<int, Tensor> ModelScorer::step(int state, int prev_token) {
  model::DecoderState next = states_[static_cast<std::size_t>(state)];
  int token = prev_token < 0 ? model_.vocab().sos() : prev_token;
  Tensor row = model_.decoder_step(enc_, next, token);
  states_.push_back(std::move(next));
  return {static_cast<int>(states_.size()) - 1, row};
}

namespace {

struct LiveHyp {
  std::vector<int> tokens;
  double logp = 0.0;
  int state = -1;
  int prev = -1;  // token to feed on the next step
};

void finish(std::vector<Hypothesis>& finished, double& best_score,
            std::vector<int> tokens, double logp, const BeamConfig& cfg) {
  Hypothesis h;
  h.score = logp / length_penalty(static_cast<int>(tokens.size()), cfg);
  h.tokens = std::move(tokens);
  h.logp = logp;
  best_score = std::max(best_score, h.score);
  finished.push_back(std::move(h));
}

}  // namespace

std::vector<Hypothesis> beam_search(StepScorer& scorer, const BeamConfig& cfg) {
  if (cfg.width < 1) throw std::invalid_argument("beam_search: width must be >= 1");
  if (cfg.max_len < 1)
    throw std::invalid_argument("beam_search: max_len must be >= 1");
  int eos = scorer.eos_id();
  double lp_max = length_penalty(cfg.max_len, cfg);

  std::vector<LiveHyp> live(1);
  live[0].state = scorer.start();
  std::vector<Hypothesis> finished;
  double best_score = -std::numeric_limits<double>::infinity();

  for (int pos = 1; pos <= cfg.max_len; ++pos) {
    std::vector<LiveHyp> candidates;
    candidates.reserve(live.size() * static_cast<std::size_t>(eos));
    for (LiveHyp& h : live) {
      auto [next_state, row] = scorer.step(h.state, h.prev);
      finish(finished, best_score, h.tokens, h.logp + row[eos], cfg);
      for (int t = 0; t < eos; ++t) {
        LiveHyp c;
        c.tokens = h.tokens;
        c.tokens.push_back(t);
        c.logp = h.logp + row[t];
        c.state = next_state;
        c.prev = t;
        candidates.push_back(std::move(c));
      }
    }
    std::sort(candidates.begin(), candidates.end(),
              [](const LiveHyp& a, const LiveHyp& b) {
                if (a.logp != b.logp) return a.logp > b.logp;
                return a.tokens < b.tokens;
              });
    if (static_cast<int>(candidates.size()) > cfg.width)
      candidates.resize(static_cast<std::size_t>(cfg.width));
    // Admissible pruning: logp/lp(max_len) bounds every descendant's score
    // (logp only falls, lp only grows), so strictly worse bounds are dead.
    live.clear();
    for (LiveHyp& c : candidates)
      if (c.logp / lp_max >= best_score) live.push_back(std::move(c));
    if (live.empty()) break;
  }

  // Surviving hypotheses hold max_len tokens: force the EOS step.
  for (LiveHyp& h : live) {
    auto [next_state, row] = scorer.step(h.state, h.prev);
    (void)next_state;
    finish(finished, best_score, std::move(h.tokens), h.logp + row[eos], cfg);
  }

  std::sort(finished.begin(), finished.end(),
            [](const Hypothesis& a, const Hypothesis& b) {
              if (a.score != b.score) return a.score > b.score;
              if (a.tokens.size() != b.tokens.size())
                return a.tokens.size() < b.tokens.size();
              return a.tokens < b.tokens;
            });
  return finished;
}

namespace {

BeamConfig resolve_max_len(BeamConfig cfg, int frames) {
  if (cfg.max_len < 1) cfg.max_len = std::min(2 * frames, cfg.max_len_cap);
  return cfg;
}

}  // namespace

std::vector<Hypothesis> beam_search(const model::Seq2SeqModel& m,
                                    const Tensor& features, BeamConfig cfg) {
  ModelScorer scorer(m, features);
  return beam_search(scorer, resolve_max_len(cfg, scorer.num_frames()));
}

double pprob(const model::Seq2SeqModel& m, const Tensor& features,
             const BeamConfig& cfg) {
  return beam_search(m, features, cfg).front().score;
}

std::vector<int> decode_pseudo_label(const model::Seq2SeqModel& m,
                                     const Tensor& features,
                                     const BeamConfig& cfg) {
  return beam_search(m, features, cfg).front().tokens;
}

}  // namespace alcr::decode
