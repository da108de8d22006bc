#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "alcr/corpus.hpp"
#include "alcr/decoder.hpp"
#include "alcr/dsp.hpp"
#include "alcr/metrics.hpp"
#include "alcr/model.hpp"
#include "alcr/optim.hpp"
#include "alcr/rng.hpp"
#include "alcr/tape.hpp"

using namespace alcr;
using alcr::autodiff::Tensor;

namespace {

dsp::Waveform bench_waveform(double seconds) {
  Vocabulary vocab;
  corpus::SpeakerProfile speaker;
  RngStream rng = keyed_stream(1, "bench");
  std::string transcript;
  int letters = static_cast<int>((seconds - 0.05) / 0.35);
  for (int i = 0; i < letters; ++i) transcript += static_cast<char>('a' + i % 12);
  return corpus::synthesize(transcript, vocab, speaker, rng);
}

model::Seq2SeqModel bench_model() {
  model::ModelConfig cfg;  // production defaults: hidden 32, bins 401
  return model::Seq2SeqModel(cfg, Vocabulary(), 7);
}

Tensor bench_features() {
  dsp::FrontendConfig fe;
  return dsp::spectrogram(bench_waveform(2.5), fe);
}

void BM_spectrogram(benchmark::State& state) {
  dsp::Waveform wav = bench_waveform(2.5);
  dsp::FrontendConfig fe;
  for (auto _ : state) {
    Tensor spec = dsp::spectrogram(wav, fe);
    benchmark::DoNotOptimize(spec.raw());
  }
}
BENCHMARK(BM_spectrogram);

void BM_encode(benchmark::State& state) {
  model::Seq2SeqModel m = bench_model();
  Tensor feats = bench_features();
  for (auto _ : state) {
    Tensor enc = m.encode(feats);
    benchmark::DoNotOptimize(enc.raw());
  }
}
BENCHMARK(BM_encode);

void BM_beam_decode(benchmark::State& state) {
  model::Seq2SeqModel m = bench_model();
  Tensor feats = bench_features();
  decode::BeamConfig beam;
  for (auto _ : state) {
    std::vector<decode::Hypothesis> hyps = decode::beam_search(m, feats, beam);
    benchmark::DoNotOptimize(hyps.data());
  }
}
BENCHMARK(BM_beam_decode);

void BM_train_step(benchmark::State& state) {
  model::Seq2SeqModel m = bench_model();
  Tensor feats = bench_features();
  std::vector<model::Example> batch;
  batch.push_back({feats, {0, 1, 2, 3, 4, 5}});
  autodiff::AdamState adam(m.params());
  autodiff::AdamConfig acfg;
  for (auto _ : state) {
    autodiff::Tape tape;
    autodiff::TapeParams tp = autodiff::watch_parameters(tape, m.params());
    autodiff::Var loss = model::build_total_loss(tape, tp, m, batch, {}, 0.0);
    autodiff::Gradients g = tape.backward(loss);
    autodiff::clip_global_norm(g, 400.0);
    autodiff::adam_step(m.params(), g, adam, acfg);
  }
}
BENCHMARK(BM_train_step);

void BM_edit_distance(benchmark::State& state) {
  std::string a = "abcdefghijklabcdefghijkl";
  std::string b = "abcdefghjiklabcdefghijlk";
  for (auto _ : state) {
    int d = metrics::edit_distance(a, b);
    benchmark::DoNotOptimize(d);
  }
}
BENCHMARK(BM_edit_distance);

}  // namespace

BENCHMARK_MAIN();
