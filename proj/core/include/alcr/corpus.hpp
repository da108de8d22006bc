#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "alcr/dsp.hpp"
#include "alcr/rng.hpp"
#include "alcr/vocab.hpp"

namespace alcr::corpus {

struct SpeakerProfile {
  double base_freq_scale = 1.0;  // [0.9, 1.1]
  double gain = 0.75;            // [0.5, 1.0]
  std::uint64_t jitter_seed = 0;
};

struct Utterance {
  std::string id;
  dsp::Waveform waveform;
  std::string transcript;
  double duration_s = 0.0;
};

/// Dual-tone encoding: each letter maps to a distinct pair of the 8 base
/// frequencies (geometric ladder from base_freq_hz), rendered as 300 ms
/// two-tone segments with 50 ms gaps and a low noise floor.
struct SynthesisConfig {
  int sample_rate = 4000;
  double lead_silence_sec = 0.05;
  double tone_sec = 0.3;
  double gap_sec = 0.05;
  double empty_sec = 0.1;  // duration of an empty-transcript utterance
  double ramp_sec = 0.01;  // raised-cosine fade at both tone ends
  double tone_amplitude = 0.4;
  double background_snr_db = 30.0;
  double freq_jitter = 0.005;  // per-tone relative frequency jitter bound
  double base_freq_hz = 400.0;
  double freq_ratio = 1.23;  // spacing of the 8-note ladder
  int num_base_freqs = 8;

  double transcript_duration(int length) const {
    return length == 0 ? empty_sec
                       : lead_silence_sec + length * (tone_sec + gap_sec);
  }
};

/// Indices into the base-frequency ladder for a letter: the letter_id-th pair
/// (i, j), i < j, in lexicographic order.
std::pair<int, int> tone_pair(int letter_id, int num_base_freqs = 8);
std::pair<double, double> tone_frequencies(int letter_id,
                                           const SynthesisConfig& cfg = {});

/// Renders a transcript; deterministic given (transcript, speaker, rng state).
/// The stream supplies, per character: two frequency jitters, two phases;
/// then one gaussian per sample of background noise.
dsp::Waveform synthesize(const std::string& transcript, const Vocabulary& vocab,
                         const SpeakerProfile& speaker, RngStream& rng,
                         const SynthesisConfig& cfg = {});

struct ManifestEntry {
  std::string id;
  std::string wav_path;  // relative to the corpus directory
  std::string transcript;
  double duration_s = 0.0;
  std::string split;  // "initial" | "unlabeled" | "test"
};

struct CorpusManifest {
  std::uint64_t seed = 0;
  std::string letters;
  std::vector<ManifestEntry> entries;

  std::vector<ManifestEntry> split(const std::string& name) const;
  double split_duration(const std::string& name) const;
  const ManifestEntry& by_id(const std::string& id) const;
};

struct CorpusSizes {
  int initial = 400;
  int unlabeled = 1600;
  int test = 300;
};

struct LengthRange {
  int min_len = 3;
  int max_len = 10;
};

/// Generates WAVs under dir/wav plus dir/manifest.tsv and dir/corpus.json.
/// Byte-identical output for identical seeds.
CorpusManifest generate_corpus(const std::string& dir, std::uint64_t seed,
                               const CorpusSizes& sizes = {},
                               const LengthRange& lengths = {},
                               const Vocabulary& vocab = Vocabulary());

/// Domain-shift variant: initial transcripts use the first 8 letters,
/// unlabeled and test transcripts the last 8 (4 letters exclusive to each).
CorpusManifest generate_heterogeneous_corpus(const std::string& dir,
                                             std::uint64_t seed,
                                             const CorpusSizes& sizes = {},
                                             const LengthRange& lengths = {},
                                             const Vocabulary& vocab = Vocabulary());

CorpusManifest read_manifest(const std::string& dir);
void write_manifest(const std::string& dir, const CorpusManifest& manifest);

/// Ground-truth labeler with a duration ledger; annotating an utterance twice
/// charges its duration only once.
class Annotator {
 public:
  explicit Annotator(const CorpusManifest& manifest);

  const std::string& annotate(const std::string& id);
  bool labeled(const std::string& id) const;
  int labeled_count() const { return labeled_count_; }
  double consumed_duration() const { return consumed_; }

 private:
  struct Item {
    std::string transcript;
    double duration = 0.0;
    bool labeled = false;
  };
  std::map<std::string, Item> items_;
  int labeled_count_ = 0;
  double consumed_ = 0.0;
};

}  // namespace alcr::corpus
