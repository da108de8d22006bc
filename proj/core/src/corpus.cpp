#include "alcr/corpus.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace alcr::corpus {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::pair<int, int> tone_pair(int letter_id, int num_base_freqs) {
  int max_letters = num_base_freqs * (num_base_freqs - 1) / 2;
  if (letter_id < 0 || letter_id >= max_letters)
    throw std::invalid_argument("tone_pair: letter id out of range");
  int k = letter_id;
  for (int i = 0; i < num_base_freqs - 1; ++i) {
    int pairs_with_i = num_base_freqs - 1 - i;
    if (k < pairs_with_i) return {i, i + 1 + k};
    k -= pairs_with_i;
  }
  throw std::logic_error("tone_pair: unreachable");
}

std::pair<double, double> tone_frequencies(int letter_id, const SynthesisConfig& cfg) {
  auto [i, j] = tone_pair(letter_id, cfg.num_base_freqs);
  return {cfg.base_freq_hz * std::pow(cfg.freq_ratio, i),
          cfg.base_freq_hz * std::pow(cfg.freq_ratio, j)};
}

dsp::Waveform synthesize(const std::string& transcript, const Vocabulary& vocab,
                         const SpeakerProfile& speaker, RngStream& rng,
                         const SynthesisConfig& cfg) {
  if (transcript.size() > 20)
    throw std::invalid_argument("synthesize: transcript longer than 20 characters");
  int length = static_cast<int>(transcript.size());
  int n = static_cast<int>(std::lround(cfg.transcript_duration(length) * cfg.sample_rate));
  dsp::Waveform wav;
  wav.sample_rate = cfg.sample_rate;
  wav.samples.assign(static_cast<std::size_t>(n), 0.0);

  if (length == 0) {
    // Near-silence: only a faint noise floor, no tones to reference an SNR to.
    for (double& s : wav.samples) s += 1e-4 * rng.gaussian();
    return wav;
  }

  int tone_len = static_cast<int>(std::lround(cfg.tone_sec * cfg.sample_rate));
  int ramp_len = static_cast<int>(std::lround(cfg.ramp_sec * cfg.sample_rate));
  double amp = cfg.tone_amplitude * speaker.gain;

  for (int k = 0; k < length; ++k) {
    int letter = vocab.id_of(transcript[static_cast<std::size_t>(k)]);
    auto [f1, f2] = tone_frequencies(letter, cfg);
    double j1 = rng.uniform(-cfg.freq_jitter, cfg.freq_jitter);
    double j2 = rng.uniform(-cfg.freq_jitter, cfg.freq_jitter);
    double ph1 = rng.uniform(0.0, 2.0 * kPi);
    double ph2 = rng.uniform(0.0, 2.0 * kPi);
    double w1 = 2.0 * kPi * f1 * speaker.base_freq_scale * (1.0 + j1);
    double w2 = 2.0 * kPi * f2 * speaker.base_freq_scale * (1.0 + j2);
    int start = static_cast<int>(std::lround(
        (cfg.lead_silence_sec + k * (cfg.tone_sec + cfg.gap_sec)) * cfg.sample_rate));
    for (int s = 0; s < tone_len && start + s < n; ++s) {
      double env = 1.0;
      if (s < ramp_len)
        env = 0.5 * (1.0 - std::cos(kPi * s / ramp_len));
      else if (s >= tone_len - ramp_len)
        env = 0.5 * (1.0 - std::cos(kPi * (tone_len - 1 - s) / ramp_len));
      double t = static_cast<double>(s) / cfg.sample_rate;
      wav.samples[static_cast<std::size_t>(start + s)] +=
          amp * env * (std::sin(w1 * t + ph1) + std::sin(w2 * t + ph2));
    }
  }

  double power = 0.0;
  for (double s : wav.samples) power += s * s;
  power /= static_cast<double>(n);
  double noise_sd = std::sqrt(power / std::pow(10.0, cfg.background_snr_db / 10.0));
  for (double& s : wav.samples) s += noise_sd * rng.gaussian();
  return wav;
}

std::vector<ManifestEntry> CorpusManifest::split(const std::string& name) const {
  std::vector<ManifestEntry> out;
  for (const auto& e : entries)
    if (e.split == name) out.push_back(e);
  return out;
}

double CorpusManifest::split_duration(const std::string& name) const {
  double total = 0.0;
  for (const auto& e : entries)
    if (e.split == name) total += e.duration_s;
  return total;
}

const ManifestEntry& CorpusManifest::by_id(const std::string& id) const {
  for (const auto& e : entries)
    if (e.id == id) return e;
  throw std::out_of_range("manifest has no utterance " + id);
}

namespace {

CorpusManifest generate_impl(const std::string& dir, std::uint64_t seed,
                             const CorpusSizes& sizes, const LengthRange& lengths,
                             const Vocabulary& vocab,
                             const std::string& initial_letters,
                             const std::string& other_letters) {
  if (sizes.initial < 1 || sizes.unlabeled < 1 || sizes.test < 1)
    throw std::invalid_argument("generate_corpus: split sizes must be >= 1");
  if (lengths.min_len < 1 || lengths.max_len > 20 || lengths.min_len > lengths.max_len)
    throw std::invalid_argument("generate_corpus: bad transcript length range");

  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "wav");

  CorpusManifest manifest;
  manifest.seed = seed;
  manifest.letters = vocab.letters();

  struct SplitSpec {
    const char* name;
    int count;
    const std::string* letters;
  };
  const SplitSpec specs[] = {{"initial", sizes.initial, &initial_letters},
                             {"unlabeled", sizes.unlabeled, &other_letters},
                             {"test", sizes.test, &other_letters}};
  for (const auto& spec : specs) {
    for (int i = 0; i < spec.count; ++i) {
      char id_buf[32];
      std::snprintf(id_buf, sizeof(id_buf), "%s-%04d", spec.name, i);
      std::string id = id_buf;

      RngStream tstream = keyed_stream(seed, "transcript", id, 0);
      int len = lengths.min_len +
                static_cast<int>(tstream.uniform_int(
                    static_cast<std::uint64_t>(lengths.max_len - lengths.min_len) + 1));
      std::string transcript;
      transcript.reserve(static_cast<std::size_t>(len));
      for (int c = 0; c < len; ++c)
        transcript.push_back(
            (*spec.letters)[tstream.uniform_int(spec.letters->size())]);

      RngStream sstream = keyed_stream(seed, "speaker", id, 0);
      SpeakerProfile speaker;
      speaker.base_freq_scale = sstream.uniform(0.9, 1.1);
      speaker.gain = sstream.uniform(0.5, 1.0);
      speaker.jitter_seed = sstream.next_u64();

      RngStream synth_rng = keyed_stream(speaker.jitter_seed, "synth");
      dsp::Waveform wav = synthesize(transcript, vocab, speaker, synth_rng);

      ManifestEntry entry;
      entry.id = id;
      entry.wav_path = std::string("wav/") + id + ".wav";
      entry.transcript = transcript;
      entry.duration_s = wav.duration();
      entry.split = spec.name;
      dsp::write_wav((fs::path(dir) / entry.wav_path).string(), wav);
      manifest.entries.push_back(std::move(entry));
    }
  }
  write_manifest(dir, manifest);
  return manifest;
}

}  // namespace

CorpusManifest generate_corpus(const std::string& dir, std::uint64_t seed,
                               const CorpusSizes& sizes, const LengthRange& lengths,
                               const Vocabulary& vocab) {
  return generate_impl(dir, seed, sizes, lengths, vocab, vocab.letters(),
                       vocab.letters());
}

CorpusManifest generate_heterogeneous_corpus(const std::string& dir,
                                             std::uint64_t seed,
                                             const CorpusSizes& sizes,
                                             const LengthRange& lengths,
                                             const Vocabulary& vocab) {
  int n = vocab.num_letters();
  if (n < 3)
    throw std::invalid_argument("heterogeneous corpus needs at least 3 letters");
  // Two overlapping 2/3 slices: with 12 letters, a-h vs e-l.
  int span = 2 * n / 3;
  std::string va = vocab.letters().substr(0, static_cast<std::size_t>(span));
  std::string vb = vocab.letters().substr(static_cast<std::size_t>(n - span));
  return generate_impl(dir, seed, sizes, lengths, vocab, va, vb);
}

void write_manifest(const std::string& dir, const CorpusManifest& manifest) {
  namespace fs = std::filesystem;
  {
    std::ofstream out(fs::path(dir) / "manifest.tsv");
    if (!out) throw std::runtime_error("write_manifest: cannot open manifest.tsv");
    for (const auto& e : manifest.entries)
      out << e.id << '\t' << e.wav_path << '\t' << e.transcript << '\t'
          << format_double(e.duration_s) << '\t' << e.split << '\n';
    if (!out) throw std::runtime_error("write_manifest: write failed");
  }
  nlohmann::json meta;
  meta["seed"] = manifest.seed;
  meta["letters"] = manifest.letters;
  std::ofstream out(fs::path(dir) / "corpus.json");
  if (!out) throw std::runtime_error("write_manifest: cannot open corpus.json");
  out << meta.dump(2) << '\n';
}

CorpusManifest read_manifest(const std::string& dir) {
  namespace fs = std::filesystem;
  CorpusManifest manifest;
  {
    std::ifstream in(fs::path(dir) / "corpus.json");
    if (!in)
      throw std::runtime_error("read_manifest: cannot open corpus.json in " + dir);
    nlohmann::json meta = nlohmann::json::parse(in);
    manifest.seed = meta.at("seed").get<std::uint64_t>();
    manifest.letters = meta.at("letters").get<std::string>();
  }
  std::ifstream in(fs::path(dir) / "manifest.tsv");
  if (!in)
    throw std::runtime_error("read_manifest: cannot open manifest.tsv in " + dir);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    ManifestEntry e;
    std::string duration;
    if (!std::getline(ls, e.id, '\t') || !std::getline(ls, e.wav_path, '\t') ||
        !std::getline(ls, e.transcript, '\t') || !std::getline(ls, duration, '\t') ||
        !std::getline(ls, e.split))
      throw std::runtime_error("read_manifest: malformed line " +
                               std::to_string(line_no));
    e.duration_s = std::stod(duration);
    manifest.entries.push_back(std::move(e));
  }
  return manifest;
}

Annotator::Annotator(const CorpusManifest& manifest) {
  for (const auto& e : manifest.entries)
    items_[e.id] = Item{e.transcript, e.duration_s, false};
}

const std::string& Annotator::annotate(const std::string& id) {
  auto it = items_.find(id);
  if (it == items_.end())
    throw std::out_of_range("annotate: unknown utterance " + id);
  if (!it->second.labeled) {
    it->second.labeled = true;
    consumed_ += it->second.duration;
    ++labeled_count_;
  }
  return it->second.transcript;
}

bool Annotator::labeled(const std::string& id) const {
  auto it = items_.find(id);
  if (it == items_.end())
    throw std::out_of_range("labeled: unknown utterance " + id);
  return it->second.labeled;
}

}  // namespace alcr::corpus
