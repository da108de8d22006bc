#include "alcr/augment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace alcr::augment {

namespace {

constexpr double kPi = 3.14159265358979323846;

double lerp_at(const std::vector<double>& x, double pos) {
  auto n = static_cast<std::int64_t>(x.size());
  auto i0 = static_cast<std::int64_t>(pos);
  if (i0 >= n - 1) return x[static_cast<std::size_t>(n - 1)];
  double frac = pos - static_cast<double>(i0);
  return x[static_cast<std::size_t>(i0)] * (1.0 - frac) +
         x[static_cast<std::size_t>(i0 + 1)] * frac;
}

/// Overlap-add time stretch to an exact output length. Each grain is slid
/// within ±hop/2 of its nominal read position to the lag that best matches
/// what is already in the output buffer (SOLA); fixed placement would put a
/// linear phase ramp across overlapping grains and re-modulate the carrier
/// back toward the original frequency. Grains whose summed window weight is
/// negligible (the very edges) fall back to resampling.
std::vector<double> time_stretch(const std::vector<double>& x, int out_len,
                                 int sample_rate) {
  int in_len = static_cast<int>(x.size());
  int window = std::max(2, sample_rate * 25 / 1000);  // 25 ms grains
  int hop = std::max(1, sample_rate * 10 / 1000);     // 10 ms synthesis hop
  double ratio = static_cast<double>(out_len) / in_len;
  int search = hop / 2;

  std::vector<double> w(static_cast<std::size_t>(window));
  for (int j = 0; j < window; ++j)
    w[static_cast<std::size_t>(j)] = 0.5 * (1.0 - std::cos(2.0 * kPi * j / (window - 1)));

  std::vector<double> acc(static_cast<std::size_t>(out_len), 0.0);
  std::vector<double> wsum(static_cast<std::size_t>(out_len), 0.0);
  for (int k = 0;; ++k) {
    int p_out = k * hop;
    if (p_out >= out_len) break;
    int nominal = static_cast<int>(std::lround(p_out / ratio));
    int p_in = std::clamp(nominal, 0, std::max(0, in_len - 1));
    if (k > 0) {
      // Normalized cross-correlation between each candidate grain and the
      // already-accumulated tail over the grain/previous-grain overlap.
      int overlap = window - hop;
      double best_score = -std::numeric_limits<double>::infinity();
      for (int d = -search; d <= search; ++d) {
        int p = nominal + d;
        if (p < 0 || p >= in_len) continue;
        double num = 0.0, prior_energy = 0.0, grain_energy = 0.0;
        for (int j = 0; j < overlap; ++j) {
          int io = p_out + j, ii = p + j;
          if (io >= out_len || ii >= in_len) break;
          if (wsum[static_cast<std::size_t>(io)] <= 1e-6) continue;
          double a = acc[static_cast<std::size_t>(io)] /
                     wsum[static_cast<std::size_t>(io)];
          double b = x[static_cast<std::size_t>(ii)];
          num += a * b;
          prior_energy += a * a;
          grain_energy += b * b;
        }
        if (prior_energy <= 0.0 || grain_energy <= 0.0) continue;
        double score = num / std::sqrt(prior_energy * grain_energy);
        if (score > best_score) {
          best_score = score;
          p_in = p;
        }
      }
    }
    for (int j = 0; j < window; ++j) {
      int io = p_out + j, ii = p_in + j;
      if (io >= out_len || ii >= in_len) break;
      acc[static_cast<std::size_t>(io)] += w[static_cast<std::size_t>(j)] *
                                           x[static_cast<std::size_t>(ii)];
      wsum[static_cast<std::size_t>(io)] += w[static_cast<std::size_t>(j)];
    }
  }
  std::vector<double> out(static_cast<std::size_t>(out_len));
  for (int i = 0; i < out_len; ++i) {
    if (wsum[static_cast<std::size_t>(i)] > 1e-6)
      out[static_cast<std::size_t>(i)] =
          acc[static_cast<std::size_t>(i)] / wsum[static_cast<std::size_t>(i)];
    else
      out[static_cast<std::size_t>(i)] = lerp_at(x, i / ratio);
  }
  return out;
}

}  // namespace

AugmentationPolicy AugmentationPolicy::parse(const std::string& name) {
  AugmentationPolicy p;
  if (name == "none")
    p.kind = Kind::None;
  else if (name == "speed")
    p.kind = Kind::Speed;
  else if (name == "pitch")
    p.kind = Kind::Pitch;
  else if (name == "awgn")
    p.kind = Kind::Awgn;
  else if (name == "specaugment")
    p.kind = Kind::SpecAugment;
  else
    throw std::invalid_argument("unknown augmentation policy: " + name);
  return p;
}

std::string AugmentationPolicy::name() const {
  switch (kind) {
    case Kind::None: return "none";
    case Kind::Speed: return "speed";
    case Kind::Pitch: return "pitch";
    case Kind::Awgn: return "awgn";
    case Kind::SpecAugment: return "specaugment";
  }
  throw std::logic_error("unreachable policy kind");
}

Waveform speed(const Waveform& w, double factor) {
  if (factor <= 0.0) throw std::invalid_argument("speed: factor must be positive");
  int n = w.num_samples();
  int out_len = static_cast<int>(n / factor);
  if (out_len < 1) throw std::invalid_argument("speed: output would be empty");
  Waveform out;
  out.sample_rate = w.sample_rate;
  out.samples.resize(static_cast<std::size_t>(out_len));
  for (int k = 0; k < out_len; ++k)
    out.samples[static_cast<std::size_t>(k)] = lerp_at(w.samples, k * factor);
  return out;
}

Waveform pitch(const Waveform& w, int semitones) {
  if (semitones < -12 || semitones > 12)
    throw std::invalid_argument("pitch: |semitones| must be at most 12");
  if (semitones == 0) return w;
  double ratio = std::pow(2.0, semitones / 12.0);
  Waveform resampled = speed(w, ratio);
  Waveform out;
  out.sample_rate = w.sample_rate;
  out.samples = time_stretch(resampled.samples, w.num_samples(), w.sample_rate);
  return out;
}

Waveform awgn(const Waveform& w, double snr_db, RngStream& rng) {
  double power = 0.0;
  for (double s : w.samples) power += s * s;
  power /= std::max<std::size_t>(1, w.samples.size());
  if (power <= 0.0)
    throw std::invalid_argument("awgn: signal power is zero, SNR undefined");
  double noise_sd = std::sqrt(power / std::pow(10.0, snr_db / 10.0));
  Waveform out = w;
  for (double& s : out.samples) s += noise_sd * rng.gaussian();
  return out;
}

Tensor spec_augment(const Tensor& spec, int max_time_width, int max_freq_width,
                    int num_time_masks, int num_freq_masks, RngStream& rng) {
  if (max_time_width < 0 || max_freq_width < 0 || num_time_masks < 0 ||
      num_freq_masks < 0)
    throw std::invalid_argument("spec_augment: negative parameter");
  int frames = spec.rows(), bins = spec.cols();
  double mean = 0.0;
  for (std::int64_t i = 0; i < spec.size(); ++i) mean += spec[i];
  mean /= static_cast<double>(spec.size());

  Tensor out = spec;
  for (int m = 0; m < num_time_masks; ++m) {
    int cap = std::min(max_time_width, frames);
    int width = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(cap) + 1));
    int start = static_cast<int>(
        rng.uniform_int(static_cast<std::uint64_t>(frames - width) + 1));
    for (int t = start; t < start + width; ++t)
      for (int f = 0; f < bins; ++f) out.at(t, f) = mean;
  }
  for (int m = 0; m < num_freq_masks; ++m) {
    int cap = std::min(max_freq_width, bins);
    int width = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(cap) + 1));
    int start = static_cast<int>(
        rng.uniform_int(static_cast<std::uint64_t>(bins - width) + 1));
    for (int t = 0; t < frames; ++t)
      for (int f = start; f < start + width; ++f) out.at(t, f) = mean;
  }
  return out;
}

Tensor apply(const AugmentationPolicy& policy, const Waveform& w,
             const FrontendConfig& frontend, RngStream& rng) {
  switch (policy.kind) {
    case AugmentationPolicy::Kind::None:
      return dsp::spectrogram(w, frontend);
    case AugmentationPolicy::Kind::Speed:
      return dsp::spectrogram(speed(w, policy.speed_factor), frontend);
    case AugmentationPolicy::Kind::Pitch:
      return dsp::spectrogram(pitch(w, policy.pitch_semitones), frontend);
    case AugmentationPolicy::Kind::Awgn:
      return dsp::spectrogram(awgn(w, policy.awgn_snr_db, rng), frontend);
    case AugmentationPolicy::Kind::SpecAugment:
      return spec_augment(dsp::spectrogram(w, frontend), policy.sa_time_width,
                          policy.sa_freq_width, policy.sa_time_masks,
                          policy.sa_freq_masks, rng);
  }
  throw std::logic_error("unreachable policy kind");
}

}  // namespace alcr::augment
