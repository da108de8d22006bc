#pragma once

#include <string>

#include "alcr/dsp.hpp"
#include "alcr/rng.hpp"
#include "alcr/tensor.hpp"

namespace alcr::augment {

using autodiff::Tensor;
using dsp::FrontendConfig;
using dsp::Waveform;

/// One augmentation per policy; the parameters of the inactive kinds keep
/// their defaults and are ignored.
struct AugmentationPolicy {
  enum class Kind { None, Speed, Pitch, Awgn, SpecAugment };

  Kind kind = Kind::None;
  double speed_factor = 1.5;
  int pitch_semitones = 2;
  double awgn_snr_db = 5.0;
  int sa_time_width = 40;
  int sa_freq_width = 27;
  int sa_time_masks = 2;
  int sa_freq_masks = 2;

  /// Accepts "none", "speed", "pitch", "awgn", "specaugment".
  static AugmentationPolicy parse(const std::string& name);
  std::string name() const;
};

/// Resampling speed change: tempo and pitch both scale by `factor`;
/// output length is floor(N / factor).
Waveform speed(const Waveform& w, double factor = 1.5);

/// Pitch shift by semitones (ratio 2^(k/12)): resample, then time-stretch
/// back to the original length by windowed overlap-add (25 ms Hann grains,
/// 10 ms hop).
Waveform pitch(const Waveform& w, int semitones = 2);

/// Additive white Gaussian noise at the given signal-to-noise ratio.
Waveform awgn(const Waveform& w, double snr_db, RngStream& rng);

/// Masks mT time ranges and mF frequency ranges with the spectrogram mean.
/// Mask widths are uniform on [0, min(max_width, extent)]; time masks are
/// drawn before frequency masks.
Tensor spec_augment(const Tensor& spec, int max_time_width, int max_freq_width,
                    int num_time_masks, int num_freq_masks, RngStream& rng);

/// The augmentation function A: waveform-domain policies transform the audio
/// and recompute features; SpecAugment masks the feature matrix directly.
Tensor apply(const AugmentationPolicy& policy, const Waveform& w,
             const FrontendConfig& frontend, RngStream& rng);

}  // namespace alcr::augment
