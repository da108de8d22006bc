#pragma once

#include <string>
#include <vector>

#include "alcr/tensor.hpp"

namespace alcr::dsp {

using autodiff::Tensor;

struct Waveform {
  std::vector<double> samples;
  int sample_rate = 4000;

  int num_samples() const { return static_cast<int>(samples.size()); }
  double duration() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

/// Log-magnitude spectrogram frontend. With the 4 kHz default the analysis
/// window is 800 samples (0.2 s), the stride 400 (0.1 s), giving 401 bins at
/// 5 Hz spacing.
struct FrontendConfig {
  int sample_rate = 4000;
  double window_sec = 0.2;
  double stride_sec = 0.1;
  double log_floor = 1e-10;

  int window_samples() const;
  int stride_samples() const;
  int num_bins() const { return window_samples() / 2 + 1; }
};

/// w[k] = 0.54 - 0.46*cos(2*pi*k / (n-1)).
std::vector<double> hamming_window(int n);

/// Number of analysis frames for n_samples of audio: 1 + floor((N-W)/S).
/// Shorter-than-window input is zero-padded to a single frame.
int frame_count(int n_samples, int window, int stride);

/// [frames, bins] tensor of log(max(|DFT|, log_floor)).
Tensor spectrogram(const Waveform& wav, const FrontendConfig& cfg);

// 16-bit PCM mono RIFF files; samples map to [-1, 1) via s / 32768.
Waveform read_wav(const std::string& path);
void write_wav(const std::string& path, const Waveform& wav);

}  // namespace alcr::dsp
