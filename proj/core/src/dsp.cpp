#include "alcr/dsp.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>

namespace alcr::dsp {

namespace {

constexpr double kPi = 3.14159265358979323846;

using Matrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Direct-form DFT as two [window, bins] matrices so a whole utterance of
// frames becomes two matrix products.
struct DftTables {
  Matrix cos_t;
  Matrix sin_t;
};

std::shared_ptr<const DftTables> dft_tables(int window) {
  static std::mutex mu;
  static std::map<int, std::shared_ptr<const DftTables>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(window);
  if (it != cache.end()) return it->second;
  int bins = window / 2 + 1;
  auto tables = std::make_shared<DftTables>();
  tables->cos_t.resize(window, bins);
  tables->sin_t.resize(window, bins);
  for (int k = 0; k < window; ++k) {
    for (int f = 0; f < bins; ++f) {
      double angle = 2.0 * kPi * f * k / window;
      tables->cos_t(k, f) = std::cos(angle);
      tables->sin_t(k, f) = std::sin(angle);
    }
  }
  cache[window] = tables;
  return tables;
}

}  // namespace

int FrontendConfig::window_samples() const {
  return static_cast<int>(std::lround(window_sec * sample_rate));
}

int FrontendConfig::stride_samples() const {
  return static_cast<int>(std::lround(stride_sec * sample_rate));
}

std::vector<double> hamming_window(int n) {
  if (n < 1) throw std::invalid_argument("hamming_window: n must be positive");
  std::vector<double> w(static_cast<std::size_t>(n), 1.0);
  if (n == 1) return w;
  for (int k = 0; k < n; ++k)
    w[static_cast<std::size_t>(k)] = 0.54 - 0.46 * std::cos(2.0 * kPi * k / (n - 1));
  return w;
}

int frame_count(int n_samples, int window, int stride) {
  if (window <= 0 || stride <= 0)
    throw std::invalid_argument("frame_count: window and stride must be positive");
  if (n_samples <= window) return 1;
  return 1 + (n_samples - window) / stride;
}

Tensor spectrogram(const Waveform& wav, const FrontendConfig& cfg) {
  int window = cfg.window_samples();
  int stride = cfg.stride_samples();
  int bins = cfg.num_bins();
  int n = wav.num_samples();
  int frames = frame_count(n, window, stride);
  std::vector<double> ham = hamming_window(window);

  Matrix x(frames, window);
  for (int t = 0; t < frames; ++t) {
    int begin = t * stride;
    for (int k = 0; k < window; ++k) {
      int src = begin + k;
      double s = src < n ? wav.samples[static_cast<std::size_t>(src)] : 0.0;
      x(t, k) = s * ham[static_cast<std::size_t>(k)];
    }
  }

  auto tables = dft_tables(window);
  Matrix re = x * tables->cos_t;
  Matrix im = x * tables->sin_t;

  Tensor out({frames, bins});
  for (int t = 0; t < frames; ++t)
    for (int f = 0; f < bins; ++f) {
      double mag = std::hypot(re(t, f), im(t, f));
      out.at(t, f) = std::log(std::max(mag, cfg.log_floor));
    }
  return out;
}

namespace {

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 |
         static_cast<std::uint32_t>(p[3]) << 24;
}

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | p[1] << 8);
}

void put_u32(std::uint32_t v, std::string& out) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8 & 0xff));
  out.push_back(static_cast<char>(v >> 16 & 0xff));
  out.push_back(static_cast<char>(v >> 24 & 0xff));
}

void put_u16(std::uint16_t v, std::string& out) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8 & 0xff));
}

}  // namespace

Waveform read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_wav: cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw std::runtime_error("read_wav: not a RIFF/WAVE file: " + path);

  Waveform wav;
  bool have_fmt = false, have_data = false;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* hdr = bytes.data() + pos;
    std::uint32_t chunk_size = read_u32(hdr + 4);
    std::size_t body = pos + 8;
    if (body + chunk_size > bytes.size())
      throw std::runtime_error("read_wav: truncated chunk in " + path);
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (chunk_size < 16) throw std::runtime_error("read_wav: short fmt chunk");
      std::uint16_t format = read_u16(bytes.data() + body);
      std::uint16_t channels = read_u16(bytes.data() + body + 2);
      std::uint32_t rate = read_u32(bytes.data() + body + 4);
      std::uint16_t bits = read_u16(bytes.data() + body + 14);
      if (format != 1 || channels != 1 || bits != 16)
        throw std::runtime_error("read_wav: only 16-bit PCM mono supported: " + path);
      wav.sample_rate = static_cast<int>(rate);
      have_fmt = true;
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      std::size_t count = chunk_size / 2;
      wav.samples.resize(count);
      for (std::size_t i = 0; i < count; ++i) {
        std::uint16_t u = read_u16(bytes.data() + body + 2 * i);
        wav.samples[i] = static_cast<std::int16_t>(u) / 32768.0;
      }
      have_data = true;
    }
    pos = body + chunk_size + (chunk_size & 1);  // chunks are word-aligned
  }
  if (!have_fmt || !have_data)
    throw std::runtime_error("read_wav: missing fmt or data chunk: " + path);
  return wav;
}

void write_wav(const std::string& path, const Waveform& wav) {
  std::uint32_t data_bytes = static_cast<std::uint32_t>(wav.samples.size() * 2);
  std::string out;
  out.reserve(44 + data_bytes);
  out.append("RIFF");
  put_u32(36 + data_bytes, out);
  out.append("WAVE");
  out.append("fmt ");
  put_u32(16, out);
  put_u16(1, out);  // PCM
  put_u16(1, out);  // mono
  put_u32(static_cast<std::uint32_t>(wav.sample_rate), out);
  put_u32(static_cast<std::uint32_t>(wav.sample_rate) * 2, out);  // byte rate
  put_u16(2, out);   // block align
  put_u16(16, out);  // bits per sample
  out.append("data");
  put_u32(data_bytes, out);
  for (double s : wav.samples) {
    long v = std::lround(s * 32768.0);
    v = std::max(-32768L, std::min(32767L, v));
    put_u16(static_cast<std::uint16_t>(static_cast<std::int16_t>(v)), out);
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_wav: cannot open " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw std::runtime_error("write_wav: write failed: " + path);
}

}  // namespace alcr::dsp
