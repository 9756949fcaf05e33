#pragma once

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

namespace mgt::dsp {

// Pipeline-standard ingestion format: every clip entering feature extraction
// is mono 22,050 Hz and exactly 30 s (661,500 samples).
inline constexpr int kStandardRate = 22050;
inline constexpr double kClipSeconds = 30.0;
inline constexpr int64_t kClipSamples = 661500;

inline constexpr int kNfft = 2048;
inline constexpr int kNominalHop = 512;  // kept available in config; see kPipelineHop
inline constexpr int kNumMels = 128;
inline constexpr int kMelFrames = 640;
// Hop that makes a 30 s clip produce exactly kMelFrames frames:
// 1 + floor(661500 / 1035) = 640, spanning the full clip.
inline constexpr int kPipelineHop = 1035;
inline constexpr double kDbFloor = -80.0;
inline constexpr double kPowerEps = 1e-10;

struct AudioClip {
  std::vector<float> samples;  // amplitudes in [-1, 1]
  int sample_rate = 0;
  std::string source_id;
  double offset_s = 0.0;

  double duration_s() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
  bool pipeline_standard() const {
    return sample_rate == kStandardRate && static_cast<int64_t>(samples.size()) == kClipSamples;
  }
};

struct ComplexSpectrogram {
  // frames[t * n_bins + f], n_bins = n_fft/2 + 1
  std::vector<std::complex<double>> frames;
  int n_frames = 0;
  int n_bins = 0;
  int n_fft = 0;
  int hop = 0;
  int sample_rate = 0;

  std::complex<double> at(int t, int f) const {
    return frames[static_cast<size_t>(t) * n_bins + f];
  }
  // center frequency of FFT bin f in Hz
  double bin_hz(int f) const {
    return static_cast<double>(sample_rate) * f / n_fft;
  }
};

struct MelFilterBank {
  int n_mels = 0;
  int n_bins = 0;
  std::vector<double> weights;        // n_mels x n_bins, row-major
  std::vector<int> row_begin;         // first nonzero bin per row
  std::vector<int> row_end;           // one past last nonzero bin per row
  std::vector<double> mel_center_hz;  // strictly increasing
  double fmin_hz = 0.0;
  double fmax_hz = 0.0;

  double weight(int m, int f) const { return weights[static_cast<size_t>(m) * n_bins + f]; }
};

struct MelSpectrogram {
  int n_frames = 0;  // time steps
  int n_mels = 0;
  std::vector<float> values_db;  // n_frames x n_mels, row-major

  float at(int t, int m) const { return values_db[static_cast<size_t>(t) * n_mels + m]; }
};

// HTK-style mel scale.
double hz_to_mel(double hz);
double mel_to_hz(double mel);

// --- WAV I/O (RIFF/WAVE, 16-bit integer PCM, 1 or 2 channels) -------------

AudioClip load_wav(const std::string& path);
// 16-bit PCM mono writer used by dataset prep and the test fixtures.
void write_wav(const std::string& path, const std::vector<float>& samples, int sample_rate);

// --- transforms ------------------------------------------------------------

// Linear-interpolation resampling; output length floor(n * target / in_rate).
AudioClip resample(const AudioClip& clip, int target_rate);

// Hann window (periodic), reflection padding by n_fft/2 on both ends,
// T = 1 + floor(n_samples / hop) frames, bins 0..n_fft/2 kept.
ComplexSpectrogram stft(const AudioClip& clip, int n_fft, int hop);

// Triangular filters on an HTK mel grid, rows scaled by 2/(f_upper-f_lower).
MelFilterBank mel_filterbank(int n_mels, int n_fft, int sample_rate, double fmin_hz,
                             double fmax_hz);

// 10*log10(max(S,eps)/ref) with ref = max(S) (ref = eps when S is all zero),
// clamped below at kDbFloor. Input must be nonnegative.
void power_to_db(std::vector<double>& s);

// Full pipeline melspectrogram for a standard clip: exactly 640 x 128 dB.
MelSpectrogram mel_spectrogram(const AudioClip& clip);

// Internals shared with the feature extractors.
std::vector<double> hann_window(int n);
// Reflected index into a signal of length n (symmetric, no edge repeat).
int64_t reflect_index(int64_t i, int64_t n);
// |spec|^2 through the standard 128-band filterbank, then power_to_db.
MelSpectrogram mel_of_spectrogram(const ComplexSpectrogram& spec);
// Mel-band dB spectrogram at an arbitrary hop (tempo analysis needs a finer
// time grid than the 640-frame pipeline hop).
MelSpectrogram mel_spectrogram_at_hop(const AudioClip& clip, int hop);

}  // namespace mgt::dsp
