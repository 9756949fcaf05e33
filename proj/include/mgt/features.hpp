#pragma once

#include <array>
#include <vector>

#include "mgt/dsp.hpp"

namespace mgt::features {

// Fixed layout of the 51-dimensional clip descriptor. The positions are a
// wire contract (CSV columns, classical-model inputs); never reorder.
inline constexpr int kMfccOffset = 0;
inline constexpr int kMfccCount = 20;
inline constexpr int kChromaOffset = 20;  // pitch classes C..B
inline constexpr int kChromaCount = 12;
inline constexpr int kContrastOffset = 32;  // low band -> high band
inline constexpr int kContrastCount = 7;
inline constexpr int kCentroidIndex = 39;
inline constexpr int kBandwidthIndex = 40;
inline constexpr int kRolloffIndex = 41;
inline constexpr int kZcrIndex = 42;
inline constexpr int kTonnetzOffset = 43;
inline constexpr int kTonnetzCount = 6;
inline constexpr int kRmsIndex = 49;
inline constexpr int kTempoIndex = 50;
inline constexpr int kFeatureDim = 51;

// Feature family defaults; recorded in the run config.
inline constexpr double kContrastAlpha = 0.02;
inline constexpr double kContrastBaseHz = 200.0;
inline constexpr double kRolloffFraction = 0.85;
inline constexpr double kTempoMinBpm = 40.0;
inline constexpr double kTempoMaxBpm = 200.0;
// Tempo needs a finer onset grid than the 640-frame pipeline hop: at the
// pipeline hop the lag quantization alone exceeds +-2 BPM around 120.
inline constexpr int kTempoHop = 256;

using FeatureVector51 = std::array<double, kFeatureDim>;

// Row-major per-frame feature matrix (n_frames x dim).
struct FrameMatrix {
  int n_frames = 0;
  int dim = 0;
  std::vector<double> values;

  double at(int t, int d) const { return values[static_cast<size_t>(t) * dim + d]; }
  double& at(int t, int d) { return values[static_cast<size_t>(t) * dim + d]; }
};

struct SpectralShape {
  std::vector<double> centroid_hz;
  std::vector<double> bandwidth_hz;
  std::vector<double> rolloff_hz;
};

struct TempoEstimate {
  double bpm = 0.0;
  bool silent = false;
};

// Orthonormal DCT-II of each log-mel (dB) frame, first n_mfcc coefficients.
FrameMatrix mfcc(const dsp::AudioClip& clip, int n_mfcc = 20);
FrameMatrix mfcc_of_mel(const dsp::MelSpectrogram& mel, int n_mfcc = 20);

// Per-frame pitch-class energy profile (A440 equal temperament), max-normalized.
FrameMatrix chroma(const dsp::ComplexSpectrogram& spec);

// Peak-minus-valley log magnitude per octave band.
FrameMatrix spectral_contrast(const dsp::ComplexSpectrogram& spec, int n_bands = kContrastCount);

SpectralShape spectral_shape(const dsp::ComplexSpectrogram& spec,
                             double rolloff_frac = kRolloffFraction);

// Fraction of strictly sign-changing adjacent pairs per frame; framing is
// identical to the STFT grid (reflection-padded, length n_fft, same hop).
std::vector<double> zero_crossing_rate(const dsp::AudioClip& clip, int frame_len = dsp::kNfft,
                                       int hop = dsp::kPipelineHop);

std::vector<double> rms_energy(const dsp::AudioClip& clip, int frame_len = dsp::kNfft,
                               int hop = dsp::kPipelineHop);

// 6-d tonal centroid projection of L1-normalized chroma frames.
FrameMatrix tonnetz(const FrameMatrix& chroma_frames);

// Autocorrelation argmax of the half-wave-rectified mel-dB onset envelope,
// searched over lags whose BPM lies in [kTempoMinBpm, kTempoMaxBpm].
TempoEstimate tempo(const dsp::AudioClip& clip);

// Frame means of every family, assembled in the fixed layout above.
FeatureVector51 extract_features_51(const dsp::AudioClip& clip);

}  // namespace mgt::features
