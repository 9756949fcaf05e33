#include "mgt/features.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mgt/error.hpp"
#include "mgt/kernels.hpp"
#include "mgt/rng.hpp"

namespace mgt::features {

using dsp::AudioClip;
using dsp::ComplexSpectrogram;
using dsp::MelSpectrogram;

// ------------------------------------------------------------------- MFCC

FrameMatrix mfcc_of_mel(const MelSpectrogram& mel, int n_mfcc) {
  if (n_mfcc < 1 || n_mfcc > mel.n_mels) {
    fail(ErrorKind::data, "mfcc: n_mfcc must be in [1, n_mels]");
  }
  const int n = mel.n_mels;
  // Orthonormal DCT-II basis, n x n_mfcc: basis[j][k] = s(k) cos(pi (2j+1) k / 2n)
  std::vector<double> basis(static_cast<size_t>(n) * n_mfcc);
  const double s0 = std::sqrt(1.0 / n);
  const double sk = std::sqrt(2.0 / n);
  for (int j = 0; j < n; ++j) {
    for (int k = 0; k < n_mfcc; ++k) {
      const double scale = (k == 0) ? s0 : sk;
      basis[static_cast<size_t>(j) * n_mfcc + k] =
          scale * std::cos(kPi * (2.0 * j + 1.0) * k / (2.0 * n));
    }
  }
  std::vector<double> frames(static_cast<size_t>(mel.n_frames) * n);
  for (size_t i = 0; i < frames.size(); ++i) frames[i] = mel.values_db[i];

  FrameMatrix out;
  out.n_frames = mel.n_frames;
  out.dim = n_mfcc;
  out.values.assign(static_cast<size_t>(mel.n_frames) * n_mfcc, 0.0);
  kernels::ops().gemm_nn_f64(frames.data(), basis.data(), out.values.data(), mel.n_frames, n,
                             n_mfcc);
  return out;
}

FrameMatrix mfcc(const AudioClip& clip, int n_mfcc) {
  return mfcc_of_mel(dsp::mel_spectrogram(clip), n_mfcc);
}

// ----------------------------------------------------------------- chroma

FrameMatrix chroma(const ComplexSpectrogram& spec) {
  FrameMatrix out;
  out.n_frames = spec.n_frames;
  out.dim = kChromaCount;
  out.values.assign(static_cast<size_t>(spec.n_frames) * kChromaCount, 0.0);

  // bin -> pitch class map (A440 equal temperament, C = 0)
  std::vector<int> bin_class(static_cast<size_t>(spec.n_bins), -1);
  for (int k = 1; k < spec.n_bins; ++k) {
    const double f = spec.bin_hz(k);
    const auto note = static_cast<long long>(std::llround(12.0 * std::log2(f / 440.0))) + 69;
    bin_class[static_cast<size_t>(k)] = static_cast<int>(((note % 12) + 12) % 12);
  }

  for (int t = 0; t < spec.n_frames; ++t) {
    double* row = out.values.data() + static_cast<size_t>(t) * kChromaCount;
    for (int k = 1; k < spec.n_bins; ++k) {
      row[bin_class[static_cast<size_t>(k)]] += std::norm(spec.at(t, k));
    }
    const double peak = *std::max_element(row, row + kChromaCount);
    if (peak > 0.0) {
      for (int c = 0; c < kChromaCount; ++c) row[c] /= peak;
    }
  }
  return out;
}

// ------------------------------------------------------------ contrast

FrameMatrix spectral_contrast(const ComplexSpectrogram& spec, int n_bands) {
  if (n_bands < 1) fail(ErrorKind::data, "spectral_contrast: n_bands must be >= 1");
  const double nyquist = spec.sample_rate / 2.0;

  // octave-spaced edges: [0, 200), [200, 400), ... last band closes at Nyquist
  std::vector<double> upper(static_cast<size_t>(n_bands));
  for (int b = 0; b < n_bands - 1; ++b) {
    upper[static_cast<size_t>(b)] = kContrastBaseHz * std::pow(2.0, b);
  }
  upper[static_cast<size_t>(n_bands) - 1] = nyquist;

  std::vector<std::vector<int>> band_bins(static_cast<size_t>(n_bands));
  for (int k = 0; k < spec.n_bins; ++k) {
    const double f = spec.bin_hz(k);
    int b = 0;
    while (b < n_bands - 1 && f >= upper[static_cast<size_t>(b)]) ++b;
    if (f <= nyquist) band_bins[static_cast<size_t>(b)].push_back(k);
  }
  for (int b = 0; b < n_bands; ++b) {
    if (band_bins[static_cast<size_t>(b)].empty()) {
      fail(ErrorKind::data, "spectral_contrast: band " + std::to_string(b) +
                                " has no FFT bins at this resolution");
    }
  }

  FrameMatrix out;
  out.n_frames = spec.n_frames;
  out.dim = n_bands;
  out.values.assign(static_cast<size_t>(spec.n_frames) * n_bands, 0.0);
  std::vector<double> mags;
  for (int t = 0; t < spec.n_frames; ++t) {
    for (int b = 0; b < n_bands; ++b) {
      const auto& bins = band_bins[static_cast<size_t>(b)];
      mags.clear();
      for (int k : bins) mags.push_back(std::abs(spec.at(t, k)) + 1e-10);
      std::sort(mags.begin(), mags.end());
      const auto cnt = std::max<size_t>(1, static_cast<size_t>(kContrastAlpha * mags.size()));
      double valley = 0.0, peak = 0.0;
      for (size_t i = 0; i < cnt; ++i) {
        valley += mags[i];
        peak += mags[mags.size() - 1 - i];
      }
      valley /= static_cast<double>(cnt);
      peak /= static_cast<double>(cnt);
      out.at(t, b) = std::log(peak) - std::log(valley);
    }
  }
  return out;
}

// --------------------------------------------------------------- shape

SpectralShape spectral_shape(const ComplexSpectrogram& spec, double rolloff_frac) {
  if (!(rolloff_frac > 0.0 && rolloff_frac <= 1.0)) {
    fail(ErrorKind::data, "spectral_shape: rolloff fraction must be in (0, 1]");
  }
  SpectralShape out;
  out.centroid_hz.resize(static_cast<size_t>(spec.n_frames));
  out.bandwidth_hz.resize(static_cast<size_t>(spec.n_frames));
  out.rolloff_hz.resize(static_cast<size_t>(spec.n_frames));

  std::vector<double> mag(static_cast<size_t>(spec.n_bins));
  for (int t = 0; t < spec.n_frames; ++t) {
    double total = 0.0, weighted = 0.0;
    for (int k = 0; k < spec.n_bins; ++k) {
      mag[static_cast<size_t>(k)] = std::abs(spec.at(t, k));
      total += mag[static_cast<size_t>(k)];
      weighted += mag[static_cast<size_t>(k)] * spec.bin_hz(k);
    }
    if (total <= 0.0) {
      out.centroid_hz[static_cast<size_t>(t)] = 0.0;
      out.bandwidth_hz[static_cast<size_t>(t)] = 0.0;
      out.rolloff_hz[static_cast<size_t>(t)] = 0.0;
      continue;
    }
    const double centroid = weighted / total;
    double spread = 0.0;
    for (int k = 0; k < spec.n_bins; ++k) {
      const double d = spec.bin_hz(k) - centroid;
      spread += mag[static_cast<size_t>(k)] * d * d;
    }
    double cum = 0.0;
    int roll_bin = spec.n_bins - 1;
    const double target = rolloff_frac * total;
    for (int k = 0; k < spec.n_bins; ++k) {
      cum += mag[static_cast<size_t>(k)];
      if (cum >= target) {
        roll_bin = k;
        break;
      }
    }
    out.centroid_hz[static_cast<size_t>(t)] = centroid;
    out.bandwidth_hz[static_cast<size_t>(t)] = std::sqrt(spread / total);
    out.rolloff_hz[static_cast<size_t>(t)] = spec.bin_hz(roll_bin);
  }
  return out;
}

// ------------------------------------------------------------ zcr / rms

namespace {

template <typename Fn>
std::vector<double> framed_reduce(const AudioClip& clip, int frame_len, int hop, Fn&& fn) {
  if (clip.samples.empty()) fail(ErrorKind::data, "framed feature: empty clip");
  if (frame_len < 2 || hop < 1) fail(ErrorKind::data, "framed feature: bad framing");
  const auto n = static_cast<int64_t>(clip.samples.size());
  const int n_frames = static_cast<int>(1 + n / hop);
  const int pad = frame_len / 2;
  std::vector<double> out(static_cast<size_t>(n_frames));
  std::vector<float> frame(static_cast<size_t>(frame_len));
  for (int t = 0; t < n_frames; ++t) {
    const int64_t start = static_cast<int64_t>(t) * hop - pad;
    for (int j = 0; j < frame_len; ++j) {
      frame[static_cast<size_t>(j)] =
          clip.samples[static_cast<size_t>(dsp::reflect_index(start + j, n))];
    }
    out[static_cast<size_t>(t)] = fn(frame);
  }
  return out;
}

}  // namespace

std::vector<double> zero_crossing_rate(const AudioClip& clip, int frame_len, int hop) {
  return framed_reduce(clip, frame_len, hop, [frame_len](const std::vector<float>& frame) {
    int crossings = 0;
    // zero counts as nonnegative
    bool prev = frame[0] >= 0.0f;
    for (int j = 1; j < frame_len; ++j) {
      const bool cur = frame[static_cast<size_t>(j)] >= 0.0f;
      crossings += (cur != prev);
      prev = cur;
    }
    return static_cast<double>(crossings) / (frame_len - 1);
  });
}

std::vector<double> rms_energy(const AudioClip& clip, int frame_len, int hop) {
  return framed_reduce(clip, frame_len, hop, [frame_len](const std::vector<float>& frame) {
    double acc = 0.0;
    for (float v : frame) acc += static_cast<double>(v) * v;
    return std::sqrt(acc / frame_len);
  });
}

// --------------------------------------------------------------- tonnetz

FrameMatrix tonnetz(const FrameMatrix& chroma_frames) {
  if (chroma_frames.dim != kChromaCount) {
    fail(ErrorKind::data, "tonnetz: expected 12 chroma columns");
  }
  for (double v : chroma_frames.values) {
    if (v < 0.0) fail(ErrorKind::data, "tonnetz: chroma must be nonnegative");
  }
  // Basis rows: (sin, cos) pairs on the circles of fifths, minor thirds and
  // major thirds, with radii 1, 1, 0.5.
  constexpr double kRadii[3] = {1.0, 1.0, 0.5};
  constexpr double kStep[3] = {7.0 * kPi / 6.0, 3.0 * kPi / 2.0, 2.0 * kPi / 3.0};
  double basis[kTonnetzCount][kChromaCount];
  for (int p = 0; p < kChromaCount; ++p) {
    for (int circle = 0; circle < 3; ++circle) {
      basis[2 * circle][p] = kRadii[circle] * std::sin(kStep[circle] * p);
      basis[2 * circle + 1][p] = kRadii[circle] * std::cos(kStep[circle] * p);
    }
  }

  FrameMatrix out;
  out.n_frames = chroma_frames.n_frames;
  out.dim = kTonnetzCount;
  out.values.assign(static_cast<size_t>(out.n_frames) * kTonnetzCount, 0.0);
  for (int t = 0; t < chroma_frames.n_frames; ++t) {
    double l1 = 0.0;
    for (int p = 0; p < kChromaCount; ++p) l1 += chroma_frames.at(t, p);
    if (l1 <= 0.0) continue;  // zero frame stays zero
    for (int d = 0; d < kTonnetzCount; ++d) {
      double acc = 0.0;
      for (int p = 0; p < kChromaCount; ++p) acc += basis[d][p] * chroma_frames.at(t, p) / l1;
      out.at(t, d) = acc;
    }
  }
  return out;
}

// ----------------------------------------------------------------- tempo

TempoEstimate tempo(const AudioClip& clip) {
  if (!clip.pipeline_standard()) {
    fail(ErrorKind::data, "tempo requires a pipeline-standard clip; resample and segment first");
  }
  const MelSpectrogram mel = dsp::mel_spectrogram_at_hop(clip, kTempoHop);
  const int n = mel.n_frames;
  std::vector<double> env(static_cast<size_t>(n), 0.0);
  for (int t = 1; t < n; ++t) {
    double acc = 0.0;
    for (int m = 0; m < mel.n_mels; ++m) {
      const double rise = static_cast<double>(mel.at(t, m)) - mel.at(t - 1, m);
      if (rise > 0.0) acc += rise;
    }
    env[static_cast<size_t>(t)] = acc;
  }
  const bool silent = std::all_of(env.begin(), env.end(), [](double v) { return v == 0.0; });
  if (silent) return {0.0, true};

  const double mean = std::accumulate(env.begin(), env.end(), 0.0) / n;
  for (double& v : env) v -= mean;

  const double frames_per_sec = static_cast<double>(dsp::kStandardRate) / kTempoHop;
  const int lag_min = std::max(1, static_cast<int>(std::ceil(frames_per_sec * 60.0 / kTempoMaxBpm)));
  const int lag_max = std::min(n - 1, static_cast<int>(frames_per_sec * 60.0 / kTempoMinBpm));
  if (lag_min > lag_max) return {0.0, true};

  int best_lag = lag_min;
  double best = -std::numeric_limits<double>::infinity();
  for (int lag = lag_min; lag <= lag_max; ++lag) {
    const double ac = kernels::ops().dot_f64(env.data(), env.data() + lag,
                                             static_cast<size_t>(n - lag));
    if (ac > best) {
      best = ac;
      best_lag = lag;
    }
  }
  return {60.0 * frames_per_sec / best_lag, false};
}

// ------------------------------------------------------------- assembly

FeatureVector51 extract_features_51(const AudioClip& clip) {
  if (!clip.pipeline_standard()) {
    fail(ErrorKind::data,
         "extract_features_51 requires a pipeline-standard clip; resample and segment first");
  }
  const ComplexSpectrogram spec = dsp::stft(clip, dsp::kNfft, dsp::kPipelineHop);
  const MelSpectrogram mel = dsp::mel_of_spectrogram(spec);

  const FrameMatrix mf = mfcc_of_mel(mel, kMfccCount);
  const FrameMatrix ch = chroma(spec);
  const FrameMatrix sc = spectral_contrast(spec, kContrastCount);
  const SpectralShape shape = spectral_shape(spec, kRolloffFraction);
  const std::vector<double> zcr = zero_crossing_rate(clip);
  const std::vector<double> rms = rms_energy(clip);
  const FrameMatrix tn = tonnetz(ch);
  const TempoEstimate tp = tempo(clip);

  auto column_mean = [](const FrameMatrix& m, int d) {
    double acc = 0.0;
    for (int t = 0; t < m.n_frames; ++t) acc += m.at(t, d);
    return acc / m.n_frames;
  };
  auto vec_mean = [](const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  };

  FeatureVector51 out{};
  for (int d = 0; d < kMfccCount; ++d) out[static_cast<size_t>(kMfccOffset + d)] = column_mean(mf, d);
  for (int d = 0; d < kChromaCount; ++d) out[static_cast<size_t>(kChromaOffset + d)] = column_mean(ch, d);
  for (int d = 0; d < kContrastCount; ++d) out[static_cast<size_t>(kContrastOffset + d)] = column_mean(sc, d);
  out[kCentroidIndex] = vec_mean(shape.centroid_hz);
  out[kBandwidthIndex] = vec_mean(shape.bandwidth_hz);
  out[kRolloffIndex] = vec_mean(shape.rolloff_hz);
  out[kZcrIndex] = vec_mean(zcr);
  for (int d = 0; d < kTonnetzCount; ++d) out[static_cast<size_t>(kTonnetzOffset + d)] = column_mean(tn, d);
  out[kRmsIndex] = vec_mean(rms);
  out[kTempoIndex] = tp.bpm;
  return out;
}

}  // namespace mgt::features
