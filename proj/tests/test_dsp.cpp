#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <fstream>

#include "helpers.hpp"
#include "mgt/dsp.hpp"
#include "mgt/error.hpp"
#include "mgt/rng.hpp"

using namespace mgt;
using namespace mgt::dsp;
using testutil::TempDir;

namespace {

void append_u32le(std::string& s, uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
void append_u16le(std::string& s, uint16_t v) {
  s.push_back(static_cast<char>(v & 0xFF));
  s.push_back(static_cast<char>((v >> 8) & 0xFF));
}

// Hand-assembled RIFF/WAVE file, int16 PCM.
std::string make_wav_bytes(const std::vector<int16_t>& frames, uint16_t channels,
                           uint32_t sample_rate, uint16_t audio_format = 1,
                           uint16_t bits = 16) {
  std::string s;
  const uint32_t data_len = static_cast<uint32_t>(frames.size() * 2);
  s += "RIFF";
  append_u32le(s, 36 + data_len);
  s += "WAVE";
  s += "fmt ";
  append_u32le(s, 16);
  append_u16le(s, audio_format);
  append_u16le(s, channels);
  append_u32le(s, sample_rate);
  append_u32le(s, sample_rate * channels * 2);
  append_u16le(s, static_cast<uint16_t>(channels * 2));
  append_u16le(s, bits);
  s += "data";
  append_u32le(s, data_len);
  for (int16_t f : frames) append_u16le(s, static_cast<uint16_t>(f));
  return s;
}

void write_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

double rms_of(const std::vector<float>& v) {
  double acc = 0.0;
  for (float x : v) acc += static_cast<double>(x) * x;
  return std::sqrt(acc / static_cast<double>(v.size()));
}

}  // namespace

TEST_CASE("load_wav: zero mono clip") {
  TempDir tmp("wav");
  std::vector<int16_t> frames(22050, 0);
  write_bytes(tmp.file("z.wav"), make_wav_bytes(frames, 1, 22050));
  AudioClip clip = load_wav(tmp.file("z.wav"));
  CHECK(clip.sample_rate == 22050);
  CHECK(clip.samples.size() == 22050);
  for (float s : clip.samples) CHECK(s == 0.0f);
}

TEST_CASE("load_wav: symmetric stereo downmixes to silence") {
  TempDir tmp("wav");
  std::vector<int16_t> frames;
  for (int i = 0; i < 100; ++i) {
    frames.push_back(16384);
    frames.push_back(-16384);
  }
  write_bytes(tmp.file("s.wav"), make_wav_bytes(frames, 2, 44100));
  AudioClip clip = load_wav(tmp.file("s.wav"));
  CHECK(clip.sample_rate == 44100);
  CHECK(clip.samples.size() == 100);
  for (float s : clip.samples) CHECK(s == 0.0f);
}

TEST_CASE("load_wav: byte-level decode of known int16 values") {
  TempDir tmp("wav");
  const std::vector<int16_t> vals = {0, 1, -1, 32767, -32768, 12345, -12345, 256};
  write_bytes(tmp.file("k.wav"), make_wav_bytes(vals, 1, 8000));
  AudioClip clip = load_wav(tmp.file("k.wav"));
  REQUIRE(clip.samples.size() == vals.size());
  for (size_t i = 0; i < vals.size(); ++i) {
    // int16/32768 is exactly representable in float
    CHECK(clip.samples[i] == static_cast<float>(vals[i] / 32768.0));
  }
}

TEST_CASE("load_wav: error paths") {
  TempDir tmp("wav");
  CHECK_THROWS_AS(load_wav(tmp.file("missing.wav")), Error);

  write_bytes(tmp.file("junk.wav"), "this is not a wav file at all............");
  CHECK_THROWS_WITH_AS(load_wav(tmp.file("junk.wav")),
                       doctest::Contains("malformed wav header"), Error);

  // float PCM (format 3) names the offending field
  write_bytes(tmp.file("f32.wav"), make_wav_bytes({0, 0}, 1, 8000, /*audio_format=*/3));
  CHECK_THROWS_WITH_AS(load_wav(tmp.file("f32.wav")), doctest::Contains("audio_format=3"), Error);

  write_bytes(tmp.file("b8.wav"), make_wav_bytes({0, 0}, 1, 8000, 1, /*bits=*/8));
  CHECK_THROWS_WITH_AS(load_wav(tmp.file("b8.wav")),
                       doctest::Contains("bits_per_sample=8"), Error);
}

TEST_CASE("wav roundtrip through writer") {
  TempDir tmp("wav");
  Rng rng(3);
  std::vector<float> samples(4000);
  for (auto& s : samples) {
    s = static_cast<float>(static_cast<int16_t>(rng.below(65536)) / 32768.0);
  }
  write_wav(tmp.file("r.wav"), samples, 22050);
  AudioClip clip = load_wav(tmp.file("r.wav"));
  REQUIRE(clip.samples.size() == samples.size());
  for (size_t i = 0; i < samples.size(); ++i) CHECK(clip.samples[i] == samples[i]);
}

TEST_CASE("resample: constant signal halves in length") {
  AudioClip clip;
  clip.sample_rate = 44100;
  clip.samples.assign(44100, 0.25f);
  AudioClip out = resample(clip, 22050);
  CHECK(out.sample_rate == 22050);
  CHECK(out.samples.size() == 22050);
  for (float s : out.samples) CHECK(s == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("resample: identity when rates match") {
  AudioClip clip = testutil::sine_clip(440.0, 0.3, 0.5, 22050);
  AudioClip out = resample(clip, 22050);
  CHECK(out.samples == clip.samples);
}

TEST_CASE("resample: sine against analytic oracle") {
  // 1 kHz sine at 8 kHz upsampled to 22,050 Hz. Linear interpolation
  // attenuates a tone at f/fs = 0.125; the oracle below computes the exact
  // expected per-sample values, and the RMS is checked against the value the
  // oracle predicts (~0.95 * A/sqrt(2)), not the un-interpolated ideal.
  const double amp = 0.5;
  AudioClip in = testutil::sine_clip(1000.0, amp, 1.0, 8000);
  AudioClip out = resample(in, 22050);
  CHECK(out.samples.size() == 22050);

  // oracle: evaluate the interpolation analytically at output timestamps
  std::vector<float> expect(out.samples.size());
  const double ratio = 8000.0 / 22050.0;
  double acc = 0.0;
  for (size_t i = 0; i < expect.size(); ++i) {
    const double pos = static_cast<double>(i) * ratio;
    const auto i0 = static_cast<int64_t>(pos);
    const int64_t i1 = std::min<int64_t>(i0 + 1, static_cast<int64_t>(in.samples.size()) - 1);
    const double frac = pos - static_cast<double>(i0);
    const double s0 = amp * std::sin(2.0 * kPi * 1000.0 * static_cast<double>(i0) / 8000.0);
    const double s1 = amp * std::sin(2.0 * kPi * 1000.0 * static_cast<double>(i1) / 8000.0);
    const double v = (1.0 - frac) * s0 + frac * s1;
    expect[i] = static_cast<float>(v);
    acc += v * v;
    // pointwise: interpolation error of a 1 kHz tone sampled at 8 kHz
    CHECK(std::fabs(out.samples[i] - v) < 0.04 * amp + 1e-6);
  }
  const double oracle_rms = std::sqrt(acc / static_cast<double>(expect.size()));
  CHECK(rms_of(out.samples) == doctest::Approx(oracle_rms).epsilon(0.01));
  // documented attenuation relative to the ideal A/sqrt(2)
  CHECK(oracle_rms / (amp / std::sqrt(2.0)) == doctest::Approx(0.9499).epsilon(0.005));
}

TEST_CASE("stft: zero clip has zero magnitude everywhere") {
  AudioClip clip = testutil::silence_clip(0.25, 22050);
  ComplexSpectrogram spec = stft(clip, 512, 128);
  for (const auto& v : spec.frames) CHECK(std::abs(v) == 0.0);
}

TEST_CASE("stft: constant clip bin-0 equals window sum (direct DFT oracle)") {
  AudioClip clip;
  clip.sample_rate = 22050;
  clip.samples.assign(8192, 1.0f);
  const int n_fft = 2048;
  ComplexSpectrogram spec = stft(clip, n_fft, 512);

  // oracle: window the (reflection-padded) constant frame and DFT it directly
  std::vector<double> w = hann_window(n_fft);
  std::vector<double> frame(w.begin(), w.end());  // constant 1 * window
  auto ref = testutil::dft_direct(frame);
  double win_sum = 0.0;
  for (double v : w) win_sum += v;
  CHECK(win_sum == doctest::Approx(n_fft / 2.0).epsilon(1e-12));

  // every frame of a constant signal is identical (reflection keeps it constant)
  for (int t = 0; t < spec.n_frames; ++t) {
    CHECK(std::abs(spec.at(t, 0)) == doctest::Approx(win_sum).epsilon(1e-9));
    for (int f = 0; f < 8; ++f) {
      CHECK(std::abs(spec.at(t, f)) == doctest::Approx(std::abs(ref[f])).epsilon(1e-9).scale(1.0));
    }
  }
}

TEST_CASE("stft: frame count for the standard clip at the nominal hop") {
  AudioClip clip = testutil::silence_clip(30.0, kStandardRate);
  REQUIRE(clip.samples.size() == 661500);
  ComplexSpectrogram spec = stft(clip, 2048, 512);
  // 1 + floor(661500/512): 512*1291 = 660992 <= 661500 < 661504 = 512*1292
  CHECK(spec.n_frames == 1 + 661500 / 512);
  CHECK(spec.n_frames == 1292);
  CHECK(spec.n_bins == 1025);
}

TEST_CASE("stft: frame-count formula matches direct enumeration (randomized)") {
  Rng rng(11);
  for (int trial = 0; trial < 60; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(5000));
    const int n_fft = 64;
    const int hop = 1 + static_cast<int>(rng.below(n_fft));
    AudioClip clip;
    clip.sample_rate = 8000;
    clip.samples.assign(static_cast<size_t>(n), 0.1f);
    ComplexSpectrogram spec = stft(clip, n_fft, hop);
    // enumerate frame starts t*hop while they stay within the signal
    int count = 0;
    for (int64_t start = 0; start <= n; start += hop) ++count;
    CHECK(spec.n_frames == count);
    CHECK(spec.n_frames == 1 + n / hop);
  }
}

TEST_CASE("stft: magnitudes scale linearly with amplitude") {
  Rng rng(21);
  AudioClip a;
  a.sample_rate = 22050;
  a.samples.resize(3000);
  for (auto& s : a.samples) s = static_cast<float>(rng.uniform(-0.4, 0.4));
  AudioClip b = a;
  const float scale = 2.0f;  // power of two keeps the scaling exact in float
  for (auto& s : b.samples) s *= scale;
  ComplexSpectrogram sa = stft(a, 512, 256);
  ComplexSpectrogram sb = stft(b, 512, 256);
  for (size_t i = 0; i < sa.frames.size(); ++i) {
    const double ma = std::abs(sa.frames[i]) * scale;
    const double mb = std::abs(sb.frames[i]);
    CHECK(std::fabs(ma - mb) <= 1e-9 * std::max(1.0, mb));
  }
}

TEST_CASE("stft: matches direct DFT on random 256-sample signals") {
  Rng rng(31);
  for (int trial = 0; trial < 5; ++trial) {
    const int n_fft = 256;
    AudioClip clip;
    clip.sample_rate = 8000;
    clip.samples.resize(1024);
    for (auto& s : clip.samples) s = static_cast<float>(rng.uniform(-1.0, 1.0));
    ComplexSpectrogram spec = stft(clip, n_fft, 256);

    const std::vector<double> w = hann_window(n_fft);
    const int64_t n = static_cast<int64_t>(clip.samples.size());
    for (int t = 0; t < spec.n_frames; ++t) {
      std::vector<double> frame(static_cast<size_t>(n_fft));
      for (int j = 0; j < n_fft; ++j) {
        const int64_t src = reflect_index(static_cast<int64_t>(t) * 256 - n_fft / 2 + j, n);
        frame[static_cast<size_t>(j)] = clip.samples[static_cast<size_t>(src)] *
                                        w[static_cast<size_t>(j)];
      }
      auto ref = testutil::dft_direct(frame);
      for (int f = 0; f < spec.n_bins; ++f) {
        const double err = std::abs(spec.at(t, f) - ref[static_cast<size_t>(f)]);
        CHECK(err <= 1e-6 * std::max(1.0, std::abs(ref[static_cast<size_t>(f)])));
      }
    }
  }
}

TEST_CASE("stft: precondition violations") {
  AudioClip clip = testutil::silence_clip(0.1, 8000);
  CHECK_THROWS_AS(stft(clip, 1000, 100), Error);  // not a power of two
  CHECK_THROWS_AS(stft(clip, 256, 0), Error);
  CHECK_THROWS_AS(stft(clip, 256, 512), Error);  // hop > n_fft
  AudioClip empty;
  empty.sample_rate = 8000;
  CHECK_THROWS_AS(stft(empty, 256, 128), Error);
}

TEST_CASE("mel_filterbank: pipeline shape and positivity") {
  MelFilterBank fb = mel_filterbank(128, 2048, 22050, 0.0, 11025.0);
  CHECK(fb.n_mels == 128);
  CHECK(fb.n_bins == 1025);
  CHECK(fb.weights.size() == 128u * 1025u);
  for (double w : fb.weights) CHECK(w >= 0.0);
  for (int m = 0; m < 128; ++m) {
    CHECK(fb.row_begin[static_cast<size_t>(m)] < fb.row_end[static_cast<size_t>(m)]);
    double row_sum = 0.0;
    for (int k = 0; k < fb.n_bins; ++k) row_sum += fb.weight(m, k);
    CHECK(row_sum > 0.0);
  }
}

TEST_CASE("mel_filterbank: centers match an independent mel-formula oracle") {
  const double fmin = 0.0, fmax = 11025.0;
  MelFilterBank fb = mel_filterbank(128, 2048, 22050, fmin, fmax);
  // independent evaluation of the mel scale and its inverse
  auto mel_of = [](double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); };
  auto hz_of = [](double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); };
  const double mlo = mel_of(fmin), mhi = mel_of(fmax);
  for (int m = 0; m < 128; ++m) {
    const double expect = hz_of(mlo + (mhi - mlo) * (m + 1) / 129.0);
    CHECK(fb.mel_center_hz[static_cast<size_t>(m)] == doctest::Approx(expect).epsilon(1e-12));
    if (m > 0) CHECK(fb.mel_center_hz[static_cast<size_t>(m)] > fb.mel_center_hz[static_cast<size_t>(m) - 1]);
  }
  CHECK(fb.mel_center_hz.front() > fmin);
  CHECK(fb.mel_center_hz.back() < fmax);
}

TEST_CASE("mel_filterbank: rows are unimodal (randomized configs)") {
  Rng rng(41);
  for (int trial = 0; trial < 10; ++trial) {
    const int n_mels = 8 + static_cast<int>(rng.below(40));
    const int n_fft = 1 << (9 + static_cast<int>(rng.below(3)));
    const int sr = 16000 + static_cast<int>(rng.below(3)) * 4000;
    const double fmin = rng.uniform(0.0, 300.0);
    const double fmax = sr / 2.0 - rng.uniform(0.0, 500.0);
    MelFilterBank fb = mel_filterbank(n_mels, n_fft, sr, fmin, fmax);
    for (int m = 0; m < n_mels; ++m) {
      int peak = 0;
      for (int k = 1; k < fb.n_bins; ++k) {
        if (fb.weight(m, k) > fb.weight(m, peak)) peak = k;
      }
      for (int k = 1; k <= peak; ++k) CHECK(fb.weight(m, k) >= fb.weight(m, k - 1) - 1e-15);
      for (int k = peak + 1; k < fb.n_bins; ++k) CHECK(fb.weight(m, k) <= fb.weight(m, k - 1) + 1e-15);
    }
  }
}

TEST_CASE("mel_filterbank: resolution error when filters lose support") {
  CHECK_THROWS_WITH_AS(mel_filterbank(128, 64, 22050, 0.0, 11025.0),
                       doctest::Contains("empty support"), Error);
  CHECK_THROWS_AS(mel_filterbank(0, 2048, 22050, 0.0, 11025.0), Error);
  CHECK_THROWS_AS(mel_filterbank(128, 2048, 22050, 500.0, 100.0), Error);
  CHECK_THROWS_AS(mel_filterbank(128, 2048, 22050, 0.0, 20000.0), Error);
}

TEST_CASE("power_to_db: reference and floor behavior") {
  std::vector<double> s = {4.0, 0.04, 4e-10, 0.0};
  power_to_db(s);
  CHECK(s[0] == doctest::Approx(0.0));           // max maps to 0 dB
  CHECK(s[1] == doctest::Approx(-20.0));         // ref/100 -> -20 dB
  CHECK(s[2] == doctest::Approx(-80.0));         // below ref/1e8 clamps to the floor
  CHECK(s[3] == doctest::Approx(-80.0));

  std::vector<double> zeros(16, 0.0);
  power_to_db(zeros);
  for (double v : zeros) CHECK(v == doctest::Approx(0.0));  // all-zero input: ref = eps

  std::vector<double> bad = {1.0, -0.5};
  CHECK_THROWS_AS(power_to_db(bad), Error);
}

TEST_CASE("mel_spectrogram: standard clip is exactly 640 x 128") {
  AudioClip clip = testutil::standard_sine(440.0);
  MelSpectrogram mel = mel_spectrogram(clip);
  CHECK(mel.n_frames == 640);
  CHECK(mel.n_mels == 128);
  CHECK(mel.values_db.size() == 640u * 128u);
  float maxv = -1e9f, minv = 1e9f;
  for (float v : mel.values_db) {
    maxv = std::max(maxv, v);
    minv = std::min(minv, v);
  }
  CHECK(maxv == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(minv >= -80.0f);
}

TEST_CASE("mel_spectrogram: silence maps to a uniform dB plane") {
  // All-zero power uses ref = eps, so the dB plane is uniformly 0 (the
  // reference-to-max invariant holds: max entry is 0 dB).
  AudioClip clip = testutil::silence_clip(30.0, kStandardRate);
  MelSpectrogram mel = mel_spectrogram(clip);
  for (float v : mel.values_db) CHECK(v == 0.0f);
}

TEST_CASE("mel_spectrogram: sine energy lands in the band nearest its frequency") {
  // oracle: filterbank center lookup. The tone is placed on the center of
  // the band nearest 1 kHz; a tone exactly between two centers can tip
  // either way because the per-band area normalization differs.
  MelFilterBank fb = mel_filterbank(128, 2048, 22050, 0.0, 11025.0);
  int nearest = 0;
  for (int m = 1; m < 128; ++m) {
    if (std::fabs(fb.mel_center_hz[static_cast<size_t>(m)] - 1000.0) <
        std::fabs(fb.mel_center_hz[static_cast<size_t>(nearest)] - 1000.0)) {
      nearest = m;
    }
  }
  const double freq = fb.mel_center_hz[static_cast<size_t>(nearest)];
  AudioClip clip = testutil::standard_sine(freq);
  MelSpectrogram mel = mel_spectrogram(clip);
  for (int t = 0; t < mel.n_frames; ++t) {
    int argmax = 0;
    for (int m = 1; m < 128; ++m) {
      if (mel.at(t, m) > mel.at(t, argmax)) argmax = m;
    }
    CHECK(argmax == nearest);
  }
}

TEST_CASE("mel_spectrogram: deterministic bit-for-bit") {
  AudioClip clip = testutil::standard_sine(523.25, 0.4);
  MelSpectrogram a = mel_spectrogram(clip);
  MelSpectrogram b = mel_spectrogram(clip);
  CHECK(a.values_db == b.values_db);
}

TEST_CASE("mel_spectrogram: rejects non-standard clips") {
  AudioClip short_clip = testutil::silence_clip(10.0, kStandardRate);
  CHECK_THROWS_WITH_AS(mel_spectrogram(short_clip), doctest::Contains("pipeline-standard"), Error);
  AudioClip wrong_rate = testutil::silence_clip(30.0, 44100);
  CHECK_THROWS_AS(mel_spectrogram(wrong_rate), Error);
}
