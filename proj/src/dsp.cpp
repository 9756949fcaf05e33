#include "mgt/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "mgt/error.hpp"
#include "mgt/kernels.hpp"
#include "mgt/rng.hpp"

namespace mgt::dsp {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// ----------------------------------------------------------------- WAV I/O

namespace {

uint32_t read_u32le(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}
uint16_t read_u16le(const uint8_t* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

void put_u32le(std::string& out, uint32_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
  out.push_back(static_cast<char>((v >> 16) & 0xFF));
  out.push_back(static_cast<char>((v >> 24) & 0xFF));
}
void put_u16le(std::string& out, uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
}

}  // namespace

AudioClip load_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open wav file: " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const uint8_t* p = reinterpret_cast<const uint8_t*>(bytes.data());
  const size_t size = bytes.size();

  if (size < 12 || std::memcmp(p, "RIFF", 4) != 0 || std::memcmp(p + 8, "WAVE", 4) != 0) {
    fail(ErrorKind::format, "malformed wav header (not RIFF/WAVE): " + path);
  }

  bool have_fmt = false;
  uint16_t audio_format = 0, channels = 0, bits = 0;
  uint32_t sample_rate = 0;
  const uint8_t* data_ptr = nullptr;
  uint32_t data_len = 0;

  size_t off = 12;
  while (off + 8 <= size) {
    const char* id = reinterpret_cast<const char*>(p + off);
    uint32_t chunk_len = read_u32le(p + off + 4);
    off += 8;
    if (off + chunk_len > size) {
      fail(ErrorKind::format, "truncated wav chunk '" + std::string(id, 4) + "': " + path);
    }
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (chunk_len < 16) fail(ErrorKind::format, "fmt chunk too short: " + path);
      audio_format = read_u16le(p + off);
      channels = read_u16le(p + off + 2);
      sample_rate = read_u32le(p + off + 4);
      bits = read_u16le(p + off + 14);
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      data_ptr = p + off;
      data_len = chunk_len;
    }
    off += chunk_len + (chunk_len & 1);  // chunks are word-aligned
  }

  if (!have_fmt || data_ptr == nullptr) {
    fail(ErrorKind::format, "wav file missing fmt/data chunk: " + path);
  }
  if (audio_format != 1) {
    fail(ErrorKind::format, "unsupported wav field audio_format=" + std::to_string(audio_format) +
                                " (only uncompressed PCM is supported): " + path);
  }
  if (bits != 16) {
    fail(ErrorKind::format, "unsupported wav field bits_per_sample=" + std::to_string(bits) +
                                " (only 16-bit PCM is supported): " + path);
  }
  if (channels != 1 && channels != 2) {
    fail(ErrorKind::format, "unsupported wav field num_channels=" + std::to_string(channels) +
                                " (only mono or stereo): " + path);
  }
  if (sample_rate == 0) fail(ErrorKind::format, "wav sample_rate is zero: " + path);

  const size_t frame_bytes = 2u * channels;
  const size_t n_frames = data_len / frame_bytes;
  AudioClip clip;
  clip.sample_rate = static_cast<int>(sample_rate);
  clip.samples.resize(n_frames);
  for (size_t i = 0; i < n_frames; ++i) {
    const uint8_t* fp = data_ptr + i * frame_bytes;
    if (channels == 1) {
      int16_t s = static_cast<int16_t>(read_u16le(fp));
      clip.samples[i] = static_cast<float>(s / 32768.0);
    } else {
      int16_t l = static_cast<int16_t>(read_u16le(fp));
      int16_t r = static_cast<int16_t>(read_u16le(fp + 2));
      clip.samples[i] = static_cast<float>((static_cast<double>(l) + r) / 2.0 / 32768.0);
    }
  }
  return clip;
}

void write_wav(const std::string& path, const std::vector<float>& samples, int sample_rate) {
  std::string out;
  out.reserve(44 + samples.size() * 2);
  const uint32_t data_len = static_cast<uint32_t>(samples.size() * 2);
  out += "RIFF";
  put_u32le(out, 36 + data_len);
  out += "WAVE";
  out += "fmt ";
  put_u32le(out, 16);
  put_u16le(out, 1);  // PCM
  put_u16le(out, 1);  // mono
  put_u32le(out, static_cast<uint32_t>(sample_rate));
  put_u32le(out, static_cast<uint32_t>(sample_rate) * 2);
  put_u16le(out, 2);
  put_u16le(out, 16);
  out += "data";
  put_u32le(out, data_len);
  for (float s : samples) {
    double v = std::lrint(static_cast<double>(s) * 32768.0);
    v = std::clamp(v, -32768.0, 32767.0);
    put_u16le(out, static_cast<uint16_t>(static_cast<int16_t>(v)));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(ErrorKind::io, "cannot write wav file: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) fail(ErrorKind::io, "short write to wav file: " + path);
}

// --------------------------------------------------------------- resample

AudioClip resample(const AudioClip& clip, int target_rate) {
  if (clip.samples.empty()) fail(ErrorKind::data, "resample: empty clip");
  if (target_rate <= 0) fail(ErrorKind::data, "resample: target rate must be positive");
  AudioClip out;
  out.sample_rate = target_rate;
  out.source_id = clip.source_id;
  out.offset_s = clip.offset_s;
  if (target_rate == clip.sample_rate) {
    out.samples = clip.samples;
    return out;
  }
  const int64_t n_in = static_cast<int64_t>(clip.samples.size());
  const int64_t n_out = n_in * target_rate / clip.sample_rate;
  const double ratio = static_cast<double>(clip.sample_rate) / target_rate;
  out.samples.resize(static_cast<size_t>(n_out));
  for (int64_t i = 0; i < n_out; ++i) {
    const double pos = static_cast<double>(i) * ratio;
    int64_t i0 = static_cast<int64_t>(pos);
    if (i0 > n_in - 1) i0 = n_in - 1;
    const int64_t i1 = std::min<int64_t>(i0 + 1, n_in - 1);
    const double frac = pos - static_cast<double>(i0);
    const double v = (1.0 - frac) * clip.samples[static_cast<size_t>(i0)] +
                     frac * clip.samples[static_cast<size_t>(i1)];
    out.samples[static_cast<size_t>(i)] = static_cast<float>(v);
  }
  return out;
}

// -------------------------------------------------------------------- FFT

namespace {

struct FftPlan {
  int n = 0;
  std::vector<int> rev;
  std::vector<std::complex<double>> tw;  // tw[k] = exp(-2*pi*i*k/n), k < n/2

  explicit FftPlan(int size) : n(size) {
    rev.resize(static_cast<size_t>(n));
    int log2n = 0;
    while ((1 << log2n) < n) ++log2n;
    for (int i = 0; i < n; ++i) {
      int r = 0;
      for (int b = 0; b < log2n; ++b) r |= ((i >> b) & 1) << (log2n - 1 - b);
      rev[static_cast<size_t>(i)] = r;
    }
    tw.resize(static_cast<size_t>(n / 2));
    for (int k = 0; k < n / 2; ++k) {
      const double ang = -2.0 * kPi * k / n;
      tw[static_cast<size_t>(k)] = {std::cos(ang), std::sin(ang)};
    }
  }

  void run(std::complex<double>* buf) const {
    for (int i = 0; i < n; ++i) {
      const int r = rev[static_cast<size_t>(i)];
      if (i < r) std::swap(buf[i], buf[r]);
    }
    for (int len = 2; len <= n; len <<= 1) {
      const int half = len >> 1;
      const int step = n / len;
      for (int i = 0; i < n; i += len) {
        for (int j = 0; j < half; ++j) {
          const std::complex<double> w = tw[static_cast<size_t>(j * step)];
          const std::complex<double> u = buf[i + j];
          const std::complex<double> t = w * buf[i + j + half];
          buf[i + j] = u + t;
          buf[i + j + half] = u - t;
        }
      }
    }
  }
};

bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

}  // namespace

std::vector<double> hann_window(int n) {
  std::vector<double> w(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    w[static_cast<size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * kPi * i / n);
  }
  return w;
}

int64_t reflect_index(int64_t i, int64_t n) {
  if (n <= 1) return 0;
  const int64_t period = 2 * (n - 1);
  int64_t m = i % period;
  if (m < 0) m += period;
  if (m >= n) m = period - m;
  return m;
}

ComplexSpectrogram stft(const AudioClip& clip, int n_fft, int hop) {
  if (!is_pow2(n_fft)) fail(ErrorKind::data, "stft: n_fft must be a power of two");
  if (hop <= 0 || hop > n_fft) fail(ErrorKind::data, "stft: hop must satisfy 0 < hop <= n_fft");
  if (clip.samples.empty()) fail(ErrorKind::data, "stft: empty clip");

  const int64_t n = static_cast<int64_t>(clip.samples.size());
  const int n_frames = static_cast<int>(1 + n / hop);
  const int n_bins = n_fft / 2 + 1;
  const int pad = n_fft / 2;
  const std::vector<double> window = hann_window(n_fft);

  ComplexSpectrogram spec;
  spec.n_frames = n_frames;
  spec.n_bins = n_bins;
  spec.n_fft = n_fft;
  spec.hop = hop;
  spec.sample_rate = clip.sample_rate;
  spec.frames.resize(static_cast<size_t>(n_frames) * n_bins);

  const FftPlan plan(n_fft);
  std::vector<std::complex<double>> buf(static_cast<size_t>(n_fft));
  for (int t = 0; t < n_frames; ++t) {
    const int64_t start = static_cast<int64_t>(t) * hop - pad;
    for (int j = 0; j < n_fft; ++j) {
      const int64_t src = reflect_index(start + j, n);
      buf[static_cast<size_t>(j)] = {clip.samples[static_cast<size_t>(src)] * window[static_cast<size_t>(j)],
                                     0.0};
    }
    plan.run(buf.data());
    std::copy(buf.begin(), buf.begin() + n_bins,
              spec.frames.begin() + static_cast<size_t>(t) * n_bins);
  }
  return spec;
}

// ------------------------------------------------------------- filterbank

MelFilterBank mel_filterbank(int n_mels, int n_fft, int sample_rate, double fmin_hz,
                             double fmax_hz) {
  if (n_mels < 1) fail(ErrorKind::data, "mel_filterbank: n_mels must be >= 1");
  if (!(fmin_hz >= 0.0 && fmin_hz < fmax_hz && fmax_hz <= sample_rate / 2.0)) {
    fail(ErrorKind::data, "mel_filterbank: need 0 <= fmin < fmax <= sr/2");
  }
  const int n_bins = n_fft / 2 + 1;
  const double mel_lo = hz_to_mel(fmin_hz);
  const double mel_hi = hz_to_mel(fmax_hz);

  std::vector<double> edges(static_cast<size_t>(n_mels) + 2);
  for (int i = 0; i < n_mels + 2; ++i) {
    edges[static_cast<size_t>(i)] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (n_mels + 1));
  }

  MelFilterBank fb;
  fb.n_mels = n_mels;
  fb.n_bins = n_bins;
  fb.fmin_hz = fmin_hz;
  fb.fmax_hz = fmax_hz;
  fb.weights.assign(static_cast<size_t>(n_mels) * n_bins, 0.0);
  fb.row_begin.assign(static_cast<size_t>(n_mels), n_bins);
  fb.row_end.assign(static_cast<size_t>(n_mels), 0);
  fb.mel_center_hz.resize(static_cast<size_t>(n_mels));

  for (int m = 0; m < n_mels; ++m) {
    const double f_lo = edges[static_cast<size_t>(m)];
    const double f_c = edges[static_cast<size_t>(m) + 1];
    const double f_hi = edges[static_cast<size_t>(m) + 2];
    fb.mel_center_hz[static_cast<size_t>(m)] = f_c;
    const double norm = 2.0 / (f_hi - f_lo);
    bool nonzero = false;
    for (int k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(sample_rate) * k / n_fft;
      const double up = (f - f_lo) / (f_c - f_lo);
      const double down = (f_hi - f) / (f_hi - f_c);
      const double w = std::max(0.0, std::min(up, down));
      if (w > 0.0) {
        fb.weights[static_cast<size_t>(m) * n_bins + k] = w * norm;
        nonzero = true;
        fb.row_begin[static_cast<size_t>(m)] = std::min(fb.row_begin[static_cast<size_t>(m)], k);
        fb.row_end[static_cast<size_t>(m)] = k + 1;
      }
    }
    if (!nonzero) {
      fail(ErrorKind::data, "mel_filterbank: filter " + std::to_string(m) +
                                " has empty support; n_mels too large for this FFT resolution");
    }
  }
  return fb;
}

// ------------------------------------------------------------ dB scaling

void power_to_db(std::vector<double>& s) {
  if (s.empty()) return;
  for (double v : s) {
    if (!(v >= 0.0)) fail(ErrorKind::data, "power_to_db: negative or NaN entry");
  }
  double ref = kernels::ops().max_f64(s.data(), s.size());
  if (ref <= 0.0) ref = kPowerEps;
  const double log_ref = std::log10(ref);
  for (double& v : s) {
    double db = 10.0 * (std::log10(std::max(v, kPowerEps)) - log_ref);
    v = std::max(db, kDbFloor);
  }
}

// --------------------------------------------------------- melspectrogram

MelSpectrogram mel_of_spectrogram(const ComplexSpectrogram& spec) {
  const MelFilterBank fb = mel_filterbank(kNumMels, spec.n_fft, spec.sample_rate, 0.0,
                                          spec.sample_rate / 2.0);
  std::vector<double> mel(static_cast<size_t>(spec.n_frames) * kNumMels);
  std::vector<double> power(static_cast<size_t>(spec.n_bins));
  for (int t = 0; t < spec.n_frames; ++t) {
    const std::complex<double>* row = spec.frames.data() + static_cast<size_t>(t) * spec.n_bins;
    for (int k = 0; k < spec.n_bins; ++k) power[static_cast<size_t>(k)] = std::norm(row[k]);
    for (int m = 0; m < kNumMels; ++m) {
      const int b0 = fb.row_begin[static_cast<size_t>(m)];
      const int b1 = fb.row_end[static_cast<size_t>(m)];
      mel[static_cast<size_t>(t) * kNumMels + m] =
          kernels::ops().dot_f64(fb.weights.data() + static_cast<size_t>(m) * fb.n_bins + b0,
                                 power.data() + b0, static_cast<size_t>(b1 - b0));
    }
  }
  power_to_db(mel);
  MelSpectrogram out;
  out.n_frames = spec.n_frames;
  out.n_mels = kNumMels;
  out.values_db.resize(mel.size());
  for (size_t i = 0; i < mel.size(); ++i) out.values_db[i] = static_cast<float>(mel[i]);
  return out;
}

MelSpectrogram mel_spectrogram_at_hop(const AudioClip& clip, int hop) {
  return mel_of_spectrogram(stft(clip, kNfft, hop));
}

MelSpectrogram mel_spectrogram(const AudioClip& clip) {
  if (!clip.pipeline_standard()) {
    fail(ErrorKind::data,
         "mel_spectrogram requires a pipeline-standard clip (22050 Hz, exactly 30.0 s); "
         "resample and segment first");
  }
  MelSpectrogram out = mel_spectrogram_at_hop(clip, kPipelineHop);
  if (out.n_frames != kMelFrames || out.n_mels != kNumMels) {
    fail(ErrorKind::data, "mel_spectrogram: unexpected shape " + std::to_string(out.n_frames) +
                              "x" + std::to_string(out.n_mels));
  }
  return out;
}

}  // namespace mgt::dsp
