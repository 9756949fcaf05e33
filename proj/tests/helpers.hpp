#pragma once

#include <complex>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "mgt/dsp.hpp"
#include "mgt/rng.hpp"

namespace testutil {

// Fresh scratch directory under the system temp dir; removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static mgt::Rng rng(0xC0FFEEu ^ static_cast<uint64_t>(::getpid()));
    path_ = std::filesystem::temp_directory_path() /
            ("mgt_" + tag + "_" + std::to_string(rng.next_u64() & 0xFFFFFF));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

inline mgt::dsp::AudioClip sine_clip(double freq_hz, double amplitude, double seconds,
                                     int sample_rate) {
  mgt::dsp::AudioClip clip;
  clip.sample_rate = sample_rate;
  const auto n = static_cast<size_t>(seconds * sample_rate + 0.5);
  clip.samples.resize(n);
  for (size_t i = 0; i < n; ++i) {
    clip.samples[i] = static_cast<float>(
        amplitude * std::sin(2.0 * mgt::kPi * freq_hz * static_cast<double>(i) / sample_rate));
  }
  return clip;
}

inline mgt::dsp::AudioClip standard_sine(double freq_hz, double amplitude = 0.5) {
  return sine_clip(freq_hz, amplitude, 30.0, mgt::dsp::kStandardRate);
}

inline mgt::dsp::AudioClip silence_clip(double seconds, int sample_rate) {
  mgt::dsp::AudioClip clip;
  clip.sample_rate = sample_rate;
  clip.samples.assign(static_cast<size_t>(seconds * sample_rate + 0.5), 0.0f);
  return clip;
}

// O(n^2) reference DFT.
inline std::vector<std::complex<double>> dft_direct(const std::vector<double>& x) {
  const size_t n = x.size();
  std::vector<std::complex<double>> out(n);
  for (size_t k = 0; k < n; ++k) {
    std::complex<double> acc{0.0, 0.0};
    for (size_t t = 0; t < n; ++t) {
      const double ang = -2.0 * mgt::kPi * static_cast<double>(k) * static_cast<double>(t) /
                         static_cast<double>(n);
      acc += x[t] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[k] = acc;
  }
  return out;
}

}  // namespace testutil
