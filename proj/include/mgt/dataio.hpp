#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mgt/dsp.hpp"

namespace mgt::dataio {

// Genre order used whenever a dataset carries exactly these eight labels;
// keeps label indices stable across artifacts.
const std::vector<std::string>& canonical_genres();

struct ManifestEntry {
  std::string clip_path;
  std::string source_id;
  double offset_s = 0.0;
  std::string genre;
  std::string split;  // "train" or "test" once assigned
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::vector<std::string> class_order;
  uint64_t seed = 0;

  // counts per (genre, split)
  std::map<std::string, std::map<std::string, int>> counts() const;
};

// Non-overlapping fixed-length windows from the start of the song; the
// trailing remainder is discarded. Clips inherit source_id and record their
// offset in seconds.
std::vector<dsp::AudioClip> segment(const dsp::AudioClip& song, double clip_seconds = 30.0);

// Seeded source-song-level split: whole songs are assigned to one side, then
// clips are drawn to hit the per-genre quotas, so no song ever straddles the
// train/test boundary.
DatasetManifest split(const std::vector<ManifestEntry>& clips, int train_per_genre,
                      int test_per_genre, uint64_t seed);

void write_manifest_csv(const std::string& path, const DatasetManifest& manifest);
DatasetManifest read_manifest_csv(const std::string& path);

// ------------------------------------------------------- tensor container
//
// Self-describing binary format (all integers little-endian):
//   magic   4 bytes    "MGT1"
//   count   u32        number of entries
//   entry:  name_len   u32
//           name       UTF-8 bytes
//           dtype      u8   (1 = 32-bit IEEE-754 float)
//           rank       u8
//           dims       rank x u64
//           payload    4 * product(dims) bytes, row-major
struct NamedTensor {
  std::string name;
  std::vector<int64_t> dims;
  std::vector<float> data;

  int64_t numel() const {
    int64_t n = 1;
    for (int64_t d : dims) n *= d;
    return n;
  }
};

inline constexpr char kContainerMagic[4] = {'M', 'G', 'T', '1'};
inline constexpr uint8_t kDtypeF32 = 1;

void write_container(const std::string& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_container(const std::string& path);
// nullptr when the name is absent
const NamedTensor* find_tensor(const std::vector<NamedTensor>& tensors, const std::string& name);

}  // namespace mgt::dataio
