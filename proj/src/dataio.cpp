#include "mgt/dataio.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "mgt/error.hpp"
#include "mgt/rng.hpp"

namespace mgt::dataio {

const std::vector<std::string>& canonical_genres() {
  static const std::vector<std::string> order = {
      "Aadhunik Sangeet", "Deuda", "Tamang Selo", "Lok Dohori",
      "Purbeli Bhaka",    "Rap",   "Rock",        "Pop",
  };
  return order;
}

std::map<std::string, std::map<std::string, int>> DatasetManifest::counts() const {
  std::map<std::string, std::map<std::string, int>> out;
  for (const auto& e : entries) ++out[e.genre][e.split];
  return out;
}

// ---------------------------------------------------------------- segment

std::vector<dsp::AudioClip> segment(const dsp::AudioClip& song, double clip_seconds) {
  if (song.samples.empty()) fail(ErrorKind::data, "segment: empty song");
  if (clip_seconds <= 0.0) fail(ErrorKind::data, "segment: clip length must be positive");
  const auto clip_len = static_cast<int64_t>(clip_seconds * song.sample_rate + 0.5);
  const auto n = static_cast<int64_t>(song.samples.size());
  std::vector<dsp::AudioClip> clips;
  for (int64_t start = 0; start + clip_len <= n; start += clip_len) {
    dsp::AudioClip clip;
    clip.sample_rate = song.sample_rate;
    clip.source_id = song.source_id;
    clip.offset_s = static_cast<double>(start) / song.sample_rate;
    clip.samples.assign(song.samples.begin() + start, song.samples.begin() + start + clip_len);
    clips.push_back(std::move(clip));
  }
  return clips;
}

// ------------------------------------------------------------------ split

namespace {

std::vector<std::string> infer_class_order(const std::vector<ManifestEntry>& clips) {
  std::set<std::string> genres;
  for (const auto& e : clips) genres.insert(e.genre);
  const auto& canonical = canonical_genres();
  if (genres.size() == canonical.size() &&
      std::all_of(canonical.begin(), canonical.end(),
                  [&](const std::string& g) { return genres.count(g) > 0; })) {
    return canonical;
  }
  return {genres.begin(), genres.end()};  // lexicographic
}

}  // namespace

DatasetManifest split(const std::vector<ManifestEntry>& clips, int train_per_genre,
                      int test_per_genre, uint64_t seed) {
  if (train_per_genre < 1 || test_per_genre < 1) {
    fail(ErrorKind::config, "split: per-genre quotas must be positive");
  }
  DatasetManifest manifest;
  manifest.seed = seed;
  manifest.class_order = infer_class_order(clips);
  if (manifest.class_order.empty()) fail(ErrorKind::data, "split: no genres found");

  Rng rng(seed);
  for (const std::string& genre : manifest.class_order) {
    // group this genre's clips by source song, keeping clip order by offset
    std::map<std::string, std::vector<const ManifestEntry*>> by_song;
    int total = 0;
    for (const auto& e : clips) {
      if (e.genre == genre) {
        by_song[e.source_id].push_back(&e);
        ++total;
      }
    }
    if (total < train_per_genre + test_per_genre) {
      fail(ErrorKind::data, "split: genre '" + genre + "' has only " + std::to_string(total) +
                                " clips; quota needs " +
                                std::to_string(train_per_genre + test_per_genre));
    }
    for (auto& [id, list] : by_song) {
      std::sort(list.begin(), list.end(),
                [](const ManifestEntry* a, const ManifestEntry* b) {
                  return a->offset_s < b->offset_s;
                });
    }

    std::vector<std::string> songs;
    for (const auto& [id, list] : by_song) songs.push_back(id);
    rng.shuffle(songs);

    // whole songs go to the test side until its quota is reachable; prefer
    // the smallest song that completes the quota so the train side keeps as
    // many clips as possible
    std::vector<std::string> test_songs;
    int test_count = 0;
    size_t cursor = 0;
    while (test_count < test_per_genre && cursor < songs.size()) {
      const int missing = test_per_genre - test_count;
      size_t pick = cursor;
      int pick_size = static_cast<int>(by_song[songs[cursor]].size());
      if (pick_size >= missing) {
        for (size_t j = cursor + 1; j < songs.size(); ++j) {
          const int sz = static_cast<int>(by_song[songs[j]].size());
          if (sz >= missing && sz < pick_size) {
            pick = j;
            pick_size = sz;
          }
        }
      }
      std::swap(songs[cursor], songs[pick]);
      test_songs.push_back(songs[cursor]);
      test_count += static_cast<int>(by_song[songs[cursor]].size());
      ++cursor;
    }
    if (test_count < test_per_genre) {
      fail(ErrorKind::data, "split: genre '" + genre +
                                "' cannot reach the test quota with whole songs "
                                "(source granularity too coarse)");
    }
    int train_available = 0;
    for (size_t j = cursor; j < songs.size(); ++j) {
      train_available += static_cast<int>(by_song[songs[j]].size());
    }
    if (train_available < train_per_genre) {
      fail(ErrorKind::data, "split: genre '" + genre +
                                "' cannot reach the train quota without splitting a song "
                                "(source granularity too coarse)");
    }

    auto draw = [&](const std::vector<std::string>& ids, int quota, const char* tag) {
      int taken = 0;
      for (const auto& id : ids) {
        for (const ManifestEntry* e : by_song[id]) {
          if (taken == quota) return;
          ManifestEntry out = *e;
          out.split = tag;
          manifest.entries.push_back(std::move(out));
          ++taken;
        }
      }
    };
    draw(test_songs, test_per_genre, "test");
    draw({songs.begin() + static_cast<long>(cursor), songs.end()}, train_per_genre, "train");
  }
  return manifest;
}

// ------------------------------------------------------------ manifest csv

void write_manifest_csv(const std::string& path, const DatasetManifest& manifest) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) fail(ErrorKind::io, "cannot write manifest: " + path);
  f << "clip_path,source_id,offset_s,genre,split\n";
  for (const auto& e : manifest.entries) {
    f << e.clip_path << "," << e.source_id << "," << e.offset_s << "," << e.genre << ","
      << e.split << "\n";
  }
  if (!f) fail(ErrorKind::io, "short write to manifest: " + path);
}

DatasetManifest read_manifest_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) fail(ErrorKind::io, "cannot open manifest: " + path);
  std::string line;
  if (!std::getline(f, line) || line != "clip_path,source_id,offset_s,genre,split") {
    fail(ErrorKind::format, "manifest missing header row: " + path);
  }
  DatasetManifest manifest;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    ManifestEntry e;
    std::string offset;
    if (!std::getline(ss, e.clip_path, ',') || !std::getline(ss, e.source_id, ',') ||
        !std::getline(ss, offset, ',') || !std::getline(ss, e.genre, ',') ||
        !std::getline(ss, e.split)) {
      fail(ErrorKind::format, "malformed manifest row: " + line);
    }
    e.offset_s = std::stod(offset);
    manifest.entries.push_back(std::move(e));
  }
  // restore the class order the split would infer
  std::vector<ManifestEntry> copy = manifest.entries;
  manifest.class_order = infer_class_order(copy);
  return manifest;
}

// -------------------------------------------------------------- container

namespace {

void put_u32(std::ofstream& f, uint32_t v) {
  char buf[4];
  for (int i = 0; i < 4; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  f.write(buf, 4);
}

void put_u64(std::ofstream& f, uint64_t v) {
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  f.write(buf, 8);
}

class Reader {
 public:
  Reader(std::ifstream& f, const std::string& path) : f_(f), path_(path) {}

  void read(void* dst, size_t n) {
    f_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (f_.gcount() != static_cast<std::streamsize>(n)) {
      fail(ErrorKind::format, "corrupt container (truncated at byte offset " +
                                  std::to_string(offset_ + static_cast<size_t>(f_.gcount())) +
                                  "): " + path_);
    }
    offset_ += n;
  }
  uint32_t u32() {
    uint8_t b[4];
    read(b, 4);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
  }
  uint64_t u64() {
    uint8_t b[8];
    read(b, 8);
    uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return v;
  }
  uint8_t u8() {
    uint8_t b;
    read(&b, 1);
    return b;
  }
  size_t offset() const { return offset_; }

 private:
  std::ifstream& f_;
  std::string path_;
  size_t offset_ = 0;
};

}  // namespace

void write_container(const std::string& path, const std::vector<NamedTensor>& tensors) {
  std::set<std::string> names;
  for (const auto& t : tensors) {
    if (!names.insert(t.name).second) {
      fail(ErrorKind::data, "container: duplicate tensor name '" + t.name + "'");
    }
    if (t.dims.empty()) fail(ErrorKind::data, "container: tensor '" + t.name + "' has no dims");
    int64_t n = 1;
    for (int64_t d : t.dims) {
      if (d <= 0) fail(ErrorKind::data, "container: tensor '" + t.name + "' has a zero dim");
      n *= d;
    }
    if (n != static_cast<int64_t>(t.data.size())) {
      fail(ErrorKind::data, "container: tensor '" + t.name + "' dims/data mismatch");
    }
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(ErrorKind::io, "cannot write container: " + path);
  f.write(kContainerMagic, 4);
  put_u32(f, static_cast<uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    put_u32(f, static_cast<uint32_t>(t.name.size()));
    f.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    const uint8_t dtype = kDtypeF32;
    f.write(reinterpret_cast<const char*>(&dtype), 1);
    const auto rank = static_cast<uint8_t>(t.dims.size());
    f.write(reinterpret_cast<const char*>(&rank), 1);
    for (int64_t d : t.dims) put_u64(f, static_cast<uint64_t>(d));
    // payload is IEEE-754 f32 little-endian; x86-64 stores exactly that
    f.write(reinterpret_cast<const char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  }
  if (!f) fail(ErrorKind::io, "short write to container: " + path);
}

std::vector<NamedTensor> read_container(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::io, "cannot open container: " + path);
  Reader r(f, path);

  char magic[4];
  r.read(magic, 4);
  if (std::memcmp(magic, kContainerMagic, 4) != 0) {
    fail(ErrorKind::format, "corrupt container (bad magic at byte offset 0): " + path);
  }
  const uint32_t count = r.u32();
  std::vector<NamedTensor> out;
  out.reserve(count);
  std::set<std::string> names;
  for (uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    const uint32_t name_len = r.u32();
    if (name_len > (1u << 20)) {
      fail(ErrorKind::format, "corrupt container (implausible name length at byte offset " +
                                  std::to_string(r.offset() - 4) + "): " + path);
    }
    t.name.resize(name_len);
    r.read(t.name.data(), name_len);
    if (!names.insert(t.name).second) {
      fail(ErrorKind::format, "corrupt container (duplicate name '" + t.name + "'): " + path);
    }
    const uint8_t dtype = r.u8();
    if (dtype != kDtypeF32) {
      fail(ErrorKind::format, "corrupt container (unknown dtype code " + std::to_string(dtype) +
                                  " at byte offset " + std::to_string(r.offset() - 1) +
                                  "): " + path);
    }
    const uint8_t rank = r.u8();
    if (rank == 0) {
      fail(ErrorKind::format, "corrupt container (rank 0 tensor '" + t.name + "'): " + path);
    }
    uint64_t numel = 1;
    for (int d = 0; d < rank; ++d) {
      const uint64_t dim = r.u64();
      if (dim == 0 || numel > (1ull << 40) / std::max<uint64_t>(dim, 1)) {
        fail(ErrorKind::format, "corrupt container (bad dims for '" + t.name + "' at byte offset " +
                                    std::to_string(r.offset() - 8) + "): " + path);
      }
      t.dims.push_back(static_cast<int64_t>(dim));
      numel *= dim;
    }
    t.data.resize(numel);
    r.read(t.data.data(), numel * sizeof(float));
    out.push_back(std::move(t));
  }
  return out;
}

const NamedTensor* find_tensor(const std::vector<NamedTensor>& tensors, const std::string& name) {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

}  // namespace mgt::dataio
