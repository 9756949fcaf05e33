// mgt: music genre classification toolkit.
// Subcommands: prep, extract, train, eval, predict, report.

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "mgt/config.hpp"
#include "mgt/dataio.hpp"
#include "mgt/dsp.hpp"
#include "mgt/error.hpp"
#include "mgt/eval.hpp"
#include "mgt/features.hpp"
#include "mgt/kernels.hpp"
#include "mgt/models.hpp"
#include "mgt/neural.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mgt;

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> sets;
  std::string out_dir = "runs";
  std::string run_id;
  uint64_t seed = 0;
  bool seed_given = false;
};

json resolve_config(const CommonArgs& args) {
  std::optional<std::string> path;
  if (!args.config_path.empty()) path = args.config_path;
  json cfg = config::resolve(path, args.sets);
  if (args.seed_given) cfg["seed"] = args.seed;
  return cfg;
}

fs::path make_run_dir(const CommonArgs& args, const std::string& default_id, const json& cfg) {
  const std::string run_id = args.run_id.empty() ? default_id : args.run_id;
  fs::path dir = fs::path(args.out_dir) / run_id;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::io, "cannot create run directory: " + dir.string());
  config::write_json((dir / "resolved_config.json").string(), cfg);
  return dir;
}

void parallel_for(size_t n, int threads, const std::function<void(size_t)>& body) {
  threads = std::max(1, std::min<int>(threads, static_cast<int>(n)));
  if (threads == 1) {
    for (size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::mutex error_mutex;
  std::string first_error;
  auto worker = [&] {
    for (size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
      try {
        body(i);
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (first_error.empty()) first_error = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (!first_error.empty()) fail(ErrorKind::io, first_error);
}

dsp::AudioClip load_standardized(const std::string& path) {
  dsp::AudioClip clip = dsp::load_wav(path);
  if (clip.sample_rate != dsp::kStandardRate) clip = dsp::resample(clip, dsp::kStandardRate);
  return clip;
}

int label_index(const std::vector<std::string>& order, const std::string& genre) {
  for (size_t i = 0; i < order.size(); ++i) {
    if (order[i] == genre) return static_cast<int>(i);
  }
  fail(ErrorKind::data, "genre '" + genre + "' not in class order");
}

// ---------------------------------------------------------------- cmd_prep

int cmd_prep(const CommonArgs& common, const std::string& in_dir, int train_per_genre,
             int test_per_genre) {
  json cfg = resolve_config(common);
  const uint64_t seed = cfg["seed"].get<uint64_t>();
  const fs::path run = make_run_dir(common, "prep-s" + std::to_string(seed), cfg);

  if (!fs::is_directory(in_dir)) fail(ErrorKind::io, "input directory not found: " + in_dir);
  std::vector<std::string> genres;
  for (const auto& entry : fs::directory_iterator(in_dir)) {
    if (entry.is_directory()) genres.push_back(entry.path().filename().string());
  }
  std::sort(genres.begin(), genres.end());
  if (genres.empty()) fail(ErrorKind::config, "no genres found under " + in_dir);

  std::vector<dataio::ManifestEntry> entries;
  fs::create_directories(run / "clips");
  for (const std::string& genre : genres) {
    std::vector<fs::path> songs;
    for (const auto& entry : fs::directory_iterator(fs::path(in_dir) / genre)) {
      if (entry.path().extension() == ".wav") songs.push_back(entry.path());
    }
    std::sort(songs.begin(), songs.end());
    fs::create_directories(run / "clips" / genre);
    for (const fs::path& song_path : songs) {
      dsp::AudioClip song = load_standardized(song_path.string());
      song.source_id = genre + "/" + song_path.stem().string();
      for (const dsp::AudioClip& clip : dataio::segment(song)) {
        const std::string rel = "clips/" + genre + "/" + song_path.stem().string() + "_" +
                                std::to_string(static_cast<int64_t>(clip.offset_s)) + ".wav";
        dsp::write_wav((run / rel).string(), clip.samples, clip.sample_rate);
        entries.push_back({rel, clip.source_id, clip.offset_s, genre, ""});
      }
    }
  }

  dataio::DatasetManifest manifest = dataio::split(entries, train_per_genre, test_per_genre, seed);
  dataio::write_manifest_csv((run / "manifest.csv").string(), manifest);

  auto counts = manifest.counts();
  std::printf("%-20s %7s %7s\n", "Genre", "Train", "Test");
  int64_t train_total = 0, test_total = 0;
  for (const auto& genre : manifest.class_order) {
    std::printf("%-20s %7d %7d\n", genre.c_str(), counts[genre]["train"], counts[genre]["test"]);
    train_total += counts[genre]["train"];
    test_total += counts[genre]["test"];
  }
  std::printf("%-20s %7lld %7lld\n", "Total", static_cast<long long>(train_total),
              static_cast<long long>(test_total));

  json meta;
  meta["command"] = "prep";
  meta["seed"] = seed;
  meta["class_order"] = manifest.class_order;
  meta["config_hash"] = config::hash_of(cfg);
  meta["manifest"] = "manifest.csv";
  config::write_json((run / "meta.json").string(), meta);
  std::fprintf(stderr, "wrote %zu clips and manifest to %s\n", manifest.entries.size(),
               run.string().c_str());
  return 0;
}

// -------------------------------------------------------------- cmd_extract

struct SplitData {
  std::vector<const dataio::ManifestEntry*> entries;
  std::vector<float> x;
  std::vector<float> y;
};

int cmd_extract(const CommonArgs& common, const std::string& manifest_path,
                const std::string& mode, int threads) {
  json cfg = resolve_config(common);
  const uint64_t seed = cfg["seed"].get<uint64_t>();
  if (mode != "melspec" && mode != "features51") {
    fail(ErrorKind::config, "--mode must be melspec or features51");
  }
  const fs::path run = make_run_dir(common, "extract-" + mode + "-s" + std::to_string(seed), cfg);

  dataio::DatasetManifest manifest = dataio::read_manifest_csv(manifest_path);
  const fs::path base = fs::path(manifest_path).parent_path();
  const int hop = cfg["dsp"]["hop"].get<int>();
  const int frames = static_cast<int>(1 + dsp::kClipSamples / hop);
  const int bands = dsp::kNumMels;

  std::map<std::string, SplitData> splits;
  for (const auto& e : manifest.entries) splits[e.split].entries.push_back(&e);

  std::mutex fail_mutex;
  std::vector<std::string> unreadable;
  std::atomic<size_t> done{0};

  for (auto& [split, data] : splits) {
    const size_t n = data.entries.size();
    const size_t row = (mode == "melspec") ? static_cast<size_t>(frames) * bands
                                           : static_cast<size_t>(features::kFeatureDim);
    data.x.assign(n * row, 0.0f);
    data.y.assign(n, 0.0f);

    parallel_for(n, threads, [&, row](size_t i) {
      const dataio::ManifestEntry& e = *data.entries[i];
      dsp::AudioClip clip;
      try {
        clip = load_standardized((base / e.clip_path).string());
        if (!clip.pipeline_standard()) {
          fail(ErrorKind::format, e.clip_path + ": not a 30 s pipeline-standard clip");
        }
        if (mode == "melspec") {
          const dsp::MelSpectrogram mel = (hop == dsp::kPipelineHop)
                                              ? dsp::mel_spectrogram(clip)
                                              : dsp::mel_spectrogram_at_hop(clip, hop);
          std::copy(mel.values_db.begin(), mel.values_db.end(), data.x.begin() + i * row);
        } else {
          const features::FeatureVector51 v = features::extract_features_51(clip);
          for (size_t j = 0; j < v.size(); ++j) {
            data.x[i * row + j] = static_cast<float>(v[j]);
          }
        }
        data.y[i] = static_cast<float>(label_index(manifest.class_order, e.genre));
      } catch (const Error& err) {
        std::lock_guard<std::mutex> lock(fail_mutex);
        unreadable.push_back(e.clip_path + ": " + err.what());
        return;
      }
      const size_t k = done.fetch_add(1) + 1;
      if (k % 32 == 0) std::fprintf(stderr, "extracted %zu clips...\n", k);
    });
  }
  if (!unreadable.empty()) {
    std::sort(unreadable.begin(), unreadable.end());
    std::string msg = "failed to extract " + std::to_string(unreadable.size()) + " clip(s):";
    for (const auto& u : unreadable) msg += "\n  " + u;
    fail(ErrorKind::io, msg);
  }

  for (auto& [split, data] : splits) {
    if (split.empty()) continue;
    const auto n = static_cast<int64_t>(data.entries.size());
    std::vector<dataio::NamedTensor> tensors(2);
    tensors[0].name = "x";
    tensors[0].dims = (mode == "melspec")
                          ? std::vector<int64_t>{n, frames, bands}
                          : std::vector<int64_t>{n, features::kFeatureDim};
    tensors[0].data = std::move(data.x);
    tensors[1].name = "y";
    tensors[1].dims = {n};
    tensors[1].data = std::move(data.y);
    const std::string stem = split + (mode == "melspec" ? "_melspec" : "_features");
    dataio::write_container((run / (stem + ".mgt")).string(), tensors);

    if (mode == "features51") {
      std::ofstream csv(run / (split + "_features.csv"), std::ios::trunc);
      csv << "source_id,offset_s";
      for (int j = 0; j < features::kFeatureDim; ++j) csv << ",f" << j;
      csv << ",genre\n";
      char buf[32];
      for (size_t i = 0; i < data.entries.size(); ++i) {
        const auto& e = *data.entries[i];
        csv << e.source_id << "," << e.offset_s;
        for (int j = 0; j < features::kFeatureDim; ++j) {
          std::snprintf(buf, sizeof(buf), "%.17g",
                        static_cast<double>(tensors[0].data[i * features::kFeatureDim +
                                                            static_cast<size_t>(j)]));
          csv << "," << buf;
        }
        csv << "," << e.genre << "\n";
      }
    }
  }

  json meta;
  meta["command"] = "extract";
  meta["mode"] = mode;
  meta["class_order"] = manifest.class_order;
  meta["frames"] = (mode == "melspec") ? frames : 1;
  meta["bands"] = (mode == "melspec") ? bands : features::kFeatureDim;
  meta["dsp_hash"] = config::dsp_hash_of(cfg);
  meta["config_hash"] = config::hash_of(cfg);
  config::write_json((run / "meta.json").string(), meta);
  std::fprintf(stderr, "extraction complete: %s\n", run.string().c_str());
  return 0;
}

// ---------------------------------------------------------------- cmd_train

struct LoadedSplit {
  Tensor x;  // deep: [N,T,M]; classical: [N,51]
  std::vector<int> y;
};

LoadedSplit load_split(const fs::path& data_dir, const std::string& split,
                       const std::string& mode) {
  const std::string stem = split + (mode == "melspec" ? "_melspec" : "_features");
  const std::string path = (data_dir / (stem + ".mgt")).string();
  auto tensors = dataio::read_container(path);
  const dataio::NamedTensor* x = dataio::find_tensor(tensors, "x");
  const dataio::NamedTensor* y = dataio::find_tensor(tensors, "y");
  if (x == nullptr || y == nullptr) fail(ErrorKind::format, "data container missing x/y: " + path);
  LoadedSplit out;
  out.x = Tensor(x->dims, x->data);
  out.y.reserve(y->data.size());
  for (float v : y->data) out.y.push_back(static_cast<int>(v));
  return out;
}

models::FeatureMatrix to_feature_matrix(const Tensor& x) {
  if (x.rank() != 2 || x.dim(1) != features::kFeatureDim) {
    fail(ErrorKind::data, "expected [N,51] feature tensor, got " + x.shape_str());
  }
  models::FeatureMatrix out(static_cast<size_t>(x.dim(0)));
  for (int64_t i = 0; i < x.dim(0); ++i) {
    for (int j = 0; j < features::kFeatureDim; ++j) {
      out[static_cast<size_t>(i)][static_cast<size_t>(j)] = x.at2(i, j);
    }
  }
  return out;
}

int cmd_train(const CommonArgs& common, const std::string& data_dir, const std::string& arch) {
  json cfg = resolve_config(common);
  const uint64_t seed = cfg["seed"].get<uint64_t>();
  const models::ArchKind kind = models::arch_from_string(arch);

  const json meta = config::read_json((fs::path(data_dir) / "meta.json").string());
  const std::string mode = meta.at("mode").get<std::string>();
  if (models::is_deep(kind) && mode != "melspec") {
    fail(ErrorKind::config, "architecture '" + arch +
                                "' consumes mel spectrograms; this data directory holds '" + mode +
                                "' (extract with --mode melspec)");
  }
  if (!models::is_deep(kind) && mode != "features51") {
    fail(ErrorKind::config, "architecture '" + arch +
                                "' consumes 51-d feature vectors; this data directory holds '" +
                                mode + "' (extract with --mode features51)");
  }
  const auto class_order = meta.at("class_order").get<std::vector<std::string>>();

  const fs::path run = make_run_dir(common, arch + "-s" + std::to_string(seed), cfg);
  LoadedSplit train_data = load_split(data_dir, "train", mode);

  models::Checkpoint ckpt;
  ckpt.kind = kind;
  ckpt.class_order = class_order;
  ckpt.config_hash = config::hash_of(cfg);
  ckpt.data_hash = meta.at("dsp_hash").get<std::string>();
  ckpt.seed = seed;

  if (models::is_deep(kind)) {
    models::ArchitectureConfig acfg;
    acfg.kind = kind;
    acfg.conv_channels = cfg["model"]["conv_channels"].get<std::vector<int>>();
    acfg.kernel_width = cfg["model"]["kernel_width"].get<int>();
    acfg.pool_width = cfg["model"]["pool_width"].get<int>();
    acfg.lstm_hidden = cfg["model"]["lstm_hidden"].get<int>();
    acfg.dense_hidden = cfg["model"]["dense_hidden"].get<int>();
    acfg.dropout = cfg["model"]["dropout"].get<double>();
    acfg.l2 = cfg["model"]["l2"].get<double>();
    acfg.n_classes = static_cast<int>(class_order.size());
    acfg.input_time = meta.at("frames").get<int>();
    acfg.input_bands = meta.at("bands").get<int>();

    models::TrainConfig tc;
    tc.batch_size = cfg["train"]["batch_size"].get<int>();
    tc.max_epochs = cfg["train"]["max_epochs"].get<int>();
    tc.patience = cfg["train"]["patience"].get<int>();
    tc.val_fraction = cfg["train"]["val_fraction"].get<double>();
    tc.min_improvement = cfg["train"]["min_improvement"].get<double>();
    tc.seed = seed;
    tc.adam.lr = cfg["train"]["lr"].get<float>();
    tc.adam.beta1 = cfg["train"]["beta1"].get<float>();
    tc.adam.beta2 = cfg["train"]["beta2"].get<float>();
    tc.adam.eps = cfg["train"]["eps"].get<float>();

    ckpt.arch = acfg;
    ckpt.deep = std::make_shared<models::DeepModel>(acfg, seed);
    models::TrainResult res = models::train(*ckpt.deep, train_data.x, train_data.y, tc);
    ckpt.best_epoch = res.best_epoch;
    ckpt.best_val_loss = res.best_val_loss;
    ckpt.best_val_acc = res.best_val_acc;
    models::write_curves_csv((run / "curves.csv").string(), res.curves);
    models::save_checkpoint((run / "checkpoint").string(), ckpt);
    std::printf("trained %s for %zu epochs; best epoch %d: val_loss=%.4f val_acc=%.4f\n",
                arch.c_str(), res.curves.size(), res.best_epoch, res.best_val_loss,
                res.best_val_acc);
  } else {
    const models::FeatureMatrix x = to_feature_matrix(train_data.x);
    models::ClassicalPrediction pred;
    if (kind == models::ArchKind::logreg) {
      ckpt.logreg = std::make_shared<models::LogRegModel>();
      ckpt.logreg->fit(x, train_data.y, static_cast<int>(class_order.size()),
                       cfg["model"]["logreg_lambda"].get<double>(), seed);
      pred = ckpt.logreg->predict_all(x);
    } else {
      ckpt.knn = std::make_shared<models::KnnModel>();
      ckpt.knn->fit(x, train_data.y, static_cast<int>(class_order.size()),
                    cfg["model"]["knn_k"].get<int>());
      pred = ckpt.knn->predict_all(x);
    }
    size_t correct = 0;
    for (size_t i = 0; i < pred.labels.size(); ++i) correct += pred.labels[i] == train_data.y[i];
    models::save_checkpoint((run / "checkpoint").string(), ckpt);
    std::printf("fitted %s; train accuracy %.4f\n", arch.c_str(),
                static_cast<double>(correct) / static_cast<double>(pred.labels.size()));
  }
  std::fprintf(stderr, "checkpoint written to %s\n", (run / "checkpoint").string().c_str());
  return 0;
}

// ----------------------------------------------------------------- cmd_eval

std::string strip_checkpoint_suffix(std::string path) {
  for (const char* suffix : {".json", ".mgt"}) {
    if (path.ends_with(suffix)) return path.substr(0, path.size() - std::strlen(suffix));
  }
  return path;
}

std::vector<std::vector<double>> probs_to_rows(const Tensor& probs) {
  std::vector<std::vector<double>> out(static_cast<size_t>(probs.dim(0)));
  for (int64_t i = 0; i < probs.dim(0); ++i) {
    out[static_cast<size_t>(i)].resize(static_cast<size_t>(probs.dim(1)));
    for (int64_t j = 0; j < probs.dim(1); ++j) {
      out[static_cast<size_t>(i)][static_cast<size_t>(j)] = probs.at2(i, j);
    }
  }
  return out;
}

int cmd_eval(const CommonArgs& common, const std::string& checkpoint_path,
             const std::string& data_dir) {
  json cfg = resolve_config(common);
  const std::string ckpt_base = strip_checkpoint_suffix(checkpoint_path);
  models::Checkpoint ckpt = models::load_checkpoint(ckpt_base);
  const json meta = config::read_json((fs::path(data_dir) / "meta.json").string());

  if (meta.at("dsp_hash").get<std::string>() != ckpt.data_hash) {
    fail(ErrorKind::config,
         "checkpoint/data mismatch: the checkpoint was trained on data extracted with a "
         "different dsp/feature configuration (hash " +
             ckpt.data_hash + " vs " + meta.at("dsp_hash").get<std::string>() + ")");
  }
  const auto class_order = meta.at("class_order").get<std::vector<std::string>>();
  if (class_order != ckpt.class_order) {
    fail(ErrorKind::config, "checkpoint/data mismatch: class orders differ");
  }
  const std::string mode = meta.at("mode").get<std::string>();
  if (models::is_deep(ckpt.kind) != (mode == "melspec")) {
    fail(ErrorKind::config, "checkpoint kind is incompatible with data mode '" + mode + "'");
  }

  const std::string run_id = common.run_id.empty()
                                 ? "eval-" + models::to_string(ckpt.kind) + "-s" +
                                       std::to_string(ckpt.seed)
                                 : common.run_id;
  CommonArgs named = common;
  named.run_id = run_id;
  const fs::path run = make_run_dir(named, run_id, cfg);

  LoadedSplit test = load_split(data_dir, "test", mode);
  std::vector<std::vector<double>> probs;
  std::vector<int> pred_labels;
  if (models::is_deep(ckpt.kind)) {
    models::DeepPrediction pred = models::predict(*ckpt.deep, test.x);
    probs = probs_to_rows(pred.probs);
    pred_labels = pred.labels;
  } else {
    const models::FeatureMatrix x = to_feature_matrix(test.x);
    models::ClassicalPrediction pred =
        ckpt.logreg ? ckpt.logreg->predict_all(x) : ckpt.knn->predict_all(x);
    probs = pred.probs;
    pred_labels = pred.labels;
  }

  const eval::ConfusionMatrix cm = eval::confusion(test.y, pred_labels, class_order);
  const eval::ClassReport report = eval::classification_report(cm);
  const std::vector<eval::RocCurve> curves = eval::roc_auc(test.y, probs, class_order);

  auto artifact = [&](const std::string& name) { return (run / (run_id + "_" + name)).string(); };
  eval::write_report_text(artifact("report.txt"), report);
  eval::write_report_csv(artifact("report.csv"), report);
  eval::write_confusion_csv(artifact("confusion.csv"), cm);
  eval::write_roc_csv(artifact("roc.csv"), curves);
  eval::write_auc_csv(artifact("auc.csv"), curves);
  eval::write_confusion_svg(artifact("confusion.svg"), cm);
  eval::write_roc_svg(artifact("roc.svg"), curves);
  const fs::path curves_csv = fs::path(ckpt_base).parent_path() / "curves.csv";
  if (fs::exists(curves_csv)) {
    eval::write_training_curves_svg(artifact("curves.svg"),
                                    models::read_curves_csv(curves_csv.string()));
  }

  json emeta;
  emeta["command"] = "eval";
  emeta["checkpoint"] = ckpt_base;
  emeta["data"] = data_dir;
  emeta["accuracy"] = report.accuracy;
  emeta["config_hash"] = config::hash_of(cfg);
  config::write_json((run / "meta.json").string(), emeta);

  std::fputs(eval::render_report_text(report).c_str(), stdout);
  return 0;
}

// -------------------------------------------------------------- cmd_predict

int cmd_predict(const std::string& checkpoint_path, const std::string& wav_path) {
  models::Checkpoint ckpt = models::load_checkpoint(strip_checkpoint_suffix(checkpoint_path));
  dsp::AudioClip audio = load_standardized(wav_path);
  if (static_cast<int64_t>(audio.samples.size()) < dsp::kClipSamples) {
    fail(ErrorKind::config, "input is shorter than one 30 s clip; cannot classify");
  }
  audio.source_id = wav_path;
  const std::vector<dsp::AudioClip> clips = dataio::segment(audio);

  const auto k = static_cast<size_t>(ckpt.class_order.size());
  std::vector<double> mean_probs(k, 0.0);
  if (models::is_deep(ckpt.kind)) {
    if (ckpt.arch.input_time != dsp::kMelFrames || ckpt.arch.input_bands != dsp::kNumMels) {
      fail(ErrorKind::config, "predict supports checkpoints trained on standard 640x128 input");
    }
    Tensor x({static_cast<int64_t>(clips.size()), dsp::kMelFrames, dsp::kNumMels});
    for (size_t i = 0; i < clips.size(); ++i) {
      const dsp::MelSpectrogram mel = dsp::mel_spectrogram(clips[i]);
      std::copy(mel.values_db.begin(), mel.values_db.end(),
                x.data.begin() + static_cast<int64_t>(i) * dsp::kMelFrames * dsp::kNumMels);
    }
    models::DeepPrediction pred = models::predict(*ckpt.deep, x);
    for (size_t i = 0; i < clips.size(); ++i) {
      for (size_t j = 0; j < k; ++j) {
        mean_probs[j] += pred.probs.at2(static_cast<int64_t>(i), static_cast<int64_t>(j));
      }
    }
  } else {
    models::FeatureMatrix x;
    for (const auto& clip : clips) x.push_back(features::extract_features_51(clip));
    models::ClassicalPrediction pred =
        ckpt.logreg ? ckpt.logreg->predict_all(x) : ckpt.knn->predict_all(x);
    for (const auto& row : pred.probs) {
      for (size_t j = 0; j < k; ++j) mean_probs[j] += row[j];
    }
  }
  for (double& p : mean_probs) p /= static_cast<double>(clips.size());

  size_t arg = 0;
  std::printf("clips analyzed: %zu\n", clips.size());
  for (size_t j = 0; j < k; ++j) {
    std::printf("%-20s %.6f\n", ckpt.class_order[j].c_str(), mean_probs[j]);
    if (mean_probs[j] > mean_probs[arg]) arg = j;
  }
  std::printf("prediction: %s\n", ckpt.class_order[arg].c_str());
  return 0;
}

// --------------------------------------------------------------- cmd_report

int cmd_report(const std::string& run_dir) {
  if (!fs::is_directory(run_dir)) fail(ErrorKind::io, "run directory not found: " + run_dir);
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(run_dir)) {
    if (entry.is_regular_file() && entry.path().filename() != "summary.txt") {
      files.push_back(entry.path().filename().string());
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) fail(ErrorKind::io, "run directory has no artifacts: " + run_dir);

  std::string out;
  out += "run summary: " + fs::path(run_dir).filename().string() + "\n\n";
  out += "artifacts:\n";
  for (const auto& f : files) out += "  - " + f + "\n";

  auto find_suffix = [&](const std::string& suffix) -> std::string {
    for (const auto& f : files) {
      if (f.ends_with(suffix)) return (fs::path(run_dir) / f).string();
    }
    return "";
  };

  const std::string report = find_suffix("_report.txt");
  if (!report.empty()) {
    std::ifstream f(report);
    std::string body((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    out += "\nclassification report:\n" + body;
  }
  const std::string auc = find_suffix("_auc.csv");
  if (!auc.empty()) {
    std::ifstream f(auc);
    std::string body((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    out += "\nper-class AUC:\n" + body;
  } else {
    out += "\nper-class AUC: absent\n";
  }
  const std::string curves = find_suffix("curves.csv");
  if (!curves.empty()) {
    const auto stats = models::read_curves_csv(curves);
    if (!stats.empty()) {
      char buf[160];
      std::snprintf(buf, sizeof(buf),
                    "\ntraining curves: %zu epochs; final train_acc=%.4f val_acc=%.4f\n",
                    stats.size(), stats.back().train_acc, stats.back().val_acc);
      out += buf;
    }
  }

  std::ofstream f(fs::path(run_dir) / "summary.txt", std::ios::trunc);
  if (!f) fail(ErrorKind::io, "cannot write summary.txt in " + run_dir);
  f << out;
  std::fputs(out.c_str(), stdout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"music genre classification toolkit"};
  app.require_subcommand(1);

  std::string backend = "auto";
  app.add_option("--backend", backend, "kernel backend: auto|scalar|avx2")
      ->check(CLI::IsMember({"auto", "scalar", "avx2"}));

  auto add_common = [](CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "config file (json)");
    cmd->add_option("--set", args.sets, "override a config key, e.g. --set train.lr=0.01");
    cmd->add_option("--out", args.out_dir, "output root directory");
    cmd->add_option("--run-id", args.run_id, "run identifier (default derived from the command)");
    cmd->add_option("--seed", args.seed, "random seed")->each([&args](const std::string&) {
      args.seed_given = true;
    });
  };

  CommonArgs prep_args, extract_args, train_args, eval_args;
  std::string prep_in, extract_manifest, extract_mode = "melspec";
  int prep_train_quota = 900, prep_test_quota = 100;
  int extract_threads = static_cast<int>(std::thread::hardware_concurrency());
  std::string train_data, train_arch;
  std::string eval_checkpoint, eval_data;
  std::string predict_checkpoint, predict_wav;
  std::string report_dir;

  CLI::App* prep = app.add_subcommand("prep", "decode, segment and split a genre/song.wav tree");
  prep->add_option("--in", prep_in, "input directory (genre/song.wav layout)")->required();
  prep->add_option("--train-per-genre", prep_train_quota, "train clips per genre");
  prep->add_option("--test-per-genre", prep_test_quota, "test clips per genre");
  add_common(prep, prep_args);

  CLI::App* extract = app.add_subcommand("extract", "compute mel spectrograms or 51-d features");
  extract->add_option("--manifest", extract_manifest, "manifest csv from prep")->required();
  extract->add_option("--mode", extract_mode, "melspec|features51");
  extract->add_option("--threads", extract_threads, "worker threads");
  add_common(extract, extract_args);

  CLI::App* train = app.add_subcommand("train", "train a model on extracted data");
  train->add_option("--data", train_data, "extract run directory")->required();
  train->add_option("--arch", train_arch, "cnn|rnn|parallel|crnn|logreg|knn")->required();
  add_common(train, train_args);

  CLI::App* evalc = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  evalc->add_option("--checkpoint", eval_checkpoint, "checkpoint base path")->required();
  evalc->add_option("--data", eval_data, "extract run directory")->required();
  add_common(evalc, eval_args);

  CLI::App* predict = app.add_subcommand("predict", "classify a wav file");
  predict->add_option("--checkpoint", predict_checkpoint, "checkpoint base path")->required();
  predict->add_option("--wav", predict_wav, "input wav file")->required();

  CLI::App* report = app.add_subcommand("report", "bundle a run's artifacts into a summary");
  report->add_option("--run-dir", report_dir, "run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (backend == "scalar") kernels::set_backend(kernels::Backend::scalar);
    if (backend == "avx2") kernels::set_backend(kernels::Backend::avx2);

    if (prep->parsed()) return cmd_prep(prep_args, prep_in, prep_train_quota, prep_test_quota);
    if (extract->parsed()) {
      return cmd_extract(extract_args, extract_manifest, extract_mode, extract_threads);
    }
    if (train->parsed()) return cmd_train(train_args, train_data, train_arch);
    if (evalc->parsed()) return cmd_eval(eval_args, eval_checkpoint, eval_data);
    if (predict->parsed()) return cmd_predict(predict_checkpoint, predict_wav);
    if (report->parsed()) return cmd_report(report_dir);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
