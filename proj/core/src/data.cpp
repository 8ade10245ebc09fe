#include "crforge/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "crforge/errors.hpp"
#include "crforge/png_io.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace crforge {

using nlohmann::json;

std::string to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

namespace {

bool numeric_stem(const std::string& stem) {
  return !stem.empty() && std::all_of(stem.begin(), stem.end(),
                                      [](unsigned char c) { return std::isdigit(c); });
}

std::vector<std::string> sorted_frame_files(const fs::path& clip_dir) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(clip_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end(), [](const fs::path& a, const fs::path& b) {
    const std::string sa = a.stem().string(), sb = b.stem().string();
    if (numeric_stem(sa) && numeric_stem(sb)) return std::stoll(sa) < std::stoll(sb);
    return sa < sb;
  });
  std::vector<std::string> out;
  out.reserve(files.size());
  for (const auto& f : files) out.push_back(f.string());
  return out;
}

fs::path variant_root(const fs::path& root, const std::string& suffix) {
  fs::path clean = root;
  if (clean.filename().empty()) clean = clean.parent_path();  // strip trailing '/'
  return clean.parent_path() / (clean.filename().string() + suffix);
}

// Hash of the listing (relative paths + sizes) across the root and the
// variant trees, cheap enough to recompute on every load.
std::uint64_t listing_hash(const fs::path& root) {
  std::vector<std::string> entries;
  for (const auto& base : {root, variant_root(root, "_c23"), variant_root(root, "_c40")}) {
    if (!fs::exists(base)) continue;
    for (const auto& entry : fs::recursive_directory_iterator(base)) {
      if (entry.is_regular_file() && entry.path().extension() == ".png") {
        entries.push_back(fs::relative(entry.path(), root.parent_path()).string() + ":" +
                          std::to_string(entry.file_size()));
      }
    }
  }
  std::sort(entries.begin(), entries.end());
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& e : entries) {
    for (unsigned char c : e) {
      h ^= c;
      h *= 0x100000001b3ull;
    }
    h ^= '\n';
    h *= 0x100000001b3ull;
  }
  return h;
}

DatasetManifest load_split(const fs::path& root, Split split, int frame_size,
                           bool validate_frames) {
  DatasetManifest manifest;
  manifest.split = split;
  manifest.frame_height = frame_size;
  manifest.frame_width = frame_size;
  const fs::path split_dir = root / to_string(split);
  if (!fs::exists(split_dir)) return manifest;

  for (const char* label_name : {"real", "fake"}) {
    const fs::path label_dir = split_dir / label_name;
    if (!fs::exists(label_dir) || fs::is_empty(label_dir)) {
      throw DatasetError("empty or missing class directory: " + label_dir.string());
    }
    std::vector<fs::path> clip_dirs;
    for (const auto& entry : fs::directory_iterator(label_dir)) {
      if (entry.is_directory()) clip_dirs.push_back(entry.path());
    }
    std::sort(clip_dirs.begin(), clip_dirs.end());
    for (const auto& clip_dir : clip_dirs) {
      ClipRecord clip;
      clip.clip_id = clip_dir.filename().string();
      clip.label = std::string(label_name) == "real" ? Label::kReal : Label::kFake;
      clip.frame_paths = sorted_frame_files(clip_dir);
      if (clip.frame_count() < 2) {
        throw DatasetError("clip " + clip.clip_id + " has fewer than 2 frames");
      }
      if (validate_frames) {
        for (const auto& path : clip.frame_paths) {
          const auto [h, w] = png_dimensions(path);
          if (h != frame_size || w != frame_size || h % 8 != 0 || w % 8 != 0) {
            throw DatasetError("frame " + path + " is " + std::to_string(w) + "x" +
                               std::to_string(h) + ", expected " + std::to_string(frame_size) +
                               "x" + std::to_string(frame_size) + " (multiple of 8)");
          }
        }
      }
      // Pre-compressed variant trees mirror the directory layout.
      for (const auto& [suffix, key] :
           std::vector<std::pair<std::string, std::string>>{{"_c23", "weak"}, {"_c40", "strong"}}) {
        const fs::path vroot = variant_root(root, suffix);
        if (!fs::exists(vroot)) continue;
        const fs::path vclip = vroot / to_string(split) / label_name / clip.clip_id;
        if (!fs::exists(vclip)) {
          throw DatasetError("pre-compressed tree " + vroot.string() + " is missing clip " +
                             clip.clip_id);
        }
        auto vframes = sorted_frame_files(vclip);
        if (vframes.size() != clip.frame_paths.size()) {
          throw DatasetError("pre-compressed tree " + vroot.string() + " has " +
                             std::to_string(vframes.size()) + " frames for clip " + clip.clip_id +
                             ", expected " + std::to_string(clip.frame_paths.size()));
        }
        clip.precompressed_variants[key] = std::move(vframes);
      }
      manifest.clips.push_back(std::move(clip));
    }
  }

  // clip_ids unique within the split.
  std::vector<std::string> ids;
  for (const auto& c : manifest.clips) ids.push_back(c.clip_id);
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
    throw DatasetError("duplicate clip_id in split " + to_string(split));
  }
  return manifest;
}

fs::path cache_path(const fs::path& root) { return root / "manifest.json"; }

json manifest_to_json(const DatasetManifest& m) {
  json clips = json::array();
  for (const auto& c : m.clips) {
    json jc = {{"clip_id", c.clip_id},
               {"label", label_name(c.label)},
               {"frames", c.frame_paths},
               {"n_frames", c.frame_count()}};
    if (!c.precompressed_variants.empty()) {
      json v;
      for (const auto& [key, paths] : c.precompressed_variants) v[key] = paths;
      jc["precompressed"] = v;
    }
    clips.push_back(jc);
  }
  return clips;
}

DatasetManifest manifest_from_json(const json& clips, Split split, int frame_size) {
  DatasetManifest m;
  m.split = split;
  m.frame_height = frame_size;
  m.frame_width = frame_size;
  for (const auto& jc : clips) {
    ClipRecord c;
    c.clip_id = jc.at("clip_id").get<std::string>();
    c.label = jc.at("label").get<std::string>() == "real" ? Label::kReal : Label::kFake;
    jc.at("frames").get_to(c.frame_paths);
    if (jc.contains("precompressed")) {
      for (const auto& [key, paths] : jc.at("precompressed").items()) {
        paths.get_to(c.precompressed_variants[key]);
      }
    }
    m.clips.push_back(std::move(c));
  }
  return m;
}

}  // namespace

Dataset load_dataset(const std::string& root_str, int frame_size) {
  const fs::path root(root_str);
  if (!fs::exists(root)) throw DatasetError("dataset root does not exist: " + root_str);
  bool any_split = false;
  for (const char* s : {"train", "val", "test"}) any_split |= fs::exists(root / s);
  if (!any_split) throw DatasetError("no train/val/test directories under " + root_str);

  const std::uint64_t hash = listing_hash(root);
  const fs::path cache = cache_path(root);
  if (fs::exists(cache)) {
    try {
      std::ifstream in(cache);
      json j;
      in >> j;
      if (j.at("hash").get<std::uint64_t>() == hash &&
          j.at("frame_size").get<int>() == frame_size) {
        Dataset d;
        d.root = root_str;
        d.train = manifest_from_json(j.at("splits").at("train"), Split::kTrain, frame_size);
        d.val = manifest_from_json(j.at("splits").at("val"), Split::kVal, frame_size);
        d.test = manifest_from_json(j.at("splits").at("test"), Split::kTest, frame_size);
        return d;
      }
    } catch (const std::exception&) {
      // Stale or malformed cache; fall through to a full scan.
    }
  }

  Dataset d;
  d.root = root_str;
  d.train = load_split(root, Split::kTrain, frame_size, true);
  d.val = load_split(root, Split::kVal, frame_size, true);
  d.test = load_split(root, Split::kTest, frame_size, true);

  if (!d.train.clips.empty()) {
    bool has_real = false, has_fake = false;
    for (const auto& c : d.train.clips) {
      has_real |= c.label == Label::kReal;
      has_fake |= c.label == Label::kFake;
    }
    if (!has_real || !has_fake) throw DatasetError("train split must contain both labels");
  }
  write_manifest_cache(d, frame_size);
  return d;
}

void write_manifest_cache(const Dataset& dataset, int frame_size) {
  json j;
  j["frame_size"] = frame_size;
  j["hash"] = listing_hash(fs::path(dataset.root));
  j["splits"] = {{"train", manifest_to_json(dataset.train)},
                 {"val", manifest_to_json(dataset.val)},
                 {"test", manifest_to_json(dataset.test)}};
  std::ofstream out(cache_path(fs::path(dataset.root)));
  if (!out) throw IoError("cannot write manifest cache under " + dataset.root);
  out << j.dump(1) << "\n";
}

std::pair<int, int> sample_pair(const ClipRecord& clip, Rng& rng) {
  const int t = clip.frame_count();
  if (t < 2) throw DatasetError("sample_pair: clip has fewer than 2 frames");
  const int a = static_cast<int>(rng.uniform_index(t));
  int b = static_cast<int>(rng.uniform_index(t - 1));
  if (b >= a) ++b;
  return {a, b};
}

ViewLevels select_compression_views(CompressionMode mode) {
  switch (mode) {
    case CompressionMode::kMixed:
      return {CompressionLevel::weak(), CompressionLevel::weak(), CompressionLevel::strong()};
    case CompressionMode::kSingleWeak:
      return {CompressionLevel::weak(), CompressionLevel::weak(), CompressionLevel::weak()};
    case CompressionMode::kSingleStrong:
      return {CompressionLevel::strong(), CompressionLevel::strong(), CompressionLevel::strong()};
    case CompressionMode::kRawAndStrong:
      return {CompressionLevel::raw(), CompressionLevel::raw(), CompressionLevel::strong()};
  }
  throw std::invalid_argument("bad compression mode");
}

FrameImage FrameStore::load_raw(const std::string& path) {
  try {
    return read_png(path);
  } catch (const IoError& e) {
    throw DatasetError(std::string("failed to read frame: ") + e.what());
  }
}

FrameImage FrameStore::get(const ClipRecord& clip, int frame_index,
                           const CompressionLevel& level) {
  if (frame_index < 0 || frame_index >= clip.frame_count()) {
    throw std::invalid_argument("FrameStore::get: frame index out of range");
  }

  // Pre-compressed trees substitute for on-the-fly weak/strong compression.
  std::string variant_key;
  if (level.kind == CompressionKind::kWeak) variant_key = "weak";
  if (level.kind == CompressionKind::kStrong) variant_key = "strong";
  if (!variant_key.empty()) {
    auto it = clip.precompressed_variants.find(variant_key);
    if (it != clip.precompressed_variants.end()) {
      const std::string& vpath = it->second[frame_index];
      if (!cache_enabled_) return load_raw(vpath);
      const std::string key = vpath + "|raw";
      auto hit = cache_.find(key);
      if (hit != cache_.end()) return hit->second;
      FrameImage f = load_raw(vpath);
      return cache_.emplace(key, std::move(f)).first->second;
    }
  }

  const std::string& path = clip.frame_paths[frame_index];
  const std::string key = path + "|" + to_string(level);
  if (cache_enabled_) {
    auto hit = cache_.find(key);
    if (hit != cache_.end()) return hit->second;
  }
  FrameImage raw = [&] {
    if (cache_enabled_ && level.kind != CompressionKind::kRaw) {
      // Reuse the cached raw decode when compressing.
      const std::string raw_key = path + "|raw";
      auto hit = cache_.find(raw_key);
      if (hit != cache_.end()) return hit->second;
      FrameImage f = load_raw(path);
      return cache_.emplace(raw_key, std::move(f)).first->second;
    }
    return load_raw(path);
  }();
  raw.source_id = clip.clip_id;
  raw.frame_index = frame_index;
  if (level.kind == CompressionKind::kRaw) {
    if (cache_enabled_) cache_.emplace(key, raw);
    return raw;
  }
  FrameImage out = compress_frame(raw, level, compression_);
  out.source_id = clip.clip_id;
  out.frame_index = frame_index;
  if (!cache_enabled_) return out;
  return cache_.emplace(key, std::move(out)).first->second;
}

TrainSample build_sample(const ClipRecord& clip, Rng& rng, FrameStore& store,
                         const ViewLevels& views) {
  const auto [a, b] = sample_pair(clip, rng);
  TrainSample sample;
  sample.x_w = store.get(clip, a, views.x_w);
  sample.x_prime_w = store.get(clip, b, views.x_prime_w);
  sample.x_s = store.get(clip, a, views.x_s);
  sample.label = clip.label;
  sample.clip_id = clip.clip_id;
  sample.frame_a = a;
  sample.frame_b = b;
  return sample;
}

std::vector<int> epoch_clip_order(int n_clips, RngSeed seed, int epoch) {
  Rng rng = seeded_rng(seed, "order/" + std::to_string(epoch));
  std::vector<int> order(n_clips);
  for (int i = 0; i < n_clips; ++i) order[i] = i;
  for (int i = n_clips - 1; i > 0; --i) {
    const int j = static_cast<int>(rng.uniform_index(i + 1));
    std::swap(order[i], order[j]);
  }
  return order;
}

// ---- synthetic toy data ----

namespace {

struct Wave {
  double amplitude, fx, fy, phase, drift;
};

struct ClipParams {
  std::vector<Wave> waves;
  double tint[3];
  double ellipse_cx, ellipse_cy, ellipse_rx, ellipse_ry, ellipse_angle;
  double face_bump;
};

ClipParams clip_params(int clip_index, const SynthConfig& config, RngSeed seed) {
  Rng rng = seeded_rng(seed, "clip/" + std::to_string(clip_index));
  ClipParams p;
  for (int j = 0; j < 5; ++j) {
    Wave w;
    w.amplitude = rng.uniform(0.03, 0.07);
    const double angle = rng.uniform(0.0, 2.0 * M_PI);
    const double freq = rng.uniform(0.008, 0.06);  // cycles/px, band-limited low
    w.fx = freq * std::cos(angle);
    w.fy = freq * std::sin(angle);
    w.phase = rng.uniform(0.0, 2.0 * M_PI);
    w.drift = rng.uniform(0.05, 0.3);
    p.waves.push_back(w);
  }
  for (double& t : p.tint) t = rng.uniform(-0.06, 0.06);
  const double s = config.frame_size;
  p.ellipse_cx = rng.uniform(0.42, 0.58) * s;
  p.ellipse_cy = rng.uniform(0.42, 0.58) * s;
  p.ellipse_rx = rng.uniform(0.18, 0.28) * s;
  p.ellipse_ry = rng.uniform(0.24, 0.34) * s;
  p.ellipse_angle = rng.uniform(-0.3, 0.3);
  p.face_bump = rng.uniform(0.03, 0.08);
  return p;
}

Eigen::MatrixXd face_mask(const ClipParams& p, int size) {
  Eigen::MatrixXd mask(size, size);
  const double ca = std::cos(p.ellipse_angle), sa = std::sin(p.ellipse_angle);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double dx = x - p.ellipse_cx, dy = y - p.ellipse_cy;
      const double u = (ca * dx + sa * dy) / p.ellipse_rx;
      const double v = (-sa * dx + ca * dy) / p.ellipse_ry;
      const double d = u * u + v * v;
      mask(y, x) = std::min(1.0, std::max(0.0, (1.0 - d) * 6.0));
    }
  }
  return mask;
}

// Clip-level texture fields built directly in the DCT domain and sized
// against the standard quantization table.
//
// benign: high-frequency texture shared by the real and fake render of a
// clip, inside the window that fine quantization keeps and coarse
// quantization rounds away. Models trained only on strongly compressed data
// never see it and misread ordinary texture as evidence.
//
// payload: the splice artifact, present only in fakes. Its dominant
// component lives in the same erasable window, on cells the benign field
// leaves free so the two never sum past a coarse quantizer step; a sparse
// per-clip share of larger coefficients survives both qualities, and many
// clips carry none of those at all.
struct TextureFields {
  Eigen::MatrixXd benign;
  Eigen::MatrixXd payload;
};

TextureFields synth_texture_fields(int clip_index, const SynthConfig& config, RngSeed seed,
                                   bool need_payload) {
  Rng benign_rng = seeded_rng(seed, "benign/" + std::to_string(clip_index));
  Rng payload_rng = seeded_rng(seed, "payload/" + std::to_string(clip_index));
  const int size = config.frame_size;
  const auto& basis = dct_basis_matrix();
  const QuantizationTable base = quant_table_for_quality(50);
  const double gain = config.artifact_strength / 0.1;
  const double survivor_density =
      payload_rng.uniform() < 0.45 ? 0.0 : payload_rng.uniform(0.01, 0.09);

  TextureFields fields;
  fields.benign = Eigen::MatrixXd::Zero(size, size);
  fields.payload = Eigen::MatrixXd::Zero(size, size);
  for (int by = 0; by < size; by += 8) {
    for (int bx = 0; bx < size; bx += 8) {
      Eigen::Matrix<double, 8, 8> benign_coeffs = Eigen::Matrix<double, 8, 8>::Zero();
      Eigen::Matrix<double, 8, 8> payload_coeffs = Eigen::Matrix<double, 8, 8>::Zero();
      for (int u = 0; u < 8; ++u) {
        for (int v = 0; v < 8; ++v) {
          if (u + v < 3) continue;
          const double entry = base.values(u, v);
          if (entry > 100.0) continue;
          bool benign_active = false;
          if (benign_rng.uniform() < 0.12) {
            benign_active = true;
            const double sign = benign_rng.uniform() < 0.5 ? -1.0 : 1.0;
            benign_coeffs(u, v) = sign * gain * entry * benign_rng.uniform(0.45, 0.8);
          }
          // The payload stream always consumes its draws, so its pattern
          // stays deterministic regardless of where the benign field landed.
          const double draw = payload_rng.uniform();
          const double sign = payload_rng.uniform() < 0.5 ? -1.0 : 1.0;
          const double magnitude = payload_rng.uniform(0.55, 0.85);
          const double survivor_magnitude = payload_rng.uniform(1.1, 1.6);
          if (benign_active) continue;
          if (draw < 0.7) {
            payload_coeffs(u, v) = sign * gain * entry * magnitude;
          } else if (u + v >= 4 && draw < 0.7 + survivor_density) {
            payload_coeffs(u, v) = sign * gain * entry * survivor_magnitude;
          }
        }
      }
      fields.benign.block<8, 8>(by, bx) = basis.transpose() * benign_coeffs * basis;
      if (need_payload) {
        fields.payload.block<8, 8>(by, bx) = basis.transpose() * payload_coeffs * basis;
      }
    }
  }
  fields.benign /= 255.0;  // codec units -> [0,1] pixel units
  fields.payload /= 255.0;
  return fields;
}

}  // namespace

Eigen::MatrixXd synth_face_mask(int clip_index, const SynthConfig& config, RngSeed seed) {
  return face_mask(clip_params(clip_index, config, seed), config.frame_size);
}

FrameImage render_synth_frame(int clip_index, int frame_index, const SynthConfig& config,
                              RngSeed seed, bool fake) {
  const int size = config.frame_size;
  const ClipParams p = clip_params(clip_index, config, seed);
  const Eigen::MatrixXd mask = face_mask(p, size);

  // Smoothly drifting band-limited luminance field.
  Eigen::MatrixXd lum(size, size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      double v = 0.5;
      for (const auto& w : p.waves) {
        v += w.amplitude *
             std::sin(2.0 * M_PI * (w.fx * x + w.fy * y) + w.phase + frame_index * w.drift);
      }
      lum(y, x) = v;
    }
  }

  Rng noise_rng = seeded_rng(
      seed, "noise/" + std::to_string(clip_index) + "/" + std::to_string(frame_index));
  const TextureFields fields = synth_texture_fields(clip_index, config, seed, fake);
  const Eigen::MatrixXd& benign = fields.benign;
  const Eigen::MatrixXd& payload = fields.payload;
  const double channel_scale[3] = {0.9, 1.0, 1.1};

  FrameImage frame = FrameImage::zeros(size, size);
  frame.source_id = "clip_" + std::to_string(clip_index);
  frame.frame_index = frame_index;
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        double v = lum(y, x) + p.tint[c] + p.face_bump * mask(y, x);
        v = std::min(0.88, std::max(0.12, v));
        v += noise_rng.normal(0.0, 0.008) + benign(y, x) * channel_scale[c];
        if (fake) v += mask(y, x) * payload(y, x) * channel_scale[c];
        frame.channels[c](y, x) = std::min(1.0, std::max(0.0, v));
      }
    }
  }
  return frame;
}

Dataset synth_toy_dataset(const std::string& root_str, const SynthConfig& config, RngSeed seed,
                          bool force) {
  if (config.frame_size % 8 != 0 || config.frame_size <= 0) {
    throw std::invalid_argument("synth frame_size must be a positive multiple of 8");
  }
  if (config.n_clips < 2 || config.n_clips % 2 != 0) {
    throw std::invalid_argument("synth n_clips must be even and >= 2");
  }
  if (config.frames_per_clip < 2) {
    throw std::invalid_argument("synth frames_per_clip must be >= 2");
  }
  const fs::path root(root_str);
  if (fs::exists(root) && !fs::is_empty(root)) {
    if (!force) {
      throw IoError("output directory " + root_str + " is not empty (use force to overwrite)");
    }
    fs::remove_all(root);
  }

  const int per_label = config.n_clips / 2;
  const int n_train = static_cast<int>(std::round(per_label * config.train_fraction));
  const int n_val = static_cast<int>(std::round(per_label * config.val_fraction));
  if (n_train < 1 || n_val < 1 || n_train + n_val >= per_label) {
    throw std::invalid_argument("synth split fractions leave an empty split");
  }

  for (int clip = 0; clip < config.n_clips; ++clip) {
    const bool fake = clip >= per_label;
    const int within_label = fake ? clip - per_label : clip;
    const char* split = within_label < n_train          ? "train"
                        : within_label < n_train + n_val ? "val"
                                                         : "test";
    char clip_name[32];
    std::snprintf(clip_name, sizeof(clip_name), "clip_%04d", clip);
    const fs::path dir = root / split / (fake ? "fake" : "real") / clip_name;
    fs::create_directories(dir);
    for (int t = 0; t < config.frames_per_clip; ++t) {
      const FrameImage frame = render_synth_frame(clip, t, config, seed, fake);
      write_png((dir / (std::to_string(t) + ".png")).string(), frame);
    }
  }
  return load_dataset(root_str, config.frame_size);
}

}  // namespace crforge
