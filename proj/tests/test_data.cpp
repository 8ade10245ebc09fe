#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "crforge/data.hpp"
#include "crforge/errors.hpp"
#include "crforge/png_io.hpp"
#include "doctest.h"

namespace fs = std::filesystem;
using namespace crforge;

namespace {

SynthConfig small_synth() {
  SynthConfig c;
  c.n_clips = 16;
  c.frames_per_clip = 4;
  c.frame_size = 32;
  c.train_fraction = 0.5;
  c.val_fraction = 0.25;
  return c;
}

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "crforge_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir.parent_path());
  return dir;
}

bool files_identical(const fs::path& a, const fs::path& b) {
  std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
  std::string ca((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
  std::string cb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
  return !ca.empty() && ca == cb;
}

}  // namespace

TEST_CASE("synthetic dataset has balanced labels and the requested counts") {
  const fs::path root = fresh_dir("synth_counts");
  Dataset d = synth_toy_dataset(root.string(), small_synth(), RngSeed{3});
  CHECK(d.train.clips.size() == 8);
  CHECK(d.val.clips.size() == 4);
  CHECK(d.test.clips.size() == 4);
  int real = 0, fake = 0;
  for (const auto* split : {&d.train, &d.val, &d.test}) {
    for (const auto& c : split->clips) {
      (c.label == Label::kReal ? real : fake)++;
      CHECK(c.frame_count() == 4);
    }
  }
  CHECK(real == 8);
  CHECK(fake == 8);
}

TEST_CASE("synthetic pixels stay in [0,1] and frames drift smoothly") {
  SynthConfig cfg = small_synth();
  const FrameImage f0 = render_synth_frame(0, 0, cfg, RngSeed{5}, false);
  const FrameImage f1 = render_synth_frame(0, 1, cfg, RngSeed{5}, false);
  for (int c = 0; c < 3; ++c) {
    CHECK(f0.channels[c].minCoeff() >= 0.0);
    CHECK(f0.channels[c].maxCoeff() <= 1.0);
  }
  const double drift = (f0.channels[0] - f1.channels[0]).cwiseAbs().maxCoeff();
  CHECK(drift > 0.0);
  CHECK(drift < 0.5);
}

TEST_CASE("fake frames differ from their pristine counterpart only inside the mask") {
  SynthConfig cfg = small_synth();
  const int clip = 7;
  const Eigen::MatrixXd mask = synth_face_mask(clip, cfg, RngSeed{5});
  const FrameImage real = render_synth_frame(clip, 2, cfg, RngSeed{5}, false);
  const FrameImage fake = render_synth_frame(clip, 2, cfg, RngSeed{5}, true);
  double inside = 0.0;
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < cfg.frame_size; ++y) {
      for (int x = 0; x < cfg.frame_size; ++x) {
        const double diff = std::abs(fake.channels[c](y, x) - real.channels[c](y, x));
        if (mask(y, x) == 0.0) {
          CHECK(diff == 0.0);
        } else {
          inside += diff;
        }
      }
    }
  }
  CHECK(inside > 0.0);
}

TEST_CASE("same seed renders bit-identical PNG trees") {
  const fs::path a = fresh_dir("synth_det_a");
  const fs::path b = fresh_dir("synth_det_b");
  synth_toy_dataset(a.string(), small_synth(), RngSeed{7});
  synth_toy_dataset(b.string(), small_synth(), RngSeed{7});
  int compared = 0;
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".png") continue;
    const fs::path rel = fs::relative(entry.path(), a);
    CHECK(files_identical(entry.path(), b / rel));
    ++compared;
  }
  CHECK(compared == 16 * 4);
}

TEST_CASE("different seeds render different trees") {
  const fs::path a = fresh_dir("synth_seed_a");
  const fs::path b = fresh_dir("synth_seed_b");
  synth_toy_dataset(a.string(), small_synth(), RngSeed{7});
  synth_toy_dataset(b.string(), small_synth(), RngSeed{8});
  bool any_diff = false;
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".png") continue;
    const fs::path rel = fs::relative(entry.path(), a);
    if (!files_identical(entry.path(), b / rel)) any_diff = true;
  }
  CHECK(any_diff);
}

TEST_CASE("generator refuses to clobber a non-empty directory without force") {
  const fs::path root = fresh_dir("synth_force");
  synth_toy_dataset(root.string(), small_synth(), RngSeed{3});
  CHECK_THROWS_AS(synth_toy_dataset(root.string(), small_synth(), RngSeed{3}), IoError);
  CHECK_NOTHROW(synth_toy_dataset(root.string(), small_synth(), RngSeed{3}, true));
}

TEST_CASE("loader validates clip structure") {
  const fs::path root = fresh_dir("bad_tree");
  // One-frame clip violates the pair-sampling invariant.
  fs::create_directories(root / "train" / "real" / "clip_a");
  fs::create_directories(root / "train" / "fake" / "clip_b");
  const FrameImage f = render_synth_frame(0, 0, small_synth(), RngSeed{1}, false);
  write_png((root / "train" / "real" / "clip_a" / "0.png").string(), f);
  write_png((root / "train" / "fake" / "clip_b" / "0.png").string(), f);
  write_png((root / "train" / "fake" / "clip_b" / "1.png").string(), f);
  CHECK_THROWS_AS(load_dataset(root.string(), 32), DatasetError);
}

TEST_CASE("loader rejects an empty class directory") {
  const fs::path root = fresh_dir("empty_class");
  fs::create_directories(root / "train" / "real" / "clip_a");
  fs::create_directories(root / "train" / "fake");
  const FrameImage f = render_synth_frame(0, 0, small_synth(), RngSeed{1}, false);
  write_png((root / "train" / "real" / "clip_a" / "0.png").string(), f);
  write_png((root / "train" / "real" / "clip_a" / "1.png").string(), f);
  CHECK_THROWS_AS(load_dataset(root.string(), 32), DatasetError);
}

TEST_CASE("loader rejects mismatched pre-compressed trees") {
  const fs::path root = fresh_dir("variants");
  synth_toy_dataset(root.string(), small_synth(), RngSeed{4});
  // Clone the tree as a strong-compressed sibling, then drop one frame.
  const fs::path vroot = root.parent_path() / (root.filename().string() + "_c40");
  fs::remove_all(vroot);
  fs::copy(root, vroot, fs::copy_options::recursive);
  fs::remove(vroot / "manifest.json");
  bool removed = false;
  for (const auto& entry : fs::recursive_directory_iterator(vroot)) {
    if (entry.is_regular_file() && entry.path().filename() == "1.png" && !removed) {
      fs::remove(entry.path());
      removed = true;
      break;
    }
  }
  REQUIRE(removed);
  fs::remove(root / "manifest.json");  // force a fresh scan
  CHECK_THROWS_AS(load_dataset(root.string(), 32), DatasetError);
  fs::remove_all(vroot);
}

TEST_CASE("pre-compressed variants are read instead of computed") {
  const fs::path root = fresh_dir("variants_used");
  synth_toy_dataset(root.string(), small_synth(), RngSeed{4});
  const fs::path vroot = root.parent_path() / (root.filename().string() + "_c23");
  fs::remove_all(vroot);
  fs::copy(root, vroot, fs::copy_options::recursive);
  fs::remove(vroot / "manifest.json");
  // Overwrite every variant frame with a constant so reads are recognizable.
  FrameImage marker = FrameImage::zeros(32, 32);
  for (auto& ch : marker.channels) ch.setConstant(128.0 / 255.0);
  for (const auto& entry : fs::recursive_directory_iterator(vroot)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") {
      write_png(entry.path().string(), marker);
    }
  }
  fs::remove(root / "manifest.json");
  Dataset d = load_dataset(root.string(), 32);
  REQUIRE(!d.train.clips.empty());
  CHECK(d.train.clips[0].precompressed_variants.count("weak") == 1);
  FrameStore store(CompressionConfig{}, true);
  const FrameImage got = store.get(d.train.clips[0], 0, CompressionLevel::weak());
  CHECK(got.channels[0](0, 0) == doctest::Approx(128.0 / 255.0).epsilon(1e-9));
  CHECK((got.channels[1].array() - got.channels[1](0, 0)).abs().maxCoeff() == 0.0);
  // Strong still computes from the base tree (no _c40 sibling).
  const FrameImage strong = store.get(d.train.clips[0], 0, CompressionLevel::strong());
  CHECK((strong.channels[0] - got.channels[0]).cwiseAbs().maxCoeff() > 0.0);
  fs::remove_all(vroot);
}

TEST_CASE("manifest cache reloads identically") {
  const fs::path root = fresh_dir("cache");
  Dataset first = synth_toy_dataset(root.string(), small_synth(), RngSeed{6});
  CHECK(fs::exists(root / "manifest.json"));
  Dataset second = load_dataset(root.string(), 32);
  REQUIRE(first.train.clips.size() == second.train.clips.size());
  for (size_t i = 0; i < first.train.clips.size(); ++i) {
    CHECK(first.train.clips[i].clip_id == second.train.clips[i].clip_id);
    CHECK(first.train.clips[i].frame_paths == second.train.clips[i].frame_paths);
  }
}

TEST_CASE("split membership is disjoint by clip id") {
  const fs::path root = fresh_dir("disjoint");
  Dataset d = synth_toy_dataset(root.string(), small_synth(), RngSeed{9});
  std::set<std::string> seen;
  for (const auto* split : {&d.train, &d.val, &d.test}) {
    for (const auto& c : split->clips) {
      CHECK(seen.insert(c.clip_id).second);
    }
  }
}

TEST_CASE("sample_pair draws distinct indices uniformly") {
  ClipRecord two;
  two.frame_paths = {"a", "b"};
  Rng rng = seeded_rng(RngSeed{11}, "pair2");
  for (int i = 0; i < 50; ++i) {
    const auto [a, b] = sample_pair(two, rng);
    CHECK(a != b);
    CHECK(((a == 0 && b == 1) || (a == 1 && b == 0)));
  }

  ClipRecord eight;
  for (int i = 0; i < 8; ++i) eight.frame_paths.push_back("f" + std::to_string(i));
  Rng rng8 = seeded_rng(RngSeed{12}, "pair8");
  std::vector<int> first_counts(8, 0);
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    const auto [a, b] = sample_pair(eight, rng8);
    CHECK(a != b);
    first_counts[a]++;
  }
  for (int i = 0; i < 8; ++i) {
    CHECK(std::abs(first_counts[i] / static_cast<double>(draws) - 0.125) < 0.02);
  }
}

TEST_CASE("build_sample is deterministic and ties views to the same source frame") {
  const fs::path root = fresh_dir("build_sample");
  Dataset d = synth_toy_dataset(root.string(), small_synth(), RngSeed{13});
  FrameStore store(CompressionConfig{}, true);
  const ClipRecord& clip = d.train.clips[0];
  const ViewLevels mixed = select_compression_views(CompressionMode::kMixed);

  Rng r1 = seeded_rng(RngSeed{21}, "sample/0");
  Rng r2 = seeded_rng(RngSeed{21}, "sample/0");
  TrainSample s1 = build_sample(clip, r1, store, mixed);
  TrainSample s2 = build_sample(clip, r2, store, mixed);
  CHECK(s1.frame_a == s2.frame_a);
  CHECK(s1.frame_b == s2.frame_b);
  for (int c = 0; c < 3; ++c) CHECK(s1.x_w.channels[c] == s2.x_w.channels[c]);

  CHECK(s1.frame_a != s1.frame_b);
  const FrameImage expected_strong = store.get(clip, s1.frame_a, CompressionLevel::strong());
  for (int c = 0; c < 3; ++c) CHECK(s1.x_s.channels[c] == expected_strong.channels[c]);
}

TEST_CASE("raw_and_strong keeps x_w bit-equal to the source frame") {
  const fs::path root = fresh_dir("raw_mode");
  Dataset d = synth_toy_dataset(root.string(), small_synth(), RngSeed{14});
  FrameStore store(CompressionConfig{}, true);
  const ClipRecord& clip = d.train.clips[0];
  Rng rng = seeded_rng(RngSeed{22}, "sample/0");
  const TrainSample s =
      build_sample(clip, rng, store, select_compression_views(CompressionMode::kRawAndStrong));
  const FrameImage original = read_png(clip.frame_paths[s.frame_a]);
  for (int c = 0; c < 3; ++c) CHECK(s.x_w.channels[c] == original.channels[c]);
  // The strong view differs for textured frames.
  CHECK((s.x_s.channels[0] - s.x_w.channels[0]).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("compression view table matches the training modes") {
  CHECK(select_compression_views(CompressionMode::kMixed).x_s == CompressionLevel::strong());
  CHECK(select_compression_views(CompressionMode::kMixed).x_w == CompressionLevel::weak());
  CHECK(select_compression_views(CompressionMode::kSingleWeak).x_s == CompressionLevel::weak());
  CHECK(select_compression_views(CompressionMode::kSingleStrong).x_w ==
        CompressionLevel::strong());
  CHECK(select_compression_views(CompressionMode::kRawAndStrong).x_w == CompressionLevel::raw());
  CHECK(select_compression_views(CompressionMode::kRawAndStrong).x_prime_w ==
        CompressionLevel::raw());
}

TEST_CASE("epoch order is a deterministic permutation that varies by epoch") {
  const auto a = epoch_clip_order(20, RngSeed{5}, 0);
  const auto b = epoch_clip_order(20, RngSeed{5}, 0);
  const auto c = epoch_clip_order(20, RngSeed{5}, 1);
  CHECK(a == b);
  CHECK(a != c);
  std::vector<int> sorted = a;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 20; ++i) CHECK(sorted[i] == i);
}

TEST_CASE("png round-trip preserves 8-bit pixel values") {
  const fs::path root = fresh_dir("png_rt");
  fs::create_directories(root);
  FrameImage f = FrameImage::zeros(16, 16);
  Rng rng = seeded_rng(RngSeed{15}, "png");
  for (auto& ch : f.channels) {
    for (int y = 0; y < 16; ++y) {
      for (int x = 0; x < 16; ++x) ch(y, x) = std::floor(rng.uniform(0.0, 256.0)) / 255.0;
    }
    ch = ch.cwiseMin(1.0);
  }
  const std::string path = (root / "frame.png").string();
  write_png(path, f);
  const FrameImage back = read_png(path);
  for (int c = 0; c < 3; ++c) {
    CHECK((back.channels[c] - f.channels[c]).cwiseAbs().maxCoeff() < 1e-12);
  }
  CHECK(png_dimensions(path) == std::pair<int, int>(16, 16));
}
