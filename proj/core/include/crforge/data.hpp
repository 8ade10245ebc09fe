#ifndef CRFORGE_DATA_HPP_
#define CRFORGE_DATA_HPP_

#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "crforge/compression.hpp"
#include "crforge/config.hpp"
#include "crforge/frame.hpp"
#include "crforge/rng.hpp"

namespace crforge {

enum class Split { kTrain, kVal, kTest };
std::string to_string(Split s);

// An ordered set of frames sharing one video identity and label.
struct ClipRecord {
  std::string clip_id;
  Label label = Label::kReal;
  std::vector<std::string> frame_paths;
  // Optional pre-compressed frame trees, keyed "weak" / "strong".
  std::map<std::string, std::vector<std::string>> precompressed_variants;

  int frame_count() const { return static_cast<int>(frame_paths.size()); }
};

struct DatasetManifest {
  std::vector<ClipRecord> clips;
  Split split = Split::kTrain;
  int frame_height = 0;
  int frame_width = 0;

  long long total_frames() const {
    long long n = 0;
    for (const auto& c : clips) n += c.frame_count();
    return n;
  }
};

struct Dataset {
  std::string root;
  DatasetManifest train;
  DatasetManifest val;
  DatasetManifest test;

  const DatasetManifest& split(Split s) const {
    switch (s) {
      case Split::kTrain: return train;
      case Split::kVal: return val;
      case Split::kTest: return test;
    }
    throw std::invalid_argument("bad split");
  }
};

// Loads root/<split>/<real|fake>/<clip_id>/<index>.png, picking up optional
// sibling trees root_c23/ and root_c40/ as weak/strong pre-compressed
// variants. Uses root/manifest.json as a cache when its content hash still
// matches the tree.
Dataset load_dataset(const std::string& root, int frame_size);

// Writes the manifest cache for a loaded dataset.
void write_manifest_cache(const Dataset& dataset, int frame_size);

// Uniform over ordered distinct frame pairs of one clip.
std::pair<int, int> sample_pair(const ClipRecord& clip, Rng& rng);

// The three views of one training sample. x_w and x_s come from the same
// source frame; x_prime_w from a different frame of the same clip.
struct TrainSample {
  FrameImage x_w;
  FrameImage x_prime_w;
  FrameImage x_s;
  Label label = Label::kReal;
  std::string clip_id;
  int frame_a = 0;
  int frame_b = 0;
};

struct ViewLevels {
  CompressionLevel x_w;
  CompressionLevel x_prime_w;
  CompressionLevel x_s;
};

ViewLevels select_compression_views(CompressionMode mode);

// Loads frames from disk and serves compressed views, memoizing results so
// repeated epochs do not redo DCT work. Pre-compressed variant trees are
// read instead of computed when a clip carries them.
class FrameStore {
 public:
  FrameStore(CompressionConfig compression, bool cache_enabled)
      : compression_(compression), cache_enabled_(cache_enabled) {}

  FrameImage get(const ClipRecord& clip, int frame_index, const CompressionLevel& level);
  const CompressionConfig& compression() const { return compression_; }

 private:
  FrameImage load_raw(const std::string& path);

  CompressionConfig compression_;
  bool cache_enabled_;
  std::unordered_map<std::string, FrameImage> cache_;
};

TrainSample build_sample(const ClipRecord& clip, Rng& rng, FrameStore& store,
                         const ViewLevels& views);

// Fisher-Yates order of [0, n) for one epoch, keyed by (seed, epoch).
std::vector<int> epoch_clip_order(int n_clips, RngSeed seed, int epoch);

// ---- synthetic toy data ----

struct SynthConfig {
  int n_clips = 200;
  int frames_per_clip = 8;
  int frame_size = 64;
  double artifact_strength = 0.1;
  double train_fraction = 0.7;
  double val_fraction = 0.15;
};

// Renders one frame of a synthetic clip. Fake clips add a band-limited
// high-frequency payload inside a soft elliptical face mask; rendering a
// fake clip with `fake=false` yields its pristine counterpart.
FrameImage render_synth_frame(int clip_index, int frame_index, const SynthConfig& config,
                              RngSeed seed, bool fake);

// The soft mask of a clip's face region, in [0,1].
Eigen::MatrixXd synth_face_mask(int clip_index, const SynthConfig& config, RngSeed seed);

// Writes the full PNG tree (balanced labels, split by clip) plus the
// manifest cache, then returns the loaded dataset.
Dataset synth_toy_dataset(const std::string& root, const SynthConfig& config, RngSeed seed,
                          bool force = false);

}  // namespace crforge

#endif  // CRFORGE_DATA_HPP_
