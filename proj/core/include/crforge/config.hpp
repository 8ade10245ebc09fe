#ifndef CRFORGE_CONFIG_HPP_
#define CRFORGE_CONFIG_HPP_

#include <string>
#include <vector>

#include "crforge/compression.hpp"
#include "crforge/losses.hpp"
#include "crforge/model.hpp"

namespace crforge {

enum class Strategy { kProposed, kCeOnly, kCeL1, kCeTriplet, kCeGan };
enum class CompressionMode { kMixed, kSingleWeak, kSingleStrong, kRawAndStrong };

Strategy parse_strategy(const std::string& s);
CompressionMode parse_compression_mode(const std::string& s);
std::string to_string(Strategy s);
std::string to_string(CompressionMode m);

struct MemoryConfig {
  int capacity = 16384;
  bool prefill = true;
  int warmup_steps = 0;  // alternative cold-start mode when prefill is off
};

struct LossConfig {
  Temperatures temperatures;
  LossWeights weights;
  double triplet_margin = 0.2;
  std::string contrastive_reduction = "mean";  // or "subset_sum"
  double gan_weight = 1.0;

  ContrastiveReduction reduction() const;
};

struct TrainSettings {
  std::string strategy = "proposed";
  std::string compression_mode = "mixed";
  int epochs = 5;
  int batch_size = 32;
  double learning_rate = 0.01;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  int lr_halve_every_epochs = 2;
  double momentum_coefficient = 0.999;
  bool warmup_enabled = false;
  double warmup_initial_beta = 0.01;
  long long warmup_switch_step = 2000;
  double warmup_final_beta = 1.0;
  std::uint64_t seed = 0;
  bool momentum_eval = false;  // track twins under ce_only (ablation row)
  double grad_clip_gan = 5.0;

  void validate() const;
};

struct DataConfig {
  std::string root;
  int frame_size = 64;
  int n_clips = 200;
  int frames_per_clip = 8;
  double artifact_strength = 0.1;
  std::uint64_t seed = 0;
  double train_fraction = 0.7;
  double val_fraction = 0.15;
  bool cache_frames = true;
};

struct EvalConfig {
  std::vector<std::string> levels = {"weak", "strong", "raw", "75", "50", "20", "10"};
  std::string aggregation = "frame";  // or "video_majority"
  bool use_online_branch = false;
  int batch_size = 64;
};

struct Config {
  ModelConfig model;
  CompressionConfig compression;
  MemoryConfig memory;
  LossConfig loss;
  TrainSettings train;
  DataConfig data;
  EvalConfig eval;

  void validate() const;
};

Config default_config();
Config load_config(const std::string& path);
void save_config(const Config& config, const std::string& path);

// Serialized JSON round-trip used by checkpoints and run directories.
std::string config_to_json_string(const Config& config, int indent = 2);
Config config_from_json_string(const std::string& text);

// Applies "group.key=value" overrides. Unknown keys or malformed values
// throw std::invalid_argument listing the valid keys.
void apply_override(Config& config, const std::string& dotted_key, const std::string& value);

// All dotted keys with their current values, for --help and startup echo.
std::vector<std::pair<std::string, std::string>> flattened_keys(const Config& config);

// Short stable hash of the resolved config, used in run directory names.
std::string config_hash(const Config& config);

}  // namespace crforge

#endif  // CRFORGE_CONFIG_HPP_
