#include "crforge/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "crforge/errors.hpp"
#include "json.hpp"

namespace crforge {

using nlohmann::json;

Strategy parse_strategy(const std::string& s) {
  if (s == "proposed") return Strategy::kProposed;
  if (s == "ce_only") return Strategy::kCeOnly;
  if (s == "ce_l1") return Strategy::kCeL1;
  if (s == "ce_triplet") return Strategy::kCeTriplet;
  if (s == "ce_gan") return Strategy::kCeGan;
  throw std::invalid_argument(
      "unknown strategy '" + s + "' (valid: proposed, ce_only, ce_l1, ce_triplet, ce_gan)");
}

CompressionMode parse_compression_mode(const std::string& s) {
  if (s == "mixed") return CompressionMode::kMixed;
  if (s == "single_weak") return CompressionMode::kSingleWeak;
  if (s == "single_strong") return CompressionMode::kSingleStrong;
  if (s == "raw_and_strong") return CompressionMode::kRawAndStrong;
  throw std::invalid_argument("unknown compression mode '" + s +
                              "' (valid: mixed, single_weak, single_strong, raw_and_strong)");
}

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::kProposed: return "proposed";
    case Strategy::kCeOnly: return "ce_only";
    case Strategy::kCeL1: return "ce_l1";
    case Strategy::kCeTriplet: return "ce_triplet";
    case Strategy::kCeGan: return "ce_gan";
  }
  return "?";
}

std::string to_string(CompressionMode m) {
  switch (m) {
    case CompressionMode::kMixed: return "mixed";
    case CompressionMode::kSingleWeak: return "single_weak";
    case CompressionMode::kSingleStrong: return "single_strong";
    case CompressionMode::kRawAndStrong: return "raw_and_strong";
  }
  return "?";
}

ContrastiveReduction LossConfig::reduction() const {
  if (contrastive_reduction == "mean") return ContrastiveReduction::kMean;
  if (contrastive_reduction == "subset_sum") return ContrastiveReduction::kSubsetSum;
  throw std::invalid_argument("loss.contrastive_reduction must be 'mean' or 'subset_sum'");
}

void TrainSettings::validate() const {
  parse_strategy(strategy);
  parse_compression_mode(compression_mode);
  if (epochs <= 0) throw std::invalid_argument("train.epochs must be positive");
  if (batch_size <= 0) throw std::invalid_argument("train.batch_size must be positive");
  if (learning_rate <= 0.0) throw std::invalid_argument("train.learning_rate must be positive");
  if (lr_halve_every_epochs <= 0) {
    throw std::invalid_argument("train.lr_halve_every_epochs must be positive");
  }
  if (momentum_coefficient < 0.0 || momentum_coefficient > 1.0) {
    throw std::invalid_argument("train.momentum_coefficient must lie in [0,1]");
  }
  if (warmup_switch_step < 0) throw std::invalid_argument("train.warmup_switch_step must be >= 0");
}

void Config::validate() const {
  model.encoder.validate();
  loss.temperatures.validate();
  loss.weights.validate();
  loss.reduction();
  train.validate();
  if (compression.weak_quality < 1 || compression.weak_quality > 100 ||
      compression.strong_quality < 1 || compression.strong_quality > 100) {
    throw std::invalid_argument("compression qualities must lie in [1,100]");
  }
  if (memory.capacity <= 0) throw std::invalid_argument("memory.capacity must be positive");
  if (data.frame_size <= 0 || data.frame_size % 8 != 0) {
    throw std::invalid_argument("data.frame_size must be a positive multiple of 8");
  }
  if (eval.aggregation != "frame" && eval.aggregation != "video_majority") {
    throw std::invalid_argument("eval.aggregation must be 'frame' or 'video_majority'");
  }
  for (const auto& level : eval.levels) parse_compression_level(level);
}

namespace {

json config_to_json(const Config& c) {
  json j;
  j["model"] = {{"input_height", c.model.encoder.input_height},
                {"input_width", c.model.encoder.input_width},
                {"channel_widths", c.model.encoder.channel_widths},
                {"embedding_dim", c.model.embedding_dim},
                {"projector_hidden", c.model.projector_hidden},
                {"predictor_hidden", c.model.predictor_hidden}};
  j["compression"] = {{"weak_quality", c.compression.weak_quality},
                      {"strong_quality", c.compression.strong_quality}};
  j["memory"] = {{"capacity", c.memory.capacity},
                 {"prefill", c.memory.prefill},
                 {"warmup_steps", c.memory.warmup_steps}};
  j["loss"] = {{"beta1", c.loss.weights.beta1},
               {"beta2", c.loss.weights.beta2},
               {"tau_w", c.loss.temperatures.tau_w},
               {"tau_s", c.loss.temperatures.tau_s},
               {"tau_v", c.loss.temperatures.tau_v},
               {"triplet_margin", c.loss.triplet_margin},
               {"contrastive_reduction", c.loss.contrastive_reduction},
               {"gan_weight", c.loss.gan_weight}};
  j["train"] = {{"strategy", c.train.strategy},
                {"compression_mode", c.train.compression_mode},
                {"epochs", c.train.epochs},
                {"batch_size", c.train.batch_size},
                {"learning_rate", c.train.learning_rate},
                {"adam_beta1", c.train.adam_beta1},
                {"adam_beta2", c.train.adam_beta2},
                {"lr_halve_every_epochs", c.train.lr_halve_every_epochs},
                {"momentum_coefficient", c.train.momentum_coefficient},
                {"warmup_enabled", c.train.warmup_enabled},
                {"warmup_initial_beta", c.train.warmup_initial_beta},
                {"warmup_switch_step", c.train.warmup_switch_step},
                {"warmup_final_beta", c.train.warmup_final_beta},
                {"seed", c.train.seed},
                {"momentum_eval", c.train.momentum_eval},
                {"grad_clip_gan", c.train.grad_clip_gan}};
  j["data"] = {{"root", c.data.root},
               {"frame_size", c.data.frame_size},
               {"n_clips", c.data.n_clips},
               {"frames_per_clip", c.data.frames_per_clip},
               {"artifact_strength", c.data.artifact_strength},
               {"seed", c.data.seed},
               {"train_fraction", c.data.train_fraction},
               {"val_fraction", c.data.val_fraction},
               {"cache_frames", c.data.cache_frames}};
  j["eval"] = {{"levels", c.eval.levels},
               {"aggregation", c.eval.aggregation},
               {"use_online_branch", c.eval.use_online_branch},
               {"batch_size", c.eval.batch_size}};
  return j;
}

template <typename T>
void read_field(const json& j, const char* group, const char* key, T& out) {
  if (!j.contains(group)) return;
  const json& g = j.at(group);
  if (!g.contains(key)) return;
  g.at(key).get_to(out);
}

Config config_from_json(const json& j) {
  Config c = {};
  read_field(j, "model", "input_height", c.model.encoder.input_height);
  read_field(j, "model", "input_width", c.model.encoder.input_width);
  read_field(j, "model", "channel_widths", c.model.encoder.channel_widths);
  if (c.model.encoder.channel_widths.empty()) {
    throw std::invalid_argument("model.channel_widths must not be empty");
  }
  c.model.encoder.feature_dim = c.model.encoder.channel_widths.back();
  read_field(j, "model", "embedding_dim", c.model.embedding_dim);
  read_field(j, "model", "projector_hidden", c.model.projector_hidden);
  read_field(j, "model", "predictor_hidden", c.model.predictor_hidden);
  read_field(j, "compression", "weak_quality", c.compression.weak_quality);
  read_field(j, "compression", "strong_quality", c.compression.strong_quality);
  read_field(j, "memory", "capacity", c.memory.capacity);
  read_field(j, "memory", "prefill", c.memory.prefill);
  read_field(j, "memory", "warmup_steps", c.memory.warmup_steps);
  read_field(j, "loss", "beta1", c.loss.weights.beta1);
  read_field(j, "loss", "beta2", c.loss.weights.beta2);
  read_field(j, "loss", "tau_w", c.loss.temperatures.tau_w);
  read_field(j, "loss", "tau_s", c.loss.temperatures.tau_s);
  read_field(j, "loss", "tau_v", c.loss.temperatures.tau_v);
  read_field(j, "loss", "triplet_margin", c.loss.triplet_margin);
  read_field(j, "loss", "contrastive_reduction", c.loss.contrastive_reduction);
  read_field(j, "loss", "gan_weight", c.loss.gan_weight);
  read_field(j, "train", "strategy", c.train.strategy);
  read_field(j, "train", "compression_mode", c.train.compression_mode);
  read_field(j, "train", "epochs", c.train.epochs);
  read_field(j, "train", "batch_size", c.train.batch_size);
  read_field(j, "train", "learning_rate", c.train.learning_rate);
  read_field(j, "train", "adam_beta1", c.train.adam_beta1);
  read_field(j, "train", "adam_beta2", c.train.adam_beta2);
  read_field(j, "train", "lr_halve_every_epochs", c.train.lr_halve_every_epochs);
  read_field(j, "train", "momentum_coefficient", c.train.momentum_coefficient);
  read_field(j, "train", "warmup_enabled", c.train.warmup_enabled);
  read_field(j, "train", "warmup_initial_beta", c.train.warmup_initial_beta);
  read_field(j, "train", "warmup_switch_step", c.train.warmup_switch_step);
  read_field(j, "train", "warmup_final_beta", c.train.warmup_final_beta);
  read_field(j, "train", "seed", c.train.seed);
  read_field(j, "train", "momentum_eval", c.train.momentum_eval);
  read_field(j, "train", "grad_clip_gan", c.train.grad_clip_gan);
  read_field(j, "data", "root", c.data.root);
  read_field(j, "data", "frame_size", c.data.frame_size);
  read_field(j, "data", "n_clips", c.data.n_clips);
  read_field(j, "data", "frames_per_clip", c.data.frames_per_clip);
  read_field(j, "data", "artifact_strength", c.data.artifact_strength);
  read_field(j, "data", "seed", c.data.seed);
  read_field(j, "data", "train_fraction", c.data.train_fraction);
  read_field(j, "data", "val_fraction", c.data.val_fraction);
  read_field(j, "data", "cache_frames", c.data.cache_frames);
  read_field(j, "eval", "levels", c.eval.levels);
  read_field(j, "eval", "aggregation", c.eval.aggregation);
  read_field(j, "eval", "use_online_branch", c.eval.use_online_branch);
  read_field(j, "eval", "batch_size", c.eval.batch_size);
  return c;
}

}  // namespace

Config default_config() {
  Config c = {};
  c.model.encoder.feature_dim = c.model.encoder.channel_widths.back();
  return c;
}

Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::invalid_argument("malformed config " + path + ": " + e.what());
  }
  return config_from_json(j);
}

void save_config(const Config& config, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write config file: " + path);
  out << config_to_json(config).dump(2) << "\n";
}

std::string config_to_json_string(const Config& config, int indent) {
  return config_to_json(config).dump(indent);
}

Config config_from_json_string(const std::string& text) {
  return config_from_json(json::parse(text));
}

void apply_override(Config& config, const std::string& dotted_key, const std::string& value) {
  json j = config_to_json(config);
  const auto dot = dotted_key.find('.');
  if (dot == std::string::npos || !j.contains(dotted_key.substr(0, dot)) ||
      !j.at(dotted_key.substr(0, dot)).contains(dotted_key.substr(dot + 1))) {
    std::ostringstream msg;
    msg << "unknown config key '" << dotted_key << "'. Valid keys:";
    for (const auto& [k, v] : flattened_keys(config)) msg << "\n  " << k << " (default " << v << ")";
    throw std::invalid_argument(msg.str());
  }
  json& slot = j.at(dotted_key.substr(0, dot)).at(dotted_key.substr(dot + 1));
  try {
    if (slot.is_string()) {
      slot = value;
    } else if (slot.is_boolean()) {
      if (value == "true" || value == "1") {
        slot = true;
      } else if (value == "false" || value == "0") {
        slot = false;
      } else {
        throw std::invalid_argument("expected a boolean");
      }
    } else if (slot.is_number_unsigned()) {
      slot = static_cast<std::uint64_t>(std::stoull(value));
    } else if (slot.is_number_integer()) {
      slot = static_cast<long long>(std::stoll(value));
    } else if (slot.is_number_float()) {
      slot = std::stod(value);
    } else if (slot.is_array()) {
      // Comma-separated list; element type follows the existing array.
      json arr = json::array();
      std::stringstream ss(value);
      std::string item;
      const bool numeric = !slot.empty() && slot.front().is_number();
      while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        if (numeric) {
          arr.push_back(std::stoll(item));
        } else {
          arr.push_back(item);
        }
      }
      slot = arr;
    } else {
      throw std::invalid_argument("unsupported value type");
    }
  } catch (const std::exception& e) {
    throw std::invalid_argument("bad value '" + value + "' for key '" + dotted_key +
                                "': " + e.what());
  }
  config = config_from_json(j);
}

std::vector<std::pair<std::string, std::string>> flattened_keys(const Config& config) {
  json j = config_to_json(config);
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& [group, fields] : j.items()) {
    for (const auto& [key, value] : fields.items()) {
      out.emplace_back(group + "." + key, value.dump());
    }
  }
  return out;
}

std::string config_hash(const Config& config) {
  const std::string text = config_to_json_string(config, -1);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf, 12);
}

}  // namespace crforge
