#include "crforge/model.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "crforge/errors.hpp"

namespace crforge {
namespace {

Eigen::MatrixXd he_normal(Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in, Rng& rng) {
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.normal(0.0, stddev);
  }
  return m;
}

}  // namespace

void EncoderConfig::validate() const {
  if (channel_widths.size() < 2) {
    throw std::invalid_argument("encoder needs at least 2 conv stages");
  }
  if (feature_dim != channel_widths.back()) {
    throw std::invalid_argument("feature_dim must equal the last channel width");
  }
  if (input_height <= 0 || input_width <= 0) {
    throw std::invalid_argument("encoder input size must be positive");
  }
  int h = input_height, w = input_width;
  for (size_t i = 0; i < channel_widths.size(); ++i) {
    h = (h + 1) / 2;
    w = (w + 1) / 2;
  }
  if (h < 1 || w < 1) throw std::invalid_argument("too many conv stages for the input size");
}

Eigen::RowVectorXd frame_to_row(const FrameImage& frame) {
  const int h = frame.height(), w = frame.width();
  Eigen::RowVectorXd row(3 * h * w);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) row(c * h * w + y * w + x) = frame.channels[c](y, x);
    }
  }
  return row;
}

Eigen::MatrixXd frames_to_rows(const std::vector<FrameImage>& frames) {
  if (frames.empty()) throw std::invalid_argument("frames_to_rows: empty batch");
  const int h = frames[0].height(), w = frames[0].width();
  Eigen::MatrixXd rows(frames.size(), 3 * h * w);
  for (size_t i = 0; i < frames.size(); ++i) {
    if (frames[i].height() != h || frames[i].width() != w) {
      throw std::invalid_argument("frames_to_rows: mixed frame sizes in batch");
    }
    rows.row(static_cast<Eigen::Index>(i)) = frame_to_row(frames[i]);
  }
  return rows;
}

Encoder::Encoder(const EncoderConfig& config, Rng& rng) : cfg_(config) {
  cfg_.validate();
  int in_c = 3;
  for (size_t i = 0; i < cfg_.channel_widths.size(); ++i) {
    const int out_c = cfg_.channel_widths[i];
    const Eigen::Index fan_in = static_cast<Eigen::Index>(in_c) * 9;
    stages_.push_back(Stage{
        ad::Parameter("encoder.conv" + std::to_string(i) + ".weight",
                      he_normal(out_c, fan_in, fan_in, rng)),
        ad::Parameter("encoder.conv" + std::to_string(i) + ".bias",
                      Eigen::MatrixXd::Zero(1, out_c)),
        in_c, out_c});
    in_c = out_c;
  }
}

ad::Value Encoder::forward(ad::Tape& tape, const Eigen::MatrixXd& image_rows, bool trainable) {
  if (image_rows.cols() != static_cast<Eigen::Index>(3) * cfg_.input_height * cfg_.input_width) {
    throw std::invalid_argument("encoder input does not match configured frame size");
  }
  // Center [0,1] pixels; the conv stack has no normalization layers.
  ad::Value x = tape.constant((image_rows.array() - 0.5).matrix());
  int h = cfg_.input_height, w = cfg_.input_width;
  for (auto& stage : stages_) {
    ad::Value wgt = trainable ? tape.param(stage.weight) : tape.constant(stage.weight.value);
    ad::Value bias = trainable ? tape.param(stage.bias) : tape.constant(stage.bias.value);
    const int oh = (h + 1) / 2, ow = (w + 1) / 2;
    x = ad::relu(ad::conv2d(x, wgt, bias, stage.in_c, h, w, stage.out_c, 3, 2, 1));
    h = oh;
    w = ow;
  }
  return ad::global_avg_pool(x, cfg_.channel_widths.back(), h, w);
}

std::vector<ad::Parameter*> Encoder::parameters() {
  std::vector<ad::Parameter*> out;
  for (auto& s : stages_) {
    out.push_back(&s.weight);
    out.push_back(&s.bias);
  }
  return out;
}

std::vector<const ad::Parameter*> Encoder::parameters() const {
  std::vector<const ad::Parameter*> out;
  for (const auto& s : stages_) {
    out.push_back(&s.weight);
    out.push_back(&s.bias);
  }
  return out;
}

void Encoder::copy_values_from(const Encoder& other) {
  for (size_t i = 0; i < stages_.size(); ++i) {
    stages_[i].weight.value = other.stages_[i].weight.value;
    stages_[i].bias.value = other.stages_[i].bias.value;
  }
}

void Encoder::ema_update_from(const Encoder& online, double beta) {
  for (size_t i = 0; i < stages_.size(); ++i) {
    stages_[i].weight.value =
        beta * stages_[i].weight.value + (1.0 - beta) * online.stages_[i].weight.value;
    stages_[i].bias.value =
        beta * stages_[i].bias.value + (1.0 - beta) * online.stages_[i].bias.value;
  }
}

Mlp::Mlp(const std::string& name, const std::vector<int>& dims, Rng& rng) {
  if (dims.size() < 2) throw std::invalid_argument("Mlp needs at least one layer");
  for (size_t i = 0; i + 1 < dims.size(); ++i) {
    weights_.emplace_back(name + ".linear" + std::to_string(i) + ".weight",
                          he_normal(dims[i + 1], dims[i], dims[i], rng));
    biases_.emplace_back(name + ".linear" + std::to_string(i) + ".bias",
                         Eigen::MatrixXd::Zero(1, dims[i + 1]));
  }
}

ad::Value Mlp::forward(ad::Tape& tape, const ad::Value& x, bool trainable) {
  if (x.val().cols() != input_dim()) {
    throw std::invalid_argument("Mlp input dimension mismatch: got " +
                                std::to_string(x.val().cols()) + ", want " +
                                std::to_string(input_dim()));
  }
  ad::Value h = x;
  for (size_t i = 0; i < weights_.size(); ++i) {
    ad::Value wgt = trainable ? tape.param(weights_[i]) : tape.constant(weights_[i].value);
    ad::Value bias = trainable ? tape.param(biases_[i]) : tape.constant(biases_[i].value);
    h = ad::linear(h, wgt, bias);
    if (i + 1 < weights_.size()) h = ad::relu(h);
  }
  return h;
}

Eigen::MatrixXd Mlp::forward_values(const Eigen::MatrixXd& x) const {
  Eigen::MatrixXd h = x;
  for (size_t i = 0; i < weights_.size(); ++i) {
    Eigen::MatrixXd o = h * weights_[i].value.transpose();
    o.rowwise() += biases_[i].value.row(0);
    if (i + 1 < weights_.size()) o = o.cwiseMax(0.0);
    h = std::move(o);
  }
  return h;
}

std::vector<ad::Parameter*> Mlp::parameters() {
  std::vector<ad::Parameter*> out;
  for (size_t i = 0; i < weights_.size(); ++i) {
    out.push_back(&weights_[i]);
    out.push_back(&biases_[i]);
  }
  return out;
}

std::vector<const ad::Parameter*> Mlp::parameters() const {
  std::vector<const ad::Parameter*> out;
  for (size_t i = 0; i < weights_.size(); ++i) {
    out.push_back(&weights_[i]);
    out.push_back(&biases_[i]);
  }
  return out;
}

void Mlp::copy_values_from(const Mlp& other) {
  for (size_t i = 0; i < weights_.size(); ++i) {
    weights_[i].value = other.weights_[i].value;
    biases_[i].value = other.biases_[i].value;
  }
}

void Mlp::ema_update_from(const Mlp& online, double beta) {
  for (size_t i = 0; i < weights_.size(); ++i) {
    weights_[i].value = beta * weights_[i].value + (1.0 - beta) * online.weights_[i].value;
    biases_[i].value = beta * biases_[i].value + (1.0 - beta) * online.biases_[i].value;
  }
}

ModelBundle ModelBundle::create(const ModelConfig& config, RngSeed seed, bool with_discriminator,
                                double momentum_coefficient) {
  // Independent init streams per component so enabling the discriminator
  // does not shift anyone else's draws.
  Rng enc_rng = seeded_rng(seed, "init/encoder");
  Rng proj_rng = seeded_rng(seed, "init/projector");
  Rng pred_rng = seeded_rng(seed, "init/predictor");
  Rng disc_rng = seeded_rng(seed, "init/discriminator");

  const int d_f = config.encoder.feature_dim;
  const int d_e = config.embedding_dim;
  ModelBundle bundle{
      config,
      Encoder(config.encoder, enc_rng),
      Encoder(config.encoder, enc_rng),  // placeholder values, overwritten below
      Mlp("projector", {d_f, config.projector_hidden, d_e}, proj_rng),
      Mlp("projector_momentum", {d_f, config.projector_hidden, d_e}, proj_rng),
      Mlp("predictor", {d_e, config.predictor_hidden, 2}, pred_rng),
      std::nullopt,
      momentum_coefficient};
  bundle.encoder_momentum.copy_values_from(bundle.encoder_online);
  bundle.projector_momentum.copy_values_from(bundle.projector_online);
  if (with_discriminator) {
    bundle.discriminator.emplace("discriminator", std::vector<int>{d_e, 256, 128, 64, 1}, disc_rng);
  }
  return bundle;
}

void ModelBundle::momentum_update() {
  encoder_momentum.ema_update_from(encoder_online, momentum_coefficient);
  projector_momentum.ema_update_from(projector_online, momentum_coefficient);
}

std::vector<ad::Parameter*> ModelBundle::online_parameters() {
  std::vector<ad::Parameter*> out = encoder_online.parameters();
  for (auto* p : projector_online.parameters()) out.push_back(p);
  for (auto* p : predictor.parameters()) out.push_back(p);
  return out;
}

std::vector<ad::Parameter*> ModelBundle::momentum_parameters() {
  std::vector<ad::Parameter*> out = encoder_momentum.parameters();
  for (auto* p : projector_momentum.parameters()) out.push_back(p);
  return out;
}

std::vector<ad::Parameter*> ModelBundle::discriminator_parameters() {
  if (!discriminator) return {};
  return discriminator->parameters();
}

std::vector<ad::Parameter*> ModelBundle::all_parameters() {
  std::vector<ad::Parameter*> out = online_parameters();
  for (auto* p : momentum_parameters()) out.push_back(p);
  for (auto* p : discriminator_parameters()) out.push_back(p);
  return out;
}

ad::Value encode_project(ad::Tape& tape, Encoder& encoder, Mlp& projector,
                         const Eigen::MatrixXd& image_rows, bool trainable) {
  return projector.forward(tape, encoder.forward(tape, image_rows, trainable), trainable);
}

Eigen::MatrixXd encode_project_values(Encoder& encoder, Mlp& projector,
                                      const Eigen::MatrixXd& image_rows) {
  ad::Tape tape;
  return projector.forward(tape, encoder.forward(tape, image_rows, false), false).val();
}

ad::Value predict_logits(ad::Tape& tape, Mlp& predictor, const ad::Value& z, bool trainable) {
  if (z.val().cols() != predictor.input_dim()) {
    throw std::invalid_argument("predict_logits: embedding dimension mismatch");
  }
  return predictor.forward(tape, z, trainable);
}

ad::Value discriminate(ad::Tape& tape, Mlp& discriminator, const ad::Value& z, bool trainable) {
  return discriminator.forward(tape, z, trainable);
}

std::uint64_t parameter_hash(const std::vector<const ad::Parameter*>& params) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto* p : params) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(p->value.data());
    const size_t n = static_cast<size_t>(p->value.size()) * sizeof(double);
    for (size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ull;
    }
  }
  return h;
}

}  // namespace crforge
