#ifndef CRFORGE_MODEL_HPP_
#define CRFORGE_MODEL_HPP_

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

#include "crforge/autodiff.hpp"
#include "crforge/frame.hpp"
#include "crforge/rng.hpp"

namespace crforge {

struct EncoderConfig {
  int input_height = 64;
  int input_width = 64;
  std::vector<int> channel_widths = {32, 64, 128, 256};  // stride-2 stages
  int feature_dim = 256;  // equals channel_widths.back() after global pooling

  void validate() const;
};

struct ModelConfig {
  EncoderConfig encoder;
  int embedding_dim = 512;
  int projector_hidden = 512;
  int predictor_hidden = 128;
};

// Flattens frames into rows laid out channel-major (idx = c*h*w + y*w + x),
// the layout the conv ops expect.
Eigen::MatrixXd frames_to_rows(const std::vector<FrameImage>& frames);
Eigen::RowVectorXd frame_to_row(const FrameImage& frame);

// Stride-2 conv stack with ReLU after every stage, global average pooling
// at the end. Each stage halves the spatial resolution.
class Encoder {
 public:
  Encoder(const EncoderConfig& config, Rng& rng);

  // image_rows: (B, 3*h*w). Returns (B, feature_dim). With trainable=false
  // the parameters enter the tape as constants, so no gradient can reach
  // them (momentum twin / evaluation path).
  ad::Value forward(ad::Tape& tape, const Eigen::MatrixXd& image_rows, bool trainable);

  std::vector<ad::Parameter*> parameters();
  std::vector<const ad::Parameter*> parameters() const;
  void copy_values_from(const Encoder& other);
  void ema_update_from(const Encoder& online, double beta);
  const EncoderConfig& config() const { return cfg_; }

 private:
  struct Stage {
    ad::Parameter weight;
    ad::Parameter bias;
    int in_c, out_c;
  };
  EncoderConfig cfg_;
  std::vector<Stage> stages_;
};

// Affine stack with ReLU between layers (none after the last). Used for the
// projector (2 layers), predictor (2 layers) and GAN discriminator (4 layers).
class Mlp {
 public:
  Mlp(const std::string& name, const std::vector<int>& dims, Rng& rng);

  ad::Value forward(ad::Tape& tape, const ad::Value& x, bool trainable);
  Eigen::MatrixXd forward_values(const Eigen::MatrixXd& x) const;

  std::vector<ad::Parameter*> parameters();
  std::vector<const ad::Parameter*> parameters() const;
  void copy_values_from(const Mlp& other);
  void ema_update_from(const Mlp& online, double beta);
  int output_dim() const { return static_cast<int>(weights_.back().value.rows()); }
  int input_dim() const { return static_cast<int>(weights_.front().value.cols()); }

 private:
  std::vector<ad::Parameter> weights_;
  std::vector<ad::Parameter> biases_;
};

// Online encoder/projector/predictor plus their momentum twins and the
// optional GAN-baseline discriminator. Twins start as bit-equal copies of
// the online parameters and are only ever touched by momentum_update.
struct ModelBundle {
  ModelConfig config;
  Encoder encoder_online;
  Encoder encoder_momentum;
  Mlp projector_online;
  Mlp projector_momentum;
  Mlp predictor;
  std::optional<Mlp> discriminator;
  double momentum_coefficient = 0.999;

  static ModelBundle create(const ModelConfig& config, RngSeed seed, bool with_discriminator,
                            double momentum_coefficient);

  // p' <- beta*p' + (1-beta)*p for F' and g'. Y and D have no twins.
  void momentum_update();

  std::vector<ad::Parameter*> online_parameters();  // F, g, Y
  std::vector<ad::Parameter*> momentum_parameters();
  std::vector<ad::Parameter*> discriminator_parameters();
  std::vector<ad::Parameter*> all_parameters();
};

enum class Branch { kOnline, kMomentum };

// z = g(F(x)); raw, unnormalized embeddings (B, embedding_dim).
ad::Value encode_project(ad::Tape& tape, Encoder& encoder, Mlp& projector,
                         const Eigen::MatrixXd& image_rows, bool trainable);

// Gradient-free convenience used by evaluation and bank refills.
Eigen::MatrixXd encode_project_values(Encoder& encoder, Mlp& projector,
                                      const Eigen::MatrixXd& image_rows);

// Y(z): two-class logits (B, 2).
ad::Value predict_logits(ad::Tape& tape, Mlp& predictor, const ad::Value& z, bool trainable);

// D(z): one logit per row (B, 1); sigmoid is applied at the loss site.
ad::Value discriminate(ad::Tape& tape, Mlp& discriminator, const ad::Value& z, bool trainable);

// FNV-1a over all parameter bytes; used by eval's no-side-effect checks.
std::uint64_t parameter_hash(const std::vector<const ad::Parameter*>& params);

}  // namespace crforge

#endif  // CRFORGE_MODEL_HPP_
