#ifndef CRFORGE_LOSSES_HPP_
#define CRFORGE_LOSSES_HPP_

#include <Eigen/Core>
#include <optional>
#include <vector>

#include "crforge/autodiff.hpp"
#include "crforge/embedding.hpp"
#include "crforge/frame.hpp"
#include "crforge/model.hpp"

namespace crforge {

struct Temperatures {
  double tau_w = 0.04;  // target (weak) relation temperature
  double tau_s = 0.1;   // strong relation temperature
  double tau_v = 0.07;  // video-contrastive temperature

  void validate() const;
};

struct LossWeights {
  double beta1 = 0.1;  // relation weight
  double beta2 = 0.1;  // contrastive weight

  void validate() const;
};

struct LossReport {
  long long step = 0;
  int epoch = 0;
  double l_ce = 0.0;
  double l_relation = 0.0;
  double l_contrastive = 0.0;
  double l_total = 0.0;
  std::optional<double> l_l1;
  std::optional<double> l_triplet;
  std::optional<double> l_gan_d;
  std::optional<double> l_gan_g;
  double learning_rate = 0.0;
  double beta1_eff = 0.0;
  double beta2_eff = 0.0;
};

// ---- plain (gradient-free) forms ----

// a.b / (|a||b|), clamped to [-1,1]. Zero vectors are degenerate input.
double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);

// softmax(sims / tau) with max subtraction.
Eigen::VectorXd softmax_over_similarities(const Eigen::VectorXd& sims, double tau);

// p_i = exp(sim(z, anchor_i)/tau) / sum_k exp(sim(z, anchor_k)/tau).
// Anchors are assumed unit-norm (the banks enforce this); z is normalized
// internally. Empty anchor sets are invalid state.
Eigen::VectorXd relation_distribution(const EmbeddingVector& z, const Eigen::MatrixXd& anchors,
                                      double tau);
// Batched rows variant: (B, D) x (K, D) -> (B, K).
Eigen::MatrixXd relation_distribution_rows(const Eigen::MatrixXd& z_rows,
                                           const Eigen::MatrixXd& anchors, double tau);

// Cross-entropy H(p_weak, p_strong) = -sum_i p_weak[i] * log p_strong[i].
double relation_loss(const Eigen::VectorXd& p_weak, const Eigen::VectorXd& p_strong);

// InfoNCE with the positive at index 0. Returns 0 (with a stderr warning)
// when no negatives are available.
double video_contrastive_loss(const EmbeddingVector& z_w, const EmbeddingVector& z_prime_w,
                              const Eigen::MatrixXd& negatives, double tau_v);

// Mean of the two per-view cross-entropies against the label.
double supervised_ce_loss(const Eigen::Vector2d& logits_w, const Eigen::Vector2d& logits_s,
                          Label label);

// l_ce + beta1*l_relation + beta2*l_contrastive.
double combined_loss(double l_ce, double l_relation, double l_contrastive,
                     const LossWeights& weights);

// Batch-mean of per-sample L1 distances between the two views' embeddings.
double l1_baseline_loss(const Eigen::MatrixXd& z_w_batch, const Eigen::MatrixXd& z_s_batch);

// max(|A-P|^2 - |A-N|^2 + margin, 0).
double triplet_baseline_loss(const EmbeddingVector& anchor, const EmbeddingVector& positive,
                             const EmbeddingVector& negative, double margin);

double shannon_entropy(const Eigen::VectorXd& p);

// ---- graph forms used by the trainer and the gradient checks ----
// The detached sides are passed as plain matrices, so stop-gradients hold by
// construction: no gradient path into p_weak, z_prime_w, or the banks exists.

// Mean over the batch of H(p_weak_row, softmax(normalize(z_strong) Q^T / tau_s)).
ad::Value relation_loss_graph(ad::Tape& tape, const ad::Value& z_strong,
                              const Eigen::MatrixXd& p_weak_rows, const Eigen::MatrixXd& anchors,
                              double tau_s);

enum class ContrastiveReduction { kMean, kSubsetSum };

// Batched video-level InfoNCE. Negatives come from the opposite-label bank:
// real rows score against fake_bank_snapshot and vice versa. z_prime_w rows
// are the (detached) momentum embeddings of the paired frames.
ad::Value video_contrastive_loss_graph(ad::Tape& tape, const ad::Value& z_w,
                                       const Eigen::MatrixXd& z_prime_w,
                                       const std::vector<Label>& labels,
                                       const Eigen::MatrixXd& real_bank_snapshot,
                                       const Eigen::MatrixXd& fake_bank_snapshot, double tau_v,
                                       ContrastiveReduction reduction);

// 0.5 * (CE(logits_w, y) + CE(logits_s, y)), both batch means.
ad::Value supervised_ce_loss_graph(ad::Tape& tape, const ad::Value& logits_w,
                                   const ad::Value& logits_s, const std::vector<Label>& labels);

ad::Value l1_baseline_loss_graph(ad::Tape& tape, const ad::Value& z_w, const ad::Value& z_s);

// Per-row triplets: anchors/positives/negatives as (T, D) values.
ad::Value triplet_baseline_loss_graph(ad::Tape& tape, const ad::Value& anchors,
                                      const ad::Value& positives, const ad::Value& negatives,
                                      double margin);

struct GanLosses {
  ad::Value d_loss;  // -mean[log s(D(z_w)) + log(1 - s(D(z_s)))], embeddings detached
  ad::Value g_loss;  // -mean[log s(D(z_s))], non-saturating, gradients into the encoder
};

// Builds both adversarial objectives on one tape. The discriminator step
// sees detached embeddings, so encoder gradients from d_loss are exactly
// zero; g_loss flows through z_s only.
GanLosses gan_baseline_losses(ad::Tape& tape, const ad::Value& z_w, const ad::Value& z_s,
                              Mlp& discriminator);

}  // namespace crforge

#endif  // CRFORGE_LOSSES_HPP_
