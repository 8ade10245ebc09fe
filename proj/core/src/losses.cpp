#include "crforge/losses.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "crforge/errors.hpp"

namespace crforge {

void Temperatures::validate() const {
  if (tau_w <= 0.0 || tau_s <= 0.0 || tau_v <= 0.0) {
    throw std::invalid_argument("temperatures must be strictly positive");
  }
}

void LossWeights::validate() const {
  if (beta1 < 0.0 || beta2 < 0.0) {
    throw std::invalid_argument("loss weights must be non-negative");
  }
}

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.size() != b.size()) throw std::invalid_argument("cosine_similarity: dimension mismatch");
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) throw DegenerateInput("cosine_similarity: zero vector");
  const double s = a.dot(b) / (na * nb);
  return std::min(1.0, std::max(-1.0, s));
}

Eigen::VectorXd softmax_over_similarities(const Eigen::VectorXd& sims, double tau) {
  if (sims.size() == 0) throw InvalidState("softmax over empty similarity vector");
  const double m = sims.maxCoeff();
  Eigen::ArrayXd e = ((sims.array() - m) / tau).exp();
  return (e / e.sum()).matrix();
}

Eigen::VectorXd relation_distribution(const EmbeddingVector& z, const Eigen::MatrixXd& anchors,
                                      double tau) {
  if (anchors.rows() == 0) throw InvalidState("relation_distribution: empty anchor set");
  if (anchors.cols() != z.size()) {
    throw std::invalid_argument("relation_distribution: dimension mismatch");
  }
  const EmbeddingVector zn = normalized(z);
  Eigen::VectorXd sims = anchors * zn;
  return softmax_over_similarities(sims, tau);
}

Eigen::MatrixXd relation_distribution_rows(const Eigen::MatrixXd& z_rows,
                                           const Eigen::MatrixXd& anchors, double tau) {
  if (anchors.rows() == 0) throw InvalidState("relation_distribution: empty anchor set");
  Eigen::MatrixXd out(z_rows.rows(), anchors.rows());
  Eigen::MatrixXd sims = normalized_rows(z_rows) * anchors.transpose();
  for (Eigen::Index r = 0; r < sims.rows(); ++r) {
    out.row(r) = softmax_over_similarities(sims.row(r).transpose(), tau).transpose();
  }
  return out;
}

double relation_loss(const Eigen::VectorXd& p_weak, const Eigen::VectorXd& p_strong) {
  if (p_weak.size() != p_strong.size()) {
    throw std::invalid_argument("relation_loss: length mismatch");
  }
  double loss = 0.0;
  for (Eigen::Index i = 0; i < p_weak.size(); ++i) {
    if (p_weak(i) == 0.0) continue;
    loss -= p_weak(i) * std::log(p_strong(i));
  }
  return loss;
}

double video_contrastive_loss(const EmbeddingVector& z_w, const EmbeddingVector& z_prime_w,
                              const Eigen::MatrixXd& negatives, double tau_v) {
  if (negatives.rows() == 0) {
    std::fprintf(stderr, "warning: video_contrastive_loss with no negatives, returning 0\n");
    return 0.0;
  }
  const EmbeddingVector a = normalized(z_w);
  const EmbeddingVector p = normalized(z_prime_w);
  Eigen::VectorXd sims(negatives.rows() + 1);
  sims(0) = a.dot(p);  // positive first
  sims.tail(negatives.rows()) = negatives * a;
  const Eigen::VectorXd probs = softmax_over_similarities(sims, tau_v);
  return -std::log(probs(0));
}

double supervised_ce_loss(const Eigen::Vector2d& logits_w, const Eigen::Vector2d& logits_s,
                          Label label) {
  const int target = label_index(label);
  auto ce = [target](const Eigen::Vector2d& logits) {
    const double m = logits.maxCoeff();
    const double lse = std::log((logits.array() - m).exp().sum()) + m;
    return lse - logits(target);
  };
  return 0.5 * (ce(logits_w) + ce(logits_s));
}

double combined_loss(double l_ce, double l_relation, double l_contrastive,
                     const LossWeights& weights) {
  return l_ce + weights.beta1 * l_relation + weights.beta2 * l_contrastive;
}

double l1_baseline_loss(const Eigen::MatrixXd& z_w_batch, const Eigen::MatrixXd& z_s_batch) {
  if (z_w_batch.rows() != z_s_batch.rows() || z_w_batch.cols() != z_s_batch.cols()) {
    throw std::invalid_argument("l1_baseline_loss: shape mismatch");
  }
  return (z_w_batch - z_s_batch).cwiseAbs().sum() / static_cast<double>(z_w_batch.rows());
}

double triplet_baseline_loss(const EmbeddingVector& anchor, const EmbeddingVector& positive,
                             const EmbeddingVector& negative, double margin) {
  if (anchor.size() != positive.size() || anchor.size() != negative.size()) {
    throw std::invalid_argument("triplet_baseline_loss: dimension mismatch");
  }
  const double d_ap = (anchor - positive).squaredNorm();
  const double d_an = (anchor - negative).squaredNorm();
  return std::max(d_ap - d_an + margin, 0.0);
}

double shannon_entropy(const Eigen::VectorXd& p) {
  double h = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p(i) > 0.0) h -= p(i) * std::log(p(i));
  }
  return h;
}

ad::Value relation_loss_graph(ad::Tape& tape, const ad::Value& z_strong,
                              const Eigen::MatrixXd& p_weak_rows, const Eigen::MatrixXd& anchors,
                              double tau_s) {
  if (anchors.rows() == 0) throw InvalidState("relation_loss_graph: empty anchor set");
  ad::Value zn = ad::l2_normalize_rows(z_strong);
  ad::Value logits = ad::scale(ad::matmul(zn, tape.constant(anchors.transpose())), 1.0 / tau_s);
  return ad::ce_with_target_rows(logits, p_weak_rows);
}

ad::Value video_contrastive_loss_graph(ad::Tape& tape, const ad::Value& z_w,
                                       const Eigen::MatrixXd& z_prime_w,
                                       const std::vector<Label>& labels,
                                       const Eigen::MatrixXd& real_bank_snapshot,
                                       const Eigen::MatrixXd& fake_bank_snapshot, double tau_v,
                                       ContrastiveReduction reduction) {
  const Eigen::Index batch = z_w.val().rows();
  if (static_cast<Eigen::Index>(labels.size()) != batch) {
    throw std::invalid_argument("video_contrastive_loss_graph: label count mismatch");
  }
  if (z_prime_w.rows() != batch) {
    throw std::invalid_argument("video_contrastive_loss_graph: z_prime_w row mismatch");
  }
  const Eigen::MatrixXd positives = normalized_rows(z_prime_w);

  std::vector<int> real_rows, fake_rows;
  for (size_t i = 0; i < labels.size(); ++i) {
    (labels[i] == Label::kReal ? real_rows : fake_rows).push_back(static_cast<int>(i));
  }

  // One subset's InfoNCE mean; negatives come from the opposite-label bank.
  auto subset_mean = [&](const std::vector<int>& rows,
                         const Eigen::MatrixXd& negatives) -> ad::Value {
    ad::Value zs = ad::l2_normalize_rows(ad::select_rows(z_w, rows));
    Eigen::MatrixXd pos_rows(static_cast<Eigen::Index>(rows.size()), z_prime_w.cols());
    for (size_t i = 0; i < rows.size(); ++i) {
      pos_rows.row(static_cast<Eigen::Index>(i)) = positives.row(rows[i]);
    }
    ad::Value pos = ad::rowwise_dot(zs, tape.constant(pos_rows));
    if (negatives.rows() == 0) {
      std::fprintf(stderr, "warning: contrastive subset with no negatives, contributes 0\n");
      return tape.constant(Eigen::MatrixXd::Zero(1, 1));
    }
    ad::Value neg = ad::matmul(zs, tape.constant(negatives.transpose()));
    ad::Value logits = ad::scale(ad::hconcat(pos, neg), 1.0 / tau_v);
    return ad::softmax_ce_index(logits, std::vector<int>(rows.size(), 0));
  };

  ad::Value total = tape.constant(Eigen::MatrixXd::Zero(1, 1));
  const double denom = reduction == ContrastiveReduction::kMean ? static_cast<double>(batch) : 1.0;
  if (!real_rows.empty()) {
    const double w = reduction == ContrastiveReduction::kMean
                         ? static_cast<double>(real_rows.size()) / denom
                         : static_cast<double>(real_rows.size());
    total = ad::add(total, ad::scale(subset_mean(real_rows, fake_bank_snapshot), w));
  }
  if (!fake_rows.empty()) {
    const double w = reduction == ContrastiveReduction::kMean
                         ? static_cast<double>(fake_rows.size()) / denom
                         : static_cast<double>(fake_rows.size());
    total = ad::add(total, ad::scale(subset_mean(fake_rows, real_bank_snapshot), w));
  }
  return total;
}

ad::Value supervised_ce_loss_graph(ad::Tape& tape, const ad::Value& logits_w,
                                   const ad::Value& logits_s, const std::vector<Label>& labels) {
  (void)tape;
  std::vector<int> targets(labels.size());
  for (size_t i = 0; i < labels.size(); ++i) targets[i] = label_index(labels[i]);
  ad::Value ce_w = ad::softmax_ce_index(logits_w, targets);
  ad::Value ce_s = ad::softmax_ce_index(logits_s, targets);
  return ad::scale(ad::add(ce_w, ce_s), 0.5);
}

ad::Value l1_baseline_loss_graph(ad::Tape& tape, const ad::Value& z_w, const ad::Value& z_s) {
  (void)tape;
  const double inv_batch = 1.0 / static_cast<double>(z_w.val().rows());
  return ad::scale(ad::sum_all(ad::abs(ad::sub(z_w, z_s))), inv_batch);
}

ad::Value triplet_baseline_loss_graph(ad::Tape& tape, const ad::Value& anchors,
                                      const ad::Value& positives, const ad::Value& negatives,
                                      double margin) {
  (void)tape;
  ad::Value d_ap = ad::sum_rows(ad::square(ad::sub(anchors, positives)));
  ad::Value d_an = ad::sum_rows(ad::square(ad::sub(anchors, negatives)));
  ad::Value hinge = ad::hinge(ad::add_scalar(ad::sub(d_ap, d_an), margin));
  return ad::mean_all(hinge);
}

GanLosses gan_baseline_losses(ad::Tape& tape, const ad::Value& z_w, const ad::Value& z_s,
                              Mlp& discriminator) {
  // D-step: detached embeddings, trainable discriminator.
  ad::Value d_on_w = discriminate(tape, discriminator, tape.detach(z_w), true);
  ad::Value d_on_s = discriminate(tape, discriminator, tape.detach(z_s), true);
  // -mean[log s(w)] - mean[log s(-s)]
  ad::Value d_loss = ad::sub(tape.constant(Eigen::MatrixXd::Zero(1, 1)),
                             ad::add(ad::mean_all(ad::log_sigmoid(d_on_w)),
                                     ad::mean_all(ad::log_sigmoid(ad::scale(d_on_s, -1.0)))));
  // G-step: non-saturating generator surrogate on the strong view.
  ad::Value d_on_s_live = discriminate(tape, discriminator, z_s, true);
  ad::Value g_loss =
      ad::scale(ad::mean_all(ad::log_sigmoid(d_on_s_live)), -1.0);
  return GanLosses{d_loss, g_loss};
}

}  // namespace crforge
