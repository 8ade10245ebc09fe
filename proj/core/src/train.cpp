#include "crforge/train.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "crforge/checkpoint.hpp"
#include "crforge/errors.hpp"
#include "crforge/eval.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace crforge {

using nlohmann::json;

Adam::Adam(std::vector<ad::Parameter*> params, double beta1, double beta2, double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto* p : params_) {
    m_.push_back(Eigen::MatrixXd::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Eigen::MatrixXd::Zero(p->value.rows(), p->value.cols()));
  }
}

void Adam::zero_grad() {
  for (auto* p : params_) p->grad.setZero();
}

void Adam::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    ad::Parameter& p = *params_[i];
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * p.grad;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * p.grad.cwiseProduct(p.grad);
    const Eigen::MatrixXd m_hat = m_[i] / bc1;
    const Eigen::MatrixXd v_hat = v_[i] / bc2;
    p.value.array() -= lr * m_hat.array() / (v_hat.array().sqrt() + eps_);
  }
}

double Adam::clip_global_norm(double max_norm) {
  double sq = 0.0;
  for (const auto* p : params_) sq += p->grad.squaredNorm();
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (auto* p : params_) p->grad *= s;
  }
  return norm;
}

namespace {

Rng sample_rng(const Config& config, long long visit_index) {
  return seeded_rng(RngSeed{config.train.seed}, "sample/" + std::to_string(visit_index));
}

}  // namespace

Trainer::Trainer(const Config& config, const Dataset& dataset)
    : config_(config),
      dataset_(&dataset),
      strategy_(parse_strategy(config.train.strategy)),
      mode_(parse_compression_mode(config.train.compression_mode)),
      frame_store_(config.compression, config.data.cache_frames) {
  if (dataset.train.clips.empty()) throw DatasetError("training requires a non-empty train split");
  bundle_ = std::make_unique<ModelBundle>(
      ModelBundle::create(config.model, RngSeed{config.train.seed}, strategy_ == Strategy::kCeGan,
                          config.train.momentum_coefficient));
  bank_real_ = std::make_unique<MemoryBank>(config.memory.capacity, config.model.embedding_dim);
  bank_fake_ = std::make_unique<MemoryBank>(config.memory.capacity, config.model.embedding_dim);
  if (config.memory.prefill) {
    Rng rng_r = seeded_rng(RngSeed{config.train.seed}, "banks/real");
    Rng rng_f = seeded_rng(RngSeed{config.train.seed}, "banks/fake");
    bank_real_->prefill(rng_r);
    bank_fake_->prefill(rng_f);
  }
  opt_online_ = std::make_unique<Adam>(bundle_->online_parameters(), config.train.adam_beta1,
                                       config.train.adam_beta2);
  if (bundle_->discriminator) {
    opt_disc_ = std::make_unique<Adam>(bundle_->discriminator_parameters(),
                                       config.train.adam_beta1, config.train.adam_beta2);
  }
}

int Trainer::steps_per_epoch() const {
  const int n = static_cast<int>(dataset_->train.clips.size());
  return (n + config_.train.batch_size - 1) / config_.train.batch_size;
}

long long Trainer::total_steps() const {
  return static_cast<long long>(config_.train.epochs) * steps_per_epoch();
}

int Trainer::current_epoch() const {
  return static_cast<int>(global_step_ / steps_per_epoch());
}

double Trainer::learning_rate_for_epoch(int epoch) const {
  const int halvings = epoch / config_.train.lr_halve_every_epochs;
  return config_.train.learning_rate * std::pow(0.5, halvings);
}

LossWeights Trainer::effective_weights(long long step) const {
  if (!config_.train.warmup_enabled) return config_.loss.weights;
  const double beta = step < config_.train.warmup_switch_step ? config_.train.warmup_initial_beta
                                                              : config_.train.warmup_final_beta;
  return LossWeights{beta, beta};
}

bool Trainer::uses_momentum_branch() const {
  return strategy_ == Strategy::kProposed || config_.train.momentum_eval;
}

std::vector<TrainSample> Trainer::assemble_batch() {
  const int n = static_cast<int>(dataset_->train.clips.size());
  const int spe = steps_per_epoch();
  const int epoch = static_cast<int>(global_step_ / spe);
  const int batch_in_epoch = static_cast<int>(global_step_ % spe);
  if (epoch_order_for_ != epoch) {
    epoch_order_ = epoch_clip_order(n, RngSeed{config_.train.seed}, epoch);
    epoch_order_for_ = epoch;
  }
  const ViewLevels views = select_compression_views(mode_);
  const int begin = batch_in_epoch * config_.train.batch_size;
  const int end = std::min(n, begin + config_.train.batch_size);
  std::vector<TrainSample> batch;
  batch.reserve(end - begin);
  for (int pos = begin; pos < end; ++pos) {
    const long long visit = static_cast<long long>(epoch) * n + pos;
    Rng rng = sample_rng(config_, visit);
    batch.push_back(build_sample(dataset_->train.clips[epoch_order_[pos]], rng, frame_store_, views));
  }
  return batch;
}

void Trainer::check_finite(double value, const char* what) {
  if (std::isfinite(value)) return;
  std::string snapshot;
  if (!divergence_snapshot_path_.empty()) {
    try {
      save_checkpoint(divergence_snapshot_path_);
      snapshot = divergence_snapshot_path_;
    } catch (const std::exception&) {
      // Snapshot is best effort; the divergence error matters more.
    }
  }
  throw TrainingDiverged(std::string("non-finite ") + what + " at step " +
                             std::to_string(global_step_),
                         snapshot);
}

LossReport Trainer::step() {
  if (done()) throw InvalidState("training already finished");
  std::vector<TrainSample> batch = assemble_batch();
  LossReport report = strategy_ == Strategy::kProposed ? step_proposed(batch)
                                                       : step_baseline(batch);
  report.step = global_step_;
  report.epoch = current_epoch();
  report.learning_rate = learning_rate_for_epoch(current_epoch());
  ++global_step_;
  return report;
}

LossReport Trainer::step_proposed(const std::vector<TrainSample>& batch) {
  const Temperatures& taus = config_.loss.temperatures;
  const LossWeights weights = effective_weights(global_step_);
  const double lr = learning_rate_for_epoch(current_epoch());

  std::vector<FrameImage> xw, xpw, xs;
  std::vector<Label> labels;
  for (const auto& s : batch) {
    xw.push_back(s.x_w);
    xpw.push_back(s.x_prime_w);
    xs.push_back(s.x_s);
    labels.push_back(s.label);
  }

  // Momentum branch first: z'_w carries no gradient by construction.
  const Eigen::MatrixXd z_prime_w = encode_project_values(
      bundle_->encoder_momentum, bundle_->projector_momentum, frames_to_rows(xpw));

  ad::Tape tape;
  ad::Value z_w = encode_project(tape, bundle_->encoder_online, bundle_->projector_online,
                                 frames_to_rows(xw), true);
  ad::Value z_s = encode_project(tape, bundle_->encoder_online, bundle_->projector_online,
                                 frames_to_rows(xs), true);

  // Under the warmup-fill mode the relation/contrastive terms wait for
  // organic bank content.
  const bool banks_ready =
      config_.memory.prefill ||
      (global_step_ >= config_.memory.warmup_steps && bank_real_->live() > 0 &&
       bank_fake_->live() > 0);

  ad::Value l_rel = tape.constant(Eigen::MatrixXd::Zero(1, 1));
  ad::Value l_con = tape.constant(Eigen::MatrixXd::Zero(1, 1));
  if (banks_ready) {
    const Eigen::MatrixXd anchors = combined_anchors(*bank_real_, *bank_fake_);
    const Eigen::MatrixXd p_weak =
        relation_distribution_rows(z_w.val(), anchors, taus.tau_w);  // detached target
    l_rel = relation_loss_graph(tape, z_s, p_weak, anchors, taus.tau_s);
    l_con = video_contrastive_loss_graph(tape, z_w, z_prime_w, labels, bank_real_->snapshot(),
                                         bank_fake_->snapshot(), taus.tau_v,
                                         config_.loss.reduction());
  }

  ad::Value logits_w = predict_logits(tape, bundle_->predictor, z_w, true);
  ad::Value logits_s = predict_logits(tape, bundle_->predictor, z_s, true);
  ad::Value l_ce = supervised_ce_loss_graph(tape, logits_w, logits_s, labels);

  ad::Value l_total = ad::add(
      l_ce, ad::add(ad::scale(l_rel, weights.beta1), ad::scale(l_con, weights.beta2)));
  check_finite(l_total.scalar(), "total loss");

  opt_online_->zero_grad();
  tape.backward(l_total);
  opt_online_->step(lr);

  bundle_->momentum_update();

  // FIFO update with the momentum embeddings, routed by label.
  std::vector<int> real_rows, fake_rows;
  for (size_t i = 0; i < labels.size(); ++i) {
    (labels[i] == Label::kReal ? real_rows : fake_rows).push_back(static_cast<int>(i));
  }
  auto push_rows = [&](MemoryBank& bank, const std::vector<int>& rows) {
    if (rows.empty()) return;
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), z_prime_w.cols());
    for (size_t i = 0; i < rows.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = z_prime_w.row(rows[i]);
    bank.push(m);
  };
  push_rows(*bank_real_, real_rows);
  push_rows(*bank_fake_, fake_rows);

  LossReport report;
  report.l_ce = l_ce.scalar();
  report.l_relation = l_rel.scalar();
  report.l_contrastive = l_con.scalar();
  report.l_total = l_total.scalar();
  report.beta1_eff = weights.beta1;
  report.beta2_eff = weights.beta2;
  return report;
}

LossReport Trainer::step_baseline(const std::vector<TrainSample>& batch) {
  const double lr = learning_rate_for_epoch(current_epoch());

  std::vector<FrameImage> xw, xs;
  std::vector<Label> labels;
  for (const auto& s : batch) {
    xw.push_back(s.x_w);
    xs.push_back(s.x_s);
    labels.push_back(s.label);
  }

  ad::Tape tape;
  ad::Value z_w = encode_project(tape, bundle_->encoder_online, bundle_->projector_online,
                                 frames_to_rows(xw), true);
  ad::Value z_s = encode_project(tape, bundle_->encoder_online, bundle_->projector_online,
                                 frames_to_rows(xs), true);

  LossReport report;

  // GAN baseline interleaves one discriminator step before the encoder step.
  if (strategy_ == Strategy::kCeGan) {
    if (!bundle_->discriminator) throw InvalidState("ce_gan requires a discriminator");
    ad::Value d_w = discriminate(tape, *bundle_->discriminator, tape.detach(z_w), true);
    ad::Value d_s = discriminate(tape, *bundle_->discriminator, tape.detach(z_s), true);
    ad::Value d_loss = ad::scale(
        ad::add(ad::mean_all(ad::log_sigmoid(d_w)),
                ad::mean_all(ad::log_sigmoid(ad::scale(d_s, -1.0)))),
        -1.0);
    check_finite(d_loss.scalar(), "discriminator loss");
    opt_disc_->zero_grad();
    opt_online_->zero_grad();
    tape.backward(d_loss);
    opt_disc_->clip_global_norm(config_.train.grad_clip_gan);
    opt_disc_->step(lr);
    report.l_gan_d = d_loss.scalar();
  }

  ad::Value logits_w = predict_logits(tape, bundle_->predictor, z_w, true);
  ad::Value logits_s = predict_logits(tape, bundle_->predictor, z_s, true);
  ad::Value l_ce = supervised_ce_loss_graph(tape, logits_w, logits_s, labels);
  ad::Value l_total = l_ce;

  if (strategy_ == Strategy::kCeL1) {
    ad::Value l_l1 = l1_baseline_loss_graph(tape, z_w, z_s);
    report.l_l1 = l_l1.scalar();
    l_total = ad::add(l_ce, l_l1);
  } else if (strategy_ == Strategy::kCeTriplet) {
    // Anchor each strong-view embedding; positive is the next same-label
    // sample in batch order, negative the next opposite-label one.
    std::vector<int> anchor_idx, pos_idx, neg_idx;
    const int b = static_cast<int>(labels.size());
    for (int i = 0; i < b; ++i) {
      int pos = -1, neg = -1;
      for (int d = 1; d < b; ++d) {
        const int j = (i + d) % b;
        if (pos < 0 && labels[j] == labels[i]) pos = j;
        if (neg < 0 && labels[j] != labels[i]) neg = j;
      }
      if (pos >= 0 && neg >= 0) {
        anchor_idx.push_back(i);
        pos_idx.push_back(pos);
        neg_idx.push_back(neg);
      }
    }
    if (!anchor_idx.empty()) {
      ad::Value l_triplet = triplet_baseline_loss_graph(
          tape, ad::select_rows(z_s, anchor_idx), ad::select_rows(z_s, pos_idx),
          ad::select_rows(z_s, neg_idx), config_.loss.triplet_margin);
      report.l_triplet = l_triplet.scalar();
      l_total = ad::add(l_ce, l_triplet);
    } else {
      report.l_triplet = 0.0;
    }
  } else if (strategy_ == Strategy::kCeGan) {
    // Encoder step sees the just-updated discriminator.
    ad::Value d_s_live = discriminate(tape, *bundle_->discriminator, z_s, true);
    ad::Value g_loss = ad::scale(ad::mean_all(ad::log_sigmoid(d_s_live)), -1.0);
    report.l_gan_g = g_loss.scalar();
    l_total = ad::add(l_ce, ad::scale(g_loss, config_.loss.gan_weight));
  }

  check_finite(l_total.scalar(), "total loss");
  opt_online_->zero_grad();
  if (opt_disc_) opt_disc_->zero_grad();
  tape.backward(l_total);
  if (strategy_ == Strategy::kCeGan) {
    opt_online_->clip_global_norm(config_.train.grad_clip_gan);
  }
  opt_online_->step(lr);

  if (config_.train.momentum_eval) bundle_->momentum_update();

  report.l_ce = l_ce.scalar();
  report.l_total = l_total.scalar();
  return report;
}

namespace {

void append_group(Archive& archive, const std::string& group,
                  const std::vector<const ad::Parameter*>& params) {
  for (size_t i = 0; i < params.size(); ++i) {
    archive.tensors.push_back({group + "/" + std::to_string(i), params[i]->value});
  }
}

std::vector<const ad::Parameter*> to_const_params(const std::vector<ad::Parameter*>& v) {
  return {v.begin(), v.end()};
}

void restore_group(const Archive& archive, const std::string& group,
                   const std::vector<ad::Parameter*>& params) {
  for (size_t i = 0; i < params.size(); ++i) {
    const Eigen::MatrixXd& t = archive.tensor(group + "/" + std::to_string(i));
    if (t.rows() != params[i]->value.rows() || t.cols() != params[i]->value.cols()) {
      throw IoError("checkpoint tensor shape mismatch in group " + group);
    }
    params[i]->value = t;
  }
}

void append_adam(Archive& archive, const std::string& prefix, Adam& opt) {
  for (size_t i = 0; i < opt.params().size(); ++i) {
    archive.tensors.push_back({prefix + "/m/" + std::to_string(i), opt.first_moments()[i]});
    archive.tensors.push_back({prefix + "/v/" + std::to_string(i), opt.second_moments()[i]});
  }
}

void restore_adam(const Archive& archive, const std::string& prefix, Adam& opt, long long t) {
  for (size_t i = 0; i < opt.params().size(); ++i) {
    opt.first_moments()[i] = archive.tensor(prefix + "/m/" + std::to_string(i));
    opt.second_moments()[i] = archive.tensor(prefix + "/v/" + std::to_string(i));
  }
  opt.step_count() = t;
}

}  // namespace

void Trainer::save_checkpoint(const std::string& path) const {
  Archive archive;
  json meta;
  meta["config"] = json::parse(config_to_json_string(config_, -1));
  meta["global_step"] = global_step_;
  meta["epoch"] = global_step_ / steps_per_epoch();
  meta["bank_real"] = {{"cursor", bank_real_->cursor()}, {"filled", bank_real_->filled()}};
  meta["bank_fake"] = {{"cursor", bank_fake_->cursor()}, {"filled", bank_fake_->filled()}};
  meta["adam_online_t"] = opt_online_->step_count();
  if (opt_disc_) meta["adam_disc_t"] = opt_disc_->step_count();
  archive.meta_json = meta.dump();

  ModelBundle& b = *bundle_;
  append_group(archive, "encoder_online", to_const_params(b.encoder_online.parameters()));
  append_group(archive, "encoder_momentum", to_const_params(b.encoder_momentum.parameters()));
  append_group(archive, "projector_online", to_const_params(b.projector_online.parameters()));
  append_group(archive, "projector_momentum", to_const_params(b.projector_momentum.parameters()));
  append_group(archive, "predictor", to_const_params(b.predictor.parameters()));
  if (b.discriminator) {
    append_group(archive, "discriminator", to_const_params(b.discriminator->parameters()));
  }
  archive.tensors.push_back({"bank_real/storage", bank_real_->storage()});
  archive.tensors.push_back({"bank_fake/storage", bank_fake_->storage()});
  append_adam(archive, "adam_online", *opt_online_);
  if (opt_disc_) append_adam(archive, "adam_disc", *opt_disc_);

  write_archive(path, archive);
}

std::unique_ptr<Trainer> Trainer::load_checkpoint(const std::string& path,
                                                  const Dataset& dataset) {
  Archive archive = read_archive(path);
  json meta = json::parse(archive.meta_json);
  Config config = config_from_json_string(meta.at("config").dump());

  auto trainer = std::make_unique<Trainer>(config, dataset);
  trainer->global_step_ = meta.at("global_step").get<long long>();

  ModelBundle& b = *trainer->bundle_;
  restore_group(archive, "encoder_online", b.encoder_online.parameters());
  restore_group(archive, "encoder_momentum", b.encoder_momentum.parameters());
  restore_group(archive, "projector_online", b.projector_online.parameters());
  restore_group(archive, "projector_momentum", b.projector_momentum.parameters());
  restore_group(archive, "predictor", b.predictor.parameters());
  if (b.discriminator && archive.has_tensor("discriminator/0")) {
    restore_group(archive, "discriminator", b.discriminator->parameters());
  }
  trainer->bank_real_->restore(archive.tensor("bank_real/storage"),
                               meta.at("bank_real").at("cursor").get<int>(),
                               meta.at("bank_real").at("filled").get<bool>());
  trainer->bank_fake_->restore(archive.tensor("bank_fake/storage"),
                               meta.at("bank_fake").at("cursor").get<int>(),
                               meta.at("bank_fake").at("filled").get<bool>());
  restore_adam(archive, "adam_online", *trainer->opt_online_,
               meta.at("adam_online_t").get<long long>());
  if (trainer->opt_disc_ && meta.contains("adam_disc_t")) {
    restore_adam(archive, "adam_disc", *trainer->opt_disc_,
                 meta.at("adam_disc_t").get<long long>());
  }
  return trainer;
}

std::string loss_report_to_json(const LossReport& r) {
  json j;
  j["step"] = r.step;
  j["epoch"] = r.epoch;
  j["l_ce"] = r.l_ce;
  j["l_relation"] = r.l_relation;
  j["l_contrastive"] = r.l_contrastive;
  j["l_total"] = r.l_total;
  if (r.l_l1) j["l_l1"] = *r.l_l1;
  if (r.l_triplet) j["l_triplet"] = *r.l_triplet;
  if (r.l_gan_d) j["l_gan_d"] = *r.l_gan_d;
  if (r.l_gan_g) j["l_gan_g"] = *r.l_gan_g;
  j["lr"] = r.learning_rate;
  j["beta1_eff"] = r.beta1_eff;
  j["beta2_eff"] = r.beta2_eff;
  return j.dump();
}

TrainingResult run_training(const Config& config, const Dataset& dataset,
                            const std::string& run_dir) {
  config.validate();
  if (dataset.train.clips.empty() || dataset.val.clips.empty()) {
    throw DatasetError("run_training needs non-empty train and val splits");
  }
  fs::create_directories(run_dir);
  save_config(config, (fs::path(run_dir) / "config.json").string());

  TrainingResult result;
  result.metrics_path = (fs::path(run_dir) / "metrics.jsonl").string();
  result.best_checkpoint_path = (fs::path(run_dir) / "best.ckpt").string();
  result.final_checkpoint_path = (fs::path(run_dir) / "final.ckpt").string();
  std::ofstream metrics(result.metrics_path);
  if (!metrics) throw IoError("cannot write metrics log: " + result.metrics_path);

  Trainer trainer(config, dataset);
  trainer.set_divergence_snapshot_path((fs::path(run_dir) / "diverged.ckpt").string());

  const Branch branch = config.eval.use_online_branch
                            ? Branch::kOnline
                            : (trainer.uses_momentum_branch() ? Branch::kMomentum : Branch::kOnline);
  const int spe = trainer.steps_per_epoch();
  while (!trainer.done()) {
    LossReport report = trainer.step();
    metrics << loss_report_to_json(report) << "\n";
    result.reports.push_back(report);

    if (trainer.global_step() % spe == 0) {  // epoch boundary
      const int epoch = static_cast<int>(trainer.global_step() / spe) - 1;
      EpochValAccuracy acc;
      acc.epoch = epoch;
      acc.weak = frame_accuracy(trainer.bundle(), dataset.val, CompressionLevel::weak(), branch,
                                trainer.frame_store(), config.eval.batch_size);
      acc.strong = frame_accuracy(trainer.bundle(), dataset.val, CompressionLevel::strong(),
                                  branch, trainer.frame_store(), config.eval.batch_size);
      result.val_history.push_back(acc);
      json j = {{"epoch", epoch},
                {"val_weak", acc.weak},
                {"val_strong", acc.strong},
                {"val_mean", acc.mean()}};
      metrics << j.dump() << "\n";
      metrics.flush();
      if (result.best_epoch < 0 || acc.mean() > result.best_val_mean) {
        result.best_epoch = epoch;
        result.best_val_mean = acc.mean();
        trainer.save_checkpoint(result.best_checkpoint_path);
      }
    }
  }
  trainer.save_checkpoint(result.final_checkpoint_path);
  return result;
}

}  // namespace crforge
