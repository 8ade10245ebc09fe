#include <cmath>
#include <filesystem>
#include <fstream>

#include "crforge/data.hpp"
#include "crforge/errors.hpp"
#include "crforge/eval.hpp"
#include "crforge/train.hpp"
#include "doctest.h"

namespace fs = std::filesystem;
using namespace crforge;

namespace {

// Tiny end-to-end fixture: 8 clips x 3 frames at 16x16 with a small net.
Config tiny_config(const std::string& root) {
  Config c = default_config();
  c.model.encoder.input_height = 16;
  c.model.encoder.input_width = 16;
  c.model.encoder.channel_widths = {4, 8};
  c.model.encoder.feature_dim = 8;
  c.model.embedding_dim = 16;
  c.model.projector_hidden = 12;
  c.model.predictor_hidden = 8;
  c.memory.capacity = 8;
  c.train.batch_size = 4;
  c.train.epochs = 2;
  c.train.momentum_coefficient = 0.9;
  c.data.root = root;
  c.data.frame_size = 16;
  return c;
}

const Dataset& tiny_dataset() {
  static const Dataset dataset = [] {
    const fs::path root = fs::temp_directory_path() / "crforge_tests" / "train_fixture";
    fs::remove_all(root);
    SynthConfig synth;
    synth.n_clips = 8;
    synth.frames_per_clip = 3;
    synth.frame_size = 16;
    synth.train_fraction = 0.5;
    synth.val_fraction = 0.25;
    return synth_toy_dataset(root.string(), synth, RngSeed{99});
  }();
  return dataset;
}

std::vector<Eigen::MatrixXd> snapshot_values(const std::vector<ad::Parameter*>& params) {
  std::vector<Eigen::MatrixXd> out;
  for (auto* p : params) out.push_back(p->value);
  return out;
}

double max_param_diff(const std::vector<Eigen::MatrixXd>& a,
                      const std::vector<ad::Parameter*>& b) {
  double worst = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, (a[i] - b[i]->value).cwiseAbs().maxCoeff());
  }
  return worst;
}

}  // namespace

TEST_CASE("learning rate halves every two epochs") {
  Config c = tiny_config(tiny_dataset().root);
  c.train.epochs = 5;
  Trainer t(c, tiny_dataset());
  CHECK(t.learning_rate_for_epoch(0) == doctest::Approx(0.01));
  CHECK(t.learning_rate_for_epoch(1) == doctest::Approx(0.01));
  CHECK(t.learning_rate_for_epoch(2) == doctest::Approx(0.005));
  CHECK(t.learning_rate_for_epoch(3) == doctest::Approx(0.005));
  CHECK(t.learning_rate_for_epoch(4) == doctest::Approx(0.0025));
}

TEST_CASE("warmup switches the effective betas at the configured step") {
  Config c = tiny_config(tiny_dataset().root);
  c.train.warmup_enabled = true;
  Trainer t(c, tiny_dataset());
  CHECK(t.effective_weights(0).beta1 == doctest::Approx(0.01));
  CHECK(t.effective_weights(1999).beta1 == doctest::Approx(0.01));
  CHECK(t.effective_weights(2000).beta1 == doctest::Approx(1.0));
  CHECK(t.effective_weights(2000).beta2 == doctest::Approx(1.0));

  Config off = tiny_config(tiny_dataset().root);
  Trainer t2(off, tiny_dataset());
  CHECK(t2.effective_weights(0).beta1 == doctest::Approx(0.1));
  CHECK(t2.effective_weights(5000).beta2 == doctest::Approx(0.1));
}

TEST_CASE("zero-weighted proposed step matches a pure CE step") {
  Config proposed = tiny_config(tiny_dataset().root);
  proposed.loss.weights.beta1 = 0.0;
  proposed.loss.weights.beta2 = 0.0;
  Config ce = tiny_config(tiny_dataset().root);
  ce.train.strategy = "ce_only";

  Trainer tp(proposed, tiny_dataset());
  Trainer tc(ce, tiny_dataset());
  const LossReport rp = tp.step();
  const LossReport rc = tc.step();
  CHECK(rp.l_ce == doctest::Approx(rc.l_ce).epsilon(1e-12));

  auto pp = tp.bundle().online_parameters();
  auto pc = tc.bundle().online_parameters();
  REQUIRE(pp.size() == pc.size());
  for (size_t i = 0; i < pp.size(); ++i) {
    CHECK((pp[i]->value - pc[i]->value).cwiseAbs().maxCoeff() < 1e-7);
  }

  // Banks and twins still update under the proposed strategy.
  CHECK(tp.bank_real().cursor() != tc.bank_real().cursor());
}

TEST_CASE("lr=0 leaves online and momentum parameters unchanged") {
  Config c = tiny_config(tiny_dataset().root);
  c.train.learning_rate = 0.0;
  Trainer t(c, tiny_dataset());
  const auto online_before = snapshot_values(t.bundle().online_parameters());
  const auto momentum_before = snapshot_values(t.bundle().momentum_parameters());
  t.step();
  CHECK(max_param_diff(online_before, t.bundle().online_parameters()) == 0.0);
  CHECK(max_param_diff(momentum_before, t.bundle().momentum_parameters()) < 1e-12);
}

TEST_CASE("a proposed step pushes one bank entry per sample, by label") {
  Config c = tiny_config(tiny_dataset().root);
  c.train.batch_size = 16;  // one batch covers the whole train split
  Trainer t(c, tiny_dataset());
  int real = 0, fake = 0;
  for (const auto& clip : tiny_dataset().train.clips) {
    (clip.label == Label::kReal ? real : fake)++;
  }
  const int cap = c.memory.capacity;
  const int cursor_r = t.bank_real().cursor();
  const int cursor_f = t.bank_fake().cursor();
  t.step();
  CHECK(t.bank_real().cursor() == (cursor_r + real) % cap);
  CHECK(t.bank_fake().cursor() == (cursor_f + fake) % cap);
  CHECK(t.bank_real().live() == cap);  // prefilled stays full
}

TEST_CASE("loss reports compose per strategy") {
  const double tol = 1e-6;
  {
    Config c = tiny_config(tiny_dataset().root);
    c.train.epochs = 3;
    Trainer t(c, tiny_dataset());
    for (int i = 0; i < 3; ++i) {
      const LossReport r = t.step();
      CHECK(r.l_total == doctest::Approx(r.l_ce + r.beta1_eff * r.l_relation +
                                         r.beta2_eff * r.l_contrastive)
                             .epsilon(tol));
      CHECK(r.l_relation > 0.0);
      CHECK(r.l_contrastive > 0.0);
    }
  }
  {
    Config c = tiny_config(tiny_dataset().root);
    c.train.strategy = "ce_l1";
    Trainer t(c, tiny_dataset());
    const LossReport r = t.step();
    REQUIRE(r.l_l1.has_value());
    CHECK(r.l_total == doctest::Approx(r.l_ce + *r.l_l1).epsilon(tol));
  }
  {
    Config c = tiny_config(tiny_dataset().root);
    c.train.strategy = "ce_triplet";
    Trainer t(c, tiny_dataset());
    const LossReport r = t.step();
    REQUIRE(r.l_triplet.has_value());
    CHECK(r.l_total == doctest::Approx(r.l_ce + *r.l_triplet).epsilon(tol));
  }
  {
    Config c = tiny_config(tiny_dataset().root);
    c.train.strategy = "ce_gan";
    Trainer t(c, tiny_dataset());
    const LossReport r = t.step();
    REQUIRE(r.l_gan_d.has_value());
    REQUIRE(r.l_gan_g.has_value());
    CHECK(std::isfinite(*r.l_gan_d));
    CHECK(r.l_total == doctest::Approx(r.l_ce + *r.l_gan_g).epsilon(tol));
  }
}

TEST_CASE("GAN strategy trains both parameter groups") {
  Config c = tiny_config(tiny_dataset().root);
  c.train.strategy = "ce_gan";
  Trainer t(c, tiny_dataset());
  REQUIRE(t.bundle().discriminator.has_value());
  const auto disc_before = snapshot_values(t.bundle().discriminator_parameters());
  const auto online_before = snapshot_values(t.bundle().online_parameters());
  t.step();
  CHECK(max_param_diff(disc_before, t.bundle().discriminator_parameters()) > 0.0);
  CHECK(max_param_diff(online_before, t.bundle().online_parameters()) > 0.0);
}

TEST_CASE("ce_only leaves the twins at initialization unless momentum_eval is set") {
  Config c = tiny_config(tiny_dataset().root);
  c.train.strategy = "ce_only";
  Trainer t(c, tiny_dataset());
  const auto momentum_before = snapshot_values(t.bundle().momentum_parameters());
  t.step();
  CHECK(max_param_diff(momentum_before, t.bundle().momentum_parameters()) == 0.0);
  CHECK(!t.uses_momentum_branch());

  Config with_eval = tiny_config(tiny_dataset().root);
  with_eval.train.strategy = "ce_only";
  with_eval.train.momentum_eval = true;
  Trainer t2(with_eval, tiny_dataset());
  const auto before2 = snapshot_values(t2.bundle().momentum_parameters());
  t2.step();
  CHECK(max_param_diff(before2, t2.bundle().momentum_parameters()) > 0.0);
  CHECK(t2.uses_momentum_branch());
}

TEST_CASE("momentum parameters accumulate zero gradient through a training step") {
  Config c = tiny_config(tiny_dataset().root);
  Trainer t(c, tiny_dataset());
  t.step();
  for (auto* p : t.bundle().momentum_parameters()) {
    CHECK(p->grad.cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("fixed seed reproduces the loss report sequence") {
  Config c = tiny_config(tiny_dataset().root);
  c.train.epochs = 10;
  Trainer a(c, tiny_dataset());
  Trainer b(c, tiny_dataset());
  for (int i = 0; i < 10; ++i) {
    const LossReport ra = a.step();
    const LossReport rb = b.step();
    CHECK(ra.l_total == rb.l_total);
    CHECK(ra.l_ce == rb.l_ce);
    CHECK(ra.l_relation == rb.l_relation);
    CHECK(ra.l_contrastive == rb.l_contrastive);
  }
}

TEST_CASE("checkpoint round-trip resumes bit-consistently") {
  const fs::path ckpt = fs::temp_directory_path() / "crforge_tests" / "roundtrip.ckpt";
  fs::create_directories(ckpt.parent_path());

  Config c = tiny_config(tiny_dataset().root);
  c.train.epochs = 4;
  Trainer a(c, tiny_dataset());
  for (int i = 0; i < 3; ++i) a.step();
  a.save_checkpoint(ckpt.string());
  const LossReport next_a = a.step();

  auto b = Trainer::load_checkpoint(ckpt.string(), tiny_dataset());
  CHECK(b->global_step() == 3);
  const LossReport next_b = b->step();
  CHECK(next_b.l_total == doctest::Approx(next_a.l_total).epsilon(1e-9));
  CHECK(next_b.l_ce == doctest::Approx(next_a.l_ce).epsilon(1e-9));
  CHECK(next_b.step == next_a.step);
}

TEST_CASE("NaN parameters surface as a divergence error with a snapshot") {
  const fs::path snap = fs::temp_directory_path() / "crforge_tests" / "diverged.ckpt";
  std::error_code ec;
  fs::remove(snap, ec);
  Config c = tiny_config(tiny_dataset().root);
  Trainer t(c, tiny_dataset());
  t.set_divergence_snapshot_path(snap.string());
  t.bundle().online_parameters()[0]->value(0, 0) = std::nan("");
  CHECK_THROWS_AS(t.step(), TrainingDiverged);
  CHECK(fs::exists(snap));
}

TEST_CASE("run_training writes metrics, tracks the best epoch, and keeps checkpoints") {
  const fs::path run_dir = fs::temp_directory_path() / "crforge_tests" / "run_dir";
  fs::remove_all(run_dir);
  Config c = tiny_config(tiny_dataset().root);
  c.train.epochs = 2;
  const TrainingResult result = run_training(c, tiny_dataset(), run_dir.string());

  CHECK(result.val_history.size() == 2);
  CHECK(result.best_epoch >= 0);
  CHECK(fs::exists(result.best_checkpoint_path));
  CHECK(fs::exists(result.final_checkpoint_path));
  CHECK(fs::exists(run_dir / "config.json"));

  std::ifstream metrics(result.metrics_path);
  REQUIRE(metrics.good());
  int step_lines = 0, epoch_lines = 0;
  std::string line;
  while (std::getline(metrics, line)) {
    if (line.find("l_total") != std::string::npos) ++step_lines;
    if (line.find("val_mean") != std::string::npos) ++epoch_lines;
  }
  Trainer probe(c, tiny_dataset());
  CHECK(step_lines == probe.total_steps());
  CHECK(epoch_lines == 2);
}

TEST_CASE("adam clip_global_norm rescales only above the threshold") {
  ad::Parameter p("p", Eigen::MatrixXd::Zero(2, 2));
  Adam opt({&p}, 0.9, 0.999);
  p.grad.setConstant(3.0);  // norm 6
  const double norm = opt.clip_global_norm(5.0);
  CHECK(norm == doctest::Approx(6.0));
  CHECK(p.grad(0, 0) == doctest::Approx(2.5));
  const double norm2 = opt.clip_global_norm(100.0);
  CHECK(norm2 == doctest::Approx(5.0));
  CHECK(p.grad(0, 0) == doctest::Approx(2.5));  // untouched below the bound
}

TEST_CASE("training past the configured epochs is rejected") {
  Config c = tiny_config(tiny_dataset().root);
  c.train.epochs = 1;
  Trainer t(c, tiny_dataset());
  while (!t.done()) t.step();
  CHECK_THROWS_AS(t.step(), InvalidState);
}

namespace {

// Desk-scale fixture shared by the longer directional tests.
Dataset desk_dataset() {
  const fs::path root = fs::temp_directory_path() / "crforge_tests" / "desk_fixture";
  if (fs::exists(root / "manifest.json")) return load_dataset(root.string(), 64);
  SynthConfig synth;
  synth.n_clips = 200;
  synth.frames_per_clip = 8;
  synth.frame_size = 64;
  return synth_toy_dataset(root.string(), synth, RngSeed{77}, true);
}

Config desk_config(const std::string& root, std::uint64_t seed) {
  Config c = default_config();
  c.model.encoder.input_height = 64;
  c.model.encoder.input_width = 64;
  c.model.encoder.channel_widths = {16, 32, 64, 128};
  c.model.encoder.feature_dim = 128;
  c.memory.capacity = 512;
  c.train.batch_size = 8;
  c.train.epochs = 10;
  c.train.learning_rate = 0.005;
  c.train.lr_halve_every_epochs = 4;
  c.train.momentum_coefficient = 0.9;
  c.train.seed = seed;
  c.data.root = root;
  c.data.frame_size = 64;
  c.eval.levels = {"weak", "strong"};
  return c;
}

}  // namespace

TEST_CASE("the synthetic task is learnable and compression-sensitive") {
  // Train on effectively uncompressed data (quality 100 keeps the splice cue
  // intact), then check the classifier clears 90% on raw validation frames
  // while strong compression knocks it down.
  Dataset dataset = desk_dataset();
  Config c = desk_config(dataset.root, 1);
  c.train.strategy = "ce_only";
  c.train.compression_mode = "single_weak";
  c.compression.weak_quality = 100;

  const fs::path run_dir = fs::temp_directory_path() / "crforge_tests" / "learnable_run";
  fs::remove_all(run_dir);
  TrainingResult result = run_training(c, dataset, run_dir.string());
  auto trainer = Trainer::load_checkpoint(result.best_checkpoint_path, dataset);
  const double raw = frame_accuracy(trainer->bundle(), dataset.val, CompressionLevel::raw(),
                                    Branch::kOnline, trainer->frame_store(), 64);
  const double strong = frame_accuracy(trainer->bundle(), dataset.val, CompressionLevel::strong(),
                                       Branch::kOnline, trainer->frame_store(), 64);
  CHECK(raw > 0.9);
  CHECK(strong < raw);
}

TEST_CASE("single-strong training transfers poorly down to weak compression") {
  // Models trained only on strongly compressed data never see the benign
  // high-frequency texture that weak compression preserves, so their mean
  // weak-level accuracy sits at or below their strong-level accuracy.
  Dataset dataset = desk_dataset();
  double weak_sum = 0.0, strong_sum = 0.0;
  for (std::uint64_t seed : {0ull, 1ull, 2ull}) {
    Config c = desk_config(dataset.root, seed);
    c.train.strategy = "ce_only";
    c.train.compression_mode = "single_strong";
    const fs::path run_dir = fs::temp_directory_path() / "crforge_tests" / "single_strong_run";
    fs::remove_all(run_dir);
    TrainingResult result = run_training(c, dataset, run_dir.string());
    auto trainer = Trainer::load_checkpoint(result.best_checkpoint_path, dataset);
    EvalSpec spec = EvalSpec::from_config(c.eval);
    spec.branch = Branch::kOnline;
    EvalReport report = evaluate(trainer->bundle(), dataset.test, spec, trainer->frame_store());
    weak_sum += report.accuracy_at(CompressionLevel::weak());
    strong_sum += report.accuracy_at(CompressionLevel::strong());
  }
  CHECK(weak_sum / 3.0 <= strong_sum / 3.0);
}

TEST_CASE("memory warmup mode delays the extra losses until banks fill") {
  Config c = tiny_config(tiny_dataset().root);
  c.memory.prefill = false;
  c.memory.warmup_steps = 1;
  Trainer t(c, tiny_dataset());
  const LossReport first = t.step();  // banks empty at loss time
  CHECK(first.l_relation == 0.0);
  CHECK(first.l_contrastive == 0.0);
  const LossReport second = t.step();  // banks now hold step-1 embeddings
  CHECK(second.l_relation > 0.0);
  CHECK(second.l_contrastive > 0.0);
}
