#ifndef CRFORGE_TRAIN_HPP_
#define CRFORGE_TRAIN_HPP_

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "crforge/config.hpp"
#include "crforge/data.hpp"
#include "crforge/losses.hpp"
#include "crforge/memory_bank.hpp"
#include "crforge/model.hpp"

namespace crforge {

class Adam {
 public:
  Adam(std::vector<ad::Parameter*> params, double beta1, double beta2, double eps = 1e-8);

  void zero_grad();
  void step(double lr);
  // Rescales gradients so their global norm is at most max_norm; returns the
  // pre-clip norm.
  double clip_global_norm(double max_norm);

  const std::vector<ad::Parameter*>& params() const { return params_; }
  std::vector<Eigen::MatrixXd>& first_moments() { return m_; }
  std::vector<Eigen::MatrixXd>& second_moments() { return v_; }
  long long& step_count() { return t_; }

 private:
  std::vector<ad::Parameter*> params_;
  double beta1_, beta2_, eps_;
  std::vector<Eigen::MatrixXd> m_, v_;
  long long t_ = 0;
};

// The training loop state: model bundle, per-class banks, optimizers and the
// global step counter. All data-order and sampling randomness is keyed by
// (seed, purpose, counter), so a restored checkpoint resumes the exact
// stream an uninterrupted run would have used.
class Trainer {
 public:
  Trainer(const Config& config, const Dataset& dataset);

  // Runs one training step (Algorithm-style for the proposed strategy,
  // baseline variants otherwise) and returns its loss report.
  LossReport step();

  bool done() const { return global_step_ >= total_steps(); }
  long long global_step() const { return global_step_; }
  int steps_per_epoch() const;
  long long total_steps() const;
  int current_epoch() const;
  double learning_rate_for_epoch(int epoch) const;
  // Warmup-adjusted loss weights for step s.
  LossWeights effective_weights(long long step) const;

  ModelBundle& bundle() { return *bundle_; }
  const Config& config() const { return config_; }
  MemoryBank& bank_real() { return *bank_real_; }
  MemoryBank& bank_fake() { return *bank_fake_; }
  FrameStore& frame_store() { return frame_store_; }
  Strategy strategy() const { return strategy_; }
  // Twins track the online network under this configuration.
  bool uses_momentum_branch() const;

  void save_checkpoint(const std::string& path) const;
  static std::unique_ptr<Trainer> load_checkpoint(const std::string& path,
                                                  const Dataset& dataset);

  // Where to dump state if a step diverges; empty disables the dump.
  void set_divergence_snapshot_path(std::string path) {
    divergence_snapshot_path_ = std::move(path);
  }

 private:
  std::vector<TrainSample> assemble_batch();
  LossReport step_proposed(const std::vector<TrainSample>& batch);
  LossReport step_baseline(const std::vector<TrainSample>& batch);
  void check_finite(double value, const char* what);

  Config config_;
  const Dataset* dataset_;
  Strategy strategy_;
  CompressionMode mode_;
  FrameStore frame_store_;
  std::unique_ptr<ModelBundle> bundle_;
  std::unique_ptr<MemoryBank> bank_real_;
  std::unique_ptr<MemoryBank> bank_fake_;
  std::unique_ptr<Adam> opt_online_;
  std::unique_ptr<Adam> opt_disc_;
  long long global_step_ = 0;
  std::vector<int> epoch_order_;
  int epoch_order_for_ = -1;
  std::string divergence_snapshot_path_;
};

struct EpochValAccuracy {
  int epoch = 0;
  double weak = 0.0;
  double strong = 0.0;
  double mean() const { return 0.5 * (weak + strong); }
};

struct TrainingResult {
  std::string best_checkpoint_path;
  std::string final_checkpoint_path;
  std::string metrics_path;
  std::vector<EpochValAccuracy> val_history;
  int best_epoch = -1;
  double best_val_mean = 0.0;
  std::vector<LossReport> reports;
};

// Full run: epoch loop, lr halving, per-step JSONL metrics, per-epoch val
// accuracy at WEAK and STRONG, best-checkpoint retention.
TrainingResult run_training(const Config& config, const Dataset& dataset,
                            const std::string& run_dir);

std::string loss_report_to_json(const LossReport& report);

}  // namespace crforge

#endif  // CRFORGE_TRAIN_HPP_
