#ifndef CRFORGE_EVAL_HPP_
#define CRFORGE_EVAL_HPP_

#include <string>
#include <vector>

#include "crforge/config.hpp"
#include "crforge/data.hpp"
#include "crforge/model.hpp"

namespace crforge {

struct EvalSpec {
  std::vector<CompressionLevel> levels = {
      CompressionLevel::weak(),  CompressionLevel::strong(),
      CompressionLevel::raw(),   CompressionLevel::explicit_quality(75),
      CompressionLevel::explicit_quality(50), CompressionLevel::explicit_quality(20),
      CompressionLevel::explicit_quality(10)};
  enum class Aggregation { kFrame, kVideoMajority };
  Aggregation aggregation = Aggregation::kFrame;
  Branch branch = Branch::kMomentum;
  int batch_size = 64;

  static EvalSpec from_config(const EvalConfig& config);
};

struct EvalReport {
  std::vector<std::pair<CompressionLevel, double>> accuracy;
  long long n_frames = 0;
  long long n_videos = 0;
  std::string checkpoint_id;
  std::string run_name;
  EvalSpec spec;

  double accuracy_at(const CompressionLevel& level) const;
  bool has_level(const CompressionLevel& level) const;
};

// Compresses every frame of the split at each level, runs the selected
// branch (g'∘F' then Y by default) and aggregates argmax correctness.
// Model parameters and banks are untouched.
EvalReport evaluate(ModelBundle& bundle, const DatasetManifest& split, const EvalSpec& spec,
                    FrameStore& store);

// Single-level frame accuracy shortcut used by the training loop.
double frame_accuracy(ModelBundle& bundle, const DatasetManifest& split,
                      const CompressionLevel& level, Branch branch, FrameStore& store,
                      int batch_size = 64);

struct ComparisonTable {
  std::vector<std::string> column_labels;          // levels + "AVG"
  std::vector<std::string> row_names;
  std::vector<std::vector<std::string>> cells;     // formatted percentages
  std::string plain_text;                          // aligned terminal table
  std::string json_text;
};

// Rows per run, columns per level, plus AVG over {WEAK, STRONG}. Display
// values are rounded to two decimals in percent; AVG is the half-up mean of
// the displayed values, computed in integer basis points so the decimal
// arithmetic is exact.
ComparisonTable compare_runs(const std::vector<EvalReport>& reports);

struct AblationCell {
  std::string name;
  Config config;
  EvalReport report;
  bool ok = false;
  std::string error;
};

// "table4": the six strategy/ablation variants; "table5": the bank-size
// sweep {256, 1024, 4096, 16384, 32768}. Trains each cell from scratch and
// evaluates on the test split; failures are recorded per cell.
std::vector<AblationCell> run_ablation_matrix(const Config& base_config, const Dataset& dataset,
                                              const std::string& preset,
                                              const std::string& run_root);

std::string eval_report_to_json(const EvalReport& report);
EvalReport eval_report_from_json(const std::string& text);

}  // namespace crforge

#endif  // CRFORGE_EVAL_HPP_
