#include "crforge/eval.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <sstream>

#include "crforge/errors.hpp"
#include "crforge/train.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace crforge {

using nlohmann::json;

EvalSpec EvalSpec::from_config(const EvalConfig& config) {
  EvalSpec spec;
  spec.levels.clear();
  for (const auto& text : config.levels) spec.levels.push_back(parse_compression_level(text));
  if (spec.levels.empty()) throw std::invalid_argument("eval.levels must not be empty");
  spec.aggregation =
      config.aggregation == "video_majority" ? Aggregation::kVideoMajority : Aggregation::kFrame;
  spec.branch = config.use_online_branch ? Branch::kOnline : Branch::kMomentum;
  spec.batch_size = config.batch_size;
  return spec;
}

double EvalReport::accuracy_at(const CompressionLevel& level) const {
  for (const auto& [l, acc] : accuracy) {
    if (l == level) return acc;
  }
  throw std::invalid_argument("report has no level " + to_string(level));
}

bool EvalReport::has_level(const CompressionLevel& level) const {
  for (const auto& [l, acc] : accuracy) {
    if (l == level) return true;
  }
  return false;
}

namespace {

// Predicted class per frame of the split at one level, in clip order.
std::vector<std::vector<int>> predict_split(ModelBundle& bundle, const DatasetManifest& split,
                                            const CompressionLevel& level, Branch branch,
                                            FrameStore& store, int batch_size) {
  Encoder& encoder =
      branch == Branch::kMomentum ? bundle.encoder_momentum : bundle.encoder_online;
  Mlp& projector =
      branch == Branch::kMomentum ? bundle.projector_momentum : bundle.projector_online;

  std::vector<std::vector<int>> per_clip(split.clips.size());
  std::vector<FrameImage> pending;
  std::vector<std::pair<int, int>> pending_slots;  // (clip index, frame index)

  auto flush = [&] {
    if (pending.empty()) return;
    const Eigen::MatrixXd z = encode_project_values(encoder, projector, frames_to_rows(pending));
    const Eigen::MatrixXd logits = bundle.predictor.forward_values(z);
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
      const int pred = logits(i, 0) >= logits(i, 1) ? 0 : 1;
      per_clip[pending_slots[i].first][pending_slots[i].second] = pred;
    }
    pending.clear();
    pending_slots.clear();
  };

  for (size_t c = 0; c < split.clips.size(); ++c) {
    const ClipRecord& clip = split.clips[c];
    per_clip[c].assign(clip.frame_count(), -1);
    for (int f = 0; f < clip.frame_count(); ++f) {
      pending.push_back(store.get(clip, f, level));
      pending_slots.emplace_back(static_cast<int>(c), f);
      if (static_cast<int>(pending.size()) >= batch_size) flush();
    }
  }
  flush();
  return per_clip;
}

}  // namespace

double frame_accuracy(ModelBundle& bundle, const DatasetManifest& split,
                      const CompressionLevel& level, Branch branch, FrameStore& store,
                      int batch_size) {
  if (split.clips.empty()) throw DatasetError("evaluation split is empty");
  const auto preds = predict_split(bundle, split, level, branch, store, batch_size);
  long long correct = 0, total = 0;
  for (size_t c = 0; c < split.clips.size(); ++c) {
    const int truth = label_index(split.clips[c].label);
    for (int p : preds[c]) {
      correct += (p == truth) ? 1 : 0;
      ++total;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(total);
}

EvalReport evaluate(ModelBundle& bundle, const DatasetManifest& split, const EvalSpec& spec,
                    FrameStore& store) {
  if (split.clips.empty()) throw DatasetError("evaluation split is empty");
  if (spec.levels.empty()) throw std::invalid_argument("EvalSpec.levels must not be empty");
  EvalReport report;
  report.spec = spec;
  report.n_videos = static_cast<long long>(split.clips.size());
  report.n_frames = split.total_frames();
  for (const auto& level : spec.levels) {
    const auto preds = predict_split(bundle, split, level, spec.branch, store, spec.batch_size);
    long long correct = 0, total = 0;
    if (spec.aggregation == EvalSpec::Aggregation::kFrame) {
      for (size_t c = 0; c < split.clips.size(); ++c) {
        const int truth = label_index(split.clips[c].label);
        for (int p : preds[c]) {
          correct += (p == truth) ? 1 : 0;
          ++total;
        }
      }
    } else {
      for (size_t c = 0; c < split.clips.size(); ++c) {
        const int truth = label_index(split.clips[c].label);
        int fake_votes = 0;
        for (int p : preds[c]) fake_votes += p;
        // Ties go to FAKE (the conservative call for a detector).
        const int vote = 2 * fake_votes >= static_cast<int>(preds[c].size()) ? 1 : 0;
        correct += (vote == truth) ? 1 : 0;
        ++total;
      }
    }
    report.accuracy.emplace_back(level, static_cast<double>(correct) / total);
  }
  return report;
}

namespace {

// Display rounding in integer basis points (1 bp = 0.01%), half away from
// zero, so 0.94645 -> "94.65" regardless of binary float representation.
long long to_basis_points(double accuracy) { return std::llround(accuracy * 10000.0); }

std::string format_bp(long long bp) {
  std::ostringstream out;
  out << bp / 100 << "." << std::setw(2) << std::setfill('0') << bp % 100 << "%";
  return out.str();
}

}  // namespace

ComparisonTable compare_runs(const std::vector<EvalReport>& reports) {
  if (reports.empty()) throw std::invalid_argument("compare_runs: no reports");
  const auto& levels = reports.front().spec.levels;
  for (const auto& r : reports) {
    if (r.spec.levels != levels) {
      throw std::invalid_argument("compare_runs: reports disagree on evaluation levels");
    }
  }
  const bool have_avg = reports.front().has_level(CompressionLevel::weak()) &&
                        reports.front().has_level(CompressionLevel::strong());

  ComparisonTable table;
  for (const auto& level : levels) table.column_labels.push_back(to_string(level));
  if (have_avg) table.column_labels.push_back("AVG");

  json jrows = json::array();
  for (const auto& r : reports) {
    table.row_names.push_back(r.run_name.empty() ? r.checkpoint_id : r.run_name);
    std::vector<std::string> cells;
    json jrow = {{"run", table.row_names.back()}};
    for (const auto& level : levels) {
      const long long bp = to_basis_points(r.accuracy_at(level));
      cells.push_back(format_bp(bp));
      jrow[to_string(level)] = format_bp(bp);
    }
    if (have_avg) {
      // Mean of the two displayed values, rounded half-up in exact integer
      // arithmetic: (9570 + 9359) -> 18929 -> 9464.5 -> 9465.
      const long long sum = to_basis_points(r.accuracy_at(CompressionLevel::weak())) +
                            to_basis_points(r.accuracy_at(CompressionLevel::strong()));
      const long long avg_bp = (2 * sum + 2) / 4;
      cells.push_back(format_bp(avg_bp));
      jrow["AVG"] = format_bp(avg_bp);
    }
    table.cells.push_back(std::move(cells));
    jrows.push_back(jrow);
  }
  table.json_text = jrows.dump(2);

  // Aligned plain-text rendering.
  size_t name_width = 4;
  for (const auto& n : table.row_names) name_width = std::max(name_width, n.size());
  std::vector<size_t> col_width(table.column_labels.size());
  for (size_t c = 0; c < table.column_labels.size(); ++c) {
    col_width[c] = table.column_labels[c].size();
    for (const auto& row : table.cells) col_width[c] = std::max(col_width[c], row[c].size());
  }
  std::ostringstream out;
  out << std::left << std::setw(static_cast<int>(name_width)) << "run";
  for (size_t c = 0; c < table.column_labels.size(); ++c) {
    out << "  " << std::right << std::setw(static_cast<int>(col_width[c]))
        << table.column_labels[c];
  }
  out << "\n";
  for (size_t r = 0; r < table.row_names.size(); ++r) {
    out << std::left << std::setw(static_cast<int>(name_width)) << table.row_names[r];
    for (size_t c = 0; c < table.cells[r].size(); ++c) {
      out << "  " << std::right << std::setw(static_cast<int>(col_width[c])) << table.cells[r][c];
    }
    out << "\n";
  }
  table.plain_text = out.str();
  return table;
}

std::vector<AblationCell> run_ablation_matrix(const Config& base_config, const Dataset& dataset,
                                              const std::string& preset,
                                              const std::string& run_root) {
  std::vector<std::pair<std::string, Config>> cells;
  if (preset == "table4") {
    auto variant = [&](const std::string& name, auto&& edit) {
      Config c = base_config;
      edit(c);
      cells.emplace_back(name, c);
    };
    variant("ce", [](Config& c) {
      c.train.strategy = "ce_only";
      c.train.momentum_eval = false;
    });
    variant("ce_momentum", [](Config& c) {
      c.train.strategy = "ce_only";
      c.train.momentum_eval = true;
    });
    variant("ce_contrastive", [](Config& c) {
      c.train.strategy = "proposed";
      c.loss.weights.beta1 = 0.0;
    });
    variant("ce_relation", [](Config& c) {
      c.train.strategy = "proposed";
      c.loss.weights.beta2 = 0.0;
    });
    variant("proposed", [](Config& c) { c.train.strategy = "proposed"; });
    variant("proposed_raw_strong", [](Config& c) {
      c.train.strategy = "proposed";
      c.train.compression_mode = "raw_and_strong";
    });
  } else if (preset == "table5") {
    for (int capacity : {256, 1024, 4096, 16384, 32768}) {
      Config c = base_config;
      c.train.strategy = "proposed";
      c.memory.capacity = capacity;
      cells.emplace_back("bank_" + std::to_string(capacity), c);
    }
  } else {
    throw std::invalid_argument("unknown ablation preset '" + preset +
                                "' (valid: table4, table5)");
  }

  std::vector<AblationCell> results;
  for (const auto& [name, config] : cells) {
    AblationCell cell;
    cell.name = name;
    cell.config = config;
    const std::string run_dir = (fs::path(run_root) / name).string();
    try {
      TrainingResult tr = run_training(config, dataset, run_dir);
      auto trainer = Trainer::load_checkpoint(tr.best_checkpoint_path, dataset);
      EvalSpec spec = EvalSpec::from_config(config.eval);
      if (!config.eval.use_online_branch && !trainer->uses_momentum_branch()) {
        spec.branch = Branch::kOnline;
      }
      cell.report = evaluate(trainer->bundle(), dataset.test, spec, trainer->frame_store());
      cell.report.run_name = name;
      cell.report.checkpoint_id = tr.best_checkpoint_path;
      cell.ok = true;
    } catch (const std::exception& e) {
      cell.error = e.what();  // keep partial results
    }
    results.push_back(std::move(cell));
  }
  return results;
}

std::string eval_report_to_json(const EvalReport& report) {
  json j;
  json acc = json::array();
  for (const auto& [level, a] : report.accuracy) {
    acc.push_back({{"level", to_string(level)}, {"accuracy", a}});
  }
  j["accuracy"] = acc;
  j["n_frames"] = report.n_frames;
  j["n_videos"] = report.n_videos;
  j["checkpoint_id"] = report.checkpoint_id;
  j["run_name"] = report.run_name;
  j["aggregation"] =
      report.spec.aggregation == EvalSpec::Aggregation::kFrame ? "frame" : "video_majority";
  j["branch"] = report.spec.branch == Branch::kMomentum ? "momentum" : "online";
  return j.dump(2);
}

EvalReport eval_report_from_json(const std::string& text) {
  json j = json::parse(text);
  EvalReport report;
  report.spec.levels.clear();
  for (const auto& item : j.at("accuracy")) {
    const CompressionLevel level = parse_compression_level(item.at("level").get<std::string>());
    report.accuracy.emplace_back(level, item.at("accuracy").get<double>());
    report.spec.levels.push_back(level);
  }
  report.n_frames = j.value("n_frames", 0LL);
  report.n_videos = j.value("n_videos", 0LL);
  report.checkpoint_id = j.value("checkpoint_id", "");
  report.run_name = j.value("run_name", "");
  report.spec.aggregation = j.value("aggregation", "frame") == std::string("video_majority")
                                ? EvalSpec::Aggregation::kVideoMajority
                                : EvalSpec::Aggregation::kFrame;
  report.spec.branch =
      j.value("branch", "momentum") == std::string("online") ? Branch::kOnline : Branch::kMomentum;
  return report;
}

}  // namespace crforge
