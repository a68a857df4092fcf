#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pilot/corpus.hpp"
#include "pilot/dls.hpp"
#include "pilot/embed.hpp"
#include "pilot/encoder.hpp"
#include "pilot/mrl.hpp"

namespace pilot::eval {

using LabelMap = std::map<std::string, int>;

struct MetricsReport {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  // Set when the metric's denominator was zero and 0 was reported instead.
  bool precision_undefined = false;
  bool recall_undefined = false;
  bool f1_undefined = false;
  std::size_t n_seeds = 1;
  std::vector<MetricsReport> per_seed;

  std::size_t count() const { return tp + fp + tn + fn; }
};

double f1_score(double precision, double recall);

MetricsReport metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t tn, std::size_t fn);

// Both maps must cover the same ids.
MetricsReport compute_metrics(const LabelMap& predictions, const LabelMap& truth);

/// Arithmetic mean of each metric over seeds (F1 is the mean of per-seed F1);
/// counts are summed.
MetricsReport average_reports(std::span<const MetricsReport> per_seed);

nlohmann::json to_json(const MetricsReport& report);

enum class PipelineMode {
  kPilot,  // prototype selection, progressive expansion, mixed-supervision stage
  kNaive,  // every unlabeled sample treated as negative
};

enum class ValidationMode {
  kTruth,        // valid-split ground truth (supervised setting)
  kPseudoLabel,  // valid-split labeled positives vs prototype-selected negatives
};

struct ExperimentConfig {
  corpus::ScarConfig scar;  // seed is replaced per repeat
  std::uint64_t split_seed = 0;
  dls::PrototypeConfig prototype;
  dls::ProgressiveConfig progressive;
  encoder::TrainConfig train;
  std::size_t hidden = 256;
  std::size_t proj_dim = 64;
  mrl::MrlConfig mrl;
  bool mixed_supervision = true;
  PipelineMode mode = PipelineMode::kPilot;
  ValidationMode validation = ValidationMode::kPseudoLabel;

  void validate() const;
  bool operator==(const ExperimentConfig&) const = default;
};

/// Precision of a pseudo-label set against ground truth (NaN when empty).
double pseudo_label_precision(const std::map<std::string, std::size_t>& entries, const LabelMap& truth,
                              int expected_label);

struct SeedOutcome {
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  MetricsReport metrics;
  std::size_t labeled_count = 0;
  std::size_t hn_initial = 0;
  double hn_initial_precision = 0.0;
  double hn_precision = 0.0;
  double hp_precision = 0.0;
  dls::PseudoLabelLedger ledger;
  encoder::EncoderModel model;
  std::map<std::string, double> confidences;  // probability of each entry's pseudo-label
  LabelMap test_predictions;
  dls::ProgressiveResult progress;
};

struct ExperimentResult {
  MetricsReport mean;
  std::vector<SeedOutcome> seeds;
  corpus::DatasetSplit split;
};

// Labeled positives and unlabeled ids of the training split for one seed.
struct PuScenario {
  std::uint64_t seed = 0;
  std::vector<std::string> positives;
  std::vector<std::string> unlabeled;
  std::vector<corpus::CodeSample> samples;  // training split with `selected` set
};

/// SCAR labeling of the training split.
PuScenario simulate_pu(std::span<const corpus::CodeSample> samples, const corpus::DatasetSplit& split,
                       const ExperimentConfig& cfg, std::uint64_t seed);

/// Rebuilds a scenario from a stored PU-labeled training split.
PuScenario scenario_from_samples(std::vector<corpus::CodeSample> pu_samples, std::uint64_t seed);

/// Validation set for the configured mode: ground truth of the valid split, or
/// its SCAR-labeled positives (1) plus prototype-selected negatives (0).
encoder::TrainingSet validation_set(std::span<const corpus::CodeSample> samples,
                                    const embed::EmbeddingMatrix& emb, const corpus::DatasetSplit& split,
                                    std::span<const std::string> train_positives,
                                    const ExperimentConfig& cfg, std::uint64_t seed);

encoder::EncoderModel initial_model(std::size_t input_dim, const ExperimentConfig& cfg, std::uint64_t seed);
encoder::TrainConfig seed_train_config(const ExperimentConfig& cfg, std::uint64_t seed);

struct SelectionOutcome {
  dls::PseudoLabelLedger ledger;
  encoder::EncoderModel model;
  std::size_t hn_initial = 0;
  dls::ProgressiveResult progress;
};

/// Prototype selection and progressive expansion. In naive mode the ledger is
/// empty and the model is the initial one.
SelectionOutcome select_stage(const embed::EmbeddingMatrix& emb, const PuScenario& pu,
                              const encoder::TrainingSet& valid, const ExperimentConfig& cfg,
                              const dls::ProgressiveHooks& hooks = {});

/// Final training: the mixed-supervision stage over the ledger (pilot), or
/// positives vs all unlabeled from the initial model (naive).
encoder::EncoderModel train_stage(const embed::EmbeddingMatrix& emb, const PuScenario& pu,
                                  const SelectionOutcome& selection, const encoder::TrainingSet& valid,
                                  const ExperimentConfig& cfg);

// Class-1 probability above 0.5 predicts 1.
LabelMap predict_labels(const encoder::EncoderModel& model, const embed::EmbeddingMatrix& emb,
                        std::span<const std::string> ids);

struct SeedRunOptions {
  // Invoked on every ledger snapshot of the progressive loop.
  dls::ProgressiveHooks hooks;
};

/// Runs the full pipeline for one labeling seed on a fixed split.
SeedOutcome run_seed(std::span<const corpus::CodeSample> samples, const embed::EmbeddingMatrix& emb,
                     const corpus::DatasetSplit& split, const ExperimentConfig& cfg, std::uint64_t seed,
                     const SeedRunOptions& options = {});

/// One labeling scenario per seed over a shared split; failing seeds are
/// recorded and skipped, and the experiment fails only if every seed fails.
ExperimentResult run_pu_experiment(std::span<const corpus::CodeSample> samples,
                                   const embed::EmbeddingMatrix& emb, const ExperimentConfig& cfg,
                                   std::span<const std::uint64_t> seeds,
                                   const SeedRunOptions& options = {});

// Probability the model assigns to each entry's pseudo-label.
std::map<std::string, double> ledger_confidences(const encoder::EncoderModel& model,
                                                 const embed::EmbeddingMatrix& emb,
                                                 const dls::PseudoLabelLedger& ledger);

struct MislabelEntry {
  std::string id;
  int truth = 0;
  dls::PseudoLabel pseudo = dls::PseudoLabel::kHN;
  double confidence = 0.0;
  std::size_t epoch = 0;
};

struct MislabelReport {
  std::vector<MislabelEntry> entries;  // confidence descending, then id
};

/// Every pseudo-labeled sample whose pseudo-label contradicts its ground truth.
/// Entries without ground truth are skipped.
MislabelReport mislabel_report(const dls::PseudoLabelLedger& ledger, const LabelMap& truth,
                               const std::map<std::string, double>& confidences);

void write_mislabel_csv(std::ostream& out, const MislabelReport& report);
void write_mislabel_csv(const std::filesystem::path& path, const MislabelReport& report);

LabelMap truth_labels(std::span<const corpus::CodeSample> samples);

std::string to_string(PipelineMode mode);
PipelineMode pipeline_mode_from_string(const std::string& text);
std::string to_string(ValidationMode mode);
ValidationMode validation_mode_from_string(const std::string& text);

}  // namespace pilot::eval
