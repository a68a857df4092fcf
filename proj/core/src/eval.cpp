#include "pilot/eval.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include "pilot/error.hpp"
#include "pilot/random.hpp"

namespace pilot::eval {
namespace {

constexpr std::uint64_t kValidScarStream = 0x5641;  // "VA"

std::string csv_field(const std::string& text) {
  if (text.find_first_of(",\"\n\r") == std::string::npos) return text;
  std::string out = "\"";
  for (char c : text) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

// Valid-split labeled positives (1) plus negatives chosen by prototype distance
// to the training positives (0).
encoder::TrainingSet pseudo_validation_set(std::span<const corpus::CodeSample> valid_samples,
                                           const embed::EmbeddingMatrix& emb,
                                           std::span<const std::string> train_positives,
                                           const ExperimentConfig& cfg, std::uint64_t seed) {
  auto scar = cfg.scar;
  scar.seed = mix_seed(seed, kValidScarStream);
  const auto labeled = corpus::apply_scar(valid_samples, scar);
  std::vector<std::string> positives;
  std::vector<std::string> unlabeled;
  for (const auto& s : labeled.samples) (s.selected ? positives : unlabeled).push_back(s.id);

  encoder::TrainingSet set;
  set.dim = emb.dim();
  for (const auto& id : positives) set.add(id, emb.row(id), 1);
  if (unlabeled.empty() || train_positives.empty()) return set;
  const auto dist = dls::prototype_distances(emb, train_positives, unlabeled, cfg.prototype);
  for (const auto& id : dls::select_hn(dist, unlabeled.size(), train_positives.size(), cfg.prototype)) {
    set.add(id, emb.row(id), 0);
  }
  return set;
}

}  // namespace

double f1_score(double precision, double recall) {
  const double denom = precision + recall;
  return denom > 0.0 ? 2.0 * precision * recall / denom : 0.0;
}

MetricsReport metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t tn, std::size_t fn) {
  MetricsReport r;
  r.tp = tp;
  r.fp = fp;
  r.tn = tn;
  r.fn = fn;
  const auto total = static_cast<double>(tp + fp + tn + fn);
  r.accuracy = total > 0 ? static_cast<double>(tp + tn) / total : 0.0;
  if (tp + fp > 0) {
    r.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  } else {
    r.precision_undefined = true;
  }
  if (tp + fn > 0) {
    r.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  } else {
    r.recall_undefined = true;
  }
  r.f1_undefined = !(r.precision + r.recall > 0.0);
  r.f1 = f1_score(r.precision, r.recall);
  return r;
}

MetricsReport compute_metrics(const LabelMap& predictions, const LabelMap& truth) {
  if (predictions.size() != truth.size()) {
    throw Error(ErrorKind::kAlignment, "predictions cover " + std::to_string(predictions.size()) +
                                           " ids, truth covers " + std::to_string(truth.size()));
  }
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  for (const auto& [id, predicted] : predictions) {
    const auto it = truth.find(id);
    if (it == truth.end()) throw Error(ErrorKind::kAlignment, "no ground truth for '" + id + "'");
    const bool p = predicted == 1;
    const bool t = it->second == 1;
    if (p && t) ++tp;
    else if (p && !t) ++fp;
    else if (!p && t) ++fn;
    else ++tn;
  }
  return metrics_from_counts(tp, fp, tn, fn);
}

MetricsReport average_reports(std::span<const MetricsReport> per_seed) {
  MetricsReport mean;
  mean.n_seeds = per_seed.size();
  if (per_seed.empty()) return mean;
  for (const auto& r : per_seed) {
    mean.tp += r.tp;
    mean.fp += r.fp;
    mean.tn += r.tn;
    mean.fn += r.fn;
    mean.accuracy += r.accuracy;
    mean.precision += r.precision;
    mean.recall += r.recall;
    mean.f1 += r.f1;
    mean.precision_undefined = mean.precision_undefined || r.precision_undefined;
    mean.recall_undefined = mean.recall_undefined || r.recall_undefined;
    mean.f1_undefined = mean.f1_undefined || r.f1_undefined;
  }
  const auto n = static_cast<double>(per_seed.size());
  mean.accuracy /= n;
  mean.precision /= n;
  mean.recall /= n;
  mean.f1 /= n;
  mean.per_seed.assign(per_seed.begin(), per_seed.end());
  return mean;
}

nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json j = {{"tp", r.tp},
                      {"fp", r.fp},
                      {"tn", r.tn},
                      {"fn", r.fn},
                      {"accuracy", r.accuracy},
                      {"precision", r.precision},
                      {"recall", r.recall},
                      {"f1", r.f1},
                      {"n_seeds", r.n_seeds}};
  nlohmann::json flags = nlohmann::json::array();
  if (r.precision_undefined) flags.push_back("precision_undefined");
  if (r.recall_undefined) flags.push_back("recall_undefined");
  if (r.f1_undefined) flags.push_back("f1_undefined");
  j["flags"] = flags;
  if (!r.per_seed.empty()) {
    j["per_seed"] = nlohmann::json::array();
    for (const auto& s : r.per_seed) j["per_seed"].push_back(to_json(s));
  }
  return j;
}

void ExperimentConfig::validate() const {
  scar.validate();
  prototype.validate();
  progressive.validate();
  train.validate();
  mrl.validate();
  if (hidden == 0 || proj_dim == 0) throw Error(ErrorKind::kConfiguration, "encoder sizes must be positive");
}

double pseudo_label_precision(const std::map<std::string, std::size_t>& entries, const LabelMap& truth,
                              int expected_label) {
  if (entries.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::size_t correct = 0;
  for (const auto& [id, stamp] : entries) {
    const auto it = truth.find(id);
    if (it != truth.end() && it->second == expected_label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(entries.size());
}

std::map<std::string, double> ledger_confidences(const encoder::EncoderModel& model,
                                                 const embed::EmbeddingMatrix& emb,
                                                 const dls::PseudoLabelLedger& ledger) {
  std::map<std::string, double> out;
  for (const auto& e : ledger.entries()) {
    const auto p = encoder::predict_proba(model, emb.row(e.id));
    out[e.id] = e.label == dls::PseudoLabel::kHP ? p[1] : p[0];
  }
  return out;
}

LabelMap truth_labels(std::span<const corpus::CodeSample> samples) {
  LabelMap out;
  for (const auto& s : samples) {
    if (s.truth) out[s.id] = *s.truth;
  }
  return out;
}

PuScenario simulate_pu(std::span<const corpus::CodeSample> samples, const corpus::DatasetSplit& split,
                       const ExperimentConfig& cfg, std::uint64_t seed) {
  auto scar = cfg.scar;
  scar.seed = seed;
  return scenario_from_samples(corpus::apply_scar(corpus::subset(samples, split.train), scar).samples, seed);
}

PuScenario scenario_from_samples(std::vector<corpus::CodeSample> pu_samples, std::uint64_t seed) {
  PuScenario pu;
  pu.seed = seed;
  for (const auto& s : pu_samples) (s.selected ? pu.positives : pu.unlabeled).push_back(s.id);
  pu.samples = std::move(pu_samples);
  if (pu.positives.empty()) throw Error(ErrorKind::kStage, "SCAR labeled no positives");
  return pu;
}

encoder::TrainingSet validation_set(std::span<const corpus::CodeSample> samples,
                                    const embed::EmbeddingMatrix& emb, const corpus::DatasetSplit& split,
                                    std::span<const std::string> train_positives,
                                    const ExperimentConfig& cfg, std::uint64_t seed) {
  const auto valid_samples = corpus::subset(samples, split.valid);
  if (cfg.validation == ValidationMode::kPseudoLabel) {
    return pseudo_validation_set(valid_samples, emb, train_positives, cfg, seed);
  }
  encoder::TrainingSet valid;
  valid.dim = emb.dim();
  for (const auto& s : valid_samples) valid.add(s.id, emb.row(s.id), s.truth.value_or(0));
  return valid;
}

encoder::EncoderModel initial_model(std::size_t input_dim, const ExperimentConfig& cfg, std::uint64_t seed) {
  const encoder::EncoderShape shape{input_dim, cfg.hidden, cfg.proj_dim};
  return encoder::EncoderModel::initialize(shape, mix_seed(seed, 0x494E4954));  // "INIT"
}

encoder::TrainConfig seed_train_config(const ExperimentConfig& cfg, std::uint64_t seed) {
  auto tcfg = cfg.train;
  tcfg.seed = mix_seed(cfg.train.seed, seed);
  return tcfg;
}

SelectionOutcome select_stage(const embed::EmbeddingMatrix& emb, const PuScenario& pu,
                              const encoder::TrainingSet& valid, const ExperimentConfig& cfg,
                              const dls::ProgressiveHooks& hooks) {
  cfg.validate();
  SelectionOutcome out;
  const std::set<std::string> labeled(pu.positives.begin(), pu.positives.end());
  out.model = initial_model(emb.dim(), cfg, pu.seed);
  if (cfg.mode == PipelineMode::kNaive) {
    out.ledger = dls::PseudoLabelLedger(cfg.progressive.max_epochs, labeled);
    return out;
  }
  const auto dist = dls::prototype_distances(emb, pu.positives, pu.unlabeled, cfg.prototype);
  const auto hn0 = dls::select_hn(dist, pu.unlabeled.size(), pu.positives.size(), cfg.prototype);
  dls::PseudoLabelLedger ledger(cfg.progressive.max_epochs, labeled);
  for (const auto& id : hn0) ledger.add_hn(id, 0);
  out.hn_initial = hn0.size();

  out.progress = dls::progressive_select(emb, pu.positives, pu.unlabeled, std::move(ledger), out.model,
                                         cfg.progressive, seed_train_config(cfg, pu.seed), valid, hooks);
  out.ledger = out.progress.ledger;
  out.model = out.progress.model;
  return out;
}

encoder::EncoderModel train_stage(const embed::EmbeddingMatrix& emb, const PuScenario& pu,
                                  const SelectionOutcome& selection, const encoder::TrainingSet& valid,
                                  const ExperimentConfig& cfg) {
  cfg.validate();
  const auto tcfg = seed_train_config(cfg, pu.seed);
  if (cfg.mode == PipelineMode::kNaive) {
    encoder::TrainingSet data;
    data.dim = emb.dim();
    for (const auto& id : pu.positives) data.add(id, emb.row(id), 1);
    for (const auto& id : pu.unlabeled) data.add(id, emb.row(id), 0);
    // Same training budget as the pilot fine-tuning steps.
    return encoder::train(selection.model, data, tcfg, encoder::TrainingSet{}).model;
  }
  if (!cfg.mixed_supervision) return selection.model;
  encoder::LossOptions loss{encoder::Objective::kMetric, cfg.mrl};
  auto mcfg = tcfg;
  mcfg.seed = mix_seed(tcfg.seed, 0x4D524C);  // "MRL"
  const auto data = dls::ledger_training_set(emb, pu.positives, selection.ledger);
  return encoder::train(selection.model, data, mcfg, valid, loss).model;
}

LabelMap predict_labels(const encoder::EncoderModel& model, const embed::EmbeddingMatrix& emb,
                        std::span<const std::string> ids) {
  LabelMap out;
  for (const auto& id : ids) out[id] = encoder::predict_proba(model, emb.row(id))[1] > 0.5 ? 1 : 0;
  return out;
}

SeedOutcome run_seed(std::span<const corpus::CodeSample> samples, const embed::EmbeddingMatrix& emb,
                     const corpus::DatasetSplit& split, const ExperimentConfig& cfg, std::uint64_t seed,
                     const SeedRunOptions& options) {
  cfg.validate();
  SeedOutcome out;
  out.seed = seed;

  const auto truth = truth_labels(samples);
  const auto pu = simulate_pu(samples, split, cfg, seed);
  out.labeled_count = pu.positives.size();
  const auto valid = validation_set(samples, emb, split, pu.positives, cfg, seed);

  const auto selection = select_stage(emb, pu, valid, cfg, options.hooks);
  out.hn_initial = selection.hn_initial;
  out.progress = selection.progress;
  out.ledger = selection.ledger;
  out.model = train_stage(emb, pu, selection, valid, cfg);
  if (cfg.mode == PipelineMode::kPilot) {
    dls::PseudoLabelLedger initial(out.ledger.max_epochs(), out.ledger.labeled_positives());
    for (const auto& [id, stamp] : out.ledger.hn()) {
      if (stamp == 0) initial.add_hn(id, 0);
    }
    out.hn_initial_precision = pseudo_label_precision(initial.hn(), truth, 0);
    out.hn_precision = pseudo_label_precision(out.ledger.hn(), truth, 0);
    out.hp_precision = pseudo_label_precision(out.ledger.hp(), truth, 1);
    out.confidences = ledger_confidences(out.model, emb, out.ledger);
  }

  out.test_predictions = predict_labels(out.model, emb, split.test);
  LabelMap test_truth;
  for (const auto& id : split.test) test_truth[id] = truth.at(id);
  out.metrics = compute_metrics(out.test_predictions, test_truth);
  out.ok = true;
  return out;
}

ExperimentResult run_pu_experiment(std::span<const corpus::CodeSample> samples,
                                   const embed::EmbeddingMatrix& emb, const ExperimentConfig& cfg,
                                   std::span<const std::uint64_t> seeds, const SeedRunOptions& options) {
  cfg.validate();
  if (seeds.empty()) throw Error(ErrorKind::kConfiguration, "at least one seed is required");
  for (const auto& s : samples) {
    if (!s.truth) throw Error(ErrorKind::kPrecondition, "sample '" + s.id + "' has no ground truth");
  }
  ExperimentResult result;
  result.split = corpus::split_dataset(samples, cfg.split_seed);

  std::vector<MetricsReport> reports;
  for (std::uint64_t seed : seeds) {
    try {
      result.seeds.push_back(run_seed(samples, emb, result.split, cfg, seed, options));
      reports.push_back(result.seeds.back().metrics);
    } catch (const Error& e) {
      spdlog::error("seed {} failed: {}", seed, e.what());
      SeedOutcome failed;
      failed.seed = seed;
      failed.error = e.what();
      result.seeds.push_back(std::move(failed));
    }
  }
  if (reports.empty()) throw Error(ErrorKind::kStage, "every seed failed");
  result.mean = average_reports(reports);
  return result;
}

MislabelReport mislabel_report(const dls::PseudoLabelLedger& ledger, const LabelMap& truth,
                               const std::map<std::string, double>& confidences) {
  MislabelReport report;
  for (const auto& e : ledger.entries()) {
    const auto t = truth.find(e.id);
    if (t == truth.end()) continue;
    const int pseudo = e.label == dls::PseudoLabel::kHP ? 1 : 0;
    if (pseudo == t->second) continue;
    const auto c = confidences.find(e.id);
    const double confidence = c == confidences.end() ? 0.0 : c->second;
    report.entries.push_back({e.id, t->second, e.label, confidence, e.epoch});
  }
  std::sort(report.entries.begin(), report.entries.end(), [](const auto& a, const auto& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    return a.id < b.id;
  });
  return report;
}

void write_mislabel_csv(std::ostream& out, const MislabelReport& report) {
  out << "id,truth,pseudo,confidence,epoch\n";
  char buf[32];
  for (const auto& e : report.entries) {
    std::snprintf(buf, sizeof(buf), "%.6f", e.confidence);
    out << csv_field(e.id) << ',' << e.truth << ',' << dls::to_string(e.pseudo) << ',' << buf << ','
        << e.epoch << '\n';
  }
}

void write_mislabel_csv(const std::filesystem::path& path, const MislabelReport& report) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  write_mislabel_csv(out, report);
}

std::string to_string(PipelineMode mode) { return mode == PipelineMode::kNaive ? "naive" : "pilot"; }

PipelineMode pipeline_mode_from_string(const std::string& text) {
  if (text == "pilot") return PipelineMode::kPilot;
  if (text == "naive") return PipelineMode::kNaive;
  throw Error(ErrorKind::kConfiguration, "unknown pipeline mode '" + text + "'");
}

std::string to_string(ValidationMode mode) {
  return mode == ValidationMode::kTruth ? "truth" : "pseudo-label";
}

ValidationMode validation_mode_from_string(const std::string& text) {
  if (text == "truth") return ValidationMode::kTruth;
  if (text == "pseudo-label") return ValidationMode::kPseudoLabel;
  throw Error(ErrorKind::kConfiguration, "unknown validation mode '" + text + "'");
}

}  // namespace pilot::eval
