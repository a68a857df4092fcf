#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "pilot/embed.hpp"
#include "pilot/encoder.hpp"

namespace pilot::dls {

enum class KMode { kCount, kFraction };

enum class HnCountMode {
  kPerPositive,      // T = round(T_r * n_u / n_p)
  kRatioOfUnlabeled,  // T = round(T_r * n_u)
};

struct PrototypeConfig {
  KMode k_mode = KMode::kFraction;
  double k_value = 0.3;
  double t_ratio = 0.3;
  HnCountMode hn_count_mode = HnCountMode::kRatioOfUnlabeled;

  void validate() const;
  bool operator==(const PrototypeConfig&) const = default;
};

// Number of nearest positives forming each prototype.
std::size_t resolve_k(const PrototypeConfig& cfg, std::size_t n_positives);

// Per-ranking selection count T before clamping to n_u.
std::size_t resolve_selection_count(const PrototypeConfig& cfg, std::size_t n_unlabeled,
                                    std::size_t n_positives);

/// For each unlabeled sample: d_sum is the summed L1 distance to its k nearest
/// positives, d_mean the L1 distance to the mean of those k positives.
struct PrototypeDistances {
  std::vector<std::string> ids;
  std::vector<double> d_sum;
  std::vector<double> d_mean;

  std::size_t size() const { return ids.size(); }
};

/// Nearest positives are ordered by (distance, id) ascending; the first k are
/// summed and averaged in that order.
PrototypeDistances prototype_distances(const embed::EmbeddingMatrix& emb,
                                       std::span<const std::string> positives,
                                       std::span<const std::string> unlabeled,
                                       const PrototypeConfig& cfg);

/// Takes the T farthest samples by d_sum and the T farthest by d_mean (ties by
/// ascending id) and returns the intersection, sorted by id.
std::vector<std::string> select_hn(const PrototypeDistances& dist, std::size_t n_unlabeled,
                                   std::size_t n_positives, const PrototypeConfig& cfg);

/// 1 - e / (E_m + 1) for 1 <= e <= E_m.
double epoch_weight(std::size_t epoch, std::size_t max_epochs);

enum class PseudoLabel { kHN, kHP };

struct LedgerEntry {
  std::string id;
  PseudoLabel label = PseudoLabel::kHN;
  std::size_t epoch = 0;
  double weight = 1.0;

  bool operator==(const LedgerEntry&) const = default;
};

/// High-quality negatives and positives with the epoch each was added (0 is
/// the prototype phase). Entries are never removed; adding an id twice, adding
/// a labeled positive, or a stamp above max_epochs throws.
class PseudoLabelLedger {
 public:
  PseudoLabelLedger() = default;
  PseudoLabelLedger(std::size_t max_epochs, std::set<std::string> labeled_positives);

  void add(const std::string& id, PseudoLabel label, std::size_t epoch);
  void add_hn(const std::string& id, std::size_t epoch) { add(id, PseudoLabel::kHN, epoch); }
  void add_hp(const std::string& id, std::size_t epoch) { add(id, PseudoLabel::kHP, epoch); }

  bool contains(const std::string& id) const { return hn_.count(id) || hp_.count(id); }
  std::optional<LedgerEntry> find(const std::string& id) const;

  const std::map<std::string, std::size_t>& hn() const { return hn_; }
  const std::map<std::string, std::size_t>& hp() const { return hp_; }
  const std::set<std::string>& labeled_positives() const { return positives_; }
  std::size_t max_epochs() const { return max_epochs_; }
  std::size_t size() const { return hn_.size() + hp_.size(); }

  // Training weight: 1 for stamp 0, epoch_weight(stamp) otherwise.
  double weight(std::size_t stamp) const;

  // All entries sorted by id.
  std::vector<LedgerEntry> entries() const;

  bool operator==(const PseudoLabelLedger&) const = default;

 private:
  std::size_t max_epochs_ = 0;
  std::set<std::string> positives_;
  std::map<std::string, std::size_t> hn_;
  std::map<std::string, std::size_t> hp_;
};

/// Throws a validation error unless `after` extends `before` without removals
/// or relabels and both satisfy the ledger invariants.
void check_ledger_invariants(const PseudoLabelLedger& ledger);
void check_ledger_growth(const PseudoLabelLedger& before, const PseudoLabelLedger& after);

void write_ledger(std::ostream& out, const PseudoLabelLedger& ledger);
void write_ledger(const std::filesystem::path& path, const PseudoLabelLedger& ledger);
PseudoLabelLedger read_ledger(std::istream& in, std::size_t max_epochs,
                              std::set<std::string> labeled_positives);
PseudoLabelLedger read_ledger(const std::filesystem::path& path, std::size_t max_epochs,
                              std::set<std::string> labeled_positives);

struct ProgressiveConfig {
  double t_max = 0.9;
  double t_min = 0.1;
  std::size_t max_epochs = 5;

  void validate() const;
  bool operator==(const ProgressiveConfig&) const = default;
};

struct ProgressiveHooks {
  // Called after the prototype-phase fit (epoch 0) and after each expansion epoch.
  std::function<void(std::size_t epoch, const PseudoLabelLedger&, const encoder::EncoderModel&)> on_epoch;
};

struct ProgressiveResult {
  PseudoLabelLedger ledger;
  encoder::EncoderModel model;
  std::size_t epochs_run = 0;  // expansion epochs completed
  bool stopped_early = false;
  std::vector<double> valid_accuracy;  // index 0 is after the prototype-phase fit
  std::vector<std::size_t> added_per_epoch;
};

/// Fits positives vs the epoch-0 negatives, then for each epoch retrains from
/// the retained parameters on positives + HP (class 1) and HN (class 0) with
/// epoch-decayed weights and adds unlabeled samples whose positive probability
/// is above t_max (HP) or below t_min (HN). Stops once validation accuracy
/// fails to improve.
ProgressiveResult progressive_select(const embed::EmbeddingMatrix& emb,
                                     std::span<const std::string> positives,
                                     std::span<const std::string> unlabeled,
                                     PseudoLabelLedger ledger, const encoder::EncoderModel& initial,
                                     const ProgressiveConfig& pcfg, const encoder::TrainConfig& tcfg,
                                     const encoder::TrainingSet& valid,
                                     const ProgressiveHooks& hooks = {});

// Labeled positives plus every ledger entry, with ledger weights.
encoder::TrainingSet ledger_training_set(const embed::EmbeddingMatrix& emb,
                                         std::span<const std::string> positives,
                                         const PseudoLabelLedger& ledger);

std::string to_string(PseudoLabel label);
PseudoLabel pseudo_label_from_string(const std::string& text);
std::string to_string(KMode mode);
KMode k_mode_from_string(const std::string& text);
std::string to_string(HnCountMode mode);
HnCountMode hn_count_mode_from_string(const std::string& text);

}  // namespace pilot::dls
