#include "pilot/dls.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numeric>
#include <unordered_set>

#include "pilot/error.hpp"
#include "pilot/random.hpp"

namespace pilot::dls {

void PrototypeConfig::validate() const {
  if (k_mode == KMode::kFraction) {
    if (!(k_value > 0.0 && k_value <= 1.0)) {
      throw Error(ErrorKind::kConfiguration, "fraction k_value must lie in (0, 1]");
    }
  } else if (!(k_value >= 1.0 && std::floor(k_value) == k_value)) {
    throw Error(ErrorKind::kConfiguration, "count k_value must be an integer >= 1");
  }
  if (!(t_ratio > 0.0) || !std::isfinite(t_ratio)) {
    throw Error(ErrorKind::kConfiguration, "t_ratio must be positive");
  }
}

std::size_t resolve_k(const PrototypeConfig& cfg, std::size_t n_positives) {
  cfg.validate();
  if (cfg.k_mode == KMode::kCount) return static_cast<std::size_t>(cfg.k_value);
  const auto k = static_cast<std::size_t>(std::llround(cfg.k_value * static_cast<double>(n_positives)));
  return std::max<std::size_t>(1, k);
}

std::size_t resolve_selection_count(const PrototypeConfig& cfg, std::size_t n_unlabeled,
                                    std::size_t n_positives) {
  cfg.validate();
  double t = cfg.t_ratio * static_cast<double>(n_unlabeled);
  if (cfg.hn_count_mode == HnCountMode::kPerPositive) {
    if (n_positives == 0) throw Error(ErrorKind::kPrecondition, "no labeled positives");
    t /= static_cast<double>(n_positives);
  }
  return static_cast<std::size_t>(std::llround(t));
}

PrototypeDistances prototype_distances(const embed::EmbeddingMatrix& emb,
                                       std::span<const std::string> positives,
                                       std::span<const std::string> unlabeled,
                                       const PrototypeConfig& cfg) {
  if (positives.empty()) throw Error(ErrorKind::kPrecondition, "no labeled positives");
  const std::size_t k = resolve_k(cfg, positives.size());
  if (k > positives.size()) {
    throw Error(ErrorKind::kConfiguration, "k = " + std::to_string(k) + " exceeds the " +
                                               std::to_string(positives.size()) + " positives");
  }
  // Sorting positives by id makes index order the tie-break order.
  std::vector<std::string> pos(positives.begin(), positives.end());
  std::sort(pos.begin(), pos.end());
  if (std::adjacent_find(pos.begin(), pos.end()) != pos.end()) {
    throw Error(ErrorKind::kPrecondition, "duplicate positive id");
  }
  std::vector<std::size_t> pos_rows;
  pos_rows.reserve(pos.size());
  for (const auto& id : pos) pos_rows.push_back(emb.index_of(id));

  const std::size_t dim = emb.dim();
  PrototypeDistances out;
  out.ids.reserve(unlabeled.size());
  out.d_sum.reserve(unlabeled.size());
  out.d_mean.reserve(unlabeled.size());

  std::vector<std::pair<double, std::size_t>> near(pos.size());
  std::vector<double> prototype(dim);
  for (const auto& id : unlabeled) {
    const auto x = emb.row(id);
    for (std::size_t j = 0; j < pos.size(); ++j) {
      near[j] = {embed::l1_distance(x, emb.row(pos_rows[j])), j};
    }
    std::partial_sort(near.begin(), near.begin() + static_cast<std::ptrdiff_t>(k), near.end());

    double d_sum = 0.0;
    std::fill(prototype.begin(), prototype.end(), 0.0);
    for (std::size_t t = 0; t < k; ++t) {
      d_sum += near[t].first;
      const auto row = emb.row(pos_rows[near[t].second]);
      for (std::size_t m = 0; m < dim; ++m) prototype[m] += static_cast<double>(row[m]);
    }
    for (auto& v : prototype) v /= static_cast<double>(k);

    out.ids.push_back(id);
    out.d_sum.push_back(d_sum);
    out.d_mean.push_back(embed::l1_distance(x, std::span<const double>(prototype)));
  }
  return out;
}

std::vector<std::string> select_hn(const PrototypeDistances& dist, std::size_t n_unlabeled,
                                   std::size_t n_positives, const PrototypeConfig& cfg) {
  if (n_positives == 0) throw Error(ErrorKind::kPrecondition, "n_p must be at least 1");
  std::size_t t = resolve_selection_count(cfg, n_unlabeled, n_positives);
  if (t == 0) {
    spdlog::warn("HN selection count resolves to 0; no negatives selected");
    return {};
  }
  const std::size_t limit = std::min(n_unlabeled, dist.size());
  if (t > limit) {
    spdlog::warn("HN selection count {} exceeds {} unlabeled samples; clamped", t, limit);
    t = limit;
  }

  auto top = [&](const std::vector<double>& score) {
    std::vector<std::size_t> order(dist.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(t), order.end(),
                      [&](std::size_t a, std::size_t b) {
                        if (score[a] != score[b]) return score[a] > score[b];
                        return dist.ids[a] < dist.ids[b];
                      });
    std::vector<std::string> ids;
    ids.reserve(t);
    for (std::size_t i = 0; i < t; ++i) ids.push_back(dist.ids[order[i]]);
    std::sort(ids.begin(), ids.end());
    return ids;
  };
  const auto by_sum = top(dist.d_sum);
  const auto by_mean = top(dist.d_mean);
  std::vector<std::string> both;
  std::set_intersection(by_sum.begin(), by_sum.end(), by_mean.begin(), by_mean.end(),
                        std::back_inserter(both));
  return both;
}

double epoch_weight(std::size_t epoch, std::size_t max_epochs) {
  if (epoch < 1 || epoch > max_epochs) {
    throw Error(ErrorKind::kRange, "epoch " + std::to_string(epoch) + " outside [1, " +
                                       std::to_string(max_epochs) + "]");
  }
  // (E_m + 1 - e) / (E_m + 1) is the correctly rounded value of 1 - e / (E_m + 1).
  return static_cast<double>(max_epochs + 1 - epoch) / static_cast<double>(max_epochs + 1);
}

PseudoLabelLedger::PseudoLabelLedger(std::size_t max_epochs, std::set<std::string> labeled_positives)
    : max_epochs_(max_epochs), positives_(std::move(labeled_positives)) {}

void PseudoLabelLedger::add(const std::string& id, PseudoLabel label, std::size_t epoch) {
  if (epoch > max_epochs_) {
    throw Error(ErrorKind::kRange, "stamp " + std::to_string(epoch) + " exceeds E_m = " +
                                       std::to_string(max_epochs_));
  }
  if (positives_.count(id)) {
    throw Error(ErrorKind::kValidation, "'" + id + "' is a labeled positive");
  }
  if (contains(id)) throw Error(ErrorKind::kValidation, "'" + id + "' is already pseudo-labeled");
  (label == PseudoLabel::kHN ? hn_ : hp_).emplace(id, epoch);
}

std::optional<LedgerEntry> PseudoLabelLedger::find(const std::string& id) const {
  if (auto it = hn_.find(id); it != hn_.end()) {
    return LedgerEntry{id, PseudoLabel::kHN, it->second, weight(it->second)};
  }
  if (auto it = hp_.find(id); it != hp_.end()) {
    return LedgerEntry{id, PseudoLabel::kHP, it->second, weight(it->second)};
  }
  return std::nullopt;
}

double PseudoLabelLedger::weight(std::size_t stamp) const {
  return stamp == 0 ? 1.0 : epoch_weight(stamp, max_epochs_);
}

std::vector<LedgerEntry> PseudoLabelLedger::entries() const {
  std::vector<LedgerEntry> out;
  out.reserve(size());
  for (const auto& [id, e] : hn_) out.push_back({id, PseudoLabel::kHN, e, weight(e)});
  for (const auto& [id, e] : hp_) out.push_back({id, PseudoLabel::kHP, e, weight(e)});
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  return out;
}

void check_ledger_invariants(const PseudoLabelLedger& ledger) {
  for (const auto& [id, e] : ledger.hn()) {
    if (ledger.hp().count(id)) throw Error(ErrorKind::kValidation, "'" + id + "' is in both HN and HP");
    if (ledger.labeled_positives().count(id)) {
      throw Error(ErrorKind::kValidation, "labeled positive '" + id + "' is in HN");
    }
    if (e > ledger.max_epochs()) throw Error(ErrorKind::kValidation, "HN stamp above E_m for '" + id + "'");
  }
  for (const auto& [id, e] : ledger.hp()) {
    if (ledger.labeled_positives().count(id)) {
      throw Error(ErrorKind::kValidation, "labeled positive '" + id + "' is in HP");
    }
    if (e > ledger.max_epochs()) throw Error(ErrorKind::kValidation, "HP stamp above E_m for '" + id + "'");
  }
}

void check_ledger_growth(const PseudoLabelLedger& before, const PseudoLabelLedger& after) {
  check_ledger_invariants(before);
  check_ledger_invariants(after);
  for (const auto& [id, e] : before.hn()) {
    const auto it = after.hn().find(id);
    if (it == after.hn().end() || it->second != e) {
      throw Error(ErrorKind::kValidation, "HN entry '" + id + "' was removed or restamped");
    }
  }
  for (const auto& [id, e] : before.hp()) {
    const auto it = after.hp().find(id);
    if (it == after.hp().end() || it->second != e) {
      throw Error(ErrorKind::kValidation, "HP entry '" + id + "' was removed or restamped");
    }
  }
}

void write_ledger(std::ostream& out, const PseudoLabelLedger& ledger) {
  for (const auto& e : ledger.entries()) {
    nlohmann::json record = {
        {"id", e.id}, {"pseudo", to_string(e.label)}, {"epoch", e.epoch}, {"weight", e.weight}};
    out << record.dump() << '\n';
  }
}

void write_ledger(const std::filesystem::path& path, const PseudoLabelLedger& ledger) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kIo, "cannot write ledger " + path.string());
  write_ledger(out, ledger);
}

PseudoLabelLedger read_ledger(std::istream& in, std::size_t max_epochs,
                              std::set<std::string> labeled_positives) {
  PseudoLabelLedger ledger(max_epochs, std::move(labeled_positives));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto record = nlohmann::json::parse(line);
      ledger.add(record.at("id").get<std::string>(),
                 pseudo_label_from_string(record.at("pseudo").get<std::string>()),
                 record.at("epoch").get<std::size_t>());
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::kParse, "ledger line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return ledger;
}

PseudoLabelLedger read_ledger(const std::filesystem::path& path, std::size_t max_epochs,
                              std::set<std::string> labeled_positives) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open ledger " + path.string());
  return read_ledger(in, max_epochs, std::move(labeled_positives));
}

void ProgressiveConfig::validate() const {
  if (!(t_max > 0.0 && t_max <= 1.0)) throw Error(ErrorKind::kConfiguration, "t_max must lie in (0, 1]");
  if (!(t_min >= 0.0 && t_min < 1.0)) throw Error(ErrorKind::kConfiguration, "t_min must lie in [0, 1)");
  if (!(t_min < t_max)) throw Error(ErrorKind::kConfiguration, "t_min must be below t_max");
  if (max_epochs < 1) throw Error(ErrorKind::kConfiguration, "max progressive epochs must be positive");
}

encoder::TrainingSet ledger_training_set(const embed::EmbeddingMatrix& emb,
                                         std::span<const std::string> positives,
                                         const PseudoLabelLedger& ledger) {
  encoder::TrainingSet set;
  set.dim = emb.dim();
  for (const auto& id : positives) set.add(id, emb.row(id), 1, 1.0);
  for (const auto& e : ledger.entries()) {
    set.add(e.id, emb.row(e.id), e.label == PseudoLabel::kHP ? 1 : 0, e.weight);
  }
  return set;
}

ProgressiveResult progressive_select(const embed::EmbeddingMatrix& emb,
                                     std::span<const std::string> positives,
                                     std::span<const std::string> unlabeled,
                                     PseudoLabelLedger ledger, const encoder::EncoderModel& initial,
                                     const ProgressiveConfig& pcfg, const encoder::TrainConfig& tcfg,
                                     const encoder::TrainingSet& valid,
                                     const ProgressiveHooks& hooks) {
  pcfg.validate();
  if (positives.empty()) throw Error(ErrorKind::kPrecondition, "no labeled positives");
  if (ledger.hn().empty()) {
    throw Error(ErrorKind::kPrecondition, "HN set is empty; cannot form a binary problem");
  }
  if (ledger.max_epochs() != pcfg.max_epochs) {
    throw Error(ErrorKind::kPrecondition, "ledger E_m differs from the progressive config");
  }
  check_ledger_invariants(ledger);

  ProgressiveResult result;
  const bool has_valid = !valid.empty();

  // Fine-tuning steps run their full epoch budget; the validation set only
  // decides when the expansion loop stops.
  const encoder::TrainingSet no_valid;

  // Prototype phase: positives vs epoch-0 negatives, nothing added.
  auto fit = encoder::train(initial, ledger_training_set(emb, positives, ledger), tcfg, no_valid);
  encoder::EncoderModel model = std::move(fit.model);
  double best = encoder::accuracy(model, valid);
  result.valid_accuracy.push_back(best);
  if (hooks.on_epoch) hooks.on_epoch(0, ledger, model);

  for (std::size_t epoch = 1; epoch <= pcfg.max_epochs; ++epoch) {
    auto cfg = tcfg;
    cfg.seed = mix_seed(tcfg.seed, epoch);
    fit = encoder::train(model, ledger_training_set(emb, positives, ledger), cfg, no_valid);
    model = std::move(fit.model);

    std::size_t added = 0;
    for (const auto& id : unlabeled) {
      if (ledger.contains(id) || ledger.labeled_positives().count(id)) continue;
      const double p_pos = encoder::predict_proba(model, emb.row(id))[1];
      if (p_pos > pcfg.t_max) {
        ledger.add_hp(id, epoch);
        ++added;
      } else if (p_pos < pcfg.t_min) {
        ledger.add_hn(id, epoch);
        ++added;
      }
    }
    result.added_per_epoch.push_back(added);
    result.epochs_run = epoch;
    if (hooks.on_epoch) hooks.on_epoch(epoch, ledger, model);

    const double acc = encoder::accuracy(model, valid);
    result.valid_accuracy.push_back(acc);
    if (has_valid) {
      if (acc > best) {
        best = acc;
      } else {
        result.stopped_early = epoch < pcfg.max_epochs;
        break;
      }
    }
  }
  result.ledger = std::move(ledger);
  result.model = std::move(model);
  return result;
}

std::string to_string(PseudoLabel label) { return label == PseudoLabel::kHP ? "HP" : "HN"; }

PseudoLabel pseudo_label_from_string(const std::string& text) {
  if (text == "HN") return PseudoLabel::kHN;
  if (text == "HP") return PseudoLabel::kHP;
  throw Error(ErrorKind::kParse, "unknown pseudo-label '" + text + "'");
}

std::string to_string(KMode mode) { return mode == KMode::kCount ? "count" : "fraction"; }

KMode k_mode_from_string(const std::string& text) {
  if (text == "count") return KMode::kCount;
  if (text == "fraction") return KMode::kFraction;
  throw Error(ErrorKind::kConfiguration, "unknown k mode '" + text + "'");
}

std::string to_string(HnCountMode mode) {
  return mode == HnCountMode::kPerPositive ? "per-positive" : "ratio-of-unlabeled";
}

HnCountMode hn_count_mode_from_string(const std::string& text) {
  if (text == "per-positive") return HnCountMode::kPerPositive;
  if (text == "ratio-of-unlabeled") return HnCountMode::kRatioOfUnlabeled;
  throw Error(ErrorKind::kConfiguration, "unknown HN count mode '" + text + "'");
}

}  // namespace pilot::dls
