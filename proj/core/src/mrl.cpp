#include "pilot/mrl.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pilot/error.hpp"

namespace pilot::mrl {
namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::vector<double> similarities(std::span<const double> query,
                                 const std::vector<std::vector<double>>& members) {
  std::vector<double> sims;
  sims.reserve(members.size());
  for (const auto& m : members) {
    const double s = dot(query, m);
    if (!std::isfinite(s)) throw Error(ErrorKind::kNumeric, "non-finite similarity in contrast batch");
    sims.push_back(s);
  }
  return sims;
}

const char* class_name(int label) { return label == 1 ? "positive (1)" : "negative (0)"; }

}  // namespace

void MrlConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(ErrorKind::kConfiguration, "alpha must lie in [0, 1]");
  if (!(tau > 0.0)) throw Error(ErrorKind::kConfiguration, "tau must be positive");
  if (batch_B < 2) throw Error(ErrorKind::kConfiguration, "batch_B must be at least 2");
}

void ContrastBatch::validate() const {
  if (members.empty()) throw Error(ErrorKind::kBatchConstruction, "contrast batch has no members");
  if (positive_index >= members.size()) {
    throw Error(ErrorKind::kBatchConstruction, "positive_index out of range");
  }
  for (const auto& m : members) {
    if (m.size() != query.size()) {
      throw Error(ErrorKind::kDimension, "contrast member dimension differs from query");
    }
  }
  if (!pseudo_labels.empty() && pseudo_labels.size() != members.size()) {
    throw Error(ErrorKind::kBatchConstruction, "pseudo_labels must align with members");
  }
}

double loss_ce(std::span<const CeTerm> terms, Reduction reduction) {
  double total = 0.0;
  for (const auto& t : terms) {
    if (t.weight < 0.0) throw Error(ErrorKind::kPrecondition, "negative sample weight");
    if (t.weight == 0.0) continue;
    const double p = t.proba[static_cast<std::size_t>(t.label)];
    if (!(p > 0.0)) throw Error(ErrorKind::kNumeric, "zero probability at the labeled class");
    total += t.weight * -std::log(p);
  }
  if (reduction == Reduction::kMean && !terms.empty()) total /= static_cast<double>(terms.size());
  return total;
}

InfoNce info_nce(std::span<const double> sims, std::span<const std::size_t> targets, double tau) {
  InfoNce out;
  out.dsim.assign(sims.size(), 0.0);
  if (targets.empty()) return out;
  double peak = -INFINITY;
  for (double s : sims) peak = std::max(peak, s / tau);
  double z = 0.0;
  std::vector<double> softmax(sims.size());
  for (std::size_t k = 0; k < sims.size(); ++k) {
    softmax[k] = std::exp(sims[k] / tau - peak);
    z += softmax[k];
  }
  const double log_z = peak + std::log(z);
  const double share = 1.0 / static_cast<double>(targets.size());
  for (std::size_t k = 0; k < sims.size(); ++k) out.dsim[k] = softmax[k] / z / tau;
  for (std::size_t t : targets) {
    out.loss += share * (log_z - sims[t] / tau);
    out.dsim[t] -= share / tau;
  }
  if (!std::isfinite(out.loss)) throw Error(ErrorKind::kNumeric, "non-finite contrastive loss");
  return out;
}

double loss_self(const ContrastBatch& batch, double tau) {
  batch.validate();
  const auto sims = similarities(batch.query, batch.members);
  const std::size_t target = batch.positive_index;
  return info_nce(sims, std::span<const std::size_t>(&target, 1), tau).loss;
}

double loss_weak(const ContrastBatch& batch, double tau, AnchorMode mode) {
  batch.validate();
  std::vector<std::size_t> targets;
  const bool labeled = !batch.pseudo_labels.empty();
  if (mode == AnchorMode::kAverage && labeled) {
    for (std::size_t k = 0; k < batch.members.size(); ++k) {
      if (batch.pseudo_labels[k] == batch.query_label) targets.push_back(k);
    }
  } else if (!labeled || batch.pseudo_labels[batch.positive_index] == batch.query_label) {
    targets.push_back(batch.positive_index);
  }
  if (targets.empty()) {
    throw Error(ErrorKind::kBatchConstruction,
                std::string("no member shares the anchor's pseudo-label ") + class_name(batch.query_label));
  }
  const auto sims = similarities(batch.query, batch.members);
  return info_nce(sims, targets, tau).loss;
}

double loss_metric(double self_loss, double weak_loss, double ce_loss, const MrlConfig& cfg) {
  if (!std::isfinite(self_loss) || !std::isfinite(weak_loss) || !std::isfinite(ce_loss)) {
    throw Error(ErrorKind::kNumeric, "non-finite loss component");
  }
  return cfg.alpha * self_loss + (1.0 - cfg.alpha) * weak_loss + ce_loss;
}

ContrastDraw draw_contrast_members(std::size_t anchor, std::span<const int> labels, std::size_t B,
                                   Rng& rng) {
  if (anchor >= labels.size()) throw Error(ErrorKind::kRange, "anchor index out of range");
  std::vector<std::size_t> same;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (i != anchor && labels[i] == labels[anchor]) same.push_back(i);
  }
  if (same.empty()) {
    throw Error(ErrorKind::kBatchConstruction,
                std::string("no same-label candidate for class ") + class_name(labels[anchor]));
  }
  const std::size_t positive = same[rng.index(same.size())];

  std::vector<std::size_t> others;
  others.reserve(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (i != anchor && i != positive) others.push_back(i);
  }
  if (others.size() < B - 1) {
    throw Error(ErrorKind::kBatchConstruction,
                "need " + std::to_string(B - 1) + " other samples but the pool has " +
                    std::to_string(others.size()));
  }
  ContrastDraw draw;
  draw.members.reserve(B);
  for (std::size_t k : rng.sample_without_replacement(others.size(), B - 1)) {
    draw.members.push_back(others[k]);
  }
  draw.positive_index = rng.index(B);
  draw.members.insert(draw.members.begin() + static_cast<std::ptrdiff_t>(draw.positive_index), positive);
  return draw;
}

ContrastBatch build_contrast_batch(const std::string& anchor_id, const ProjectionTable& table,
                                   const MrlConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (table.labels.size() != table.ids.size() || table.vectors.size() != table.ids.size()) {
    throw Error(ErrorKind::kBatchConstruction, "projection table columns differ in length");
  }
  const auto it = std::find(table.ids.begin(), table.ids.end(), anchor_id);
  if (it == table.ids.end()) throw Error(ErrorKind::kAlignment, "unknown anchor '" + anchor_id + "'");
  const auto anchor = static_cast<std::size_t>(it - table.ids.begin());

  Rng rng(seed);
  const auto draw = draw_contrast_members(anchor, table.labels, cfg.batch_B, rng);
  ContrastBatch batch;
  batch.query = table.vectors[anchor];
  batch.query_label = table.labels[anchor];
  batch.positive_index = draw.positive_index;
  for (std::size_t idx : draw.members) {
    batch.members.push_back(table.vectors[idx]);
    batch.pseudo_labels.push_back(table.labels[idx]);
    batch.member_ids.push_back(table.ids[idx]);
  }
  return batch;
}

std::string to_string(Reduction r) { return r == Reduction::kMean ? "mean" : "sum"; }

Reduction reduction_from_string(const std::string& text) {
  if (text == "sum") return Reduction::kSum;
  if (text == "mean") return Reduction::kMean;
  throw Error(ErrorKind::kConfiguration, "unknown reduction '" + text + "'");
}

std::string to_string(AnchorMode m) { return m == AnchorMode::kAverage ? "average" : "single"; }

AnchorMode anchor_mode_from_string(const std::string& text) {
  if (text == "single") return AnchorMode::kSingle;
  if (text == "average") return AnchorMode::kAverage;
  throw Error(ErrorKind::kConfiguration, "unknown anchor mode '" + text + "'");
}

}  // namespace pilot::mrl
