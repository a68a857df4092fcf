#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pilot/random.hpp"

namespace pilot::mrl {

enum class Reduction { kSum, kMean };

// How the weakly-supervised term treats several same-label members.
enum class AnchorMode {
  kSingle,   // only the designated positive member
  kAverage,  // mean of the per-anchor losses over every same-label member
};

struct MrlConfig {
  double alpha = 0.5;
  double tau = 0.07;
  std::size_t batch_B = 16;
  Reduction reduction = Reduction::kSum;
  AnchorMode anchor_mode = AnchorMode::kSingle;

  void validate() const;
  bool operator==(const MrlConfig&) const = default;
};

/// Query plus B member vectors, one of which (positive_index, 0-based) is the
/// designated positive. Labels are the members' pseudo-labels.
struct ContrastBatch {
  std::vector<double> query;
  int query_label = 0;
  std::vector<std::vector<double>> members;
  std::vector<int> pseudo_labels;
  std::vector<std::string> member_ids;
  std::size_t positive_index = 0;

  void validate() const;
};

struct CeTerm {
  int label = 0;                   // 0 or 1
  std::array<double, 2> proba{};   // (p_neg, p_pos)
  double weight = 1.0;
};

double loss_ce(std::span<const CeTerm> terms, Reduction reduction = Reduction::kSum);

// -log softmax over q.x_k / tau at the positive member; max-shifted.
double loss_self(const ContrastBatch& batch, double tau);

// Same form with the anchor x_i and a same-pseudo-label member as the target.
double loss_weak(const ContrastBatch& batch, double tau, AnchorMode mode = AnchorMode::kSingle);

double loss_metric(double self_loss, double weak_loss, double ce_loss, const MrlConfig& cfg);

struct InfoNce {
  double loss = 0.0;
  std::vector<double> dsim;  // d loss / d similarity_k
};

/// Temperature-scaled cross-entropy over raw similarities, with its gradient.
/// `targets` holds one or more positive positions; the loss is averaged over them.
InfoNce info_nce(std::span<const double> similarities, std::span<const std::size_t> targets,
                 double tau);

/// Pool of projected samples with their (pseudo-)labels.
struct ProjectionTable {
  std::vector<std::string> ids;
  std::vector<int> labels;
  std::vector<std::vector<double>> vectors;
};

struct ContrastDraw {
  std::vector<std::size_t> members;  // pool indices, size B
  std::size_t positive_index = 0;    // position of the same-label draw in members
};

/// One uniformly chosen same-label sample (never the anchor) and B-1 uniformly
/// chosen others from the rest of the pool, placed at seeded positions.
ContrastDraw draw_contrast_members(std::size_t anchor, std::span<const int> labels, std::size_t B,
                                   Rng& rng);

ContrastBatch build_contrast_batch(const std::string& anchor_id, const ProjectionTable& table,
                                   const MrlConfig& cfg, std::uint64_t seed);

std::string to_string(Reduction r);
Reduction reduction_from_string(const std::string& text);
std::string to_string(AnchorMode m);
AnchorMode anchor_mode_from_string(const std::string& text);

}  // namespace pilot::mrl
