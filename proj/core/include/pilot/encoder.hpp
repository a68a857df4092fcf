#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pilot/embed.hpp"
#include "pilot/mrl.hpp"

namespace pilot::encoder {

struct EncoderShape {
  std::size_t input_dim = 0;
  std::size_t hidden = 256;
  std::size_t proj_dim = 64;

  bool operator==(const EncoderShape&) const = default;
};

inline constexpr std::size_t kClasses = 2;

/// Offsets of each parameter block inside the flat vector. Weight matrices are
/// row-major with one row per output unit:
///   w1 [hidden x input_dim], b1 [hidden], w2 [2 x hidden], b2 [2],
///   wp [proj_dim x hidden], bp [proj_dim]
struct ParameterLayout {
  std::size_t w1, b1, w2, b2, wp, bp, total;

  static ParameterLayout of(const EncoderShape& shape);
};

/// Cached activations of one forward pass.
struct Activations {
  std::vector<double> hidden;
  std::array<double, kClasses> logits{};
  std::vector<double> proj;       // pre-normalization projection z
  std::vector<double> unit_proj;  // z / sqrt(|z|^2 + eps)
  double proj_norm = 0.0;
};

/// (input_dim -> hidden, tanh) feeding a 2-way softmax head and a linear
/// projection head whose L2-normalized output is the contrastive space.
class EncoderModel {
 public:
  EncoderModel() = default;
  // All parameters zero.
  explicit EncoderModel(EncoderShape shape);
  EncoderModel(EncoderShape shape, std::vector<double> parameters);

  // Weights and biases uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
  static EncoderModel initialize(EncoderShape shape, std::uint64_t seed);

  const EncoderShape& shape() const { return shape_; }
  const ParameterLayout& layout() const { return layout_; }
  std::span<const double> parameters() const { return params_; }
  std::span<double> mutable_parameters() { return params_; }

  Activations forward(std::span<const double> x, bool with_projection = true) const;

  bool operator==(const EncoderModel& other) const {
    return shape_ == other.shape_ && params_ == other.params_;
  }

 private:
  EncoderShape shape_;
  ParameterLayout layout_{};
  std::vector<double> params_;
};

inline constexpr double kProjectionEpsilon = 1e-12;

std::array<double, kClasses> predict_proba(const EncoderModel& model, std::span<const double> x);
std::array<double, kClasses> predict_proba(const EncoderModel& model, std::span<const float> x);
std::vector<double> project(const EncoderModel& model, std::span<const double> x);

void save_checkpoint(const std::filesystem::path& path, const EncoderModel& model);
EncoderModel load_checkpoint(const std::filesystem::path& path);

/// Row-major training examples with class labels and per-sample weights.
struct TrainingSet {
  std::size_t dim = 0;
  std::vector<std::string> ids;
  std::vector<double> features;
  std::vector<int> labels;
  std::vector<double> weights;

  std::size_t size() const { return ids.size(); }
  bool empty() const { return ids.empty(); }
  std::span<const double> row(std::size_t i) const { return {features.data() + i * dim, dim}; }
  void add(const std::string& id, std::span<const float> x, int label, double weight = 1.0);
  void add(const std::string& id, std::span<const double> x, int label, double weight = 1.0);
};

enum class Objective {
  kCrossEntropy,      // weighted CE
  kSelfContrastive,   // anchor vs itself among B-1 others
  kWeakContrastive,   // anchor vs a same-pseudo-label member
  kMetric,            // alpha * self + (1 - alpha) * weak + CE
};

/// Contrastive group over TrainingSet rows. For the self term the member at
/// positive_index is replaced by the anchor itself.
struct ContrastGroup {
  std::size_t anchor = 0;
  std::vector<std::size_t> members;
  std::size_t positive_index = 0;
};

struct Minibatch {
  std::vector<std::size_t> rows;        // CE terms
  std::vector<ContrastGroup> contrasts;  // contrastive terms
};

struct LossOptions {
  Objective objective = Objective::kCrossEntropy;
  mrl::MrlConfig mrl;
};

struct LossAndGrad {
  double loss = 0.0;
  std::vector<double> gradient;
};

// Exact gradient of the selected objective, same layout as the parameters.
LossAndGrad loss_and_grad(const EncoderModel& model, const TrainingSet& data, const Minibatch& batch,
                          const LossOptions& options);

std::vector<double> grad(const EncoderModel& model, const TrainingSet& data, const Minibatch& batch,
                         const LossOptions& options);

enum class Optimizer { kSgd, kAdam };

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 20;
  std::uint64_t seed = 0;
  Optimizer optimizer = Optimizer::kAdam;
  std::size_t patience = 1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;
  double valid_accuracy = 0.0;  // NaN when no validation set
  bool operator==(const EpochRecord& o) const;
};

struct TrainResult {
  EncoderModel model;
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;  // 0 means the initial model was returned
};

double accuracy(const EncoderModel& model, const TrainingSet& data);

/// Minibatch training with a fresh optimizer state. Returns the parameters of
/// the epoch with the best validation accuracy (earliest on ties) and stops
/// after `patience` epochs without improvement. With an empty validation set
/// the last epoch's parameters are returned.
TrainResult train(const EncoderModel& initial, const TrainingSet& data, const TrainConfig& cfg,
                  const TrainingSet& valid, const LossOptions& options = {});

std::string to_string(Optimizer o);
Optimizer optimizer_from_string(const std::string& text);

}  // namespace pilot::encoder
