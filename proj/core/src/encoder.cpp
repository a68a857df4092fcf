#include "pilot/encoder.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <unordered_map>

#include "pilot/error.hpp"
#include "pilot/random.hpp"

namespace pilot::encoder {
namespace {

constexpr std::array<char, 4> kCheckpointMagic = {'P', 'U', 'V', 'M'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void put_le(std::ostream& out, T value) {
  std::array<char, sizeof(T)> buf{};
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    buf[i] = static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xFF);
  }
  out.write(buf.data(), buf.size());
}

template <typename T>
T get_le(std::istream& in) {
  std::array<unsigned char, sizeof(T)> buf{};
  if (!in.read(reinterpret_cast<char*>(buf.data()), buf.size())) {
    throw Error(ErrorKind::kCorruption, "truncated checkpoint");
  }
  std::uint64_t value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return static_cast<T>(value);
}

template <typename T>
Activations forward_impl(const EncoderModel& model, std::span<const T> x, bool with_projection) {
  const auto& s = model.shape();
  if (x.size() != s.input_dim) {
    throw Error(ErrorKind::kDimension, "input has length " + std::to_string(x.size()) +
                                           ", model expects " + std::to_string(s.input_dim));
  }
  const auto& L = model.layout();
  const auto p = model.parameters();
  Activations a;
  a.hidden.resize(s.hidden);
  for (std::size_t j = 0; j < s.hidden; ++j) {
    const double* w = p.data() + L.w1 + j * s.input_dim;
    double acc = p[L.b1 + j];
    for (std::size_t m = 0; m < s.input_dim; ++m) acc += w[m] * static_cast<double>(x[m]);
    a.hidden[j] = std::tanh(acc);
  }
  for (std::size_t c = 0; c < kClasses; ++c) {
    const double* w = p.data() + L.w2 + c * s.hidden;
    double acc = p[L.b2 + c];
    for (std::size_t j = 0; j < s.hidden; ++j) acc += w[j] * a.hidden[j];
    a.logits[c] = acc;
  }
  if (with_projection) {
    a.proj.resize(s.proj_dim);
    a.unit_proj.resize(s.proj_dim);
    double sq = 0.0;
    for (std::size_t r = 0; r < s.proj_dim; ++r) {
      const double* w = p.data() + L.wp + r * s.hidden;
      double acc = p[L.bp + r];
      for (std::size_t j = 0; j < s.hidden; ++j) acc += w[j] * a.hidden[j];
      a.proj[r] = acc;
      sq += acc * acc;
    }
    a.proj_norm = std::sqrt(sq + kProjectionEpsilon);
    for (std::size_t r = 0; r < s.proj_dim; ++r) a.unit_proj[r] = a.proj[r] / a.proj_norm;
  }
  return a;
}

std::array<double, kClasses> softmax(const std::array<double, kClasses>& logits) {
  const double peak = std::max(logits[0], logits[1]);
  const double e0 = std::exp(logits[0] - peak);
  const double e1 = std::exp(logits[1] - peak);
  const double z = e0 + e1;
  return {e0 / z, e1 / z};
}

// Per-row accumulators for the backward pass.
struct Slot {
  std::size_t row = 0;
  Activations act;
  std::array<double, kClasses> dlogits{};
  std::vector<double> dunit;
  bool touched = false;
};

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

ParameterLayout ParameterLayout::of(const EncoderShape& s) {
  ParameterLayout L{};
  L.w1 = 0;
  L.b1 = L.w1 + s.hidden * s.input_dim;
  L.w2 = L.b1 + s.hidden;
  L.b2 = L.w2 + kClasses * s.hidden;
  L.wp = L.b2 + kClasses;
  L.bp = L.wp + s.proj_dim * s.hidden;
  L.total = L.bp + s.proj_dim;
  return L;
}

EncoderModel::EncoderModel(EncoderShape shape)
    : shape_(shape), layout_(ParameterLayout::of(shape)), params_(layout_.total, 0.0) {
  if (shape.input_dim == 0 || shape.hidden == 0 || shape.proj_dim == 0) {
    throw Error(ErrorKind::kConfiguration, "encoder layer sizes must be positive");
  }
}

EncoderModel::EncoderModel(EncoderShape shape, std::vector<double> parameters) : EncoderModel(shape) {
  if (parameters.size() != layout_.total) {
    throw Error(ErrorKind::kDimension, "expected " + std::to_string(layout_.total) +
                                           " parameters, got " + std::to_string(parameters.size()));
  }
  params_ = std::move(parameters);
}

EncoderModel EncoderModel::initialize(EncoderShape shape, std::uint64_t seed) {
  EncoderModel model(shape);
  Rng rng(seed);
  const auto& L = model.layout_;
  auto fill = [&](std::size_t begin, std::size_t end, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t i = begin; i < end; ++i) model.params_[i] = rng.uniform(-bound, bound);
  };
  fill(L.w1, L.w2, shape.input_dim);  // w1 and b1
  fill(L.w2, L.wp, shape.hidden);     // w2 and b2
  fill(L.wp, L.total, shape.hidden);  // wp and bp
  return model;
}

Activations EncoderModel::forward(std::span<const double> x, bool with_projection) const {
  return forward_impl(*this, x, with_projection);
}

std::array<double, kClasses> predict_proba(const EncoderModel& model, std::span<const double> x) {
  return softmax(forward_impl(model, x, false).logits);
}

std::array<double, kClasses> predict_proba(const EncoderModel& model, std::span<const float> x) {
  return softmax(forward_impl(model, x, false).logits);
}

std::vector<double> project(const EncoderModel& model, std::span<const double> x) {
  return forward_impl(model, x, true).unit_proj;
}

void save_checkpoint(const std::filesystem::path& path, const EncoderModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot write checkpoint " + path.string());
  out.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  put_le<std::uint32_t>(out, kCheckpointVersion);
  const auto& s = model.shape();
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.input_dim));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.hidden));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(kClasses));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.proj_dim));
  for (double v : model.parameters()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  if (!out) throw Error(ErrorKind::kIo, "write failed for " + path.string());
}

EncoderModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open checkpoint " + path.string());
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (magic != kCheckpointMagic) throw Error(ErrorKind::kCorruption, path.string() + " is not a checkpoint");
  if (get_le<std::uint32_t>(in) != kCheckpointVersion) {
    throw Error(ErrorKind::kCorruption, "unsupported checkpoint version in " + path.string());
  }
  EncoderShape shape;
  shape.input_dim = get_le<std::uint32_t>(in);
  shape.hidden = get_le<std::uint32_t>(in);
  if (get_le<std::uint32_t>(in) != kClasses) {
    throw Error(ErrorKind::kCorruption, "checkpoint output size is not 2");
  }
  shape.proj_dim = get_le<std::uint32_t>(in);
  const auto layout = ParameterLayout::of(shape);
  std::vector<double> params(layout.total);
  for (auto& v : params) v = std::bit_cast<double>(get_le<std::uint64_t>(in));
  if (in.peek() != std::char_traits<char>::eof()) {
    throw Error(ErrorKind::kCorruption, "trailing bytes in checkpoint " + path.string());
  }
  return EncoderModel(shape, std::move(params));
}

void TrainingSet::add(const std::string& id, std::span<const float> x, int label, double weight) {
  if (dim == 0) dim = x.size();
  if (x.size() != dim) throw Error(ErrorKind::kDimension, "training row for '" + id + "' has wrong length");
  ids.push_back(id);
  for (float v : x) features.push_back(static_cast<double>(v));
  labels.push_back(label);
  weights.push_back(weight);
}

void TrainingSet::add(const std::string& id, std::span<const double> x, int label, double weight) {
  if (dim == 0) dim = x.size();
  if (x.size() != dim) throw Error(ErrorKind::kDimension, "training row for '" + id + "' has wrong length");
  ids.push_back(id);
  features.insert(features.end(), x.begin(), x.end());
  labels.push_back(label);
  weights.push_back(weight);
}

LossAndGrad loss_and_grad(const EncoderModel& model, const TrainingSet& data, const Minibatch& batch,
                          const LossOptions& options) {
  const auto& s = model.shape();
  const auto& L = model.layout();
  if (batch.rows.empty() && batch.contrasts.empty()) {
    throw Error(ErrorKind::kPrecondition, "empty batch");
  }
  if (data.dim != s.input_dim) throw Error(ErrorKind::kDimension, "training set dim differs from model");

  const bool use_ce = options.objective == Objective::kCrossEntropy || options.objective == Objective::kMetric;
  const bool use_self =
      options.objective == Objective::kSelfContrastive || options.objective == Objective::kMetric;
  const bool use_weak =
      options.objective == Objective::kWeakContrastive || options.objective == Objective::kMetric;
  const bool use_contrast = use_self || use_weak;
  double self_coef = 1.0;
  double weak_coef = 1.0;
  if (options.objective == Objective::kMetric) {
    self_coef = options.mrl.alpha;
    weak_coef = 1.0 - options.mrl.alpha;
  }
  const bool mean = options.mrl.reduction == mrl::Reduction::kMean;
  const double ce_scale = mean && !batch.rows.empty() ? 1.0 / static_cast<double>(batch.rows.size()) : 1.0;
  const double con_scale =
      mean && !batch.contrasts.empty() ? 1.0 / static_cast<double>(batch.contrasts.size()) : 1.0;

  // One forward pass per distinct row.
  std::vector<Slot> slots;
  std::unordered_map<std::size_t, std::size_t> slot_of;
  auto slot_for = [&](std::size_t row) -> Slot& {
    if (row >= data.size()) throw Error(ErrorKind::kRange, "batch row out of range");
    auto [it, inserted] = slot_of.emplace(row, slots.size());
    if (inserted) {
      Slot slot;
      slot.row = row;
      slot.act = model.forward(data.row(row), use_contrast);
      slot.dunit.assign(use_contrast ? s.proj_dim : 0, 0.0);
      slots.push_back(std::move(slot));
    }
    return slots[it->second];
  };
  if (use_ce) {
    for (std::size_t r : batch.rows) slot_for(r);
  }
  if (use_contrast) {
    for (const auto& g : batch.contrasts) {
      slot_for(g.anchor);
      for (std::size_t m : g.members) slot_for(m);
    }
  }

  LossAndGrad out;
  out.gradient.assign(L.total, 0.0);

  if (use_ce) {
    for (std::size_t r : batch.rows) {
      Slot& slot = slots[slot_of.at(r)];
      const double w = data.weights[r];
      const int y = data.labels[r];
      const auto& z = slot.act.logits;
      const double peak = std::max(z[0], z[1]);
      const double lse = peak + std::log(std::exp(z[0] - peak) + std::exp(z[1] - peak));
      const double term = w * (lse - z[static_cast<std::size_t>(y)]);
      if (!std::isfinite(term)) {
        throw Error(ErrorKind::kNumeric, "non-finite loss at sample '" + data.ids[r] + "'");
      }
      out.loss += ce_scale * term;
      if (w == 0.0) continue;
      const auto p = softmax(z);
      for (std::size_t c = 0; c < kClasses; ++c) {
        slot.dlogits[c] += ce_scale * w * (p[c] - (static_cast<int>(c) == y ? 1.0 : 0.0));
      }
      slot.touched = true;
    }
  }

  if (use_contrast) {
    const double tau = options.mrl.tau;
    std::vector<double> sims;
    for (const auto& g : batch.contrasts) {
      if (g.positive_index >= g.members.size()) {
        throw Error(ErrorKind::kBatchConstruction, "positive_index out of range");
      }
      Slot& anchor = slots[slot_of.at(g.anchor)];
      auto accumulate = [&](const std::vector<std::size_t>& rows,
                            std::span<const std::size_t> targets, double coef) {
        sims.assign(rows.size(), 0.0);
        for (std::size_t k = 0; k < rows.size(); ++k) {
          sims[k] = dot(anchor.act.unit_proj, slots[slot_of.at(rows[k])].act.unit_proj);
        }
        const auto nce = mrl::info_nce(sims, targets, tau);
        if (!std::isfinite(nce.loss)) {
          throw Error(ErrorKind::kNumeric, "non-finite contrastive loss at sample '" + data.ids[g.anchor] + "'");
        }
        out.loss += con_scale * coef * nce.loss;
        for (std::size_t k = 0; k < rows.size(); ++k) {
          const double d = con_scale * coef * nce.dsim[k];
          if (d == 0.0) continue;
          Slot& member = slots[slot_of.at(rows[k])];
          for (std::size_t r = 0; r < s.proj_dim; ++r) {
            anchor.dunit[r] += d * member.act.unit_proj[r];
          }
          // For the self term member may be the anchor itself; both paths accumulate.
          for (std::size_t r = 0; r < s.proj_dim; ++r) {
            member.dunit[r] += d * anchor.act.unit_proj[r];
          }
          member.touched = true;
        }
        anchor.touched = true;
      };

      if (use_self && self_coef != 0.0) {
        auto members = g.members;
        members[g.positive_index] = g.anchor;
        const std::size_t target = g.positive_index;
        accumulate(members, std::span<const std::size_t>(&target, 1), self_coef);
      }
      if (use_weak && weak_coef != 0.0) {
        std::vector<std::size_t> targets;
        const int anchor_label = data.labels[g.anchor];
        if (options.mrl.anchor_mode == mrl::AnchorMode::kAverage) {
          for (std::size_t k = 0; k < g.members.size(); ++k) {
            if (data.labels[g.members[k]] == anchor_label) targets.push_back(k);
          }
        } else if (data.labels[g.members[g.positive_index]] == anchor_label) {
          targets.push_back(g.positive_index);
        }
        if (targets.empty()) {
          throw Error(ErrorKind::kBatchConstruction,
                      "no same-label member for anchor '" + data.ids[g.anchor] + "'");
        }
        accumulate(g.members, targets, weak_coef);
      }
    }
  }

  // Backward through each touched row.
  auto& grad = out.gradient;
  const auto p = model.parameters();
  std::vector<double> dh(s.hidden);
  std::vector<double> dz(s.proj_dim);
  for (const Slot& slot : slots) {
    if (!slot.touched) continue;
    const auto& a = slot.act;
    std::fill(dh.begin(), dh.end(), 0.0);
    for (std::size_t c = 0; c < kClasses; ++c) {
      const double d = slot.dlogits[c];
      if (d == 0.0) continue;
      grad[L.b2 + c] += d;
      for (std::size_t j = 0; j < s.hidden; ++j) {
        grad[L.w2 + c * s.hidden + j] += d * a.hidden[j];
        dh[j] += d * p[L.w2 + c * s.hidden + j];
      }
    }
    if (use_contrast) {
      // u = z / n, n = sqrt(|z|^2 + eps): dz = du / n - z (z . du) / n^3
      const double n = a.proj_norm;
      const double zdu = dot(a.proj, slot.dunit);
      for (std::size_t r = 0; r < s.proj_dim; ++r) {
        dz[r] = slot.dunit[r] / n - a.proj[r] * zdu / (n * n * n);
      }
      for (std::size_t r = 0; r < s.proj_dim; ++r) {
        const double d = dz[r];
        if (d == 0.0) continue;
        grad[L.bp + r] += d;
        for (std::size_t j = 0; j < s.hidden; ++j) {
          grad[L.wp + r * s.hidden + j] += d * a.hidden[j];
          dh[j] += d * p[L.wp + r * s.hidden + j];
        }
      }
    }
    const auto x = data.row(slot.row);
    for (std::size_t j = 0; j < s.hidden; ++j) {
      const double dpre = dh[j] * (1.0 - a.hidden[j] * a.hidden[j]);
      if (dpre == 0.0) continue;
      grad[L.b1 + j] += dpre;
      double* gw = grad.data() + L.w1 + j * s.input_dim;
      for (std::size_t m = 0; m < s.input_dim; ++m) gw[m] += dpre * x[m];
    }
  }
  return out;
}

std::vector<double> grad(const EncoderModel& model, const TrainingSet& data, const Minibatch& batch,
                         const LossOptions& options) {
  return loss_and_grad(model, data, batch, options).gradient;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw Error(ErrorKind::kConfiguration, "learning_rate must be positive");
  if (batch_size < 1) throw Error(ErrorKind::kConfiguration, "batch_size must be at least 1");
}

bool EpochRecord::operator==(const EpochRecord& o) const {
  const bool both_nan = std::isnan(valid_accuracy) && std::isnan(o.valid_accuracy);
  return epoch == o.epoch && loss == o.loss && (both_nan || valid_accuracy == o.valid_accuracy);
}

double accuracy(const EncoderModel& model, const TrainingSet& data) {
  if (data.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto p = predict_proba(model, data.row(i));
    const int predicted = p[1] > 0.5 ? 1 : 0;
    if (predicted == data.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

TrainResult train(const EncoderModel& initial, const TrainingSet& data, const TrainConfig& cfg,
                  const TrainingSet& valid, const LossOptions& options) {
  cfg.validate();
  options.mrl.validate();
  if (data.empty()) throw Error(ErrorKind::kPrecondition, "training set is empty");

  TrainResult result{initial, {}, 0};
  if (cfg.max_epochs == 0) return result;

  const bool contrastive = options.objective != Objective::kCrossEntropy;
  // Pool needs B-1 others besides anchor and its positive.
  const std::size_t B = std::min(options.mrl.batch_B, data.size() > 1 ? data.size() - 1 : 1);

  EncoderModel model = initial;
  auto params = model.mutable_parameters();
  std::vector<double> m1(params.size(), 0.0);
  std::vector<double> m2(params.size(), 0.0);
  std::size_t step = 0;

  double best_accuracy = -1.0;
  std::size_t since_best = 0;
  std::vector<std::size_t> order(data.size());

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(mix_seed(cfg.seed, epoch));
    rng.shuffle(order);

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      Minibatch mb;
      mb.rows.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                     order.begin() + static_cast<std::ptrdiff_t>(end));
      if (contrastive && B >= 2) {
        for (std::size_t r : mb.rows) {
          try {
            const auto draw = mrl::draw_contrast_members(r, data.labels, B, rng);
            mb.contrasts.push_back({r, draw.members, draw.positive_index});
          } catch (const Error& e) {
            // Anchors whose class has no partner contribute only their CE term.
            if (e.kind() != ErrorKind::kBatchConstruction) throw;
          }
        }
      }
      if (mb.contrasts.empty() && options.objective != Objective::kCrossEntropy &&
          options.objective != Objective::kMetric) {
        continue;
      }
      LossAndGrad lg;
      try {
        lg = loss_and_grad(model, data, mb, options);
      } catch (const Error& e) {
        if (e.kind() == ErrorKind::kNumeric) {
          throw Error(ErrorKind::kTraining, "diverged in epoch " + std::to_string(epoch) + ": " + e.message());
        }
        throw;
      }
      if (!std::isfinite(lg.loss)) {
        throw Error(ErrorKind::kTraining, "loss became non-finite in epoch " + std::to_string(epoch));
      }
      epoch_loss += lg.loss;

      ++step;
      if (cfg.optimizer == Optimizer::kSgd) {
        for (std::size_t i = 0; i < params.size(); ++i) params[i] -= cfg.learning_rate * lg.gradient[i];
      } else {
        const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
        const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
        for (std::size_t i = 0; i < params.size(); ++i) {
          const double g = lg.gradient[i];
          m1[i] = cfg.beta1 * m1[i] + (1.0 - cfg.beta1) * g;
          m2[i] = cfg.beta2 * m2[i] + (1.0 - cfg.beta2) * g * g;
          params[i] -= cfg.learning_rate * (m1[i] / c1) / (std::sqrt(m2[i] / c2) + cfg.epsilon);
        }
      }
    }
    for (double v : params) {
      if (!std::isfinite(v)) {
        throw Error(ErrorKind::kTraining, "parameters became non-finite in epoch " + std::to_string(epoch));
      }
    }

    const double acc = accuracy(model, valid);
    result.history.push_back({epoch, epoch_loss, acc});
    if (valid.empty()) {
      result.model = model;
      result.best_epoch = epoch;
      continue;
    }
    if (acc > best_accuracy) {
      best_accuracy = acc;
      result.model = model;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  return result;
}

std::string to_string(Optimizer o) { return o == Optimizer::kSgd ? "sgd" : "adam"; }

Optimizer optimizer_from_string(const std::string& text) {
  if (text == "sgd") return Optimizer::kSgd;
  if (text == "adam") return Optimizer::kAdam;
  throw Error(ErrorKind::kConfiguration, "unknown optimizer '" + text + "'");
}

}  // namespace pilot::encoder
