#include "pilot/synthetic.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <string_view>

#include "pilot/random.hpp"

namespace pilot::synthetic {
namespace {

constexpr std::array<std::string_view, 14> kRiskyCalls = {
    "strcpy", "strcat", "sprintf", "gets",   "memcpy",  "alloca",  "vsprintf",
    "atoi",   "sscanf", "memmove", "strtok", "realloc", "system",  "read"};
constexpr std::array<std::string_view, 14> kGuardedCalls = {
    "strncpy",      "strlcpy",      "snprintf",   "fgets",       "memcpy_s",
    "check_bounds", "assert",       "min_size",   "validate_len", "safe_add",
    "checked_read", "av_clip",      "ff_dlog",    "g_free"};
constexpr std::array<std::string_view, 10> kRiskyNames = {
    "tmp", "raw", "user_len", "src", "offset", "count", "idx", "input", "hdr", "nbytes"};
constexpr std::array<std::string_view, 10> kGuardedNames = {
    "limit", "checked", "max_len", "avail", "bound", "remaining", "cap", "safe_len", "clamp", "alloc_size"};
constexpr std::array<std::string_view, 16> kCommon = {
    "ctx", "buf", "len", "size", "ptr", "data", "pkt", "frame",
    "s",   "n",   "i",   "ret",  "opaque", "st", "avctx", "dev"};
constexpr std::array<std::string_view, 6> kTypes = {"int", "size_t", "char *", "uint8_t *",
                                                    "unsigned", "void *"};

template <std::size_t N>
std::string_view pick(const std::array<std::string_view, N>& pool, Rng& rng) {
  return pool[rng.index(N)];
}

std::string statement(bool vulnerable, double cross_rate, Rng& rng) {
  // Each call site follows one class; identifiers lean toward that class too.
  const bool risky = vulnerable != rng.bernoulli(cross_rate);
  const auto call = std::string(risky ? pick(kRiskyCalls, rng) : pick(kGuardedCalls, rng));
  auto name = [&]() {
    if (rng.bernoulli(0.25)) return std::string(pick(kCommon, rng));
    return std::string(risky ? pick(kRiskyNames, rng) : pick(kGuardedNames, rng));
  };
  switch (rng.index(4)) {
    case 0:
      return std::string(pick(kTypes, rng)) + " " + name() + " = " + call + "(" + name() + ", " + name() + ");";
    case 1:
      return "if (" + name() + " < " + name() + ") " + call + "(" + name() + ");";
    case 2:
      return name() + "->" + name() + " = " + call + "(" + name() + " + " + std::to_string(rng.index(64)) + ");";
    default:
      return "for (i = 0; i < " + name() + "; i++) " + call + "(" + name() + "[i]);";
  }
}

}  // namespace

ClusterData gaussian_clusters(const ClusterSpec& spec) {
  Rng rng(spec.seed);
  const double offset = spec.separation * spec.sigma / (2.0 * std::sqrt(static_cast<double>(spec.dim)));
  const std::size_t n = spec.n_positive + spec.n_negative;
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order);  // interleave classes so ids carry no label signal

  ClusterData data;
  std::vector<std::string> ids(n);
  std::vector<float> values(n * spec.dim);
  char name[64];
  for (std::size_t slot = 0; slot < n; ++slot) {
    const bool positive = order[slot] < spec.n_positive;
    std::snprintf(name, sizeof(name), "%s%05zu", spec.id_prefix.c_str(), slot);
    ids[slot] = name;
    const double mean = positive ? offset : -offset;
    for (std::size_t m = 0; m < spec.dim; ++m) {
      values[slot * spec.dim + m] = static_cast<float>(rng.normal(mean, spec.sigma));
    }
    data.truth[ids[slot]] = positive ? 1 : 0;
    (positive ? data.positive_ids : data.negative_ids).push_back(ids[slot]);
  }
  data.embeddings = embed::EmbeddingMatrix(std::move(ids), spec.dim, std::move(values));
  return data;
}

std::vector<corpus::CodeSample> code_corpus(const CodeCorpusSpec& spec) {
  Rng rng(spec.seed);
  std::vector<corpus::CodeSample> out;
  out.reserve(spec.n_samples);
  const auto n_pos = static_cast<std::size_t>(
      std::llround(spec.positive_fraction * static_cast<double>(spec.n_samples)));
  std::vector<int> labels(spec.n_samples, 0);
  for (std::size_t i = 0; i < n_pos && i < labels.size(); ++i) labels[i] = 1;
  rng.shuffle(labels);

  char name[32];
  for (std::size_t i = 0; i < spec.n_samples; ++i) {
    const bool vulnerable = labels[i] == 1;
    std::snprintf(name, sizeof(name), "fn%05zu", i);
    const std::size_t statements =
        spec.min_statements + rng.index(spec.max_statements - spec.min_statements + 1);
    std::string code = "static int " + std::string(name) + "(" + std::string(pick(kTypes, rng)) + " " +
                       std::string(pick(kCommon, rng)) + ", int " + std::string(pick(kCommon, rng)) +
                       ") {\n";
    for (std::size_t k = 0; k < statements; ++k) {
      code += "  " + statement(vulnerable, spec.cross_rate, rng) + "\n";
    }
    code += "  return ret;\n}\n";
    corpus::CodeSample sample;
    sample.id = name;
    sample.code = std::move(code);
    sample.truth = labels[i];
    out.push_back(std::move(sample));
  }
  return out;
}

}  // namespace pilot::synthetic
