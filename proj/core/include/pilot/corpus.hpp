#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace pilot::corpus {

/// One source function. `truth` stays hidden from training and is only read by
/// evaluation; `selected` is the PU flag (1 = revealed as vulnerable).
struct CodeSample {
  std::string id;
  std::string code;
  std::optional<int> truth;
  int selected = 0;
  // Fields other than id/code/truth/selected, kept verbatim for round-trips.
  nlohmann::json extra = nlohmann::json::object();

  bool operator==(const CodeSample&) const = default;
};

struct DatasetSplit {
  std::vector<std::string> train;
  std::vector<std::string> valid;
  std::vector<std::string> test;
  std::uint64_t seed = 0;

  bool operator==(const DatasetSplit&) const = default;
};

enum class ScarMode {
  kExactCount,  // round(c * n_pos) positives drawn without replacement
  kBernoulli,   // each positive independently with probability c
};

struct ScarConfig {
  double label_frequency_c = 0.3;
  std::uint64_t seed = 0;
  ScarMode mode = ScarMode::kExactCount;

  void validate() const;
  bool operator==(const ScarConfig&) const = default;
};

struct ScarResult {
  std::vector<CodeSample> samples;
  std::size_t labeled_count = 0;
};

/// Mixture statistics of a labeled dataset. class_prior is the fraction of
/// true positives, labeled_fraction the fraction flagged as selected.
struct CorpusStats {
  std::size_t total = 0;
  std::size_t with_truth = 0;
  std::size_t positives = 0;
  std::size_t selected = 0;
  double class_prior = 0.0;
  double labeled_fraction = 0.0;
  double observed_label_frequency = 0.0;  // selected / positives
};

std::vector<CodeSample> load_corpus(const std::filesystem::path& path);
std::vector<CodeSample> parse_corpus(std::istream& in);
void write_corpus(const std::filesystem::path& path, std::span<const CodeSample> samples);
void write_corpus(std::ostream& out, std::span<const CodeSample> samples);

// Throws a validation error on duplicate ids or selected=1 with truth=0.
void validate_samples(std::span<const CodeSample> samples);

/// Seeded shuffle of the sorted id list, then floor(n/10) each to valid and
/// test; the remainder goes to train. Input order does not matter.
DatasetSplit split_dataset(std::span<const CodeSample> samples, std::uint64_t seed);

ScarResult apply_scar(std::span<const CodeSample> samples, const ScarConfig& cfg);

CorpusStats corpus_stats(std::span<const CodeSample> samples);

// Returns the samples whose id appears in `ids`, in the order of `ids`.
std::vector<CodeSample> subset(std::span<const CodeSample> samples, std::span<const std::string> ids);

std::string to_string(ScarMode mode);
ScarMode scar_mode_from_string(const std::string& text);

nlohmann::json to_json(const DatasetSplit& split);
DatasetSplit split_from_json(const nlohmann::json& j);

}  // namespace pilot::corpus
