#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pilot/embed.hpp"
#include "pilot/eval.hpp"

namespace pilot::cli {

enum class EmbeddingSource { kHash, kFile };

struct SweepGrid {
  std::vector<double> ratios = {0.1, 0.3, 0.5, 0.7, 1.0};
  std::vector<double> k_values = {0.3};
  std::vector<double> t_ratios = {0.3};

  bool operator==(const SweepGrid&) const = default;
};

/// Everything a run needs. Paths are relative to the working directory.
struct RunConfig {
  std::string dataset = "corpus.jsonl";
  EmbeddingSource embedding_source = EmbeddingSource::kHash;
  std::string embedding_path;  // used when the source is a file
  embed::EmbedderConfig embedder;
  eval::ExperimentConfig experiment;
  std::string output = "run";
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  SweepGrid sweep;

  void validate() const;
  bool operator==(const RunConfig&) const = default;
};

/// Parses YAML text. Absent keys keep their defaults; unknown keys and invalid
/// values raise a configuration error naming the key.
RunConfig parse_config_text(const std::string& text, const std::vector<std::string>& overrides = {});
RunConfig parse_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

/// `overrides` are `dotted.key=value` assignments applied on top of the file.
std::string serialize_config(const RunConfig& cfg);

std::string to_string(EmbeddingSource source);
EmbeddingSource embedding_source_from_string(const std::string& text);

}  // namespace pilot::cli
