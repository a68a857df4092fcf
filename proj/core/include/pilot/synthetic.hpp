#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pilot/corpus.hpp"
#include "pilot/embed.hpp"

namespace pilot::synthetic {

// Two isotropic Gaussian clusters whose means are `separation` standard
// deviations apart (Euclidean), split evenly across all dimensions.
struct ClusterSpec {
  std::size_t n_positive = 100;
  std::size_t n_negative = 100;
  std::size_t dim = 8;
  double separation = 10.0;
  double sigma = 1.0;
  std::uint64_t seed = 0;
  std::string id_prefix = "s";
};

struct ClusterData {
  embed::EmbeddingMatrix embeddings;
  std::map<std::string, int> truth;
  std::vector<std::string> positive_ids;
  std::vector<std::string> negative_ids;
};

ClusterData gaussian_clusters(const ClusterSpec& spec);

/// C-like functions built from class-specific API vocabularies. Each call
/// site draws from its own class with probability 1 - cross_rate and from the
/// other class otherwise, so `cross_rate` controls class overlap.
struct CodeCorpusSpec {
  std::size_t n_samples = 1000;
  double positive_fraction = 0.3;
  double cross_rate = 0.2;
  std::size_t min_statements = 10;
  std::size_t max_statements = 20;
  std::uint64_t seed = 0;
};

std::vector<corpus::CodeSample> code_corpus(const CodeCorpusSpec& spec);

}  // namespace pilot::synthetic
